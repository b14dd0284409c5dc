#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "ccg/conformal.hpp"
#include "ccg/errors.hpp"

using namespace ccg;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ScoredReport report(std::size_t id, double quality) { return {TokenSequence{{100 + id, 200 + id, 300 + id}, true}, quality}; }

CalibrationItem item(const std::vector<double>& qualities, const std::vector<bool>& admissible) {
  CalibrationItem it;
  for (std::size_t k = 0; k < qualities.size(); ++k) it.candidates.push_back(report(k, qualities[k]));
  it.admissible = admissible;
  return it;
}

// Exact P(Binomial(n, a/b) <= N) in integer arithmetic.
double exact_tail(unsigned n, unsigned failures, unsigned a, unsigned b) {
  using u128 = unsigned __int128;
  u128 num = 0, den = 1;
  for (unsigned i = 0; i < n; ++i) den *= b;
  for (unsigned i = 0; i <= failures; ++i) {
    u128 c = 1;
    for (unsigned j = 0; j < i; ++j) c = c * (n - j) / (j + 1);
    for (unsigned j = 0; j < i; ++j) c *= a;
    for (unsigned j = 0; j < n - i; ++j) c *= b - a;
    num += c;
  }
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

CalibrationRecord record_with_p(double p, double size = 1.0, double res = 0.0) {
  CalibrationRecord r;
  r.p_value = p;
  r.estimate.mean_size = size;
  r.estimate.mean_res = res;
  return r;
}

}  // namespace

TEST(Binomial, ExactRationalOracle) {
  const std::pair<unsigned, unsigned> eps[] = {{1, 10}, {3, 10}, {1, 2}};
  for (const auto& [a, b] : eps)
    for (unsigned n = 1; n <= 20; ++n)
      for (unsigned f = 0; f <= n; ++f)
        EXPECT_NEAR(binomial_pvalue(f, n, static_cast<double>(a) / b), exact_tail(n, f, a, b), 1e-12)
            << "n=" << n << " N=" << f << " eps=" << a << "/" << b;
}

TEST(Binomial, SpotValues) {
  EXPECT_NEAR(binomial_pvalue(5, 10, 0.5), 0.623046875, 1e-12);
  EXPECT_NEAR(binomial_pvalue(0, 5, 0.2), 0.32768, 1e-15);
  EXPECT_DOUBLE_EQ(binomial_pvalue(10, 10, 0.3), 1.0);
}

TEST(Binomial, Monotonicity) {
  for (std::size_t f = 1; f <= 30; ++f) EXPECT_GE(binomial_pvalue(f, 30, 0.2), binomial_pvalue(f - 1, 30, 0.2));
  EXPECT_GE(binomial_pvalue(2, 20, 0.3), binomial_pvalue(4, 40, 0.3));
}

TEST(Fwer, BonferroniThreshold) {
  std::vector<CalibrationRecord> recs(200, record_with_p(1.0));
  recs[3].p_value = 4.9e-4;
  recs[7].p_value = 5e-4;
  EXPECT_EQ(fwer_valid_set(recs, 0.1, FwerMethod::Bonferroni), std::vector<std::size_t>{3});
}

TEST(Fwer, FixedSequenceStopsAtFirstFailure) {
  const std::vector<CalibrationRecord> recs{record_with_p(0.001), record_with_p(0.2), record_with_p(0.003)};
  EXPECT_EQ(fwer_valid_set(recs, 0.05, FwerMethod::FixedSequence, {0, 1, 2}), std::vector<std::size_t>{0});
  EXPECT_EQ(fwer_valid_set(recs, 0.05, FwerMethod::FixedSequence, {2, 0, 1}), (std::vector<std::size_t>{0, 2}));
  EXPECT_THROW(fwer_valid_set(recs, 0.05, FwerMethod::FixedSequence), InvalidArgument);
}

TEST(Fwer, AllOnesGiveEmptySet) {
  const std::vector<CalibrationRecord> recs(5, record_with_p(1.0));
  EXPECT_TRUE(fwer_valid_set(recs, 0.1, FwerMethod::Bonferroni).empty());
  EXPECT_TRUE(fwer_valid_set(recs, 0.1, FwerMethod::FixedSequence, {0, 1, 2, 3, 4}).empty());
}

TEST(Fwer, FixedSequenceIsSubsetOfPointwiseValid) {
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<CalibrationRecord> recs;
    for (int i = 0; i < 12; ++i) recs.push_back(record_with_p(uniform_open01(rng) * 0.2));
    std::vector<std::size_t> order(recs.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : fwer_valid_set(recs, 0.1, FwerMethod::FixedSequence, order)) EXPECT_LT(recs[i].p_value, 0.1);
  }
}

TEST(Selection, EmptyAbstainsAndTiesPreferSmallerSets) {
  const std::vector<CalibrationRecord> recs{record_with_p(0, 3.0, 0.5), record_with_p(0, 2.0, 0.5),
                                            record_with_p(0, 2.0, 0.5)};
  EXPECT_TRUE(select_configuration({}, recs).abstained);
  const auto one = select_configuration({0}, recs);
  EXPECT_FALSE(one.abstained);
  EXPECT_EQ(one.chosen, 0u);
  const auto tie = select_configuration({0, 1, 2}, recs, 0.0);
  EXPECT_EQ(tie.chosen, 1u);
}

TEST(CandidateSet, LimitingThresholdsAcceptEverything) {
  FixedCandidateStream s({report(0, -1.0), report(1, -2.0), report(2, -3.0)});
  const auto set = build_candidate_set(s, LambdaConfig{}, 3);
  EXPECT_EQ(set.size(), 3u);
  EXPECT_EQ(set.k_stop, 3u);
  EXPECT_EQ(set.stopped_by, StopReason::KMax);
  EXPECT_EQ(set.trace.front().similarity, -kInf);
}

TEST(CandidateSet, DuplicateIsRejectedBySimilarity) {
  FixedCandidateStream s({report(0, -1.0), report(0, -1.0), report(1, -1.0)});
  LambdaConfig l;
  l.similarity_max = 0.9;
  const auto set = build_candidate_set(s, l, 2);
  EXPECT_EQ(set.size(), 1u);
  EXPECT_DOUBLE_EQ(set.trace[1].similarity, 1.0);
  EXPECT_FALSE(set.trace[1].accepted);
}

TEST(CandidateSet, QualityGateAndConfidenceStop) {
  FixedCandidateStream s({report(0, -3.0), report(1, -0.5), report(2, -0.1)});
  LambdaConfig l;
  l.quality_min = -1.0;
  l.confidence_stop = -0.6;
  const auto set = build_candidate_set(s, l, 3);
  EXPECT_EQ(set.member_k, std::vector<std::size_t>{2});
  EXPECT_EQ(set.k_stop, 2u);
  EXPECT_EQ(set.stopped_by, StopReason::Threshold);
}

TEST(CandidateSet, ShortStreamAbortsWithPartialSet) {
  FixedCandidateStream s({report(0, -1.0)});
  try {
    build_candidate_set(s, LambdaConfig{}, 3);
    FAIL() << "expected GenerationAborted";
  } catch (const GenerationAborted& e) {
    EXPECT_EQ(e.partial().size(), 1u);
  }
}

TEST(KCg, MatchesLimitingThresholds) {
  Rng rng = make_rng(12);
  for (int fixture = 0; fixture < 10; ++fixture) {
    std::vector<ScoredReport> c;
    for (std::size_t i = 0; i < 10; ++i) c.push_back(report(rng() % 4, -uniform_open01(rng)));
    const std::size_t k = 1 + rng() % 10;
    FixedCandidateStream a(c), b(c);
    const auto x = k_cg_baseline(a, k);
    const auto y = build_candidate_set(b, LambdaConfig{}, k);
    EXPECT_EQ(x.member_k, y.member_k);
    EXPECT_EQ(x.k_stop, k);
    EXPECT_EQ(y.k_stop, k);
  }
}

TEST(Outcome, LossSizeAndRes) {
  const auto it = item({-1.0, -1.0, -1.0, -1.0}, {false, false, true, false});
  const auto o = evaluate_k_cg(4, it);
  EXPECT_EQ(o.loss, 0);
  EXPECT_EQ(o.size, 4u);
  EXPECT_EQ(o.k_star, 3u);
  EXPECT_DOUBLE_EQ(*o.res(), 1.0 / 3.0);
  const auto miss = evaluate_k_cg(2, it);
  EXPECT_EQ(miss.loss, 1);
  EXPECT_FALSE(miss.res().has_value());
}

TEST(Outcome, SetLossAgainstTruth) {
  CandidateSet set;
  EXPECT_EQ(set_loss(set, TokenSequence{}), 1);
}

TEST(Risk, EmpiricalRiskFixture) {
  const auto good = item({-1.0, -1.0}, {true, false});
  const auto bad = item({-1.0, -1.0}, {false, false});
  const std::vector<const CalibrationItem*> items{&good, &good, &bad, &good};
  const auto e = empirical_risk(LambdaConfig{}, items, 2);
  EXPECT_DOUBLE_EQ(e.risk, 0.25);
  EXPECT_EQ(e.failures, 1u);
  EXPECT_DOUBLE_EQ(e.mean_size, 2.0);
  EXPECT_DOUBLE_EQ(e.mean_res, 1.0);
  EXPECT_EQ(e.res_undefined, 1u);
}

TEST(Calibrate, SafeConfigurationIsSelected) {
  std::vector<CalibrationItem> data(20, item({-1.0, -1.0, -1.0}, {true, true, false}));
  std::vector<const CalibrationItem*> items;
  for (const auto& d : data) items.push_back(&d);
  LambdaGrid grid;
  grid.configs = {LambdaConfig{}};
  grid.epsilon = 0.5;
  grid.method = FwerMethod::Bonferroni;
  const auto r = calibrate(grid, items, 3);
  EXPECT_FALSE(r.outcome.abstained);
  EXPECT_NEAR(r.records[0].p_value, std::pow(0.5, 20), 1e-15);
  EXPECT_EQ(calibrate(grid, items, 3).outcome.chosen, r.outcome.chosen);

  grid.epsilon = 0.01;
  EXPECT_TRUE(calibrate(grid, items, 3).outcome.abstained);
}

TEST(Calibrate, TableAndDirectPathsAgree) {
  Rng rng = make_rng(21);
  std::vector<CalibrationItem> data;
  for (int i = 0; i < 30; ++i) {
    std::vector<double> q;
    std::vector<bool> adm;
    for (int k = 0; k < 6; ++k) {
      q.push_back(-3.0 * uniform_open01(rng));
      adm.push_back(uniform_open01(rng) < 0.4);
    }
    data.push_back(item(q, adm));
  }
  std::vector<const CalibrationItem*> items;
  for (const auto& d : data) items.push_back(&d);
  LambdaGrid grid;
  for (double q1 : {-kInf, -2.0, -1.0})
    for (double q3 : {-0.5, -0.1, kInf}) grid.configs.push_back({q1, 1.0, q3});
  grid.epsilon = 0.6;
  grid.method = FwerMethod::Bonferroni;
  const auto table = evaluate_grid(grid.configs, items, 6);
  std::vector<std::size_t> all(items.size());
  std::iota(all.begin(), all.end(), 0);
  const auto a = calibrate(grid, items, 6);
  const auto b = calibrate(grid, table, all);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t c = 0; c < a.records.size(); ++c) EXPECT_DOUBLE_EQ(a.records[c].p_value, b.records[c].p_value);
  EXPECT_EQ(a.outcome.chosen, b.outcome.chosen);
}

TEST(Calibrate, RiskIsControlledOnSyntheticGenerator) {
  // Candidate k of an item is admissible with a per-item rate; quality tracks admissibility.
  const auto draw = [](Rng& rng) {
    const double rate = 0.1 + 0.5 * uniform_open01(rng);
    std::vector<double> q;
    std::vector<bool> adm;
    for (int k = 0; k < 10; ++k) {
      const bool ok = uniform_open01(rng) < rate;
      adm.push_back(ok);
      q.push_back((ok ? -0.5 : -1.5) - uniform_open01(rng));
    }
    return item(q, adm);
  };
  LambdaGrid grid;
  for (double q1 : {-kInf, -2.0, -1.5})
    for (double q3 : {-1.0, -0.8, -0.6, kInf}) grid.configs.push_back({q1, 1.0, q3});
  grid.epsilon = 0.3;
  grid.delta = 0.1;
  grid.method = FwerMethod::Bonferroni;

  Rng holdout_rng = make_rng(500);
  std::vector<CalibrationItem> holdout;
  for (int i = 0; i < 2000; ++i) holdout.push_back(draw(holdout_rng));
  std::vector<const CalibrationItem*> hp;
  for (const auto& h : holdout) hp.push_back(&h);
  std::vector<double> true_risk;
  for (const auto& c : grid.configs) true_risk.push_back(empirical_risk(c, hp, 10).risk);

  int runs = 0, violations = 0;
  const int draws = 200;
  for (int d = 0; d < draws; ++d) {
    Rng rng = make_rng(600, {static_cast<std::uint64_t>(d)});
    std::vector<CalibrationItem> cal;
    for (int i = 0; i < 150; ++i) cal.push_back(draw(rng));
    std::vector<const CalibrationItem*> cp;
    for (const auto& c : cal) cp.push_back(&c);
    const auto r = calibrate(grid, cp, 10);
    if (r.outcome.abstained) continue;
    ++runs;
    violations += true_risk[*r.outcome.chosen] > grid.epsilon;
  }
  ASSERT_GT(runs, 0);
  const double rate = static_cast<double>(violations) / runs;
  EXPECT_LE(rate, grid.delta + 3.0 * std::sqrt(grid.delta * (1 - grid.delta) / runs));
}
