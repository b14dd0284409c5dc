#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "ccg/errors.hpp"
#include "ccg/textmetrics.hpp"

using namespace ccg;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::size_t> seq(std::initializer_list<std::size_t> v) { return v; }

TokenSequence report_for(const KpiSummary& k, Scheduler s, std::uint64_t seed) {
  const SlotPolicy policy;
  ActionConfig a{s, 4, 5.0, 5.0};
  Rng rng = make_rng(seed);
  return decode_with_trace(policy, PolicyContext::for_report({}, a, k), nullptr, rng).sequence;
}

ReportFacts facts(long tput, long delay, Trend t = Trend::Stable, Scheduler s = Scheduler::PF) {
  ReportFacts f;
  f.scheduler = s;
  f.throughput_bucket = tput;
  f.delay_bucket = delay;
  f.trend = t;
  return f;
}

}  // namespace

TEST(RougeL, HandComputedFixtures) {
  // a=1, b=2, c=3, d=4
  EXPECT_DOUBLE_EQ(rouge_l(seq({1, 3}), seq({1, 2, 3})), 0.8);
  EXPECT_DOUBLE_EQ(rouge_l(seq({1, 2, 3}), seq({1, 2, 3})), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l(seq({1, 2}), seq({3, 4})), 0.0);
  // LCS (a,b) of length 2; P = 2/4, R = 2/3.
  EXPECT_DOUBLE_EQ(rouge_l(seq({1, 4, 2, 4}), seq({1, 2, 3})), 2.0 * 0.5 * (2.0 / 3.0) / (0.5 + 2.0 / 3.0));
  EXPECT_DOUBLE_EQ(rouge_l(seq({3, 2, 1}), seq({1, 2, 3})), 1.0 / 3.0);
}

TEST(RougeL, EmptyThrows) {
  EXPECT_THROW(rouge_l(seq({}), seq({1})), InvalidArgument);
}

TEST(Similarity, SetConventions) {
  TokenSequence ac{seq({1, 3}), true}, abc{seq({1, 2, 3}), true}, cd{seq({3, 4}), true};
  EXPECT_EQ(similarity_to_set({}, abc), -kInf);
  EXPECT_DOUBLE_EQ(similarity_to_set({ac, abc}, abc), 1.0);
  EXPECT_DOUBLE_EQ(similarity_to_set({ac}, abc), 0.8);
  EXPECT_DOUBLE_EQ(similarity_to_set({cd, ac}, abc), 0.8);
}

TEST(Confidence, MaxQuality) {
  EXPECT_EQ(confidence({}), -kInf);
  const std::vector<double> q{-1.5, -0.2, -3.0};
  EXPECT_DOUBLE_EQ(confidence(q), -0.2);
}

TEST(Quality, DeterministicActionAndReport) {
  PolicyParams params;
  params.eta = 0.0;
  params.template_probs = {1.0, 0.0, 0.0, 0.0};
  params.syn1_probs = {1.0, 0.0, 0.0};
  params.syn2_probs = {1.0, 0.0, 0.0};
  params.syn3_probs = {1.0, 0.0};
  const SlotPolicy policy(params);
  const PromptSpec x = render_prompt({Scheduler::PF, 4, 5, 5}, 0);
  const ActionConfig a{Scheduler::PF, 4, 5.0, 5.0};
  Rng rng = make_rng(1);
  CounterfactualOutcome c;
  c.action = a;
  c.kpis = run_environment(a, sample_exogenous_prior(rng), Fidelity::Q2);
  c.report = decode_with_trace(policy, PolicyContext::for_report(x.slots, a, summarize_kpis(c.kpis)), nullptr, rng)
                 .sequence;
  EXPECT_DOUBLE_EQ(quality_score(policy, x, c), 0.0);

  params.syn3_probs = {0.5, 0.5};
  const SlotPolicy half(params);
  const double q = quality_score(half, x, c);
  EXPECT_NEAR(q, std::log(0.5) / static_cast<double>(c.report.indices.size()), 1e-12);

  c.report = {};
  EXPECT_EQ(quality_score(policy, x, c), -kInf);
}

TEST(Facts, RoundTripFromGeneratedReports) {
  const KpiSummary k{4.8, 12.34, 0.2};
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto f = extract_facts(report_for(k, Scheduler::RR, s));
    EXPECT_EQ(f.scheduler, Scheduler::RR);
    EXPECT_EQ(f.throughput_bucket, 48);
    EXPECT_EQ(f.delay_bucket, 123);
    EXPECT_EQ(f.trend, Trend::Rising);
    EXPECT_TRUE(f.throughput_below_floor);
    EXPECT_FALSE(f.delay_above_ceiling);
  }
  const auto falling = extract_facts(report_for({20.0, 30.0, -0.5}, Scheduler::PF, 1));
  EXPECT_EQ(falling.trend, Trend::Falling);
  EXPECT_FALSE(falling.throughput_below_floor);
  EXPECT_TRUE(falling.delay_above_ceiling);
}

TEST(Facts, TruncatedReportThrows) {
  auto r = report_for({4.97, 12.34, 0.0}, Scheduler::PF, 2);
  r.indices.resize(r.indices.size() / 2);
  r.terminated = false;
  EXPECT_THROW(extract_facts(r), ParseError);
}

TEST(Admission, RelativeToleranceWithBucketFloor) {
  EXPECT_TRUE(admission(facts(50, 100), facts(50, 100)));
  EXPECT_TRUE(admission(facts(75, 100), facts(50, 100)));
  EXPECT_FALSE(admission(facts(76, 100), facts(50, 100)));
  EXPECT_TRUE(admission(facts(1, 2), facts(0, 2)));
  EXPECT_FALSE(admission(facts(2, 2), facts(0, 2)));
  EXPECT_FALSE(admission(facts(50, 100, Trend::Stable, Scheduler::RR), facts(50, 100)));
}

TEST(Admission, TrendWithinOneStep) {
  EXPECT_TRUE(admission(facts(5, 5, Trend::Stable), facts(5, 5, Trend::Rising)));
  EXPECT_FALSE(admission(facts(5, 5, Trend::Falling), facts(5, 5, Trend::Rising)));
  AdmissionRule strict;
  strict.trend_steps = 0;
  strict.relative_tolerance = 0.0;
  EXPECT_FALSE(admission(facts(5, 5, Trend::Stable), facts(5, 5, Trend::Rising), strict));
  EXPECT_FALSE(admission(facts(7, 5), facts(5, 5), strict));
}
