#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "ccg/errors.hpp"
#include "ccg/pipeline.hpp"

using namespace ccg;

namespace {

class FixedAbductor : public Abductor {
 public:
  explicit FixedAbductor(ExogenousNoise n) : noise_(std::move(n)) {}
  ExogenousNoise abduct(const ActionConfig&, const KpiSeries&, Rng&) const override { return noise_; }

 private:
  ExogenousNoise noise_;
};

PromptSpec prompt(PromptSlots s, std::uint64_t style = 1) { return render_prompt(s, style); }

double mean_window_variance(const KpiSeries& k) {
  double total = 0.0;
  for (const auto& row : k.throughput_mbps) {
    double m = 0.0, sq = 0.0;
    for (double v : row) m += v;
    m /= static_cast<double>(row.size());
    for (double v : row) sq += (v - m) * (v - m);
    total += sq / static_cast<double>(row.size());
  }
  return total / static_cast<double>(k.throughput_mbps.size());
}

}  // namespace

TEST(Factual, Deterministic) {
  const PipelineConfig cfg;
  const auto x = prompt({Scheduler::PF, 5, 4, 6});
  const auto [a, ha] = run_factual_episode(cfg, x, 17, "e");
  const auto [b, hb] = run_factual_episode(cfg, x, 17, "e");
  EXPECT_EQ(a.action_tokens, b.action_tokens);
  EXPECT_EQ(a.kpis, b.kpis);
  EXPECT_EQ(a.report_text, b.report_text);
  EXPECT_EQ(a.report_trace, b.report_trace);
}

TEST(Cg, IdentityPromptReplaysFactualAction) {
  const PipelineConfig cfg;
  const PriorAbductor prior;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = prompt({std::nullopt, 6, std::nullopt, 7}, s);
    const auto [e, hidden] = run_factual_episode(cfg, x, s);
    Rng rng = make_rng(s, {99});
    EXPECT_EQ(run_cg(cfg, e, x, prior, rng).action_tokens, e.action_tokens);
  }
}

TEST(Cg, TrueNoiseOnRealFidelityReproducesFactual) {
  PipelineConfig cfg;
  cfg.twin = Fidelity::Q4;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto x = prompt({Scheduler::RR, 4, 6, 5}, s);
    const auto [e, hidden] = run_factual_episode(cfg, x, 100 + s);
    const FixedAbductor oracle(hidden.noise());
    Rng rng = make_rng(s);
    const auto out = run_cg(cfg, e, x, oracle, rng);
    EXPECT_EQ(out.kpis, e.kpis);
    EXPECT_EQ(out.report, e.report);
  }
}

TEST(TrueCounterfactual, IdentityEditIsFactual) {
  const PipelineConfig cfg;
  const auto x = prompt({Scheduler::PF, 9, 9, 9}, 4);
  const auto [e, hidden] = run_factual_episode(cfg, x, 5);
  const auto t = true_counterfactual(cfg, e, hidden, x);
  EXPECT_EQ(t.action_tokens, e.action_tokens);
  EXPECT_EQ(t.kpis, e.kpis);
  EXPECT_EQ(t.report, e.report);
  EXPECT_EQ(t.report_text, true_counterfactual(cfg, e, hidden, x).report_text);
}

TEST(TrueCounterfactual, DiffersFromFreshRuns) {
  const PipelineConfig cfg;
  int differ = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = prompt({Scheduler::PF, 5, 5, 5}, s);
    const auto xp = prompt({Scheduler::PF, 5, 8, 5}, s);
    const auto [e, hidden] = run_factual_episode(cfg, x, s);
    Rng rng = make_rng(s, {7});
    if (!(true_counterfactual(cfg, e, hidden, xp).kpis == run_ig(cfg, xp, rng).kpis)) ++differ;
  }
  EXPECT_GE(differ, 1);
}

TEST(Ig, FollowsSpecifiedScheduler) {
  const PipelineConfig cfg;
  const auto x = prompt({Scheduler::RR, std::nullopt, std::nullopt, std::nullopt});
  Rng rng = make_rng(3);
  int rr = 0;
  for (int i = 0; i < 200; ++i) rr += run_ig(cfg, x, rng).action.scheduler == Scheduler::RR;
  EXPECT_GE(rr, 170);
}

TEST(Sig, TwinIsSmootherThanRealEnvironment) {
  const PipelineConfig cfg;
  const auto x = prompt({Scheduler::PF, 6, 8, 5});
  double twin = 0.0, real = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng noise_rng = make_rng(s, {1});
    const auto noise = sample_exogenous_prior(noise_rng);
    const ActionConfig a{Scheduler::PF, 6, 8.0, 5.0};
    twin += mean_window_variance(run_environment(a, noise, cfg.twin));
    real += mean_window_variance(run_environment(a, noise, Fidelity::Q4));
  }
  EXPECT_LE(twin, real);
}

TEST(Dataset, InvariantsHold) {
  const PipelineConfig cfg;
  const auto ds = generate_dataset(cfg, 12, 8);
  ASSERT_EQ(ds.records.size(), 12u);
  ASSERT_EQ(ds.hidden.size(), 12u);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    EXPECT_EQ(ds.hidden[i].episode_id(), r.id);
    EXPECT_TRUE(in_edit_set(r.x, r.x_prime)) << r.x.text << " / " << r.x_prime.text;
    EXPECT_EQ(r.truth.kpis.ues(), r.truth.action.num_ues);
  }
  const auto again = generate_dataset(cfg, 12, 8);
  EXPECT_EQ(again.records.back().truth.report_text, ds.records.back().truth.report_text);
}

TEST(Dataset, JsonlRoundTrip) {
  const PipelineConfig cfg;
  const auto ds = generate_dataset(cfg, 3, 9);
  std::stringstream rec, hid;
  write_dataset(rec, hid, ds);
  EXPECT_EQ(rec.str().find("shadow_db"), std::string::npos);
  const auto back = read_dataset(rec, hid);
  ASSERT_EQ(back.records.size(), 3u);
  EXPECT_EQ(back.records[1].episode.kpis, ds.records[1].episode.kpis);
  EXPECT_EQ(back.hidden[1].noise(), ds.hidden[1].noise());
}

TEST(Estimators, NeverReadHiddenNoise) {
  const PipelineConfig cfg;
  auto ds = generate_dataset(cfg, 5, 10);
  const PriorAbductor prior;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    ds.hidden[i].arm_tripwire();
    const auto& r = ds.records[i];
    Rng rng = make_rng(i);
    run_cg(cfg, r.episode, r.x_prime, prior, rng);
    run_ig(cfg, r.x_prime, rng);
    run_sig(cfg, r.x_prime, rng);
    EXPECT_THROW(true_counterfactual(cfg, r.episode, ds.hidden[i], r.x_prime), InvalidState);
  }
}
