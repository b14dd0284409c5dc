#include <cmath>
#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>

#include "ccg/envsim.hpp"
#include "ccg/errors.hpp"

using namespace ccg;

namespace {

ExogenousNoise zero_shadow(std::uint64_t seed = 1) {
  ExogenousNoise n;
  n.placement_seed = seed;
  n.shadow_db.assign(kMaxUes * kShadowKnots, 0.0);
  n.fading_seed = seed + 1;
  n.traffic_seed = seed + 2;
  return n;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(Prior, Deterministic) {
  Rng a = make_rng(4), b = make_rng(4);
  EXPECT_EQ(sample_exogenous_prior(a), sample_exogenous_prior(b));
}

TEST(Prior, ShadowMomentsMatchNormal) {
  Rng rng = make_rng(8);
  double sum = 0.0, sq = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto n = sample_exogenous_prior(rng);
    const double x = n.shadow_db[static_cast<std::size_t>(i) % n.shadow_db.size()];
    sum += x;
    sq += x * x;
  }
  const double m = sum / draws;
  EXPECT_NEAR(m, 0.0, 0.3);
  EXPECT_NEAR(std::sqrt(sq / draws - m * m), kShadowSigmaDb, 0.3);
}

TEST(Scheduler, RoundRobinIsCyclic) {
  SchedulerState s(3);
  s.backlog_bits = {1e4, 1e4, 1e4};
  s.last_served = 0;
  const std::vector<double> rates{1.0, 1.0, 1.0};
  EXPECT_EQ(scheduler_select(s, rates, Scheduler::RR), 1);
  s.last_served = 2;
  EXPECT_EQ(scheduler_select(s, rates, Scheduler::RR), 0);
}

TEST(Scheduler, ProportionalFairUsesRatio) {
  SchedulerState s(2);
  s.backlog_bits = {1e4, 1e4};
  s.ewma_bps = {1.0, 5.0};
  EXPECT_EQ(scheduler_select(s, std::vector<double>{10.0, 10.0}, Scheduler::PF), 0);
  s.ewma_bps = {2.0, 2.0};
  EXPECT_EQ(scheduler_select(s, std::vector<double>{10.0, 10.0}, Scheduler::PF), 0);
}

TEST(Scheduler, IdleWhenNothingQueued) {
  SchedulerState s(2);
  s.backlog_bits = {0.0, 0.0};
  EXPECT_FALSE(scheduler_select(s, std::vector<double>{1.0, 1.0}, Scheduler::PF).has_value());
}

TEST(Environment, PureFunctionOfInputs) {
  Rng rng = make_rng(12);
  const auto noise = sample_exogenous_prior(rng);
  const ActionConfig a{Scheduler::PF, 6, 4.0, 5.0};
  for (Fidelity q : {Fidelity::Q1, Fidelity::Q2, Fidelity::Q3, Fidelity::Q4})
    EXPECT_EQ(run_environment(a, noise, q), run_environment(a, noise, q));
}

TEST(Environment, ShapeFollowsAction) {
  Rng rng = make_rng(13);
  const ActionConfig a{Scheduler::RR, 4, 3.0, 7.0};
  const auto k = run_environment(a, sample_exogenous_prior(rng), Fidelity::Q2);
  EXPECT_EQ(k.ues(), 4);
  EXPECT_EQ(k.windows(), 35);
  EXPECT_EQ(a.windows(), 35);
}

TEST(Environment, SingleUnsaturatedUeCarriesItsLoad) {
  SimOptions opt;
  opt.relax_ue_range = true;
  opt.distances_m = std::vector<double>{50.0};
  const ActionConfig a{Scheduler::PF, 1, 2.0, 5.0};
  const auto k = run_environment(a, zero_shadow(), Fidelity::Q1, opt);
  for (double t : k.throughput_mbps[0]) EXPECT_NEAR(t, 2.0, 1e-9);
}

TEST(Environment, RoundRobinSharesEquallyUnderSymmetry) {
  SimOptions opt;
  opt.relax_ue_range = true;
  opt.distances_m = std::vector<double>{250.0, 250.0};
  const ActionConfig a{Scheduler::RR, 2, 10.0, 5.0};
  const auto k = run_environment(a, zero_shadow(), Fidelity::Q1, opt);
  const double t0 = mean(k.throughput_mbps[0]), t1 = mean(k.throughput_mbps[1]);
  EXPECT_NEAR(t0, t1, 0.01 * std::max(t0, t1));
}

TEST(Environment, RejectsOutOfRangeAction) {
  Rng rng = make_rng(14);
  const auto noise = sample_exogenous_prior(rng);
  EXPECT_THROW(run_environment(ActionConfig{Scheduler::PF, 2, 5.0, 5.0}, noise, Fidelity::Q2), InvalidArgument);
  EXPECT_THROW(run_environment(ActionConfig{Scheduler::PF, 5, 11.0, 5.0}, noise, Fidelity::Q2), InvalidArgument);
}

TEST(Environment, FidelityFromIntValidates) {
  EXPECT_EQ(fidelity_from_int(3), Fidelity::Q3);
  EXPECT_THROW(fidelity_from_int(5), InvalidArgument);
}

TEST(Environment, PathLossIncreasesWithDistance) {
  EXPECT_LT(path_loss_db(50.0), path_loss_db(200.0));
}

TEST(Environment, KpiCsvHasDeclaredColumns) {
  Rng rng = make_rng(15);
  const auto k = run_environment(ActionConfig{Scheduler::PF, 3, 2.0, 5.0}, sample_exogenous_prior(rng), Fidelity::Q1);
  std::ostringstream os;
  write_kpi_csv(os, k);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "window_index,ue,throughput_mbps,delay_ms");
  EXPECT_EQ(static_cast<long>(std::count(text.begin(), text.end(), '\n')), 1 + 3 * 25);
}

TEST(Environment, JsonRoundTrip) {
  Rng rng = make_rng(16);
  const auto noise = sample_exogenous_prior(rng);
  const ActionConfig a{Scheduler::RR, 5, 6.0, 6.0};
  const auto k = run_environment(a, noise, Fidelity::Q4);
  EXPECT_EQ(nlohmann::json(noise).get<ExogenousNoise>(), noise);
  EXPECT_EQ(nlohmann::json(a).get<ActionConfig>(), a);
  EXPECT_EQ(nlohmann::json(k).get<KpiSeries>(), k);
}

TEST(Environment, SummaryOfConstantSeries) {
  KpiSeries k;
  k.throughput_mbps = {{2.0, 2.0, 2.0}, {4.0, 4.0, 4.0}};
  k.delay_ms = {{1.0, 1.0, 1.0}, {3.0, 3.0, 3.0}};
  k.delivered_bits = k.throughput_mbps;
  const auto s = summarize_kpis(k);
  EXPECT_DOUBLE_EQ(s.mean_throughput_mbps, 3.0);
  EXPECT_DOUBLE_EQ(s.mean_delay_ms, 2.0);
  EXPECT_DOUBLE_EQ(s.throughput_rel_slope, 0.0);
}
