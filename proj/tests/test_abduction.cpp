#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "ccg/abduction.hpp"
#include "ccg/errors.hpp"

using namespace ccg;

namespace {

TrainingTriplet triplet(std::uint64_t seed, Fidelity q = kDefaultTwinFidelity) {
  Rng rng = make_rng(seed);
  return generate_training_triplets(1, rng, q).front();
}

}  // namespace

TEST(Features, ShapeAndPadding) {
  const auto t = triplet(1);
  const auto f = summarize_pair(t.action, t.kpis);
  ASSERT_EQ(f.values.size(), kFeatureDim);
  EXPECT_EQ(summarize_pair(t.action, t.kpis).values, f.values);
  const auto ues = static_cast<std::size_t>(t.action.num_ues);
  for (std::size_t u = ues; u < kMaxUes; ++u)
    for (std::size_t s = 0; s < kSummaryStatsPerUe; ++s) EXPECT_EQ(f.values[u * kSummaryStatsPerUe + s], 0.0);
}

TEST(Features, ConstantSeriesHasZeroSpread) {
  ActionConfig a{Scheduler::PF, 3, 2.0, 5.0};
  KpiSeries k;
  k.throughput_mbps.assign(3, std::vector<double>(25, 2.0));
  k.delay_ms.assign(3, std::vector<double>(25, 4.0));
  k.delivered_bits.assign(3, std::vector<double>(25, 4e5));
  const auto f = summarize_pair(a, k);
  EXPECT_DOUBLE_EQ(f.values[0], 2.0);
  EXPECT_DOUBLE_EQ(f.values[1], 0.0);
}

TEST(Features, ShapeMismatchThrows) {
  const auto t = triplet(2);
  ActionConfig wrong = t.action;
  wrong.num_ues = t.action.num_ues == 3 ? 4 : 3;
  EXPECT_THROW(summarize_pair(wrong, t.kpis), InvalidArgument);
}

TEST(Triplets, CountAndDeterminism) {
  Rng a = make_rng(3), b = make_rng(3);
  const auto x = generate_training_triplets(50, a);
  const auto y = generate_training_triplets(50, b);
  ASSERT_EQ(x.size(), 50u);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].action, y[i].action);
    EXPECT_EQ(x[i].noise, y[i].noise);
    EXPECT_EQ(x[i].kpis.ues(), x[i].action.num_ues);
  }
}

TEST(Triplets, JsonlRoundTrip) {
  Rng rng = make_rng(4);
  const auto data = generate_training_triplets(3, rng);
  std::stringstream ss;
  write_triplets_jsonl(ss, data);
  const auto back = read_triplets_jsonl(ss);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].noise, data[2].noise);
  EXPECT_EQ(back[2].kpis, data[2].kpis);
}

TEST(Target, MaskCoversActiveUesAndKnots) {
  const ActionConfig a{Scheduler::RR, 4, 5.0, 5.0};
  const auto mask = abduction_mask(a);
  ASSERT_EQ(mask.size(), kTargetDim);
  EXPECT_EQ(mask[0], 1.0);
  EXPECT_EQ(mask[4 * kShadowKnots], 0.0);
}

TEST(Posterior, GradientMatchesFiniteDifferences) {
  PosteriorModel model(kFeatureDim, kTargetDim, 17);
  std::vector<SummaryFeatures> x;
  std::vector<std::vector<double>> y, mask;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto t = triplet(100 + s);
    x.push_back(summarize_pair(t.action, t.kpis));
    auto target = abduction_target(t.noise);
    for (double& v : target) v = v / 100.0 - 1.0;
    y.push_back(target);
    mask.push_back(abduction_mask(t.action));
  }
  for (auto& f : x)
    for (double& v : f.values) v = std::tanh(v / 50.0);

  std::vector<double> grad;
  model.loss_and_gradient(x, y, mask, grad);
  auto params = model.parameters();
  ASSERT_EQ(grad.size(), params.size());

  Rng pick = make_rng(5);
  const double h = 1e-5;
  int checked = 0;
  while (checked < 10) {
    const std::size_t i = pick() % params.size();
    if (std::abs(grad[i]) < 1e-6) continue;
    const double orig = params[i];
    params[i] = orig + h;
    model.set_parameters(params);
    const double up = model.loss(x, y, mask);
    params[i] = orig - h;
    model.set_parameters(params);
    const double down = model.loss(x, y, mask);
    params[i] = orig;
    model.set_parameters(params);
    const double fd = (up - down) / (2 * h);
    EXPECT_LT(std::abs(fd - grad[i]) / std::max(std::abs(fd), std::abs(grad[i])), 1e-4) << "parameter " << i;
    ++checked;
  }
}

TEST(Posterior, JsonRoundTripPredictsIdentically) {
  const PosteriorModel model(kFeatureDim, kTargetDim, 3);
  const auto back = PosteriorModel::from_json(model.to_json());
  const auto t = triplet(5);
  const auto f = summarize_pair(t.action, t.kpis);
  EXPECT_EQ(model.predict(f).mean, back.predict(f).mean);
  EXPECT_EQ(model.predict(f).log_std, back.predict(f).log_std);
}

TEST(Posterior, OverfitsSingleTriplet) {
  const std::vector<TrainingTriplet> data{triplet(6)};
  TrainOptions opt;
  opt.epochs = 60;
  opt.batch_size = 1;
  TrainReport report;
  train_amortized_posterior(data, opt, &report);
  ASSERT_EQ(report.epoch_loss.size(), 60u);
  for (std::size_t e = 11; e < report.epoch_loss.size(); ++e)
    EXPECT_LE(report.epoch_loss[e], report.epoch_loss[e - 1] + 1e-9) << "epoch " << e;
}

TEST(Posterior, ZeroShadowFitBeatsConstantMean) {
  Rng rng = make_rng(7);
  auto data = generate_training_triplets(600, rng);
  for (auto& t : data) {
    std::fill(t.noise.shadow_db.begin(), t.noise.shadow_db.end(), 0.0);
    t.kpis = run_environment(t.action, t.noise, kDefaultTwinFidelity);
  }
  TrainOptions opt;
  opt.epochs = 30;
  const auto model = train_amortized_posterior(data, opt);

  std::vector<double> target_mean(kTargetDim, 0.0), target_count(kTargetDim, 0.0);
  for (const auto& t : data) {
    const auto truth = abduction_target(t.noise);
    const auto mask = abduction_mask(t.action);
    for (std::size_t j = 0; j < kTargetDim; ++j) {
      target_mean[j] += mask[j] * truth[j];
      target_count[j] += mask[j];
    }
  }
  for (std::size_t j = 0; j < kTargetDim; ++j) target_mean[j] /= std::max(1.0, target_count[j]);

  double err = 0.0, baseline = 0.0, log_std = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& t = data[i];
    const auto pred = model.predict(summarize_pair(t.action, t.kpis));
    const auto truth = abduction_target(t.noise);
    const auto mask = abduction_mask(t.action);
    for (std::size_t j = 0; j < kTargetDim; ++j) {
      if (mask[j] == 0.0) continue;
      err += std::abs(pred.mean[j] - truth[j]);
      baseline += std::abs(target_mean[j] - truth[j]);
      log_std += pred.log_std[j];
      ++n;
    }
  }
  EXPECT_LT(err, 0.8 * baseline);
  EXPECT_LT(std::exp(log_std / static_cast<double>(n)), kShadowSigmaDb);
}

TEST(PosteriorSample, ZeroScaleReturnsMean) {
  const PosteriorModel model(kFeatureDim, kTargetDim, 9);
  const auto t = triplet(8);
  Rng rng = make_rng(1);
  const auto noise = posterior_sample(model, t.action, t.kpis, rng, {0.0});
  const auto loss = large_scale_loss_db(noise);
  const auto pred = model.predict(summarize_pair(t.action, t.kpis));
  const auto mask = abduction_mask(t.action);
  for (std::size_t j = 0; j < kTargetDim; ++j)
    if (mask[j] != 0.0) EXPECT_NEAR(loss[j], pred.mean[j], 1e-9);
}

TEST(PosteriorSample, Deterministic) {
  const PosteriorModel model(kFeatureDim, kTargetDim, 9);
  const auto t = triplet(8);
  Rng a = make_rng(2), b = make_rng(2);
  EXPECT_EQ(posterior_sample(model, t.action, t.kpis, a), posterior_sample(model, t.action, t.kpis, b));
}

TEST(Abc, ColdSoftminPicksExactMatch) {
  const auto t = triplet(10);
  Rng rng = make_rng(11);
  std::vector<ExogenousNoise> candidates;
  for (int i = 0; i < 5; ++i) candidates.push_back(sample_exogenous_prior(rng));
  candidates.insert(candidates.begin() + 2, t.noise);
  AbcConfig cfg;
  cfg.temperature_scale = 1e-9;
  for (int r = 0; r < 5; ++r) EXPECT_EQ(abc_select(t.action, t.kpis, candidates, cfg, rng), 2u);
}

TEST(Abc, SingleCandidate) {
  const auto t = triplet(12);
  Rng rng = make_rng(13);
  EXPECT_EQ(abc_select(t.action, t.kpis, {sample_exogenous_prior(rng)}, {}, rng), 0u);
}

TEST(Abc, Deterministic) {
  const auto t = triplet(14);
  AbcConfig cfg;
  cfg.candidates = 16;
  Rng a = make_rng(15), b = make_rng(15);
  EXPECT_EQ(abc_posterior_sample(t.action, t.kpis, cfg, a), abc_posterior_sample(t.action, t.kpis, cfg, b));
}

TEST(Abc, DistanceIsZeroOnIdenticalSeries) {
  const auto t = triplet(16);
  EXPECT_DOUBLE_EQ(kpi_distance(t.kpis, t.kpis, 1.0, 1.0), 0.0);
}
