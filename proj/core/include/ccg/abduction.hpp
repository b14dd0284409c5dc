#pragma once
// Abduction of the environment noise U_Z from a factual (action, KPI) pair.
//
// The amortized posterior is a 3x128 ReLU MLP emitting a diagonal Gaussian over
// the per-UE, per-knot large-scale loss (path loss + shadowing). Only that sum is
// identifiable from the KPIs, so a sample keeps a prior draw of the placement and
// sets shadow_db = loss - path_loss(d). Fading and traffic seeds come from the prior.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccg/envsim.hpp"
#include "ccg/rng.hpp"

namespace ccg {

inline constexpr std::size_t kSummaryStatsPerUe = 4;
inline constexpr std::size_t kSeriesSeconds = 10;
inline constexpr std::size_t kConfigFeatures = 5;
inline constexpr std::size_t kFeatureDim =
    kMaxUes * kSummaryStatsPerUe + 2 * kMaxUes * kSeriesSeconds + kConfigFeatures;
inline constexpr std::size_t kTargetDim = kMaxUes * kShadowKnots;

// Layout:
//   [0, 40)    per UE: mean throughput, throughput std, mean delay, delay std
//   [40, 140)  per UE, per second: mean throughput
//   [140, 240) per UE, per second: mean log1p(delay)
//   [240, 245) RR, PF one-hot, then num_ues, load, duration scaled to [0, 1]
// Absent UEs and seconds beyond the run are zero.
struct SummaryFeatures {
  std::vector<double> values;
};

// Throws InvalidArgument when the series shape does not match the action.
SummaryFeatures summarize_pair(const ActionConfig& action, const KpiSeries& kpis);

struct TrainingTriplet {
  ActionConfig action;
  KpiSeries kpis;
  ExogenousNoise noise;
};

// Actions uniform over scheduler x {3..10} UEs x {2..10} Mbps x {5..10} s.
ActionConfig sample_uniform_action(Rng& rng);

std::vector<TrainingTriplet> generate_training_triplets(std::size_t n, Rng& rng,
                                                        Fidelity fidelity = kDefaultTwinFidelity);

// Regression target: large-scale loss in dB, row-major [ue][knot].
std::vector<double> abduction_target(const ExogenousNoise& noise);

// 1 where the target entry influences a run of this action, 0 otherwise.
std::vector<double> abduction_mask(const ActionConfig& action);

void write_triplets_jsonl(std::ostream& os, const std::vector<TrainingTriplet>& data);
std::vector<TrainingTriplet> read_triplets_jsonl(std::istream& is);

enum class Optimizer { SgdMomentum, Adam };

struct TrainReport {
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

struct TrainOptions {
  Optimizer optimizer = Optimizer::Adam;
  std::size_t epochs = 50;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct GaussianPrediction {
  std::vector<double> mean;     // dB
  std::vector<double> log_std;  // log dB
};

class PosteriorModel;

// Throws TrainingDiverged on a non-finite loss.
PosteriorModel train_amortized_posterior(const std::vector<TrainingTriplet>& data, const TrainOptions& options,
                                         TrainReport* report = nullptr);

class PosteriorModel {
 public:
  static constexpr std::size_t kHidden = 128;
  static constexpr std::size_t kLayers = 4;

  // Xavier-uniform weights, zero biases, identity standardization.
  PosteriorModel(std::size_t input_dim, std::size_t target_dim, std::uint64_t seed);
  ~PosteriorModel();
  PosteriorModel(const PosteriorModel&);
  PosteriorModel& operator=(const PosteriorModel&);
  PosteriorModel(PosteriorModel&&) noexcept;
  PosteriorModel& operator=(PosteriorModel&&) noexcept;

  std::size_t input_dim() const;
  std::size_t target_dim() const;
  std::size_t parameter_count() const;

  GaussianPrediction predict(const SummaryFeatures& features) const;

  // Mean over the batch of the masked Gaussian NLL per active target entry, in
  // standardized target units.
  double loss(const std::vector<SummaryFeatures>& x, const std::vector<std::vector<double>>& y,
              const std::vector<std::vector<double>>& mask) const;
  // Same loss and its gradient with respect to the flat parameter vector.
  double loss_and_gradient(const std::vector<SummaryFeatures>& x, const std::vector<std::vector<double>>& y,
                           const std::vector<std::vector<double>>& mask, std::vector<double>& grad) const;

  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& flat);

  void set_standardization(std::vector<double> feature_mean, std::vector<double> feature_std,
                           std::vector<double> target_mean, std::vector<double> target_std);

  nlohmann::json to_json() const;
  static PosteriorModel from_json(const nlohmann::json& j);

 private:
  friend PosteriorModel train_amortized_posterior(const std::vector<TrainingTriplet>&, const TrainOptions&,
                                                  TrainReport*);
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct PosteriorSampleOptions {
  double std_scale = 1.0;  // 0 returns the predicted mean
};

ExogenousNoise posterior_sample(const PosteriorModel& model, const ActionConfig& action, const KpiSeries& kpis,
                                Rng& rng, const PosteriorSampleOptions& options = {});

// Rebuild a noise whose large-scale loss equals `loss_db`, keeping the placement
// and seeds of `base`.
ExogenousNoise noise_with_loss(const ExogenousNoise& base, const std::vector<double>& loss_db);

struct AbcConfig {
  std::size_t candidates = 256;
  double temperature_scale = 1.0;  // temperature = scale * median distance
  Fidelity fidelity = kDefaultTwinFidelity;
};

// MAE over the common UE/window overlap of throughput and delay, each divided by its scale.
double kpi_distance(const KpiSeries& a, const KpiSeries& b, double throughput_scale, double delay_scale);

ExogenousNoise abc_posterior_sample(const ActionConfig& action, const KpiSeries& kpis, const AbcConfig& cfg,
                                    Rng& rng);

// Softmin selection among given candidates; exposed for tests.
std::size_t abc_select(const ActionConfig& action, const KpiSeries& kpis, const std::vector<ExogenousNoise>& candidates,
                       const AbcConfig& cfg, Rng& rng);

class Abductor {
 public:
  virtual ~Abductor() = default;
  virtual ExogenousNoise abduct(const ActionConfig& action, const KpiSeries& kpis, Rng& rng) const = 0;
};

class AmortizedAbductor : public Abductor {
 public:
  explicit AmortizedAbductor(std::shared_ptr<const PosteriorModel> model, PosteriorSampleOptions options = {})
      : model_(std::move(model)), options_(options) {}
  ExogenousNoise abduct(const ActionConfig& action, const KpiSeries& kpis, Rng& rng) const override;

 private:
  std::shared_ptr<const PosteriorModel> model_;
  PosteriorSampleOptions options_;
};

class AbcAbductor : public Abductor {
 public:
  explicit AbcAbductor(AbcConfig cfg = {}) : cfg_(cfg) {}
  ExogenousNoise abduct(const ActionConfig& action, const KpiSeries& kpis, Rng& rng) const override;

 private:
  AbcConfig cfg_;
};

class PriorAbductor : public Abductor {
 public:
  ExogenousNoise abduct(const ActionConfig& action, const KpiSeries& kpis, Rng& rng) const override;
};

}  // namespace ccg
