#pragma once
// Episode orchestration: factual runs, the CG / IG / SIG estimators and the
// evaluation-only true counterfactual.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccg/abduction.hpp"
#include "ccg/envsim.hpp"
#include "ccg/policy.hpp"
#include "ccg/prompt.hpp"

namespace ccg {

struct Episode {
  std::string id;
  PromptSpec prompt;
  ActionConfig action;
  TokenSequence action_tokens;
  KpiSeries kpis;
  TokenSequence report;
  std::string report_text;
  GumbelTrace action_trace;  // U_A
  GumbelTrace report_trace;  // U_Y
};

// The environment noise of the real run. Evaluation code only; counts reads so
// tests can prove the estimators never touch it.
class HiddenNoiseRecord {
 public:
  HiddenNoiseRecord() = default;
  HiddenNoiseRecord(std::string episode_id, ExogenousNoise noise, std::uint64_t report_extension_seed);

  const std::string& episode_id() const { return episode_id_; }
  const ExogenousNoise& noise() const;
  std::uint64_t report_extension_seed() const { return report_extension_seed_; }

  // When armed, any read of noise() throws InvalidState.
  void arm_tripwire(bool armed = true) { tripwire_ = armed; }
  long reads() const { return reads_; }

  friend void to_json(nlohmann::json& j, const HiddenNoiseRecord& h);
  friend void from_json(const nlohmann::json& j, HiddenNoiseRecord& h);

 private:
  std::string episode_id_;
  ExogenousNoise noise_;
  std::uint64_t report_extension_seed_ = 0;
  bool tripwire_ = false;
  mutable long reads_ = 0;
};

// An estimate (or the ground truth) of the counterfactual outcome.
struct CounterfactualOutcome {
  ActionConfig action;
  TokenSequence action_tokens;
  KpiSeries kpis;
  TokenSequence report;
  std::string report_text;
};

struct PipelineConfig {
  SlotPolicy policy;
  Fidelity twin = kDefaultTwinFidelity;
  Fidelity real = kRealFidelity;
};

std::pair<Episode, HiddenNoiseRecord> run_factual_episode(const PipelineConfig& cfg, const PromptSpec& x,
                                                          std::uint64_t seed, const std::string& id = "");

// Abduction-action-prediction on the twin, replaying the factual U_A and U_Y.
CounterfactualOutcome run_cg(const PipelineConfig& cfg, const Episode& t, const PromptSpec& x_prime,
                             const Abductor& abductor, Rng& rng);

// Fresh agent noise, fresh environment noise, real environment.
CounterfactualOutcome run_ig(const PipelineConfig& cfg, const PromptSpec& x_prime, Rng& rng);

// Fresh agent noise, prior environment noise, twin environment.
CounterfactualOutcome run_sig(const PipelineConfig& cfg, const PromptSpec& x_prime, Rng& rng);

// Replays U_A and U_Y with the true noise on the real environment.
CounterfactualOutcome true_counterfactual(const PipelineConfig& cfg, const Episode& t,
                                          const HiddenNoiseRecord& hidden, const PromptSpec& x_prime);

struct DatasetRecord {
  std::string id;
  PromptSpec x;
  PromptSpec x_prime;
  Episode episode;
  CounterfactualOutcome truth;
};

struct Dataset {
  std::vector<DatasetRecord> records;
  std::vector<HiddenNoiseRecord> hidden;  // parallel to records
};

// Each slot is specified with this probability in a generated prompt.
inline constexpr double kSlotSpecifiedProbability = 0.8;

PromptSlots sample_prompt_slots(Rng& rng);

// One-slot / two-slot / phrasing-only edits in proportion 40/40/20.
EditSpec sample_edit(const PromptSpec& x, Rng& rng);

Dataset generate_dataset(const PipelineConfig& cfg, std::size_t n, std::uint64_t seed);

void write_dataset(std::ostream& records, std::ostream& hidden, const Dataset& ds);
Dataset read_dataset(std::istream& records, std::istream& hidden);

void to_json(nlohmann::json& j, const Episode& e);
void from_json(const nlohmann::json& j, Episode& e);
void to_json(nlohmann::json& j, const CounterfactualOutcome& c);
void from_json(const nlohmann::json& j, CounterfactualOutcome& c);
void to_json(nlohmann::json& j, const DatasetRecord& r);
void from_json(const nlohmann::json& j, DatasetRecord& r);

}  // namespace ccg
