#pragma once
// Conformal counterfactual generation: candidate sets under acceptance and
// stopping thresholds, binomial-tail calibration with FWER control, and the
// fixed-budget k-CG baseline.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccg/pipeline.hpp"
#include "ccg/textmetrics.hpp"

namespace ccg {

inline constexpr std::size_t kDefaultKMax = 20;
inline constexpr double kSelectionGamma = 1.0;

struct LambdaConfig {
  double quality_min = -std::numeric_limits<double>::infinity();     // lambda_1
  double similarity_max = 1.0;                                       // lambda_2
  double confidence_stop = std::numeric_limits<double>::infinity();  // lambda_3

  friend bool operator==(const LambdaConfig&, const LambdaConfig&) = default;
};

struct ScoredReport {
  TokenSequence report;
  double quality = 0.0;
};

// The k-th (0-based) generation for one (T, X') pair. Implementations must
// return the same candidate for the same k.
class CandidateStream {
 public:
  virtual ~CandidateStream() = default;
  virtual const ScoredReport& at(std::size_t k) = 0;
};

// Backed by a precomputed list; at() past the end throws InvalidArgument.
class FixedCandidateStream final : public CandidateStream {
 public:
  explicit FixedCandidateStream(std::vector<ScoredReport> candidates) : candidates_(std::move(candidates)) {}
  const ScoredReport& at(std::size_t k) override;
  const std::vector<ScoredReport>& candidates() const { return candidates_; }

 private:
  std::vector<ScoredReport> candidates_;
};

// Lazily runs CG; generation k uses make_rng(base_seed, {kCandidate, k}), so
// every configuration evaluated on the same pair sees the same candidates.
class CgCandidateStream final : public CandidateStream {
 public:
  CgCandidateStream(const PipelineConfig& cfg, const Episode& t, const PromptSpec& x_prime, const Abductor& abductor,
                    std::uint64_t base_seed);
  const ScoredReport& at(std::size_t k) override;
  const CounterfactualOutcome& outcome(std::size_t k);

 private:
  void fill(std::size_t k);

  const PipelineConfig* cfg_;
  const Episode* t_;
  PromptSpec x_prime_;
  const Abductor* abductor_;
  std::uint64_t base_seed_;
  std::vector<CounterfactualOutcome> outcomes_;
  std::vector<ScoredReport> scored_;
};

enum class StopReason { Threshold, KMax };

struct CandidateStep {
  std::size_t k = 0;  // 1-based generation index
  double quality = 0.0;
  double similarity = 0.0;
  bool accepted = false;
};

struct CandidateSet {
  std::vector<ScoredReport> members;
  std::vector<std::size_t> member_k;  // generation index of each member
  std::size_t k_stop = 0;
  std::vector<CandidateStep> trace;
  StopReason stopped_by = StopReason::KMax;

  std::size_t size() const { return members.size(); }
};

// Thrown when the generator fails part-way; carries the set built so far.
class GenerationAborted : public std::runtime_error {
 public:
  GenerationAborted(const std::string& what, CandidateSet partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const CandidateSet& partial() const { return partial_; }

 private:
  CandidateSet partial_;
};

CandidateSet build_candidate_set(CandidateStream& stream, const LambdaConfig& lambda, std::size_t k_max);

// Accepts the first k generations with no stopping logic.
CandidateSet k_cg_baseline(CandidateStream& stream, std::size_t k);

// 1 when no member is admissible against the true report.
int set_loss(const CandidateSet& set, const TokenSequence& truth, const AdmissionRule& rule = {});

// Cached candidates of one calibration pair with their admission against the truth.
struct CalibrationItem {
  std::vector<ScoredReport> candidates;
  std::vector<bool> admissible;  // parallel to candidates
};

CalibrationItem prepare_item(CandidateStream& stream, const TokenSequence& truth, std::size_t k_max,
                             const AdmissionRule& rule = {});

// Per-pair outcome of one configuration.
struct SetOutcome {
  int loss = 1;
  std::size_t size = 0;
  std::size_t k_stop = 0;
  std::optional<std::size_t> k_star;  // first admissible generation at or before k_stop

  std::optional<double> res() const;
};

SetOutcome evaluate_set(const CandidateSet& set, const CalibrationItem& item);
SetOutcome evaluate(const LambdaConfig& lambda, const CalibrationItem& item, std::size_t k_max);
SetOutcome evaluate_k_cg(std::size_t k, const CalibrationItem& item);

struct RiskEstimate {
  double risk = 0.0;
  std::size_t failures = 0;
  std::size_t n = 0;
  double mean_size = 0.0;
  double mean_res = 0.0;  // over pairs with a defined RES; 0 when none
  std::size_t res_undefined = 0;
};

RiskEstimate empirical_risk(const LambdaConfig& lambda, const std::vector<const CalibrationItem*>& items,
                            std::size_t k_max);
RiskEstimate summarize_outcomes(const std::vector<SetOutcome>& outcomes);

// P(Binomial(n, epsilon) <= failures).
double binomial_pvalue(std::size_t failures, std::size_t n, double epsilon);

enum class FwerMethod { Bonferroni, FixedSequence };

struct LambdaGrid {
  std::vector<LambdaConfig> configs;
  double epsilon = 0.5;
  double delta = 0.1;
  FwerMethod method = FwerMethod::FixedSequence;
  std::vector<std::size_t> fst_order;  // indices into configs; required for FixedSequence
};

struct CalibrationRecord {
  LambdaConfig lambda;
  RiskEstimate estimate;
  double p_value = 1.0;
};

// Indices into `records` of the configurations that pass the FWER procedure.
std::vector<std::size_t> fwer_valid_set(const std::vector<CalibrationRecord>& records, double delta, FwerMethod method,
                                        const std::vector<std::size_t>& fst_order = {});

struct CalibrationOutcome {
  bool abstained = true;
  std::optional<std::size_t> chosen;  // index into the grid
  LambdaConfig lambda_hat;
  std::vector<std::size_t> valid;
  std::vector<double> selection_metric;  // parallel to valid
};

CalibrationOutcome select_configuration(const std::vector<std::size_t>& valid,
                                        const std::vector<CalibrationRecord>& records,
                                        double gamma = kSelectionGamma);

struct CalibrationResult {
  LambdaGrid grid;
  std::vector<CalibrationRecord> records;
  CalibrationOutcome outcome;
};

CalibrationResult calibrate(const LambdaGrid& grid, const std::vector<const CalibrationItem*>& items,
                            std::size_t k_max = kDefaultKMax);

// table[c][i]: outcome of configuration c on item i. Outcomes do not depend on
// the split, so repeated calibrations can share one table.
using OutcomeTable = std::vector<std::vector<SetOutcome>>;

OutcomeTable evaluate_grid(const std::vector<LambdaConfig>& configs, const std::vector<const CalibrationItem*>& items,
                           std::size_t k_max = kDefaultKMax);

// Calibrates on the items listed in `subset` (indices into the table columns).
CalibrationResult calibrate(const LambdaGrid& grid, const OutcomeTable& table, const std::vector<std::size_t>& subset);

// Aggregates one configuration's outcomes over `subset`.
RiskEstimate summarize_row(const std::vector<SetOutcome>& row, const std::vector<std::size_t>& subset);

// Threshold grid from pilot quantiles of quality and candidate similarity;
// the FST order ranks configurations by pilot risk, then pilot set size.
LambdaGrid make_lambda_grid(const std::vector<const CalibrationItem*>& pilot, double epsilon, double delta,
                            FwerMethod method, std::size_t k_max = kDefaultKMax);

std::string to_string(FwerMethod m);
FwerMethod fwer_method_from_string(const std::string& s);

void to_json(nlohmann::json& j, const LambdaConfig& l);
void from_json(const nlohmann::json& j, LambdaConfig& l);
void to_json(nlohmann::json& j, const ScoredReport& s);
void from_json(const nlohmann::json& j, ScoredReport& s);
void to_json(nlohmann::json& j, const CandidateSet& c);
void to_json(nlohmann::json& j, const RiskEstimate& r);
void from_json(const nlohmann::json& j, RiskEstimate& r);
void to_json(nlohmann::json& j, const CalibrationRecord& r);
void from_json(const nlohmann::json& j, CalibrationRecord& r);
void to_json(nlohmann::json& j, const CalibrationOutcome& o);
void from_json(const nlohmann::json& j, CalibrationOutcome& o);
void to_json(nlohmann::json& j, const LambdaGrid& g);
void from_json(const nlohmann::json& j, LambdaGrid& g);
void to_json(nlohmann::json& j, const CalibrationResult& r);
void from_json(const nlohmann::json& j, CalibrationResult& r);

}  // namespace ccg
