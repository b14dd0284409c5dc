#pragma once
// Evaluation harness: the table1, riskcurves, calibsize and simquality
// experiments, result export and the data/posterior preparation steps used by
// the command-line tool.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccg/conformal.hpp"
#include "ccg/kvconfig.hpp"
#include "ccg/metrics.hpp"
#include "ccg/pipeline.hpp"

namespace ccg {

struct ExperimentConfig {
  std::size_t dataset_size = 300;
  std::size_t test_size = 150;
  std::size_t pilot_size = 60;
  std::size_t training_triplets = 5000;
  TrainOptions train;
  std::string abduction = "amortized";  // amortized | abc | prior
  std::size_t abc_candidates = 256;

  std::size_t k_max = kDefaultKMax;
  double delta = 0.1;
  FwerMethod fwer = FwerMethod::FixedSequence;
  AdmissionRule admission;

  std::vector<double> epsilons{0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  // Extra levels swept only to match k-CG set sizes.
  std::vector<double> matching_epsilons{0.05, 0.1, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.9};
  std::size_t splits = 50;
  std::vector<std::size_t> k_values{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  double calibsize_epsilon = 0.5;
  std::vector<std::size_t> calibsize_n{5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::size_t calibsize_splits = 20;

  std::vector<int> fidelities{1, 2, 3, 4};
  double simquality_epsilon = 0.5;

  std::size_t max_lag = 1;  // samples of 0.2 s

  double calibrate_epsilon = 0.5;

  std::string posterior_path;  // load instead of training when set
  std::string dataset_dir;     // load records.jsonl / hidden.jsonl when set

  // Throws ParseError on unknown keys or malformed values.
  static ExperimentConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
};

// Everything an experiment needs for one twin fidelity.
struct Workspace {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  PipelineConfig pipeline;
  Dataset dataset;
  Dataset pilot;
  std::shared_ptr<const PosteriorModel> posterior;  // null unless abduction = amortized
};

Workspace make_workspace(const ExperimentConfig& cfg, std::uint64_t seed, Fidelity twin = kDefaultTwinFidelity);
std::unique_ptr<Abductor> make_abductor(const Workspace& ws);

// Reads <prefix>records.jsonl and <prefix>hidden.jsonl from dir.
Dataset load_dataset(const std::filesystem::path& dir, const std::string& prefix = "");

std::shared_ptr<const PosteriorModel> train_posterior(const ExperimentConfig& cfg, std::uint64_t seed, Fidelity twin,
                                                      TrainReport* report = nullptr);

// Evaluation-split permutation: the first test_size indices are the test split.
std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t seed, std::size_t split);

struct EvalRecord {
  std::string record_id;
  std::string method;  // CG, IG, SIG, CCG or k-CG
  std::optional<double> epsilon;
  std::optional<std::size_t> split;
  std::optional<std::size_t> k;
  std::optional<int> fidelity;
  std::optional<double> mae_throughput, mae_delay;
  std::optional<double> xcorr_throughput, xcorr_delay;  // empty when undefined
  std::optional<double> crossing_throughput, crossing_delay;
  std::optional<int> set_loss;
  std::optional<std::size_t> set_size, k_stop, k_star;
  std::optional<double> res;

  // Set-based row whose RES is undefined (no admissible candidate drawn).
  bool res_flagged() const { return k_stop.has_value() && !res.has_value(); }
};

// Writes <stem>.jsonl and <stem>.csv; returns the number of flagged rows.
std::size_t export_results(const std::vector<EvalRecord>& records, const std::filesystem::path& stem);
std::vector<EvalRecord> read_results_jsonl(const std::filesystem::path& path);

struct MethodKpiSummary {
  std::string method;
  Kpi kpi = Kpi::Throughput;
  double mean_mae = 0.0;
  double mean_xcorr = 0.0;  // undefined correlations count as 0
  double mean_crossing = 0.0;
  std::size_t n = 0;
  std::size_t xcorr_undefined = 0;
};

struct Table1Result {
  std::vector<EvalRecord> records;
  std::vector<MethodKpiSummary> summary;
  const MethodKpiSummary& at(const std::string& method, Kpi kpi) const;
};

Table1Result run_table1(const Workspace& ws);

// Cached candidates and per-configuration outcomes for one workspace.
struct ConformalData {
  std::vector<CalibrationItem> items;  // parallel to the dataset records
  std::vector<CalibrationItem> pilot;
  LambdaGrid grid;                     // epsilon is set per calibration
  OutcomeTable table;
  std::vector<CounterfactualOutcome> point;  // first candidate per record
};

ConformalData build_conformal_data(const Workspace& ws, const Abductor& abductor);

struct CurvePoint {
  std::string method;  // CCG or k-CG
  std::optional<double> epsilon;
  std::optional<std::size_t> k;
  double mean_set_loss = 0.0;
  double mean_res = 0.0;
  double mean_set_size = 0.0;
  double violation_rate = 0.0;   // fraction of splits whose test set loss exceeds epsilon
  double abstention_rate = 0.0;
  std::size_t res_undefined = 0;  // summed over splits
  std::size_t splits = 0;
};

struct SplitRow {
  double epsilon = 0.0;
  std::size_t split = 0;
  bool abstained = false;
  double set_loss = 0.0;
  double set_size = 0.0;
  double res = 0.0;
  LambdaConfig lambda_hat;
};

struct EfficiencyRow {
  std::size_t k = 0;
  double kcg_set_size = 0.0;
  double kcg_res = 0.0;
  double ccg_epsilon = 0.0;
  double ccg_set_size = 0.0;
  double ccg_res = 0.0;
};

struct RiskCurvesResult {
  std::vector<CurvePoint> ccg;  // configured epsilons, ascending
  std::vector<CurvePoint> ccg_matching;  // configured plus matching epsilons, ascending
  std::vector<CurvePoint> kcg;
  std::vector<EfficiencyRow> efficiency;
  std::vector<SplitRow> splits;
  std::vector<EvalRecord> records;
};

// CCG over `splits` random splits with `n_cal` calibration pairs each (0 means
// every non-test pair). Abstaining splits count each test pair as a loss with
// an empty set.
CurvePoint ccg_curve_point(const ConformalData& data, const ExperimentConfig& cfg, std::uint64_t seed, double epsilon,
                           std::size_t splits, std::size_t n_cal = 0, std::vector<SplitRow>* split_rows = nullptr,
                           std::vector<EvalRecord>* records = nullptr, const Dataset* dataset = nullptr);
CurvePoint kcg_curve_point(const ConformalData& data, const ExperimentConfig& cfg, std::uint64_t seed, std::size_t k,
                           std::size_t splits);

RiskCurvesResult run_riskcurves(const Workspace& ws, const ConformalData& data);

struct CalibSizeRow {
  std::size_t n_cal = 0;
  CurvePoint point;
};

std::vector<CalibSizeRow> run_calibsize(const Workspace& ws, const ConformalData& data);

struct SimQualityRow {
  int fidelity = 2;
  double cg_mae_throughput = 0.0;
  double cg_mae_delay = 0.0;
  double cg_preferred_fraction = 0.0;
  CurvePoint ccg;
  bool oracle_exact = false;
};

// Trains one posterior per twin fidelity on the same dataset. CG preference is
// 1 when only CG's point report is admissible, 0.5 on a tie with IG.
std::vector<SimQualityRow> run_simquality(const ExperimentConfig& cfg, std::uint64_t seed,
                                          std::vector<EvalRecord>* records = nullptr);

inline constexpr const char* kRiskCurvesHeader = "method,epsilon,mean_set_loss,mean_res,mean_set_size";

// Runs a named experiment, writing CSV/JSONL results and manifest.json under
// out_dir. Throws UsageError for an unknown name.
nlohmann::json run_experiment(const std::string& name, const ExperimentConfig& cfg, std::uint64_t seed,
                              const std::filesystem::path& out_dir);

// generate-data: records.jsonl, hidden.jsonl, pilot_records.jsonl, pilot_hidden.jsonl.
nlohmann::json generate_data(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir);
// train-posterior: posterior.json and training_loss.csv.
nlohmann::json train_posterior_files(const ExperimentConfig& cfg, std::uint64_t seed,
                                     const std::filesystem::path& out_dir);
// calibrate: calibration.json at calibrate_epsilon on the non-test split 0 pairs.
nlohmann::json calibrate_files(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir);

void to_json(nlohmann::json& j, const EvalRecord& r);
void from_json(const nlohmann::json& j, EvalRecord& r);

}  // namespace ccg
