#include "ccg/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "ccg/errors.hpp"
#include "experiments_detail.hpp"

namespace ccg {
namespace detail {

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw InvalidState("cannot format number");
  return std::string(buf, end);
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::ios_base::failure("cannot write " + path.string());
  return os;
}

}  // namespace detail

namespace {

using detail::format_double;

template <class T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) out += format_double(values[i]);
    else out += std::to_string(values[i]);
  }
  return out;
}

std::size_t to_size(long long v, const std::string& key) {
  if (v < 0) throw ParseError("value must be non-negative", key);
  return static_cast<std::size_t>(v);
}

void validate(const ExperimentConfig& c) {
  if (c.dataset_size == 0 || c.test_size == 0 || c.test_size >= c.dataset_size)
    throw InvalidArgument("need 0 < test_size < dataset_size");
  if (c.pilot_size == 0) throw InvalidArgument("pilot_size must be positive");
  if (c.k_max == 0) throw InvalidArgument("k_max must be positive");
  if (!(c.delta > 0.0 && c.delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  for (const auto* list : {&c.epsilons, &c.matching_epsilons})
    for (double e : *list)
      if (!(e > 0.0 && e < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
  for (double e : {c.calibsize_epsilon, c.simquality_epsilon, c.calibrate_epsilon})
    if (!(e > 0.0 && e < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
  for (auto k : c.k_values)
    if (k == 0 || k > c.k_max) throw InvalidArgument("k_values must lie in [1, k_max]");
  for (auto n : c.calibsize_n)
    if (n == 0 || n + c.test_size > c.dataset_size) throw InvalidArgument("calibsize_n exceeds the calibration pool");
  for (int q : c.fidelities) fidelity_from_int(q);
  if (c.abduction != "amortized" && c.abduction != "abc" && c.abduction != "prior")
    throw InvalidArgument("abduction must be amortized, abc or prior");
  if (c.splits == 0 || c.calibsize_splits == 0) throw InvalidArgument("split counts must be positive");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
  kv.require_known({"version",
                    "dataset_size",
                    "test_size",
                    "pilot_size",
                    "training_triplets",
                    "train.optimizer",
                    "train.epochs",
                    "train.lr",
                    "train.batch_size",
                    "train.momentum",
                    "abduction",
                    "abc_candidates",
                    "k_max",
                    "delta",
                    "fwer",
                    "admission.bucket_tolerance",
                    "admission.relative_tolerance",
                    "admission.trend_steps",
                    "epsilons",
                    "matching_epsilons",
                    "splits",
                    "k_values",
                    "calibsize_epsilon",
                    "calibsize_n",
                    "calibsize_splits",
                    "fidelities",
                    "simquality_epsilon",
                    "max_lag",
                    "calibrate_epsilon",
                    "posterior_path",
                    "dataset_dir"});
  ExperimentConfig c;
  const auto size = [&kv](const std::string& key, std::size_t fallback) {
    return to_size(kv.get_int(key, static_cast<long long>(fallback)), key);
  };
  const auto sizes = [&kv](const std::string& key, const std::vector<std::size_t>& fallback) {
    std::vector<long long> dflt(fallback.begin(), fallback.end());
    std::vector<std::size_t> out;
    for (long long v : kv.get_ints(key, dflt)) out.push_back(to_size(v, key));
    return out;
  };
  c.dataset_size = size("dataset_size", c.dataset_size);
  c.test_size = size("test_size", c.test_size);
  c.pilot_size = size("pilot_size", c.pilot_size);
  c.training_triplets = size("training_triplets", c.training_triplets);

  const std::string opt = kv.get_string("train.optimizer", "adam");
  if (opt == "adam") c.train.optimizer = Optimizer::Adam;
  else if (opt == "sgd") c.train.optimizer = Optimizer::SgdMomentum;
  else throw ParseError("unknown optimizer", opt);
  c.train.epochs = size("train.epochs", c.train.epochs);
  c.train.lr = kv.get_double("train.lr", c.train.lr);
  c.train.batch_size = size("train.batch_size", c.train.batch_size);
  c.train.momentum = kv.get_double("train.momentum", c.train.momentum);

  c.abduction = kv.get_string("abduction", c.abduction);
  c.abc_candidates = size("abc_candidates", c.abc_candidates);
  c.k_max = size("k_max", c.k_max);
  c.delta = kv.get_double("delta", c.delta);
  c.fwer = fwer_method_from_string(kv.get_string("fwer", to_string(c.fwer)));
  c.admission.bucket_tolerance = kv.get_int("admission.bucket_tolerance", c.admission.bucket_tolerance);
  c.admission.relative_tolerance = kv.get_double("admission.relative_tolerance", c.admission.relative_tolerance);
  c.admission.trend_steps = static_cast<int>(kv.get_int("admission.trend_steps", c.admission.trend_steps));

  c.epsilons = kv.get_doubles("epsilons", c.epsilons);
  c.matching_epsilons = kv.get_doubles("matching_epsilons", c.matching_epsilons);
  c.splits = size("splits", c.splits);
  c.k_values = sizes("k_values", c.k_values);
  c.calibsize_epsilon = kv.get_double("calibsize_epsilon", c.calibsize_epsilon);
  c.calibsize_n = sizes("calibsize_n", c.calibsize_n);
  c.calibsize_splits = size("calibsize_splits", c.calibsize_splits);
  c.fidelities.clear();
  for (long long q : kv.get_ints("fidelities", {1, 2, 3, 4})) c.fidelities.push_back(static_cast<int>(q));
  c.simquality_epsilon = kv.get_double("simquality_epsilon", c.simquality_epsilon);
  c.max_lag = size("max_lag", c.max_lag);
  c.calibrate_epsilon = kv.get_double("calibrate_epsilon", c.calibrate_epsilon);
  c.posterior_path = kv.get_string("posterior_path", "");
  c.dataset_dir = kv.get_string("dataset_dir", "");
  validate(c);
  return c;
}

KvConfig ExperimentConfig::to_kv() const {
  KvConfig kv;
  kv.set("version", std::to_string(kKvConfigVersion));
  kv.set("dataset_size", std::to_string(dataset_size));
  kv.set("test_size", std::to_string(test_size));
  kv.set("pilot_size", std::to_string(pilot_size));
  kv.set("training_triplets", std::to_string(training_triplets));
  kv.set("train.optimizer", train.optimizer == Optimizer::Adam ? "adam" : "sgd");
  kv.set("train.epochs", std::to_string(train.epochs));
  kv.set("train.lr", format_double(train.lr));
  kv.set("train.batch_size", std::to_string(train.batch_size));
  kv.set("train.momentum", format_double(train.momentum));
  kv.set("abduction", abduction);
  kv.set("abc_candidates", std::to_string(abc_candidates));
  kv.set("k_max", std::to_string(k_max));
  kv.set("delta", format_double(delta));
  kv.set("fwer", to_string(fwer));
  kv.set("admission.bucket_tolerance", std::to_string(admission.bucket_tolerance));
  kv.set("admission.relative_tolerance", format_double(admission.relative_tolerance));
  kv.set("admission.trend_steps", std::to_string(admission.trend_steps));
  kv.set("epsilons", join(epsilons));
  kv.set("matching_epsilons", join(matching_epsilons));
  kv.set("splits", std::to_string(splits));
  kv.set("k_values", join(k_values));
  kv.set("calibsize_epsilon", format_double(calibsize_epsilon));
  kv.set("calibsize_n", join(calibsize_n));
  kv.set("calibsize_splits", std::to_string(calibsize_splits));
  kv.set("fidelities", join(fidelities));
  kv.set("simquality_epsilon", format_double(simquality_epsilon));
  kv.set("max_lag", std::to_string(max_lag));
  kv.set("calibrate_epsilon", format_double(calibrate_epsilon));
  if (!posterior_path.empty()) kv.set("posterior_path", posterior_path);
  if (!dataset_dir.empty()) kv.set("dataset_dir", dataset_dir);
  return kv;
}

Dataset load_dataset(const std::filesystem::path& dir, const std::string& prefix) {
  const auto records_path = dir / (prefix + "records.jsonl");
  const auto hidden_path = dir / (prefix + "hidden.jsonl");
  std::ifstream records(records_path), hidden(hidden_path);
  if (!records || !hidden) throw std::ios_base::failure("cannot read dataset in " + dir.string());
  return read_dataset(records, hidden);
}

std::shared_ptr<const PosteriorModel> train_posterior(const ExperimentConfig& cfg, std::uint64_t seed, Fidelity twin,
                                                      TrainReport* report) {
  Rng rng = make_rng(seed, {detail::kSeedTraining});
  const auto triplets = generate_training_triplets(cfg.training_triplets, rng, twin);
  TrainOptions options = cfg.train;
  options.seed = derive_seed(seed, {detail::kSeedTraining, 1});
  return std::make_shared<const PosteriorModel>(train_amortized_posterior(triplets, options, report));
}

Workspace make_workspace(const ExperimentConfig& cfg, std::uint64_t seed, Fidelity twin) {
  validate(cfg);
  Workspace ws;
  ws.config = cfg;
  ws.seed = seed;
  ws.pipeline.twin = twin;
  if (!cfg.dataset_dir.empty()) {
    ws.dataset = load_dataset(cfg.dataset_dir);
    ws.pilot = load_dataset(cfg.dataset_dir, "pilot_");
    if (ws.dataset.records.size() < cfg.dataset_size || ws.pilot.records.size() < cfg.pilot_size)
      throw InvalidArgument("stored dataset is smaller than the configured size");
    ws.dataset.records.resize(cfg.dataset_size);
    ws.dataset.hidden.resize(cfg.dataset_size);
    ws.pilot.records.resize(cfg.pilot_size);
    ws.pilot.hidden.resize(cfg.pilot_size);
  } else {
    ws.dataset = generate_dataset(ws.pipeline, cfg.dataset_size, derive_seed(seed, {detail::kSeedDataset}));
    ws.pilot = generate_dataset(ws.pipeline, cfg.pilot_size, derive_seed(seed, {detail::kSeedPilot}));
  }
  if (cfg.abduction == "amortized") {
    if (!cfg.posterior_path.empty()) {
      std::ifstream in(cfg.posterior_path);
      if (!in) throw std::ios_base::failure("cannot read " + cfg.posterior_path);
      ws.posterior = std::make_shared<const PosteriorModel>(PosteriorModel::from_json(nlohmann::json::parse(in)));
    } else {
      ws.posterior = train_posterior(cfg, seed, twin);
    }
  }
  return ws;
}

std::unique_ptr<Abductor> make_abductor(const Workspace& ws) {
  const auto& name = ws.config.abduction;
  if (name == "amortized") {
    if (!ws.posterior) throw InvalidState("workspace has no posterior");
    return std::make_unique<AmortizedAbductor>(ws.posterior);
  }
  if (name == "abc") {
    AbcConfig abc;
    abc.candidates = ws.config.abc_candidates;
    abc.fidelity = ws.pipeline.twin;
    return std::make_unique<AbcAbductor>(abc);
  }
  if (name == "prior") return std::make_unique<PriorAbductor>();
  throw InvalidArgument("unknown abduction method: " + name);
}

std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t seed, std::size_t split) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, {detail::kSeedSplits, split});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// ---- EvalRecord I/O -------------------------------------------------------

namespace {

template <class T>
void put(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <class T>
void get(const nlohmann::json& j, const char* key, std::optional<T>& v) {
  if (j.contains(key) && !j.at(key).is_null()) v = j.at(key).get<T>();
}

template <class T>
std::string cell(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) return format_double(*v);
  else return std::to_string(*v);
}

constexpr const char* kRecordCsvHeader =
    "record_id,method,epsilon,split,k,fidelity,mae_throughput,mae_delay,xcorr_throughput,xcorr_delay,"
    "crossing_throughput,crossing_delay,set_loss,set_size,k_stop,k_star,res,res_undefined";

}  // namespace

void to_json(nlohmann::json& j, const EvalRecord& r) {
  j = nlohmann::json{{"record_id", r.record_id}, {"method", r.method}};
  put(j, "epsilon", r.epsilon);
  put(j, "split", r.split);
  put(j, "k", r.k);
  put(j, "fidelity", r.fidelity);
  put(j, "mae_throughput", r.mae_throughput);
  put(j, "mae_delay", r.mae_delay);
  put(j, "xcorr_throughput", r.xcorr_throughput);
  put(j, "xcorr_delay", r.xcorr_delay);
  put(j, "crossing_throughput", r.crossing_throughput);
  put(j, "crossing_delay", r.crossing_delay);
  put(j, "set_loss", r.set_loss);
  put(j, "set_size", r.set_size);
  put(j, "k_stop", r.k_stop);
  put(j, "k_star", r.k_star);
  put(j, "res", r.res);
  if (r.res_flagged()) j["res_undefined"] = true;
}

void from_json(const nlohmann::json& j, EvalRecord& r) {
  r = EvalRecord{};
  j.at("record_id").get_to(r.record_id);
  j.at("method").get_to(r.method);
  get(j, "epsilon", r.epsilon);
  get(j, "split", r.split);
  get(j, "k", r.k);
  get(j, "fidelity", r.fidelity);
  get(j, "mae_throughput", r.mae_throughput);
  get(j, "mae_delay", r.mae_delay);
  get(j, "xcorr_throughput", r.xcorr_throughput);
  get(j, "xcorr_delay", r.xcorr_delay);
  get(j, "crossing_throughput", r.crossing_throughput);
  get(j, "crossing_delay", r.crossing_delay);
  get(j, "set_loss", r.set_loss);
  get(j, "set_size", r.set_size);
  get(j, "k_stop", r.k_stop);
  get(j, "k_star", r.k_star);
  get(j, "res", r.res);
}

std::size_t export_results(const std::vector<EvalRecord>& records, const std::filesystem::path& stem) {
  auto jsonl = detail::open_output(std::filesystem::path(stem).concat(".jsonl"));
  auto csv = detail::open_output(std::filesystem::path(stem).concat(".csv"));
  csv << kRecordCsvHeader << '\n';
  std::size_t flagged = 0;
  for (const auto& r : records) {
    jsonl << nlohmann::json(r).dump() << '\n';
    const bool flag = r.res_flagged();
    flagged += flag;
    csv << r.record_id << ',' << r.method << ',' << cell(r.epsilon) << ',' << cell(r.split) << ',' << cell(r.k) << ','
        << cell(r.fidelity) << ',' << cell(r.mae_throughput) << ',' << cell(r.mae_delay) << ','
        << cell(r.xcorr_throughput) << ',' << cell(r.xcorr_delay) << ',' << cell(r.crossing_throughput) << ','
        << cell(r.crossing_delay) << ',' << cell(r.set_loss) << ',' << cell(r.set_size) << ',' << cell(r.k_stop)
        << ',' << cell(r.k_star) << ',' << cell(r.res) << ',' << (r.k_stop ? (flag ? "1" : "0") : "") << '\n';
  }
  if (!jsonl || !csv) throw std::ios_base::failure("write failed for " + stem.string());
  return flagged;
}

std::vector<EvalRecord> read_results_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot read " + path.string());
  std::vector<EvalRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<EvalRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line.substr(0, 80));
    }
  }
  return out;
}

// ---- table1 ---------------------------------------------------------------

const MethodKpiSummary& Table1Result::at(const std::string& method, Kpi kpi) const {
  for (const auto& s : summary)
    if (s.method == method && s.kpi == kpi) return s;
  throw InvalidArgument("no summary for " + method);
}

void detail::fill_series_metrics(EvalRecord& rec, const KpiSeries& estimate, const KpiSeries& truth,
                                 std::size_t max_lag) {
  for (Kpi kpi : {Kpi::Throughput, Kpi::Delay}) {
    const auto [a, b] = align(cell_series(estimate, kpi), cell_series(truth, kpi));
    const bool tput = kpi == Kpi::Throughput;
    (tput ? rec.mae_throughput : rec.mae_delay) = mae(a, b);
    (tput ? rec.crossing_throughput : rec.crossing_delay) = crossing_level_error(a, b, crossing_threshold(kpi));
    try {
      (tput ? rec.xcorr_throughput : rec.xcorr_delay) = crosscorr_peak(a, b, max_lag);
    } catch (const UndefinedCorrelation&) {
    }
  }
}

Table1Result run_table1(const Workspace& ws) {
  const auto& cfg = ws.config;
  const auto abductor = make_abductor(ws);
  const auto perm = split_permutation(ws.dataset.records.size(), ws.seed, 0);
  const std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cfg.test_size));
  const char* methods[] = {"CG", "IG", "SIG"};

  std::vector<EvalRecord> rows(test.size() * 3);
  detail::parallel_for(test.size(), [&](std::size_t t) {
    const std::size_t i = test[t];
    const auto& r = ws.dataset.records[i];
    Rng rng = make_rng(ws.seed, {detail::kSeedMethods, i});
    const CounterfactualOutcome outs[] = {run_cg(ws.pipeline, r.episode, r.x_prime, *abductor, rng),
                                          run_ig(ws.pipeline, r.x_prime, rng), run_sig(ws.pipeline, r.x_prime, rng)};
    for (std::size_t m = 0; m < 3; ++m) {
      EvalRecord& rec = rows[t * 3 + m];
      rec.record_id = r.id;
      rec.method = methods[m];
      detail::fill_series_metrics(rec, outs[m].kpis, r.truth.kpis, cfg.max_lag);
    }
  });

  Table1Result result;
  result.records = std::move(rows);
  for (const char* m : methods) {
    for (Kpi kpi : {Kpi::Throughput, Kpi::Delay}) {
      MethodKpiSummary s;
      s.method = m;
      s.kpi = kpi;
      const bool tput = kpi == Kpi::Throughput;
      for (const auto& rec : result.records) {
        if (rec.method != m) continue;
        ++s.n;
        s.mean_mae += *(tput ? rec.mae_throughput : rec.mae_delay);
        s.mean_crossing += *(tput ? rec.crossing_throughput : rec.crossing_delay);
        const auto& xc = tput ? rec.xcorr_throughput : rec.xcorr_delay;
        if (xc) s.mean_xcorr += *xc;
        else ++s.xcorr_undefined;
      }
      const auto n = static_cast<double>(s.n);
      s.mean_mae /= n;
      s.mean_crossing /= n;
      s.mean_xcorr /= n;
      result.summary.push_back(s);
    }
  }
  return result;
}

}  // namespace ccg
