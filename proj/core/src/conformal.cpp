#include "ccg/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccg/errors.hpp"

namespace ccg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json real_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double real_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw ParseError("expected a number or +/-inf", s);
  }
  return j.get<double>();
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw InvalidArgument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const auto i = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1) + 0.5));
  return v[std::min(i, v.size() - 1)];
}

std::vector<double> unique_sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

const ScoredReport& FixedCandidateStream::at(std::size_t k) {
  if (k >= candidates_.size()) throw InvalidArgument("candidate index beyond the fixed stream");
  return candidates_[k];
}

CgCandidateStream::CgCandidateStream(const PipelineConfig& cfg, const Episode& t, const PromptSpec& x_prime,
                                     const Abductor& abductor, std::uint64_t base_seed)
    : cfg_(&cfg), t_(&t), x_prime_(x_prime), abductor_(&abductor), base_seed_(base_seed) {}

void CgCandidateStream::fill(std::size_t k) {
  while (outcomes_.size() <= k) {
    Rng rng = make_rng(base_seed_, {tag(Stream::kCandidate), outcomes_.size()});
    auto out = run_cg(*cfg_, *t_, x_prime_, *abductor_, rng);
    const double q = quality_score(cfg_->policy, x_prime_, out);
    scored_.push_back({out.report, q});
    outcomes_.push_back(std::move(out));
  }
}

const ScoredReport& CgCandidateStream::at(std::size_t k) {
  fill(k);
  return scored_[k];
}

const CounterfactualOutcome& CgCandidateStream::outcome(std::size_t k) {
  fill(k);
  return outcomes_[k];
}

CandidateSet build_candidate_set(CandidateStream& stream, const LambdaConfig& lambda, std::size_t k_max) {
  if (k_max == 0) throw InvalidArgument("k_max must be at least 1");
  CandidateSet set;
  std::vector<TokenSequence> reports;
  for (std::size_t k = 1; k <= k_max; ++k) {
    const ScoredReport* c = nullptr;
    try {
      c = &stream.at(k - 1);
    } catch (const std::exception& e) {
      throw GenerationAborted(e.what(), std::move(set));
    }
    CandidateStep step{k, c->quality, similarity_to_set(reports, c->report), false};
    step.accepted = step.quality >= lambda.quality_min && step.similarity <= lambda.similarity_max;
    if (step.accepted) {
      set.members.push_back(*c);
      set.member_k.push_back(k);
      reports.push_back(c->report);
    }
    set.trace.push_back(step);
    set.k_stop = k;
    std::vector<double> qualities;
    for (const auto& m : set.members) qualities.push_back(m.quality);
    if (confidence(qualities) >= lambda.confidence_stop) {
      set.stopped_by = StopReason::Threshold;
      return set;
    }
  }
  set.stopped_by = StopReason::KMax;
  return set;
}

CandidateSet k_cg_baseline(CandidateStream& stream, std::size_t k) {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  CandidateSet set;
  std::vector<TokenSequence> reports;
  for (std::size_t i = 1; i <= k; ++i) {
    const ScoredReport* c = nullptr;
    try {
      c = &stream.at(i - 1);
    } catch (const std::exception& e) {
      throw GenerationAborted(e.what(), std::move(set));
    }
    set.trace.push_back({i, c->quality, similarity_to_set(reports, c->report), true});
    set.members.push_back(*c);
    set.member_k.push_back(i);
    reports.push_back(c->report);
    set.k_stop = i;
  }
  set.stopped_by = StopReason::KMax;
  return set;
}

int set_loss(const CandidateSet& set, const TokenSequence& truth, const AdmissionRule& rule) {
  for (const auto& m : set.members)
    if (admission(m.report, truth, rule)) return 0;
  return 1;
}

CalibrationItem prepare_item(CandidateStream& stream, const TokenSequence& truth, std::size_t k_max,
                             const AdmissionRule& rule) {
  CalibrationItem item;
  const auto truth_facts = extract_facts(truth);
  for (std::size_t k = 0; k < k_max; ++k) {
    const auto& c = stream.at(k);
    item.candidates.push_back(c);
    item.admissible.push_back(admission(extract_facts(c.report), truth_facts, rule));
  }
  return item;
}

std::optional<double> SetOutcome::res() const {
  if (!k_star) return std::nullopt;
  return (static_cast<double>(k_stop) - static_cast<double>(*k_star)) / static_cast<double>(*k_star);
}

SetOutcome evaluate_set(const CandidateSet& set, const CalibrationItem& item) {
  if (set.k_stop > item.admissible.size()) throw InvalidArgument("set drew more candidates than the item caches");
  SetOutcome out;
  out.size = set.size();
  out.k_stop = set.k_stop;
  for (std::size_t k : set.member_k)
    if (item.admissible[k - 1]) out.loss = 0;
  for (std::size_t k = 1; k <= set.k_stop; ++k) {
    if (item.admissible[k - 1]) {
      out.k_star = k;
      break;
    }
  }
  return out;
}

SetOutcome evaluate(const LambdaConfig& lambda, const CalibrationItem& item, std::size_t k_max) {
  FixedCandidateStream stream(item.candidates);
  return evaluate_set(build_candidate_set(stream, lambda, k_max), item);
}

SetOutcome evaluate_k_cg(std::size_t k, const CalibrationItem& item) {
  FixedCandidateStream stream(item.candidates);
  return evaluate_set(k_cg_baseline(stream, k), item);
}

RiskEstimate summarize_outcomes(const std::vector<SetOutcome>& outcomes) {
  if (outcomes.empty()) throw InvalidArgument("no outcomes to summarize");
  RiskEstimate r;
  r.n = outcomes.size();
  double size = 0.0, res = 0.0;
  std::size_t res_n = 0;
  for (const auto& o : outcomes) {
    r.failures += static_cast<std::size_t>(o.loss);
    size += static_cast<double>(o.size);
    if (const auto v = o.res()) {
      res += *v;
      ++res_n;
    } else {
      ++r.res_undefined;
    }
  }
  r.risk = static_cast<double>(r.failures) / static_cast<double>(r.n);
  r.mean_size = size / static_cast<double>(r.n);
  r.mean_res = res_n == 0 ? 0.0 : res / static_cast<double>(res_n);
  return r;
}

RiskEstimate empirical_risk(const LambdaConfig& lambda, const std::vector<const CalibrationItem*>& items,
                            std::size_t k_max) {
  if (items.empty()) throw InvalidArgument("calibration data is empty");
  std::vector<SetOutcome> outcomes;
  outcomes.reserve(items.size());
  for (const auto* item : items) outcomes.push_back(evaluate(lambda, *item, k_max));
  return summarize_outcomes(outcomes);
}

double binomial_pvalue(std::size_t failures, std::size_t n, double epsilon) {
  if (failures > n) throw InvalidArgument("failure count exceeds sample size");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
  if (failures == n) return 1.0;
  // log pmf(k+1) = log pmf(k) + log((n-k)/(k+1)) + log(eps/(1-eps)), summed in log space.
  const double log_ratio = std::log(epsilon) - std::log1p(-epsilon);
  double log_pmf = static_cast<double>(n) * std::log1p(-epsilon);
  double max_log = log_pmf;
  std::vector<double> terms{log_pmf};
  for (std::size_t k = 0; k < failures; ++k) {
    log_pmf += std::log(static_cast<double>(n - k)) - std::log(static_cast<double>(k + 1)) + log_ratio;
    terms.push_back(log_pmf);
    max_log = std::max(max_log, log_pmf);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max_log);
  return std::min(1.0, std::exp(max_log) * sum);
}

std::vector<std::size_t> fwer_valid_set(const std::vector<CalibrationRecord>& records, double delta, FwerMethod method,
                                        const std::vector<std::size_t>& fst_order) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  std::vector<std::size_t> valid;
  if (method == FwerMethod::Bonferroni) {
    const double threshold = delta / static_cast<double>(std::max<std::size_t>(records.size(), 1));
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i].p_value < threshold) valid.push_back(i);
    return valid;
  }
  if (fst_order.empty() && !records.empty()) throw InvalidArgument("fixed-sequence testing needs an order");
  for (std::size_t i : fst_order) {
    if (i >= records.size()) throw InvalidArgument("fixed-sequence order index out of range");
    if (records[i].p_value >= delta) break;
    valid.push_back(i);
  }
  std::sort(valid.begin(), valid.end());
  return valid;
}

CalibrationOutcome select_configuration(const std::vector<std::size_t>& valid,
                                        const std::vector<CalibrationRecord>& records, double gamma) {
  CalibrationOutcome out;
  out.valid = valid;
  if (valid.empty()) return out;
  std::size_t best = valid.front();
  for (std::size_t i : valid) {
    const auto& e = records.at(i).estimate;
    out.selection_metric.push_back(e.mean_size + gamma * e.mean_res);
  }
  double best_metric = out.selection_metric.front();
  for (std::size_t j = 1; j < valid.size(); ++j) {
    const double m = out.selection_metric[j];
    const double size = records[valid[j]].estimate.mean_size;
    if (m < best_metric || (m == best_metric && size < records[best].estimate.mean_size)) {
      best = valid[j];
      best_metric = m;
    }
  }
  out.abstained = false;
  out.chosen = best;
  out.lambda_hat = records[best].lambda;
  return out;
}

namespace {

CalibrationResult finish_calibration(const LambdaGrid& grid, std::vector<RiskEstimate> estimates) {
  CalibrationResult result;
  result.grid = grid;
  for (std::size_t c = 0; c < grid.configs.size(); ++c) {
    CalibrationRecord r;
    r.lambda = grid.configs[c];
    r.estimate = estimates[c];
    r.p_value = binomial_pvalue(r.estimate.failures, r.estimate.n, grid.epsilon);
    result.records.push_back(r);
  }
  const auto valid = fwer_valid_set(result.records, grid.delta, grid.method, grid.fst_order);
  result.outcome = select_configuration(valid, result.records);
  return result;
}

}  // namespace

CalibrationResult calibrate(const LambdaGrid& grid, const std::vector<const CalibrationItem*>& items,
                            std::size_t k_max) {
  if (grid.configs.empty()) throw InvalidArgument("lambda grid is empty");
  std::vector<RiskEstimate> estimates;
  for (const auto& lambda : grid.configs) estimates.push_back(empirical_risk(lambda, items, k_max));
  return finish_calibration(grid, std::move(estimates));
}

OutcomeTable evaluate_grid(const std::vector<LambdaConfig>& configs, const std::vector<const CalibrationItem*>& items,
                           std::size_t k_max) {
  OutcomeTable table(configs.size());
  for (std::size_t c = 0; c < configs.size(); ++c) {
    table[c].reserve(items.size());
    for (const auto* item : items) table[c].push_back(evaluate(configs[c], *item, k_max));
  }
  return table;
}

RiskEstimate summarize_row(const std::vector<SetOutcome>& row, const std::vector<std::size_t>& subset) {
  std::vector<SetOutcome> picked;
  picked.reserve(subset.size());
  for (std::size_t i : subset) picked.push_back(row.at(i));
  return summarize_outcomes(picked);
}

CalibrationResult calibrate(const LambdaGrid& grid, const OutcomeTable& table, const std::vector<std::size_t>& subset) {
  if (grid.configs.empty()) throw InvalidArgument("lambda grid is empty");
  if (table.size() != grid.configs.size()) throw InvalidArgument("outcome table does not match the grid");
  if (subset.empty()) throw InvalidArgument("calibration data is empty");
  std::vector<RiskEstimate> estimates;
  for (const auto& row : table) estimates.push_back(summarize_row(row, subset));
  return finish_calibration(grid, std::move(estimates));
}

LambdaGrid make_lambda_grid(const std::vector<const CalibrationItem*>& pilot, double epsilon, double delta,
                            FwerMethod method, std::size_t k_max) {
  if (pilot.empty()) throw InvalidArgument("pilot data is empty");
  std::vector<double> qualities, similarities;
  for (const auto* item : pilot) {
    std::vector<TokenSequence> seen;
    for (const auto& c : item->candidates) {
      qualities.push_back(c.quality);
      if (!seen.empty()) similarities.push_back(similarity_to_set(seen, c.report));
      seen.push_back(c.report);
    }
  }
  std::vector<double> l1{-kInf}, l2{1.0}, l3{-kInf, kInf};
  for (double q : {0.1, 0.25}) l1.push_back(quantile(qualities, q));
  if (!similarities.empty())
    for (double q : {0.25, 0.5, 0.75}) l2.push_back(std::min(1.0, quantile(similarities, q)));
  for (double q : {0.25, 0.5, 0.75, 0.9}) l3.push_back(quantile(qualities, q));

  LambdaGrid grid;
  grid.epsilon = epsilon;
  grid.delta = delta;
  grid.method = method;
  for (double a : unique_sorted(l1))
    for (double b : unique_sorted(l2))
      for (double c : unique_sorted(l3)) grid.configs.push_back({a, b, c});

  std::vector<RiskEstimate> pilot_estimates;
  for (const auto& lambda : grid.configs) pilot_estimates.push_back(empirical_risk(lambda, pilot, k_max));
  grid.fst_order.resize(grid.configs.size());
  std::iota(grid.fst_order.begin(), grid.fst_order.end(), std::size_t{0});
  std::stable_sort(grid.fst_order.begin(), grid.fst_order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = pilot_estimates[a];
    const auto& y = pilot_estimates[b];
    if (x.risk != y.risk) return x.risk < y.risk;
    return x.mean_size < y.mean_size;
  });
  return grid;
}

std::string to_string(FwerMethod m) { return m == FwerMethod::Bonferroni ? "bonferroni" : "fst"; }

FwerMethod fwer_method_from_string(const std::string& s) {
  if (s == "bonferroni") return FwerMethod::Bonferroni;
  if (s == "fst") return FwerMethod::FixedSequence;
  throw ParseError("unknown FWER method", s);
}

void to_json(nlohmann::json& j, const LambdaConfig& l) {
  j = {{"lambda1", real_to_json(l.quality_min)},
       {"lambda2", real_to_json(l.similarity_max)},
       {"lambda3", real_to_json(l.confidence_stop)}};
}

void from_json(const nlohmann::json& j, LambdaConfig& l) {
  l.quality_min = real_from_json(j.at("lambda1"));
  l.similarity_max = real_from_json(j.at("lambda2"));
  l.confidence_stop = real_from_json(j.at("lambda3"));
}

void to_json(nlohmann::json& j, const ScoredReport& s) {
  j = {{"report", s.report}, {"quality", real_to_json(s.quality)}};
}

void from_json(const nlohmann::json& j, ScoredReport& s) {
  j.at("report").get_to(s.report);
  s.quality = real_from_json(j.at("quality"));
}

void to_json(nlohmann::json& j, const CandidateSet& c) {
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < c.members.size(); ++i) {
    members.push_back({{"k", c.member_k[i]},
                       {"quality", real_to_json(c.members[i].quality)},
                       {"report", c.members[i].report},
                       {"report_text", render_report_text(c.members[i].report)}});
  }
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& s : c.trace)
    trace.push_back({{"k", s.k},
                     {"quality", real_to_json(s.quality)},
                     {"similarity", real_to_json(s.similarity)},
                     {"accepted", s.accepted}});
  j = {{"members", members},
       {"k_stop", c.k_stop},
       {"trace", trace},
       {"stopped_by", c.stopped_by == StopReason::Threshold ? "threshold" : "k_max"}};
}

void to_json(nlohmann::json& j, const RiskEstimate& r) {
  j = {{"risk", r.risk},           {"failures", r.failures}, {"n", r.n},
       {"mean_size", r.mean_size}, {"mean_res", r.mean_res}, {"res_undefined", r.res_undefined}};
}

void from_json(const nlohmann::json& j, RiskEstimate& r) {
  j.at("risk").get_to(r.risk);
  j.at("failures").get_to(r.failures);
  j.at("n").get_to(r.n);
  j.at("mean_size").get_to(r.mean_size);
  j.at("mean_res").get_to(r.mean_res);
  j.at("res_undefined").get_to(r.res_undefined);
}

void to_json(nlohmann::json& j, const CalibrationRecord& r) {
  j = {{"lambda", r.lambda}, {"estimate", r.estimate}, {"p_value", r.p_value}};
}

void from_json(const nlohmann::json& j, CalibrationRecord& r) {
  j.at("lambda").get_to(r.lambda);
  j.at("estimate").get_to(r.estimate);
  j.at("p_value").get_to(r.p_value);
}

void to_json(nlohmann::json& j, const CalibrationOutcome& o) {
  j = {{"abstained", o.abstained}, {"valid", o.valid}, {"selection_metric", o.selection_metric}};
  j["chosen"] = o.chosen ? nlohmann::json(*o.chosen) : nlohmann::json(nullptr);
  j["lambda_hat"] = o.abstained ? nlohmann::json(nullptr) : nlohmann::json(o.lambda_hat);
}

void from_json(const nlohmann::json& j, CalibrationOutcome& o) {
  j.at("abstained").get_to(o.abstained);
  j.at("valid").get_to(o.valid);
  j.at("selection_metric").get_to(o.selection_metric);
  o.chosen.reset();
  if (!j.at("chosen").is_null()) o.chosen = j.at("chosen").get<std::size_t>();
  if (!j.at("lambda_hat").is_null()) j.at("lambda_hat").get_to(o.lambda_hat);
}

void to_json(nlohmann::json& j, const LambdaGrid& g) {
  j = {{"configs", g.configs},
       {"epsilon", g.epsilon},
       {"delta", g.delta},
       {"method", to_string(g.method)},
       {"fst_order", g.fst_order}};
}

void from_json(const nlohmann::json& j, LambdaGrid& g) {
  j.at("configs").get_to(g.configs);
  j.at("epsilon").get_to(g.epsilon);
  j.at("delta").get_to(g.delta);
  g.method = fwer_method_from_string(j.at("method").get<std::string>());
  j.at("fst_order").get_to(g.fst_order);
}

void to_json(nlohmann::json& j, const CalibrationResult& r) {
  j = {{"version", 1}, {"grid", r.grid}, {"records", r.records}, {"outcome", r.outcome}};
}

void from_json(const nlohmann::json& j, CalibrationResult& r) {
  if (j.at("version").get<int>() != 1) throw ParseError("unsupported calibration version", j.at("version").dump());
  j.at("grid").get_to(r.grid);
  j.at("records").get_to(r.records);
  j.at("outcome").get_to(r.outcome);
}

}  // namespace ccg
