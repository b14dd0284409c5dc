#include <algorithm>
#include <cmath>
#include <set>

#include "ccg/errors.hpp"
#include "ccg/experiments.hpp"
#include "experiments_detail.hpp"

namespace ccg {
namespace {

std::vector<const CalibrationItem*> pointers(const std::vector<CalibrationItem>& items) {
  std::vector<const CalibrationItem*> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(&it);
  return out;
}

std::vector<CalibrationItem> prepare_items(const Workspace& ws, const Dataset& ds, const Abductor& abductor,
                                           std::uint64_t which, std::vector<CounterfactualOutcome>* point) {
  std::vector<CalibrationItem> items(ds.records.size());
  if (point) point->assign(ds.records.size(), {});
  detail::parallel_for(ds.records.size(), [&](std::size_t i) {
    const auto& r = ds.records[i];
    CgCandidateStream stream(ws.pipeline, r.episode, r.x_prime, abductor,
                             derive_seed(ws.seed, {detail::kSeedCandidates, which, i}));
    items[i] = prepare_item(stream, r.truth.report, ws.config.k_max, ws.config.admission);
    if (point) (*point)[i] = stream.outcome(0);
  });
  return items;
}

// Accumulates per-split test summaries into a curve point.
struct CurveAccumulator {
  double loss = 0.0, size = 0.0, res_sum = 0.0;
  std::size_t res_defined = 0, res_undefined = 0, violations = 0, abstentions = 0, splits = 0;

  void add(const RiskEstimate& est, std::optional<double> epsilon) {
    loss += est.risk;
    size += est.mean_size;
    const std::size_t defined = est.n - est.res_undefined;
    res_sum += est.mean_res * static_cast<double>(defined);
    res_defined += defined;
    res_undefined += est.res_undefined;
    if (epsilon && est.risk > *epsilon) ++violations;
    ++splits;
  }
  void add_abstention(std::size_t n_test, double epsilon) {
    loss += 1.0;
    res_undefined += n_test;
    ++abstentions;
    if (1.0 > epsilon) ++violations;
    ++splits;
  }
  CurvePoint finish(std::string method, std::optional<double> epsilon, std::optional<std::size_t> k) const {
    CurvePoint p;
    p.method = std::move(method);
    p.epsilon = epsilon;
    p.k = k;
    const auto s = static_cast<double>(splits);
    p.mean_set_loss = loss / s;
    p.mean_set_size = size / s;
    p.mean_res = res_defined ? res_sum / static_cast<double>(res_defined) : 0.0;
    p.violation_rate = static_cast<double>(violations) / s;
    p.abstention_rate = static_cast<double>(abstentions) / s;
    p.res_undefined = res_undefined;
    p.splits = splits;
    return p;
  }
};

std::vector<std::size_t> test_part(const std::vector<std::size_t>& perm, std::size_t test_size) {
  return {perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test_size)};
}

EvalRecord set_record(const DatasetRecord& r, const std::string& method, const SetOutcome& o) {
  EvalRecord rec;
  rec.record_id = r.id;
  rec.method = method;
  rec.set_loss = o.loss;
  rec.set_size = o.size;
  rec.k_stop = o.k_stop;
  rec.k_star = o.k_star;
  rec.res = o.res();
  return rec;
}

}  // namespace

ConformalData build_conformal_data(const Workspace& ws, const Abductor& abductor) {
  ConformalData data;
  data.items = prepare_items(ws, ws.dataset, abductor, 0, &data.point);
  data.pilot = prepare_items(ws, ws.pilot, abductor, 1, nullptr);
  const auto& cfg = ws.config;
  data.grid = make_lambda_grid(pointers(data.pilot), cfg.calibrate_epsilon, cfg.delta, cfg.fwer, cfg.k_max);
  data.table = evaluate_grid(data.grid.configs, pointers(data.items), cfg.k_max);
  return data;
}

CurvePoint ccg_curve_point(const ConformalData& data, const ExperimentConfig& cfg, std::uint64_t seed, double epsilon,
                           std::size_t splits, std::size_t n_cal, std::vector<SplitRow>* split_rows,
                           std::vector<EvalRecord>* records, const Dataset* dataset) {
  const std::size_t n = data.items.size();
  if (cfg.test_size >= n) throw InvalidArgument("test split leaves no calibration data");
  if (n_cal == 0) n_cal = n - cfg.test_size;
  if (n_cal + cfg.test_size > n) throw InvalidArgument("calibration size exceeds the available pairs");
  LambdaGrid grid = data.grid;
  grid.epsilon = epsilon;
  grid.delta = cfg.delta;
  grid.method = cfg.fwer;

  CurveAccumulator acc;
  for (std::size_t s = 0; s < splits; ++s) {
    const auto perm = split_permutation(n, seed, s);
    const auto test = test_part(perm, cfg.test_size);
    const std::vector<std::size_t> cal(perm.begin() + static_cast<std::ptrdiff_t>(cfg.test_size),
                                       perm.begin() + static_cast<std::ptrdiff_t>(cfg.test_size + n_cal));
    const auto result = calibrate(grid, data.table, cal);
    SplitRow row;
    row.epsilon = epsilon;
    row.split = s;
    row.abstained = result.outcome.abstained;
    row.lambda_hat = result.outcome.lambda_hat;
    if (result.outcome.abstained) {
      acc.add_abstention(test.size(), epsilon);
      row.set_loss = 1.0;
    } else {
      const auto& outcomes = data.table[*result.outcome.chosen];
      const auto est = summarize_row(outcomes, test);
      acc.add(est, epsilon);
      row.set_loss = est.risk;
      row.set_size = est.mean_size;
      row.res = est.mean_res;
    }
    if (split_rows) split_rows->push_back(row);
    if (records && dataset && s == 0) {
      for (std::size_t i : test) {
        SetOutcome o;
        if (!result.outcome.abstained) o = data.table[*result.outcome.chosen][i];
        EvalRecord rec = set_record(dataset->records[i], "CCG", o);
        rec.epsilon = epsilon;
        rec.split = s;
        records->push_back(std::move(rec));
      }
    }
  }
  return acc.finish("CCG", epsilon, std::nullopt);
}

CurvePoint kcg_curve_point(const ConformalData& data, const ExperimentConfig& cfg, std::uint64_t seed, std::size_t k,
                           std::size_t splits) {
  std::vector<SetOutcome> all;
  all.reserve(data.items.size());
  for (const auto& item : data.items) all.push_back(evaluate_k_cg(k, item));
  CurveAccumulator acc;
  for (std::size_t s = 0; s < splits; ++s) {
    const auto test = test_part(split_permutation(data.items.size(), seed, s), cfg.test_size);
    acc.add(summarize_row(all, test), std::nullopt);
  }
  return acc.finish("k-CG", std::nullopt, k);
}

RiskCurvesResult run_riskcurves(const Workspace& ws, const ConformalData& data) {
  const auto& cfg = ws.config;
  RiskCurvesResult out;
  std::vector<double> eps = cfg.epsilons;
  std::sort(eps.begin(), eps.end());
  for (double e : eps)
    out.ccg.push_back(ccg_curve_point(data, cfg, ws.seed, e, cfg.splits, 0, &out.splits, &out.records, &ws.dataset));

  std::set<double> all(eps.begin(), eps.end());
  all.insert(cfg.matching_epsilons.begin(), cfg.matching_epsilons.end());
  for (double e : all) {
    if (std::binary_search(eps.begin(), eps.end(), e)) {
      out.ccg_matching.push_back(*std::find_if(out.ccg.begin(), out.ccg.end(),
                                               [e](const CurvePoint& p) { return *p.epsilon == e; }));
    } else {
      out.ccg_matching.push_back(ccg_curve_point(data, cfg, ws.seed, e, cfg.splits));
    }
  }

  const auto test0 = test_part(split_permutation(data.items.size(), ws.seed, 0), cfg.test_size);
  for (std::size_t k : cfg.k_values) {
    out.kcg.push_back(kcg_curve_point(data, cfg, ws.seed, k, cfg.splits));
    for (std::size_t i : test0) {
      EvalRecord rec = set_record(ws.dataset.records[i], "k-CG", evaluate_k_cg(k, data.items[i]));
      rec.k = k;
      rec.split = 0;
      out.records.push_back(std::move(rec));
    }
  }

  for (const auto& kp : out.kcg) {
    const CurvePoint* best = nullptr;
    for (const auto& cp : out.ccg_matching)
      if (!best || std::abs(cp.mean_set_size - kp.mean_set_size) < std::abs(best->mean_set_size - kp.mean_set_size))
        best = &cp;
    EfficiencyRow row;
    row.k = *kp.k;
    row.kcg_set_size = kp.mean_set_size;
    row.kcg_res = kp.mean_res;
    if (best) {
      row.ccg_epsilon = *best->epsilon;
      row.ccg_set_size = best->mean_set_size;
      row.ccg_res = best->mean_res;
    }
    out.efficiency.push_back(row);
  }
  return out;
}

std::vector<CalibSizeRow> run_calibsize(const Workspace& ws, const ConformalData& data) {
  const auto& cfg = ws.config;
  std::vector<CalibSizeRow> rows;
  for (std::size_t n : cfg.calibsize_n)
    rows.push_back({n, ccg_curve_point(data, cfg, ws.seed, cfg.calibsize_epsilon, cfg.calibsize_splits, n)});
  return rows;
}

std::vector<SimQualityRow> run_simquality(const ExperimentConfig& cfg, std::uint64_t seed,
                                          std::vector<EvalRecord>* records) {
  Workspace ws = make_workspace(cfg, seed, kDefaultTwinFidelity);
  const auto& ds = ws.dataset;
  const auto test = test_part(split_permutation(ds.records.size(), seed, 0), cfg.test_size);

  // IG does not depend on the twin.
  std::vector<char> ig_admissible(ds.records.size(), 0);
  detail::parallel_for(test.size(), [&](std::size_t t) {
    const std::size_t i = test[t];
    Rng rng = make_rng(seed, {detail::kSeedMethods, i, 1});
    const auto ig = run_ig(ws.pipeline, ds.records[i].x_prime, rng);
    ig_admissible[i] = admission(ig.report, ds.records[i].truth.report, cfg.admission);
  });

  std::vector<SimQualityRow> rows;
  for (int q : cfg.fidelities) {
    const Fidelity fid = fidelity_from_int(q);
    ws.pipeline.twin = fid;
    if (cfg.abduction == "amortized" && cfg.posterior_path.empty()) ws.posterior = train_posterior(cfg, seed, fid);
    const auto abductor = make_abductor(ws);
    const ConformalData data = build_conformal_data(ws, *abductor);

    SimQualityRow row;
    row.fidelity = q;
    double preferred = 0.0;
    for (std::size_t i : test) {
      EvalRecord rec;
      rec.record_id = ds.records[i].id;
      rec.method = "CG";
      rec.fidelity = q;
      detail::fill_series_metrics(rec, data.point[i].kpis, ds.records[i].truth.kpis, cfg.max_lag);
      row.cg_mae_throughput += *rec.mae_throughput;
      row.cg_mae_delay += *rec.mae_delay;
      const bool cg_ok = data.items[i].admissible.front();
      preferred += cg_ok == static_cast<bool>(ig_admissible[i]) ? 0.5 : cg_ok ? 1.0 : 0.0;
      if (records) records->push_back(std::move(rec));
    }
    const auto n = static_cast<double>(test.size());
    row.cg_mae_throughput /= n;
    row.cg_mae_delay /= n;
    row.cg_preferred_fraction = preferred / n;
    row.ccg = ccg_curve_point(data, cfg, seed, cfg.simquality_epsilon, cfg.splits);

    row.oracle_exact = true;
    for (std::size_t i = 0; i < ds.records.size() && row.oracle_exact; ++i) {
      const auto& ep = ds.records[i].episode;
      row.oracle_exact = run_environment(ep.action, ds.hidden[i].noise(), fid) == ep.kpis;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ccg
