// Acceptance suite: one PASS/FAIL line per primary criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include "ccg/experiments.hpp"
#include "ccg/metrics.hpp"

using namespace ccg;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Verdict()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!v.pass) ++failures;
  std::printf("%s %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str(), s);
  std::fflush(stdout);
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

Verdict gumbel_marginals() {
  Rng dist_rng = make_rng(77);
  double worst = 0.0;
  bool pass = true;
  for (int d = 0; d < 20; ++d) {
    const std::size_t v = 2 + dist_rng() % 29;
    TokenDistribution dist;
    for (std::size_t i = 0; i < v; ++i) dist.probs.push_back(0.02 + uniform_open01(dist_rng));
    const double total = std::accumulate(dist.probs.begin(), dist.probs.end(), 0.0);
    for (double& p : dist.probs) p /= total;
    std::vector<double> counts(v, 0.0);
    Rng rng = make_rng(78, {static_cast<std::uint64_t>(d)});
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[gumbel_max_select(dist, sample_gumbel_vector(rng, v))];
    double chi2 = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
      const double e = n * dist.probs[i];
      chi2 += (counts[i] - e) * (counts[i] - e) / e;
    }
    const double q = boost::math::quantile(boost::math::chi_squared_distribution<double>(double(v - 1)), 0.999);
    worst = std::max(worst, chi2 / q);
    pass = pass && chi2 < q;
  }
  return {pass, fmt("20 distributions, 1e5 draws each, worst chi2 / q0.999 = %.3f", worst)};
}

Verdict consistency(const Workspace& ws) {
  const auto abductor = make_abductor(ws);
  std::size_t exact = 0, actions = 0;
  const auto& recs = ws.dataset.records;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& e = recs[i].episode;
    const auto t = true_counterfactual(ws.pipeline, e, ws.dataset.hidden[i], e.prompt);
    exact += t.action_tokens == e.action_tokens && t.kpis == e.kpis && t.report == e.report;
    Rng rng = make_rng(ws.seed, {900, i});
    actions += run_cg(ws.pipeline, e, e.prompt, *abductor, rng).action_tokens == e.action_tokens;
  }
  return {exact == recs.size() && actions == recs.size(),
          fmt("X'=X replay reproduces A, Z and Y in %zu/%zu records; CG replays A in %zu/%zu", exact, recs.size(),
              actions, recs.size())};
}

double exact_tail(unsigned n, unsigned failures_allowed, unsigned a, unsigned b) {
  using u128 = unsigned __int128;
  u128 num = 0, den = 1;
  for (unsigned i = 0; i < n; ++i) den *= b;
  for (unsigned i = 0; i <= failures_allowed; ++i) {
    u128 c = 1;
    for (unsigned j = 0; j < i; ++j) c = c * (n - j) / (j + 1);
    for (unsigned j = 0; j < i; ++j) c *= a;
    for (unsigned j = 0; j < n - i; ++j) c *= b - a;
    num += c;
  }
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

Verdict binomial_oracle() {
  double worst = 0.0;
  const std::pair<unsigned, unsigned> eps[] = {{1, 10}, {3, 10}, {1, 2}};
  for (const auto& [a, b] : eps)
    for (unsigned n = 1; n <= 20; ++n)
      for (unsigned f = 0; f <= n; ++f)
        worst = std::max(worst, std::abs(binomial_pvalue(f, n, double(a) / b) - exact_tail(n, f, a, b)));
  const double spot = binomial_pvalue(5, 10, 0.5);
  return {worst < 1e-12 && std::abs(spot - 0.623046875) < 1e-12,
          fmt("max |error| = %.2e over n<=20; p(5, 10, 0.5) = %.9f", worst, spot)};
}

Verdict rouge_oracle() {
  using V = std::vector<std::size_t>;
  const double f1 = rouge_l(V{1, 3}, V{1, 2, 3});
  const double f2 = rouge_l(V{1, 2, 3}, V{1, 2, 3});
  const double f3 = rouge_l(V{1, 2}, V{3, 4});
  const double f4 = rouge_l(V{3, 2, 1}, V{1, 2, 3});
  return {f1 == 0.8 && f2 == 1.0 && f3 == 0.0 && f4 == 1.0 / 3.0,
          fmt("F((a,c),(a,b,c)) = %g, identical = %g, disjoint = %g, reversed = %g", f1, f2, f3, f4)};
}

Verdict table1(const Workspace& ws) {
  const auto t = run_table1(ws);
  bool pass = true;
  std::string detail;
  for (Kpi kpi : {Kpi::Throughput, Kpi::Delay}) {
    const auto& cg = t.at("CG", kpi);
    const auto& ig = t.at("IG", kpi);
    const auto& sig = t.at("SIG", kpi);
    const bool mae = cg.mean_mae < ig.mean_mae && ig.mean_mae < sig.mean_mae;
    const bool xc = cg.mean_xcorr > ig.mean_xcorr && ig.mean_xcorr > sig.mean_xcorr;
    const bool cr = cg.mean_crossing < ig.mean_crossing && ig.mean_crossing < sig.mean_crossing;
    pass = pass && mae && xc && cr;
    detail += fmt("%s MAE %.3g/%.3g/%.3g%s xcorr %.3f/%.3f/%.3f%s crossing %.3f/%.3f/%.3f%s; ",
                  kpi == Kpi::Throughput ? "throughput" : "delay", cg.mean_mae, ig.mean_mae, sig.mean_mae,
                  mae ? "" : " (order violated)", cg.mean_xcorr, ig.mean_xcorr, sig.mean_xcorr,
                  xc ? "" : " (order violated)", cg.mean_crossing, ig.mean_crossing, sig.mean_crossing,
                  cr ? "" : " (order violated)");
  }
  return {pass, detail + fmt("CG/IG/SIG over %zu records", t.summary.front().n)};
}

Verdict risk_control(const RiskCurvesResult& rc, const ExperimentConfig& cfg) {
  bool pass = true;
  std::string detail;
  for (const auto& p : rc.ccg) {
    const double bound = cfg.delta + 3.0 * std::sqrt(cfg.delta * (1 - cfg.delta) / static_cast<double>(p.splits));
    const bool ok = p.mean_set_loss <= *p.epsilon && p.violation_rate <= bound;
    pass = pass && ok;
    detail += fmt("eps %.1f loss %.3f viol %.2f%s; ", *p.epsilon, p.mean_set_loss, p.violation_rate, ok ? "" : " !");
  }
  return {pass, detail + fmt("%zu splits", rc.ccg.front().splits)};
}

Verdict efficiency(const RiskCurvesResult& rc) {
  bool pass = true;
  std::string detail;
  for (const auto& row : rc.efficiency) {
    if (row.k < 2) continue;
    const bool ok = row.ccg_res < row.kcg_res;
    pass = pass && ok;
    detail += fmt("k=%zu size %.2f RES %.2f vs CCG(eps %.2f) size %.2f RES %.2f%s; ", row.k, row.kcg_set_size,
                  row.kcg_res, row.ccg_epsilon, row.ccg_set_size, row.ccg_res, ok ? "" : " !");
  }
  return {pass, detail};
}

Verdict calibsize(const std::vector<CalibSizeRow>& rows) {
  std::size_t inversions = 0;
  bool in_band = true;
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& p = rows[i].point;
    if (i > 0 && p.mean_res > rows[i - 1].point.mean_res) ++inversions;
    const bool band = p.mean_set_loss >= 0.35 && p.mean_set_loss <= 0.5;
    in_band = in_band && band;
    detail += fmt("n=%zu loss %.3f RES %.2f%s; ", rows[i].n_cal, p.mean_set_loss, p.mean_res, band ? "" : " !");
  }
  return {inversions <= 1 && in_band, detail + fmt("%zu RES inversions", inversions)};
}

Verdict simquality(const std::vector<SimQualityRow>& rows) {
  bool mae = true, res = true;
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i > 0) {
      mae = mae && r.cg_mae_throughput <= rows[i - 1].cg_mae_throughput && r.cg_mae_delay <= rows[i - 1].cg_mae_delay;
      res = res && r.ccg.mean_res <= rows[i - 1].ccg.mean_res;
    }
    detail += fmt("Q%d MAE %.4f/%.3f RES %.2f; ", r.fidelity, r.cg_mae_throughput, r.cg_mae_delay, r.ccg.mean_res);
  }
  const bool oracle = !rows.empty() && rows.back().fidelity == 4 && rows.back().oracle_exact;
  return {mae && res && oracle, detail + fmt("MAE nonincreasing %s, RES nonincreasing %s, Q4 oracle exact %s",
                                             mae ? "yes" : "no", res ? "yes" : "no", oracle ? "yes" : "no")};
}

Verdict abduction_recovery(const Workspace& ws) {
  const AmortizedAbductor posterior(ws.posterior);
  AbcConfig abc_cfg;
  abc_cfg.candidates = ws.config.abc_candidates;
  const AbcAbductor abc(abc_cfg);
  const PriorAbductor prior;
  const Abductor* methods[] = {&posterior, &abc, &prior};
  double err[3][2] = {};
  const int cases = 50;
  Rng rng = make_rng(ws.seed, {901});
  for (int c = 0; c < cases; ++c) {
    PromptSlots slots = sample_prompt_slots(rng);
    auto action = decode_with_trace(ws.pipeline.policy, PolicyContext::for_action(slots), nullptr, rng);
    const ActionConfig a = action_from_tokens(action.sequence);
    const auto z = run_environment(a, sample_exogenous_prior(rng), ws.pipeline.twin);
    for (int m = 0; m < 3; ++m) {
      const auto zh = run_environment(a, methods[m]->abduct(a, z, rng), ws.pipeline.twin);
      err[m][0] += mae(cell_series(zh, Kpi::Throughput), cell_series(z, Kpi::Throughput)) / cases;
      err[m][1] += mae(cell_series(zh, Kpi::Delay), cell_series(z, Kpi::Delay)) / cases;
    }
  }
  const bool beats = err[0][0] < err[2][0] && err[0][1] < err[2][1] && err[1][0] < err[2][0] && err[1][1] < err[2][1];

  PosteriorModel model(kFeatureDim, kTargetDim, 17);
  std::vector<SummaryFeatures> x;
  std::vector<std::vector<double>> y, mask;
  Rng trng = make_rng(ws.seed, {902});
  for (const auto& t : generate_training_triplets(4, trng, ws.pipeline.twin)) {
    x.push_back(summarize_pair(t.action, t.kpis));
    for (double& v : x.back().values) v = std::tanh(v / 50.0);
    auto target = abduction_target(t.noise);
    for (double& v : target) v = v / 100.0 - 1.0;
    y.push_back(target);
    mask.push_back(abduction_mask(t.action));
  }
  std::vector<double> grad;
  model.loss_and_gradient(x, y, mask, grad);
  auto params = model.parameters();
  double worst = 0.0;
  const double h = 1e-5;
  for (int checked = 0; checked < 20;) {
    const std::size_t i = trng() % params.size();
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
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(std::abs(fd), std::abs(grad[i])));
    ++checked;
  }
  return {beats && worst < 1e-4,
          fmt("MAE throughput/delay over %d cases: posterior %.3f/%.2f, ABC %.3f/%.2f, prior %.3f/%.2f; "
              "gradient max rel err %.2e",
              cases, err[0][0], err[0][1], err[1][0], err[1][1], err[2][0], err[2][1], worst)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string config_path;
  std::uint64_t seed = 1;
  app.add_option("--config", config_path, "Versioned key-value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Base seed");
  CLI11_PARSE(app, argc, argv);

  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = ExperimentConfig::from_kv(KvConfig::load(config_path));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  report("gumbel_marginals", gumbel_marginals);
  report("binomial_oracle", binomial_oracle);
  report("rouge_l_oracle", rouge_oracle);

  const auto setup_start = std::chrono::steady_clock::now();
  const Workspace ws = make_workspace(cfg, seed);
  const auto abductor = make_abductor(ws);
  std::printf("setup: dataset and posterior ready (%.1f s)\n",
              std::chrono::duration<double>(std::chrono::steady_clock::now() - setup_start).count());
  report("counterfactual_consistency", [&] { return consistency(ws); });
  report("abduction_recovery", [&] { return abduction_recovery(ws); });
  report("table1_ordering", [&] { return table1(ws); });

  std::optional<ConformalData> data;
  std::optional<RiskCurvesResult> rc;
  report("riskcurves_risk_control", [&] {
    data = build_conformal_data(ws, *abductor);
    rc = run_riskcurves(ws, *data);
    return risk_control(*rc, cfg);
  });
  report("riskcurves_efficiency", [&] { return rc ? efficiency(*rc) : Verdict{false, "risk curves unavailable"}; });
  report("calibsize", [&] {
    return data ? calibsize(run_calibsize(ws, *data)) : Verdict{false, "conformal data unavailable"};
  });
  report("simquality", [&] { return simquality(run_simquality(cfg, seed)); });

  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
