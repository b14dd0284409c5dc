#include "ccg/abduction.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include <Eigen/Dense>

#include "ccg/errors.hpp"

namespace ccg {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kModelJsonVersion = 1;
constexpr double kHalfLog2Pi = 0.91893853320467274178;

std::vector<double> series_stats(const std::vector<double>& s) {
  const double n = static_cast<double>(s.size());
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double var = 0.0;
  for (double x : s) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

std::vector<double> column_std(const std::vector<std::vector<double>>& rows, const std::vector<double>& mean) {
  std::vector<double> sd(mean.size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < sd.size(); ++j) sd[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
  for (auto& s : sd) {
    s = std::sqrt(s / static_cast<double>(rows.size()));
    if (!(s > 1e-9)) s = 1.0;
  }
  return sd;
}

std::vector<double> column_mean(const std::vector<std::vector<double>>& rows) {
  std::vector<double> m(rows.front().size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += r[j];
  for (auto& x : m) x /= static_cast<double>(rows.size());
  return m;
}

VectorXd to_eigen(const std::vector<double>& v) { return Eigen::Map<const VectorXd>(v.data(), v.size()); }

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

SummaryFeatures summarize_pair(const ActionConfig& action, const KpiSeries& kpis) {
  action.validate();
  if (kpis.ues() != action.num_ues || kpis.windows() != action.windows() ||
      kpis.delay_ms.size() != kpis.throughput_mbps.size()) {
    throw InvalidArgument("KPI series shape does not match the action");
  }
  SummaryFeatures f;
  f.values.assign(kFeatureDim, 0.0);
  const int windows = kpis.windows();
  const int per_second = static_cast<int>(std::lround(1.0 / kpis.sample_period_s));
  for (int u = 0; u < kpis.ues(); ++u) {
    if (static_cast<int>(kpis.delay_ms[u].size()) != windows) throw InvalidArgument("ragged KPI series");
    const auto t = series_stats(kpis.throughput_mbps[u]);
    const auto d = series_stats(kpis.delay_ms[u]);
    double* stats = &f.values[u * kSummaryStatsPerUe];
    stats[0] = t[0];
    stats[1] = t[1];
    stats[2] = d[0];
    stats[3] = d[1];
    for (std::size_t s = 0; s < kSeriesSeconds; ++s) {
      const int w0 = static_cast<int>(s) * per_second;
      const int w1 = std::min(windows, w0 + per_second);
      if (w0 >= w1) break;
      double tp = 0.0, dl = 0.0;
      for (int w = w0; w < w1; ++w) {
        tp += kpis.throughput_mbps[u][w];
        dl += std::log1p(kpis.delay_ms[u][w]);
      }
      f.values[kMaxUes * kSummaryStatsPerUe + u * kSeriesSeconds + s] = tp / (w1 - w0);
      f.values[kMaxUes * (kSummaryStatsPerUe + kSeriesSeconds) + u * kSeriesSeconds + s] = dl / (w1 - w0);
    }
  }
  double* cfg = &f.values[kFeatureDim - kConfigFeatures];
  cfg[0] = action.scheduler == Scheduler::RR ? 1.0 : 0.0;
  cfg[1] = action.scheduler == Scheduler::PF ? 1.0 : 0.0;
  cfg[2] = static_cast<double>(action.num_ues - kMinUes) / (kMaxUes - kMinUes);
  cfg[3] = (action.load_mbps - kMinLoadMbps) / (kMaxLoadMbps - kMinLoadMbps);
  cfg[4] = (action.duration_s - kMinDurationS) / (kMaxDurationS - kMinDurationS);
  return f;
}

ActionConfig sample_uniform_action(Rng& rng) {
  ActionConfig a;
  a.scheduler = rng() % 2 == 0 ? Scheduler::RR : Scheduler::PF;
  a.num_ues = kMinUes + static_cast<int>(rng() % (kMaxUes - kMinUes + 1));
  a.load_mbps = 2.0 + static_cast<double>(rng() % 9);
  a.duration_s = 5.0 + static_cast<double>(rng() % 6);
  return a;
}

std::vector<TrainingTriplet> generate_training_triplets(std::size_t n, Rng& rng, Fidelity fidelity) {
  if (n == 0) throw InvalidArgument("triplet count must be positive");
  std::vector<TrainingTriplet> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TrainingTriplet t;
    t.action = sample_uniform_action(rng);
    t.noise = sample_exogenous_prior(rng);
    t.kpis = run_environment(t.action, t.noise, fidelity);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<double> abduction_target(const ExogenousNoise& noise) { return large_scale_loss_db(noise); }

std::vector<double> abduction_mask(const ActionConfig& action) {
  std::vector<double> m(kTargetDim, 0.0);
  const int last_knot = std::min(kShadowKnots - 1, static_cast<int>(std::ceil(action.duration_s)));
  for (int u = 0; u < action.num_ues; ++u)
    for (int k = 0; k <= last_knot; ++k) m[u * kShadowKnots + k] = 1.0;
  return m;
}

void write_triplets_jsonl(std::ostream& os, const std::vector<TrainingTriplet>& data) {
  for (const auto& t : data) {
    nlohmann::json j{{"action", t.action}, {"kpis", t.kpis}, {"noise", t.noise}};
    os << j.dump() << '\n';
  }
}

std::vector<TrainingTriplet> read_triplets_jsonl(std::istream& is) {
  std::vector<TrainingTriplet> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    TrainingTriplet t;
    j.at("action").get_to(t.action);
    j.at("kpis").get_to(t.kpis);
    j.at("noise").get_to(t.noise);
    out.push_back(std::move(t));
  }
  return out;
}

struct PosteriorModel::Impl {
  std::size_t in = 0, out = 0;
  std::vector<MatrixXd> W;
  std::vector<VectorXd> b;
  VectorXd feature_mean, feature_std, target_mean, target_std;

  struct Grads {
    std::vector<MatrixXd> W;
    std::vector<VectorXd> b;
  };

  MatrixXd standardize_features(const std::vector<SummaryFeatures>& x) const {
    MatrixXd X(in, x.size());
    for (std::size_t c = 0; c < x.size(); ++c) {
      if (x[c].values.size() != in) throw InvalidArgument("feature dimension mismatch");
      X.col(c) = (to_eigen(x[c].values) - feature_mean).cwiseQuotient(feature_std);
    }
    return X;
  }

  MatrixXd standardize_targets(const std::vector<std::vector<double>>& y) const {
    MatrixXd Y(out, y.size());
    for (std::size_t c = 0; c < y.size(); ++c) {
      if (y[c].size() != out) throw InvalidArgument("target dimension mismatch");
      Y.col(c) = (to_eigen(y[c]) - target_mean).cwiseQuotient(target_std);
    }
    return Y;
  }

  static MatrixXd to_matrix(const std::vector<std::vector<double>>& rows, std::size_t dim) {
    MatrixXd M(dim, rows.size());
    for (std::size_t c = 0; c < rows.size(); ++c) {
      if (rows[c].size() != dim) throw InvalidArgument("mask dimension mismatch");
      M.col(c) = to_eigen(rows[c]);
    }
    return M;
  }

  MatrixXd forward(const MatrixXd& X, std::vector<MatrixXd>* acts) const {
    MatrixXd H = X;
    for (std::size_t l = 0; l < W.size(); ++l) {
      if (acts) acts->push_back(H);
      MatrixXd Z = (W[l] * H).colwise() + b[l];
      H = l + 1 < W.size() ? MatrixXd(Z.cwiseMax(0.0)) : Z;
    }
    return H;
  }

  // Standardized inputs and targets; mask entries in {0, 1}.
  double loss_grad(const MatrixXd& X, const MatrixXd& Y, const MatrixXd& M, Grads* g) const {
    std::vector<MatrixXd> acts;
    const MatrixXd O = forward(X, g ? &acts : nullptr);
    const auto B = static_cast<double>(X.cols());
    const auto mu = O.topRows(out);
    const auto s = O.bottomRows(out);
    const MatrixXd r = (Y - mu).cwiseProduct((-s).array().exp().matrix());
    const VectorXd active = M.colwise().sum().transpose().cwiseMax(1.0);
    double total = 0.0;
    for (Eigen::Index c = 0; c < O.cols(); ++c) {
      double sc = 0.0;
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(out); ++j)
        if (M(j, c) != 0.0) sc += 0.5 * r(j, c) * r(j, c) + s(j, c) + kHalfLog2Pi;
      total += sc / active(c);
    }
    if (!g) return total / B;

    MatrixXd dO(2 * out, O.cols());
    for (Eigen::Index c = 0; c < O.cols(); ++c) {
      const double w = 1.0 / (active(c) * B);
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(out); ++j) {
        const double m = M(j, c) * w;
        dO(j, c) = -m * r(j, c) * std::exp(-s(j, c));
        dO(out + j, c) = m * (1.0 - r(j, c) * r(j, c));
      }
    }
    g->W.resize(W.size());
    g->b.resize(W.size());
    MatrixXd delta = dO;
    for (std::size_t l = W.size(); l-- > 0;) {
      g->W[l] = delta * acts[l].transpose();
      g->b[l] = delta.rowwise().sum();
      if (l > 0) delta = (W[l].transpose() * delta).cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
    return total / B;
  }

  std::vector<double> flatten(const std::vector<MatrixXd>& Ws, const std::vector<VectorXd>& bs) const {
    std::vector<double> flat;
    for (std::size_t l = 0; l < Ws.size(); ++l) {
      flat.insert(flat.end(), Ws[l].data(), Ws[l].data() + Ws[l].size());
      flat.insert(flat.end(), bs[l].data(), bs[l].data() + bs[l].size());
    }
    return flat;
  }
};

PosteriorModel::PosteriorModel(std::size_t input_dim, std::size_t target_dim, std::uint64_t seed)
    : impl_(std::make_unique<Impl>()) {
  if (input_dim == 0 || target_dim == 0) throw InvalidArgument("model dimensions must be positive");
  impl_->in = input_dim;
  impl_->out = target_dim;
  const std::size_t dims[] = {input_dim, kHidden, kHidden, kHidden, 2 * target_dim};
  Rng rng = make_rng(seed, {tag(Stream::kTraining), 0x1});
  for (std::size_t l = 0; l < kLayers; ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    MatrixXd W(dims[l + 1], dims[l]);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = (2.0 * uniform_open01(rng) - 1.0) * limit;
    impl_->W.push_back(std::move(W));
    impl_->b.push_back(VectorXd::Zero(static_cast<Eigen::Index>(dims[l + 1])));
  }
  impl_->feature_mean = VectorXd::Zero(input_dim);
  impl_->feature_std = VectorXd::Ones(input_dim);
  impl_->target_mean = VectorXd::Zero(target_dim);
  impl_->target_std = VectorXd::Ones(target_dim);
}

PosteriorModel::~PosteriorModel() = default;
PosteriorModel::PosteriorModel(const PosteriorModel& o) : impl_(std::make_unique<Impl>(*o.impl_)) {}
PosteriorModel& PosteriorModel::operator=(const PosteriorModel& o) {
  if (this != &o) impl_ = std::make_unique<Impl>(*o.impl_);
  return *this;
}
PosteriorModel::PosteriorModel(PosteriorModel&&) noexcept = default;
PosteriorModel& PosteriorModel::operator=(PosteriorModel&&) noexcept = default;

std::size_t PosteriorModel::input_dim() const { return impl_->in; }
std::size_t PosteriorModel::target_dim() const { return impl_->out; }

std::size_t PosteriorModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < impl_->W.size(); ++l)
    n += static_cast<std::size_t>(impl_->W[l].size() + impl_->b[l].size());
  return n;
}

GaussianPrediction PosteriorModel::predict(const SummaryFeatures& features) const {
  const MatrixXd O = impl_->forward(impl_->standardize_features({features}), nullptr);
  GaussianPrediction p;
  p.mean.resize(impl_->out);
  p.log_std.resize(impl_->out);
  for (std::size_t j = 0; j < impl_->out; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    p.mean[j] = impl_->target_mean(jj) + impl_->target_std(jj) * O(jj, 0);
    p.log_std[j] = O(static_cast<Eigen::Index>(impl_->out) + jj, 0) + std::log(impl_->target_std(jj));
  }
  return p;
}

double PosteriorModel::loss(const std::vector<SummaryFeatures>& x, const std::vector<std::vector<double>>& y,
                            const std::vector<std::vector<double>>& mask) const {
  if (x.empty() || x.size() != y.size() || x.size() != mask.size()) throw InvalidArgument("batch size mismatch");
  return impl_->loss_grad(impl_->standardize_features(x), impl_->standardize_targets(y),
                          Impl::to_matrix(mask, impl_->out), nullptr);
}

double PosteriorModel::loss_and_gradient(const std::vector<SummaryFeatures>& x,
                                         const std::vector<std::vector<double>>& y,
                                         const std::vector<std::vector<double>>& mask,
                                         std::vector<double>& grad) const {
  if (x.empty() || x.size() != y.size() || x.size() != mask.size()) throw InvalidArgument("batch size mismatch");
  Impl::Grads g;
  const double l = impl_->loss_grad(impl_->standardize_features(x), impl_->standardize_targets(y),
                                    Impl::to_matrix(mask, impl_->out), &g);
  grad = impl_->flatten(g.W, g.b);
  return l;
}

std::vector<double> PosteriorModel::parameters() const { return impl_->flatten(impl_->W, impl_->b); }

void PosteriorModel::set_parameters(const std::vector<double>& flat) {
  if (flat.size() != parameter_count()) throw InvalidArgument("parameter vector length mismatch");
  std::size_t k = 0;
  for (std::size_t l = 0; l < impl_->W.size(); ++l) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), impl_->W[l].size(), impl_->W[l].data());
    k += static_cast<std::size_t>(impl_->W[l].size());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), impl_->b[l].size(), impl_->b[l].data());
    k += static_cast<std::size_t>(impl_->b[l].size());
  }
}

void PosteriorModel::set_standardization(std::vector<double> feature_mean, std::vector<double> feature_std,
                                         std::vector<double> target_mean, std::vector<double> target_std) {
  if (feature_mean.size() != impl_->in || feature_std.size() != impl_->in || target_mean.size() != impl_->out ||
      target_std.size() != impl_->out) {
    throw InvalidArgument("standardization dimension mismatch");
  }
  impl_->feature_mean = to_eigen(feature_mean);
  impl_->feature_std = to_eigen(feature_std);
  impl_->target_mean = to_eigen(target_mean);
  impl_->target_std = to_eigen(target_std);
}

nlohmann::json PosteriorModel::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < impl_->W.size(); ++l) {
    const auto& W = impl_->W[l];
    layers.push_back({{"rows", W.rows()},
                      {"cols", W.cols()},
                      {"weights", std::vector<double>(W.data(), W.data() + W.size())},
                      {"bias", to_std(impl_->b[l])}});
  }
  return {{"version", kModelJsonVersion},
          {"kind", "diagonal_gaussian_mlp"},
          {"input_dim", impl_->in},
          {"target_dim", impl_->out},
          {"feature_mean", to_std(impl_->feature_mean)},
          {"feature_std", to_std(impl_->feature_std)},
          {"target_mean", to_std(impl_->target_mean)},
          {"target_std", to_std(impl_->target_std)},
          {"layers", layers}};
}

PosteriorModel PosteriorModel::from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kModelJsonVersion) throw ParseError("unsupported model version", j.value("kind", ""));
  PosteriorModel m(j.at("input_dim").get<std::size_t>(), j.at("target_dim").get<std::size_t>(), 0);
  const auto& layers = j.at("layers");
  if (layers.size() != m.impl_->W.size()) throw ParseError("layer count mismatch", std::to_string(layers.size()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& W = m.impl_->W[l];
    const auto w = layers[l].at("weights").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    if (layers[l].at("rows").get<Eigen::Index>() != W.rows() || layers[l].at("cols").get<Eigen::Index>() != W.cols() ||
        w.size() != static_cast<std::size_t>(W.size()) || b.size() != static_cast<std::size_t>(W.rows())) {
      throw ParseError("layer shape mismatch", std::to_string(l));
    }
    std::copy(w.begin(), w.end(), W.data());
    m.impl_->b[l] = to_eigen(b);
  }
  m.set_standardization(j.at("feature_mean").get<std::vector<double>>(), j.at("feature_std").get<std::vector<double>>(),
                        j.at("target_mean").get<std::vector<double>>(), j.at("target_std").get<std::vector<double>>());
  return m;
}

PosteriorModel train_amortized_posterior(const std::vector<TrainingTriplet>& data, const TrainOptions& options,
                                         TrainReport* report) {
  if (data.empty()) throw InvalidArgument("empty training set");
  if (options.batch_size == 0 || options.epochs == 0) throw InvalidArgument("batch size and epochs must be positive");

  std::vector<SummaryFeatures> feats;
  std::vector<std::vector<double>> raw_x, targets, masks;
  for (const auto& t : data) {
    feats.push_back(summarize_pair(t.action, t.kpis));
    raw_x.push_back(feats.back().values);
    targets.push_back(abduction_target(t.noise));
    masks.push_back(abduction_mask(t.action));
  }
  PosteriorModel model(kFeatureDim, kTargetDim, options.seed);
  const auto fm = column_mean(raw_x);
  const auto tm = column_mean(targets);
  model.set_standardization(fm, column_std(raw_x, fm), tm, column_std(targets, tm));

  auto& impl = *model.impl_;
  const MatrixXd X = impl.standardize_features(feats);
  const MatrixXd Y = impl.standardize_targets(targets);
  const MatrixXd M = PosteriorModel::Impl::to_matrix(masks, kTargetDim);

  std::vector<MatrixXd> mW, vW;
  std::vector<VectorXd> mb, vb;
  for (std::size_t l = 0; l < impl.W.size(); ++l) {
    mW.push_back(MatrixXd::Zero(impl.W[l].rows(), impl.W[l].cols()));
    vW.push_back(mW.back());
    mb.push_back(VectorXd::Zero(impl.b[l].size()));
    vb.push_back(mb.back());
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  long step = 0;

  Rng rng = make_rng(options.seed, {tag(Stream::kTraining), 0x2});
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.cols()));
  std::iota(order.begin(), order.end(), 0);
  TrainReport local;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t n = std::min(options.batch_size, order.size() - start);
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(start + n));
      PosteriorModel::Impl::Grads g;
      const double l = impl.loss_grad(X(Eigen::all, idx), Y(Eigen::all, idx), M(Eigen::all, idx), &g);
      if (!std::isfinite(l)) throw TrainingDiverged("non-finite loss in epoch " + std::to_string(epoch));
      epoch_loss += l * static_cast<double>(n);
      ++step;
      for (std::size_t k = 0; k < impl.W.size(); ++k) {
        if (options.optimizer == Optimizer::SgdMomentum) {
          mW[k] = options.momentum * mW[k] - options.lr * g.W[k];
          mb[k] = options.momentum * mb[k] - options.lr * g.b[k];
          impl.W[k] += mW[k];
          impl.b[k] += mb[k];
        } else {
          const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
          const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
          mW[k] = kBeta1 * mW[k] + (1.0 - kBeta1) * g.W[k];
          vW[k] = kBeta2 * vW[k] + (1.0 - kBeta2) * g.W[k].cwiseAbs2();
          mb[k] = kBeta1 * mb[k] + (1.0 - kBeta1) * g.b[k];
          vb[k] = kBeta2 * vb[k] + (1.0 - kBeta2) * g.b[k].cwiseAbs2();
          impl.W[k].array() -= options.lr * (mW[k].array() / c1) / ((vW[k].array() / c2).sqrt() + kAdamEps);
          impl.b[k].array() -= options.lr * (mb[k].array() / c1) / ((vb[k].array() / c2).sqrt() + kAdamEps);
        }
      }
    }
    local.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  if (report) *report = std::move(local);
  return model;
}

ExogenousNoise noise_with_loss(const ExogenousNoise& base, const std::vector<double>& loss_db) {
  if (loss_db.size() != kTargetDim) throw InvalidArgument("loss vector length mismatch");
  const auto d = ue_distances(base.placement_seed);
  ExogenousNoise n = base;
  n.shadow_db.resize(kTargetDim);
  for (int u = 0; u < kMaxUes; ++u) {
    const double pl = path_loss_db(d[u]);
    for (int k = 0; k < kShadowKnots; ++k) n.shadow_db[u * kShadowKnots + k] = loss_db[u * kShadowKnots + k] - pl;
  }
  return n;
}

ExogenousNoise posterior_sample(const PosteriorModel& model, const ActionConfig& action, const KpiSeries& kpis,
                                Rng& rng, const PosteriorSampleOptions& options) {
  const auto pred = model.predict(summarize_pair(action, kpis));
  const ExogenousNoise base = sample_exogenous_prior(rng);
  std::vector<double> loss(pred.mean.size());
  for (std::size_t j = 0; j < loss.size(); ++j)
    loss[j] = pred.mean[j] + options.std_scale * std::exp(pred.log_std[j]) * standard_normal(rng);
  return noise_with_loss(base, loss);
}

double kpi_distance(const KpiSeries& a, const KpiSeries& b, double throughput_scale, double delay_scale) {
  const int ues = std::min(a.ues(), b.ues());
  const int windows = std::min(a.windows(), b.windows());
  if (ues == 0 || windows == 0) throw InvalidArgument("KPI series without overlap");
  double t = 0.0, d = 0.0;
  for (int u = 0; u < ues; ++u) {
    for (int w = 0; w < windows; ++w) {
      t += std::abs(a.throughput_mbps[u][w] - b.throughput_mbps[u][w]);
      d += std::abs(a.delay_ms[u][w] - b.delay_ms[u][w]);
    }
  }
  return (t / throughput_scale + d / delay_scale) / (2.0 * ues * windows);
}

std::size_t abc_select(const ActionConfig& action, const KpiSeries& kpis, const std::vector<ExogenousNoise>& candidates,
                       const AbcConfig& cfg, Rng& rng) {
  if (candidates.empty()) throw InvalidArgument("ABC needs at least one candidate");
  if (!(cfg.temperature_scale > 0.0)) throw InvalidArgument("ABC temperature scale must be positive");
  if (candidates.size() == 1) return 0;

  std::vector<KpiSeries> sims;
  sims.reserve(candidates.size());
  for (const auto& c : candidates) sims.push_back(run_environment(action, c, cfg.fidelity));

  // Per-metric scale: spread of the simulated values across candidates.
  std::vector<double> tp, dl;
  for (const auto& s : sims) {
    for (int u = 0; u < s.ues(); ++u) {
      tp.insert(tp.end(), s.throughput_mbps[u].begin(), s.throughput_mbps[u].end());
      dl.insert(dl.end(), s.delay_ms[u].begin(), s.delay_ms[u].end());
    }
  }
  const auto scale = [](const std::vector<double>& v) {
    const double sd = series_stats(v)[1];
    return sd > 1e-12 ? sd : 1.0;
  };
  const double ts = scale(tp), ds = scale(dl);

  std::vector<double> dist;
  for (const auto& s : sims) dist.push_back(kpi_distance(s, kpis, ts, ds));
  std::vector<double> sorted = dist;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  const double temperature = cfg.temperature_scale * sorted[sorted.size() / 2];
  const double dmin = *std::min_element(dist.begin(), dist.end());
  const auto argmin = static_cast<std::size_t>(std::min_element(dist.begin(), dist.end()) - dist.begin());
  if (!(temperature > 0.0)) return argmin;

  std::vector<double> w(dist.size());
  double total = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) total += w[i] = std::exp(-(dist[i] - dmin) / temperature);
  double u = uniform_open01(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    u -= w[i];
    if (u <= 0.0) return i;
  }
  return argmin;
}

ExogenousNoise abc_posterior_sample(const ActionConfig& action, const KpiSeries& kpis, const AbcConfig& cfg,
                                    Rng& rng) {
  if (cfg.candidates == 0) throw InvalidArgument("ABC needs at least one candidate");
  std::vector<ExogenousNoise> candidates;
  candidates.reserve(cfg.candidates);
  for (std::size_t i = 0; i < cfg.candidates; ++i) candidates.push_back(sample_exogenous_prior(rng));
  return candidates[abc_select(action, kpis, candidates, cfg, rng)];
}

ExogenousNoise AmortizedAbductor::abduct(const ActionConfig& action, const KpiSeries& kpis, Rng& rng) const {
  return posterior_sample(*model_, action, kpis, rng, options_);
}

ExogenousNoise AbcAbductor::abduct(const ActionConfig& action, const KpiSeries& kpis, Rng& rng) const {
  return abc_posterior_sample(action, kpis, cfg_, rng);
}

ExogenousNoise PriorAbductor::abduct(const ActionConfig&, const KpiSeries&, Rng& rng) const {
  return sample_exogenous_prior(rng);
}

}  // namespace ccg
