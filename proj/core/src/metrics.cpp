#include "ccg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ccg/errors.hpp"

namespace ccg {
namespace {

void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("series lengths differ");
  if (a.empty()) throw InvalidArgument("series are empty");
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<double>(a.size());
  if (a.size() < 2) return std::nullopt;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace

double crossing_threshold(Kpi kpi) { return kpi == Kpi::Throughput ? 5.0 : 15.0; }

std::vector<double> cell_series(const KpiSeries& kpis, Kpi kpi) {
  const auto& rows = kpi == Kpi::Throughput ? kpis.throughput_mbps : kpis.delay_ms;
  std::vector<double> out(static_cast<std::size_t>(kpis.windows()), 0.0);
  for (const auto& row : rows)
    for (std::size_t w = 0; w < out.size(); ++w) out[w] += row[w];
  for (double& v : out) v /= static_cast<double>(std::max(1, kpis.ues()));
  return out;
}

std::pair<std::vector<double>, std::vector<double>> align(std::vector<double> a, std::vector<double> b) {
  const auto n = std::min(a.size(), b.size());
  a.resize(n);
  b.resize(n);
  return {std::move(a), std::move(b)};
}

double mae(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double crosscorr_peak(std::span<const double> a, std::span<const double> b, std::size_t max_lag) {
  require_same_length(a, b);
  if (a.size() < 2) throw InvalidArgument("cross-correlation needs at least two samples");
  if (is_constant(a) || is_constant(b)) throw UndefinedCorrelation("constant series has no correlation");
  const auto n = static_cast<std::ptrdiff_t>(a.size());
  const auto lag_limit = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(max_lag), n - 2);
  double best = -std::numeric_limits<double>::infinity();
  for (std::ptrdiff_t lag = -lag_limit; lag <= lag_limit; ++lag) {
    // b is shifted by `lag` samples relative to a.
    const std::size_t a0 = lag >= 0 ? 0 : static_cast<std::size_t>(-lag);
    const std::size_t b0 = lag >= 0 ? static_cast<std::size_t>(lag) : 0;
    const std::size_t len = static_cast<std::size_t>(n - std::abs(lag));
    if (const auto r = pearson(a.subspan(a0, len), b.subspan(b0, len))) best = std::max(best, *r);
  }
  if (!std::isfinite(best)) throw UndefinedCorrelation("no lag has a defined correlation");
  return best;
}

double crossing_level_error(std::span<const double> a, std::span<const double> b, double threshold) {
  require_same_length(a, b);
  const auto frac = [threshold](std::span<const double> v) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double x) { return x > threshold; })) /
           static_cast<double>(v.size());
  };
  return std::abs(frac(a) - frac(b));
}

std::optional<double> relative_excess_samples(std::size_t k_stop, std::optional<std::size_t> k_star) {
  if (!k_star) return std::nullopt;
  if (*k_star == 0 || k_stop < *k_star) throw InvalidArgument("need 1 <= k_star <= k_stop");
  return (static_cast<double>(k_stop) - static_cast<double>(*k_star)) / static_cast<double>(*k_star);
}

}  // namespace ccg
