#pragma once
// Series comparison metrics for the evaluation harness.

#include <optional>
#include <span>
#include <vector>

#include "ccg/envsim.hpp"

namespace ccg {

enum class Kpi { Throughput, Delay };

// Crossing thresholds: 5 Mbps for throughput, 15 ms for delay.
double crossing_threshold(Kpi kpi);

// Mean over UEs per window.
std::vector<double> cell_series(const KpiSeries& kpis, Kpi kpi);

// Truncates both series to their common length.
std::pair<std::vector<double>, std::vector<double>> align(std::vector<double> a, std::vector<double> b);

// Throws InvalidArgument on a length mismatch or empty input.
double mae(std::span<const double> a, std::span<const double> b);

// Max Pearson correlation over lags in [-max_lag, max_lag]. Throws
// UndefinedCorrelation when a series is constant or no lag is defined.
double crosscorr_peak(std::span<const double> a, std::span<const double> b, std::size_t max_lag);

// |frac(a > threshold) - frac(b > threshold)|.
double crossing_level_error(std::span<const double> a, std::span<const double> b, double threshold);

// (k_stop - k_star) / k_star; nullopt when no admissible candidate appeared.
std::optional<double> relative_excess_samples(std::size_t k_stop, std::optional<std::size_t> k_star);

}  // namespace ccg
