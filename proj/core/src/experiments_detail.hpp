#pragma once
// Shared between the experiment sources; not installed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "ccg/experiments.hpp"

namespace ccg::detail {

// Seed tags under the experiment base seed.
inline constexpr std::uint64_t kSeedDataset = 1;
inline constexpr std::uint64_t kSeedPilot = 2;
inline constexpr std::uint64_t kSeedTraining = 3;
inline constexpr std::uint64_t kSeedCandidates = 4;
inline constexpr std::uint64_t kSeedSplits = 5;
inline constexpr std::uint64_t kSeedMethods = 6;

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads; rethrows
// the first exception.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Shortest round-trip decimal form.
std::string format_double(double v);

// Throws std::ios_base::failure when the file cannot be opened.
std::ofstream open_output(const std::filesystem::path& path);

void fill_series_metrics(EvalRecord& rec, const KpiSeries& estimate, const KpiSeries& truth, std::size_t max_lag);

}  // namespace ccg::detail
