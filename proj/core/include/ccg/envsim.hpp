#pragma once
// Single-cell downlink scheduler simulator.
//
// One gNB, up to kMaxUes UEs, 1 ms TTIs, one UE served per TTI over the whole
// band. The same code path implements the "real" environment (Fidelity::Q4)
// and the degraded digital twin at Q1..Q3:
//
//   Q1  path loss only, fluid arrivals, fluid (Little's law) delay
//   Q2  + slow log-normal shadowing trajectory
//   Q3  + Rayleigh block fading
//   Q4  + Poisson packet arrivals with FIFO per-packet delay
//
// Every run is a pure function of (ActionConfig, ExogenousNoise, Fidelity).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccg/rng.hpp"

namespace ccg {

inline constexpr int kMaxUes = 10;
inline constexpr int kMinUes = 3;
inline constexpr double kMinLoadMbps = 2.0;
inline constexpr double kMaxLoadMbps = 10.0;
inline constexpr double kMinDurationS = 5.0;
inline constexpr double kMaxDurationS = 10.0;
// Shadowing is a per-UE trajectory with one knot per second over the longest run.
inline constexpr int kShadowKnots = 11;
inline constexpr double kShadowSigmaDb = 8.0;
inline constexpr double kShadowKnotCorrelation = 0.7;

inline constexpr double kSamplePeriodS = 0.2;
inline constexpr int kTtisPerWindow = 200;
inline constexpr double kTtiS = 1e-3;
inline constexpr double kPacketBits = 1500.0 * 8.0;

enum class Scheduler { RR, PF };

std::string to_string(Scheduler s);
Scheduler scheduler_from_string(const std::string& s);

struct ActionConfig {
  Scheduler scheduler = Scheduler::PF;
  int num_ues = 5;
  double load_mbps = 5.0;   // offered load per UE
  double duration_s = 5.0;

  // Throws InvalidArgument when a field is outside the admissible ranges.
  void validate() const;
  int windows() const;

  friend bool operator==(const ActionConfig&, const ActionConfig&) = default;
};

// U_Z: latent environment randomness.
struct ExogenousNoise {
  std::uint64_t placement_seed = 0;
  // Row-major [ue][knot], kMaxUes * kShadowKnots entries, in dB.
  std::vector<double> shadow_db;
  std::uint64_t fading_seed = 0;
  std::uint64_t traffic_seed = 0;

  double shadow(int ue, int knot) const { return shadow_db[ue * kShadowKnots + knot]; }
  void validate() const;

  friend bool operator==(const ExogenousNoise&, const ExogenousNoise&) = default;
};

enum class Fidelity { Q1 = 1, Q2 = 2, Q3 = 3, Q4 = 4 };

inline constexpr Fidelity kRealFidelity = Fidelity::Q4;
inline constexpr Fidelity kDefaultTwinFidelity = Fidelity::Q2;

Fidelity fidelity_from_int(int q);

// Z: per-UE KPI time series at 0.2 s granularity.
struct KpiSeries {
  double sample_period_s = kSamplePeriodS;
  std::vector<std::vector<double>> throughput_mbps;  // [ue][window]
  std::vector<std::vector<double>> delay_ms;         // [ue][window]
  std::vector<std::vector<double>> delivered_bits;   // [ue][window]

  int ues() const { return static_cast<int>(throughput_mbps.size()); }
  int windows() const { return throughput_mbps.empty() ? 0 : static_cast<int>(throughput_mbps.front().size()); }

  friend bool operator==(const KpiSeries&, const KpiSeries&) = default;
};

// Cell-level digest that conditions the report generator.
struct KpiSummary {
  double mean_throughput_mbps = 0.0;  // mean over UEs and windows
  double mean_delay_ms = 0.0;
  // Least-squares slope of the cell throughput series, relative to its mean, per second.
  double throughput_rel_slope = 0.0;

  friend bool operator==(const KpiSummary&, const KpiSummary&) = default;
};

KpiSummary summarize_kpis(const KpiSeries& kpis);

struct SchedulerState {
  std::vector<double> backlog_bits;
  std::vector<double> ewma_bps;
  int last_served = -1;
  long tti = 0;

  explicit SchedulerState(int ues = 0);
};

inline constexpr double kPfEwmaInitBps = 1e3;
inline constexpr double kPfTimeConstantTtis = 100.0;

// RR: next backlogged UE after last_served, cyclically.
// PF: argmax inst_rate / ewma over backlogged UEs, ties to the lowest index.
// Returns nullopt when no UE is backlogged (idle TTI).
std::optional<int> scheduler_select(const SchedulerState& state, std::span<const double> inst_rates,
                                    Scheduler policy);

struct ChannelConstants {
  double tx_power_dbm = 30.0;
  int resource_blocks = 50;
  double rb_bandwidth_hz = 180e3;
  double noise_psd_dbm_hz = -174.0;
  double noise_figure_db = 7.0;
  double max_spectral_efficiency = 7.4;
  double min_distance_m = 10.0;
  double max_distance_m = 500.0;
  double coherence_s = 10e-3;

  double bandwidth_hz() const { return resource_blocks * rb_bandwidth_hz; }
  double peak_rate_bps() const { return max_spectral_efficiency * bandwidth_hz(); }
  // SNR (dB) at zero large-scale loss.
  double snr_offset_db() const;
};

const ChannelConstants& channel_constants();

// Log-distance path loss, d in metres.
double path_loss_db(double distance_m);

// UE distances drawn uniformly over the annulus area from the placement seed.
std::vector<double> ue_distances(std::uint64_t placement_seed);

// Per-UE large-scale loss (path loss + shadowing) at each knot, row-major [ue][knot].
std::vector<double> large_scale_loss_db(const ExogenousNoise& noise);

// Test hooks. Production callers use the defaults.
struct SimOptions {
  bool relax_ue_range = false;                 // allow 1..kMaxUes UEs
  std::optional<std::vector<double>> distances_m;  // override the placement
  bool force_mean_fading = false;              // Q3/Q4 fading gains pinned to 1
};

KpiSeries run_environment(const ActionConfig& config, const ExogenousNoise& noise, Fidelity fidelity,
                          const SimOptions& options = {});

ExogenousNoise sample_exogenous_prior(Rng& rng);

// CSV columns: window_index, ue, throughput_mbps, delay_ms
void write_kpi_csv(std::ostream& os, const KpiSeries& kpis);

void to_json(nlohmann::json& j, const ActionConfig& a);
void from_json(const nlohmann::json& j, ActionConfig& a);
void to_json(nlohmann::json& j, const ExogenousNoise& n);
void from_json(const nlohmann::json& j, ExogenousNoise& n);
void to_json(nlohmann::json& j, const KpiSeries& k);
void from_json(const nlohmann::json& j, KpiSeries& k);

}  // namespace ccg
