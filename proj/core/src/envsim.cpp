#include "ccg/envsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>

#include "ccg/errors.hpp"

namespace ccg {

namespace {

constexpr std::uint64_t kPlacementTag = 0x91;
constexpr std::uint64_t kTrafficTag = 0x92;
constexpr std::uint64_t kFadingTag = 0x93;

struct Packet {
  double arrival_s;
  double remaining_bits;
};

double interpolate_knots(const double* knots, double time_s) {
  const double clamped = std::clamp(time_s, 0.0, static_cast<double>(kShadowKnots - 1));
  const int k = std::min(static_cast<int>(clamped), kShadowKnots - 2);
  const double frac = clamped - k;
  return knots[k] * (1.0 - frac) + knots[k + 1] * frac;
}

}  // namespace

std::string to_string(Scheduler s) { return s == Scheduler::RR ? "RR" : "PF"; }

Scheduler scheduler_from_string(const std::string& s) {
  if (s == "RR") return Scheduler::RR;
  if (s == "PF") return Scheduler::PF;
  throw InvalidArgument("unknown scheduler '" + s + "'");
}

void ActionConfig::validate() const {
  if (num_ues < kMinUes || num_ues > kMaxUes) throw InvalidArgument("num_ues out of range [3,10]");
  if (!(load_mbps >= kMinLoadMbps && load_mbps <= kMaxLoadMbps)) throw InvalidArgument("load_mbps out of range [2,10]");
  if (!(duration_s >= kMinDurationS && duration_s <= kMaxDurationS))
    throw InvalidArgument("duration_s out of range [5,10]");
}

int ActionConfig::windows() const {
  return static_cast<int>(std::floor(duration_s / kSamplePeriodS + 1e-9));
}

void ExogenousNoise::validate() const {
  if (shadow_db.size() != static_cast<std::size_t>(kMaxUes * kShadowKnots))
    throw InvalidArgument("shadow_db must hold kMaxUes * kShadowKnots entries");
  for (double v : shadow_db)
    if (!std::isfinite(v)) throw InvalidArgument("shadow_db entries must be finite");
}

Fidelity fidelity_from_int(int q) {
  if (q < 1 || q > 4) throw InvalidArgument("fidelity level must be in 1..4");
  return static_cast<Fidelity>(q);
}

KpiSummary summarize_kpis(const KpiSeries& kpis) {
  KpiSummary s;
  const int n = kpis.ues();
  const int w = kpis.windows();
  if (n == 0 || w == 0) return s;
  std::vector<double> cell(w, 0.0);
  double tput = 0.0, delay = 0.0;
  for (int u = 0; u < n; ++u) {
    for (int k = 0; k < w; ++k) {
      tput += kpis.throughput_mbps[u][k];
      delay += kpis.delay_ms[u][k];
      cell[k] += kpis.throughput_mbps[u][k];
    }
  }
  s.mean_throughput_mbps = tput / (n * w);
  s.mean_delay_ms = delay / (n * w);

  double tbar = 0.0, cbar = 0.0;
  for (int k = 0; k < w; ++k) {
    tbar += (k + 0.5) * kpis.sample_period_s;
    cbar += cell[k];
  }
  tbar /= w;
  cbar /= w;
  double sxy = 0.0, sxx = 0.0;
  for (int k = 0; k < w; ++k) {
    const double dt = (k + 0.5) * kpis.sample_period_s - tbar;
    sxy += dt * (cell[k] - cbar);
    sxx += dt * dt;
  }
  if (sxx > 0.0 && cbar > 0.0) s.throughput_rel_slope = (sxy / sxx) / cbar;
  return s;
}

SchedulerState::SchedulerState(int ues) : backlog_bits(ues, 0.0), ewma_bps(ues, kPfEwmaInitBps) {}

std::optional<int> scheduler_select(const SchedulerState& state, std::span<const double> inst_rates,
                                    Scheduler policy) {
  const int n = static_cast<int>(state.backlog_bits.size());
  if (inst_rates.size() != state.backlog_bits.size() || state.ewma_bps.size() != state.backlog_bits.size())
    throw InvalidArgument("scheduler_select: size mismatch");
  if (policy == Scheduler::RR) {
    for (int step = 1; step <= n; ++step) {
      const int u = ((state.last_served < 0 ? -1 : state.last_served) + step + n) % n;
      if (state.backlog_bits[u] > 0.0) return u;
    }
    return std::nullopt;
  }
  std::optional<int> best;
  double best_metric = -std::numeric_limits<double>::infinity();
  for (int u = 0; u < n; ++u) {
    if (state.backlog_bits[u] <= 0.0) continue;
    const double metric = inst_rates[u] / state.ewma_bps[u];
    if (metric > best_metric) {
      best_metric = metric;
      best = u;
    }
  }
  return best;
}

double ChannelConstants::snr_offset_db() const {
  const double tx_per_rb_dbm = tx_power_dbm - 10.0 * std::log10(static_cast<double>(resource_blocks));
  const double noise_per_rb_dbm = noise_psd_dbm_hz + 10.0 * std::log10(rb_bandwidth_hz) + noise_figure_db;
  return tx_per_rb_dbm - noise_per_rb_dbm;
}

const ChannelConstants& channel_constants() {
  static const ChannelConstants kConstants{};
  return kConstants;
}

double path_loss_db(double distance_m) { return 128.1 + 37.6 * std::log10(distance_m / 1000.0); }

std::vector<double> ue_distances(std::uint64_t placement_seed) {
  const auto& c = channel_constants();
  Rng rng = make_rng(placement_seed, {kPlacementTag});
  std::vector<double> d(kMaxUes);
  const double r0 = c.min_distance_m * c.min_distance_m;
  const double r1 = c.max_distance_m * c.max_distance_m;
  for (auto& x : d) x = std::sqrt(r0 + uniform_open01(rng) * (r1 - r0));
  return d;
}

std::vector<double> large_scale_loss_db(const ExogenousNoise& noise) {
  const auto d = ue_distances(noise.placement_seed);
  std::vector<double> loss(kMaxUes * kShadowKnots);
  for (int u = 0; u < kMaxUes; ++u)
    for (int k = 0; k < kShadowKnots; ++k) loss[u * kShadowKnots + k] = path_loss_db(d[u]) + noise.shadow(u, k);
  return loss;
}

ExogenousNoise sample_exogenous_prior(Rng& rng) {
  ExogenousNoise n;
  n.placement_seed = rng();
  n.fading_seed = rng();
  n.traffic_seed = rng();
  n.shadow_db.resize(kMaxUes * kShadowKnots);
  const double innovation = std::sqrt(1.0 - kShadowKnotCorrelation * kShadowKnotCorrelation);
  for (int u = 0; u < kMaxUes; ++u) {
    double x = kShadowSigmaDb * standard_normal(rng);
    n.shadow_db[u * kShadowKnots] = x;
    for (int k = 1; k < kShadowKnots; ++k) {
      x = kShadowKnotCorrelation * x + innovation * kShadowSigmaDb * standard_normal(rng);
      n.shadow_db[u * kShadowKnots + k] = x;
    }
  }
  return n;
}

KpiSeries run_environment(const ActionConfig& config, const ExogenousNoise& noise, Fidelity fidelity,
                          const SimOptions& options) {
  if (options.relax_ue_range) {
    if (config.num_ues < 1 || config.num_ues > kMaxUes) throw InvalidArgument("num_ues out of range [1,10]");
    ActionConfig probe = config;
    probe.num_ues = kMinUes;
    probe.validate();
  } else {
    config.validate();
  }
  noise.validate();

  const auto& cc = channel_constants();
  const int n = config.num_ues;
  const int windows = config.windows();
  const int q = static_cast<int>(fidelity);
  const bool shadowing = q >= 2;
  const bool fading = q >= 3 && !options.force_mean_fading;
  const bool packets = q >= 4;

  std::vector<double> distances = options.distances_m ? *options.distances_m : ue_distances(noise.placement_seed);
  if (static_cast<int>(distances.size()) < n) throw InvalidArgument("distance override shorter than num_ues");

  // Large-scale loss knots per UE.
  std::vector<double> loss(n * kShadowKnots);
  for (int u = 0; u < n; ++u)
    for (int k = 0; k < kShadowKnots; ++k)
      loss[u * kShadowKnots + k] = path_loss_db(distances[u]) + (shadowing ? noise.shadow(u, k) : 0.0);

  const double snr_offset = cc.snr_offset_db();
  const double bits_per_tti_per_se = cc.bandwidth_hz() * kTtiS;
  const int block_ttis = std::max(1, static_cast<int>(std::lround(cc.coherence_s / kTtiS)));
  const double fluid_bits_per_tti = config.load_mbps * 1e6 * kTtiS;
  const double packet_rate = config.load_mbps * 1e6 / kPacketBits;  // packets per second

  Rng fading_rng = make_rng(noise.fading_seed, {kFadingTag});
  std::vector<Rng> traffic_rng;
  std::vector<double> next_arrival(n, 0.0);
  std::vector<std::deque<Packet>> queues(packets ? n : 0);
  if (packets) {
    for (int u = 0; u < n; ++u) {
      traffic_rng.push_back(make_rng(noise.traffic_seed, {kTrafficTag, static_cast<std::uint64_t>(u)}));
      next_arrival[u] = -std::log(uniform_open01(traffic_rng[u])) / packet_rate;
    }
  }

  KpiSeries out;
  out.throughput_mbps.assign(n, std::vector<double>(windows, 0.0));
  out.delay_ms.assign(n, std::vector<double>(windows, 0.0));
  out.delivered_bits.assign(n, std::vector<double>(windows, 0.0));

  SchedulerState state(n);
  std::vector<double> rate_bits(n, 0.0);
  std::vector<double> gains(kMaxUes, 1.0);
  std::vector<double> served(n, 0.0);
  std::vector<double> inst_bps(n, 0.0);

  // Per-window accumulators.
  std::vector<double> win_backlog(n, 0.0), win_link_bits(n, 0.0), win_delay_sum(n, 0.0);
  std::vector<long> win_departures(n, 0);
  std::vector<double> last_delay(n, 0.0);

  const long total_ttis = static_cast<long>(windows) * kTtisPerWindow;
  const double alpha = 1.0 / kPfTimeConstantTtis;

  for (long t = 0; t < total_ttis; ++t) {
    const double now_s = t * kTtiS;
    if (t % block_ttis == 0) {
      if (fading)
        for (auto& g : gains) g = -std::log(uniform_open01(fading_rng));
      const double mid_s = now_s + 0.5 * block_ttis * kTtiS;
      for (int u = 0; u < n; ++u) {
        const double l = interpolate_knots(&loss[u * kShadowKnots], mid_s);
        const double snr = std::pow(10.0, (snr_offset - l) / 10.0) * gains[u];
        const double se = std::min(std::log2(1.0 + snr), cc.max_spectral_efficiency);
        rate_bits[u] = se * bits_per_tti_per_se;
      }
    }

    // Arrivals eligible at the start of this TTI.
    if (packets) {
      for (int u = 0; u < n; ++u) {
        while (next_arrival[u] < now_s) {
          queues[u].push_back({next_arrival[u], kPacketBits});
          state.backlog_bits[u] += kPacketBits;
          next_arrival[u] += -std::log(uniform_open01(traffic_rng[u])) / packet_rate;
        }
      }
    } else {
      for (int u = 0; u < n; ++u) state.backlog_bits[u] += fluid_bits_per_tti;
    }

    for (int u = 0; u < n; ++u) {
      win_backlog[u] += state.backlog_bits[u];
      win_link_bits[u] += rate_bits[u];
    }

    std::fill(served.begin(), served.end(), 0.0);
    // Achievable rate this TTI: the link rate capped by what is queued.
    for (int u = 0; u < n; ++u) inst_bps[u] = std::min(rate_bits[u], state.backlog_bits[u]) / kTtiS;
    if (auto pick = scheduler_select(state, inst_bps, config.scheduler)) {
      const int u = *pick;
      double capacity = rate_bits[u];
      if (packets) {
        const double departure_s = (t + 1) * kTtiS;
        auto& queue = queues[u];
        while (capacity > 0.0 && !queue.empty()) {
          Packet& head = queue.front();
          const double take = std::min(capacity, head.remaining_bits);
          head.remaining_bits -= take;
          capacity -= take;
          served[u] += take;
          if (head.remaining_bits <= 1e-9) {
            win_delay_sum[u] += (departure_s - head.arrival_s) * 1e3;
            ++win_departures[u];
            queue.pop_front();
          }
        }
        state.backlog_bits[u] = std::max(0.0, state.backlog_bits[u] - served[u]);
        if (queue.empty()) state.backlog_bits[u] = 0.0;
      } else {
        served[u] = std::min(capacity, state.backlog_bits[u]);
        state.backlog_bits[u] -= served[u];
      }
      state.last_served = u;
    }
    for (int u = 0; u < n; ++u) {
      state.ewma_bps[u] = (1.0 - alpha) * state.ewma_bps[u] + alpha * served[u] / kTtiS;
      out.delivered_bits[u][t / kTtisPerWindow] += served[u];
    }
    ++state.tti;

    if ((t + 1) % kTtisPerWindow == 0) {
      const int w = static_cast<int>(t / kTtisPerWindow);
      for (int u = 0; u < n; ++u) {
        const double bits = out.delivered_bits[u][w];
        out.throughput_mbps[u][w] = bits / kSamplePeriodS / 1e6;
        if (packets) {
          if (win_departures[u] > 0) last_delay[u] = win_delay_sum[u] / win_departures[u];
        } else if (bits > 0.0) {
          // Little's law on the mean backlog plus one packet's air time.
          const double mean_backlog = win_backlog[u] / kTtisPerWindow;
          const double arrival_bps = config.load_mbps * 1e6;
          const double link_bps = win_link_bits[u] / kSamplePeriodS;
          last_delay[u] = (mean_backlog / arrival_bps + kPacketBits / link_bps) * 1e3;
        }
        out.delay_ms[u][w] = last_delay[u];
        win_backlog[u] = win_link_bits[u] = win_delay_sum[u] = 0.0;
        win_departures[u] = 0;
      }
    }
  }
  return out;
}

void write_kpi_csv(std::ostream& os, const KpiSeries& kpis) {
  os << "window_index,ue,throughput_mbps,delay_ms\n";
  for (int w = 0; w < kpis.windows(); ++w)
    for (int u = 0; u < kpis.ues(); ++u)
      os << w << ',' << u << ',' << kpis.throughput_mbps[u][w] << ',' << kpis.delay_ms[u][w] << '\n';
}

void to_json(nlohmann::json& j, const ActionConfig& a) {
  j = {{"scheduler", to_string(a.scheduler)},
       {"num_ues", a.num_ues},
       {"load_mbps", a.load_mbps},
       {"duration_s", a.duration_s}};
}

void from_json(const nlohmann::json& j, ActionConfig& a) {
  a.scheduler = scheduler_from_string(j.at("scheduler").get<std::string>());
  a.num_ues = j.at("num_ues").get<int>();
  a.load_mbps = j.at("load_mbps").get<double>();
  a.duration_s = j.at("duration_s").get<double>();
}

void to_json(nlohmann::json& j, const ExogenousNoise& n) {
  j = {{"placement_seed", n.placement_seed},
       {"shadow_db", n.shadow_db},
       {"fading_seed", n.fading_seed},
       {"traffic_seed", n.traffic_seed}};
}

void from_json(const nlohmann::json& j, ExogenousNoise& n) {
  n.placement_seed = j.at("placement_seed").get<std::uint64_t>();
  n.shadow_db = j.at("shadow_db").get<std::vector<double>>();
  n.fading_seed = j.at("fading_seed").get<std::uint64_t>();
  n.traffic_seed = j.at("traffic_seed").get<std::uint64_t>();
}

void to_json(nlohmann::json& j, const KpiSeries& k) {
  j = {{"sample_period_s", k.sample_period_s},
       {"throughput_mbps", k.throughput_mbps},
       {"delay_ms", k.delay_ms},
       {"delivered_bits", k.delivered_bits}};
}

void from_json(const nlohmann::json& j, KpiSeries& k) {
  k.sample_period_s = j.at("sample_period_s").get<double>();
  k.throughput_mbps = j.at("throughput_mbps").get<std::vector<std::vector<double>>>();
  k.delay_ms = j.at("delay_ms").get<std::vector<std::vector<double>>>();
  k.delivered_bits = j.at("delivered_bits").get<std::vector<std::vector<double>>>();
}

}  // namespace ccg
