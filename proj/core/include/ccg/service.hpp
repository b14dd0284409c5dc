#pragma once
// REST service over episodes, counterfactual queries and calibration status.
//
//   POST /episodes                       {"prompt": text} | {"slots": {...}, "style_seed": n}
//   GET  /episodes/{id}
//   POST /episodes/{id}/counterfactual   {"edit": {"changes": {...}, "style_seed": n}, "mode": "point"|"set"}
//   GET  /calibration
//   GET  /health
//
// Bodies follow schema/api.schema.json. Hidden environment noise is never
// stored or returned.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "ccg/conformal.hpp"
#include "ccg/pipeline.hpp"

namespace ccg {

// Episode registry with an append-only JSONL log. Thread-safe.
class SessionStore {
 public:
  // An empty path keeps everything in memory. An existing log is replayed.
  explicit SessionStore(std::filesystem::path log_path = {});

  // Assigns the next id ("ep-000001", ...) and persists the episode.
  std::string add(Episode episode);
  std::optional<Episode> get(const std::string& id) const;
  std::size_t size() const;
  // Index used to derive per-episode seeds.
  std::optional<std::size_t> index_of(const std::string& id) const;

 private:
  mutable std::shared_mutex mu_;
  std::filesystem::path log_path_;
  std::map<std::string, std::pair<std::size_t, Episode>> episodes_;
};

struct ServiceOptions {
  PipelineConfig pipeline;
  std::shared_ptr<const Abductor> abductor;
  std::uint64_t seed = 0;
  std::size_t k_max = kDefaultKMax;
  std::filesystem::path log_path;
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

class Service {
 public:
  explicit Service(ServiceOptions options);

  HttpResponse create_episode(const std::string& body);
  HttpResponse get_episode(const std::string& id) const;
  HttpResponse counterfactual(const std::string& id, const std::string& body);
  HttpResponse calibration_status() const;
  HttpResponse health() const;

  // Routes a request without a socket; unknown routes give 404, wrong methods 405.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);

  void set_calibration(CalibrationResult result);
  const SessionStore& store() const { return store_; }

 private:
  ServiceOptions options_;
  SessionStore store_;
  mutable std::shared_mutex calibration_mu_;
  std::optional<CalibrationResult> calibration_;
  std::atomic<std::uint64_t> next_run_{0};
};

// Blocks serving HTTP until the process is stopped. Throws std::runtime_error
// when the address cannot be bound.
void serve(Service& service, const std::string& host, int port);

// Client-facing episode view: no Gumbel traces, no noise.
nlohmann::json episode_view(const std::string& id, const Episode& e);

}  // namespace ccg
