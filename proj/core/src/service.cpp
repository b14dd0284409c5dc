#include "ccg/service.hpp"

#include <cstdio>
#include <fstream>
#include <mutex>

#include <httplib.h>

#include "ccg/errors.hpp"
#include "ccg/textmetrics.hpp"

namespace ccg {
namespace {

using json = nlohmann::json;

HttpResponse error(int status, const std::string& message, const std::string& fragment = "") {
  json body{{"error", message}};
  if (!fragment.empty()) body["fragment"] = fragment;
  return {status, body};
}

std::string make_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ep-%06zu", index + 1);
  return buf;
}

json outcome_view(const CounterfactualOutcome& o) {
  return {{"action", o.action}, {"kpis", o.kpis}, {"report_text", o.report_text}};
}

PromptSpec prompt_from_request(const json& req) {
  if (req.contains("prompt")) {
    const auto text = req.at("prompt").get<std::string>();
    return PromptSpec{text, parse_prompt(text), 0};
  }
  if (req.contains("slots")) {
    const auto slots = req.at("slots").get<PromptSlots>();
    validate_slots(slots);
    return render_prompt(slots, req.value("style_seed", std::uint64_t{0}));
  }
  throw ParseError("request needs \"prompt\" or \"slots\"", req.dump());
}

template <class F>
HttpResponse guarded(F&& f) {
  try {
    return f();
  } catch (const ParseError& e) {
    return error(400, e.what(), e.fragment());
  } catch (const json::exception& e) {
    return error(400, std::string("malformed request: ") + e.what());
  } catch (const InvalidArgument& e) {
    return error(400, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

}  // namespace

nlohmann::json episode_view(const std::string& id, const Episode& e) {
  return {{"id", id},
          {"prompt", e.prompt},
          {"action", e.action},
          {"kpis", e.kpis},
          {"report_text", e.report_text}};
}

// ---- SessionStore ---------------------------------------------------------

SessionStore::SessionStore(std::filesystem::path log_path) : log_path_(std::move(log_path)) {
  if (log_path_.empty() || !std::filesystem::exists(log_path_)) return;
  std::ifstream in(log_path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    const auto id = j.at("id").get<std::string>();
    episodes_.emplace(id, std::pair{episodes_.size(), j.at("episode").get<Episode>()});
  }
}

std::string SessionStore::add(Episode episode) {
  std::unique_lock lock(mu_);
  const std::size_t index = episodes_.size();
  const std::string id = make_id(index);
  episode.id = id;
  if (!log_path_.empty()) {
    std::ofstream out(log_path_, std::ios::app);
    out << json{{"id", id}, {"episode", episode}}.dump() << '\n';
    if (!out) throw std::ios_base::failure("cannot append to " + log_path_.string());
  }
  episodes_.emplace(id, std::pair{index, std::move(episode)});
  return id;
}

std::optional<Episode> SessionStore::get(const std::string& id) const {
  std::shared_lock lock(mu_);
  const auto it = episodes_.find(id);
  if (it == episodes_.end()) return std::nullopt;
  return it->second.second;
}

std::optional<std::size_t> SessionStore::index_of(const std::string& id) const {
  std::shared_lock lock(mu_);
  const auto it = episodes_.find(id);
  if (it == episodes_.end()) return std::nullopt;
  return it->second.first;
}

std::size_t SessionStore::size() const {
  std::shared_lock lock(mu_);
  return episodes_.size();
}

// ---- Service --------------------------------------------------------------

Service::Service(ServiceOptions options) : options_(std::move(options)), store_(options_.log_path) {
  next_run_ = store_.size();
  if (!options_.abductor) options_.abductor = std::make_shared<PriorAbductor>();
}

void Service::set_calibration(CalibrationResult result) {
  std::unique_lock lock(calibration_mu_);
  calibration_ = std::move(result);
}

HttpResponse Service::health() const {
  return {200, {{"status", "ok"}, {"episodes", store_.size()}}};
}

HttpResponse Service::create_episode(const std::string& body) {
  return guarded([&]() -> HttpResponse {
    const PromptSpec x = prompt_from_request(json::parse(body));
    const std::uint64_t seed = derive_seed(options_.seed, {next_run_++});
    auto [episode, hidden] = run_factual_episode(options_.pipeline, x, seed);
    const std::string id = store_.add(std::move(episode));
    return {201, episode_view(id, *store_.get(id))};
  });
}

HttpResponse Service::get_episode(const std::string& id) const {
  const auto e = store_.get(id);
  if (!e) return error(404, "unknown episode", id);
  return {200, episode_view(id, *e)};
}

HttpResponse Service::counterfactual(const std::string& id, const std::string& body) {
  const auto episode = store_.get(id);
  if (!episode) return error(404, "unknown episode", id);
  return guarded([&]() -> HttpResponse {
    const json req = json::parse(body);
    const std::string mode = req.value("mode", "point");
    if (mode != "point" && mode != "set") throw ParseError("mode must be point or set", mode);

    EditSpec edit;
    if (req.contains("edit")) {
      const json& e = req.at("edit");
      if (e.contains("changes")) edit.changes = e.at("changes").get<PromptSlots>();
      if (e.contains("style_seed")) edit.style_seed = e.at("style_seed").get<std::uint64_t>();
    }
    const bool identity = count_set_slots(edit.changes) == 0 && !edit.style_seed;
    const PromptSpec x_prime = identity ? episode->prompt : edit_prompt(episode->prompt, edit);

    const std::uint64_t base_seed =
        req.contains("seed") ? req.at("seed").get<std::uint64_t>() : derive_seed(options_.seed, {*store_.index_of(id), 1});
    CgCandidateStream stream(options_.pipeline, *episode, x_prime, *options_.abductor, base_seed);

    json out{{"episode_id", id}, {"mode", mode}, {"prompt", x_prime}};
    if (mode == "point" && identity) {
      out["result"] = {{"action", episode->action}, {"kpis", episode->kpis}, {"report_text", episode->report_text}};
      return {200, out};
    }
    if (mode == "point") {
      out["result"] = outcome_view(stream.outcome(0));
      out["result"]["quality"] = stream.at(0).quality;
      return {200, out};
    }

    LambdaConfig lambda;
    {
      std::shared_lock lock(calibration_mu_);
      if (!calibration_) return error(409, "no calibration loaded; run calibrate first");
      if (calibration_->outcome.abstained)
        return error(409, "calibration abstained: no threshold configuration passed the FWER test");
      lambda = calibration_->outcome.lambda_hat;
      out["epsilon"] = calibration_->grid.epsilon;
      out["delta"] = calibration_->grid.delta;
    }
    const CandidateSet set = build_candidate_set(stream, lambda, options_.k_max);
    json members = json::array();
    for (std::size_t m = 0; m < set.size(); ++m) {
      const std::size_t k = set.member_k[m];
      json v = outcome_view(stream.outcome(k - 1));
      v["k"] = k;
      v["quality"] = set.members[m].quality;
      members.push_back(std::move(v));
    }
    out["lambda"] = lambda;
    out["members"] = std::move(members);
    out["set_size"] = set.size();
    out["k_stop"] = set.k_stop;
    out["stopped_by"] = set.stopped_by == StopReason::Threshold ? "threshold" : "k_max";
    json trace = json::array();
    for (const auto& s : set.trace)
      trace.push_back({{"k", s.k}, {"quality", s.quality}, {"similarity", s.similarity}, {"accepted", s.accepted}});
    out["trace"] = std::move(trace);
    return {200, out};
  });
}

HttpResponse Service::calibration_status() const {
  std::shared_lock lock(calibration_mu_);
  if (!calibration_) return {200, {{"status", "uncalibrated"}}};
  const auto& c = *calibration_;
  json out{{"status", c.outcome.abstained ? "abstained" : "calibrated"},
           {"epsilon", c.grid.epsilon},
           {"delta", c.grid.delta},
           {"method", to_string(c.grid.method)},
           {"grid_size", c.grid.configs.size()},
           {"valid_count", c.outcome.valid.size()}};
  double min_p = 1.0, max_p = 0.0;
  for (const auto& r : c.records) {
    min_p = std::min(min_p, r.p_value);
    max_p = std::max(max_p, r.p_value);
  }
  out["p_values"] = {{"min", min_p}, {"max", max_p}, {"count", c.records.size()}};
  if (!c.records.empty()) out["n_cal"] = c.records.front().estimate.n;
  if (c.outcome.abstained) out["smallest_p_value"] = min_p;
  else out["lambda_hat"] = c.outcome.lambda_hat;
  return {200, out};
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  const auto expect = [&](const char* m, auto&& f) -> HttpResponse {
    if (method != m) return error(405, "method not allowed", method);
    return f();
  };
  if (path == "/health") return expect("GET", [&] { return health(); });
  if (path == "/calibration") return expect("GET", [&] { return calibration_status(); });
  if (path == "/episodes") return expect("POST", [&] { return create_episode(body); });
  const std::string prefix = "/episodes/";
  if (path.rfind(prefix, 0) == 0) {
    std::string rest = path.substr(prefix.size());
    const std::string suffix = "/counterfactual";
    if (rest.size() > suffix.size() && rest.compare(rest.size() - suffix.size(), suffix.size(), suffix) == 0) {
      rest.erase(rest.size() - suffix.size());
      if (rest.find('/') == std::string::npos) return expect("POST", [&] { return counterfactual(rest, body); });
    } else if (!rest.empty() && rest.find('/') == std::string::npos) {
      return expect("GET", [&] { return get_episode(rest); });
    }
  }
  return error(404, "no such route", path);
}

void serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  const auto bridge = [&service](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(R"(/.*)", bridge);
  server.Post(R"(/.*)", bridge);
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace ccg
