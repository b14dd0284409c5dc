#include <filesystem>

#include <gtest/gtest.h>

#include "ccg/service.hpp"

using namespace ccg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ServiceOptions options(fs::path log = {}) {
  ServiceOptions o;
  o.seed = 5;
  o.k_max = 6;
  o.log_path = std::move(log);
  return o;
}

bool mentions_hidden_noise(const json& j) {
  if (j.is_object()) {
    for (const auto& [key, value] : j.items()) {
      if (key == "shadow_db" || key == "placement_seed" || key == "fading_seed" || key == "traffic_seed" ||
          key == "noise" || key == "action_trace" || key == "report_trace")
        return true;
      if (mentions_hidden_noise(value)) return true;
    }
  } else if (j.is_array()) {
    for (const auto& v : j)
      if (mentions_hidden_noise(v)) return true;
  }
  return false;
}

std::string create(Service& s, const json& body) {
  const auto r = s.handle("POST", "/episodes", body.dump());
  EXPECT_EQ(r.status, 201) << r.body.dump();
  return r.body.at("id").get<std::string>();
}

CalibrationResult calibration(bool abstained) {
  CalibrationResult c;
  c.grid.configs = {LambdaConfig{}};
  c.grid.epsilon = 0.4;
  c.records.resize(1);
  c.records[0].p_value = 1e-6;
  c.outcome.abstained = abstained;
  if (!abstained) {
    c.outcome.chosen = 0;
    c.outcome.valid = {0};
    c.outcome.lambda_hat.confidence_stop = -0.5;
  }
  return c;
}

}  // namespace

TEST(Service, HealthAndCreate) {
  Service s(options());
  EXPECT_EQ(s.handle("GET", "/health", "").body.at("episodes"), 0);
  const auto id = create(s, {{"prompt", "Run an experiment with RR scheduling and for 6 UEs."}});
  EXPECT_EQ(id, "ep-000001");
  const auto view = s.handle("GET", "/episodes/" + id, "");
  EXPECT_EQ(view.status, 200);
  EXPECT_EQ(view.body.at("prompt").at("slots").at("num_ues"), 6);
  EXPECT_EQ(view.body.at("action").at("num_ues"), 6);
  EXPECT_FALSE(mentions_hidden_noise(view.body));
  EXPECT_EQ(create(s, {{"slots", {{"scheduler", "PF"}, {"load_mbps", 4}}}, {"style_seed", 2}}), "ep-000002");
  EXPECT_EQ(s.health().body.at("episodes"), 2);
}

TEST(Service, ErrorStatuses) {
  Service s(options());
  const auto bad_prompt = s.handle("POST", "/episodes", json{{"prompt", "Run an experiment with 50 users."}}.dump());
  EXPECT_EQ(bad_prompt.status, 400);
  EXPECT_EQ(bad_prompt.body.at("fragment"), "with 50 users");
  EXPECT_EQ(s.handle("POST", "/episodes", "{not json").status, 400);
  EXPECT_EQ(s.handle("POST", "/episodes", json{{"slots", {{"num_ues", 11}}}}.dump()).status, 400);
  EXPECT_EQ(s.handle("GET", "/episodes/ep-999999", "").status, 404);
  EXPECT_EQ(s.handle("POST", "/episodes/ep-999999/counterfactual", "{}").status, 404);
  EXPECT_EQ(s.handle("GET", "/nowhere", "").status, 404);
  EXPECT_EQ(s.handle("DELETE", "/health", "").status, 405);
  EXPECT_EQ(s.handle("GET", "/episodes", "").status, 405);

  const auto id = create(s, {{"slots", {{"num_ues", 4}}}});
  const auto path = "/episodes/" + id + "/counterfactual";
  EXPECT_EQ(s.handle("POST", path, json{{"mode", "both"}}.dump()).status, 400);
  EXPECT_EQ(s.handle("POST", path, json{{"edit", {{"changes", {{"load_mbps", 11}}}}}}.dump()).status, 400);
  EXPECT_EQ(s.handle("POST", path,
                     json{{"edit", {{"changes", {{"scheduler", "RR"}, {"load_mbps", 3}, {"duration_s", 9}}}}}}.dump())
                .status,
            400);
}

TEST(Service, IdentityPointEditReturnsFactual) {
  Service s(options());
  const auto id = create(s, {{"slots", {{"scheduler", "PF"}, {"num_ues", 7}}}});
  const auto factual = s.get_episode(id).body;
  const auto r = s.counterfactual(id, json{{"mode", "point"}}.dump());
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("result").at("report_text"), factual.at("report_text"));
  EXPECT_EQ(r.body.at("result").at("kpis"), factual.at("kpis"));
}

TEST(Service, PointEditIsSeededAndHidesNoise) {
  Service s(options());
  const auto id = create(s, {{"slots", {{"scheduler", "PF"}, {"num_ues", 7}}}});
  const json req{{"edit", {{"changes", {{"load_mbps", 9}}}}}, {"seed", 4}};
  const auto a = s.counterfactual(id, req.dump());
  ASSERT_EQ(a.status, 200);
  EXPECT_EQ(a.body.at("prompt").at("slots").at("load_mbps"), 9);
  EXPECT_EQ(a.body, s.counterfactual(id, req.dump()).body);
  EXPECT_FALSE(mentions_hidden_noise(a.body));
}

TEST(Service, SetModeNeedsUsableCalibration) {
  Service s(options());
  const auto id = create(s, {{"slots", {{"num_ues", 5}}}});
  const auto path = "/episodes/" + id + "/counterfactual";
  const std::string req = json{{"mode", "set"}, {"edit", {{"changes", {{"duration_s", 8}}}}}}.dump();
  EXPECT_EQ(s.handle("GET", "/calibration", "").body.at("status"), "uncalibrated");
  EXPECT_EQ(s.handle("POST", path, req).status, 409);

  s.set_calibration(calibration(true));
  EXPECT_EQ(s.calibration_status().body.at("status"), "abstained");
  EXPECT_EQ(s.handle("POST", path, req).status, 409);

  s.set_calibration(calibration(false));
  const auto status = s.calibration_status().body;
  EXPECT_EQ(status.at("status"), "calibrated");
  EXPECT_DOUBLE_EQ(status.at("epsilon").get<double>(), 0.4);
  const auto r = s.handle("POST", path, req);
  ASSERT_EQ(r.status, 200);
  const auto& b = r.body;
  EXPECT_EQ(b.at("members").size(), b.at("set_size").get<std::size_t>());
  EXPECT_LE(b.at("set_size").get<std::size_t>(), b.at("k_stop").get<std::size_t>());
  EXPECT_EQ(b.at("trace").size(), b.at("k_stop").get<std::size_t>());
  EXPECT_LE(b.at("k_stop").get<std::size_t>(), 6u);
  EXPECT_FALSE(mentions_hidden_noise(b));
}

TEST(Service, EpisodesSurviveRestart) {
  const fs::path log = fs::path(::testing::TempDir()) / "ccg_service_log.jsonl";
  fs::remove(log);
  std::string id;
  json before;
  {
    Service s(options(log));
    create(s, {{"slots", {{"num_ues", 3}}}});
    id = create(s, {{"prompt", "Launch a scenario with PF scheduling."}});
    before = s.get_episode(id).body;
  }
  Service s(options(log));
  EXPECT_EQ(s.store().size(), 2u);
  EXPECT_EQ(s.get_episode(id).body, before);
  EXPECT_EQ(create(s, {{"slots", {{"num_ues", 3}}}}), "ep-000003");
  const auto r = s.counterfactual(id, json{{"edit", {{"changes", {{"num_ues", 9}}}}}}.dump());
  EXPECT_EQ(r.status, 200);
}
