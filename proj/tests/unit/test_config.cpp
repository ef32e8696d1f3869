#include <fstream>

#include <nlohmann/json.hpp>

#include "kinhmd/session/config.hpp"
#include "test_util.hpp"

using namespace kinhmd;
using namespace kinhmd::session;
using nlohmann::json;

TEST_SUITE("config") {

TEST_CASE("defaults are valid") {
  SessionConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.tick_dt() == 1e-3);
  CHECK(config_from_json(json::object()).cueing.gain == cfg.cueing.gain);
}

TEST_CASE("json round trip") {
  SessionConfig cfg;
  cfg.cueing.mode = cueing::Mode::direct;
  cfg.cueing.gain = 1.25;
  cfg.safety.force_limit = 8;
  cfg.plant.head_mass = 6.0;
  cfg.plant.neck_damping = 40.0;
  cfg.telemetry.channels.slots = {2, 1, 0};
  cfg.telemetry.port = 50000;
  cfg.stimulus.plateau_duration = 3.0;
  const auto back = config_from_json(config_to_json(cfg));
  CHECK(back.cueing.mode == cueing::Mode::direct);
  CHECK(back.cueing.gain == 1.25);
  CHECK(back.safety.force_limit == 8);
  CHECK(back.plant.head_mass == 6.0);
  CHECK(back.plant.neck_damping == 40.0);
  CHECK(back.telemetry.channels.slots == std::array<int, 3>{2, 1, 0});
  CHECK(back.telemetry.port == 50000);
  CHECK(back.stimulus.plateau_duration == 3.0);
}

TEST_CASE("neck damping follows mass unless given") {
  const auto cfg = config_from_json(json{{"plant", {{"head_mass", 8.0}}}});
  CHECK(cfg.plant.damping_ratio() == doctest::Approx(1.0));
}

TEST_CASE("bad configs") {
  CHECK_THROWS_AS(config_from_json(json{{"tick_rat", 1000}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"safety", {{"force_limit", 10}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"safety", {{"force_limit_n", 80}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"tick_rate", 100}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"cueing", {{"mode", "sideways"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"cueing", {{"gain", "two"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"source", "trace"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"telemetry", {{"slots", {0, 0, 1}}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);
}

TEST_CASE("relative paths resolve against the config file") {
  const auto path = testutil::temp_path("cfg_rel.json");
  std::ofstream(path) << R"({"source": "trace", "trace_path": "in.csv", "log_path": "out.jsonl"})";
  const auto cfg = load_config(path);
  CHECK(cfg.trace_path == path.parent_path() / "in.csv");
  CHECK(cfg.log_path == path.parent_path() / "out.jsonl");
}

TEST_CASE("shipped configs load") {
  for (const char* name : {"default.json", "xplane_live.json"}) {
    CHECK_NOTHROW(load_config(std::filesystem::path(KINHMD_SOURCE_DIR) / "configs" / name));
  }
}

}
