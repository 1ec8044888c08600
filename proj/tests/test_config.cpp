#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "core/config.hpp"

using namespace metalora;
using nlohmann::json;
namespace fs = std::filesystem;

TEST_CASE("empty object yields the documented defaults") {
  const RunConfig cfg = parse_run_config(json::object());
  CHECK(cfg.optimizer.kind == OptimizerKind::Sgd);
  CHECK(cfg.optimizer.learning_rate == 0.01);
  CHECK(cfg.optimizer.batch_size == 16);
  CHECK(cfg.adapters.lora_rank == 4);
  CHECK(cfg.adapters.meta_tr_rank == 2);
  CHECK(cfg.tasks.tasks == 4);
  CHECK(cfg.tasks.classes_per_task == 2);
  CHECK(cfg.knn.ks == std::vector<std::size_t>{5, 10});
  CHECK(cfg.arms == std::vector<std::string>{"original", "lora", "multi_lora", "meta_cp",
                                             "meta_tr"});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
  CHECK(cfg.arm == "lora");
  CHECK(cfg.checkpoint_every == 0);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("nested values are parsed and echoed back") {
  json j = {
      {"optimizer",
       {{"kind", "adam"}, {"learning_rate", 0.25}, {"batch_size", 8}, {"epochs", 3}}},
      {"tasks", {{"tasks", 2}, {"train_per_class", 6}}},
      {"adapters", {{"meta_tr_rank", 3}}},
      {"extractor", {{"kind", "raw_flatten"}}},
      {"arm", "meta_tr"},
      {"seed", 42},
      {"out_dir", "runs/x"},
  };
  const RunConfig cfg = parse_run_config(j);
  CHECK(cfg.optimizer.kind == OptimizerKind::Adam);
  CHECK(cfg.optimizer.learning_rate == 0.25);
  CHECK(cfg.optimizer.epochs == 3);
  CHECK(cfg.tasks.tasks == 2);
  CHECK(cfg.tasks.train_per_class == 6);
  CHECK(cfg.adapters.meta_tr_rank == 3);
  CHECK(cfg.extractor.kind == FeatureExtractor::Kind::RawFlatten);
  CHECK(cfg.arm == "meta_tr");
  CHECK(cfg.seed == 42);
  CHECK(cfg.out_dir == "runs/x");

  const json echo = run_config_to_json(cfg);
  CHECK(echo.at("optimizer").at("kind") == "adam");
  CHECK(echo.at("optimizer").at("learning_rate") == 0.25);
  CHECK(echo.at("tasks").at("train_per_class") == 6);
  CHECK(echo.at("arm") == "meta_tr");
  // Round trip: re-parsing the echo reproduces the config.
  const RunConfig again = parse_run_config(echo);
  CHECK(run_config_to_json(again) == echo);
}

TEST_CASE("unknown keys are rejected with their path") {
  json top = {{"optimzer", json::object()}};
  CHECK_THROWS_WITH_AS(static_cast<void>(parse_run_config(top)),
                       doctest::Contains("optimzer"), ConfigError);

  json nested = {{"optimizer", {{"lr", 0.1}}}};
  CHECK_THROWS_WITH_AS(static_cast<void>(parse_run_config(nested)), doctest::Contains("lr"),
                       ConfigError);

  json deep = {{"tasks", {{"clases_per_task", 2}}}};
  CHECK_THROWS_WITH_AS(static_cast<void>(parse_run_config(deep)),
                       doctest::Contains("clases_per_task"), ConfigError);
}

TEST_CASE("type and value errors carry context") {
  json wrong_type = {{"optimizer", {{"batch_size", "many"}}}};
  CHECK_THROWS_AS(static_cast<void>(parse_run_config(wrong_type)), ConfigError);

  json bad_kind = {{"optimizer", {{"kind", "rmsprop"}}}};
  CHECK_THROWS_WITH_AS(static_cast<void>(parse_run_config(bad_kind)),
                       doctest::Contains("rmsprop"), ConfigError);

  json not_object = json::array();
  CHECK_THROWS_AS(static_cast<void>(parse_run_config(not_object)), ConfigError);
}

TEST_CASE("validate guards the numeric ranges") {
  RunConfig cfg;
  cfg.model.kernel = 4;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("kernel"), ConfigError);

  cfg = RunConfig{};
  cfg.optimizer.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = RunConfig{};
  cfg.knn.ks = {};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = RunConfig{};
  cfg.arms = {"lora", "lora"};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("twice"), ConfigError);

  cfg = RunConfig{};
  cfg.arms = {"warp"};
  CHECK_THROWS_AS(cfg.validate(), ArgError);  // unknown kind surfaces from the name lookup

  cfg = RunConfig{};
  cfg.adapters.lora_rank = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("arm_spec picks the per-kind rank") {
  const RunConfig cfg;
  CHECK(cfg.arm_spec(ArmKind::Lora).rank == cfg.adapters.lora_rank);
  CHECK(cfg.arm_spec(ArmKind::MultiLora).rank == cfg.adapters.multi_lora_rank);
  CHECK(cfg.arm_spec(ArmKind::MultiLora).tasks == cfg.tasks.tasks);
  CHECK(cfg.arm_spec(ArmKind::MetaCP).rank == cfg.adapters.meta_cp_rank);
  CHECK(cfg.arm_spec(ArmKind::MetaTR).rank == cfg.adapters.meta_tr_rank);
  CHECK(cfg.arm_spec(ArmKind::Original).kind == ArmKind::Original);
}

TEST_CASE("load_run_config reads files and reports missing ones") {
  const fs::path file = fs::temp_directory_path() / "metalora_cfg_test.json";
  {
    std::ofstream out(file);
    out << R"({"arm": "meta_cp", "optimizer": {"epochs": 7}})";
  }
  const RunConfig cfg = load_run_config(file);
  CHECK(cfg.arm == "meta_cp");
  CHECK(cfg.optimizer.epochs == 7);

  CHECK_THROWS_AS(static_cast<void>(load_run_config(file.string() + ".nope")), IoError);

  {
    std::ofstream out(file);
    out << "{not json";
  }
  CHECK_THROWS_AS(static_cast<void>(load_run_config(file)), ConfigError);
}
