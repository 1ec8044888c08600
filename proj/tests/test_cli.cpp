#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#ifndef METALORA_CLI_PATH
#error "METALORA_CLI_PATH must point at the CLI binary"
#endif

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "metalora_cli_tests";

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + METALORA_CLI_PATH + " " + args;
  const int status = std::system(cmd.c_str());
  return status < 0 ? status : WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string tiny_tasks_json() {
  return R"("tasks": {"tasks": 2, "classes_per_task": 2, "train_per_class": 4,
                      "test_per_class": 2, "height": 6, "width": 6, "channels": 2},
            "model": {"conv_channels": 4},
            "adapters": {"lora_rank": 2, "meta_cp_rank": 2, "meta_tr_rank": 2},
            "extractor": {"features": 3},
            "pretrain": {"epochs": 2},
            "knn": {"ks": [3]})";
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> rel_a, rel_b;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel_a.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) rel_b.push_back(fs::relative(e.path(), b));
  std::sort(rel_a.begin(), rel_a.end());
  std::sort(rel_b.begin(), rel_b.end());
  if (rel_a != rel_b) return false;
  for (const auto& r : rel_a)
    if (slurp(a / r) != slurp(b / r)) return false;
  return true;
}

}  // namespace

TEST_CASE("version flag exits zero") {
  CHECK(run("--version > /dev/null 2>&1") == 0);
}

TEST_CASE("verify: module filter runs, bogus filter is an error") {
  const fs::path out = kWork / "verify_ok";
  fs::remove_all(out);
  CHECK(run("verify --filter meta_net --out " + out.string() + " > /dev/null 2>&1") == 0);
  CHECK(fs::exists(out / "verify_report.txt"));
  CHECK(fs::exists(out / "verify_report.json"));
  CHECK(slurp(out / "verify_report.txt").find("[PASS]") != std::string::npos);

  CHECK(run("verify --filter no_such_module > /dev/null 2>&1") != 0);
}

TEST_CASE("gen-data: deterministic dataset with a complete index") {
  const fs::path a = kWork / "gen_a";
  const fs::path b = kWork / "gen_b";
  fs::remove_all(a);
  fs::remove_all(b);
  for (const fs::path& out : {a, b}) {
    const fs::path cfg = kWork / (out.filename().string() + ".json");
    write_file(cfg, "{" + tiny_tasks_json() + R"(, "seeds": [3], "out_dir": ")" + out.string() +
                        "\"}");
    REQUIRE(run("gen-data --config " + cfg.string() + " > /dev/null 2>&1") == 0);
  }
  const fs::path seed_a = a / "data" / "seed3";
  CHECK(fs::exists(seed_a / "index.json"));
  CHECK(fs::exists(seed_a / "train" / "0000"));
  CHECK(fs::exists(seed_a / "test" / "0007"));  // 2 tasks * 2 classes * 2 = 8 test samples
  CHECK(!fs::exists(a / "data" / "incomplete"));

  const std::string index = slurp(seed_a / "index.json");
  CHECK(index.find("metalora.dataset.v1") != std::string::npos);
  CHECK(index.find("\"rotation\"") != std::string::npos);
  CHECK(index.find("\"label\"") != std::string::npos);

  // Byte-identical across reruns (the timestamped run_meta lives one level up).
  CHECK(same_tree(seed_a, b / "data" / "seed3"));
}

TEST_CASE("train: writes report, final checkpoint, and clears the marker") {
  const fs::path out = kWork / "train_run";
  fs::remove_all(out);
  const fs::path cfg = kWork / "train.json";
  write_file(cfg, "{" + tiny_tasks_json() +
                      R"(, "arm": "meta_cp", "seed": 11,
                         "optimizer": {"epochs": 3, "batch_size": 4, "learning_rate": 0.05},
                         "checkpoint_every": 2,
                         "out_dir": ")" +
                      out.string() + "\"}");
  REQUIRE(run("train --config " + cfg.string() + " > /dev/null 2>&1") == 0);
  CHECK(fs::exists(out / "train_report.json"));
  CHECK(fs::exists(out / "train_report.csv"));
  CHECK(fs::exists(out / "checkpoint-final" / "manifest.json"));
  CHECK(fs::exists(out / "checkpoints" / "epoch0002" / "manifest.json"));
  CHECK(!fs::exists(out / "incomplete"));
  CHECK(fs::exists(out / "run_meta.json"));

  const std::string report = slurp(out / "train_report.json");
  CHECK(report.find("\"arm\": \"meta_cp\"") != std::string::npos);
  CHECK(report.find("\"epoch_loss\"") != std::string::npos);

  // --seed overrides the config file.
  const fs::path out2 = kWork / "train_run_seed";
  fs::remove_all(out2);
  REQUIRE(run("train --config " + cfg.string() + " --seed 12 --out " + out2.string() +
              " > /dev/null 2>&1") == 0);
  CHECK(slurp(out2 / "train_report.json").find("\"seed\": 12") != std::string::npos);
}

TEST_CASE("train: resume from a checkpoint matches the uninterrupted run") {
  const auto cfg_text = [&](std::size_t epochs, const fs::path& out,
                            const std::string& resume) {
    return "{" + tiny_tasks_json() +
           R"(, "arm": "meta_tr", "seed": 9,
              "optimizer": {"epochs": )" +
           std::to_string(epochs) + R"(, "batch_size": 4, "learning_rate": 0.05},
              "resume_from": ")" +
           resume + R"(", "out_dir": ")" + out.string() + "\"}";
  };

  const fs::path straight = kWork / "resume_straight";
  const fs::path half = kWork / "resume_half";
  const fs::path cont = kWork / "resume_cont";
  for (const auto& d : {straight, half, cont}) fs::remove_all(d);

  const fs::path cfg_straight = kWork / "resume_straight.json";
  write_file(cfg_straight, cfg_text(4, straight, ""));
  REQUIRE(run("train --config " + cfg_straight.string() + " > /dev/null 2>&1") == 0);

  const fs::path cfg_half = kWork / "resume_half.json";
  write_file(cfg_half, cfg_text(2, half, ""));
  REQUIRE(run("train --config " + cfg_half.string() + " > /dev/null 2>&1") == 0);

  const fs::path cfg_cont = kWork / "resume_cont.json";
  write_file(cfg_cont, cfg_text(4, cont, (half / "checkpoint-final").string()));
  REQUIRE(run("train --config " + cfg_cont.string() + " > /dev/null 2>&1") == 0);

  CHECK(same_tree(straight / "checkpoint-final", cont / "checkpoint-final"));
  CHECK(slurp(straight / "train_report.csv") == slurp(cont / "train_report.csv"));

  // Resuming under a different seed is rejected.
  const fs::path bad = kWork / "resume_bad";
  const fs::path cfg_bad = kWork / "resume_bad.json";
  write_file(cfg_bad, cfg_text(4, bad, (half / "checkpoint-final").string()));
  // Rewrite with a different seed by swapping the seed literal.
  std::string text = slurp(cfg_bad);
  const auto pos = text.find("\"seed\": 9");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 9, "\"seed\": 8");
  write_file(cfg_bad, text);
  CHECK(run("train --config " + cfg_bad.string() + " > /dev/null 2>&1") != 0);
}

TEST_CASE("compare: aggregate outputs for a small grid") {
  const fs::path out = kWork / "compare_run";
  fs::remove_all(out);
  const fs::path cfg = kWork / "compare.json";
  write_file(cfg, "{" + tiny_tasks_json() +
                      R"(, "arms": ["original", "lora"], "seeds": [1, 2],
                         "optimizer": {"epochs": 2, "batch_size": 4, "learning_rate": 0.05},
                         "out_dir": ")" +
                      out.string() + "\"}");
  REQUIRE(run("compare --config " + cfg.string() + " > /dev/null 2>&1") == 0);
  CHECK(fs::exists(out / "comparison.json"));
  const std::string csv = slurp(out / "comparison.csv");
  CHECK(csv.rfind("arm,k,mean_accuracy,std_accuracy,seeds,adapter_params", 0) == 0);
  CHECK(csv.find("original,3,") != std::string::npos);
  CHECK(csv.find("lora,3,") != std::string::npos);
  CHECK(!fs::exists(out / "incomplete"));

  const std::string json = slurp(out / "comparison.json");
  CHECK(json.find("\"cells\"") != std::string::npos);
  CHECK(json.find("\"budget\"") != std::string::npos);
}

TEST_CASE("fault hook: the planted defect flips exactly one suite") {
  const fs::path out = kWork / "verify_mutated";
  fs::remove_all(out);
  const fs::path log = kWork / "mutated.log";
  const int status = run("verify --filter adapters --out " + out.string() + " > " +
                             log.string() + " 2>&1",
                         "METALORA_MUTATION=meta_tr_sign_flip");
  CHECK(status != 0);
  const std::string text = slurp(log);
  CHECK(text.find("[FAIL] adapters/meta_tr_delta_oracle") != std::string::npos);

  // Clean environment: the same filter passes.
  CHECK(run("verify --filter adapters --out " + out.string() + " > /dev/null 2>&1") == 0);
}
