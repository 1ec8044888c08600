#include "core/commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "json.hpp"

#include "core/checkpoint.hpp"
#include "core/synthetic.hpp"
#include "core/tensor_io.hpp"
#include "core/train.hpp"
#include "core/verify.hpp"

namespace metalora {
namespace {

namespace fs = std::filesystem;

void say(const LogFn& log, const std::string& line) {
  if (log) log(line);
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << content;
  if (!os) throw IoError("short write to " + path.string());
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// The one place a timestamp is allowed; everything else a run writes is a
// pure function of (config, seed).
void write_run_meta(const fs::path& dir, const std::string& command) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  write_json_file(dir / "run_meta.json", {{"format", "metalora.run_meta.v1"},
                                          {"command", command},
                                          {"started_at", stamp}});
}

fs::path marker_path(const fs::path& dir) { return dir / "incomplete"; }

void place_marker(const fs::path& dir) {
  write_text_file(marker_path(dir), "run started; removed on clean completion\n");
}

void clear_marker(const fs::path& dir) { fs::remove(marker_path(dir)); }

std::string zpad4(std::size_t n) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%04zu", n);
  return buf;
}

template <typename Fn>
int guard(const LogFn& log, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    say(log, strf("error: ", e.what()));
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    say(log, strf("error: ", e.what()));
    return static_cast<int>(ErrorCode::Internal);
  }
}

}  // namespace

int cmd_verify(const std::string& filter_module, const fs::path& report_dir, const LogFn& log) {
  return guard(log, [&] {
    const std::vector<SuiteResult> results = run_verify(filter_module);
    const std::string text = verify_report_text(results);
    std::size_t start = 0;
    while (start < text.size()) {
      const std::size_t nl = text.find('\n', start);
      say(log, text.substr(start, nl - start));
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
    if (!report_dir.empty()) {
      fs::create_directories(report_dir);
      write_text_file(report_dir / "verify_report.txt", text);
      write_json_file(report_dir / "verify_report.json", verify_report_json(results));
    }
    return verify_passed(results) ? 0 : static_cast<int>(ErrorCode::VerifyFailed);
  });
}

namespace {

nlohmann::json task_spec_json(const TaskSetSpec& spec) {
  return {{"tasks", spec.tasks},
          {"classes_per_task", spec.classes_per_task},
          {"train_per_class", spec.train_per_class},
          {"test_per_class", spec.test_per_class},
          {"height", spec.height},
          {"width", spec.width},
          {"channels", spec.channels},
          {"rotation_offset", spec.rotation_offset},
          {"rotation_step", spec.rotation_step},
          {"color_offset", spec.color_offset},
          {"color_step", spec.color_step},
          {"margin", spec.margin},
          {"jitter", spec.jitter},
          {"angle_noise", spec.angle_noise},
          {"pixel_noise", spec.pixel_noise},
          {"rng_seed", spec.rng_seed}};
}

}  // namespace

int cmd_gen_data(const fs::path& config_path, const LogFn& log) {
  return guard(log, [&] {
    const RunConfig cfg = load_run_config(config_path);
    const fs::path root = fs::path(cfg.out_dir) / "data";
    fs::create_directories(root);
    place_marker(root);
    write_run_meta(root, "gen-data");

    for (const std::uint64_t seed : cfg.seeds) {
      const TaskSetSpec spec = adaptation_tasks(cfg, seed);
      const fs::path seed_dir = root / strf("seed", seed);

      nlohmann::json index;
      index["format"] = "metalora.dataset.v1";
      index["seed"] = seed;
      index["spec"] = task_spec_json(spec);
      nlohmann::json task_rows = nlohmann::json::array();
      for (std::size_t t = 0; t < spec.tasks; ++t) {
        const TaskTransform tr = spec.transform(t);
        task_rows.push_back(
            {{"task", t}, {"rotation", tr.rotation}, {"color_phase", tr.color_phase}});
      }
      index["tasks"] = task_rows;

      nlohmann::json rows = nlohmann::json::array();
      for (const Split split : {Split::Train, Split::Test}) {
        const std::vector<Sample> samples = make_split(spec, split);
        const fs::path split_dir = seed_dir / split_name(split);
        fs::create_directories(split_dir);
        for (std::size_t i = 0; i < samples.size(); ++i) {
          const std::string file = strf(split_name(split), "/", zpad4(i));
          save_tensor(seed_dir / file, samples[i].x);
          rows.push_back({{"file", file},
                          {"split", split_name(split)},
                          {"index", i},
                          {"task", samples[i].task},
                          {"class", samples[i].cls},
                          {"label", samples[i].label}});
        }
      }
      index["samples"] = rows;
      write_json_file(seed_dir / "index.json", index);
      say(log, strf("seed ", seed, ": ", rows.size(), " samples under ", seed_dir.string()));
    }

    clear_marker(root);
    return 0;
  });
}

int cmd_train(const fs::path& config_path, const std::optional<std::uint64_t>& seed_override,
              const std::string& out_override, const LogFn& log) {
  return guard(log, [&] {
    RunConfig cfg = load_run_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    cfg.validate();
    const ArmKind kind = arm_kind_from_name(cfg.arm);

    const fs::path out = cfg.out_dir;
    fs::create_directories(out);
    place_marker(out);
    write_run_meta(out, "train");

    const TaskSetSpec tasks = adaptation_tasks(cfg, cfg.seed);
    const std::vector<Sample> train_samples = make_split(tasks, Split::Train);
    const std::vector<Sample> test_samples = make_split(tasks, Split::Test);

    TrainState st;
    if (!cfg.resume_from.empty()) {
      st = load_train_state(cfg.resume_from);
      if (st.arm.kind != kind) {
        throw ConfigError(strf("checkpoint arm '", arm_kind_name(st.arm.kind),
                               "' does not match configured arm '", cfg.arm, "'"));
      }
      if (st.rng_seed != cfg.seed) {
        throw ConfigError(strf("checkpoint seed ", st.rng_seed,
                               " does not match configured seed ", cfg.seed));
      }
      st.opt.cfg = cfg.optimizer;
      say(log, strf("resumed ", cfg.arm, " seed ", cfg.seed, " at epoch ", st.epoch));
    } else {
      say(log, strf("pretraining base (seed ", cfg.seed, ", ", cfg.pretrain.epochs, " epochs)"));
      const BaseNet base = pretrain_base(cfg, cfg.seed);
      st = init_train_state(cfg, kind, cfg.seed, base);
    }

    const auto on_epoch = [&](const TrainState& s) {
      say(log, strf("epoch ", s.epoch, "/", cfg.optimizer.epochs, "  loss ", s.epoch_loss.back()));
      if (cfg.checkpoint_every > 0 && s.epoch % cfg.checkpoint_every == 0 &&
          s.epoch < cfg.optimizer.epochs) {
        const fs::path ck = out / "checkpoints" / strf("epoch", zpad4(s.epoch));
        save_train_state(ck, s);
        say(log, "checkpoint written: " + ck.string());
      }
    };
    train_epochs(st, cfg, train_samples, on_epoch);

    TrainReport report;
    report.arm = cfg.arm;
    report.seed = cfg.seed;
    report.epoch_loss = st.epoch_loss;
    report.adapter_params = st.arm.adapter_param_count();
    report.trainable_params = st.arm.trainable_param_count();
    report.knn = evaluate_knn(cfg, st.base, st.arm, train_samples, test_samples);

    save_train_state(out / "checkpoint-final", st);
    write_json_file(out / "train_report.json", train_report_json(report, cfg));
    write_text_file(out / "train_report.csv", train_report_csv(report));
    for (const auto& [k, acc] : report.knn) {
      say(log, strf("knn@", k, " accuracy: ", acc));
    }

    clear_marker(out);
    say(log, "train outputs written to " + out.string());
    return 0;
  });
}

int cmd_compare(const fs::path& config_path, const LogFn& log) {
  return guard(log, [&] {
    const RunConfig cfg = load_run_config(config_path);
    const fs::path out = cfg.out_dir;
    fs::create_directories(out);
    place_marker(out);
    write_run_meta(out, "compare");

    const ComparisonTable table = run_comparison(cfg, log);
    write_json_file(out / "comparison.json", comparison_json(table, cfg));
    const std::string csv = comparison_csv(table, cfg);
    write_text_file(out / "comparison.csv", csv);

    for (const auto& w : table.warnings) say(log, "warning: " + w);
    std::size_t start = 0;
    while (start < csv.size()) {
      const std::size_t nl = csv.find('\n', start);
      say(log, csv.substr(start, nl - start));
      if (nl == std::string::npos) break;
      start = nl + 1;
    }

    clear_marker(out);
    say(log, "comparison written to " + out.string());
    return 0;
  });
}

}  // namespace metalora
