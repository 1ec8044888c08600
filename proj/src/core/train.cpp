#include "core/train.hpp"

#include <algorithm>
#include <cstdio>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "core/interrupt.hpp"
#include "core/knn.hpp"
#include "core/stats.hpp"

namespace metalora {
namespace {

std::size_t thread_budget() {
  const char* env = std::getenv("METALORA_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const unsigned long n = std::strtoul(env, &end, 10);
  if (*env == '-' || end == nullptr || *end != '\0' || n == 0) {
    throw ConfigError(strf("METALORA_THREADS must be a positive integer, got '", env, "'"));
  }
  return static_cast<std::size_t>(n);
}

// One optimizer pass over the data in `order`; returns the mean sample loss.
double epoch_pass(const BaseNet& base, Arm& arm, const std::vector<Sample>& data,
                  std::span<const std::size_t> order, const ParamSet& ps, Optimizer& opt) {
  const std::size_t batch = opt.cfg.batch_size;
  double loss_sum = 0.0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch) {
    throw_if_interrupted();
    const std::size_t end = std::min(begin + batch, order.size());
    std::vector<DenseTensor> xs;
    std::vector<std::size_t> labels, tasks;
    xs.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const Sample& s = data[order[i]];
      xs.push_back(s.x);
      labels.push_back(s.label);
      tasks.push_back(s.task);
    }
    TapedBatch tb = build_batch_loss(base, arm, xs, labels, tasks);
    loss_sum += tb.tape.value(tb.loss)[0] * static_cast<double>(xs.size());
    if (!ps.entries.empty()) {
      tb.tape.backward(tb.loss);
      std::vector<DenseTensor> grads;
      grads.reserve(tb.leaf_ids.size());
      for (Tape::NodeId id : tb.leaf_ids) grads.push_back(tb.tape.grad(id));
      opt.step(ps, grads);
    }
  }
  return loss_sum / static_cast<double>(order.size());
}

}  // namespace

//---------------------------------------------------------------------------
// optimizer

void Optimizer::init(const ParamSet& ps) {
  m1.clear();
  m2.clear();
  step_count = 0;
  for (const auto& [name, t] : ps.entries) m1.push_back(DenseTensor::zeros(t->shape()));
  if (cfg.kind == OptimizerKind::Adam) {
    for (const auto& [name, t] : ps.entries) m2.push_back(DenseTensor::zeros(t->shape()));
  }
}

void Optimizer::step(const ParamSet& ps, std::span<const DenseTensor> grads) {
  if (grads.size() != ps.entries.size() || m1.size() != ps.entries.size()) {
    throw ArgError("optimizer: gradient/state count does not match the parameter set");
  }
  ++step_count;
  const double lr = cfg.learning_rate;
  for (std::size_t i = 0; i < ps.entries.size(); ++i) {
    DenseTensor& p = *ps.entries[i].second;
    const DenseTensor& g = grads[i];
    if (!p.same_shape(g)) {
      throw ShapeError(strf("optimizer: gradient shape ", shape_str(g.shape()),
                            " does not match parameter ", ps.entries[i].first));
    }
    if (cfg.kind == OptimizerKind::Sgd) {
      for (std::size_t j = 0; j < p.size(); ++j) {
        m1[i][j] = cfg.momentum * m1[i][j] + g[j];
        p[j] -= lr * m1[i][j];
      }
    } else {
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count));
      for (std::size_t j = 0; j < p.size(); ++j) {
        m1[i][j] = cfg.beta1 * m1[i][j] + (1.0 - cfg.beta1) * g[j];
        m2[i][j] = cfg.beta2 * m2[i][j] + (1.0 - cfg.beta2) * g[j] * g[j];
        const double mhat = m1[i][j] / c1;
        const double vhat = m2[i][j] / c2;
        p[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
      }
    }
  }
}

//---------------------------------------------------------------------------
// data + pretraining

TaskSetSpec adaptation_tasks(const RunConfig& cfg, std::uint64_t seed) {
  TaskSetSpec spec = cfg.tasks;
  spec.rng_seed = derive_seed(seed, "task-data");
  return spec;
}

TaskSetSpec pretrain_tasks(const RunConfig& cfg, std::uint64_t seed) {
  TaskSetSpec spec = cfg.tasks;
  spec.rotation_offset += cfg.pretrain.rotation_offset;
  spec.color_offset += cfg.pretrain.color_offset;
  spec.rng_seed = derive_seed(seed, "pretrain-data");
  return spec;
}

BaseNet pretrain_base(const RunConfig& cfg, std::uint64_t seed) {
  Rng init_rng(derive_seed(seed, "base-init"));
  BaseNet net = init_base_net(cfg.model.kernel, cfg.tasks.channels, cfg.model.conv_channels,
                              cfg.tasks.global_classes(), init_rng);
  net.act = cfg.model.activation;
  if (cfg.pretrain.epochs == 0) return net;

  const std::vector<Sample> data = make_split(pretrain_tasks(cfg, seed), Split::Train);
  ParamSet ps = collect_base_params(net);
  Optimizer opt;
  opt.cfg.kind = OptimizerKind::Sgd;
  opt.cfg.learning_rate = cfg.pretrain.learning_rate;
  opt.cfg.momentum = 0.9;
  opt.cfg.batch_size = cfg.optimizer.batch_size;
  opt.init(ps);
  for (std::size_t epoch = 0; epoch < cfg.pretrain.epochs; ++epoch) {
    Rng order_rng(derive_seed(seed, "pretrain-batch", epoch));
    const std::vector<std::size_t> order = order_rng.permutation(data.size());
    // Pretraining reuses the adaptation loop mechanics with the base weights
    // as the leaves.
    const std::size_t batch = opt.cfg.batch_size;
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      throw_if_interrupted();
      const std::size_t end = std::min(begin + batch, order.size());
      std::vector<DenseTensor> xs;
      std::vector<std::size_t> labels;
      for (std::size_t i = begin; i < end; ++i) {
        xs.push_back(data[order[i]].x);
        labels.push_back(data[order[i]].label);
      }
      TapedBatch tb = build_base_loss(net, xs, labels);
      loss_sum += tb.tape.value(tb.loss)[0] * static_cast<double>(xs.size());
      tb.tape.backward(tb.loss);
      std::vector<DenseTensor> grads;
      for (Tape::NodeId id : tb.leaf_ids) grads.push_back(tb.tape.grad(id));
      opt.step(ps, grads);
    }
    const double loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(loss)) {
      throw DivergedError(strf("pretraining diverged at epoch ", epoch, " (loss ", loss, ")"));
    }
  }
  return net;
}

//---------------------------------------------------------------------------
// adaptation

TrainState init_train_state(const RunConfig& cfg, ArmKind kind, std::uint64_t seed,
                            const BaseNet& base) {
  TrainState st;
  st.base = base;
  Rng arm_rng(derive_seed(seed, "arm-init", static_cast<std::uint64_t>(kind)));
  st.arm = make_arm(cfg.arm_spec(kind), st.base, cfg.tasks.height, cfg.tasks.width, arm_rng);
  st.opt.cfg = cfg.optimizer;
  ParamSet ps = collect_params(st.arm);
  st.opt.init(ps);
  st.rng_seed = seed;
  st.epoch = 0;
  return st;
}

std::vector<double> train_epochs(TrainState& state, const RunConfig& cfg,
                                 const std::vector<Sample>& train_samples,
                                 const std::function<void(const TrainState&)>& on_epoch) {
  if (train_samples.empty()) throw ArgError("train_epochs: no training samples");
  ParamSet ps = collect_params(state.arm);
  for (std::size_t epoch = state.epoch; epoch < cfg.optimizer.epochs; ++epoch) {
    Rng order_rng(derive_seed(state.rng_seed, "batch-order", epoch));
    const std::vector<std::size_t> order = order_rng.permutation(train_samples.size());
    const double loss = epoch_pass(state.base, state.arm, train_samples, order, ps, state.opt);
    if (!std::isfinite(loss)) {
      throw DivergedError(strf("training diverged at epoch ", epoch, " (loss ", loss, ")"));
    }
    state.epoch_loss.push_back(loss);
    state.epoch = epoch + 1;
    if (on_epoch) on_epoch(state);
  }
  return state.epoch_loss;
}

EmbeddingSet embed_samples(const BaseNet& base, const Arm& arm, std::span<const Sample> samples) {
  EmbeddingSet out;
  out.embeddings.reserve(samples.size());
  out.labels.reserve(samples.size());
  for (const Sample& s : samples) {
    out.embeddings.push_back(forward_adapted(base, arm, s.x, s.task).embedding);
    out.labels.push_back(s.label);
  }
  return out;
}

std::map<std::size_t, double> evaluate_knn(const RunConfig& cfg, const BaseNet& base,
                                           const Arm& arm, const std::vector<Sample>& train,
                                           const std::vector<Sample>& test) {
  const EmbeddingSet tr = embed_samples(base, arm, train);
  const EmbeddingSet te = embed_samples(base, arm, test);
  std::map<std::size_t, double> out;
  for (std::size_t k : cfg.knn.ks) {
    out[k] = knn_accuracy(tr.embeddings, tr.labels, te.embeddings, te.labels, k);
  }
  return out;
}

TrainReport run_single(const RunConfig& cfg, ArmKind kind, std::uint64_t seed,
                       const BaseNet& base,
                       const std::function<void(const TrainState&)>& on_epoch,
                       TrainState* out_state) {
  const TaskSetSpec tasks = adaptation_tasks(cfg, seed);
  const std::vector<Sample> train = make_split(tasks, Split::Train);
  const std::vector<Sample> test = make_split(tasks, Split::Test);

  TrainState st = init_train_state(cfg, kind, seed, base);
  TrainReport report;
  report.arm = arm_kind_name(kind);
  report.seed = seed;
  report.epoch_loss = train_epochs(st, cfg, train, on_epoch);
  report.adapter_params = st.arm.adapter_param_count();
  report.trainable_params = st.arm.trainable_param_count();
  report.knn = evaluate_knn(cfg, st.base, st.arm, train, test);
  if (out_state != nullptr) *out_state = std::move(st);
  return report;
}

//---------------------------------------------------------------------------
// comparison harness

ComparisonTable run_comparison(const RunConfig& cfg,
                               const std::function<void(const std::string&)>& log) {
  cfg.validate();
  std::vector<ArmKind> kinds;
  for (const auto& name : cfg.arms) kinds.push_back(arm_kind_from_name(name));

  ComparisonTable table;

  // Budget parity across the adapter-carrying arms, checked on throwaway
  // arms before any training is paid for.
  {
    Rng probe_rng(0);
    BaseNet probe = init_base_net(cfg.model.kernel, cfg.tasks.channels, cfg.model.conv_channels,
                                  cfg.tasks.global_classes(), probe_rng);
    std::size_t lo = 0, hi = 0;
    std::string lo_arm, hi_arm;
    for (ArmKind k : kinds) {
      if (k == ArmKind::Original) continue;
      Rng arm_rng(1);
      const Arm arm = make_arm(cfg.arm_spec(k), probe, cfg.tasks.height, cfg.tasks.width, arm_rng);
      const std::size_t n = arm.adapter_param_count();
      if (lo == 0 || n < lo) { lo = n; lo_arm = arm_kind_name(k); }
      if (n > hi) { hi = n; hi_arm = arm_kind_name(k); }
    }
    if (lo != 0 && static_cast<double>(hi) > 1.1 * static_cast<double>(lo)) {
      table.budget_mismatch = true;
      table.warnings.push_back(strf("adapter budgets differ beyond 10%: ", lo_arm, "=", lo, " vs ",
                                    hi_arm, "=", hi));
    }
  }
  if (log) {
    for (const auto& w : table.warnings) log("warning: " + w);
  }

  // One shared pretrained base per seed; arms adapt copies of it.
  std::vector<BaseNet> bases;
  bases.reserve(cfg.seeds.size());
  for (std::uint64_t seed : cfg.seeds) {
    throw_if_interrupted();
    if (log) log(strf("pretraining base for seed ", seed));
    bases.push_back(pretrain_base(cfg, seed));
  }

  const std::size_t jobs = kinds.size() * cfg.seeds.size();
  table.cells.resize(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;

  auto worker = [&]() {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs) return;
      const std::size_t arm_idx = j / cfg.seeds.size();
      const std::size_t seed_idx = j % cfg.seeds.size();
      try {
        throw_if_interrupted();
        if (log) {
          std::lock_guard<std::mutex> lk(log_mu);
          log(strf("training ", arm_kind_name(kinds[arm_idx]), " seed ", cfg.seeds[seed_idx]));
        }
        table.cells[j] = run_single(cfg, kinds[arm_idx], cfg.seeds[seed_idx], bases[seed_idx]);
      } catch (...) {
        errors[j] = std::current_exception();
        return;
      }
    }
  };

  const std::size_t threads = std::min(thread_budget(), jobs);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return table;
}

//---------------------------------------------------------------------------
// report serialization

namespace {

nlohmann::json report_cell_json(const TrainReport& r) {
  nlohmann::json knn = nlohmann::json::object();
  for (const auto& [k, acc] : r.knn) knn[std::to_string(k)] = acc;
  return {{"arm", r.arm},
          {"seed", r.seed},
          {"epoch_loss", r.epoch_loss},
          {"adapter_params", r.adapter_params},
          {"trainable_params", r.trainable_params},
          {"knn", knn}};
}

}  // namespace

nlohmann::json train_report_json(const TrainReport& r, const RunConfig& cfg) {
  nlohmann::json j = report_cell_json(r);
  j["format"] = "metalora.train_report.v1";
  j["config"] = run_config_to_json(cfg);
  return j;
}

// Display values are percent with two decimals; the JSON reports keep the
// raw fractions.
std::string pct2(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

std::string train_report_csv(const TrainReport& r) {
  std::string csv = "arm,seed,k,accuracy\n";
  for (const auto& [k, acc] : r.knn) {
    csv += strf(r.arm, ",", r.seed, ",", k, ",", pct2(acc), "\n");
  }
  return csv;
}

nlohmann::json comparison_json(const ComparisonTable& t, const RunConfig& cfg) {
  nlohmann::json j;
  j["format"] = "metalora.comparison.v1";
  j["cells"] = nlohmann::json::array();
  for (const auto& cell : t.cells) j["cells"].push_back(report_cell_json(cell));

  // Per-arm aggregates, in config order, per K.
  nlohmann::json summary = nlohmann::json::array();
  std::map<std::string, std::map<std::size_t, std::vector<double>>> by_arm;
  std::map<std::string, std::size_t> params_by_arm;
  for (const auto& cell : t.cells) {
    for (const auto& [k, acc] : cell.knn) by_arm[cell.arm][k].push_back(acc);
    params_by_arm[cell.arm] = cell.adapter_params;
  }
  for (const auto& arm : cfg.arms) {
    const auto it = by_arm.find(arm);
    if (it == by_arm.end()) continue;
    for (const auto& [k, accs] : it->second) {
      summary.push_back({{"arm", arm},
                         {"k", k},
                         {"mean", mean(accs)},
                         {"std", sample_std(accs)},
                         {"seeds", accs.size()}});
    }
  }
  j["summary"] = summary;

  // Welch's t of each meta arm against the best non-meta arm, per K
  // (reported, never gated on).
  nlohmann::json sig = nlohmann::json::array();
  const std::vector<std::string> static_arms = {"original", "lora", "multi_lora"};
  const std::vector<std::string> meta_arms = {"meta_cp", "meta_tr"};
  for (std::size_t k : cfg.knn.ks) {
    std::string best;
    double best_mean = 0.0;
    for (const auto& arm : static_arms) {
      const auto it = by_arm.find(arm);
      if (it == by_arm.end() || !it->second.count(k)) continue;
      const double m = mean(it->second.at(k));
      if (best.empty() || m > best_mean) {
        best = arm;
        best_mean = m;
      }
    }
    if (best.empty()) continue;
    for (const auto& arm : meta_arms) {
      const auto it = by_arm.find(arm);
      if (it == by_arm.end() || !it->second.count(k)) continue;
      const auto& a = it->second.at(k);
      const auto& b = by_arm.at(best).at(k);
      nlohmann::json entry = {{"k", k}, {"meta_arm", arm}, {"baseline", best}};
      if (a.size() >= 2 && b.size() >= 2) {
        const WelchResult w = welch_t_test(a, b);
        entry["t"] = w.t;
        entry["df"] = w.df;
        entry["p"] = w.p;
      } else {
        entry["p"] = nullptr;
      }
      sig.push_back(entry);
    }
  }
  j["significance"] = sig;

  nlohmann::json budget = nlohmann::json::object();
  for (const auto& [arm, n] : params_by_arm) budget[arm] = n;
  j["budget"] = {{"mismatch", t.budget_mismatch}, {"adapter_params", budget}};
  j["warnings"] = t.warnings;
  j["config"] = run_config_to_json(cfg);
  return j;
}

std::string comparison_csv(const ComparisonTable& t, const RunConfig& cfg) {
  // Aggregate table in config arm order; per-cell numbers live in the JSON.
  std::map<std::string, std::map<std::size_t, std::vector<double>>> by_arm;
  std::map<std::string, std::size_t> params_by_arm;
  for (const auto& cell : t.cells) {
    for (const auto& [k, acc] : cell.knn) by_arm[cell.arm][k].push_back(acc);
    params_by_arm[cell.arm] = cell.adapter_params;
  }
  std::string csv = "arm,k,mean_accuracy,std_accuracy,seeds,adapter_params\n";
  for (const auto& arm : cfg.arms) {
    const auto it = by_arm.find(arm);
    if (it == by_arm.end()) continue;
    for (const auto& [k, accs] : it->second) {
      csv += strf(arm, ",", k, ",", pct2(mean(accs)), ",", pct2(sample_std(accs)), ",",
                  accs.size(), ",", params_by_arm[arm], "\n");
    }
  }
  return csv;
}

}  // namespace metalora
