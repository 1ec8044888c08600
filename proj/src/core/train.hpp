#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "core/config.hpp"
#include "core/model.hpp"
#include "core/synthetic.hpp"

namespace metalora {

// First-moment (SGD momentum) / twin-moment (Adam) buffers sit parallel to
// the ParamSet entry order, which is canonical per arm.
struct Optimizer {
  OptimizerConfig cfg;
  std::vector<DenseTensor> m1;
  std::vector<DenseTensor> m2;  // Adam only
  std::size_t step_count = 0;

  void init(const ParamSet& ps);
  void step(const ParamSet& ps, std::span<const DenseTensor> grads);
};

struct TrainState {
  BaseNet base;  // frozen during adaptation
  Arm arm;
  Optimizer opt;
  std::uint64_t rng_seed = 0;           // root seed of this run
  std::size_t epoch = 0;                // epochs completed so far
  std::vector<double> epoch_loss;       // mean sample loss per completed epoch
};

struct TrainReport {
  std::string arm;
  std::uint64_t seed = 0;
  std::vector<double> epoch_loss;  // full history, resumed runs included
  std::size_t adapter_params = 0;
  std::size_t trainable_params = 0;
  std::map<std::size_t, double> knn;  // K -> held-out accuracy
};

// Data splits for one run.  The pretraining distribution reuses the task
// geometry under shifted transforms, so the frozen base starts out of
// distribution relative to the adaptation tasks.
TaskSetSpec adaptation_tasks(const RunConfig& cfg, std::uint64_t seed);
TaskSetSpec pretrain_tasks(const RunConfig& cfg, std::uint64_t seed);

// Trains a fresh base on the pretraining split and returns it (to be
// treated as frozen from here on).
BaseNet pretrain_base(const RunConfig& cfg, std::uint64_t seed);

// Fresh state for one (arm, seed) run on a pretrained base.
TrainState init_train_state(const RunConfig& cfg, ArmKind kind, std::uint64_t seed,
                            const BaseNet& base);

// Runs epochs [state.epoch, cfg.optimizer.epochs), appending per-epoch mean
// sample loss to the returned curve.  `on_epoch` fires after each completed
// epoch (checkpoint hook).  Throws DivergedError on non-finite loss.
std::vector<double> train_epochs(TrainState& state, const RunConfig& cfg,
                                 const std::vector<Sample>& train_samples,
                                 const std::function<void(const TrainState&)>& on_epoch = {});

// Pooled pre-head embeddings for every sample, straight-line forward.
struct EmbeddingSet {
  std::vector<DenseTensor> embeddings;
  std::vector<std::size_t> labels;  // global labels
};

EmbeddingSet embed_samples(const BaseNet& base, const Arm& arm, std::span<const Sample> samples);

std::map<std::size_t, double> evaluate_knn(const RunConfig& cfg, const BaseNet& base,
                                           const Arm& arm, const std::vector<Sample>& train,
                                           const std::vector<Sample>& test);

// One full (arm, seed) run: pretrain (or reuse `base`), adapt, evaluate.
TrainReport run_single(const RunConfig& cfg, ArmKind kind, std::uint64_t seed,
                       const BaseNet& base,
                       const std::function<void(const TrainState&)>& on_epoch = {},
                       TrainState* out_state = nullptr);

struct ComparisonTable {
  std::vector<TrainReport> cells;  // arm-major, then seed order
  bool budget_mismatch = false;
  std::vector<std::string> warnings;
};

// Every configured arm x seed, pretraining one shared base per seed.  Honors
// METALORA_THREADS for data-parallel cells; results merge in deterministic
// (arm, seed) order regardless of thread count.
ComparisonTable run_comparison(const RunConfig& cfg,
                               const std::function<void(const std::string&)>& log = {});

// Report serialization (schemas in docs/formats.md).  No timestamps: byte
// identical for identical (config, seed).
nlohmann::json train_report_json(const TrainReport& r, const RunConfig& cfg);
std::string train_report_csv(const TrainReport& r);
nlohmann::json comparison_json(const ComparisonTable& t, const RunConfig& cfg);
std::string comparison_csv(const ComparisonTable& t, const RunConfig& cfg);

}  // namespace metalora
