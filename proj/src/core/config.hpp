#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "core/meta_net.hpp"
#include "core/model.hpp"
#include "core/synthetic.hpp"

namespace metalora {

enum class OptimizerKind { Sgd, Adam };
const char* optimizer_kind_name(OptimizerKind k);
OptimizerKind optimizer_kind_from_name(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
};

struct ModelConfig {
  std::size_t kernel = 3;
  std::size_t conv_channels = 8;
  Activation activation = Activation::Tanh;
};

// Ranks chosen so every arm lands on the same adapter parameter count
// (CP-style factors grow linearly in R, TR quadratically).
struct AdapterConfig {
  std::size_t lora_rank = 4;
  std::size_t multi_lora_rank = 1;
  std::size_t meta_cp_rank = 4;
  std::size_t meta_tr_rank = 2;
  double scale = 1.0;
  bool batch_mean_seed = false;
};

struct MappingConfig {
  std::size_t hidden_layers = 1;
  std::size_t hidden_width = 0;  // 0 -> 2 * rank
};

struct ExtractorConfig {
  FeatureExtractor::Kind kind = FeatureExtractor::Kind::PooledConv;
  std::size_t features = 4;
  std::size_t kernel = 3;
};

// The base net is pretrained on the same global classes under shifted task
// transforms, then frozen; the offsets control how far the adaptation
// distribution sits from the pretraining one.
struct PretrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  double rotation_offset = 0.35;
  double color_offset = 0.75;
};

struct KnnConfig {
  std::vector<std::size_t> ks = {5, 10};
};

struct RunConfig {
  ModelConfig model;
  AdapterConfig adapters;
  MappingConfig mapping_net;
  ExtractorConfig extractor;
  TaskSetSpec tasks;  // rng_seed here is ignored; seeds below drive everything
  PretrainConfig pretrain;
  OptimizerConfig optimizer;
  KnnConfig knn;
  std::string arm = "lora";                  // train
  std::vector<std::string> arms = {"original", "lora", "multi_lora", "meta_cp", "meta_tr"};
  std::uint64_t seed = 1;                    // gen-data / train
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};  // compare
  std::string out_dir = "out";
  std::string resume_from;
  std::size_t checkpoint_every = 0;  // epochs; 0 = final checkpoint only

  void validate() const;
  ArmSpec arm_spec(ArmKind kind) const;
};

// Strict parse: every unknown key anywhere in the document is an error.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& file);
// Fully resolved round-trip (defaults filled in) for embedding in outputs.
nlohmann::json run_config_to_json(const RunConfig& c);

}  // namespace metalora
