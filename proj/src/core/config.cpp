#include "core/config.hpp"

#include <fstream>
#include <set>

namespace metalora {
namespace {

// Wraps one JSON object; every key must be claimed by a getter or done()
// throws, so typos and stale keys never pass silently.
class StrictObj {
 public:
  StrictObj(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(strf(path_, ".", key, ": ", e.what()));
    }
  }

  void get_enum(const char* key, std::string& out) { get<std::string>(key, out); }

  // Nested object, or nullptr when absent.
  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void done() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(strf(path_, ": unknown key '", key, "'"));
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_model(const nlohmann::json& j, ModelConfig& c) {
  StrictObj o(j, "model");
  o.get("kernel", c.kernel);
  o.get("conv_channels", c.conv_channels);
  std::string act = activation_name(c.activation);
  o.get_enum("activation", act);
  c.activation = activation_from_name(act);
  o.done();
}

void parse_adapters(const nlohmann::json& j, AdapterConfig& c) {
  StrictObj o(j, "adapters");
  o.get("lora_rank", c.lora_rank);
  o.get("multi_lora_rank", c.multi_lora_rank);
  o.get("meta_cp_rank", c.meta_cp_rank);
  o.get("meta_tr_rank", c.meta_tr_rank);
  o.get("scale", c.scale);
  o.get("batch_mean_seed", c.batch_mean_seed);
  o.done();
}

void parse_mapping(const nlohmann::json& j, MappingConfig& c) {
  StrictObj o(j, "mapping_net");
  o.get("hidden_layers", c.hidden_layers);
  o.get("hidden_width", c.hidden_width);
  o.done();
}

void parse_extractor(const nlohmann::json& j, ExtractorConfig& c) {
  StrictObj o(j, "extractor");
  std::string kind = extractor_kind_name(c.kind);
  o.get_enum("kind", kind);
  c.kind = extractor_kind_from_name(kind);
  o.get("features", c.features);
  o.get("kernel", c.kernel);
  o.done();
}

void parse_tasks(const nlohmann::json& j, TaskSetSpec& c) {
  StrictObj o(j, "tasks");
  o.get("tasks", c.tasks);
  o.get("classes_per_task", c.classes_per_task);
  o.get("train_per_class", c.train_per_class);
  o.get("test_per_class", c.test_per_class);
  o.get("height", c.height);
  o.get("width", c.width);
  o.get("channels", c.channels);
  o.get("rotation_offset", c.rotation_offset);
  o.get("rotation_step", c.rotation_step);
  o.get("color_offset", c.color_offset);
  o.get("color_step", c.color_step);
  o.get("margin", c.margin);
  o.get("jitter", c.jitter);
  o.get("angle_noise", c.angle_noise);
  o.get("pixel_noise", c.pixel_noise);
  o.done();
}

void parse_pretrain(const nlohmann::json& j, PretrainConfig& c) {
  StrictObj o(j, "pretrain");
  o.get("epochs", c.epochs);
  o.get("learning_rate", c.learning_rate);
  o.get("rotation_offset", c.rotation_offset);
  o.get("color_offset", c.color_offset);
  o.done();
}

void parse_optimizer(const nlohmann::json& j, OptimizerConfig& c) {
  StrictObj o(j, "optimizer");
  std::string kind = optimizer_kind_name(c.kind);
  o.get_enum("kind", kind);
  c.kind = optimizer_kind_from_name(kind);
  o.get("learning_rate", c.learning_rate);
  o.get("momentum", c.momentum);
  o.get("beta1", c.beta1);
  o.get("beta2", c.beta2);
  o.get("eps", c.eps);
  o.get("batch_size", c.batch_size);
  o.get("epochs", c.epochs);
  o.done();
}

void parse_knn(const nlohmann::json& j, KnnConfig& c) {
  StrictObj o(j, "knn");
  o.get("ks", c.ks);
  o.done();
}

}  // namespace

const char* optimizer_kind_name(OptimizerKind k) {
  return k == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_kind_from_name(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError(strf("unknown optimizer '", name, "'"));
}

void RunConfig::validate() const {
  if (model.kernel == 0 || model.kernel % 2 == 0) {
    throw ConfigError("model.kernel must be odd (same padding)");
  }
  if (model.conv_channels == 0) throw ConfigError("model.conv_channels must be >= 1");
  if (adapters.lora_rank == 0 || adapters.multi_lora_rank == 0 || adapters.meta_cp_rank == 0 ||
      adapters.meta_tr_rank == 0) {
    throw ConfigError("adapter ranks must be >= 1");
  }
  if (extractor.features == 0) throw ConfigError("extractor.features must be >= 1");
  if (extractor.kind == FeatureExtractor::Kind::PooledConv && extractor.kernel % 2 == 0) {
    throw ConfigError("extractor.kernel must be odd");
  }
  tasks.validate();
  if (optimizer.learning_rate < 0) throw ConfigError("optimizer.learning_rate must be >= 0");
  if (optimizer.momentum < 0 || optimizer.momentum >= 1) {
    throw ConfigError("optimizer.momentum must lie in [0, 1)");
  }
  if (optimizer.batch_size == 0) throw ConfigError("optimizer.batch_size must be >= 1");
  if (optimizer.epochs == 0) throw ConfigError("optimizer.epochs must be >= 1");
  if (pretrain.learning_rate < 0) throw ConfigError("pretrain.learning_rate must be >= 0");
  if (knn.ks.empty()) throw ConfigError("knn.ks must list at least one K");
  for (std::size_t k : knn.ks)
    if (k == 0) throw ConfigError("knn.ks entries must be >= 1");
  arm_kind_from_name(arm);
  if (arms.empty()) throw ConfigError("arms must list at least one arm");
  std::set<std::string> seen;
  for (const auto& a : arms) {
    arm_kind_from_name(a);
    if (!seen.insert(a).second) throw ConfigError(strf("arm '", a, "' listed twice"));
  }
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

ArmSpec RunConfig::arm_spec(ArmKind kind) const {
  ArmSpec s;
  s.kind = kind;
  switch (kind) {
    case ArmKind::Original: break;
    case ArmKind::Lora: s.rank = adapters.lora_rank; break;
    case ArmKind::MultiLora: s.rank = adapters.multi_lora_rank; break;
    case ArmKind::MetaCP: s.rank = adapters.meta_cp_rank; break;
    case ArmKind::MetaTR: s.rank = adapters.meta_tr_rank; break;
  }
  s.tasks = tasks.tasks;
  s.scale = adapters.scale;
  s.batch_mean_seed = adapters.batch_mean_seed;
  s.map_hidden_layers = mapping_net.hidden_layers;
  s.map_hidden_width = mapping_net.hidden_width;
  s.extractor = extractor.kind;
  s.extractor_features = extractor.features;
  s.extractor_kernel = extractor.kernel;
  return s;
}

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  StrictObj o(j, "config");
  if (const auto* m = o.child("model")) parse_model(*m, c.model);
  if (const auto* a = o.child("adapters")) parse_adapters(*a, c.adapters);
  if (const auto* m = o.child("mapping_net")) parse_mapping(*m, c.mapping_net);
  if (const auto* e = o.child("extractor")) parse_extractor(*e, c.extractor);
  if (const auto* t = o.child("tasks")) parse_tasks(*t, c.tasks);
  if (const auto* p = o.child("pretrain")) parse_pretrain(*p, c.pretrain);
  if (const auto* op = o.child("optimizer")) parse_optimizer(*op, c.optimizer);
  if (const auto* k = o.child("knn")) parse_knn(*k, c.knn);
  o.get("arm", c.arm);
  o.get("arms", c.arms);
  o.get("seed", c.seed);
  o.get("seeds", c.seeds);
  o.get("out_dir", c.out_dir);
  o.get("resume_from", c.resume_from);
  o.get("checkpoint_every", c.checkpoint_every);
  o.done();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot open config file " + file.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(strf("config ", file.string(), " is not valid JSON: ", e.what()));
  }
  return parse_run_config(j);
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["model"] = {{"kernel", c.model.kernel},
                {"conv_channels", c.model.conv_channels},
                {"activation", activation_name(c.model.activation)}};
  j["adapters"] = {{"lora_rank", c.adapters.lora_rank},
                   {"multi_lora_rank", c.adapters.multi_lora_rank},
                   {"meta_cp_rank", c.adapters.meta_cp_rank},
                   {"meta_tr_rank", c.adapters.meta_tr_rank},
                   {"scale", c.adapters.scale},
                   {"batch_mean_seed", c.adapters.batch_mean_seed}};
  j["mapping_net"] = {{"hidden_layers", c.mapping_net.hidden_layers},
                      {"hidden_width", c.mapping_net.hidden_width}};
  j["extractor"] = {{"kind", extractor_kind_name(c.extractor.kind)},
                    {"features", c.extractor.features},
                    {"kernel", c.extractor.kernel}};
  j["tasks"] = {{"tasks", c.tasks.tasks},
                {"classes_per_task", c.tasks.classes_per_task},
                {"train_per_class", c.tasks.train_per_class},
                {"test_per_class", c.tasks.test_per_class},
                {"height", c.tasks.height},
                {"width", c.tasks.width},
                {"channels", c.tasks.channels},
                {"rotation_offset", c.tasks.rotation_offset},
                {"rotation_step", c.tasks.rotation_step},
                {"color_offset", c.tasks.color_offset},
                {"color_step", c.tasks.color_step},
                {"margin", c.tasks.margin},
                {"jitter", c.tasks.jitter},
                {"angle_noise", c.tasks.angle_noise},
                {"pixel_noise", c.tasks.pixel_noise}};
  j["pretrain"] = {{"epochs", c.pretrain.epochs},
                   {"learning_rate", c.pretrain.learning_rate},
                   {"rotation_offset", c.pretrain.rotation_offset},
                   {"color_offset", c.pretrain.color_offset}};
  j["optimizer"] = {{"kind", optimizer_kind_name(c.optimizer.kind)},
                    {"learning_rate", c.optimizer.learning_rate},
                    {"momentum", c.optimizer.momentum},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"batch_size", c.optimizer.batch_size},
                    {"epochs", c.optimizer.epochs}};
  j["knn"] = {{"ks", c.knn.ks}};
  j["arm"] = c.arm;
  j["arms"] = c.arms;
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["out_dir"] = c.out_dir;
  j["resume_from"] = c.resume_from;
  j["checkpoint_every"] = c.checkpoint_every;
  return j;
}

}  // namespace metalora
