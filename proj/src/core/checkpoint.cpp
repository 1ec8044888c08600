#include "core/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

#include "core/adapters.hpp"
#include "core/tensor_io.hpp"

namespace metalora {
namespace {

namespace fs = std::filesystem;

void write_manifest(const fs::path& dir, const TrainState& st) {
  nlohmann::json m;
  m["format"] = "metalora.train_state.v1";
  m["arm"] = arm_kind_name(st.arm.kind);
  m["seed"] = st.rng_seed;
  m["epoch"] = st.epoch;
  m["epoch_loss"] = st.epoch_loss;
  m["step_count"] = st.opt.step_count;
  m["batch_mean_seed"] = st.arm.batch_mean_seed;
  m["base"] = {{"activation", activation_name(st.base.act)}};
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& set : st.arm.sets) {
    sets.push_back({{"conv", set.conv.has_value()}, {"head", set.head.has_value()}});
  }
  m["sets"] = sets;
  m["maps"] = {{"conv_map", st.arm.conv_map.has_value()},
               {"head_map", st.arm.head_map.has_value()}};
  m["extractor"] = {{"kind", extractor_kind_name(st.arm.extractor.kind)}};
  m["opt"] = {{"m1", st.opt.m1.size()}, {"m2", st.opt.m2.size()}};
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write train-state manifest in " + dir.string());
  os << m.dump(2) << "\n";
}

nlohmann::json read_manifest(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("cannot read train-state manifest in " + dir.string());
  nlohmann::json m;
  try {
    is >> m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(strf("bad train-state manifest in ", dir.string(), ": ", e.what()));
  }
  if (m.value("format", "") != "metalora.train_state.v1") {
    throw IoError("unrecognized train-state manifest format in " + dir.string());
  }
  return m;
}

}  // namespace

void save_train_state(const fs::path& dir, const TrainState& state) {
  fs::create_directories(dir / "base");
  fs::create_directories(dir / "opt");
  if (state.arm.extractor.kind == FeatureExtractor::Kind::PooledConv) {
    fs::create_directories(dir / "extractor");
  }
  write_manifest(dir, state);
  save_tensor(dir / "base" / "conv_w", state.base.conv_w);
  save_tensor(dir / "base" / "head_w", state.base.head_w);
  save_tensor(dir / "base" / "head_b", state.base.head_b);
  for (std::size_t s = 0; s < state.arm.sets.size(); ++s) {
    const auto& set = state.arm.sets[s];
    const fs::path set_dir = dir / strf("set", s);
    if (set.conv) save_adapter(set_dir / "conv", *set.conv);
    if (set.head) save_adapter(set_dir / "head", *set.head);
  }
  if (state.arm.conv_map) save_mapping_net(dir / "maps" / "conv_map", *state.arm.conv_map);
  if (state.arm.head_map) save_mapping_net(dir / "maps" / "head_map", *state.arm.head_map);
  if (state.arm.extractor.kind == FeatureExtractor::Kind::PooledConv) {
    save_tensor(dir / "extractor" / "kernel", state.arm.extractor.kernel);
  }
  for (std::size_t i = 0; i < state.opt.m1.size(); ++i) {
    save_tensor(dir / "opt" / strf("m1.", i), state.opt.m1[i]);
  }
  for (std::size_t i = 0; i < state.opt.m2.size(); ++i) {
    save_tensor(dir / "opt" / strf("m2.", i), state.opt.m2[i]);
  }
}

TrainState load_train_state(const fs::path& dir) {
  const nlohmann::json m = read_manifest(dir);
  TrainState st;
  st.arm.kind = arm_kind_from_name(m.at("arm").get<std::string>());
  st.rng_seed = m.at("seed").get<std::uint64_t>();
  st.epoch = m.at("epoch").get<std::size_t>();
  st.epoch_loss = m.at("epoch_loss").get<std::vector<double>>();
  st.arm.batch_mean_seed = m.at("batch_mean_seed").get<bool>();
  st.base.conv_w = load_tensor(dir / "base" / "conv_w");
  st.base.head_w = load_tensor(dir / "base" / "head_w");
  st.base.head_b = load_tensor(dir / "base" / "head_b");
  st.base.act = activation_from_name(m.at("base").at("activation").get<std::string>());
  st.base.validate();

  const auto& sets = m.at("sets");
  for (std::size_t s = 0; s < sets.size(); ++s) {
    LayerAdapters set;
    const fs::path set_dir = dir / strf("set", s);
    if (sets[s].at("conv").get<bool>()) set.conv = load_adapter(set_dir / "conv");
    if (sets[s].at("head").get<bool>()) set.head = load_adapter(set_dir / "head");
    st.arm.sets.push_back(std::move(set));
  }
  if (m.at("maps").at("conv_map").get<bool>()) {
    st.arm.conv_map = load_mapping_net(dir / "maps" / "conv_map");
  }
  if (m.at("maps").at("head_map").get<bool>()) {
    st.arm.head_map = load_mapping_net(dir / "maps" / "head_map");
  }
  st.arm.extractor.kind = extractor_kind_from_name(m.at("extractor").at("kind").get<std::string>());
  if (st.arm.extractor.kind == FeatureExtractor::Kind::PooledConv) {
    st.arm.extractor.kernel = load_tensor(dir / "extractor" / "kernel");
  }

  st.opt.step_count = m.at("step_count").get<std::size_t>();
  const std::size_t n1 = m.at("opt").at("m1").get<std::size_t>();
  const std::size_t n2 = m.at("opt").at("m2").get<std::size_t>();
  ParamSet ps = collect_params(st.arm);
  if (n1 != ps.entries.size() || (n2 != 0 && n2 != ps.entries.size())) {
    throw IoError(strf("train-state optimizer buffers (", n1, "/", n2, ") do not match the ",
                       ps.entries.size(), " trainable tensors in ", dir.string()));
  }
  for (std::size_t i = 0; i < n1; ++i) st.opt.m1.push_back(load_tensor(dir / "opt" / strf("m1.", i)));
  for (std::size_t i = 0; i < n2; ++i) st.opt.m2.push_back(load_tensor(dir / "opt" / strf("m2.", i)));
  for (std::size_t i = 0; i < n1; ++i) {
    if (!st.opt.m1[i].same_shape(*ps.entries[i].second)) {
      throw IoError(strf("optimizer buffer ", i, " shape does not match parameter ",
                         ps.entries[i].first, " in ", dir.string()));
    }
  }
  return st;
}

}  // namespace metalora
