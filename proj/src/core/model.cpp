#include "core/model.hpp"

#include <cmath>
#include <unordered_map>
#include <utility>

namespace metalora {
namespace {

DenseTensor apply_pointwise(Activation act, const DenseTensor& t) {
  if (act == Activation::Identity) return t;
  DenseTensor out = t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply_activation(act, out[i]);
  return out;
}

// Mirrors Tape::global_avg_pool: accumulate over h*w, divide once.
DenseTensor pool_hwc(const DenseTensor& t) {
  if (t.order() != 3) throw ShapeError("pool: input must be H x W x C");
  const std::size_t hw = t.extent(0) * t.extent(1);
  const std::size_t c = t.extent(2);
  DenseTensor out({c});
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += t[i * c + j];
  for (std::size_t j = 0; j < c; ++j) out[j] /= static_cast<double>(hw);
  return out;
}

ForwardOut run_forward(const BaseNet& net, const DenseTensor& conv_eff, const DenseTensor& head_eff,
                       const DenseTensor& x) {
  const DenseTensor conv_out = conv2d_forward(x, conv_eff, 1, net.padding());
  const DenseTensor activated = apply_pointwise(net.act, conv_out);
  DenseTensor emb = pool_hwc(activated);
  DenseTensor logits = add(contract(emb, head_eff, {{0, 0}}), net.head_b);
  return {std::move(logits), std::move(emb)};
}

Adapter wrap(AdapterKind kind, DenseTensor a, DenseTensor b, double scale, std::size_t kernel,
             std::size_t in_channels) {
  Adapter ad;
  ad.kind = kind;
  ad.A = std::move(a);
  ad.B = std::move(b);
  ad.scale = scale;
  ad.kernel_size = kernel;
  ad.in_channels = in_channels;
  return ad;
}

LayerAdapters make_static_set(const ArmSpec& spec, const BaseNet& net, Rng& rng) {
  ConvLoRA cl = init_conv_lora(net.kernel(), net.in_channels(), net.conv_channels(), spec.rank,
                               spec.scale, rng);
  MatrixLoRA ml =
      init_matrix_lora(net.conv_channels(), net.num_classes(), spec.rank, spec.scale, rng);
  LayerAdapters set;
  set.conv = wrap(AdapterKind::ConvLora, std::move(cl.A), std::move(cl.B), cl.scale, net.kernel(),
                  net.in_channels());
  set.head = wrap(AdapterKind::MatrixLora, std::move(ml.A), std::move(ml.B), ml.scale, 0, 0);
  return set;
}

void check_conv_adapter(const Adapter& ad, const BaseNet& net) {
  const std::size_t k = net.kernel(), i = net.in_channels(), c = net.conv_channels();
  switch (ad.kind) {
    case AdapterKind::ConvLora:
    case AdapterKind::ConvMetaCP:
      if (ad.A.extent(0) != k || ad.A.extent(1) != k || ad.A.extent(2) != i ||
          ad.B.extent(1) != c) {
        throw ShapeError(strf("conv adapter does not match base geometry: A ",
                              shape_str(ad.A.shape()), " B ", shape_str(ad.B.shape())));
      }
      break;
    case AdapterKind::ConvMetaTR:
      if (ad.kernel_size != k || ad.in_channels != i || ad.A.extent(1) != k * k * i ||
          ad.B.extent(1) != c) {
        throw ShapeError(strf("conv TR adapter does not match base geometry: A ",
                              shape_str(ad.A.shape()), " B ", shape_str(ad.B.shape())));
      }
      break;
    default:
      throw ArgError(strf("adapter kind ", adapter_kind_name(ad.kind), " cannot adapt a conv kernel"));
  }
}

void check_head_adapter(const Adapter& ad, const BaseNet& net) {
  const std::size_t c = net.conv_channels(), nc = net.num_classes();
  switch (ad.kind) {
    case AdapterKind::MatrixLora:
    case AdapterKind::MetaCP:
      if (ad.A.extent(0) != c || ad.B.extent(1) != nc) {
        throw ShapeError(strf("head adapter does not match base geometry: A ",
                              shape_str(ad.A.shape()), " B ", shape_str(ad.B.shape())));
      }
      break;
    case AdapterKind::MetaTR:
      if (ad.A.extent(1) != c || ad.B.extent(1) != nc) {
        throw ShapeError(strf("head TR adapter does not match base geometry: A ",
                              shape_str(ad.A.shape()), " B ", shape_str(ad.B.shape())));
      }
      break;
    default:
      throw ArgError(strf("adapter kind ", adapter_kind_name(ad.kind), " cannot adapt the head"));
  }
}

std::size_t mapping_param_count(const MappingNet& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers) n += l.W.size() + l.b.size();
  return n;
}

}  // namespace

//---------------------------------------------------------------------------
// base net

void BaseNet::validate() const {
  if (conv_w.order() != 4) throw ShapeError("base: conv weight must be K x K x I x C");
  if (conv_w.extent(0) != conv_w.extent(1)) throw ShapeError("base: conv kernel must be square");
  if (conv_w.extent(0) % 2 == 0) throw ArgError("base: kernel must be odd for same padding");
  if (head_w.order() != 2 || head_w.extent(0) != conv_channels()) {
    throw ShapeError("base: head weight must be C x NC");
  }
  if (head_b.order() != 1 || head_b.extent(0) != head_w.extent(1)) {
    throw ShapeError("base: head bias must match head width");
  }
}

BaseNet init_base_net(std::size_t kernel, std::size_t in_channels, std::size_t conv_channels,
                      std::size_t num_classes, Rng& rng) {
  BaseNet net;
  const double conv_std = 1.0 / std::sqrt(static_cast<double>(kernel * kernel * in_channels));
  net.conv_w = DenseTensor({kernel, kernel, in_channels, conv_channels});
  for (std::size_t i = 0; i < net.conv_w.size(); ++i) net.conv_w[i] = rng.normal(0.0, conv_std);
  const double head_std = 1.0 / std::sqrt(static_cast<double>(conv_channels));
  net.head_w = DenseTensor({conv_channels, num_classes});
  for (std::size_t i = 0; i < net.head_w.size(); ++i) net.head_w[i] = rng.normal(0.0, head_std);
  net.head_b = DenseTensor({num_classes});
  net.validate();
  return net;
}

ForwardOut base_forward(const BaseNet& net, const DenseTensor& x) {
  return run_forward(net, net.conv_w, net.head_w, x);
}

//---------------------------------------------------------------------------
// arms

const char* arm_kind_name(ArmKind k) {
  switch (k) {
    case ArmKind::Original: return "original";
    case ArmKind::Lora: return "lora";
    case ArmKind::MultiLora: return "multi_lora";
    case ArmKind::MetaCP: return "meta_cp";
    case ArmKind::MetaTR: return "meta_tr";
  }
  throw ArgError("unknown arm kind");
}

ArmKind arm_kind_from_name(const std::string& name) {
  for (ArmKind k : {ArmKind::Original, ArmKind::Lora, ArmKind::MultiLora, ArmKind::MetaCP,
                    ArmKind::MetaTR}) {
    if (name == arm_kind_name(k)) return k;
  }
  throw ArgError(strf("unknown arm kind '", name, "'"));
}

std::size_t Arm::set_for_task(std::size_t task) const {
  const std::size_t idx = kind == ArmKind::MultiLora ? task : 0;
  if (idx >= sets.size()) throw ArgError(strf("task ", task, " has no adapter set"));
  return idx;
}

std::size_t Arm::adapter_param_count() const {
  std::size_t n = 0;
  for (const auto& set : sets) {
    if (set.conv) n += set.conv->params();
    if (set.head) n += set.head->params();
  }
  return n;
}

std::size_t Arm::trainable_param_count() const {
  std::size_t n = adapter_param_count();
  if (conv_map) n += mapping_param_count(*conv_map);
  if (head_map) n += mapping_param_count(*head_map);
  return n;
}

void Arm::validate(const BaseNet& net, std::size_t h, std::size_t w) const {
  net.validate();
  if (sets.empty()) throw ArgError("arm has no adapter sets");
  if (kind != ArmKind::MultiLora && sets.size() != 1) {
    throw ArgError(strf(arm_kind_name(kind), " arm must hold exactly one adapter set"));
  }
  for (const auto& set : sets) {
    if (kind == ArmKind::Original && (set.conv || set.head)) {
      throw ArgError("original arm cannot carry adapters");
    }
    if (set.conv) check_conv_adapter(*set.conv, net);
    if (set.head) check_head_adapter(*set.head, net);
    const bool want_meta = is_meta();
    if (set.conv && set.conv->is_meta() != want_meta) {
      throw ArgError(strf(arm_kind_name(kind), " arm holds a mismatched conv adapter"));
    }
    if (set.head && set.head->is_meta() != want_meta) {
      throw ArgError(strf(arm_kind_name(kind), " arm holds a mismatched head adapter"));
    }
  }
  if (is_meta()) {
    const auto& set = sets[0];
    const std::size_t f = extractor.feature_dim(h, w, net.in_channels());
    if (set.conv) {
      if (!conv_map) throw ArgError("meta arm is missing its conv mapping net");
      conv_map->validate();
      if (conv_map->input_dim() != f) {
        throw ShapeError(strf("conv mapping net expects ", conv_map->input_dim(),
                              " features, extractor yields ", f));
      }
      if (conv_map->seed_shape != set.conv->seed_shape() &&
          !(conv_map->seed_shape.empty() && set.conv->seed_shape().size() == 1 &&
            conv_map->output_dim() == set.conv->seed_shape()[0])) {
        throw ShapeError("conv mapping net output does not match the adapter seed shape");
      }
    }
    if (set.head) {
      if (!head_map) throw ArgError("meta arm is missing its head mapping net");
      head_map->validate();
      if (head_map->input_dim() != f) {
        throw ShapeError(strf("head mapping net expects ", head_map->input_dim(),
                              " features, extractor yields ", f));
      }
      if (head_map->seed_shape != set.head->seed_shape() &&
          !(head_map->seed_shape.empty() && set.head->seed_shape().size() == 1 &&
            head_map->output_dim() == set.head->seed_shape()[0])) {
        throw ShapeError("head mapping net output does not match the adapter seed shape");
      }
    }
  } else if (conv_map || head_map) {
    throw ArgError(strf(arm_kind_name(kind), " arm cannot carry mapping nets"));
  }
}

Arm make_arm(const ArmSpec& spec, const BaseNet& net, std::size_t h, std::size_t w, Rng& rng) {
  net.validate();
  if (spec.kind != ArmKind::Original && spec.rank == 0) throw ArgError("adapter rank must be >= 1");
  Arm arm;
  arm.kind = spec.kind;
  arm.batch_mean_seed = spec.batch_mean_seed;
  const std::size_t r = spec.rank;
  const std::size_t hidden = spec.map_hidden_width ? spec.map_hidden_width : 2 * r;
  switch (spec.kind) {
    case ArmKind::Original:
      arm.sets.resize(1);
      break;
    case ArmKind::Lora:
      arm.sets.push_back(make_static_set(spec, net, rng));
      break;
    case ArmKind::MultiLora: {
      if (spec.tasks == 0) throw ArgError("multi_lora needs at least one task");
      for (std::size_t t = 0; t < spec.tasks; ++t) arm.sets.push_back(make_static_set(spec, net, rng));
      break;
    }
    case ArmKind::MetaCP: {
      ConvMetaCPAdapter conv = init_conv_meta_cp(net.kernel(), net.in_channels(),
                                                 net.conv_channels(), r, spec.scale, rng);
      MetaCPAdapter head =
          init_meta_cp(net.conv_channels(), net.num_classes(), r, spec.scale, rng);
      LayerAdapters set;
      set.conv = wrap(AdapterKind::ConvMetaCP, std::move(conv.A), std::move(conv.B), conv.scale,
                      net.kernel(), net.in_channels());
      set.head = wrap(AdapterKind::MetaCP, std::move(head.A), std::move(head.B), head.scale, 0, 0);
      arm.sets.push_back(std::move(set));
      break;
    }
    case ArmKind::MetaTR: {
      ConvMetaTRAdapter conv = init_conv_meta_tr(net.kernel(), net.in_channels(),
                                                 net.conv_channels(), r, spec.scale, rng);
      MetaTRAdapter head =
          init_meta_tr(net.conv_channels(), net.num_classes(), r, spec.scale, rng);
      LayerAdapters set;
      set.conv = wrap(AdapterKind::ConvMetaTR, std::move(conv.A), std::move(conv.B), conv.scale,
                      conv.kernel_size, conv.in_channels);
      set.head = wrap(AdapterKind::MetaTR, std::move(head.A), std::move(head.B), head.scale, 0, 0);
      arm.sets.push_back(std::move(set));
      break;
    }
  }
  if (arm.is_meta()) {
    arm.extractor = spec.extractor == FeatureExtractor::Kind::RawFlatten
                        ? FeatureExtractor::raw_flatten()
                        : FeatureExtractor::pooled_conv(spec.extractor_kernel, net.in_channels(),
                                                        spec.extractor_features, rng);
    const std::size_t f = arm.extractor.feature_dim(h, w, net.in_channels());
    const std::size_t seed_dim = spec.kind == ArmKind::MetaTR ? r * r : r;
    std::vector<std::size_t> seed_shape =
        spec.kind == ArmKind::MetaTR ? std::vector<std::size_t>{r, r} : std::vector<std::size_t>{};
    arm.conv_map = init_mapping_net(f, seed_dim, seed_shape, spec.map_hidden_layers, hidden,
                                    Activation::Tanh, rng);
    arm.head_map = init_mapping_net(f, seed_dim, seed_shape, spec.map_hidden_layers, hidden,
                                    Activation::Tanh, rng);
  }
  arm.validate(net, h, w);
  return arm;
}

//---------------------------------------------------------------------------
// named parameter views

DenseTensor* ParamSet::find(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return t;
  return nullptr;
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries) n += t->size();
  return n;
}

ParamSet collect_params(Arm& arm) {
  ParamSet ps;
  for (std::size_t s = 0; s < arm.sets.size(); ++s) {
    const std::string prefix = arm.sets.size() > 1 ? strf("task", s, ".") : "";
    if (arm.sets[s].conv) {
      ps.entries.emplace_back(prefix + "conv.A", &arm.sets[s].conv->A);
      ps.entries.emplace_back(prefix + "conv.B", &arm.sets[s].conv->B);
    }
    if (arm.sets[s].head) {
      ps.entries.emplace_back(prefix + "head.A", &arm.sets[s].head->A);
      ps.entries.emplace_back(prefix + "head.B", &arm.sets[s].head->B);
    }
  }
  auto add_map = [&ps](const char* prefix, std::optional<MappingNet>& map) {
    if (!map) return;
    for (std::size_t l = 0; l < map->layers.size(); ++l) {
      ps.entries.emplace_back(strf(prefix, ".W", l), &map->layers[l].W);
      ps.entries.emplace_back(strf(prefix, ".b", l), &map->layers[l].b);
    }
  };
  add_map("conv_map", arm.conv_map);
  add_map("head_map", arm.head_map);
  return ps;
}

//---------------------------------------------------------------------------
// straight-line forward

ForwardOut forward_adapted(const BaseNet& net, const Arm& arm, const DenseTensor& x,
                           std::size_t task) {
  const LayerAdapters& set = arm.sets[arm.set_for_task(task)];
  DenseTensor conv_seed, head_seed;
  const DenseTensor* conv_seed_p = nullptr;
  const DenseTensor* head_seed_p = nullptr;
  if (arm.is_meta()) {
    const DenseTensor f = extract_features(x, arm.extractor);
    if (set.conv) {
      conv_seed = mapping_forward(*arm.conv_map, f);
      conv_seed_p = &conv_seed;
    }
    if (set.head) {
      head_seed = mapping_forward(*arm.head_map, f);
      head_seed_p = &head_seed;
    }
  }
  const DenseTensor conv_eff =
      set.conv ? add(net.conv_w, set.conv->delta(conv_seed_p)) : net.conv_w;
  const DenseTensor head_eff =
      set.head ? add(net.head_w, set.head->delta(head_seed_p)) : net.head_w;
  return run_forward(net, conv_eff, head_eff, x);
}

//---------------------------------------------------------------------------
// taped minibatch loss

namespace {

using NodeId = Tape::NodeId;
using LeafMap = std::unordered_map<const DenseTensor*, NodeId>;

NodeId taped_mapping(Tape& tape, const MappingNet& net, NodeId f, const LeafMap& leaf) {
  NodeId h = f;
  for (const auto& layer : net.layers) {
    h = tape.add(tape.contract(h, leaf.at(&layer.W), {{0, 0}}), leaf.at(&layer.b));
    if (layer.act != Activation::Identity) h = tape.activation(h, layer.act);
  }
  if (!net.seed_shape.empty()) h = tape.reshape(h, net.seed_shape);
  return h;
}

// Tape replay of Adapter::delta, operation for operation.
NodeId taped_delta(Tape& tape, const Adapter& ad, const LeafMap& leaf, NodeId seed) {
  const NodeId a = leaf.at(&ad.A);
  const NodeId b = leaf.at(&ad.B);
  switch (ad.kind) {
    case AdapterKind::MatrixLora:
      return tape.scale(tape.contract(a, b, {{1, 0}}), ad.scale);
    case AdapterKind::ConvLora:
      return tape.scale(tape.contract(a, b, {{3, 0}}), ad.scale);
    case AdapterKind::MetaCP:
      return tape.scale(tape.contract(a, tape.scale_axis(b, seed, 0), {{1, 0}}), ad.scale);
    case AdapterKind::ConvMetaCP:
      return tape.scale(tape.contract(a, tape.scale_axis(b, seed, 0), {{3, 0}}), ad.scale);
    case AdapterKind::MetaTR:
      return tape.scale(tape.contract(tape.contract(a, b, {{2, 0}}), seed, {{3, 0}, {0, 1}}),
                        ad.scale);
    case AdapterKind::ConvMetaTR: {
      const NodeId flat =
          tape.contract(tape.contract(a, b, {{2, 0}}), seed, {{3, 0}, {0, 1}});
      const std::size_t out_ch = tape.value(flat).extent(1);
      return tape.scale(
          tape.reshape(flat, {ad.kernel_size, ad.kernel_size, ad.in_channels, out_ch}), ad.scale);
    }
  }
  throw ArgError("unknown adapter kind");
}

}  // namespace

TapedBatch build_batch_loss(const BaseNet& net, Arm& arm, std::span<const DenseTensor> xs,
                            std::span<const std::size_t> labels,
                            std::span<const std::size_t> tasks) {
  if (xs.empty()) throw ArgError("build_batch_loss: empty batch");
  if (labels.size() != xs.size() || tasks.size() != xs.size()) {
    throw ArgError("build_batch_loss: xs/labels/tasks length mismatch");
  }
  const std::size_t h = xs[0].extent(0), w = xs[0].extent(1);
  for (const auto& x : xs) {
    if (x.order() != 3 || x.extent(0) != h || x.extent(1) != w ||
        x.extent(2) != net.in_channels()) {
      throw ShapeError(strf("batch input has shape ", shape_str(x.shape()), ", expected ", h, " x ",
                            w, " x ", net.in_channels()));
    }
  }
  arm.validate(net, h, w);

  TapedBatch tb;
  Tape& tape = tb.tape;
  ParamSet ps = collect_params(arm);
  LeafMap leaf;
  tb.leaf_ids.reserve(ps.entries.size());
  for (auto& [name, t] : ps.entries) {
    const NodeId id = tape.leaf(*t);
    tb.leaf_ids.push_back(id);
    leaf.emplace(t, id);
  }

  const NodeId conv_w_c = tape.constant(net.conv_w);
  const NodeId head_w_c = tape.constant(net.head_w);
  const NodeId head_b_c = tape.constant(net.head_b);
  const std::size_t pad = net.padding();
  const NodeId ph = tape.constant(
      dummy_tensor(DummyTensorSpec::from_geometry(h, net.kernel(), 1, pad)));
  const NodeId pw = tape.constant(
      dummy_tensor(DummyTensorSpec::from_geometry(w, net.kernel(), 1, pad)));

  // Per-sample feature constants (extractor is frozen, so features carry no
  // gradient).
  std::vector<NodeId> feat;
  if (arm.is_meta()) {
    feat.reserve(xs.size());
    for (const auto& x : xs) feat.push_back(tape.constant(extract_features(x, arm.extractor)));
  }

  // Effective weights.  Static arms share one pair per adapter set across
  // the whole batch; meta arms get per-sample pairs unless batch averaging
  // of the seeds is on.
  std::unordered_map<std::size_t, std::pair<NodeId, NodeId>> static_eff;
  auto static_weights = [&](std::size_t si) {
    auto it = static_eff.find(si);
    if (it != static_eff.end()) return it->second;
    const LayerAdapters& set = arm.sets[si];
    NodeId conv_eff = conv_w_c;
    NodeId head_eff = head_w_c;
    if (set.conv) conv_eff = tape.add(conv_w_c, taped_delta(tape, *set.conv, leaf, 0));
    if (set.head) head_eff = tape.add(head_w_c, taped_delta(tape, *set.head, leaf, 0));
    const std::pair<NodeId, NodeId> eff{conv_eff, head_eff};
    static_eff.emplace(si, eff);
    return eff;
  };

  auto meta_weights = [&](NodeId f) {
    const LayerAdapters& set = arm.sets[0];
    NodeId conv_eff = conv_w_c;
    NodeId head_eff = head_w_c;
    if (set.conv) {
      const NodeId seed = taped_mapping(tape, *arm.conv_map, f, leaf);
      conv_eff = tape.add(conv_w_c, taped_delta(tape, *set.conv, leaf, seed));
    }
    if (set.head) {
      const NodeId seed = taped_mapping(tape, *arm.head_map, f, leaf);
      head_eff = tape.add(head_w_c, taped_delta(tape, *set.head, leaf, seed));
    }
    return std::pair<NodeId, NodeId>{conv_eff, head_eff};
  };

  std::pair<NodeId, NodeId> batch_eff{conv_w_c, head_w_c};
  if (arm.is_meta() && arm.batch_mean_seed) {
    // One shared seed per adapted layer: the mean of the per-sample seeds.
    const LayerAdapters& set = arm.sets[0];
    auto mean_seed = [&](const MappingNet& map) {
      NodeId acc = taped_mapping(tape, map, feat[0], leaf);
      for (std::size_t i = 1; i < feat.size(); ++i) {
        acc = tape.add(acc, taped_mapping(tape, map, feat[i], leaf));
      }
      return tape.scale(acc, 1.0 / static_cast<double>(feat.size()));
    };
    if (set.conv) {
      batch_eff.first =
          tape.add(conv_w_c, taped_delta(tape, *set.conv, leaf, mean_seed(*arm.conv_map)));
    }
    if (set.head) {
      batch_eff.second =
          tape.add(head_w_c, taped_delta(tape, *set.head, leaf, mean_seed(*arm.head_map)));
    }
  }

  std::vector<NodeId> sample_losses;
  sample_losses.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::pair<NodeId, NodeId> eff;
    if (!arm.is_meta()) {
      eff = static_weights(arm.set_for_task(tasks[i]));
    } else if (arm.batch_mean_seed) {
      eff = batch_eff;
    } else {
      eff = meta_weights(feat[i]);
    }
    const NodeId x_c = tape.constant(xs[i]);
    const NodeId rows = tape.contract(x_c, ph, {{0, 0}});        // W x I x H' x Kh
    const NodeId cols = tape.contract(rows, pw, {{0, 0}});        // I x H' x Kh x W' x Kw
    const NodeId conv_out = tape.contract(cols, eff.first, {{2, 0}, {4, 1}, {0, 2}});
    const NodeId activated = tape.activation(conv_out, net.act);
    const NodeId emb = tape.global_avg_pool(activated);
    const NodeId logits = tape.add(tape.contract(emb, eff.second, {{0, 0}}), head_b_c);
    tb.logits.push_back(logits);
    sample_losses.push_back(tape.softmax_cross_entropy(logits, labels[i]));
  }
  tb.loss = tape.mean_scalars(sample_losses);
  return tb;
}

ParamSet collect_base_params(BaseNet& net) {
  ParamSet ps;
  ps.entries.emplace_back("conv_w", &net.conv_w);
  ps.entries.emplace_back("head_w", &net.head_w);
  ps.entries.emplace_back("head_b", &net.head_b);
  return ps;
}

TapedBatch build_base_loss(BaseNet& net, std::span<const DenseTensor> xs,
                           std::span<const std::size_t> labels) {
  if (xs.empty()) throw ArgError("build_base_loss: empty batch");
  if (labels.size() != xs.size()) throw ArgError("build_base_loss: xs/labels length mismatch");
  net.validate();
  const std::size_t h = xs[0].extent(0), w = xs[0].extent(1);

  TapedBatch tb;
  Tape& tape = tb.tape;
  ParamSet ps = collect_base_params(net);
  for (auto& [name, t] : ps.entries) tb.leaf_ids.push_back(tape.leaf(*t));
  const NodeId conv_w_l = tb.leaf_ids[0];
  const NodeId head_w_l = tb.leaf_ids[1];
  const NodeId head_b_l = tb.leaf_ids[2];
  const std::size_t pad = net.padding();
  const NodeId ph = tape.constant(
      dummy_tensor(DummyTensorSpec::from_geometry(h, net.kernel(), 1, pad)));
  const NodeId pw = tape.constant(
      dummy_tensor(DummyTensorSpec::from_geometry(w, net.kernel(), 1, pad)));

  std::vector<NodeId> sample_losses;
  sample_losses.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const NodeId x_c = tape.constant(xs[i]);
    const NodeId rows = tape.contract(x_c, ph, {{0, 0}});
    const NodeId cols = tape.contract(rows, pw, {{0, 0}});
    const NodeId conv_out = tape.contract(cols, conv_w_l, {{2, 0}, {4, 1}, {0, 2}});
    const NodeId activated = tape.activation(conv_out, net.act);
    const NodeId emb = tape.global_avg_pool(activated);
    const NodeId logits = tape.add(tape.contract(emb, head_w_l, {{0, 0}}), head_b_l);
    tb.logits.push_back(logits);
    sample_losses.push_back(tape.softmax_cross_entropy(logits, labels[i]));
  }
  tb.loss = tape.mean_scalars(sample_losses);
  return tb;
}

}  // namespace metalora
