#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/adapters.hpp"
#include "core/autodiff.hpp"
#include "core/meta_net.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace metalora {

// Small frozen network being adapted: one same-padded conv layer (stride 1,
// odd kernel), a pointwise activation, global average pooling, then a linear
// classifier head.  The pooled vector doubles as the evaluation embedding.
struct BaseNet {
  DenseTensor conv_w;  // K x K x I x C
  DenseTensor head_w;  // C x NC
  DenseTensor head_b;  // NC
  Activation act = Activation::Tanh;

  std::size_t kernel() const { return conv_w.extent(0); }
  std::size_t in_channels() const { return conv_w.extent(2); }
  std::size_t conv_channels() const { return conv_w.extent(3); }
  std::size_t num_classes() const { return head_b.extent(0); }
  std::size_t padding() const { return (kernel() - 1) / 2; }
  void validate() const;
};

BaseNet init_base_net(std::size_t kernel, std::size_t in_channels, std::size_t conv_channels,
                      std::size_t num_classes, Rng& rng);

struct ForwardOut {
  DenseTensor logits;     // NC
  DenseTensor embedding;  // C, pooled pre-head features
};

ForwardOut base_forward(const BaseNet& net, const DenseTensor& x);

// Comparison arms.  Original carries no trainables; Lora is one static
// adapter pair; MultiLora routes to one static pair per task by oracle task
// id; the meta arms generate their deltas from per-input seeds.
enum class ArmKind { Original, Lora, MultiLora, MetaCP, MetaTR };

const char* arm_kind_name(ArmKind k);
ArmKind arm_kind_from_name(const std::string& name);

// One adapter pair over the base: a delta on the conv kernel and a delta on
// the head matrix.  Either may be absent.
struct LayerAdapters {
  std::optional<Adapter> conv;
  std::optional<Adapter> head;
};

struct Arm {
  ArmKind kind = ArmKind::Original;
  std::vector<LayerAdapters> sets;     // one entry, or one per task for MultiLora
  std::optional<MappingNet> conv_map;  // meta arms only
  std::optional<MappingNet> head_map;
  FeatureExtractor extractor;  // frozen, feeds the mapping nets
  bool batch_mean_seed = false;

  bool is_meta() const { return kind == ArmKind::MetaCP || kind == ArmKind::MetaTR; }
  std::size_t set_for_task(std::size_t task) const;
  // Adapter factors only; the budget-parity figure.
  std::size_t adapter_param_count() const;
  // Everything the optimizer touches, mapping nets included.
  std::size_t trainable_param_count() const;
  void validate(const BaseNet& net, std::size_t h, std::size_t w) const;
};

// Geometry-independent recipe for building an arm against a base net.
struct ArmSpec {
  ArmKind kind = ArmKind::Original;
  std::size_t rank = 4;
  std::size_t tasks = 1;  // MultiLora set count
  double scale = 1.0;
  std::size_t map_hidden_layers = 1;
  std::size_t map_hidden_width = 0;  // 0 -> 2 * rank
  FeatureExtractor::Kind extractor = FeatureExtractor::Kind::PooledConv;
  std::size_t extractor_features = 4;
  std::size_t extractor_kernel = 3;
  bool batch_mean_seed = false;
};

Arm make_arm(const ArmSpec& spec, const BaseNet& net, std::size_t h, std::size_t w, Rng& rng);

// Named views of an arm's trainable tensors in a fixed canonical order
// ("conv.A", "task3.head.B", "conv_map.W0", ...).  Pointers alias the arm,
// which must outlive the set.
struct ParamSet {
  std::vector<std::pair<std::string, DenseTensor*>> entries;

  DenseTensor* find(const std::string& name) const;
  std::size_t total_size() const;
};

ParamSet collect_params(Arm& arm);

// Straight-line evaluation forward (no tape): applies the arm's deltas to
// the frozen weights and runs the base.  Meta seeds always come from this
// sample's own features here; batch averaging is a training-time option.
ForwardOut forward_adapted(const BaseNet& net, const Arm& arm, const DenseTensor& x,
                           std::size_t task);

// Minibatch loss recorded on a fresh tape.  Leaves are registered once per
// tensor, in the order of the ParamSet built from the same arm, so
// gradients can be read back positionally after tape.backward(loss).
struct TapedBatch {
  Tape tape;
  Tape::NodeId loss = 0;
  std::vector<Tape::NodeId> leaf_ids;  // parallel to collect_params(arm).entries
  std::vector<Tape::NodeId> logits;    // one per batch sample
};

TapedBatch build_batch_loss(const BaseNet& net, Arm& arm, std::span<const DenseTensor> xs,
                            std::span<const std::size_t> labels,
                            std::span<const std::size_t> tasks);

// Pretraining path: the base weights themselves are the leaves
// ("conv_w", "head_w", "head_b"); no adapters involved.
ParamSet collect_base_params(BaseNet& net);
TapedBatch build_base_loss(BaseNet& net, std::span<const DenseTensor> xs,
                           std::span<const std::size_t> labels);

}  // namespace metalora
