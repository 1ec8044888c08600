#pragma once

#include <span>
#include <vector>

#include "core/meta_net.hpp"
#include "core/tensor.hpp"

namespace metalora {

// Define-by-run reverse-mode tape over DenseTensor values.  Each recorded
// node stores its op tag, input node ids and output value; node ids are
// already a topological order, so the backward pass walks them in reverse.
// Gradients only flow into subgraphs that contain a trainable leaf;
// constants and pure-constant subtrees are skipped.  Leaves that a loss
// never touches keep an all-zero gradient.
class Tape {
 public:
  using NodeId = std::size_t;

  // Value with no gradient tracking (inputs, frozen weights, dummy tensors).
  NodeId constant(DenseTensor v);
  // Trainable leaf; its gradient is available after backward().
  NodeId leaf(DenseTensor v);

  NodeId contract(NodeId a, NodeId b, std::vector<AxisPair> pairs);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId scale_axis(NodeId t, NodeId v, std::size_t axis);
  NodeId reshape(NodeId a, std::vector<std::size_t> shape);
  NodeId activation(NodeId a, Activation act);
  NodeId global_avg_pool(NodeId x);  // H x W x C -> C
  // Numerically stable fused softmax + cross-entropy against a class index.
  NodeId softmax_cross_entropy(NodeId logits, std::size_t label);
  NodeId mean_scalars(std::span<const NodeId> xs);

  const DenseTensor& value(NodeId id) const;
  // Reverse pass from a scalar node.  May be called once per tape.
  void backward(NodeId root);
  // Zero tensor of the node's shape when the loss never reached it.
  DenseTensor grad(NodeId id) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    Constant,
    Leaf,
    Contract,
    Add,
    Scale,
    ScaleAxis,
    Reshape,
    Activation,
    GlobalAvgPool,
    SoftmaxXent,
    MeanScalars,
  };

  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    DenseTensor value;
    bool requires_grad = false;
    // op payloads
    std::vector<AxisPair> pairs;
    double factor = 0.0;
    std::size_t axis = 0;
    Activation act = Activation::Identity;
    std::size_t label = 0;
    DenseTensor saved;  // softmax probabilities / activation input
  };

  NodeId push(Node n);
  const Node& node(NodeId id) const;
  void accumulate(std::vector<DenseTensor>& grads, std::vector<char>& present, NodeId id,
                  const DenseTensor& g);

  std::vector<Node> nodes_;
  std::vector<DenseTensor> grads_;
  std::vector<char> grad_present_;
  bool backward_done_ = false;
};

}  // namespace metalora
