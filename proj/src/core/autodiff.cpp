#include "core/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace metalora {

Tape::NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id >= nodes_.size()) throw ArgError(strf("tape: node id ", id, " out of range"));
  return nodes_[id];
}

Tape::NodeId Tape::constant(DenseTensor v) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(v);
  return push(std::move(n));
}

Tape::NodeId Tape::leaf(DenseTensor v) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(v);
  n.requires_grad = true;
  return push(std::move(n));
}

Tape::NodeId Tape::contract(NodeId a, NodeId b, std::vector<AxisPair> pairs) {
  Node n;
  n.op = Op::Contract;
  n.value = metalora::contract(node(a).value, node(b).value,
                               std::span<const AxisPair>(pairs.data(), pairs.size()));
  n.inputs = {a, b};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.pairs = std::move(pairs);
  return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::Add;
  n.value = metalora::add(node(a).value, node(b).value);
  n.inputs = {a, b};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId a, double factor) {
  Node n;
  n.op = Op::Scale;
  n.value = metalora::scale(node(a).value, factor);
  n.inputs = {a};
  n.requires_grad = node(a).requires_grad;
  n.factor = factor;
  return push(std::move(n));
}

Tape::NodeId Tape::scale_axis(NodeId t, NodeId v, std::size_t axis) {
  Node n;
  n.op = Op::ScaleAxis;
  n.value = metalora::scale_axis(node(t).value, node(v).value, axis);
  n.inputs = {t, v};
  n.requires_grad = node(t).requires_grad || node(v).requires_grad;
  n.axis = axis;
  return push(std::move(n));
}

Tape::NodeId Tape::reshape(NodeId a, std::vector<std::size_t> shape) {
  Node n;
  n.op = Op::Reshape;
  n.value = metalora::reshape(node(a).value, std::move(shape));
  n.inputs = {a};
  n.requires_grad = node(a).requires_grad;
  return push(std::move(n));
}

Tape::NodeId Tape::activation(NodeId a, Activation act) {
  Node n;
  n.op = Op::Activation;
  n.saved = node(a).value;  // pre-activation, needed for relu
  n.value = node(a).value;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = apply_activation(act, n.value[i]);
  n.inputs = {a};
  n.requires_grad = node(a).requires_grad;
  n.act = act;
  return push(std::move(n));
}

Tape::NodeId Tape::global_avg_pool(NodeId x) {
  const DenseTensor& v = node(x).value;
  if (v.order() != 3) throw ShapeError("global_avg_pool: input must be H x W x C");
  const std::size_t hw = v.extent(0) * v.extent(1);
  const std::size_t c = v.extent(2);
  DenseTensor out({c});
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += v[i * c + j];
  for (std::size_t j = 0; j < c; ++j) out[j] /= static_cast<double>(hw);
  Node n;
  n.op = Op::GlobalAvgPool;
  n.value = std::move(out);
  n.inputs = {x};
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Tape::NodeId Tape::softmax_cross_entropy(NodeId logits, std::size_t label) {
  const DenseTensor& z = node(logits).value;
  if (z.order() != 1) throw ShapeError("softmax_cross_entropy: logits must be a vector");
  if (label >= z.extent(0)) throw ArgError("softmax_cross_entropy: label out of range");
  const double m = *std::max_element(z.values().begin(), z.values().end());
  double sum = 0.0;
  DenseTensor probs({z.extent(0)});
  for (std::size_t i = 0; i < z.size(); ++i) {
    probs[i] = std::exp(z[i] - m);
    sum += probs[i];
  }
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] /= sum;
  const double loss = std::log(sum) + m - z[label];
  Node n;
  n.op = Op::SoftmaxXent;
  n.value = DenseTensor::scalar(loss);
  n.inputs = {logits};
  n.requires_grad = node(logits).requires_grad;
  n.label = label;
  n.saved = std::move(probs);
  return push(std::move(n));
}

Tape::NodeId Tape::mean_scalars(std::span<const NodeId> xs) {
  if (xs.empty()) throw ArgError("mean_scalars: empty input list");
  double sum = 0.0;
  Node n;
  n.op = Op::MeanScalars;
  for (NodeId id : xs) {
    const DenseTensor& v = node(id).value;
    if (v.size() != 1) throw ShapeError("mean_scalars: inputs must be scalars");
    sum += v[0];
    n.inputs.push_back(id);
    n.requires_grad = n.requires_grad || node(id).requires_grad;
  }
  n.value = DenseTensor::scalar(sum / static_cast<double>(xs.size()));
  return push(std::move(n));
}

const DenseTensor& Tape::value(NodeId id) const { return node(id).value; }

void Tape::accumulate(std::vector<DenseTensor>& grads, std::vector<char>& present, NodeId id,
                      const DenseTensor& g) {
  if (!nodes_[id].requires_grad) return;
  if (!present[id]) {
    grads[id] = g;
    present[id] = 1;
  } else {
    DenseTensor& acc = grads[id];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  }
}

namespace {

// Gradient of contract() wrt one operand: contract the upstream gradient
// with the other operand over that operand's free axes, then permute the
// result back into this operand's axis layout.
DenseTensor contract_backward_one(const DenseTensor& g, const DenseTensor& other,
                                  std::span<const AxisPair> pairs, std::size_t self_order,
                                  std::size_t other_order, bool self_is_a,
                                  std::size_t free_a_count) {
  std::vector<std::size_t> self_pair_axis(pairs.size()), other_pair_axis(pairs.size());
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    self_pair_axis[q] = self_is_a ? pairs[q].first : pairs[q].second;
    other_pair_axis[q] = self_is_a ? pairs[q].second : pairs[q].first;
  }
  std::vector<char> self_used(self_order, 0), other_used(other_order, 0);
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    self_used[self_pair_axis[q]] = 1;
    other_used[other_pair_axis[q]] = 1;
  }
  std::vector<std::size_t> other_free;
  for (std::size_t i = 0; i < other_order; ++i)
    if (!other_used[i]) other_free.push_back(i);

  // Position of this operand's free block inside g: a's free axes lead,
  // b's follow.
  const std::size_t self_free_count = self_order - pairs.size();
  const std::size_t g_self_base = self_is_a ? 0 : free_a_count;
  const std::size_t g_other_base = self_is_a ? self_free_count : 0;

  std::vector<AxisPair> gpairs(other_free.size());
  for (std::size_t j = 0; j < other_free.size(); ++j) {
    gpairs[j] = {g_other_base + j, other_free[j]};
  }
  const DenseTensor raw =
      contract(g, other, std::span<const AxisPair>(gpairs.data(), gpairs.size()));
  // raw axes: [self free block (order preserved)] then [other's contracted
  // axes in ascending other-axis order].

  std::vector<std::size_t> other_contracted_sorted = other_pair_axis;
  std::sort(other_contracted_sorted.begin(), other_contracted_sorted.end());

  std::vector<std::size_t> perm(self_order);
  std::size_t free_seen = 0;
  for (std::size_t k = 0; k < self_order; ++k) {
    if (!self_used[k]) {
      perm[k] = free_seen++;
    } else {
      std::size_t q = 0;
      while (self_pair_axis[q] != k) ++q;
      const std::size_t rank = static_cast<std::size_t>(
          std::lower_bound(other_contracted_sorted.begin(), other_contracted_sorted.end(),
                           other_pair_axis[q]) -
          other_contracted_sorted.begin());
      perm[k] = self_free_count + rank;
    }
  }
  (void)g_self_base;
  return permute(raw, std::span<const std::size_t>(perm.data(), perm.size()));
}

}  // namespace

void Tape::backward(NodeId root) {
  if (backward_done_) throw ArgError("tape: backward already ran");
  backward_done_ = true;
  const Node& r = node(root);
  if (r.value.size() != 1) throw ArgError("tape: backward root must be a scalar");

  grads_.assign(nodes_.size(), DenseTensor());
  grad_present_.assign(nodes_.size(), 0);
  if (!r.requires_grad) return;  // nothing trainable under the root

  grads_[root] = DenseTensor(r.value.shape().empty() ? std::vector<std::size_t>{} : r.value.shape());
  grads_[root][0] = 1.0;
  grad_present_[root] = 1;

  for (std::size_t id = root + 1; id-- > 0;) {
    if (!grad_present_[id] || !nodes_[id].requires_grad) continue;
    const Node& n = nodes_[id];
    const DenseTensor& g = grads_[id];
    switch (n.op) {
      case Op::Constant:
      case Op::Leaf:
        break;
      case Op::Contract: {
        const Node& a = nodes_[n.inputs[0]];
        const Node& b = nodes_[n.inputs[1]];
        const std::size_t free_a_count = a.value.order() - n.pairs.size();
        if (a.requires_grad) {
          accumulate(grads_, grad_present_, n.inputs[0],
                     contract_backward_one(g, b.value, n.pairs, a.value.order(), b.value.order(),
                                           true, free_a_count));
        }
        if (b.requires_grad) {
          accumulate(grads_, grad_present_, n.inputs[1],
                     contract_backward_one(g, a.value, n.pairs, b.value.order(), a.value.order(),
                                           false, free_a_count));
        }
        break;
      }
      case Op::Add:
        accumulate(grads_, grad_present_, n.inputs[0], g);
        accumulate(grads_, grad_present_, n.inputs[1], g);
        break;
      case Op::Scale:
        accumulate(grads_, grad_present_, n.inputs[0], metalora::scale(g, n.factor));
        break;
      case Op::ScaleAxis: {
        const Node& t = nodes_[n.inputs[0]];
        const Node& v = nodes_[n.inputs[1]];
        if (t.requires_grad) {
          accumulate(grads_, grad_present_, n.inputs[0], metalora::scale_axis(g, v.value, n.axis));
        }
        if (v.requires_grad) {
          const std::size_t stride = t.value.strides()[n.axis];
          const std::size_t extent = t.value.extent(n.axis);
          const std::size_t block = stride * extent;
          DenseTensor dv({extent});
          for (std::size_t base = 0; base < t.value.size(); base += block) {
            for (std::size_t r2 = 0; r2 < extent; ++r2) {
              double s = 0.0;
              const double* pg = g.data() + base + r2 * stride;
              const double* pt = t.value.data() + base + r2 * stride;
              for (std::size_t i = 0; i < stride; ++i) s += pg[i] * pt[i];
              dv[r2] += s;
            }
          }
          accumulate(grads_, grad_present_, n.inputs[1], dv);
        }
        break;
      }
      case Op::Reshape:
        accumulate(grads_, grad_present_, n.inputs[0],
                   metalora::reshape(g, nodes_[n.inputs[0]].value.shape()));
        break;
      case Op::Activation: {
        DenseTensor dx = g;
        switch (n.act) {
          case Activation::Tanh:
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - n.value[i] * n.value[i];
            break;
          case Activation::Relu:
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= n.saved[i] > 0.0 ? 1.0 : 0.0;
            break;
          case Activation::Identity:
            break;
        }
        accumulate(grads_, grad_present_, n.inputs[0], dx);
        break;
      }
      case Op::GlobalAvgPool: {
        const DenseTensor& x = nodes_[n.inputs[0]].value;
        const std::size_t hw = x.extent(0) * x.extent(1);
        const std::size_t c = x.extent(2);
        DenseTensor dx(x.shape());
        for (std::size_t i = 0; i < hw; ++i)
          for (std::size_t j = 0; j < c; ++j) dx[i * c + j] = g[j] / static_cast<double>(hw);
        accumulate(grads_, grad_present_, n.inputs[0], dx);
        break;
      }
      case Op::SoftmaxXent: {
        DenseTensor dz = n.saved;  // softmax probabilities
        dz[n.label] -= 1.0;
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= g[0];
        accumulate(grads_, grad_present_, n.inputs[0], dz);
        break;
      }
      case Op::MeanScalars: {
        const double share = g[0] / static_cast<double>(n.inputs.size());
        for (NodeId in : n.inputs) {
          accumulate(grads_, grad_present_, in, DenseTensor(nodes_[in].value.shape(), {share}));
        }
        break;
      }
    }
  }
}

DenseTensor Tape::grad(NodeId id) const {
  const Node& n = node(id);
  if (!backward_done_) throw ArgError("tape: grad queried before backward");
  if (id < grad_present_.size() && grad_present_[id]) return grads_[id];
  return DenseTensor(n.value.shape().empty() ? std::vector<std::size_t>{} : n.value.shape());
}

}  // namespace metalora
