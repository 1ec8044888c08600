#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "core/common.hpp"

namespace metalora {

// Storage precision tag.  Values are always held and computed in double;
// F32 marks a tensor whose entries are representable in IEEE single
// precision (construction rounds through float) and selects the 4-byte
// element width when serialized.
enum class Precision : unsigned char { F64 = 8, F32 = 4 };

// Dense d-order tensor, row-major (last index fastest).  A 0-order tensor
// is a scalar holding exactly one number; vectors and matrices are the
// 1- and 2-order cases.
class DenseTensor {
 public:
  DenseTensor() : data_(1, 0.0) {}  // 0-order scalar 0
  explicit DenseTensor(std::vector<std::size_t> shape);
  DenseTensor(std::vector<std::size_t> shape, std::vector<double> data);

  static DenseTensor scalar(double v);
  static DenseTensor zeros(std::vector<std::size_t> shape) { return DenseTensor(std::move(shape)); }
  static DenseTensor full(std::vector<std::size_t> shape, double v);
  static DenseTensor identity(std::size_t n);

  std::size_t order() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t extent(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  // Multi-index access; idx.size() must equal order().
  double& at(std::span<const std::size_t> idx);
  double at(std::span<const std::size_t> idx) const;
  double& at(std::initializer_list<std::size_t> idx) {
    return at(std::span<const std::size_t>(idx.begin(), idx.size()));
  }
  double at(std::initializer_list<std::size_t> idx) const {
    return const_cast<DenseTensor*>(this)->at(idx);
  }

  std::size_t flat_index(std::span<const std::size_t> idx) const;
  // Row-major strides (last axis stride 1).
  std::vector<std::size_t> strides() const;

  Precision precision() const { return precision_; }
  // Rounds every entry through float and tags the tensor as F32 storage.
  DenseTensor& to_precision(Precision p);

  bool all_finite() const;
  bool same_shape(const DenseTensor& o) const { return shape_ == o.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  Precision precision_ = Precision::F64;
};

using AxisPair = std::pair<std::size_t, std::size_t>;

// Pairwise tensor contraction: sums over the paired (axis-of-a, axis-of-b)
// indices.  Result axes are a's uncontracted axes in order followed by b's
// uncontracted axes in order, so order(out) = order(a) + order(b) - 2*|pairs|.
// An empty pair list is the outer product; contracting everything yields a
// 0-order scalar.
DenseTensor contract(const DenseTensor& a, const DenseTensor& b, std::span<const AxisPair> pairs);
DenseTensor contract(const DenseTensor& a, const DenseTensor& b, std::initializer_list<AxisPair> pairs);

// 1-D convolution geometry for the binary dummy tensor P of shape
// input_len x output_len x kernel_len with P[j,j',k] = 1 iff j = s*j' + k - p.
struct DummyTensorSpec {
  std::size_t input_len = 0;   // alpha
  std::size_t output_len = 0;  // alpha'
  std::size_t kernel_len = 0;  // beta
  std::size_t stride = 1;      // s
  std::size_t padding = 0;     // p

  DummyTensorSpec() = default;
  DummyTensorSpec(std::size_t input_len, std::size_t output_len, std::size_t kernel_len,
                  std::size_t stride, std::size_t padding);

  // Derives output_len = floor((input_len + 2*padding - kernel_len)/stride) + 1.
  static DummyTensorSpec from_geometry(std::size_t input_len, std::size_t kernel_len,
                                       std::size_t stride, std::size_t padding);

  void validate() const;
};

std::size_t conv_output_len(std::size_t input_len, std::size_t kernel_len, std::size_t stride,
                            std::size_t padding);

// Materializes the binary 3-order tensor P for the spec.
DenseTensor dummy_tensor(const DummyTensorSpec& spec);

// y[j'] = sum_{j,k} P[j,j',k] * a[j] * b[k], computed as two contractions
// against the materialized dummy tensor.  Out-of-range taps contribute
// nothing, which is exactly zero padding.
DenseTensor conv1d_via_dummy(const DenseTensor& a, const DenseTensor& b, const DummyTensorSpec& spec);

// 2-D cross-correlation of x (H x W x I) with w (K x K x I x O), stride s and
// zero padding p on both spatial axes, built from one dummy tensor per
// spatial axis:
//   out[h',w',o] = sum_{h,w,kh,kw,i} Ph[h,h',kh] * Pw[w,w',kw] * x[h,w,i] * w[kh,kw,i,o].
DenseTensor conv2d_forward(const DenseTensor& x, const DenseTensor& w, std::size_t stride,
                           std::size_t padding);

// CP reconstruction: X[i1..iN] = sum_r lambda_r * prod_n factors[n][i_n, r].
DenseTensor cp_reconstruct(std::span<const DenseTensor> factors, const DenseTensor& lambdas);

// Tensor-ring reconstruction from N 3-order cores, core n of shape
// R_n x I_n x R_{n+1} with the bond ranks closing cyclically:
//   X[i1..iN] = Trace(G1[:,i1,:] * G2[:,i2,:] * ... * GN[:,iN,:]).
DenseTensor tr_reconstruct(std::span<const DenseTensor> cores);

// Axis permutation; perm[new_axis] = old_axis.
DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> perm);
DenseTensor permute(const DenseTensor& t, std::initializer_list<std::size_t> perm);

// Same data, new shape (sizes must match).
DenseTensor reshape(const DenseTensor& t, std::vector<std::size_t> shape);

DenseTensor add(const DenseTensor& a, const DenseTensor& b);
DenseTensor scale(const DenseTensor& a, double s);

// Multiplies every slice t[..., r, ...] along `axis` by v[r].
DenseTensor scale_axis(const DenseTensor& t, const DenseTensor& v, std::size_t axis);

std::string shape_str(std::span<const std::size_t> shape);

}  // namespace metalora
