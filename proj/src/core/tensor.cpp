#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace metalora {

namespace {

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

void check_extents_positive(std::span<const std::size_t> shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError(strf("zero extent in shape ", shape_str(shape)));
  }
}

}  // namespace

std::string shape_str(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  s += "]";
  return s;
}

DenseTensor::DenseTensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  check_extents_positive(shape_);
  data_.assign(shape_product(shape_), 0.0);
}

DenseTensor::DenseTensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents_positive(shape_);
  if (data_.size() != shape_product(shape_)) {
    throw ShapeError(strf("data length ", data_.size(), " does not match shape ", shape_str(shape_),
                          " (expected ", shape_product(shape_), ")"));
  }
}

DenseTensor DenseTensor::scalar(double v) {
  DenseTensor t;
  t.data_[0] = v;
  return t;
}

DenseTensor DenseTensor::full(std::vector<std::size_t> shape, double v) {
  DenseTensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

DenseTensor DenseTensor::identity(std::size_t n) {
  DenseTensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

std::size_t DenseTensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) throw ArgError(strf("axis ", axis, " out of range for order ", order()));
  return shape_[axis];
}

std::vector<std::size_t> DenseTensor::strides() const {
  std::vector<std::size_t> s(shape_.size(), 1);
  for (std::size_t i = shape_.size(); i-- > 1;) s[i - 1] = s[i] * shape_[i];
  return s;
}

std::size_t DenseTensor::flat_index(std::span<const std::size_t> idx) const {
  if (idx.size() != shape_.size()) {
    throw ArgError(strf("index of length ", idx.size(), " for order-", order(), " tensor"));
  }
  std::size_t flat = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= shape_[i]) throw ArgError(strf("index ", idx[i], " out of range on axis ", i));
    flat = flat * shape_[i] + idx[i];
  }
  return flat;
}

double& DenseTensor::at(std::span<const std::size_t> idx) { return data_[flat_index(idx)]; }
double DenseTensor::at(std::span<const std::size_t> idx) const { return data_[flat_index(idx)]; }

DenseTensor& DenseTensor::to_precision(Precision p) {
  precision_ = p;
  if (p == Precision::F32) {
    for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
  }
  return *this;
}

bool DenseTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

//---------------------------------------------------------------------------
// contraction

DenseTensor contract(const DenseTensor& a, const DenseTensor& b, std::span<const AxisPair> pairs) {
  const std::size_t na = a.order(), nb = b.order();
  std::vector<char> used_a(na, 0), used_b(nb, 0);
  for (const auto& [ia, ib] : pairs) {
    if (ia >= na || ib >= nb) {
      throw ArgError(strf("contract: invalid axis pair (", ia, ",", ib, ") for orders ", na, " and ", nb));
    }
    if (used_a[ia] || used_b[ib]) {
      throw ArgError(strf("contract: axis appears twice in pair (", ia, ",", ib, ")"));
    }
    used_a[ia] = used_b[ib] = 1;
    if (a.extent(ia) != b.extent(ib)) {
      throw ShapeError(strf("contract: extent mismatch on pair (", ia, ",", ib, "): ", a.extent(ia),
                            " vs ", b.extent(ib)));
    }
  }

  std::vector<std::size_t> free_a, free_b;
  for (std::size_t i = 0; i < na; ++i)
    if (!used_a[i]) free_a.push_back(i);
  for (std::size_t i = 0; i < nb; ++i)
    if (!used_b[i]) free_b.push_back(i);

  std::vector<std::size_t> out_shape;
  out_shape.reserve(free_a.size() + free_b.size());
  for (std::size_t i : free_a) out_shape.push_back(a.extent(i));
  for (std::size_t i : free_b) out_shape.push_back(b.extent(i));

  const auto sa = a.strides();
  const auto sb = b.strides();

  // Odometer walks: per-group (extent, stride) tables, least significant last.
  struct Dim {
    std::size_t extent, step_a, step_b;
  };
  std::vector<Dim> dims_fa, dims_fb, dims_c;
  for (std::size_t i : free_a) dims_fa.push_back({a.extent(i), sa[i], 0});
  for (std::size_t i : free_b) dims_fb.push_back({b.extent(i), 0, sb[i]});
  for (const auto& [ia, ib] : pairs) dims_c.push_back({a.extent(ia), sa[ia], sb[ib]});

  DenseTensor out(out_shape.empty() ? std::vector<std::size_t>{} : out_shape);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();

  std::vector<std::size_t> ctr_fa(dims_fa.size(), 0), ctr_fb(dims_fb.size(), 0), ctr_c(dims_c.size(), 0);

  auto advance = [](std::vector<std::size_t>& ctr, const std::vector<Dim>& dims, std::size_t& off_a,
                    std::size_t& off_b) -> bool {
    for (std::size_t i = dims.size(); i-- > 0;) {
      off_a += dims[i].step_a;
      off_b += dims[i].step_b;
      if (++ctr[i] < dims[i].extent) return true;
      off_a -= dims[i].step_a * dims[i].extent;
      off_b -= dims[i].step_b * dims[i].extent;
      ctr[i] = 0;
    }
    return false;
  };

  std::size_t base_a = 0, off_unused_fa = 0;
  std::size_t out_pos = 0;
  do {
    std::size_t base_b = 0, off_unused_fb = 0;
    std::fill(ctr_fb.begin(), ctr_fb.end(), 0);
    do {
      double sum = 0.0;
      std::size_t oa = base_a, ob = base_b;
      std::fill(ctr_c.begin(), ctr_c.end(), 0);
      do {
        sum += pa[oa] * pb[ob];
      } while (advance(ctr_c, dims_c, oa, ob));
      po[out_pos++] = sum;
    } while (advance(ctr_fb, dims_fb, off_unused_fb, base_b));
  } while (advance(ctr_fa, dims_fa, base_a, off_unused_fa));

  return out;
}

DenseTensor contract(const DenseTensor& a, const DenseTensor& b, std::initializer_list<AxisPair> pairs) {
  return contract(a, b, std::span<const AxisPair>(pairs.begin(), pairs.size()));
}

//---------------------------------------------------------------------------
// dummy tensor and convolution

std::size_t conv_output_len(std::size_t input_len, std::size_t kernel_len, std::size_t stride,
                            std::size_t padding) {
  if (input_len + 2 * padding < kernel_len) {
    throw ShapeError(strf("kernel length ", kernel_len, " exceeds padded input length ",
                          input_len + 2 * padding));
  }
  return (input_len + 2 * padding - kernel_len) / stride + 1;
}

DummyTensorSpec::DummyTensorSpec(std::size_t input_len, std::size_t output_len, std::size_t kernel_len,
                                 std::size_t stride, std::size_t padding)
    : input_len(input_len),
      output_len(output_len),
      kernel_len(kernel_len),
      stride(stride),
      padding(padding) {
  validate();
}

DummyTensorSpec DummyTensorSpec::from_geometry(std::size_t input_len, std::size_t kernel_len,
                                               std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ArgError("dummy tensor: stride must be positive");
  return DummyTensorSpec(input_len, conv_output_len(input_len, kernel_len, stride, padding),
                         kernel_len, stride, padding);
}

void DummyTensorSpec::validate() const {
  if (input_len == 0 || output_len == 0 || kernel_len == 0 || stride == 0) {
    throw ArgError("dummy tensor: input_len, output_len, kernel_len and stride must be positive");
  }
  // Every output position must see at least one in-range input tap.
  for (std::size_t jp = 0; jp < output_len; ++jp) {
    bool covered = false;
    for (std::size_t k = 0; k < kernel_len && !covered; ++k) {
      const std::ptrdiff_t j =
          static_cast<std::ptrdiff_t>(stride * jp + k) - static_cast<std::ptrdiff_t>(padding);
      covered = j >= 0 && j < static_cast<std::ptrdiff_t>(input_len);
    }
    if (!covered) {
      throw ShapeError(strf("dummy tensor: output position ", jp,
                            " maps to no input index (input_len=", input_len, " kernel_len=", kernel_len,
                            " stride=", stride, " padding=", padding, ")"));
    }
  }
}

DenseTensor dummy_tensor(const DummyTensorSpec& spec) {
  spec.validate();
  DenseTensor p({spec.input_len, spec.output_len, spec.kernel_len});
  for (std::size_t jp = 0; jp < spec.output_len; ++jp) {
    for (std::size_t k = 0; k < spec.kernel_len; ++k) {
      const std::ptrdiff_t j =
          static_cast<std::ptrdiff_t>(spec.stride * jp + k) - static_cast<std::ptrdiff_t>(spec.padding);
      if (j >= 0 && j < static_cast<std::ptrdiff_t>(spec.input_len)) {
        p.at({static_cast<std::size_t>(j), jp, k}) = 1.0;
      }
    }
  }
  return p;
}

DenseTensor conv1d_via_dummy(const DenseTensor& a, const DenseTensor& b, const DummyTensorSpec& spec) {
  if (a.order() != 1 || b.order() != 1) throw ShapeError("conv1d_via_dummy: inputs must be vectors");
  if (a.extent(0) != spec.input_len) {
    throw ShapeError(strf("conv1d_via_dummy: input length ", a.extent(0), " != spec input_len ",
                          spec.input_len));
  }
  if (b.extent(0) != spec.kernel_len) {
    throw ShapeError(strf("conv1d_via_dummy: kernel length ", b.extent(0), " != spec kernel_len ",
                          spec.kernel_len));
  }
  const DenseTensor p = dummy_tensor(spec);
  const DenseTensor t = contract(a, p, {{0, 0}});  // -> output_len x kernel_len
  return contract(t, b, {{1, 0}});                 // -> output_len
}

DenseTensor conv2d_forward(const DenseTensor& x, const DenseTensor& w, std::size_t stride,
                           std::size_t padding) {
  if (x.order() != 3) throw ShapeError(strf("conv2d: input must be H x W x I, got ", shape_str(x.shape())));
  if (w.order() != 4) {
    throw ShapeError(strf("conv2d: kernel must be K x K x I x O, got ", shape_str(w.shape())));
  }
  if (w.extent(0) != w.extent(1)) {
    throw ShapeError(strf("conv2d: kernel must be square, got ", shape_str(w.shape())));
  }
  if (w.extent(2) != x.extent(2)) {
    throw ShapeError(strf("conv2d: input channels ", x.extent(2), " != kernel channels ", w.extent(2)));
  }
  const std::size_t k = w.extent(0);
  const auto ph = DummyTensorSpec::from_geometry(x.extent(0), k, stride, padding);
  const auto pw = DummyTensorSpec::from_geometry(x.extent(1), k, stride, padding);

  // x (H,W,I) x Ph (H,H',Kh) over H          -> (W, I, H', Kh)
  const DenseTensor t1 = contract(x, dummy_tensor(ph), {{0, 0}});
  // (W,I,H',Kh) x Pw (W,W',Kw) over W        -> (I, H', Kh, W', Kw)
  const DenseTensor t2 = contract(t1, dummy_tensor(pw), {{0, 0}});
  // (I,H',Kh,W',Kw) x w (Kh,Kw,I,O)          -> (H', W', O)
  return contract(t2, w, {{2, 0}, {4, 1}, {0, 2}});
}

//---------------------------------------------------------------------------
// CP / TR reconstruction

DenseTensor cp_reconstruct(std::span<const DenseTensor> factors, const DenseTensor& lambdas) {
  if (factors.empty()) throw ArgError("cp_reconstruct: need at least one factor");
  if (lambdas.order() != 1) throw ShapeError("cp_reconstruct: lambdas must be a vector");
  const std::size_t rank = lambdas.extent(0);
  std::vector<std::size_t> shape;
  for (std::size_t n = 0; n < factors.size(); ++n) {
    const DenseTensor& f = factors[n];
    if (f.order() != 2) throw ShapeError(strf("cp_reconstruct: factor ", n, " must be a matrix"));
    if (f.extent(1) != rank) {
      throw ShapeError(strf("cp_reconstruct: factor ", n, " has rank ", f.extent(1), ", expected ", rank));
    }
    shape.push_back(f.extent(0));
  }

  DenseTensor out(shape);
  std::vector<std::size_t> idx(factors.size(), 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    double sum = 0.0;
    for (std::size_t r = 0; r < rank; ++r) {
      double term = lambdas[r];
      for (std::size_t n = 0; n < factors.size(); ++n) term *= factors[n][idx[n] * rank + r];
      sum += term;
    }
    out[flat] = sum;
    for (std::size_t n = factors.size(); n-- > 0;) {
      if (++idx[n] < shape[n]) break;
      idx[n] = 0;
    }
  }
  return out;
}

DenseTensor tr_reconstruct(std::span<const DenseTensor> cores) {
  if (cores.empty()) throw ArgError("tr_reconstruct: need at least one core");
  const std::size_t n_cores = cores.size();
  std::vector<std::size_t> shape(n_cores);
  for (std::size_t n = 0; n < n_cores; ++n) {
    if (cores[n].order() != 3) throw ShapeError(strf("tr_reconstruct: core ", n, " must be 3-order"));
    shape[n] = cores[n].extent(1);
    const std::size_t next = (n + 1) % n_cores;
    if (cores[n].extent(2) != cores[next].extent(0)) {
      throw ShapeError(strf("tr_reconstruct: bond mismatch between core ", n, " (right rank ",
                            cores[n].extent(2), ") and core ", next, " (left rank ",
                            cores[next].extent(0), ")"));
    }
  }

  DenseTensor out(shape);
  std::vector<std::size_t> idx(n_cores, 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    // Chain the per-index slices left to right, then trace.
    const DenseTensor& g0 = cores[0];
    const std::size_t r0 = g0.extent(0);
    std::size_t cur_cols = g0.extent(2);
    std::vector<double> m(r0 * cur_cols);
    for (std::size_t a = 0; a < r0; ++a)
      for (std::size_t b = 0; b < cur_cols; ++b)
        m[a * cur_cols + b] = g0[(a * g0.extent(1) + idx[0]) * g0.extent(2) + b];

    for (std::size_t n = 1; n < n_cores; ++n) {
      const DenseTensor& g = cores[n];
      const std::size_t mid = g.extent(1), right = g.extent(2);
      std::vector<double> next(r0 * right, 0.0);
      for (std::size_t a = 0; a < r0; ++a)
        for (std::size_t c = 0; c < cur_cols; ++c) {
          const double v = m[a * cur_cols + c];
          if (v == 0.0) continue;
          for (std::size_t b = 0; b < right; ++b)
            next[a * right + b] += v * g[(c * mid + idx[n]) * right + b];
        }
      m = std::move(next);
      cur_cols = right;
    }

    double trace = 0.0;
    for (std::size_t a = 0; a < r0; ++a) trace += m[a * cur_cols + a];
    out[flat] = trace;

    for (std::size_t n = n_cores; n-- > 0;) {
      if (++idx[n] < shape[n]) break;
      idx[n] = 0;
    }
  }
  return out;
}

//---------------------------------------------------------------------------
// layout helpers

DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> perm) {
  if (perm.size() != t.order()) throw ArgError("permute: permutation length must equal tensor order");
  std::vector<char> seen(t.order(), 0);
  std::vector<std::size_t> out_shape(t.order());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= t.order() || seen[perm[i]]) throw ArgError("permute: invalid permutation");
    seen[perm[i]] = 1;
    out_shape[i] = t.extent(perm[i]);
  }
  DenseTensor out(out_shape.empty() ? std::vector<std::size_t>{} : out_shape);
  const auto src_strides = t.strides();
  std::vector<std::size_t> step(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) step[i] = src_strides[perm[i]];

  std::vector<std::size_t> ctr(perm.size(), 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    out[flat] = t[src];
    for (std::size_t i = perm.size(); i-- > 0;) {
      src += step[i];
      if (++ctr[i] < out_shape[i]) break;
      src -= step[i] * out_shape[i];
      ctr[i] = 0;
    }
  }
  return out;
}

DenseTensor permute(const DenseTensor& t, std::initializer_list<std::size_t> perm) {
  return permute(t, std::span<const std::size_t>(perm.begin(), perm.size()));
}

DenseTensor reshape(const DenseTensor& t, std::vector<std::size_t> shape) {
  return DenseTensor(std::move(shape), t.values());
}

DenseTensor add(const DenseTensor& a, const DenseTensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(strf("add: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  }
  DenseTensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

DenseTensor scale(const DenseTensor& a, double s) {
  DenseTensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return out;
}

DenseTensor scale_axis(const DenseTensor& t, const DenseTensor& v, std::size_t axis) {
  if (v.order() != 1) throw ShapeError("scale_axis: v must be a vector");
  if (axis >= t.order()) throw ArgError(strf("scale_axis: axis ", axis, " out of range"));
  if (v.extent(0) != t.extent(axis)) {
    throw ShapeError(strf("scale_axis: vector length ", v.extent(0), " != extent ", t.extent(axis),
                          " on axis ", axis));
  }
  DenseTensor out = t;
  const std::size_t stride = t.strides()[axis];
  const std::size_t extent = t.extent(axis);
  const std::size_t block = stride * extent;
  for (std::size_t base = 0; base < out.size(); base += block) {
    for (std::size_t r = 0; r < extent; ++r) {
      const double f = v[r];
      double* p = out.data() + base + r * stride;
      for (std::size_t i = 0; i < stride; ++i) p[i] *= f;
    }
  }
  return out;
}

}  // namespace metalora
