// Shared helpers for the unit tests: random tensors and a nested-loop
// contraction oracle kept independent of the library's implementation.
#pragma once

#include <span>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace testutil {

inline metalora::DenseTensor rand_tensor(metalora::Rng& rng, std::vector<std::size_t> shape,
                                         double lo = -1.0, double hi = 1.0) {
  metalora::DenseTensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline bool next_index(std::vector<std::size_t>& idx, std::span<const std::size_t> ext) {
  for (std::size_t a = ext.size(); a-- > 0;) {
    if (++idx[a] < ext[a]) return true;
    idx[a] = 0;
  }
  return false;
}

inline metalora::DenseTensor loop_contract(const metalora::DenseTensor& a,
                                           const metalora::DenseTensor& b,
                                           std::span<const metalora::AxisPair> pairs) {
  std::vector<char> ca(a.order(), 0), cb(b.order(), 0);
  for (const auto& [pa, pb] : pairs) ca[pa] = 1, cb[pb] = 1;
  std::vector<std::size_t> fa, fb, out_shape, ce;
  for (std::size_t i = 0; i < a.order(); ++i)
    if (!ca[i]) fa.push_back(i), out_shape.push_back(a.extent(i));
  for (std::size_t i = 0; i < b.order(); ++i)
    if (!cb[i]) fb.push_back(i), out_shape.push_back(b.extent(i));
  for (const auto& [pa, pb] : pairs) ce.push_back(a.extent(pa));

  metalora::DenseTensor out(out_shape);
  std::vector<std::size_t> oi(out_shape.size(), 0);
  do {
    std::vector<std::size_t> ia(a.order(), 0), ib(b.order(), 0);
    for (std::size_t i = 0; i < fa.size(); ++i) ia[fa[i]] = oi[i];
    for (std::size_t i = 0; i < fb.size(); ++i) ib[fb[i]] = oi[fa.size() + i];
    double s = 0.0;
    std::vector<std::size_t> ci(ce.size(), 0);
    do {
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        ia[pairs[i].first] = ci[i];
        ib[pairs[i].second] = ci[i];
      }
      s += a.at(ia) * b.at(ib);
    } while (next_index(ci, ce));
    out.at(oi) = s;
  } while (next_index(oi, out_shape));
  return out;
}

inline double max_abs_diff(const metalora::DenseTensor& a, const metalora::DenseTensor& b) {
  if (!a.same_shape(b)) return 1e300;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
    if (d > m) m = d;
  }
  return m;
}

}  // namespace testutil
