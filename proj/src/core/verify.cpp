#include "core/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "core/adapters.hpp"
#include "core/knn.hpp"
#include "core/model.hpp"
#include "core/rng.hpp"
#include "core/stats.hpp"
#include "core/tensor.hpp"
#include "core/train.hpp"

namespace metalora {
namespace {

constexpr double kOracleTol = 1e-12;   // oracle-equivalence suites
constexpr double kGradTol = 1e-4;      // finite-difference suites
constexpr double kGradFloor = 1e-7;    // below this both grads count as zero
constexpr double kFdStep = 1e-5;

//---------------------------------------------------------------------------
// suite bookkeeping

class Check {
 public:
  Check(std::string name, std::string module) {
    r_.name = std::move(name);
    r_.module = std::move(module);
    r_.passed = true;
  }

  void fail(const std::string& detail) {
    if (r_.passed) {
      r_.passed = false;
      r_.detail = detail;
    }
  }

  void is_true(bool cond, const std::string& ctx) {
    ++r_.cases;
    if (!cond) fail(ctx);
  }

  // Relative error floored at unit scale; tracked as the suite's max_err.
  void near(double actual, double expected, double tol, const std::string& ctx) {
    ++r_.cases;
    const double err =
        std::fabs(actual - expected) / std::max({std::fabs(actual), std::fabs(expected), 1.0});
    if (!(err <= tol) || !std::isfinite(actual)) {
      fail(strf(ctx, ": got ", actual, ", want ", expected, " (err ", err, ")"));
    }
    if (std::isfinite(err)) r_.max_err = std::max(r_.max_err, err);
  }

  void near_tensor(const DenseTensor& actual, const DenseTensor& expected, double tol,
                   const std::string& ctx) {
    if (!actual.same_shape(expected)) {
      ++r_.cases;
      fail(strf(ctx, ": shape ", shape_str(actual.shape()), ", want ",
                shape_str(expected.shape())));
      return;
    }
    for (std::size_t i = 0; i < actual.size(); ++i) {
      near(actual[i], expected[i], tol, strf(ctx, " [", i, "]"));
    }
  }

  void equal_tensor(const DenseTensor& actual, const DenseTensor& expected,
                    const std::string& ctx) {
    ++r_.cases;
    if (!actual.same_shape(expected)) {
      fail(strf(ctx, ": shape mismatch"));
      return;
    }
    for (std::size_t i = 0; i < actual.size(); ++i) {
      if (actual[i] != expected[i]) {
        fail(strf(ctx, ": entry ", i, " is ", actual[i], ", want exactly ", expected[i]));
        return;
      }
    }
  }

  SuiteResult done() { return r_; }

 private:
  SuiteResult r_;
};

//---------------------------------------------------------------------------
// shared randomness + small helpers

DenseTensor rand_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0,
                        double hi = 1.0) {
  DenseTensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

bool odo_advance(std::vector<std::size_t>& idx, std::span<const std::size_t> ext) {
  for (std::size_t a = ext.size(); a-- > 0;) {
    if (++idx[a] < ext[a]) return true;
    idx[a] = 0;
  }
  return false;
}

//---------------------------------------------------------------------------
// brute-force oracles (independent nested-loop evaluations)

DenseTensor brute_contract(const DenseTensor& a, const DenseTensor& b,
                           std::span<const AxisPair> pairs) {
  std::vector<char> con_a(a.order(), 0), con_b(b.order(), 0);
  for (const auto& [pa, pb] : pairs) {
    con_a[pa] = 1;
    con_b[pb] = 1;
  }
  std::vector<std::size_t> free_a, free_b, out_shape, con_ext;
  for (std::size_t i = 0; i < a.order(); ++i) {
    if (!con_a[i]) {
      free_a.push_back(i);
      out_shape.push_back(a.extent(i));
    }
  }
  for (std::size_t i = 0; i < b.order(); ++i) {
    if (!con_b[i]) {
      free_b.push_back(i);
      out_shape.push_back(b.extent(i));
    }
  }
  for (const auto& [pa, pb] : pairs) con_ext.push_back(a.extent(pa));

  DenseTensor out(out_shape);
  std::vector<std::size_t> oi(out_shape.size(), 0);
  do {
    std::vector<std::size_t> ia(a.order(), 0), ib(b.order(), 0);
    for (std::size_t i = 0; i < free_a.size(); ++i) ia[free_a[i]] = oi[i];
    for (std::size_t i = 0; i < free_b.size(); ++i) ib[free_b[i]] = oi[free_a.size() + i];
    double s = 0.0;
    std::vector<std::size_t> ci(con_ext.size(), 0);
    do {
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        ia[pairs[i].first] = ci[i];
        ib[pairs[i].second] = ci[i];
      }
      s += a.at(ia) * b.at(ib);
    } while (odo_advance(ci, con_ext));
    out.at(oi) = s;
  } while (odo_advance(oi, out_shape));
  return out;
}

DenseTensor brute_conv1d(const DenseTensor& a, const DenseTensor& b, const DummyTensorSpec& spec) {
  DenseTensor y({spec.output_len});
  for (std::size_t jp = 0; jp < spec.output_len; ++jp) {
    double s = 0.0;
    for (std::size_t k = 0; k < spec.kernel_len; ++k) {
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(spec.stride * jp + k) -
                               static_cast<std::ptrdiff_t>(spec.padding);
      if (j >= 0 && j < static_cast<std::ptrdiff_t>(spec.input_len)) {
        s += a[static_cast<std::size_t>(j)] * b[k];
      }
    }
    y[jp] = s;
  }
  return y;
}

DenseTensor brute_conv2d(const DenseTensor& x, const DenseTensor& w, std::size_t stride,
                         std::size_t padding) {
  const std::size_t h = x.extent(0), wid = x.extent(1), cin = x.extent(2);
  const std::size_t k = w.extent(0), cout = w.extent(3);
  const std::size_t ho = conv_output_len(h, k, stride, padding);
  const std::size_t wo = conv_output_len(wid, k, stride, padding);
  DenseTensor out({ho, wo, cout});
  for (std::size_t hp = 0; hp < ho; ++hp) {
    for (std::size_t wp = 0; wp < wo; ++wp) {
      for (std::size_t o = 0; o < cout; ++o) {
        double s = 0.0;
        for (std::size_t kh = 0; kh < k; ++kh) {
          for (std::size_t kw = 0; kw < k; ++kw) {
            const std::ptrdiff_t hh = static_cast<std::ptrdiff_t>(stride * hp + kh) -
                                      static_cast<std::ptrdiff_t>(padding);
            const std::ptrdiff_t ww = static_cast<std::ptrdiff_t>(stride * wp + kw) -
                                      static_cast<std::ptrdiff_t>(padding);
            if (hh < 0 || ww < 0 || hh >= static_cast<std::ptrdiff_t>(h) ||
                ww >= static_cast<std::ptrdiff_t>(wid)) {
              continue;
            }
            for (std::size_t i = 0; i < cin; ++i) {
              s += x.at({static_cast<std::size_t>(hh), static_cast<std::size_t>(ww), i}) *
                   w.at({kh, kw, i, o});
            }
          }
        }
        out.at({hp, wp, o}) = s;
      }
    }
  }
  return out;
}

double pure_xent(const DenseTensor& logits, std::size_t label) {
  const double m = *std::max_element(logits.values().begin(), logits.values().end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += std::exp(logits[i] - m);
  return std::log(sum) + m - logits[label];
}

//---------------------------------------------------------------------------
// tensor core suites

SuiteResult suite_contract() {
  Check c("contract_brute_force", "tensor_core");
  Rng rng(derive_seed(90210, "verify-contract"));
  for (int t = 0; t < 120; ++t) {
    const std::size_t oa = 1 + rng.uniform_index(3);
    const std::size_t ob = 1 + rng.uniform_index(3);
    std::vector<std::size_t> sa(oa), sb(ob);
    for (auto& e : sa) e = 1 + rng.uniform_index(5);
    for (auto& e : sb) e = 1 + rng.uniform_index(5);
    const std::size_t s_max = std::min(oa, ob);
    const std::size_t s = rng.uniform_index(s_max + 1);
    std::vector<std::size_t> ax_a = rng.permutation(oa), ax_b = rng.permutation(ob);
    std::vector<AxisPair> pairs;
    for (std::size_t i = 0; i < s; ++i) {
      sb[ax_b[i]] = sa[ax_a[i]];
      pairs.emplace_back(ax_a[i], ax_b[i]);
    }
    const DenseTensor a = rand_tensor(rng, sa);
    const DenseTensor b = rand_tensor(rng, sb);
    c.near_tensor(contract(a, b, pairs), brute_contract(a, b, pairs), kOracleTol,
                  strf("contract case ", t, " ", shape_str(sa), "*", shape_str(sb), " S=", s));
  }
  return c.done();
}

// Draws until the geometry admits a dummy tensor (every output covered).
DummyTensorSpec random_valid_spec(Rng& rng, std::size_t max_in, std::size_t max_k) {
  for (;;) {
    const std::size_t alpha = 1 + rng.uniform_index(max_in);
    const std::size_t beta = 1 + rng.uniform_index(max_k);
    const std::size_t stride = 1 + rng.uniform_index(3);
    const std::size_t pad = rng.uniform_index(3);
    try {
      return DummyTensorSpec::from_geometry(alpha, beta, stride, pad);
    } catch (const Error&) {
      continue;
    }
  }
}

SuiteResult suite_conv1d() {
  Check c("conv1d_dummy_brute_force", "tensor_core");
  Rng rng(derive_seed(90210, "verify-conv1d"));
  for (int t = 0; t < 120; ++t) {
    const DummyTensorSpec spec = random_valid_spec(rng, 10, 5);
    const DenseTensor a = rand_tensor(rng, {spec.input_len});
    const DenseTensor b = rand_tensor(rng, {spec.kernel_len});
    c.near_tensor(conv1d_via_dummy(a, b, spec), brute_conv1d(a, b, spec), kOracleTol,
                  strf("conv1d case ", t, " alpha=", spec.input_len, " beta=", spec.kernel_len,
                       " s=", spec.stride, " p=", spec.padding));
  }
  return c.done();
}

SuiteResult suite_conv2d() {
  Check c("conv2d_brute_force", "tensor_core");
  Rng rng(derive_seed(90210, "verify-conv2d"));
  int done = 0;
  while (done < 110) {
    const std::size_t h = 3 + rng.uniform_index(6);
    const std::size_t w = 3 + rng.uniform_index(6);
    const std::size_t k = 1 + 2 * rng.uniform_index(3);  // 1, 3, 5
    const std::size_t stride = 1 + rng.uniform_index(2);
    const std::size_t pad = rng.uniform_index(3);
    try {
      DummyTensorSpec::from_geometry(h, k, stride, pad).validate();
      DummyTensorSpec::from_geometry(w, k, stride, pad).validate();
    } catch (const Error&) {
      continue;
    }
    const std::size_t cin = 1 + rng.uniform_index(3);
    const std::size_t cout = 1 + rng.uniform_index(3);
    const DenseTensor x = rand_tensor(rng, {h, w, cin});
    const DenseTensor wt = rand_tensor(rng, {k, k, cin, cout});
    c.near_tensor(conv2d_forward(x, wt, stride, pad), brute_conv2d(x, wt, stride, pad), kOracleTol,
                  strf("conv2d case ", done, " ", h, "x", w, "x", cin, " k=", k, " s=", stride,
                       " p=", pad));
    ++done;
  }
  return c.done();
}

SuiteResult suite_cp() {
  Check c("cp_reconstruct_brute_force", "tensor_core");
  Rng rng(derive_seed(90210, "verify-cp"));
  for (int t = 0; t < 110; ++t) {
    const std::size_t n = 2 + rng.uniform_index(3);
    const std::size_t r = 1 + rng.uniform_index(3);
    std::vector<std::size_t> ext(n);
    for (auto& e : ext) e = 1 + rng.uniform_index(5);
    std::vector<DenseTensor> factors;
    for (std::size_t i = 0; i < n; ++i) factors.push_back(rand_tensor(rng, {ext[i], r}));
    const DenseTensor lambdas = rand_tensor(rng, {r});

    DenseTensor want(ext);
    std::vector<std::size_t> oi(n, 0);
    do {
      double s = 0.0;
      for (std::size_t rr = 0; rr < r; ++rr) {
        double prod = lambdas[rr];
        for (std::size_t i = 0; i < n; ++i) prod *= factors[i].at({oi[i], rr});
        s += prod;
      }
      want.at(oi) = s;
    } while (odo_advance(oi, ext));

    c.near_tensor(cp_reconstruct(factors, lambdas), want, kOracleTol,
                  strf("cp case ", t, " order ", n, " rank ", r));
  }
  return c.done();
}

SuiteResult suite_tr() {
  Check c("tr_reconstruct_brute_force", "tensor_core");
  Rng rng(derive_seed(90210, "verify-tr"));
  for (int t = 0; t < 110; ++t) {
    const std::size_t n = 2 + rng.uniform_index(3);
    std::vector<std::size_t> ranks(n), ext(n);
    for (auto& rr : ranks) rr = 1 + rng.uniform_index(3);
    for (auto& e : ext) e = 1 + rng.uniform_index(5);
    std::vector<DenseTensor> cores;
    for (std::size_t i = 0; i < n; ++i) {
      cores.push_back(rand_tensor(rng, {ranks[i], ext[i], ranks[(i + 1) % n]}));
    }

    DenseTensor want(ext);
    std::vector<std::size_t> oi(n, 0);
    do {
      double s = 0.0;
      std::vector<std::size_t> ri(n, 0);
      do {
        double prod = 1.0;
        for (std::size_t i = 0; i < n; ++i) prod *= cores[i].at({ri[i], oi[i], ri[(i + 1) % n]});
        s += prod;
      } while (odo_advance(ri, ranks));
      want.at(oi) = s;
    } while (odo_advance(oi, ext));

    c.near_tensor(tr_reconstruct(cores), want, kOracleTol, strf("tr case ", t, " order ", n));
  }
  return c.done();
}

SuiteResult suite_dummy_law() {
  Check c("dummy_tensor_law", "tensor_core");
  for (std::size_t alpha = 1; alpha <= 12; ++alpha) {
    for (std::size_t beta = 1; beta <= 5; ++beta) {
      for (std::size_t s = 1; s <= 3; ++s) {
        for (std::size_t p = 0; p <= 2; ++p) {
          const std::string ctx = strf("alpha=", alpha, " beta=", beta, " s=", s, " p=", p);
          // Independent geometry analysis: does every output position see at
          // least one in-range tap?
          const bool has_output = alpha + 2 * p >= beta;
          bool covered = has_output;
          std::size_t out_len = 0;
          if (has_output) {
            out_len = (alpha + 2 * p - beta) / s + 1;
            for (std::size_t jp = 0; jp < out_len && covered; ++jp) {
              bool any = false;
              for (std::size_t k = 0; k < beta; ++k) {
                const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(s * jp + k) -
                                         static_cast<std::ptrdiff_t>(p);
                if (j >= 0 && j < static_cast<std::ptrdiff_t>(alpha)) any = true;
              }
              covered = any;
            }
          }
          bool built = false;
          try {
            const DummyTensorSpec spec = DummyTensorSpec::from_geometry(alpha, beta, s, p);
            const DenseTensor P = dummy_tensor(spec);
            built = true;
            c.is_true(spec.output_len == out_len, ctx + ": output length");
            bool law_ok = true;
            for (std::size_t j = 0; j < alpha && law_ok; ++j) {
              for (std::size_t jp = 0; jp < out_len && law_ok; ++jp) {
                for (std::size_t k = 0; k < beta && law_ok; ++k) {
                  const bool one = j + p == s * jp + k;
                  const double v = P.at({j, jp, k});
                  if (v != (one ? 1.0 : 0.0)) law_ok = false;
                }
              }
            }
            c.is_true(law_ok, ctx + ": P[j,j',k] = 1 iff j = s*j' + k - p");
          } catch (const Error&) {
            built = false;
          }
          c.is_true(built == covered,
                    ctx + (covered ? ": construction rejected a valid geometry"
                                   : ": construction accepted an uncovered geometry"));
        }
      }
    }
  }
  return c.done();
}

//---------------------------------------------------------------------------
// adapter suites

SuiteResult suite_conv_lora_factored() {
  Check c("conv_lora_factored_equivalence", "adapters");
  Rng rng(derive_seed(90210, "verify-factored"));
  int done = 0;
  while (done < 60) {
    const std::size_t h = 4 + rng.uniform_index(5);
    const std::size_t w = 4 + rng.uniform_index(5);
    const std::size_t k = 1 + 2 * rng.uniform_index(2);  // 1 or 3
    const std::size_t stride = 1 + rng.uniform_index(2);
    const std::size_t pad = rng.uniform_index(2);
    try {
      DummyTensorSpec::from_geometry(h, k, stride, pad).validate();
      DummyTensorSpec::from_geometry(w, k, stride, pad).validate();
    } catch (const Error&) {
      continue;
    }
    ConvLoRA ad;
    const std::size_t cin = 1 + rng.uniform_index(3);
    const std::size_t cout = 1 + rng.uniform_index(4);
    const std::size_t r = 1 + rng.uniform_index(3);
    ad.A = rand_tensor(rng, {k, k, cin, r});
    ad.B = rand_tensor(rng, {r, cout});
    ad.scale = rng.uniform(0.5, 2.0);
    const DenseTensor x = rand_tensor(rng, {h, w, cin});
    const DenseTensor via_delta = conv2d_forward(x, conv_lora_delta(ad), stride, pad);
    c.near_tensor(conv_lora_apply_factored(x, ad, stride, pad), via_delta, kOracleTol,
                  strf("factored case ", done, " k=", k, " r=", r));
    ++done;
  }
  return c.done();
}

SuiteResult suite_matrix_lora_delta() {
  Check c("matrix_lora_delta_oracle", "adapters");
  Rng rng(derive_seed(90210, "verify-matrix-lora"));
  for (int t = 0; t < 40; ++t) {
    MatrixLoRA ad;
    const std::size_t i = 1 + rng.uniform_index(6), o = 1 + rng.uniform_index(6),
                      r = 1 + rng.uniform_index(3);
    ad.A = rand_tensor(rng, {i, r});
    ad.B = rand_tensor(rng, {r, o});
    ad.scale = rng.uniform(0.5, 2.0);
    DenseTensor want({i, o});
    for (std::size_t a = 0; a < i; ++a) {
      for (std::size_t b = 0; b < o; ++b) {
        double s = 0.0;
        for (std::size_t rr = 0; rr < r; ++rr) s += ad.A.at({a, rr}) * ad.B.at({rr, b});
        want.at({a, b}) = ad.scale * s;
      }
    }
    c.near_tensor(matrix_lora_delta(ad), want, kOracleTol, strf("matrix lora case ", t));
  }
  return c.done();
}

SuiteResult suite_conv_lora_delta() {
  Check c("conv_lora_delta_oracle", "adapters");
  Rng rng(derive_seed(90210, "verify-conv-lora"));
  for (int t = 0; t < 40; ++t) {
    ConvLoRA ad;
    const std::size_t k = 1 + 2 * rng.uniform_index(2), i = 1 + rng.uniform_index(3),
                      o = 1 + rng.uniform_index(4), r = 1 + rng.uniform_index(3);
    ad.A = rand_tensor(rng, {k, k, i, r});
    ad.B = rand_tensor(rng, {r, o});
    ad.scale = rng.uniform(0.5, 2.0);
    DenseTensor want({k, k, i, o});
    for (std::size_t k1 = 0; k1 < k; ++k1)
      for (std::size_t k2 = 0; k2 < k; ++k2)
        for (std::size_t ii = 0; ii < i; ++ii)
          for (std::size_t oo = 0; oo < o; ++oo) {
            double s = 0.0;
            for (std::size_t rr = 0; rr < r; ++rr)
              s += ad.A.at({k1, k2, ii, rr}) * ad.B.at({rr, oo});
            want.at({k1, k2, ii, oo}) = ad.scale * s;
          }
    c.near_tensor(conv_lora_delta(ad), want, kOracleTol, strf("conv lora case ", t));
  }
  return c.done();
}

SuiteResult suite_meta_cp_delta() {
  Check c("meta_cp_delta_oracle", "adapters");
  Rng rng(derive_seed(90210, "verify-meta-cp"));
  for (int t = 0; t < 40; ++t) {
    MetaCPAdapter ad;
    const std::size_t i = 1 + rng.uniform_index(6), o = 1 + rng.uniform_index(6),
                      r = 1 + rng.uniform_index(3);
    ad.A = rand_tensor(rng, {i, r});
    ad.B = rand_tensor(rng, {r, o});
    ad.scale = rng.uniform(0.5, 2.0);
    const DenseTensor seed = rand_tensor(rng, {r});
    DenseTensor want({i, o});
    for (std::size_t a = 0; a < i; ++a)
      for (std::size_t b = 0; b < o; ++b) {
        double s = 0.0;
        for (std::size_t rr = 0; rr < r; ++rr)
          s += ad.A.at({a, rr}) * ad.B.at({rr, b}) * seed[rr];
        want.at({a, b}) = ad.scale * s;
      }
    c.near_tensor(meta_cp_delta(ad, seed), want, kOracleTol, strf("meta cp case ", t));
  }
  return c.done();
}

SuiteResult suite_meta_tr_delta() {
  Check c("meta_tr_delta_oracle", "adapters");
  Rng rng(derive_seed(90210, "verify-meta-tr"));
  for (int t = 0; t < 40; ++t) {
    MetaTRAdapter ad;
    const std::size_t i = 1 + rng.uniform_index(6), o = 1 + rng.uniform_index(6),
                      r = 1 + rng.uniform_index(3);
    ad.A = rand_tensor(rng, {r, i, r});
    ad.B = rand_tensor(rng, {r, o, r});
    ad.scale = rng.uniform(0.5, 2.0);
    const DenseTensor seed = rand_tensor(rng, {r, r});
    DenseTensor want({i, o});
    for (std::size_t a = 0; a < i; ++a)
      for (std::size_t b = 0; b < o; ++b) {
        double s = 0.0;
        for (std::size_t r0 = 0; r0 < r; ++r0)
          for (std::size_t r1 = 0; r1 < r; ++r1)
            for (std::size_t r2 = 0; r2 < r; ++r2)
              s += ad.A.at({r0, a, r1}) * ad.B.at({r1, b, r2}) * seed.at({r2, r0});
        want.at({a, b}) = ad.scale * s;
      }
    c.near_tensor(meta_tr_delta(ad, seed), want, kOracleTol, strf("meta tr case ", t));
  }
  return c.done();
}

SuiteResult suite_conv_meta_cp_delta() {
  Check c("conv_meta_cp_delta_oracle", "adapters");
  Rng rng(derive_seed(90210, "verify-conv-meta-cp"));
  for (int t = 0; t < 40; ++t) {
    ConvMetaCPAdapter ad;
    const std::size_t k = 1 + 2 * rng.uniform_index(2), i = 1 + rng.uniform_index(3),
                      o = 1 + rng.uniform_index(4), r = 1 + rng.uniform_index(3);
    ad.A = rand_tensor(rng, {k, k, i, r});
    ad.B = rand_tensor(rng, {r, o});
    ad.scale = rng.uniform(0.5, 2.0);
    const DenseTensor seed = rand_tensor(rng, {r});
    DenseTensor want({k, k, i, o});
    for (std::size_t k1 = 0; k1 < k; ++k1)
      for (std::size_t k2 = 0; k2 < k; ++k2)
        for (std::size_t ii = 0; ii < i; ++ii)
          for (std::size_t oo = 0; oo < o; ++oo) {
            double s = 0.0;
            for (std::size_t rr = 0; rr < r; ++rr)
              s += ad.A.at({k1, k2, ii, rr}) * ad.B.at({rr, oo}) * seed[rr];
            want.at({k1, k2, ii, oo}) = ad.scale * s;
          }
    c.near_tensor(conv_meta_cp_delta(ad, seed), want, kOracleTol, strf("conv meta cp case ", t));
  }
  return c.done();
}

SuiteResult suite_conv_meta_tr_delta() {
  Check c("conv_meta_tr_delta_oracle", "adapters");
  Rng rng(derive_seed(90210, "verify-conv-meta-tr"));
  for (int t = 0; t < 40; ++t) {
    ConvMetaTRAdapter ad;
    const std::size_t k = 1 + 2 * rng.uniform_index(2), i = 1 + rng.uniform_index(3),
                      o = 1 + rng.uniform_index(4), r = 1 + rng.uniform_index(3);
    ad.kernel_size = k;
    ad.in_channels = i;
    ad.A = rand_tensor(rng, {r, k * k * i, r});
    ad.B = rand_tensor(rng, {r, o, r});
    ad.scale = rng.uniform(0.5, 2.0);
    const DenseTensor seed = rand_tensor(rng, {r, r});
    DenseTensor want({k, k, i, o});
    for (std::size_t k1 = 0; k1 < k; ++k1)
      for (std::size_t k2 = 0; k2 < k; ++k2)
        for (std::size_t ii = 0; ii < i; ++ii)
          for (std::size_t oo = 0; oo < o; ++oo) {
            const std::size_t m = (k1 * k + k2) * i + ii;  // folded kernel axis
            double s = 0.0;
            for (std::size_t r0 = 0; r0 < r; ++r0)
              for (std::size_t r1 = 0; r1 < r; ++r1)
                for (std::size_t r2 = 0; r2 < r; ++r2)
                  s += ad.A.at({r0, m, r1}) * ad.B.at({r1, oo, r2}) * seed.at({r2, r0});
            want.at({k1, k2, ii, oo}) = ad.scale * s;
          }
    c.near_tensor(conv_meta_tr_delta(ad, seed), want, kOracleTol, strf("conv meta tr case ", t));
  }
  return c.done();
}

// Small random base + arm scenario shared by several suites.
struct Scenario {
  BaseNet base;
  Arm arm;
  std::size_t h = 0, w = 0;
};

Scenario random_scenario(Rng& rng, ArmKind kind, bool batch_mean = false) {
  Scenario sc;
  sc.h = 4 + rng.uniform_index(3);
  sc.w = 4 + rng.uniform_index(3);
  const std::size_t cin = 1 + rng.uniform_index(2);
  const std::size_t cc = 2 + rng.uniform_index(2);
  const std::size_t nc = 2 + rng.uniform_index(2);
  sc.base = init_base_net(3, cin, cc, nc, rng);
  ArmSpec spec;
  spec.kind = kind;
  spec.rank = 1 + rng.uniform_index(2);
  spec.tasks = 2;
  spec.scale = 1.0;
  spec.batch_mean_seed = batch_mean;
  spec.extractor = rng.uniform() < 0.5 ? FeatureExtractor::Kind::RawFlatten
                                       : FeatureExtractor::Kind::PooledConv;
  spec.extractor_features = 2 + rng.uniform_index(2);
  spec.extractor_kernel = 3;
  sc.arm = make_arm(spec, sc.base, sc.h, sc.w, rng);
  return sc;
}

SuiteResult suite_zero_seed_collapse() {
  Check c("zero_seed_collapse", "adapters");
  Rng rng(derive_seed(90210, "verify-zero-seed"));
  for (ArmKind kind : {ArmKind::MetaCP, ArmKind::MetaTR}) {
    for (int t = 0; t < 6; ++t) {
      Scenario sc = random_scenario(rng, kind);
      // Zero seed -> exactly zero delta.
      const Adapter& conv_ad = *sc.arm.sets[0].conv;
      const Adapter& head_ad = *sc.arm.sets[0].head;
      const DenseTensor zc = DenseTensor::zeros(conv_ad.seed_shape());
      const DenseTensor zh = DenseTensor::zeros(head_ad.seed_shape());
      c.equal_tensor(conv_ad.delta(&zc), DenseTensor::zeros(sc.base.conv_w.shape()),
                     strf(arm_kind_name(kind), " conv zero-seed delta, case ", t));
      c.equal_tensor(head_ad.delta(&zh), DenseTensor::zeros(sc.base.head_w.shape()),
                     strf(arm_kind_name(kind), " head zero-seed delta, case ", t));
      // Zero mapping nets -> adapted model behaves as the base model.
      for (auto* map : {&*sc.arm.conv_map, &*sc.arm.head_map}) {
        for (auto& layer : map->layers) {
          layer.W = DenseTensor::zeros(layer.W.shape());
          layer.b = DenseTensor::zeros(layer.b.shape());
        }
      }
      const DenseTensor x = rand_tensor(rng, {sc.h, sc.w, sc.base.in_channels()});
      const ForwardOut got = forward_adapted(sc.base, sc.arm, x, 0);
      const ForwardOut want = base_forward(sc.base, x);
      c.near_tensor(got.logits, want.logits, kOracleTol,
                    strf(arm_kind_name(kind), " zero-net logits, case ", t));
    }
  }
  // Freshly initialized adapters warm-start at zero delta for every arm.
  for (ArmKind kind : {ArmKind::Lora, ArmKind::MultiLora, ArmKind::MetaCP, ArmKind::MetaTR}) {
    Scenario sc = random_scenario(rng, kind);
    const DenseTensor x = rand_tensor(rng, {sc.h, sc.w, sc.base.in_channels()});
    const ForwardOut got = forward_adapted(sc.base, sc.arm, x, 1 % sc.arm.sets.size());
    const ForwardOut want = base_forward(sc.base, x);
    c.near_tensor(got.logits, want.logits, kOracleTol,
                  strf(arm_kind_name(kind), " fresh-init logits"));
  }
  return c.done();
}

SuiteResult suite_ones_seed_collapse() {
  Check c("ones_seed_collapse", "adapters");
  Rng rng(derive_seed(90210, "verify-ones-seed"));
  for (int t = 0; t < 15; ++t) {
    const std::size_t i = 1 + rng.uniform_index(6), o = 1 + rng.uniform_index(6),
                      r = 1 + rng.uniform_index(3);
    MetaCPAdapter cp;
    cp.A = rand_tensor(rng, {i, r});
    cp.B = rand_tensor(rng, {r, o});
    cp.scale = rng.uniform(0.5, 2.0);
    MatrixLoRA lora{cp.A, cp.B, cp.scale};
    c.equal_tensor(meta_cp_delta(cp, DenseTensor::full({r}, 1.0)), matrix_lora_delta(lora),
                   strf("all-ones CP vs static LoRA, case ", t));

    const std::size_t k = 1 + 2 * rng.uniform_index(2);
    ConvMetaCPAdapter ccp;
    ccp.A = rand_tensor(rng, {k, k, i, r});
    ccp.B = rand_tensor(rng, {r, o});
    ccp.scale = cp.scale;
    ConvLoRA clora{ccp.A, ccp.B, ccp.scale};
    c.equal_tensor(conv_meta_cp_delta(ccp, DenseTensor::full({r}, 1.0)), conv_lora_delta(clora),
                   strf("all-ones conv CP vs static conv LoRA, case ", t));
  }
  return c.done();
}

SuiteResult suite_param_count() {
  Check c("param_count_arithmetic", "adapters");
  Rng rng(derive_seed(90210, "verify-params"));
  for (int t = 0; t < 25; ++t) {
    const std::size_t i = 2 + rng.uniform_index(12), o = 2 + rng.uniform_index(12),
                      r = 1 + rng.uniform_index(4), k = 1 + 2 * rng.uniform_index(2);
    c.is_true(param_count(init_matrix_lora(i, o, r, 1.0, rng)) == r * (i + o),
              strf("matrix lora count, case ", t));
    c.is_true(param_count(init_conv_lora(k, i, o, r, 1.0, rng)) == r * (k * k * i + o),
              strf("conv lora count, case ", t));
    c.is_true(param_count(init_meta_cp(i, o, r, 1.0, rng)) == r * (i + o),
              strf("meta cp count, case ", t));
    c.is_true(param_count(init_meta_tr(i, o, r, 1.0, rng)) == r * r * (i + o),
              strf("meta tr count, case ", t));
    c.is_true(param_count(init_conv_meta_cp(k, i, o, r, 1.0, rng)) == r * (k * k * i + o),
              strf("conv meta cp count, case ", t));
    c.is_true(param_count(init_conv_meta_tr(k, i, o, r, 1.0, rng)) == r * r * (k * k * i + o),
              strf("conv meta tr count, case ", t));
  }
  // Low-rank conv factors stay below the dense kernel for every small-rank
  // configuration with K=3 and at least 8 channels each way.
  for (std::size_t r = 1; r <= 4; ++r) {
    for (std::size_t i = 8; i <= 16; i += 2) {
      for (std::size_t o = 8; o <= 16; o += 2) {
        c.is_true(r * (9 * i + o) < 9 * i * o,
                  strf("conv lora smaller than dense kernel at r=", r, " i=", i, " o=", o));
      }
    }
  }
  return c.done();
}

//---------------------------------------------------------------------------
// meta net suites

SuiteResult suite_feature_extractor() {
  Check c("feature_extractor_oracle", "meta_net");
  Rng rng(derive_seed(90210, "verify-extractor"));
  for (int t = 0; t < 20; ++t) {
    const std::size_t h = 3 + rng.uniform_index(5), w = 3 + rng.uniform_index(5),
                      cin = 1 + rng.uniform_index(3);
    const DenseTensor x = rand_tensor(rng, {h, w, cin});
    // Raw flatten is the row-major value sequence.
    const DenseTensor flat = extract_features(x, FeatureExtractor::raw_flatten());
    c.is_true(flat.order() == 1 && flat.size() == x.size(), strf("flatten shape, case ", t));
    c.near_tensor(flat, DenseTensor({x.size()}, x.values()), 0.0, strf("flatten values, case ", t));

    // Pooled conv: same-padded conv then per-feature spatial mean.
    const std::size_t f = 1 + rng.uniform_index(3);
    const FeatureExtractor fe = FeatureExtractor::pooled_conv(3, cin, f, rng);
    const DenseTensor conv = brute_conv2d(x, fe.kernel, 1, 1);
    DenseTensor want({f});
    for (std::size_t j = 0; j < f; ++j) {
      double s = 0.0;
      for (std::size_t yy = 0; yy < conv.extent(0); ++yy)
        for (std::size_t xx = 0; xx < conv.extent(1); ++xx) s += conv.at({yy, xx, j});
      want[j] = s / static_cast<double>(conv.extent(0) * conv.extent(1));
    }
    c.near_tensor(extract_features(x, fe), want, kOracleTol, strf("pooled conv, case ", t));
  }
  return c.done();
}

MappingNet random_mapping(Rng& rng, std::size_t in, std::size_t out,
                          std::vector<std::size_t> seed_shape) {
  return init_mapping_net(in, out, std::move(seed_shape), 1 + rng.uniform_index(2),
                          2 + rng.uniform_index(3), Activation::Tanh, rng);
}

DenseTensor brute_mapping(const MappingNet& net, const DenseTensor& f) {
  std::vector<double> h(f.values());
  for (const auto& layer : net.layers) {
    std::vector<double> next(layer.W.extent(1), 0.0);
    for (std::size_t o = 0; o < next.size(); ++o) {
      double s = layer.b[o];
      for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * layer.W.at({i, o});
      next[o] = apply_activation(layer.act, s);
    }
    h = std::move(next);
  }
  if (net.seed_shape.empty()) return DenseTensor({h.size()}, h);
  return DenseTensor(net.seed_shape, h);
}

SuiteResult suite_mapping_oracle() {
  Check c("mapping_net_oracle", "meta_net");
  Rng rng(derive_seed(90210, "verify-mapping"));
  for (int t = 0; t < 30; ++t) {
    const std::size_t in = 1 + rng.uniform_index(4);
    const std::size_t r = 1 + rng.uniform_index(3);
    const bool tr = rng.uniform() < 0.5;
    MappingNet net = random_mapping(rng, in, tr ? r * r : r,
                                    tr ? std::vector<std::size_t>{r, r}
                                       : std::vector<std::size_t>{});
    // Give the zero-initialized final layer nonzero weights so the oracle
    // sees a nondegenerate function.
    for (auto& layer : net.layers) {
      for (std::size_t i2 = 0; i2 < layer.W.size(); ++i2) layer.W[i2] = rng.uniform(-1.0, 1.0);
      for (std::size_t i2 = 0; i2 < layer.b.size(); ++i2) layer.b[i2] = rng.uniform(-0.5, 0.5);
    }
    const DenseTensor f = rand_tensor(rng, {in});
    c.near_tensor(mapping_forward(net, f), brute_mapping(net, f), kOracleTol,
                  strf("mapping case ", t, (tr ? " (matrix seed)" : " (vector seed)")));
  }
  // Single identity layer reproduces its input.
  {
    MappingNet net;
    net.layers.push_back({DenseTensor::identity(4), DenseTensor::zeros({4}), Activation::Identity});
    const DenseTensor f({4}, {0.5, -1.25, 2.0, 0.0});
    c.equal_tensor(mapping_forward(net, f), f, "identity mapping net");
  }
  // All-zero net emits a zero seed.
  {
    Rng zrng(3);
    MappingNet net = init_mapping_net(3, 2, {}, 1, 4, Activation::Tanh, zrng);
    for (auto& layer : net.layers) {
      layer.W = DenseTensor::zeros(layer.W.shape());
      layer.b = DenseTensor::zeros(layer.b.shape());
    }
    c.equal_tensor(mapping_forward(net, DenseTensor({3}, {1.0, -2.0, 3.0})),
                   DenseTensor::zeros({2}), "zero mapping net");
  }
  return c.done();
}

SuiteResult suite_mapping_grad_fd() {
  Check c("mapping_net_grad_fd", "meta_net");
  Rng rng(derive_seed(90210, "verify-mapping-fd"));
  for (int t = 0; t < 10; ++t) {
    const std::size_t in = 2 + rng.uniform_index(3);
    const std::size_t r = 1 + rng.uniform_index(2);
    const bool tr = rng.uniform() < 0.5;
    MappingNet net = random_mapping(rng, in, tr ? r * r : r,
                                    tr ? std::vector<std::size_t>{r, r}
                                       : std::vector<std::size_t>{});
    for (auto& layer : net.layers) {
      for (std::size_t i2 = 0; i2 < layer.W.size(); ++i2) layer.W[i2] = rng.uniform(-1.0, 1.0);
      for (std::size_t i2 = 0; i2 < layer.b.size(); ++i2) layer.b[i2] = rng.uniform(-0.5, 0.5);
    }
    DenseTensor f = rand_tensor(rng, {in});
    const DenseTensor probe = rand_tensor(rng, net.seed_shape.empty()
                                                   ? std::vector<std::size_t>{net.output_dim()}
                                                   : net.seed_shape);
    // Scalar objective: <mapping(f), probe>.
    auto objective = [&](const MappingNet& n, const DenseTensor& ff) {
      const DenseTensor s = mapping_forward(n, ff);
      double acc = 0.0;
      for (std::size_t i2 = 0; i2 < s.size(); ++i2) acc += s[i2] * probe[i2];
      return acc;
    };

    Tape tape;
    const Tape::NodeId f_leaf = tape.leaf(f);
    std::vector<std::pair<Tape::NodeId, DenseTensor*>> leaves;
    Tape::NodeId hcur = f_leaf;
    for (auto& layer : net.layers) {
      const Tape::NodeId wl = tape.leaf(layer.W);
      const Tape::NodeId bl = tape.leaf(layer.b);
      leaves.emplace_back(wl, &layer.W);
      leaves.emplace_back(bl, &layer.b);
      hcur = tape.add(tape.contract(hcur, wl, {{0, 0}}), bl);
      if (layer.act != Activation::Identity) hcur = tape.activation(hcur, layer.act);
    }
    if (!net.seed_shape.empty()) hcur = tape.reshape(hcur, net.seed_shape);
    const Tape::NodeId loss = tape.contract(hcur, tape.constant(probe),
                                            net.seed_shape.empty()
                                                ? std::vector<AxisPair>{{0, 0}}
                                                : std::vector<AxisPair>{{0, 0}, {1, 1}});
    tape.backward(loss);

    auto check_fd = [&](const DenseTensor& grad, DenseTensor& param, const std::string& what) {
      for (std::size_t i2 = 0; i2 < param.size(); ++i2) {
        const double keep = param[i2];
        param[i2] = keep + kFdStep;
        const double up = objective(net, f);
        param[i2] = keep - kFdStep;
        const double dn = objective(net, f);
        param[i2] = keep;
        const double fd = (up - dn) / (2.0 * kFdStep);
        const double denom = std::max(std::fabs(fd), std::fabs(grad[i2]));
        if (denom < kGradFloor) {
          c.is_true(true, what);
          continue;
        }
        c.near(grad[i2], fd, kGradTol, strf(what, " entry ", i2, ", case ", t));
      }
    };
    check_fd(tape.grad(f_leaf), f, "d/df");
    for (auto& [id, param] : leaves) check_fd(tape.grad(id), *param, "d/dw");
  }
  return c.done();
}

//---------------------------------------------------------------------------
// training suites

SuiteResult suite_adapter_grad_fd() {
  Check c("adapter_grad_fd", "training");
  Rng rng(derive_seed(90210, "verify-grad-fd"));
  const ArmKind kinds[] = {ArmKind::Lora, ArmKind::MultiLora, ArmKind::MetaCP, ArmKind::MetaTR};
  for (int t = 0; t < 24; ++t) {
    const ArmKind kind = kinds[t % 4];
    const bool batch_mean = (t % 8) >= 4 && (kind == ArmKind::MetaCP || kind == ArmKind::MetaTR);
    Scenario sc = random_scenario(rng, kind, batch_mean);
    const std::size_t batch = 2 + rng.uniform_index(2);
    std::vector<DenseTensor> xs;
    std::vector<std::size_t> labels, tasks;
    for (std::size_t i = 0; i < batch; ++i) {
      xs.push_back(rand_tensor(rng, {sc.h, sc.w, sc.base.in_channels()}));
      labels.push_back(rng.uniform_index(sc.base.num_classes()));
      tasks.push_back(i % 2);
    }

    TapedBatch tb = build_batch_loss(sc.base, sc.arm, xs, labels, tasks);
    tb.tape.backward(tb.loss);
    ParamSet ps = collect_params(sc.arm);
    auto loss_value = [&]() {
      TapedBatch probe = build_batch_loss(sc.base, sc.arm, xs, labels, tasks);
      return probe.tape.value(probe.loss)[0];
    };
    for (std::size_t pi = 0; pi < ps.entries.size(); ++pi) {
      const DenseTensor grad = tb.tape.grad(tb.leaf_ids[pi]);
      DenseTensor& param = *ps.entries[pi].second;
      std::vector<std::size_t> probes;
      if (param.size() <= 20) {
        for (std::size_t i = 0; i < param.size(); ++i) probes.push_back(i);
      } else {
        for (int i = 0; i < 10; ++i) probes.push_back(rng.uniform_index(param.size()));
      }
      for (std::size_t i : probes) {
        const double keep = param[i];
        param[i] = keep + kFdStep;
        const double up = loss_value();
        param[i] = keep - kFdStep;
        const double dn = loss_value();
        param[i] = keep;
        const double fd = (up - dn) / (2.0 * kFdStep);
        const double denom = std::max(std::fabs(fd), std::fabs(grad[i]));
        if (denom < kGradFloor) {
          c.is_true(true, "zero grad");
          continue;
        }
        c.near(grad[i], fd, kGradTol,
               strf(arm_kind_name(kind), batch_mean ? " (batch-mean)" : "", " ",
                    ps.entries[pi].first, "[", i, "], case ", t));
      }
    }
  }
  return c.done();
}

SuiteResult suite_softmax_zero_sum() {
  Check c("softmax_grad_zero_sum", "training");
  Rng rng(derive_seed(90210, "verify-softmax"));
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 2 + rng.uniform_index(5);
    const DenseTensor logits = rand_tensor(rng, {n}, -4.0, 4.0);
    Tape tape;
    const Tape::NodeId leaf = tape.leaf(logits);
    const Tape::NodeId loss = tape.softmax_cross_entropy(leaf, rng.uniform_index(n));
    tape.backward(loss);
    const DenseTensor g = tape.grad(leaf);
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
    c.near(s, 0.0, kOracleTol, strf("grad sum, case ", t));
  }
  return c.done();
}

SuiteResult suite_tape_vs_straight_line() {
  Check c("tape_vs_straight_line", "training");
  Rng rng(derive_seed(90210, "verify-tape"));
  for (ArmKind kind : {ArmKind::Original, ArmKind::Lora, ArmKind::MultiLora, ArmKind::MetaCP,
                       ArmKind::MetaTR}) {
    for (int t = 0; t < 4; ++t) {
      Scenario sc = random_scenario(rng, kind);
      // Move the factors off their zero warm start so the deltas bite.
      for (auto& set : sc.arm.sets) {
        for (auto* ad : {&set.conv, &set.head}) {
          if (!*ad) continue;
          for (std::size_t i = 0; i < (*ad)->B.size(); ++i) (*ad)->B[i] = rng.uniform(-1.0, 1.0);
        }
      }
      const std::size_t batch = 3;
      std::vector<DenseTensor> xs;
      std::vector<std::size_t> labels, tasks;
      for (std::size_t i = 0; i < batch; ++i) {
        xs.push_back(rand_tensor(rng, {sc.h, sc.w, sc.base.in_channels()}));
        labels.push_back(rng.uniform_index(sc.base.num_classes()));
        tasks.push_back(i % 2);
      }
      TapedBatch tb = build_batch_loss(sc.base, sc.arm, xs, labels, tasks);
      double want_loss = 0.0;
      for (std::size_t i = 0; i < batch; ++i) {
        const ForwardOut out = forward_adapted(sc.base, sc.arm, xs[i], tasks[i]);
        c.near_tensor(tb.tape.value(tb.logits[i]), out.logits, kOracleTol,
                      strf(arm_kind_name(kind), " taped logits, case ", t, " sample ", i));
        want_loss += pure_xent(out.logits, labels[i]);
      }
      want_loss /= static_cast<double>(batch);
      c.near(tb.tape.value(tb.loss)[0], want_loss, kOracleTol,
             strf(arm_kind_name(kind), " taped loss, case ", t));
    }
  }
  return c.done();
}

RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.tasks.tasks = 2;
  cfg.tasks.classes_per_task = 2;
  cfg.tasks.train_per_class = 4;
  cfg.tasks.test_per_class = 2;
  cfg.tasks.height = 6;
  cfg.tasks.width = 6;
  cfg.model.conv_channels = 4;
  cfg.adapters.lora_rank = 2;
  cfg.adapters.meta_cp_rank = 2;
  cfg.adapters.meta_tr_rank = 1;
  cfg.extractor.features = 3;
  cfg.pretrain.epochs = 2;
  cfg.optimizer.batch_size = 4;
  cfg.optimizer.epochs = 25;  // 4 steps per epoch -> 100 steps
  cfg.knn.ks = {3};
  cfg.seeds = {11, 12};
  cfg.validate();
  return cfg;
}

SuiteResult suite_freeze_determinism() {
  Check c("freeze_and_determinism", "training");
  const RunConfig cfg = tiny_run_config();
  for (ArmKind kind : {ArmKind::Lora, ArmKind::MetaTR}) {
    const BaseNet base = pretrain_base(cfg, 11);
    TrainState st1, st2;
    const TrainReport r1 = run_single(cfg, kind, 11, base, {}, &st1);
    const TrainReport r2 = run_single(cfg, kind, 11, base, {}, &st2);

    // 25 epochs x 4 batches = 100 optimizer steps; the base never moves.
    c.is_true(st1.opt.step_count == 100, strf(arm_kind_name(kind), " step count"));
    c.equal_tensor(st1.base.conv_w, base.conv_w,
                   strf(arm_kind_name(kind), " frozen conv weights after 100 steps"));
    c.equal_tensor(st1.base.head_w, base.head_w,
                   strf(arm_kind_name(kind), " frozen head weights after 100 steps"));
    c.equal_tensor(st1.base.head_b, base.head_b,
                   strf(arm_kind_name(kind), " frozen head bias after 100 steps"));
    c.is_true(train_report_json(r1, cfg).dump() == train_report_json(r2, cfg).dump(),
              strf(arm_kind_name(kind), " byte-identical reports for identical (config, seed)"));
    // And the trained parameters themselves are bitwise equal.
    ParamSet p1 = collect_params(st1.arm), p2 = collect_params(st2.arm);
    for (std::size_t i = 0; i < p1.entries.size(); ++i) {
      c.equal_tensor(*p1.entries[i].second, *p2.entries[i].second,
                     strf(arm_kind_name(kind), " repeated-run parameter ", p1.entries[i].first));
    }
  }
  return c.done();
}

SuiteResult suite_knn() {
  Check c("knn_oracle", "training");
  Rng rng(derive_seed(90210, "verify-knn"));
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 3 + rng.uniform_index(8);
    const std::size_t dim = 2 + rng.uniform_index(2);
    const std::size_t classes = 2 + rng.uniform_index(2);
    std::vector<DenseTensor> train;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
      train.push_back(rand_tensor(rng, {dim}, 0.0, 1.0));
      labels.push_back(rng.uniform_index(classes));
    }
    const DenseTensor q = rand_tensor(rng, {dim}, 0.0, 1.0);
    const std::size_t k = 1 + rng.uniform_index(n);

    // Independent re-derivation: full sort, tally, documented tie-break.
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += (train[i][j] - q[j]) * (train[i][j] - q[j]);
      d.emplace_back(std::sqrt(s), i);
    }
    std::sort(d.begin(), d.end());
    std::map<std::size_t, std::pair<std::size_t, double>> tally;
    for (std::size_t i = 0; i < k; ++i) {
      tally[labels[d[i].second]].first += 1;
      tally[labels[d[i].second]].second += d[i].first;
    }
    std::size_t want = 0;
    bool first = true;
    std::size_t bv = 0;
    double bt = 0.0;
    for (const auto& [lab, vt] : tally) {
      if (first || vt.first > bv || (vt.first == bv && vt.second < bt)) {
        want = lab;
        bv = vt.first;
        bt = vt.second;
        first = false;
      }
    }
    c.is_true(knn_predict(train, labels, q, k) == want, strf("knn case ", t, " k=", k));
  }
  // Zero distance with k=1 returns the duplicate's label.
  {
    std::vector<DenseTensor> train = {DenseTensor({2}, {1.0, 1.0}), DenseTensor({2}, {5.0, 5.0})};
    std::vector<std::size_t> labels = {3, 1};
    c.is_true(knn_predict(train, labels, DenseTensor({2}, {1.0, 1.0}), 1) == 3, "zero distance");
  }
  // Vote tie resolved by summed distance.
  {
    std::vector<DenseTensor> train = {DenseTensor({1}, {0.0}), DenseTensor({1}, {2.0}),
                                      DenseTensor({1}, {10.0}), DenseTensor({1}, {12.0})};
    std::vector<std::size_t> labels = {7, 7, 2, 2};
    c.is_true(knn_predict(train, labels, DenseTensor({1}, {1.0}), 4) == 7, "distance tie-break");
  }
  // Equal votes and equal total distance -> smaller class index.
  {
    std::vector<DenseTensor> train = {DenseTensor({1}, {-1.0}), DenseTensor({1}, {1.0})};
    std::vector<std::size_t> labels = {5, 4};
    c.is_true(knn_predict(train, labels, DenseTensor({1}, {0.0}), 2) == 4, "class index tie-break");
  }
  // Degenerate label set: accuracy equals the matching fraction.
  {
    std::vector<DenseTensor> train = {DenseTensor({1}, {0.0}), DenseTensor({1}, {1.0})};
    std::vector<std::size_t> labels = {9, 9};
    std::vector<DenseTensor> test = {DenseTensor({1}, {0.5}), DenseTensor({1}, {0.6}),
                                     DenseTensor({1}, {0.7}), DenseTensor({1}, {0.8})};
    std::vector<std::size_t> tl = {9, 9, 1, 9};
    c.near(knn_accuracy(train, labels, test, tl, 2), 0.75, 0.0, "single-label accuracy");
  }
  return c.done();
}

//---------------------------------------------------------------------------
// registry

struct SuiteEntry {
  const char* module;
  SuiteResult (*fn)();
};

const SuiteEntry kSuites[] = {
    {"tensor_core", suite_contract},
    {"tensor_core", suite_conv1d},
    {"tensor_core", suite_conv2d},
    {"tensor_core", suite_cp},
    {"tensor_core", suite_tr},
    {"tensor_core", suite_dummy_law},
    {"adapters", suite_conv_lora_factored},
    {"adapters", suite_matrix_lora_delta},
    {"adapters", suite_conv_lora_delta},
    {"adapters", suite_meta_cp_delta},
    {"adapters", suite_meta_tr_delta},
    {"adapters", suite_conv_meta_cp_delta},
    {"adapters", suite_conv_meta_tr_delta},
    {"adapters", suite_zero_seed_collapse},
    {"adapters", suite_ones_seed_collapse},
    {"adapters", suite_param_count},
    {"meta_net", suite_feature_extractor},
    {"meta_net", suite_mapping_oracle},
    {"meta_net", suite_mapping_grad_fd},
    {"training", suite_adapter_grad_fd},
    {"training", suite_softmax_zero_sum},
    {"training", suite_tape_vs_straight_line},
    {"training", suite_freeze_determinism},
    {"training", suite_knn},
};

}  // namespace

std::vector<std::string> verify_modules() {
  std::vector<std::string> out;
  for (const auto& s : kSuites) {
    if (std::find(out.begin(), out.end(), s.module) == out.end()) out.emplace_back(s.module);
  }
  return out;
}

std::vector<SuiteResult> run_verify(const std::string& filter_module) {
  if (!filter_module.empty()) {
    const auto mods = verify_modules();
    if (std::find(mods.begin(), mods.end(), filter_module) == mods.end()) {
      std::string known;
      for (const auto& m : mods) known += (known.empty() ? "" : ", ") + m;
      throw ArgError(strf("unknown module '", filter_module, "' (known: ", known, ")"));
    }
  }
  std::vector<SuiteResult> out;
  for (const auto& entry : kSuites) {
    if (!filter_module.empty() && filter_module != entry.module) continue;
    try {
      out.push_back(entry.fn());
    } catch (const std::exception& e) {
      SuiteResult r;
      r.module = entry.module;
      r.name = "<unknown>";
      r.passed = false;
      r.detail = strf("suite threw: ", e.what());
      out.push_back(std::move(r));
    }
  }
  return out;
}

bool verify_passed(const std::vector<SuiteResult>& results) {
  if (results.empty()) return false;
  for (const auto& r : results) {
    if (!r.passed) return false;
  }
  return true;
}

std::string verify_report_text(const std::vector<SuiteResult>& results) {
  std::string out;
  for (const auto& r : results) {
    out += strf(r.passed ? "[PASS] " : "[FAIL] ", r.module, "/", r.name, "  cases=", r.cases,
                "  max_err=", r.max_err, "\n");
    if (!r.passed) out += strf("       ", r.detail, "\n");
  }
  out += verify_passed(results) ? "all suites passed\n" : "FAILED\n";
  return out;
}

nlohmann::json verify_report_json(const std::vector<SuiteResult>& results) {
  nlohmann::json suites = nlohmann::json::array();
  for (const auto& r : results) {
    suites.push_back({{"name", r.name},
                      {"module", r.module},
                      {"passed", r.passed},
                      {"cases", r.cases},
                      {"max_err", r.max_err},
                      {"detail", r.detail}});
  }
  return {{"format", "metalora.verify.v1"},
          {"passed", verify_passed(results)},
          {"suites", suites}};
}

}  // namespace metalora
