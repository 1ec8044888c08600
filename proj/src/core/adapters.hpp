#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace metalora {

// Six adapter variants over frozen base weights.  Static variants hold all
// of their factors; the meta variants hold fixed trainable factors and take
// a generated seed (vector c or matrix C) per call.

// Delta for a weight matrix: dW = scale * A * B,  A: I x R, B: R x O.
struct MatrixLoRA {
  DenseTensor A;
  DenseTensor B;
  double scale = 1.0;

  std::size_t in_dim() const { return A.extent(0); }
  std::size_t out_dim() const { return B.extent(1); }
  std::size_t rank() const { return A.extent(1); }
  void validate() const;
};

// Delta for a conv kernel: dW = scale * sum_r A[.,.,.,r] (x) B[r,.],
// A: K x K x I x R (small filter bank), B: R x O (channel recovery).
struct ConvLoRA {
  DenseTensor A;
  DenseTensor B;
  double scale = 1.0;

  std::size_t kernel() const { return A.extent(0); }
  std::size_t in_channels() const { return A.extent(2); }
  std::size_t out_channels() const { return B.extent(1); }
  std::size_t rank() const { return A.extent(3); }
  void validate() const;
};

// dW[i,o] = scale * sum_r A[i,r] * B[r,o] * c[r]; the seed c (length R) is
// supplied per call, not stored.
struct MetaCPAdapter {
  DenseTensor A;  // I x R
  DenseTensor B;  // R x O
  double scale = 1.0;

  std::size_t seed_dim() const { return A.extent(1); }
  std::size_t rank() const { return A.extent(1); }
  void validate() const;
};

// dW[i,o] = scale * sum_{r0,r1,r2} A[r0,i,r1] * B[r1,o,r2] * C[r2,r0]; the
// seed C (R x R) is supplied per call.
struct MetaTRAdapter {
  DenseTensor A;  // R x I x R
  DenseTensor B;  // R x O x R
  double scale = 1.0;

  std::size_t rank() const { return A.extent(0); }
  void validate() const;
};

// Conv CP: dW[k1,k2,i,o] = scale * sum_r A[k1,k2,i,r] * B[r,o] * c[r].
struct ConvMetaCPAdapter {
  DenseTensor A;  // K x K x I x R
  DenseTensor B;  // R x O
  double scale = 1.0;

  std::size_t kernel() const { return A.extent(0); }
  std::size_t seed_dim() const { return A.extent(3); }
  std::size_t rank() const { return A.extent(3); }
  void validate() const;
};

// Conv TR: the kernel axes are folded into A's middle extent (K*K*I), the
// matrix-form delta is computed with the TR contraction pattern and the
// leading axis is reshaped back to K x K x I.
struct ConvMetaTRAdapter {
  DenseTensor A;  // R x (K*K*I) x R
  DenseTensor B;  // R x O x R
  double scale = 1.0;
  std::size_t kernel_size = 0;  // K
  std::size_t in_channels = 0;  // I

  std::size_t rank() const { return A.extent(0); }
  void validate() const;
};

DenseTensor matrix_lora_delta(const MatrixLoRA& ad);
DenseTensor conv_lora_delta(const ConvLoRA& ad);

// Applies the factored form directly (small conv, then a 1x1 channel map by
// B, then scale) without materializing the delta kernel.
DenseTensor conv_lora_apply_factored(const DenseTensor& x, const ConvLoRA& ad, std::size_t stride,
                                     std::size_t padding);

DenseTensor meta_cp_delta(const MetaCPAdapter& ad, const DenseTensor& c);
DenseTensor meta_tr_delta(const MetaTRAdapter& ad, const DenseTensor& C);
DenseTensor conv_meta_cp_delta(const ConvMetaCPAdapter& ad, const DenseTensor& c);
DenseTensor conv_meta_tr_delta(const ConvMetaTRAdapter& ad, const DenseTensor& C);

// Exact count of trainable scalars in the adapter's factors (the mapping
// net and frozen base weights are not included).
std::size_t param_count(const MatrixLoRA& ad);
std::size_t param_count(const ConvLoRA& ad);
std::size_t param_count(const MetaCPAdapter& ad);
std::size_t param_count(const MetaTRAdapter& ad);
std::size_t param_count(const ConvMetaCPAdapter& ad);
std::size_t param_count(const ConvMetaTRAdapter& ad);

// Warm-start initialization: the first factor is Gaussian with stddev
// 1/sqrt(fan-in), the last factor starts at zero so the delta vanishes at
// step 0 (for meta adapters regardless of the mapping net's output).
MatrixLoRA init_matrix_lora(std::size_t in_dim, std::size_t out_dim, std::size_t rank, double scale,
                            Rng& rng);
ConvLoRA init_conv_lora(std::size_t kernel, std::size_t in_channels, std::size_t out_channels,
                        std::size_t rank, double scale, Rng& rng);
MetaCPAdapter init_meta_cp(std::size_t in_dim, std::size_t out_dim, std::size_t rank, double scale,
                           Rng& rng);
MetaTRAdapter init_meta_tr(std::size_t in_dim, std::size_t out_dim, std::size_t rank, double scale,
                           Rng& rng);
ConvMetaCPAdapter init_conv_meta_cp(std::size_t kernel, std::size_t in_channels,
                                    std::size_t out_channels, std::size_t rank, double scale, Rng& rng);
ConvMetaTRAdapter init_conv_meta_tr(std::size_t kernel, std::size_t in_channels,
                                    std::size_t out_channels, std::size_t rank, double scale, Rng& rng);

// Checkpoint layout: a flat directory with manifest.json (variant tag,
// shapes, scale, seed dims) and one MTK1 blob per factor, named after the
// factor symbol ("A", "B").
enum class AdapterKind {
  MatrixLora,
  ConvLora,
  MetaCP,
  MetaTR,
  ConvMetaCP,
  ConvMetaTR,
};

const char* adapter_kind_name(AdapterKind kind);
AdapterKind adapter_kind_from_name(const std::string& name);

// Type-erased holder used by checkpointing and the training arms.
struct Adapter {
  AdapterKind kind;
  DenseTensor A;
  DenseTensor B;
  double scale = 1.0;
  std::size_t kernel_size = 0;  // conv variants
  std::size_t in_channels = 0;  // ConvMetaTR shape bookkeeping

  MatrixLoRA as_matrix_lora() const;
  ConvLoRA as_conv_lora() const;
  MetaCPAdapter as_meta_cp() const;
  MetaTRAdapter as_meta_tr() const;
  ConvMetaCPAdapter as_conv_meta_cp() const;
  ConvMetaTRAdapter as_conv_meta_tr() const;

  bool is_meta() const {
    return kind == AdapterKind::MetaCP || kind == AdapterKind::MetaTR ||
           kind == AdapterKind::ConvMetaCP || kind == AdapterKind::ConvMetaTR;
  }
  bool is_conv() const {
    return kind == AdapterKind::ConvLora || kind == AdapterKind::ConvMetaCP ||
           kind == AdapterKind::ConvMetaTR;
  }
  // Static variants take no seed; meta variants dispatch to their delta op.
  DenseTensor delta(const DenseTensor* seed) const;
  std::size_t params() const;
  // Seed shape expected by meta variants: {R} for CP, {R, R} for TR.
  std::vector<std::size_t> seed_shape() const;
};

void save_adapter(const std::filesystem::path& dir, const Adapter& ad);
Adapter load_adapter(const std::filesystem::path& dir);

}  // namespace metalora
