#include "core/adapters.hpp"

#include <cmath>
#include <fstream>

#include "core/fault.hpp"
#include "core/tensor_io.hpp"
#include "json.hpp"

namespace metalora {

namespace {

void require_order(const DenseTensor& t, std::size_t order, const char* who, const char* factor) {
  if (t.order() != order) {
    throw ShapeError(strf(who, ": factor ", factor, " must be ", order, "-order, got ",
                          shape_str(t.shape())));
  }
}

DenseTensor gaussian(std::vector<std::size_t> shape, double stddev, Rng& rng) {
  DenseTensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

void MatrixLoRA::validate() const {
  require_order(A, 2, "MatrixLoRA", "A");
  require_order(B, 2, "MatrixLoRA", "B");
  if (A.extent(1) != B.extent(0)) {
    throw ShapeError(strf("MatrixLoRA: rank mismatch, A is ", shape_str(A.shape()), " but B is ",
                          shape_str(B.shape())));
  }
}

void ConvLoRA::validate() const {
  require_order(A, 4, "ConvLoRA", "A");
  require_order(B, 2, "ConvLoRA", "B");
  if (A.extent(0) != A.extent(1)) {
    throw ShapeError(strf("ConvLoRA: kernel must be square, got ", shape_str(A.shape())));
  }
  if (A.extent(3) != B.extent(0)) {
    throw ShapeError(strf("ConvLoRA: rank mismatch, A is ", shape_str(A.shape()), " but B is ",
                          shape_str(B.shape())));
  }
}

void MetaCPAdapter::validate() const {
  require_order(A, 2, "MetaCPAdapter", "A");
  require_order(B, 2, "MetaCPAdapter", "B");
  if (A.extent(1) != B.extent(0)) {
    throw ShapeError(strf("MetaCPAdapter: rank mismatch, A is ", shape_str(A.shape()), " but B is ",
                          shape_str(B.shape())));
  }
}

void MetaTRAdapter::validate() const {
  require_order(A, 3, "MetaTRAdapter", "A");
  require_order(B, 3, "MetaTRAdapter", "B");
  const std::size_t r = A.extent(0);
  if (A.extent(2) != r || B.extent(0) != r || B.extent(2) != r) {
    throw ShapeError(strf("MetaTRAdapter: all bond ranks must equal ", r, ", got A ",
                          shape_str(A.shape()), " and B ", shape_str(B.shape())));
  }
}

void ConvMetaCPAdapter::validate() const {
  require_order(A, 4, "ConvMetaCPAdapter", "A");
  require_order(B, 2, "ConvMetaCPAdapter", "B");
  if (A.extent(0) != A.extent(1)) {
    throw ShapeError(strf("ConvMetaCPAdapter: kernel must be square, got ", shape_str(A.shape())));
  }
  if (A.extent(3) != B.extent(0)) {
    throw ShapeError(strf("ConvMetaCPAdapter: rank mismatch, A is ", shape_str(A.shape()), " but B is ",
                          shape_str(B.shape())));
  }
}

void ConvMetaTRAdapter::validate() const {
  require_order(A, 3, "ConvMetaTRAdapter", "A");
  require_order(B, 3, "ConvMetaTRAdapter", "B");
  const std::size_t r = A.extent(0);
  if (A.extent(2) != r || B.extent(0) != r || B.extent(2) != r) {
    throw ShapeError(strf("ConvMetaTRAdapter: all bond ranks must equal ", r, ", got A ",
                          shape_str(A.shape()), " and B ", shape_str(B.shape())));
  }
  if (kernel_size == 0 || in_channels == 0) {
    throw ShapeError("ConvMetaTRAdapter: kernel_size and in_channels must be set");
  }
  if (A.extent(1) != kernel_size * kernel_size * in_channels) {
    throw ShapeError(strf("ConvMetaTRAdapter: middle extent ", A.extent(1), " != K*K*I = ",
                          kernel_size * kernel_size * in_channels));
  }
}

//---------------------------------------------------------------------------
// delta constructions

DenseTensor matrix_lora_delta(const MatrixLoRA& ad) {
  ad.validate();
  return scale(contract(ad.A, ad.B, {{1, 0}}), ad.scale);
}

DenseTensor conv_lora_delta(const ConvLoRA& ad) {
  ad.validate();
  return scale(contract(ad.A, ad.B, {{3, 0}}), ad.scale);
}

DenseTensor conv_lora_apply_factored(const DenseTensor& x, const ConvLoRA& ad, std::size_t stride,
                                     std::size_t padding) {
  ad.validate();
  const DenseTensor mid = conv2d_forward(x, ad.A, stride, padding);  // H' x W' x R
  return scale(contract(mid, ad.B, {{2, 0}}), ad.scale);             // H' x W' x O
}

namespace {
void check_seed_vector(const DenseTensor& c, std::size_t rank, const char* who) {
  if (c.order() != 1 || c.extent(0) != rank) {
    throw ShapeError(strf(who, ": seed must be a vector of length ", rank, ", got ",
                          shape_str(c.shape())));
  }
}
void check_seed_matrix(const DenseTensor& C, std::size_t rank, const char* who) {
  if (C.order() != 2 || C.extent(0) != rank || C.extent(1) != rank) {
    throw ShapeError(strf(who, ": seed must be a ", rank, "x", rank, " matrix, got ",
                          shape_str(C.shape())));
  }
}
}  // namespace

DenseTensor meta_cp_delta(const MetaCPAdapter& ad, const DenseTensor& c) {
  ad.validate();
  check_seed_vector(c, ad.rank(), "meta_cp_delta");
  return scale(contract(ad.A, scale_axis(ad.B, c, 0), {{1, 0}}), ad.scale);
}

DenseTensor meta_tr_delta(const MetaTRAdapter& ad, const DenseTensor& C) {
  ad.validate();
  check_seed_matrix(C, ad.rank(), "meta_tr_delta");
  // (r0,i,r1) x (r1,o,r2) -> (r0,i,o,r2), then close the ring with C[r2,r0].
  const DenseTensor chain = contract(ad.A, ad.B, {{2, 0}});
  DenseTensor out = scale(contract(chain, C, {{3, 0}, {0, 1}}), ad.scale);
  if (mutation_active("meta_tr_sign_flip")) out = scale(out, -1.0);
  return out;
}

DenseTensor conv_meta_cp_delta(const ConvMetaCPAdapter& ad, const DenseTensor& c) {
  ad.validate();
  check_seed_vector(c, ad.rank(), "conv_meta_cp_delta");
  return scale(contract(ad.A, scale_axis(ad.B, c, 0), {{3, 0}}), ad.scale);
}

DenseTensor conv_meta_tr_delta(const ConvMetaTRAdapter& ad, const DenseTensor& C) {
  ad.validate();
  check_seed_matrix(C, ad.rank(), "conv_meta_tr_delta");
  const DenseTensor chain = contract(ad.A, ad.B, {{2, 0}});          // (r0, K*K*I, O, r2)
  const DenseTensor flat = contract(chain, C, {{3, 0}, {0, 1}});     // (K*K*I, O)
  DenseTensor out = reshape(flat, {ad.kernel_size, ad.kernel_size, ad.in_channels, flat.extent(1)});
  return scale(out, ad.scale);
}

//---------------------------------------------------------------------------
// parameter counts

std::size_t param_count(const MatrixLoRA& ad) { return ad.A.size() + ad.B.size(); }
std::size_t param_count(const ConvLoRA& ad) { return ad.A.size() + ad.B.size(); }
std::size_t param_count(const MetaCPAdapter& ad) { return ad.A.size() + ad.B.size(); }
std::size_t param_count(const MetaTRAdapter& ad) { return ad.A.size() + ad.B.size(); }
std::size_t param_count(const ConvMetaCPAdapter& ad) { return ad.A.size() + ad.B.size(); }
std::size_t param_count(const ConvMetaTRAdapter& ad) { return ad.A.size() + ad.B.size(); }

//---------------------------------------------------------------------------
// initialization

MatrixLoRA init_matrix_lora(std::size_t in_dim, std::size_t out_dim, std::size_t rank, double scale,
                            Rng& rng) {
  MatrixLoRA ad;
  ad.A = gaussian({in_dim, rank}, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng);
  ad.B = DenseTensor::zeros({rank, out_dim});
  ad.scale = scale;
  return ad;
}

ConvLoRA init_conv_lora(std::size_t kernel, std::size_t in_channels, std::size_t out_channels,
                        std::size_t rank, double scale, Rng& rng) {
  ConvLoRA ad;
  const double fan_in = static_cast<double>(kernel * kernel * in_channels);
  ad.A = gaussian({kernel, kernel, in_channels, rank}, 1.0 / std::sqrt(fan_in), rng);
  ad.B = DenseTensor::zeros({rank, out_channels});
  ad.scale = scale;
  return ad;
}

MetaCPAdapter init_meta_cp(std::size_t in_dim, std::size_t out_dim, std::size_t rank, double scale,
                           Rng& rng) {
  MetaCPAdapter ad;
  ad.A = gaussian({in_dim, rank}, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng);
  ad.B = DenseTensor::zeros({rank, out_dim});
  ad.scale = scale;
  return ad;
}

MetaTRAdapter init_meta_tr(std::size_t in_dim, std::size_t out_dim, std::size_t rank, double scale,
                           Rng& rng) {
  MetaTRAdapter ad;
  ad.A = gaussian({rank, in_dim, rank}, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng);
  ad.B = DenseTensor::zeros({rank, out_dim, rank});
  ad.scale = scale;
  return ad;
}

ConvMetaCPAdapter init_conv_meta_cp(std::size_t kernel, std::size_t in_channels,
                                    std::size_t out_channels, std::size_t rank, double scale, Rng& rng) {
  ConvMetaCPAdapter ad;
  const double fan_in = static_cast<double>(kernel * kernel * in_channels);
  ad.A = gaussian({kernel, kernel, in_channels, rank}, 1.0 / std::sqrt(fan_in), rng);
  ad.B = DenseTensor::zeros({rank, out_channels});
  ad.scale = scale;
  return ad;
}

ConvMetaTRAdapter init_conv_meta_tr(std::size_t kernel, std::size_t in_channels,
                                    std::size_t out_channels, std::size_t rank, double scale, Rng& rng) {
  ConvMetaTRAdapter ad;
  const std::size_t folded = kernel * kernel * in_channels;
  ad.A = gaussian({rank, folded, rank}, 1.0 / std::sqrt(static_cast<double>(folded)), rng);
  ad.B = DenseTensor::zeros({rank, out_channels, rank});
  ad.scale = scale;
  ad.kernel_size = kernel;
  ad.in_channels = in_channels;
  return ad;
}

//---------------------------------------------------------------------------
// type-erased holder + checkpoints

const char* adapter_kind_name(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::MatrixLora: return "matrix_lora";
    case AdapterKind::ConvLora: return "conv_lora";
    case AdapterKind::MetaCP: return "meta_cp";
    case AdapterKind::MetaTR: return "meta_tr";
    case AdapterKind::ConvMetaCP: return "conv_meta_cp";
    case AdapterKind::ConvMetaTR: return "conv_meta_tr";
  }
  throw ArgError("unknown adapter kind");
}

AdapterKind adapter_kind_from_name(const std::string& name) {
  if (name == "matrix_lora") return AdapterKind::MatrixLora;
  if (name == "conv_lora") return AdapterKind::ConvLora;
  if (name == "meta_cp") return AdapterKind::MetaCP;
  if (name == "meta_tr") return AdapterKind::MetaTR;
  if (name == "conv_meta_cp") return AdapterKind::ConvMetaCP;
  if (name == "conv_meta_tr") return AdapterKind::ConvMetaTR;
  throw ArgError("unknown adapter variant: " + name);
}

MatrixLoRA Adapter::as_matrix_lora() const {
  if (kind != AdapterKind::MatrixLora) throw ArgError("adapter is not matrix_lora");
  return MatrixLoRA{A, B, scale};
}
ConvLoRA Adapter::as_conv_lora() const {
  if (kind != AdapterKind::ConvLora) throw ArgError("adapter is not conv_lora");
  return ConvLoRA{A, B, scale};
}
MetaCPAdapter Adapter::as_meta_cp() const {
  if (kind != AdapterKind::MetaCP) throw ArgError("adapter is not meta_cp");
  return MetaCPAdapter{A, B, scale};
}
MetaTRAdapter Adapter::as_meta_tr() const {
  if (kind != AdapterKind::MetaTR) throw ArgError("adapter is not meta_tr");
  return MetaTRAdapter{A, B, scale};
}
ConvMetaCPAdapter Adapter::as_conv_meta_cp() const {
  if (kind != AdapterKind::ConvMetaCP) throw ArgError("adapter is not conv_meta_cp");
  return ConvMetaCPAdapter{A, B, scale};
}
ConvMetaTRAdapter Adapter::as_conv_meta_tr() const {
  if (kind != AdapterKind::ConvMetaTR) throw ArgError("adapter is not conv_meta_tr");
  return ConvMetaTRAdapter{A, B, scale, kernel_size, in_channels};
}

DenseTensor Adapter::delta(const DenseTensor* seed) const {
  if (is_meta() && seed == nullptr) {
    throw ArgError(strf(adapter_kind_name(kind), " requires a seed"));
  }
  if (!is_meta() && seed != nullptr) {
    throw ArgError(strf(adapter_kind_name(kind), " does not take a seed"));
  }
  switch (kind) {
    case AdapterKind::MatrixLora: return matrix_lora_delta(as_matrix_lora());
    case AdapterKind::ConvLora: return conv_lora_delta(as_conv_lora());
    case AdapterKind::MetaCP: return meta_cp_delta(as_meta_cp(), *seed);
    case AdapterKind::MetaTR: return meta_tr_delta(as_meta_tr(), *seed);
    case AdapterKind::ConvMetaCP: return conv_meta_cp_delta(as_conv_meta_cp(), *seed);
    case AdapterKind::ConvMetaTR: return conv_meta_tr_delta(as_conv_meta_tr(), *seed);
  }
  throw ArgError("unknown adapter kind");
}

std::size_t Adapter::params() const { return A.size() + B.size(); }

std::vector<std::size_t> Adapter::seed_shape() const {
  switch (kind) {
    case AdapterKind::MetaCP: return {A.extent(1)};
    case AdapterKind::ConvMetaCP: return {A.extent(3)};
    case AdapterKind::MetaTR:
    case AdapterKind::ConvMetaTR: return {A.extent(0), A.extent(0)};
    default: return {};
  }
}

void save_adapter(const std::filesystem::path& dir, const Adapter& ad) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "metalora.adapter.v1";
  manifest["variant"] = adapter_kind_name(ad.kind);
  manifest["scale"] = ad.scale;
  manifest["shapes"]["A"] = ad.A.shape();
  manifest["shapes"]["B"] = ad.B.shape();
  switch (ad.kind) {
    case AdapterKind::MetaCP:
    case AdapterKind::ConvMetaCP: manifest["seed_dim"] = ad.seed_shape()[0]; break;
    case AdapterKind::MetaTR:
    case AdapterKind::ConvMetaTR: manifest["seed_shape"] = ad.seed_shape(); break;
    default: break;
  }
  if (ad.kind == AdapterKind::ConvMetaTR) {
    manifest["kernel_size"] = ad.kernel_size;
    manifest["in_channels"] = ad.in_channels;
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write adapter manifest in " + dir.string());
  os << manifest.dump(2) << "\n";
  save_tensor(dir / "A", ad.A);
  save_tensor(dir / "B", ad.B);
}

Adapter load_adapter(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("cannot read adapter manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(strf("bad adapter manifest in ", dir.string(), ": ", e.what()));
  }
  if (manifest.value("format", "") != "metalora.adapter.v1") {
    throw IoError("unrecognized adapter manifest format in " + dir.string());
  }
  Adapter ad;
  ad.kind = adapter_kind_from_name(manifest.at("variant").get<std::string>());
  ad.scale = manifest.at("scale").get<double>();
  ad.A = load_tensor(dir / "A");
  ad.B = load_tensor(dir / "B");
  if (ad.kind == AdapterKind::ConvMetaTR) {
    ad.kernel_size = manifest.at("kernel_size").get<std::size_t>();
    ad.in_channels = manifest.at("in_channels").get<std::size_t>();
  } else if (ad.is_conv()) {
    ad.kernel_size = ad.A.extent(0);
    ad.in_channels = ad.A.extent(2);
  }
  const auto a_shape = manifest.at("shapes").at("A").get<std::vector<std::size_t>>();
  const auto b_shape = manifest.at("shapes").at("B").get<std::vector<std::size_t>>();
  if (a_shape != ad.A.shape() || b_shape != ad.B.shape()) {
    throw IoError("adapter manifest shapes disagree with factor blobs in " + dir.string());
  }
  return ad;
}

}  // namespace metalora
