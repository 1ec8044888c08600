#include "metalora/metalora.h"

#include <cstring>
#include <string>

#include "core/adapters.hpp"
#include "core/commands.hpp"
#include "core/interrupt.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "core/tensor_io.hpp"

struct mtk_tensor {
  metalora::DenseTensor t;
};

struct mtk_adapter {
  metalora::Adapter a;
};

namespace {

thread_local std::string g_last_error;

mtk_status fail(mtk_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Funnels C++ failures into (status, thread-local message).
template <typename Fn>
mtk_status wrap(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MTK_OK;
  } catch (const metalora::Error& e) {
    return fail(static_cast<mtk_status>(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail(MTK_ERR_INTERNAL, e.what());
  }
}

mtk_status require(bool cond, const char* what) {
  if (cond) return MTK_OK;
  return fail(MTK_ERR_INVALID_ARGUMENT, std::string("null or invalid argument: ") + what);
}

metalora::LogFn make_log(mtk_log_fn log, void* user) {
  if (log == nullptr) return {};
  return [log, user](const std::string& line) { log(line.c_str(), user); };
}

}  // namespace

extern "C" {

const char* mtk_version(void) { return "1.0.0"; }

const char* mtk_last_error(void) { return g_last_error.c_str(); }

void mtk_request_interrupt(void) { metalora::request_interrupt(); }

void mtk_clear_interrupt(void) { metalora::clear_interrupt(); }

//----------------------------------------------------------------- tensors

mtk_status mtk_tensor_create(const size_t* shape, size_t order, const double* data,
                             mtk_tensor** out) {
  if (mtk_status s = require(out != nullptr, "out"); s != MTK_OK) return s;
  if (mtk_status s = require(order == 0 || shape != nullptr, "shape"); s != MTK_OK) return s;
  return wrap([&] {
    std::vector<std::size_t> sh(shape, shape + order);
    metalora::DenseTensor t(std::move(sh));
    if (data != nullptr) std::memcpy(t.data(), data, t.size() * sizeof(double));
    *out = new mtk_tensor{std::move(t)};
  });
}

void mtk_tensor_destroy(mtk_tensor* t) { delete t; }

size_t mtk_tensor_order(const mtk_tensor* t) { return t == nullptr ? 0 : t->t.order(); }

size_t mtk_tensor_size(const mtk_tensor* t) { return t == nullptr ? 0 : t->t.size(); }

mtk_status mtk_tensor_shape(const mtk_tensor* t, size_t* shape_out) {
  if (mtk_status s = require(t != nullptr, "tensor"); s != MTK_OK) return s;
  if (mtk_status s = require(shape_out != nullptr || t->t.order() == 0, "shape_out");
      s != MTK_OK) {
    return s;
  }
  for (std::size_t i = 0; i < t->t.order(); ++i) shape_out[i] = t->t.extent(i);
  return MTK_OK;
}

double* mtk_tensor_data(mtk_tensor* t) { return t == nullptr ? nullptr : t->t.data(); }

const double* mtk_tensor_data_const(const mtk_tensor* t) {
  return t == nullptr ? nullptr : t->t.data();
}

mtk_status mtk_tensor_save(const mtk_tensor* t, const char* path) {
  if (mtk_status s = require(t != nullptr && path != nullptr, "tensor/path"); s != MTK_OK) {
    return s;
  }
  return wrap([&] { metalora::save_tensor(path, t->t); });
}

mtk_status mtk_tensor_load(const char* path, mtk_tensor** out) {
  if (mtk_status s = require(path != nullptr && out != nullptr, "path/out"); s != MTK_OK) {
    return s;
  }
  return wrap([&] { *out = new mtk_tensor{metalora::load_tensor(path)}; });
}

mtk_status mtk_contract(const mtk_tensor* a, const mtk_tensor* b, const size_t* axis_pairs,
                        size_t n_pairs, mtk_tensor** out) {
  if (mtk_status s = require(a != nullptr && b != nullptr && out != nullptr, "a/b/out");
      s != MTK_OK) {
    return s;
  }
  if (mtk_status s = require(n_pairs == 0 || axis_pairs != nullptr, "axis_pairs");
      s != MTK_OK) {
    return s;
  }
  return wrap([&] {
    std::vector<metalora::AxisPair> pairs;
    pairs.reserve(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) {
      pairs.emplace_back(axis_pairs[2 * i], axis_pairs[2 * i + 1]);
    }
    *out = new mtk_tensor{metalora::contract(a->t, b->t, pairs)};
  });
}

mtk_status mtk_dummy_tensor(size_t input_len, size_t kernel_len, size_t stride, size_t padding,
                            mtk_tensor** out) {
  if (mtk_status s = require(out != nullptr, "out"); s != MTK_OK) return s;
  return wrap([&] {
    const auto spec =
        metalora::DummyTensorSpec::from_geometry(input_len, kernel_len, stride, padding);
    *out = new mtk_tensor{metalora::dummy_tensor(spec)};
  });
}

mtk_status mtk_conv1d(const mtk_tensor* x, const mtk_tensor* w, size_t stride, size_t padding,
                      mtk_tensor** out) {
  if (mtk_status s = require(x != nullptr && w != nullptr && out != nullptr, "x/w/out");
      s != MTK_OK) {
    return s;
  }
  return wrap([&] {
    if (x->t.order() != 1 || w->t.order() != 1) {
      throw metalora::ShapeError("conv1d expects vector input and kernel");
    }
    const auto spec = metalora::DummyTensorSpec::from_geometry(x->t.extent(0), w->t.extent(0),
                                                               stride, padding);
    *out = new mtk_tensor{metalora::conv1d_via_dummy(x->t, w->t, spec)};
  });
}

mtk_status mtk_conv2d(const mtk_tensor* x, const mtk_tensor* w, size_t stride, size_t padding,
                      mtk_tensor** out) {
  if (mtk_status s = require(x != nullptr && w != nullptr && out != nullptr, "x/w/out");
      s != MTK_OK) {
    return s;
  }
  return wrap([&] { *out = new mtk_tensor{metalora::conv2d_forward(x->t, w->t, stride, padding)}; });
}

mtk_status mtk_cp_reconstruct(const mtk_tensor* const* factors, size_t n_factors,
                              const mtk_tensor* lambdas, mtk_tensor** out) {
  if (mtk_status s = require(factors != nullptr && out != nullptr, "factors/out"); s != MTK_OK) {
    return s;
  }
  return wrap([&] {
    std::vector<metalora::DenseTensor> fs;
    fs.reserve(n_factors);
    for (std::size_t i = 0; i < n_factors; ++i) {
      if (factors[i] == nullptr) throw metalora::ArgError("null CP factor");
      fs.push_back(factors[i]->t);
    }
    metalora::DenseTensor lam =
        lambdas != nullptr
            ? lambdas->t
            : metalora::DenseTensor::full({fs.empty() ? 0 : fs[0].extent(1)}, 1.0);
    *out = new mtk_tensor{metalora::cp_reconstruct(fs, lam)};
  });
}

mtk_status mtk_tr_reconstruct(const mtk_tensor* const* cores, size_t n_cores, mtk_tensor** out) {
  if (mtk_status s = require(cores != nullptr && out != nullptr, "cores/out"); s != MTK_OK) {
    return s;
  }
  return wrap([&] {
    std::vector<metalora::DenseTensor> cs;
    cs.reserve(n_cores);
    for (std::size_t i = 0; i < n_cores; ++i) {
      if (cores[i] == nullptr) throw metalora::ArgError("null TR core");
      cs.push_back(cores[i]->t);
    }
    *out = new mtk_tensor{metalora::tr_reconstruct(cs)};
  });
}

//---------------------------------------------------------------- adapters

mtk_status mtk_adapter_init(mtk_adapter_kind kind, size_t kernel, size_t in_dim, size_t out_dim,
                            size_t rank, double scale, uint64_t seed, mtk_adapter** out) {
  if (mtk_status s = require(out != nullptr, "out"); s != MTK_OK) return s;
  return wrap([&] {
    using namespace metalora;
    Rng rng(seed);
    Adapter ad;
    ad.scale = scale;
    switch (kind) {
      case MTK_ADAPTER_MATRIX_LORA: {
        const MatrixLoRA m = init_matrix_lora(in_dim, out_dim, rank, scale, rng);
        ad.kind = AdapterKind::MatrixLora;
        ad.A = m.A;
        ad.B = m.B;
        break;
      }
      case MTK_ADAPTER_CONV_LORA: {
        const ConvLoRA m = init_conv_lora(kernel, in_dim, out_dim, rank, scale, rng);
        ad.kind = AdapterKind::ConvLora;
        ad.A = m.A;
        ad.B = m.B;
        ad.kernel_size = kernel;
        ad.in_channels = in_dim;
        break;
      }
      case MTK_ADAPTER_META_CP: {
        const MetaCPAdapter m = init_meta_cp(in_dim, out_dim, rank, scale, rng);
        ad.kind = AdapterKind::MetaCP;
        ad.A = m.A;
        ad.B = m.B;
        break;
      }
      case MTK_ADAPTER_META_TR: {
        const MetaTRAdapter m = init_meta_tr(in_dim, out_dim, rank, scale, rng);
        ad.kind = AdapterKind::MetaTR;
        ad.A = m.A;
        ad.B = m.B;
        break;
      }
      case MTK_ADAPTER_CONV_META_CP: {
        const ConvMetaCPAdapter m = init_conv_meta_cp(kernel, in_dim, out_dim, rank, scale, rng);
        ad.kind = AdapterKind::ConvMetaCP;
        ad.A = m.A;
        ad.B = m.B;
        ad.kernel_size = kernel;
        ad.in_channels = in_dim;
        break;
      }
      case MTK_ADAPTER_CONV_META_TR: {
        const ConvMetaTRAdapter m = init_conv_meta_tr(kernel, in_dim, out_dim, rank, scale, rng);
        ad.kind = AdapterKind::ConvMetaTR;
        ad.A = m.A;
        ad.B = m.B;
        ad.kernel_size = kernel;
        ad.in_channels = in_dim;
        break;
      }
      default:
        throw ArgError("unknown adapter kind");
    }
    *out = new mtk_adapter{std::move(ad)};
  });
}

void mtk_adapter_destroy(mtk_adapter* a) { delete a; }

mtk_status mtk_adapter_delta(const mtk_adapter* a, const mtk_tensor* seed, mtk_tensor** out) {
  if (mtk_status s = require(a != nullptr && out != nullptr, "adapter/out"); s != MTK_OK) {
    return s;
  }
  return wrap([&] {
    const metalora::DenseTensor* seed_t = seed == nullptr ? nullptr : &seed->t;
    *out = new mtk_tensor{a->a.delta(seed_t)};
  });
}

size_t mtk_adapter_param_count(const mtk_adapter* a) { return a == nullptr ? 0 : a->a.params(); }

mtk_status mtk_adapter_seed_order(const mtk_adapter* a, size_t* order_out) {
  if (mtk_status s = require(a != nullptr && order_out != nullptr, "adapter/order_out");
      s != MTK_OK) {
    return s;
  }
  *order_out = a->a.seed_shape().size();
  return MTK_OK;
}

mtk_status mtk_adapter_seed_shape(const mtk_adapter* a, size_t* shape_out) {
  if (mtk_status s = require(a != nullptr, "adapter"); s != MTK_OK) return s;
  const std::vector<std::size_t> sh = a->a.seed_shape();
  if (mtk_status s = require(sh.empty() || shape_out != nullptr, "shape_out"); s != MTK_OK) {
    return s;
  }
  for (std::size_t i = 0; i < sh.size(); ++i) shape_out[i] = sh[i];
  return MTK_OK;
}

mtk_status mtk_adapter_save(const mtk_adapter* a, const char* dir) {
  if (mtk_status s = require(a != nullptr && dir != nullptr, "adapter/dir"); s != MTK_OK) {
    return s;
  }
  return wrap([&] { metalora::save_adapter(dir, a->a); });
}

mtk_status mtk_adapter_load(const char* dir, mtk_adapter** out) {
  if (mtk_status s = require(dir != nullptr && out != nullptr, "dir/out"); s != MTK_OK) return s;
  return wrap([&] { *out = new mtk_adapter{metalora::load_adapter(dir)}; });
}

//---------------------------------------------------------------- commands

int mtk_cmd_verify(const char* filter_module, const char* report_dir, mtk_log_fn log,
                   void* user) {
  return metalora::cmd_verify(filter_module == nullptr ? "" : filter_module,
                              report_dir == nullptr ? "" : report_dir, make_log(log, user));
}

int mtk_cmd_gen_data(const char* config_path, mtk_log_fn log, void* user) {
  if (config_path == nullptr) {
    fail(MTK_ERR_INVALID_ARGUMENT, "null config path");
    return MTK_ERR_INVALID_ARGUMENT;
  }
  return metalora::cmd_gen_data(config_path, make_log(log, user));
}

int mtk_cmd_train(const char* config_path, const uint64_t* seed_override,
                  const char* out_override, mtk_log_fn log, void* user) {
  if (config_path == nullptr) {
    fail(MTK_ERR_INVALID_ARGUMENT, "null config path");
    return MTK_ERR_INVALID_ARGUMENT;
  }
  std::optional<std::uint64_t> seed;
  if (seed_override != nullptr) seed = *seed_override;
  return metalora::cmd_train(config_path, seed, out_override == nullptr ? "" : out_override,
                             make_log(log, user));
}

int mtk_cmd_compare(const char* config_path, mtk_log_fn log, void* user) {
  if (config_path == nullptr) {
    fail(MTK_ERR_INVALID_ARGUMENT, "null config path");
    return MTK_ERR_INVALID_ARGUMENT;
  }
  return metalora::cmd_compare(config_path, make_log(log, user));
}

}  // extern "C"
