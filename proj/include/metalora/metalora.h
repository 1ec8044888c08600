/* metalora: C API for the tensor-network adapter toolkit.
 *
 * Conventions
 *   - Every fallible call returns mtk_status; MTK_OK is 0.  On failure the
 *     thread-local message from mtk_last_error() describes what went wrong
 *     and output parameters are left untouched.
 *   - Objects returned through out-parameters are owned by the caller and
 *     released with the matching _destroy function.
 *   - Tensors are dense, row-major, double precision.  A 0-order tensor is
 *     a scalar holding one element.
 *   - Command entry points mirror the CLI and return a process exit status
 *     (0 success, otherwise an mtk_status value).
 */
#ifndef METALORA_H
#define METALORA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MTK_BUILDING_SHARED)
#    define MTK_API __declspec(dllexport)
#  else
#    define MTK_API __declspec(dllimport)
#  endif
#else
#  define MTK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mtk_status {
  MTK_OK = 0,
  MTK_ERR_INVALID_ARGUMENT = 1,
  MTK_ERR_SHAPE_MISMATCH = 2,
  MTK_ERR_IO = 3,
  MTK_ERR_CONFIG = 4,
  MTK_ERR_VERIFY_FAILED = 5,
  MTK_ERR_DIVERGED = 6,
  MTK_ERR_INTERNAL = 7,
  MTK_ERR_INTERRUPTED = 8
} mtk_status;

typedef struct mtk_tensor mtk_tensor;
typedef struct mtk_adapter mtk_adapter;

/* Library version string ("major.minor.patch"). */
MTK_API const char* mtk_version(void);

/* Message of the calling thread's most recent failure ("" if none). */
MTK_API const char* mtk_last_error(void);

/* Cooperative cancellation: long-running commands poll this flag and bail
 * out with MTK_ERR_INTERRUPTED, leaving their output directory behind with
 * the "incomplete" marker still in place. */
MTK_API void mtk_request_interrupt(void);
MTK_API void mtk_clear_interrupt(void);

/*---------------------------------------------------------------- tensors */

/* data may be NULL (zero fill) or hold prod(shape) doubles; order 0 is a
 * scalar and shape may then be NULL. */
MTK_API mtk_status mtk_tensor_create(const size_t* shape, size_t order, const double* data,
                                     mtk_tensor** out);
MTK_API void mtk_tensor_destroy(mtk_tensor* t);

MTK_API size_t mtk_tensor_order(const mtk_tensor* t);
MTK_API size_t mtk_tensor_size(const mtk_tensor* t);
/* shape_out must hold mtk_tensor_order(t) entries. */
MTK_API mtk_status mtk_tensor_shape(const mtk_tensor* t, size_t* shape_out);
/* Flat row-major element storage, mtk_tensor_size(t) doubles. */
MTK_API double* mtk_tensor_data(mtk_tensor* t);
MTK_API const double* mtk_tensor_data_const(const mtk_tensor* t);

/* MTK1 single-tensor blob I/O. */
MTK_API mtk_status mtk_tensor_save(const mtk_tensor* t, const char* path);
MTK_API mtk_status mtk_tensor_load(const char* path, mtk_tensor** out);

/* General pairwise contraction; axis_pairs is 2*n_pairs values packed
 * (a0,b0,a1,b1,...).  n_pairs may be 0 (outer product); contracting every
 * axis of both operands yields a 0-order scalar. */
MTK_API mtk_status mtk_contract(const mtk_tensor* a, const mtk_tensor* b,
                                const size_t* axis_pairs, size_t n_pairs, mtk_tensor** out);

/* Binary selection tensor P of shape (input_len, out_len, kernel_len) with
 * P[j,j',k] = 1 iff j = stride*j' + k - padding; rejects geometries where
 * some output position sees no in-range tap. */
MTK_API mtk_status mtk_dummy_tensor(size_t input_len, size_t kernel_len, size_t stride,
                                    size_t padding, mtk_tensor** out);

/* 1-d correlation expressed through the selection tensor (x: length-A
 * vector, w: length-B kernel). */
MTK_API mtk_status mtk_conv1d(const mtk_tensor* x, const mtk_tensor* w, size_t stride,
                              size_t padding, mtk_tensor** out);

/* 2-d convolution, x: H x W x I, w: K x K x I x O, output H' x W' x O. */
MTK_API mtk_status mtk_conv2d(const mtk_tensor* x, const mtk_tensor* w, size_t stride,
                              size_t padding, mtk_tensor** out);

/* Rank-R reconstructions.  CP factors are (extent_i x R) matrices; lambdas
 * is an optional length-R weight vector (NULL = all ones).  TR cores are
 * (R_i x extent_i x R_{i+1}) with the last rank wrapping to the first. */
MTK_API mtk_status mtk_cp_reconstruct(const mtk_tensor* const* factors, size_t n_factors,
                                      const mtk_tensor* lambdas, mtk_tensor** out);
MTK_API mtk_status mtk_tr_reconstruct(const mtk_tensor* const* cores, size_t n_cores,
                                      mtk_tensor** out);

/*--------------------------------------------------------------- adapters */

typedef enum mtk_adapter_kind {
  MTK_ADAPTER_MATRIX_LORA = 0,
  MTK_ADAPTER_CONV_LORA = 1,
  MTK_ADAPTER_META_CP = 2,
  MTK_ADAPTER_META_TR = 3,
  MTK_ADAPTER_CONV_META_CP = 4,
  MTK_ADAPTER_CONV_META_TR = 5
} mtk_adapter_kind;

/* Fresh adapter with the warm-start initialization (delta is exactly zero
 * until training moves the second factor).  kernel is ignored for the
 * matrix kinds; in_dim/out_dim are channel counts for the conv kinds. */
MTK_API mtk_status mtk_adapter_init(mtk_adapter_kind kind, size_t kernel, size_t in_dim,
                                    size_t out_dim, size_t rank, double scale, uint64_t seed,
                                    mtk_adapter** out);
MTK_API void mtk_adapter_destroy(mtk_adapter* a);

/* Weight delta.  Static kinds require seed == NULL; meta kinds require the
 * seed tensor of the advertised shape ({R} for CP, {R,R} for TR). */
MTK_API mtk_status mtk_adapter_delta(const mtk_adapter* a, const mtk_tensor* seed,
                                     mtk_tensor** out);

MTK_API size_t mtk_adapter_param_count(const mtk_adapter* a);

/* Seed geometry: order 0 for static kinds, else 1 (CP) or 2 (TR);
 * shape_out, when non-NULL, must hold that many entries. */
MTK_API mtk_status mtk_adapter_seed_order(const mtk_adapter* a, size_t* order_out);
MTK_API mtk_status mtk_adapter_seed_shape(const mtk_adapter* a, size_t* shape_out);

/* Directory checkpoint (manifest.json + one MTK1 blob per factor). */
MTK_API mtk_status mtk_adapter_save(const mtk_adapter* a, const char* dir);
MTK_API mtk_status mtk_adapter_load(const char* dir, mtk_adapter** out);

/*--------------------------------------------------------------- commands */

/* Progress callback: one line per call, no trailing newline; user is passed
 * through untouched.  May be NULL to discard output. */
typedef void (*mtk_log_fn)(const char* line, void* user);

/* Property-suite runner.  filter_module selects one module's suites
 * ("tensor_core", "adapters", "meta_net", "training"); NULL or "" runs all.
 * report_dir (NULL to skip) receives verify_report.txt / .json. */
MTK_API int mtk_cmd_verify(const char* filter_module, const char* report_dir, mtk_log_fn log,
                           void* user);

/* Synthetic dataset emission for every configured seed. */
MTK_API int mtk_cmd_gen_data(const char* config_path, mtk_log_fn log, void* user);

/* Single-arm training run.  seed_override / out_override may be NULL. */
MTK_API int mtk_cmd_train(const char* config_path, const uint64_t* seed_override,
                          const char* out_override, mtk_log_fn log, void* user);

/* Full arm x seed comparison table. */
MTK_API int mtk_cmd_compare(const char* config_path, mtk_log_fn log, void* user);

#ifdef __cplusplus
}
#endif

#endif /* METALORA_H */
