/* C interface to the tensorial denoising library.
 *
 * Objects are opaque handles owned by the caller and released with the
 * matching *_free function. Every fallible call returns a tnsr_status; on
 * failure tnsr_last_error() describes the problem (per thread, valid until
 * the next failing call on that thread). Output handles are left untouched
 * on failure.
 */
#ifndef TENSORIAL_TENSORIAL_H
#define TENSORIAL_TENSORIAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  define TNSR_API __declspec(dllexport)
#else
#  define TNSR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tnsr_status {
  TNSR_OK = 0,
  TNSR_ERR_ARGUMENT = 1,
  TNSR_ERR_SHAPE = 2,
  TNSR_ERR_NUMERIC = 3,
  TNSR_ERR_CONFIG = 4,
  TNSR_ERR_COVERAGE = 5,
  TNSR_ERR_FORMAT = 6,
  TNSR_ERR_EVALUATOR = 7,
  TNSR_ERR_INTERNAL = 99
} tnsr_status;

TNSR_API const char* tnsr_last_error(void);
TNSR_API const char* tnsr_status_name(tnsr_status status);
TNSR_API const char* tnsr_version(void);

/* ---- tensors ----------------------------------------------------------- */

typedef struct tnsr_tensor tnsr_tensor;

typedef enum tnsr_dtype { TNSR_FLOAT32 = 1, TNSR_FLOAT64 = 2 } tnsr_dtype;

/* `data` holds product(shape) doubles in row-major order, or NULL for zeros. */
TNSR_API tnsr_status tnsr_tensor_create(size_t ndim, const size_t* shape, const double* data, tnsr_tensor** out);
TNSR_API void tnsr_tensor_free(tnsr_tensor* tensor);
TNSR_API size_t tnsr_tensor_ndim(const tnsr_tensor* tensor);
TNSR_API size_t tnsr_tensor_dim(const tnsr_tensor* tensor, size_t axis);
TNSR_API size_t tnsr_tensor_size(const tnsr_tensor* tensor);
TNSR_API const double* tnsr_tensor_data(const tnsr_tensor* tensor);

TNSR_API tnsr_status tnsr_tensor_read(const char* path, tnsr_tensor** out);
TNSR_API tnsr_status tnsr_tensor_write(const char* path, const tnsr_tensor* tensor, tnsr_dtype dtype);
/* PNG or tensor container, detected from content; shape [C, rows, cols]. */
TNSR_API tnsr_status tnsr_image_read(const char* path, tnsr_tensor** out);
/* PNG when `path` ends in .png, float64 container otherwise. */
TNSR_API tnsr_status tnsr_image_write(const char* path, const tnsr_tensor* image);

/* CIFAR binary batch; variant 10 or 100. images: [B,3,32,32], labels: [B]. */
TNSR_API tnsr_status tnsr_cifar_load(const char* path, int variant, tnsr_tensor** images, tnsr_tensor** labels);

/* ---- denoiser ---------------------------------------------------------- */

typedef enum tnsr_method { TNSR_TUCKER = 0, TNSR_TT = 1 } tnsr_method;

typedef struct tnsr_denoiser_config {
  uint32_t patch;
  uint32_t stride;
  uint32_t padding;
  uint32_t dilation;
  tnsr_method method;
  uint32_t rank_k;
  uint32_t rank_p;
  int hosvd_only;
} tnsr_denoiser_config;

TNSR_API void tnsr_denoiser_config_init(tnsr_denoiser_config* cfg);

#define TNSR_MAX_RANKS 16

typedef struct tnsr_report {
  double relative_error;
  double compression_ratio;
  size_t iterations;
  size_t n_ranks;
  size_t ranks_used[TNSR_MAX_RANKS];
  size_t ranks_requested[TNSR_MAX_RANKS];
  size_t n_shape;
  size_t decomposed_shape[TNSR_MAX_RANKS];
} tnsr_report;

TNSR_API tnsr_status tnsr_denoise(const tnsr_tensor* image, const tnsr_denoiser_config* cfg, tnsr_tensor** out,
                                  tnsr_report* report);

typedef enum tnsr_norm { TNSR_LINF = 0, TNSR_L2 = 1 } tnsr_norm;

typedef struct tnsr_perturbation_info {
  double preclip_linf;
  double preclip_l2;
} tnsr_perturbation_info;

TNSR_API tnsr_status tnsr_perturb(const tnsr_tensor* image, tnsr_norm norm, double epsilon, uint64_t seed,
                                  tnsr_tensor** out, tnsr_perturbation_info* info);

typedef struct tnsr_fidelity {
  double mse;
  double psnr_db; /* +inf for identical inputs */
  double linf_distance;
  double l2_distance;
} tnsr_fidelity;

TNSR_API tnsr_status tnsr_fidelity_compute(const tnsr_tensor* reference, const tnsr_tensor* candidate,
                                           tnsr_fidelity* out);

/* ---- kernel compression ------------------------------------------------ */

typedef enum tnsr_kernel_method { TNSR_KERNEL_TUCKER2 = 0, TNSR_KERNEL_TT = 1 } tnsr_kernel_method;

/* Zero means "unset". Tucker-2 needs rank_p and rank_q or energy; TT needs
 * ranks or energy. */
typedef struct tnsr_kernel_options {
  tnsr_kernel_method method;
  size_t rank_p;
  size_t rank_q;
  size_t ranks[3];
  double energy;
} tnsr_kernel_options;

typedef struct tnsr_kernel_report {
  double relative_error;
  double compression_ratio;
  size_t dense_parameters;
  size_t factored_parameters;
  size_t n_ranks;
  size_t ranks_used[TNSR_MAX_RANKS];
} tnsr_kernel_report;

/* Factorizes a [d, d, P, Q] kernel and writes a factor bundle index to
 * `bundle_path` (factor containers land beside it). */
TNSR_API tnsr_status tnsr_compress_kernel(const tnsr_tensor* kernel, const tnsr_kernel_options* options,
                                          const char* bundle_path, tnsr_kernel_report* report);
TNSR_API tnsr_status tnsr_bundle_reconstruct(const char* bundle_path, tnsr_tensor** out);

/* ---- search ------------------------------------------------------------ */

/* Runs a manifest-driven search. On success *summary_json receives a JSON
 * document (free with tnsr_string_free). */
TNSR_API tnsr_status tnsr_search_run(const char* manifest_path, size_t parallel, char** summary_json);
TNSR_API void tnsr_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* TENSORIAL_TENSORIAL_H */
