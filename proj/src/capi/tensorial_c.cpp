#include "tensorial/tensorial.h"

#include <cmath>
#include <cstring>
#include <string>

#include "json.hpp"
#include "tensorial/denoiser.hpp"
#include "tensorial/errors.hpp"
#include "tensorial/io.hpp"
#include "tensorial/kernel.hpp"
#include "tensorial/manifest.hpp"

struct tnsr_tensor {
  tensorial::Tensor value;
};

namespace {

thread_local std::string g_last_error;

tnsr_status status_of(tensorial::ErrorKind kind) {
  using tensorial::ErrorKind;
  switch (kind) {
    case ErrorKind::argument: return TNSR_ERR_ARGUMENT;
    case ErrorKind::shape: return TNSR_ERR_SHAPE;
    case ErrorKind::numeric: return TNSR_ERR_NUMERIC;
    case ErrorKind::config: return TNSR_ERR_CONFIG;
    case ErrorKind::coverage: return TNSR_ERR_COVERAGE;
    case ErrorKind::format: return TNSR_ERR_FORMAT;
    case ErrorKind::evaluator: return TNSR_ERR_EVALUATOR;
  }
  return TNSR_ERR_INTERNAL;
}

template <typename F>
tnsr_status guarded(F&& body) {
  try {
    body();
    return TNSR_OK;
  } catch (const tensorial::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TNSR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TNSR_ERR_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (!p) throw tensorial::ArgumentError(std::string(name) + " must not be NULL");
}

tnsr_tensor* wrap(tensorial::Tensor t) { return new tnsr_tensor{std::move(t)}; }

template <std::size_t N>
void copy_ranks(const std::vector<std::size_t>& src, std::size_t (&dst)[N], std::size_t* count) {
  if (src.size() > N) throw tensorial::ArgumentError("rank list exceeds TNSR_MAX_RANKS");
  std::fill(std::begin(dst), std::end(dst), std::size_t{0});
  std::copy(src.begin(), src.end(), dst);
  if (count) *count = src.size();
}

tensorial::DenoiserConfig to_config(const tnsr_denoiser_config& c) {
  tensorial::DenoiserConfig cfg;
  cfg.patch = tensorial::PatchConfig{c.patch, c.stride, c.padding, c.dilation};
  if (c.method != TNSR_TUCKER && c.method != TNSR_TT) throw tensorial::ConfigError("unknown method code");
  cfg.method = c.method == TNSR_TUCKER ? tensorial::Method::tucker : tensorial::Method::tt;
  cfg.rank_k = c.rank_k;
  cfg.rank_p = c.rank_p;
  cfg.hosvd_only = c.hosvd_only != 0;
  return cfg;
}

}  // namespace

extern "C" {

const char* tnsr_last_error(void) { return g_last_error.c_str(); }

const char* tnsr_status_name(tnsr_status status) {
  switch (status) {
    case TNSR_OK: return "ok";
    case TNSR_ERR_ARGUMENT: return "argument error";
    case TNSR_ERR_SHAPE: return "shape error";
    case TNSR_ERR_NUMERIC: return "numeric error";
    case TNSR_ERR_CONFIG: return "configuration error";
    case TNSR_ERR_COVERAGE: return "coverage error";
    case TNSR_ERR_FORMAT: return "format error";
    case TNSR_ERR_EVALUATOR: return "evaluator error";
    case TNSR_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* tnsr_version(void) { return "0.1.0"; }

tnsr_status tnsr_tensor_create(size_t ndim, const size_t* shape, const double* data, tnsr_tensor** out) {
  return guarded([&] {
    require(out, "out");
    require(shape, "shape");
    tensorial::Shape s(shape, shape + ndim);
    tensorial::Tensor t(s);
    if (data) std::copy(data, data + t.size(), t.data().begin());
    *out = wrap(std::move(t));
  });
}

void tnsr_tensor_free(tnsr_tensor* tensor) { delete tensor; }

size_t tnsr_tensor_ndim(const tnsr_tensor* tensor) { return tensor ? tensor->value.ndim() : 0; }

size_t tnsr_tensor_dim(const tnsr_tensor* tensor, size_t axis) {
  return tensor && axis < tensor->value.ndim() ? tensor->value.dim(axis) : 0;
}

size_t tnsr_tensor_size(const tnsr_tensor* tensor) { return tensor ? tensor->value.size() : 0; }

const double* tnsr_tensor_data(const tnsr_tensor* tensor) { return tensor ? tensor->value.data().data() : nullptr; }

tnsr_status tnsr_tensor_read(const char* path, tnsr_tensor** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    if (!std::filesystem::exists(path)) throw tensorial::FormatError(std::string("input file '") + path + "' does not exist");
    *out = wrap(tensorial::read_tensor(path));
  });
}

tnsr_status tnsr_tensor_write(const char* path, const tnsr_tensor* tensor, tnsr_dtype dtype) {
  return guarded([&] {
    require(path, "path");
    require(tensor, "tensor");
    if (dtype != TNSR_FLOAT32 && dtype != TNSR_FLOAT64) throw tensorial::ArgumentError("unknown dtype");
    tensorial::write_tensor(path, tensor->value, static_cast<tensorial::DType>(dtype));
  });
}

tnsr_status tnsr_image_read(const char* path, tnsr_tensor** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = wrap(tensorial::read_image(path));
  });
}

tnsr_status tnsr_image_write(const char* path, const tnsr_tensor* image) {
  return guarded([&] {
    require(path, "path");
    require(image, "image");
    tensorial::write_image(path, image->value);
  });
}

tnsr_status tnsr_cifar_load(const char* path, int variant, tnsr_tensor** images, tnsr_tensor** labels) {
  return guarded([&] {
    require(path, "path");
    require(images, "images");
    require(labels, "labels");
    if (variant != 10 && variant != 100) throw tensorial::ArgumentError("CIFAR variant must be 10 or 100");
    auto batch = tensorial::load_cifar(
        path, variant == 10 ? tensorial::CifarVariant::cifar10 : tensorial::CifarVariant::cifar100);
    std::vector<double> l(batch.labels.begin(), batch.labels.end());
    auto* img = wrap(std::move(batch.images));
    *labels = wrap(tensorial::Tensor({l.size()}, std::move(l)));
    *images = img;
  });
}

void tnsr_denoiser_config_init(tnsr_denoiser_config* cfg) {
  if (!cfg) return;
  *cfg = tnsr_denoiser_config{8, 2, 0, 1, TNSR_TUCKER, 24, 20, 0};
}

tnsr_status tnsr_denoise(const tnsr_tensor* image, const tnsr_denoiser_config* cfg, tnsr_tensor** out,
                         tnsr_report* report) {
  return guarded([&] {
    require(image, "image");
    require(cfg, "cfg");
    require(out, "out");
    const auto config = to_config(*cfg);
    auto result = tensorial::denoise(image->value, config);
    if (report) {
      tnsr_report r{};
      r.relative_error = result.report.relative_error;
      r.compression_ratio = result.report.compression_ratio;
      r.iterations = result.report.iterations;
      copy_ranks(result.report.ranks_used, r.ranks_used, &r.n_ranks);
      copy_ranks(tensorial::requested_ranks(config, image->value.dim(0)), r.ranks_requested, nullptr);
      copy_ranks(result.decomposed_shape, r.decomposed_shape, &r.n_shape);
      *report = r;
    }
    *out = wrap(std::move(result.image));
  });
}

tnsr_status tnsr_perturb(const tnsr_tensor* image, tnsr_norm norm, double epsilon, uint64_t seed, tnsr_tensor** out,
                         tnsr_perturbation_info* info) {
  return guarded([&] {
    require(image, "image");
    require(out, "out");
    if (norm != TNSR_LINF && norm != TNSR_L2) throw tensorial::ConfigError("unknown norm code");
    tensorial::PerturbationSpec spec{norm == TNSR_LINF ? tensorial::Norm::linf : tensorial::Norm::l2, epsilon, seed};
    auto result = tensorial::perturb(image->value, spec);
    if (info) *info = tnsr_perturbation_info{result.preclip_linf, result.preclip_l2};
    *out = wrap(std::move(result.image));
  });
}

tnsr_status tnsr_fidelity_compute(const tnsr_tensor* reference, const tnsr_tensor* candidate, tnsr_fidelity* out) {
  return guarded([&] {
    require(reference, "reference");
    require(candidate, "candidate");
    require(out, "out");
    const auto f = tensorial::fidelity(reference->value, candidate->value);
    *out = tnsr_fidelity{f.mse, f.psnr_db, f.linf_distance, f.l2_distance};
  });
}

tnsr_status tnsr_compress_kernel(const tnsr_tensor* kernel, const tnsr_kernel_options* options,
                                 const char* bundle_path, tnsr_kernel_report* report) {
  return guarded([&] {
    require(kernel, "kernel");
    require(options, "options");
    if (kernel->value.ndim() != 4) {
      throw tensorial::ConfigError("kernel must be 4-D [d, d, P, Q], got " + tensorial::shape_string(kernel->value.shape()));
    }
    const tensorial::ConvKernel k(kernel->value);
    const bool has_energy = options->energy != 0.0;
    if (has_energy && !(options->energy > 0.0 && options->energy <= 1.0)) {
      throw tensorial::ConfigError("energy must lie in (0, 1]");
    }

    tensorial::DecompositionReport dr;
    std::size_t factored = 0;
    std::optional<tensorial::FactorSet> bundle;
    if (options->method == TNSR_KERNEL_TUCKER2) {
      std::size_t rp = options->rank_p, rq = options->rank_q;
      if (has_energy) {
        std::tie(rp, rq) = tensorial::select_ranks_energy(k, options->energy);
      } else if (rp == 0 || rq == 0) {
        throw tensorial::ConfigError("tucker2 needs --rank-p and --rank-q, or --energy");
      }
      auto [f, rep] = tensorial::tucker2_factorize(k, rp, rq);
      dr = std::move(rep);
      factored = f.parameter_count();
      bundle = std::move(f);
    } else if (options->method == TNSR_KERNEL_TT) {
      std::array<std::size_t, 3> ranks{options->ranks[0], options->ranks[1], options->ranks[2]};
      const bool has_ranks = ranks[0] && ranks[1] && ranks[2];
      if (!has_ranks && !has_energy) throw tensorial::ConfigError("tt needs --ranks or --energy");
      if (!has_ranks) ranks = {k.parameter_count(), k.parameter_count(), k.parameter_count()};
      auto [f, rep] = tensorial::tt_factorize_kernel(k, ranks, has_energy ? options->energy : 1.0);
      dr = std::move(rep);
      factored = f.parameter_count();
      bundle = std::move(f.train);
    } else {
      throw tensorial::ConfigError("unknown kernel method code");
    }

    if (bundle_path) tensorial::write_factor_bundle(bundle_path, *bundle);
    if (report) {
      tnsr_kernel_report r{};
      r.relative_error = dr.relative_error;
      r.compression_ratio = dr.compression_ratio;
      r.dense_parameters = k.parameter_count();
      r.factored_parameters = factored;
      copy_ranks(dr.ranks_used, r.ranks_used, &r.n_ranks);
      *report = r;
    }
  });
}

tnsr_status tnsr_bundle_reconstruct(const char* bundle_path, tnsr_tensor** out) {
  return guarded([&] {
    require(bundle_path, "bundle_path");
    require(out, "out");
    *out = wrap(tensorial::reconstruct(tensorial::read_factor_bundle(bundle_path)));
  });
}

tnsr_status tnsr_search_run(const char* manifest_path, size_t parallel, char** summary_json) {
  return guarded([&] {
    require(manifest_path, "manifest_path");
    if (parallel == 0) throw tensorial::ConfigError("parallel must be >= 1");
    const auto manifest = tensorial::load_manifest(manifest_path);
    const auto summary = tensorial::run_manifest(manifest, parallel);
    if (summary_json) {
      const nlohmann::json doc{{"trials", summary.trials},
                               {"failed", summary.failed},
                               {"log", summary.log_path.string()},
                               {"report", summary.report_path.string()},
                               {"top", tensorial::to_json(summary.top)}};
      const std::string text = doc.dump();
      char* buf = static_cast<char*>(std::malloc(text.size() + 1));
      if (!buf) throw std::bad_alloc();
      std::memcpy(buf, text.c_str(), text.size() + 1);
      *summary_json = buf;
    }
  });
}

void tnsr_string_free(char* s) { std::free(s); }

}  // extern "C"
