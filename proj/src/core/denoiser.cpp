#include "tensorial/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tensorial/errors.hpp"
#include "tensorial/rng.hpp"

namespace tensorial {

std::string_view to_string(Method m) { return m == Method::tucker ? "tucker" : "tt"; }

Method parse_method(std::string_view name) {
  if (name == "tucker") return Method::tucker;
  if (name == "tt") return Method::tt;
  throw ConfigError("unknown decomposition method '" + std::string(name) + "' (expected tucker or tt)");
}

Norm parse_norm(std::string_view name) {
  if (name == "linf" || name == "l_inf") return Norm::linf;
  if (name == "l2") return Norm::l2;
  throw ConfigError("unknown norm '" + std::string(name) + "' (expected linf or l2)");
}

std::vector<std::size_t> requested_ranks(const DenoiserConfig& cfg, std::size_t channels) {
  if (cfg.rank_k == 0 || cfg.rank_p == 0) throw ConfigError("rank_k and rank_p must be >= 1");
  if (cfg.method == Method::tucker) return {cfg.rank_k, channels, cfg.rank_p, cfg.rank_p};
  return {1, cfg.rank_k, cfg.rank_p, channels, 1};
}

DenoiseResult denoise(const Tensor& image, const DenoiserConfig& cfg) {
  if (image.ndim() != 3) throw ShapeError("image must have shape [C, W, H], got " + shape_string(image.shape()));
  for (double v : image.data())
    if (!std::isfinite(v)) throw NumericError("image contains a non-finite value");
  const std::size_t channels = image.dim(0);
  validate(cfg.patch, image.dim(1), image.dim(2));

  // Coverage is checked before any decomposition work.
  const CoverageMap coverage = coverage_map(cfg.patch, channels, image.dim(1), image.dim(2));
  for (std::size_t w = 0; w < coverage.width; ++w)
    for (std::size_t h = 0; h < coverage.height; ++h)
      if (coverage(w, h) == 0) throw CoverageError(w, h);

  const PatchTensor patches = extract_patches(image, cfg.patch);
  const Tensor contracted = contract_grid(patches);
  const auto requested = requested_ranks(cfg, channels);

  DenoiseResult result;
  Tensor approx;
  if (cfg.method == Method::tucker) {
    result.decomposed_shape = contracted.shape();
    auto ranks = clamp_tucker_ranks(requested, contracted.shape());
    ranks[1] = channels;
    if (cfg.hosvd_only) {
      TuckerFactors f = tucker_hosvd(contracted, ranks);
      result.report = tucker_report(contracted, f, 0);
      approx = tucker_reconstruct(f);
    } else {
      auto [f, report] = tucker_hooi(contracted, ranks, cfg.hooi);
      result.report = std::move(report);
      approx = tucker_reconstruct(f);
    }
  } else {
    const Tensor permuted = permute_axes(contracted, {0, 2, 3, 1});
    result.decomposed_shape = permuted.shape();
    auto [f, report] = tt_svd(permuted, requested);
    result.report = std::move(report);
    approx = permute_axes(tt_reconstruct(f), {0, 3, 1, 2});
  }

  Tensor merged = merge_patches(expand_grid(approx, patches));
  for (double& v : merged.data()) v = std::clamp(v, 0.0, 1.0);
  result.image = std::move(merged);
  return result;
}

PerturbationResult perturb(const Tensor& image, const PerturbationSpec& spec) {
  if (!(spec.epsilon > 0.0 && spec.epsilon <= 1.0)) throw ConfigError("epsilon must lie in (0, 1]");
  SplitMix64 rng(spec.seed);
  std::vector<double> delta(image.size());
  if (spec.norm == Norm::linf) {
    for (double& d : delta) d = (rng.next() >> 63) ? -spec.epsilon : spec.epsilon;
  } else {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& d : delta) {
        d = rng.normal();
        norm += d * d;
      }
      norm = std::sqrt(norm);
    } while (norm == 0.0);
    for (double& d : delta) d *= spec.epsilon / norm;
  }

  PerturbationResult out{image, 0.0, 0.0};
  double l2 = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    out.preclip_linf = std::max(out.preclip_linf, std::abs(delta[i]));
    l2 += delta[i] * delta[i];
    out.image[i] = std::clamp(image[i] + delta[i], 0.0, 1.0);
  }
  out.preclip_l2 = std::sqrt(l2);
  return out;
}

FidelityReport fidelity(const Tensor& reference, const Tensor& candidate) {
  if (reference.shape() != candidate.shape()) {
    throw ShapeError("fidelity needs equal shapes: " + shape_string(reference.shape()) + " vs " +
                     shape_string(candidate.shape()));
  }
  FidelityReport r;
  double sum = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = candidate[i] - reference[i];
    sum += d * d;
    r.linf_distance = std::max(r.linf_distance, std::abs(d));
  }
  r.l2_distance = std::sqrt(sum);
  r.mse = sum / static_cast<double>(reference.size());
  r.psnr_db = r.mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / r.mse);
  return r;
}

}  // namespace tensorial
