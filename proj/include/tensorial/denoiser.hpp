#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tensorial/decomposition.hpp"
#include "tensorial/patching.hpp"
#include "tensorial/tensor.hpp"

namespace tensorial {

enum class Method { tucker, tt };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct DenoiserConfig {
  PatchConfig patch;
  Method method = Method::tucker;
  std::size_t rank_k = 4;
  std::size_t rank_p = 4;
  /// Tucker only: skip the HOOI refinement.
  bool hosvd_only = false;
  HooiOptions hooi;

  friend bool operator==(const DenoiserConfig& a, const DenoiserConfig& b) {
    return a.patch == b.patch && a.method == b.method && a.rank_k == b.rank_k && a.rank_p == b.rank_p;
  }
};

/// Rank layout before clamping: Tucker [rank_k, C, rank_p, rank_p] on the
/// contracted [N, C, K, K] tensor; TT chain [1, rank_k, rank_p, C, 1] on the
/// permuted [N, K, K, C] tensor.
std::vector<std::size_t> requested_ranks(const DenoiserConfig& cfg, std::size_t channels);

struct DenoiseResult {
  Tensor image;
  DecompositionReport report;
  /// Shape of the tensor that was decomposed.
  Shape decomposed_shape;
};

/// Extract, contract, low-rank approximate, reconstruct, merge, clip to [0, 1].
DenoiseResult denoise(const Tensor& image, const DenoiserConfig& cfg);

enum class Norm { linf, l2 };

Norm parse_norm(std::string_view name);

struct PerturbationSpec {
  Norm norm = Norm::linf;
  double epsilon = 8.0 / 255.0;
  std::uint64_t seed = 0;
};

struct PerturbationResult {
  Tensor image;
  double preclip_linf = 0.0;
  double preclip_l2 = 0.0;
};

/// Seeded bounded noise. linf: every element moves by ±ε; l2: a Gaussian
/// direction scaled to norm ε. The result is clipped to [0, 1].
PerturbationResult perturb(const Tensor& image, const PerturbationSpec& spec);

struct FidelityReport {
  double mse = 0.0;
  /// +infinity when the inputs are identical.
  double psnr_db = 0.0;
  double linf_distance = 0.0;
  double l2_distance = 0.0;
};

FidelityReport fidelity(const Tensor& reference, const Tensor& candidate);

}  // namespace tensorial
