#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "tensorial/tensor.hpp"

namespace tensorial {

/// t ≈ core ×₀ factors[0] ×₁ factors[1] … with orthonormal factor columns.
struct TuckerFactors {
  Tensor core;                  // [R_0, ..., R_{N-1}]
  std::vector<Matrix> factors;  // factors[n] is I_n × R_n
  Shape source_shape;

  std::vector<std::size_t> ranks() const { return core.shape(); }
  std::size_t parameter_count() const;
};

/// Chain of 3-way cores; cores[n] has shape [ranks[n], I_n, ranks[n+1]] and
/// ranks.front() == ranks.back() == 1.
struct TTFactors {
  std::vector<Tensor> cores;
  std::vector<std::size_t> ranks;

  std::size_t parameter_count() const;
};

struct DecompositionReport {
  double relative_error = 0.0;
  std::size_t iterations = 0;
  std::vector<std::size_t> ranks_used;
  double compression_ratio = 1.0;
  /// TT-SVD only: Frobenius norm of what each truncation step discarded.
  std::vector<double> truncation_residuals;
};

struct HooiOptions {
  std::size_t max_iters = 25;
  double tol = 1e-6;
};

/// R_n <- min(R_n, I_n). Throws ArgumentError on a length mismatch or zero rank.
std::vector<std::size_t> clamp_tucker_ranks(std::span<const std::size_t> requested, std::span<const std::size_t> shape);

/// Clamps TT ranks to min(r_n, ∏_{k<=n} I_k, ∏_{k>n} I_k). Accepts either the
/// N−1 interior ranks or the full chain [1, r_1, …, r_{N−1}, 1]; the result has
/// the same form as the input.
std::vector<std::size_t> clamp_tt_ranks(std::span<const std::size_t> requested, std::span<const std::size_t> shape);

double relative_error(const Tensor& reference, const Tensor& approximation);

TuckerFactors tucker_hosvd(const Tensor& t, std::span<const std::size_t> ranks);

/// Alternating refinement seeded by HOSVD. Keeps the best iterate, so the
/// returned error never exceeds the HOSVD error.
std::pair<TuckerFactors, DecompositionReport> tucker_hooi(const Tensor& t, std::span<const std::size_t> ranks,
                                                          const HooiOptions& options = {});

Tensor tucker_reconstruct(const TuckerFactors& f);

DecompositionReport tucker_report(const Tensor& source, const TuckerFactors& f, std::size_t iterations);

/// Left-to-right TT-SVD. `max_ranks` holds the N−1 interior ranks (or the full
/// chain). With energy_fraction < 1 each step additionally keeps the fewest
/// singular values that retain that fraction of the step's squared norm.
std::pair<TTFactors, DecompositionReport> tt_svd(const Tensor& t, std::span<const std::size_t> max_ranks,
                                                 double energy_fraction = 1.0);

Tensor tt_reconstruct(const TTFactors& f);

}  // namespace tensorial
