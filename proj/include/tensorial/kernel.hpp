#pragma once

#include <array>
#include <cstddef>
#include <utility>

#include "tensorial/decomposition.hpp"
#include "tensorial/tensor.hpp"

namespace tensorial {

/// Convolution weights laid out [d, d, P_in, Q_out].
class ConvKernel {
 public:
  explicit ConvKernel(Tensor weights);

  const Tensor& weights() const noexcept { return weights_; }
  std::size_t filter_size() const { return weights_.dim(0); }
  std::size_t in_channels() const { return weights_.dim(2); }
  std::size_t out_channels() const { return weights_.dim(3); }
  std::size_t parameter_count() const { return weights_.size(); }

 private:
  Tensor weights_;
};

/// Channel-mode Tucker: S ≈ core ×₂ factor_in ×₃ factor_out, spatial modes kept.
struct Tucker2Kernel {
  Tensor core;        // [d, d, R_p, R_q]
  Matrix factor_in;   // P × R_p
  Matrix factor_out;  // Q × R_q

  /// d²·R_p·R_q + P·R_p + Q·R_q
  std::size_t parameter_count() const;
};

/// Four TT cores over axis order (i, j, p, q), stored as 3-way tensors
/// [1, d, R1], [R1, d, R2], [R2, P, R3], [R3, Q, 1].
struct TTKernel {
  TTFactors train;

  std::array<std::size_t, 3> ranks() const { return {train.ranks[1], train.ranks[2], train.ranks[3]}; }
  std::size_t parameter_count() const { return train.parameter_count(); }
};

std::pair<Tucker2Kernel, DecompositionReport> tucker2_factorize(const ConvKernel& k, std::size_t rank_p,
                                                                std::size_t rank_q);

std::pair<TTKernel, DecompositionReport> tt_factorize_kernel(const ConvKernel& k, std::array<std::size_t, 3> ranks,
                                                             double energy_fraction = 1.0);

/// Direct evaluation of Σ_{r_p, r_q} G[i,j,r_p,r_q] A^P[p,r_p] A^Q[q,r_q].
ConvKernel reconstruct_kernel(const Tucker2Kernel& f);
/// Direct evaluation of Σ_{r1,r2,r3} G1[i,r1] G2[r1,j,r2] G3[r2,p,r3] G4[r3,q].
ConvKernel reconstruct_kernel(const TTKernel& f);

/// Smallest (R_p, R_q) whose retained mode-2 / mode-3 squared singular values
/// reach `energy_fraction` of the total.
std::pair<std::size_t, std::size_t> select_ranks_energy(const ConvKernel& k, double energy_fraction);

}  // namespace tensorial
