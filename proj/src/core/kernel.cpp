#include "tensorial/kernel.hpp"

#include <cmath>

#include "tensorial/errors.hpp"
#include "tensorial/linalg.hpp"

namespace tensorial {

ConvKernel::ConvKernel(Tensor weights) : weights_(std::move(weights)) {
  if (weights_.ndim() != 4) {
    throw ShapeError("convolution kernel must be 4-D [d, d, P, Q], got " + shape_string(weights_.shape()));
  }
  if (weights_.dim(0) != weights_.dim(1)) throw ShapeError("convolution kernel spatial dims must be equal");
}

std::size_t Tucker2Kernel::parameter_count() const {
  return core.size() + factor_in.rows() * factor_in.cols() + factor_out.rows() * factor_out.cols();
}

std::pair<Tucker2Kernel, DecompositionReport> tucker2_factorize(const ConvKernel& k, std::size_t rank_p,
                                                                std::size_t rank_q) {
  const Tensor& s = k.weights();
  if (rank_p < 1 || rank_p > k.in_channels()) {
    throw ArgumentError("R_p must lie in [1, " + std::to_string(k.in_channels()) + "], got " + std::to_string(rank_p));
  }
  if (rank_q < 1 || rank_q > k.out_channels()) {
    throw ArgumentError("R_q must lie in [1, " + std::to_string(k.out_channels()) + "], got " +
                        std::to_string(rank_q));
  }
  const std::size_t d = k.filter_size();
  // HOSVD over the two channel modes only.
  TuckerFactors t = tucker_hosvd(s, std::vector<std::size_t>{d, d, rank_p, rank_q});
  Tucker2Kernel out;
  out.factor_in = std::move(t.factors[2]);
  out.factor_out = std::move(t.factors[3]);
  out.core = n_mode_product(n_mode_product(s, transpose(out.factor_in), 2), transpose(out.factor_out), 3);

  DecompositionReport report;
  report.relative_error = relative_error(s, reconstruct_kernel(out).weights());
  report.iterations = 1;
  report.ranks_used = {rank_p, rank_q};
  report.compression_ratio = static_cast<double>(k.parameter_count()) / static_cast<double>(out.parameter_count());
  return {std::move(out), std::move(report)};
}

std::pair<TTKernel, DecompositionReport> tt_factorize_kernel(const ConvKernel& k, std::array<std::size_t, 3> ranks,
                                                             double energy_fraction) {
  auto [train, report] = tt_svd(k.weights(), ranks, energy_fraction);
  return {TTKernel{std::move(train)}, std::move(report)};
}

ConvKernel reconstruct_kernel(const Tucker2Kernel& f) {
  const Tensor& g = f.core;
  if (g.ndim() != 4 || g.dim(0) != g.dim(1)) throw ShapeError("Tucker-2 core must be [d, d, R_p, R_q]");
  const std::size_t d = g.dim(0), rp = g.dim(2), rq = g.dim(3);
  if (f.factor_in.cols() != rp || f.factor_out.cols() != rq) {
    throw ShapeError("Tucker-2 factor ranks do not match the core");
  }
  const std::size_t p_in = f.factor_in.rows(), q_out = f.factor_out.rows();
  Tensor out({d, d, p_in, q_out});
  const auto core = g.data();
  auto dst = out.data();
  std::vector<double> partial(q_out);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t p = 0; p < p_in; ++p) {
        std::fill(partial.begin(), partial.end(), 0.0);
        for (std::size_t a = 0; a < rp; ++a) {
          const double ap = f.factor_in(p, a);
          const double* grow = &core[((i * d + j) * rp + a) * rq];
          for (std::size_t b = 0; b < rq; ++b) {
            const double gp = grow[b] * ap;
            for (std::size_t q = 0; q < q_out; ++q) partial[q] += gp * f.factor_out(q, b);
          }
        }
        std::copy(partial.begin(), partial.end(), &dst[((i * d + j) * p_in + p) * q_out]);
      }
  return ConvKernel(std::move(out));
}

ConvKernel reconstruct_kernel(const TTKernel& f) {
  const auto& c = f.train.cores;
  if (c.size() != 4) throw ShapeError("a TT kernel has exactly four cores");
  for (std::size_t n = 0; n < 4; ++n) {
    if (c[n].ndim() != 3) throw ShapeError("TT kernel cores must be 3-way");
    if (n > 0 && c[n].dim(0) != c[n - 1].dim(2)) throw ShapeError("TT kernel rank chain is broken");
  }
  if (c[0].dim(0) != 1 || c[3].dim(2) != 1) throw ShapeError("TT kernel boundary ranks must be 1");
  const std::size_t d = c[0].dim(1), r1 = c[0].dim(2), r2 = c[1].dim(2), r3 = c[2].dim(2);
  const std::size_t p_in = c[2].dim(1), q_out = c[3].dim(1);
  if (c[1].dim(1) != d) throw ShapeError("TT kernel spatial cores differ in size");

  const auto g1 = c[0].data(), g2 = c[1].data(), g3 = c[2].data(), g4 = c[3].data();
  Tensor out({d, d, p_in, q_out});
  auto dst = out.data();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t p = 0; p < p_in; ++p)
        for (std::size_t q = 0; q < q_out; ++q) {
          double sum = 0.0;
          for (std::size_t a = 0; a < r1; ++a) {
            const double x1 = g1[i * r1 + a];
            for (std::size_t b = 0; b < r2; ++b) {
              const double x12 = x1 * g2[(a * d + j) * r2 + b];
              for (std::size_t e = 0; e < r3; ++e) sum += x12 * g3[(b * p_in + p) * r3 + e] * g4[e * q_out + q];
            }
          }
          dst[((i * d + j) * p_in + p) * q_out + q] = sum;
        }
  return ConvKernel(std::move(out));
}

std::pair<std::size_t, std::size_t> select_ranks_energy(const ConvKernel& k, double energy_fraction) {
  const auto sp = svd(matricize(k.weights(), 2)).singular_values;
  const auto sq = svd(matricize(k.weights(), 3)).singular_values;
  return {std::min(energy_rank(sp, energy_fraction), k.in_channels()),
          std::min(energy_rank(sq, energy_fraction), k.out_channels())};
}

}  // namespace tensorial
