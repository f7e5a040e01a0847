#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tensorial/tensor.hpp"

namespace tensorial {

/// Sliding-window geometry. Patch (w, h) element (k1, k2) reads the source
/// pixel at (S·w + D·k1 − P, S·h + D·k2 − P); reads outside the image are 0.
struct PatchConfig {
  std::size_t kernel = 8;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;

  std::size_t extent() const noexcept { return dilation * (kernel - 1) + 1; }
  friend bool operator==(const PatchConfig&, const PatchConfig&) = default;
};

/// Number of window positions along an axis of length `dim`:
/// floor((dim + 2P − D·(K−1) − 1) / S) + 1. Throws ConfigError when the
/// window does not fit.
std::size_t grid_extent(const PatchConfig& cfg, std::size_t dim);

/// Checks K, S, D >= 1 and that the dilated window fits the padded image.
void validate(const PatchConfig& cfg, std::size_t width, std::size_t height);

struct PatchTensor {
  Tensor patches;  // [grid_w, grid_h, C, K, K]
  PatchConfig config;
  std::size_t channels = 0;
  std::size_t width = 0;
  std::size_t height = 0;

  std::size_t grid_w() const { return patches.dim(0); }
  std::size_t grid_h() const { return patches.dim(1); }
};

/// Per-pixel count of contributing patch entries, row-major [width, height].
struct CoverageMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint32_t> counts;

  std::uint32_t operator()(std::size_t w, std::size_t h) const { return counts[w * height + h]; }
  bool fully_covered() const;
};

PatchTensor extract_patches(const Tensor& image, const PatchConfig& cfg);

CoverageMap coverage_map(const PatchConfig& cfg, std::size_t channels, std::size_t width, std::size_t height);

/// Folds patches back and averages overlapping contributions. Throws
/// CoverageError for the first pixel no patch reaches.
Tensor merge_patches(const PatchTensor& patches);

/// [grid_w, grid_h, C, K, K] -> [grid_w·grid_h, C, K, K].
Tensor contract_grid(const PatchTensor& patches);

/// Inverse of contract_grid; `layout` supplies geometry and source dims.
PatchTensor expand_grid(const Tensor& contracted, const PatchTensor& layout);

}  // namespace tensorial
