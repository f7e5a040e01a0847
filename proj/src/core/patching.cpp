#include "tensorial/patching.hpp"

#include <algorithm>

#include "tensorial/errors.hpp"

namespace tensorial {

namespace {

// Window positions whose element `k` lands on padded coordinate `x + P`.
// Returned as the grid index, or -1 when no position matches.
long source_position(const PatchConfig& cfg, std::size_t x, std::size_t k, std::size_t grid) {
  const long offset = static_cast<long>(x + cfg.padding) - static_cast<long>(cfg.dilation * k);
  if (offset < 0 || offset % static_cast<long>(cfg.stride) != 0) return -1;
  const long w = offset / static_cast<long>(cfg.stride);
  return w < static_cast<long>(grid) ? w : -1;
}

}  // namespace

std::size_t grid_extent(const PatchConfig& cfg, std::size_t dim) {
  if (cfg.kernel == 0 || cfg.stride == 0 || cfg.dilation == 0) {
    throw ConfigError("kernel, stride and dilation must all be >= 1");
  }
  const std::size_t padded = dim + 2 * cfg.padding;
  if (cfg.extent() > padded) {
    throw ConfigError("patch extent " + std::to_string(cfg.extent()) + " exceeds padded image size " +
                      std::to_string(padded));
  }
  return (padded - cfg.extent()) / cfg.stride + 1;
}

void validate(const PatchConfig& cfg, std::size_t width, std::size_t height) {
  grid_extent(cfg, width);
  grid_extent(cfg, height);
}

bool CoverageMap::fully_covered() const {
  return std::none_of(counts.begin(), counts.end(), [](std::uint32_t c) { return c == 0; });
}

PatchTensor extract_patches(const Tensor& image, const PatchConfig& cfg) {
  if (image.ndim() != 3) throw ShapeError("image must have shape [C, W, H], got " + shape_string(image.shape()));
  const std::size_t channels = image.dim(0);
  const std::size_t width = image.dim(1);
  const std::size_t height = image.dim(2);
  const std::size_t gw = grid_extent(cfg, width);
  const std::size_t gh = grid_extent(cfg, height);
  const std::size_t k = cfg.kernel;

  Tensor out({gw, gh, channels, k, k});
  auto dst = out.data();
  const auto src = image.data();
  std::size_t pos = 0;
  for (std::size_t w = 0; w < gw; ++w)
    for (std::size_t h = 0; h < gh; ++h)
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t k1 = 0; k1 < k; ++k1) {
          const long x = static_cast<long>(cfg.stride * w + cfg.dilation * k1) - static_cast<long>(cfg.padding);
          for (std::size_t k2 = 0; k2 < k; ++k2, ++pos) {
            const long y = static_cast<long>(cfg.stride * h + cfg.dilation * k2) - static_cast<long>(cfg.padding);
            if (x < 0 || y < 0 || x >= static_cast<long>(width) || y >= static_cast<long>(height)) continue;
            dst[pos] = src[(c * width + static_cast<std::size_t>(x)) * height + static_cast<std::size_t>(y)];
          }
        }
  return PatchTensor{std::move(out), cfg, channels, width, height};
}

CoverageMap coverage_map(const PatchConfig& cfg, std::size_t /*channels*/, std::size_t width, std::size_t height) {
  const std::size_t gw = grid_extent(cfg, width);
  const std::size_t gh = grid_extent(cfg, height);

  // The indicator factorizes over the two axes, so count per axis and multiply.
  auto axis_counts = [&](std::size_t dim, std::size_t grid) {
    std::vector<std::uint32_t> counts(dim, 0);
    for (std::size_t x = 0; x < dim; ++x)
      for (std::size_t k = 0; k < cfg.kernel; ++k)
        if (source_position(cfg, x, k, grid) >= 0) ++counts[x];
    return counts;
  };
  const auto cw = axis_counts(width, gw);
  const auto ch = axis_counts(height, gh);

  CoverageMap map{width, height, std::vector<std::uint32_t>(width * height)};
  for (std::size_t w = 0; w < width; ++w)
    for (std::size_t h = 0; h < height; ++h) map.counts[w * height + h] = cw[w] * ch[h];
  return map;
}

Tensor merge_patches(const PatchTensor& pt) {
  const auto& cfg = pt.config;
  const std::size_t k = cfg.kernel;
  const std::size_t gw = grid_extent(cfg, pt.width);
  const std::size_t gh = grid_extent(cfg, pt.height);
  const Shape expected{gw, gh, pt.channels, k, k};
  if (pt.patches.shape() != expected) {
    throw ShapeError("patch tensor shape " + shape_string(pt.patches.shape()) + " does not match geometry " +
                     shape_string(expected));
  }

  const CoverageMap coverage = coverage_map(cfg, pt.channels, pt.width, pt.height);
  for (std::size_t w = 0; w < pt.width; ++w)
    for (std::size_t h = 0; h < pt.height; ++h)
      if (coverage(w, h) == 0) throw CoverageError(w, h);

  Tensor image({pt.channels, pt.width, pt.height});
  auto dst = image.data();
  const auto src = pt.patches.data();
  std::size_t pos = 0;
  for (std::size_t w = 0; w < gw; ++w)
    for (std::size_t h = 0; h < gh; ++h)
      for (std::size_t c = 0; c < pt.channels; ++c)
        for (std::size_t k1 = 0; k1 < k; ++k1) {
          const long x = static_cast<long>(cfg.stride * w + cfg.dilation * k1) - static_cast<long>(cfg.padding);
          for (std::size_t k2 = 0; k2 < k; ++k2, ++pos) {
            const long y = static_cast<long>(cfg.stride * h + cfg.dilation * k2) - static_cast<long>(cfg.padding);
            if (x < 0 || y < 0 || x >= static_cast<long>(pt.width) || y >= static_cast<long>(pt.height)) continue;
            dst[(c * pt.width + static_cast<std::size_t>(x)) * pt.height + static_cast<std::size_t>(y)] += src[pos];
          }
        }

  const std::size_t plane = pt.width * pt.height;
  for (std::size_t c = 0; c < pt.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) dst[c * plane + i] /= static_cast<double>(coverage.counts[i]);
  return image;
}

Tensor contract_grid(const PatchTensor& pt) {
  const auto& s = pt.patches.shape();
  return reshape(pt.patches, {s[0] * s[1], s[2], s[3], s[4]});
}

PatchTensor expand_grid(const Tensor& contracted, const PatchTensor& layout) {
  const auto& s = layout.patches.shape();
  const Shape expected{s[0] * s[1], s[2], s[3], s[4]};
  if (contracted.shape() != expected)
    throw ShapeError("contracted patches " + shape_string(contracted.shape()) + " do not match layout " +
                     shape_string(expected));
  PatchTensor out = layout;
  out.patches = reshape(contracted, s);
  return out;
}

}  // namespace tensorial
