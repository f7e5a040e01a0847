#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "tensorial/decomposition.hpp"
#include "tensorial/kernel.hpp"
#include "tensorial/tensor.hpp"

namespace tensorial {

// ---------------------------------------------------------------------------
// Tensor container
//
//   offset  size      field
//   0       4         magic "TNSR"
//   4       4         version, u32 LE (= 1)
//   8       1         dtype: 1 = float32, 2 = float64
//   9       1         ndim (>= 1)
//   10      8·ndim    dims, u64 LE each
//   ...     payload   row-major scalars, LE
// ---------------------------------------------------------------------------

enum class DType : std::uint8_t { float32 = 1, float64 = 2 };

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kContainerFixedHeader = 10;

std::vector<std::uint8_t> encode_tensor(const Tensor& t, DType dtype = DType::float64);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::float64);
Tensor read_tensor(const std::filesystem::path& path);

/// True when the file starts with the container magic.
bool is_tensor_container(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// PNG, 8-bit grayscale or RGB, as [C, rows, cols] in [0, 1].
// ---------------------------------------------------------------------------

Tensor read_png(const std::filesystem::path& path);
/// Quantizes with round-half-up: byte = floor(clamp(v, 0, 1)·255 + 0.5).
void write_png(const std::filesystem::path& path, const Tensor& image);

/// PNG or tensor container, chosen by content.
Tensor read_image(const std::filesystem::path& path);
/// PNG when the extension is .png, otherwise a float64 container.
void write_image(const std::filesystem::path& path, const Tensor& image);

// ---------------------------------------------------------------------------
// CIFAR binary batches
// ---------------------------------------------------------------------------

enum class CifarVariant { cifar10, cifar100 };

CifarVariant parse_cifar_variant(const std::string& name);

struct LabeledBatch {
  Tensor images;  // [B, C, W, H] in [0, 1]
  std::vector<std::int32_t> labels;
  std::size_t num_classes = 10;

  std::size_t size() const { return labels.size(); }
  Tensor image(std::size_t index) const;
};

/// Checks shape/label agreement and label range.
void validate(const LabeledBatch& batch);

/// cifar10 record: label byte + 3072 pixel bytes (R, G, B planes, row-major).
/// cifar100 record: coarse byte, fine byte + 3072 pixel bytes; the fine label
/// is used.
LabeledBatch load_cifar(const std::filesystem::path& path, CifarVariant variant);
/// Writes records in the same layout (coarse label written as 0 for cifar100).
void save_cifar(const std::filesystem::path& path, const LabeledBatch& batch, CifarVariant variant);

// ---------------------------------------------------------------------------
// Factor bundles: a JSON index plus one container per factor.
// ---------------------------------------------------------------------------

using FactorSet = std::variant<TuckerFactors, TTFactors, Tucker2Kernel>;

/// Writes `<index>` and `<stem>.<role>.tnsr` files beside it. Roles:
/// tucker: core, factor_0.., tt: core_0.., tucker2: core, factor_p, factor_q.
void write_factor_bundle(const std::filesystem::path& index, const FactorSet& factors);
FactorSet read_factor_bundle(const std::filesystem::path& index);

/// Dense tensor represented by a bundle.
Tensor reconstruct(const FactorSet& factors);

}  // namespace tensorial
