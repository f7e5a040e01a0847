#include "tensorial/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <map>

#include "json.hpp"

#include "tensorial/errors.hpp"

namespace tensorial {

namespace {

using json = nlohmann::json;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path.string() + "'");
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
  return std::bit_cast<T>(bits);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t, DType dtype) {
  if (t.ndim() > 255) throw ShapeError("tensor container supports at most 255 axes");
  std::vector<std::uint8_t> out;
  const std::size_t width = dtype == DType::float32 ? 4 : 8;
  out.reserve(kContainerFixedHeader + 8 * t.ndim() + width * t.size());
  for (char c : {'T', 'N', 'S', 'R'}) out.push_back(static_cast<std::uint8_t>(c));
  put_le<std::uint32_t>(out, kContainerVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(t.ndim()));
  for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
  if (dtype == DType::float32) {
    for (double v : t.data()) put_le<float>(out, static_cast<float>(v));
  } else {
    for (double v : t.data()) put_le<double>(out, v);
  }
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw FormatError("truncated container: missing magic", bytes.size());
  if (std::memcmp(bytes.data(), "TNSR", 4) != 0) throw FormatError("bad magic, expected \"TNSR\"", 0);
  if (bytes.size() < kContainerFixedHeader) throw FormatError("truncated container header", bytes.size());
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version), 4);
  }
  const std::uint8_t dtype = bytes[8];
  if (dtype != 1 && dtype != 2) throw FormatError("unknown dtype code " + std::to_string(dtype), 8);
  const std::size_t ndim = bytes[9];
  if (ndim == 0) throw FormatError("container declares zero axes", 9);
  const std::size_t header = kContainerFixedHeader + 8 * ndim;
  if (bytes.size() < header) throw FormatError("truncated container dims", bytes.size());

  Shape shape(ndim);
  std::size_t count = 1;
  for (std::size_t k = 0; k < ndim; ++k) {
    const auto d = get_le<std::uint64_t>(bytes.data() + kContainerFixedHeader + 8 * k);
    if (d == 0) throw FormatError("zero extent on axis " + std::to_string(k), kContainerFixedHeader + 8 * k);
    if (count > (std::size_t{1} << 40) / d) throw FormatError("declared tensor is too large", kContainerFixedHeader + 8 * k);
    shape[k] = static_cast<std::size_t>(d);
    count *= shape[k];
  }
  const std::size_t width = dtype == 1 ? 4 : 8;
  const std::size_t expected = header + count * width;
  if (bytes.size() < expected) throw FormatError("truncated container payload", bytes.size());
  if (bytes.size() > expected) throw FormatError("trailing bytes after container payload", expected);

  std::vector<double> data(count);
  const std::uint8_t* p = bytes.data() + header;
  if (dtype == 1) {
    for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<double>(get_le<float>(p + 4 * i));
  } else {
    for (std::size_t i = 0; i < count; ++i) data[i] = get_le<double>(p + 8 * i);
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype) {
  write_file(path, encode_tensor(t, dtype));
}

Tensor read_tensor(const std::filesystem::path& path) {
  try {
    return decode_tensor(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': ", e);
  }
}

bool is_tensor_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  return in.read(magic, 4) && std::memcmp(magic, "TNSR", 4) == 0;
}

// --- PNG ------------------------------------------------------------------

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  auto* msg = static_cast<std::string*>(png_get_error_ptr(png));
  *msg = message;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Tensor read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw FormatError("cannot open '" + path.string() + "' for reading");
  std::uint8_t sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("'" + path.string() + "' is not a PNG file", 0);
  }

  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("libpng initialisation failed");
  }

  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("'" + path.string() + "': " + message);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color, nullptr, nullptr, nullptr);
  if (bit_depth != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("'" + path.string() + "': unsupported PNG (bit depth " + std::to_string(bit_depth) +
                      ", color type " + std::to_string(color) + "); expected 8-bit grayscale or RGB");
  }
  const std::size_t channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t stride = width * channels;
  pixels.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = pixels.data() + r * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out({channels, height, width});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t col = 0; col < width; ++col)
        out.at({c, r, col}) = pixels[r * stride + col * channels + c] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  if (image.ndim() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("PNG output needs shape [1|3, rows, cols], got " + shape_string(image.shape()));
  }
  const std::size_t channels = image.dim(0), height = image.dim(1), width = image.dim(2);
  const std::size_t stride = width * channels;
  std::vector<std::uint8_t> pixels(stride * height);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t col = 0; col < width; ++col) {
        const double v = std::clamp(image.at({c, r, col}), 0.0, 1.0);
        pixels[r * stride + col * channels + c] = static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
      }

  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw FormatError("cannot open '" + path.string() + "' for writing");
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw FormatError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(height);
  for (std::size_t r = 0; r < height; ++r) rows[r] = pixels.data() + r * stride;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("'" + path.string() + "': " + message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FormatError("input file '" + path.string() + "' does not exist");
  if (is_tensor_container(path)) {
    Tensor t = read_tensor(path);
    if (t.ndim() != 3) throw FormatError("'" + path.string() + "' must hold a [C, W, H] image");
    return t;
  }
  return read_png(path);
}

void write_image(const std::filesystem::path& path, const Tensor& image) {
  if (path.extension() == ".png") {
    write_png(path, image);
  } else {
    write_tensor(path, image);
  }
}

// --- CIFAR ----------------------------------------------------------------

namespace {
constexpr std::size_t kCifarPixels = 3 * 32 * 32;
}

CifarVariant parse_cifar_variant(const std::string& name) {
  if (name == "cifar10") return CifarVariant::cifar10;
  if (name == "cifar100") return CifarVariant::cifar100;
  throw ConfigError("unknown CIFAR variant '" + name + "'");
}

Tensor LabeledBatch::image(std::size_t index) const {
  const auto& s = images.shape();
  const std::size_t plane = s[1] * s[2] * s[3];
  const auto first = images.values().begin() + static_cast<std::ptrdiff_t>(index * plane);
  return Tensor({s[1], s[2], s[3]}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(plane)));
}

void validate(const LabeledBatch& batch) {
  if (batch.images.ndim() != 4) throw ShapeError("batch images must be [B, C, W, H]");
  if (batch.images.dim(0) != batch.labels.size()) {
    throw ShapeError("batch has " + std::to_string(batch.images.dim(0)) + " images but " +
                     std::to_string(batch.labels.size()) + " labels");
  }
  for (auto l : batch.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= batch.num_classes) {
      throw ArgumentError("label " + std::to_string(l) + " outside [0, " + std::to_string(batch.num_classes) + ")");
    }
  }
}

LabeledBatch load_cifar(const std::filesystem::path& path, CifarVariant variant) {
  const auto bytes = read_file(path);
  const std::size_t label_bytes = variant == CifarVariant::cifar10 ? 1 : 2;
  const std::size_t record = label_bytes + kCifarPixels;
  if (bytes.empty()) throw FormatError("'" + path.string() + "' holds no CIFAR records", 0);
  if (bytes.size() % record != 0) {
    throw FormatError("'" + path.string() + "' ends in a truncated CIFAR record", (bytes.size() / record) * record);
  }
  const std::size_t count = bytes.size() / record;
  LabeledBatch batch;
  batch.num_classes = variant == CifarVariant::cifar10 ? 10 : 100;
  batch.labels.resize(count);
  std::vector<double> data(count * kCifarPixels);
  for (std::size_t n = 0; n < count; ++n) {
    const std::uint8_t* rec = bytes.data() + n * record;
    batch.labels[n] = rec[label_bytes - 1];
    if (static_cast<std::size_t>(batch.labels[n]) >= batch.num_classes) {
      throw FormatError("'" + path.string() + "': label " + std::to_string(batch.labels[n]) + " out of range",
                        n * record + label_bytes - 1);
    }
    const std::uint8_t* px = rec + label_bytes;
    for (std::size_t i = 0; i < kCifarPixels; ++i) data[n * kCifarPixels + i] = px[i] / 255.0;
  }
  batch.images = Tensor({count, 3, 32, 32}, std::move(data));
  return batch;
}

void save_cifar(const std::filesystem::path& path, const LabeledBatch& batch, CifarVariant variant) {
  validate(batch);
  if (batch.images.shape() != Shape{batch.size(), 3, 32, 32}) throw ShapeError("CIFAR records are [3, 32, 32]");
  std::vector<std::uint8_t> out;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (variant == CifarVariant::cifar100) out.push_back(0);
    out.push_back(static_cast<std::uint8_t>(batch.labels[n]));
    for (std::size_t i = 0; i < kCifarPixels; ++i) {
      const double v = std::clamp(batch.images[n * kCifarPixels + i], 0.0, 1.0);
      out.push_back(static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5)));
    }
  }
  write_file(path, out);
}

// --- Factor bundles -------------------------------------------------------

namespace {

Tensor matrix_tensor(const Matrix& m) {
  return Tensor({m.rows(), m.cols()}, std::vector<double>(m.data().begin(), m.data().end()));
}

Matrix tensor_matrix(const Tensor& t, const std::string& role) {
  if (t.ndim() != 2) throw FormatError("bundle entry '" + role + "' must be a matrix");
  return Matrix(t.dim(0), t.dim(1), t.values());
}

std::filesystem::path entry_path(const std::filesystem::path& index, const std::string& role) {
  return index.parent_path() / (index.stem().string() + "." + role + ".tnsr");
}

}  // namespace

void write_factor_bundle(const std::filesystem::path& index, const FactorSet& factors) {
  json doc;
  std::vector<std::pair<std::string, Tensor>> entries;
  if (const auto* t = std::get_if<TuckerFactors>(&factors)) {
    doc["method"] = "tucker";
    doc["source_shape"] = t->source_shape;
    doc["ranks"] = t->ranks();
    entries.emplace_back("core", t->core);
    for (std::size_t n = 0; n < t->factors.size(); ++n)
      entries.emplace_back("factor_" + std::to_string(n), matrix_tensor(t->factors[n]));
  } else if (const auto* tt = std::get_if<TTFactors>(&factors)) {
    doc["method"] = "tt";
    Shape source;
    for (const auto& c : tt->cores) source.push_back(c.dim(1));
    doc["source_shape"] = source;
    doc["ranks"] = tt->ranks;
    for (std::size_t n = 0; n < tt->cores.size(); ++n) entries.emplace_back("core_" + std::to_string(n), tt->cores[n]);
  } else {
    const auto& k = std::get<Tucker2Kernel>(factors);
    doc["method"] = "tucker2";
    doc["source_shape"] = Shape{k.core.dim(0), k.core.dim(1), k.factor_in.rows(), k.factor_out.rows()};
    doc["ranks"] = std::vector<std::size_t>{k.factor_in.cols(), k.factor_out.cols()};
    entries.emplace_back("core", k.core);
    entries.emplace_back("factor_p", matrix_tensor(k.factor_in));
    entries.emplace_back("factor_q", matrix_tensor(k.factor_out));
  }
  doc["entries"] = json::array();
  for (const auto& [role, tensor] : entries) {
    const auto file = entry_path(index, role);
    write_tensor(file, tensor);
    doc["entries"].push_back({{"role", role}, {"file", file.filename().string()}});
  }
  std::ofstream out(index, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + index.string() + "' for writing");
  out << doc.dump(2) << '\n';
}

FactorSet read_factor_bundle(const std::filesystem::path& index) {
  json doc;
  try {
    std::ifstream in(index);
    if (!in) throw FormatError("cannot open '" + index.string() + "' for reading");
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("'" + index.string() + "': " + e.what());
  }
  std::map<std::string, Tensor> roles;
  try {
    for (const auto& e : doc.at("entries")) {
      const auto role = e.at("role").get<std::string>();
      roles.emplace(role, read_tensor(index.parent_path() / e.at("file").get<std::string>()));
    }
    const auto method = doc.at("method").get<std::string>();
    const auto source = doc.at("source_shape").get<Shape>();
    auto take = [&](const std::string& role) {
      auto it = roles.find(role);
      if (it == roles.end()) throw FormatError("bundle '" + index.string() + "' lacks role '" + role + "'");
      Tensor t = std::move(it->second);
      roles.erase(it);
      return t;
    };
    FactorSet result;
    if (method == "tucker") {
      TuckerFactors f;
      f.core = take("core");
      f.source_shape = source;
      for (std::size_t n = 0; n < source.size(); ++n) {
        const auto role = "factor_" + std::to_string(n);
        f.factors.push_back(tensor_matrix(take(role), role));
      }
      tucker_reconstruct(f);  // shape check
      result = std::move(f);
    } else if (method == "tt") {
      TTFactors f;
      f.ranks = doc.at("ranks").get<std::vector<std::size_t>>();
      for (std::size_t n = 0; n < source.size(); ++n) f.cores.push_back(take("core_" + std::to_string(n)));
      tt_reconstruct(f);
      result = std::move(f);
    } else if (method == "tucker2") {
      Tucker2Kernel k;
      k.core = take("core");
      k.factor_in = tensor_matrix(take("factor_p"), "factor_p");
      k.factor_out = tensor_matrix(take("factor_q"), "factor_q");
      reconstruct_kernel(k);
      result = std::move(k);
    } else {
      throw FormatError("bundle '" + index.string() + "' has unknown method '" + method + "'");
    }
    if (!roles.empty()) {
      throw FormatError("bundle '" + index.string() + "' has unexpected role '" + roles.begin()->first + "'");
    }
    return result;
  } catch (const json::exception& e) {
    throw FormatError("'" + index.string() + "': " + e.what());
  } catch (const ShapeError& e) {
    throw FormatError("'" + index.string() + "': inconsistent factor shapes: " + e.what());
  }
}

Tensor reconstruct(const FactorSet& factors) {
  return std::visit(
      [](const auto& f) -> Tensor {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, TuckerFactors>) return tucker_reconstruct(f);
        else if constexpr (std::is_same_v<T, TTFactors>) return tt_reconstruct(f);
        else return reconstruct_kernel(f).weights();
      },
      factors);
}

}  // namespace tensorial
