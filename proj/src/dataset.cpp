#include "robarch/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "robarch/errors.hpp"
#include "robarch/random.hpp"

namespace robarch {

Tensor Dataset::images(std::span<const std::size_t> indices) const {
  const std::size_t m = image_numel();
  std::vector<double> out(indices.size() * m);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw RangeError("sample index " + std::to_string(indices[i]) + " out of range");
    std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(indices[i] * m), m,
                out.begin() + static_cast<std::ptrdiff_t>(i * m));
  }
  return Tensor::from({indices.size(), channels, height, width}, std::move(out));
}

Tensor Dataset::images(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw RangeError("sample range exceeds the dataset");
  const std::size_t m = image_numel();
  std::vector<double> out(pixels.begin() + static_cast<std::ptrdiff_t>(begin * m),
                          pixels.begin() + static_cast<std::ptrdiff_t>((begin + count) * m));
  return Tensor::from({count, channels, height, width}, std::move(out));
}

std::vector<int> Dataset::labels_at(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw RangeError("sample index " + std::to_string(i) + " out of range");
    out.push_back(labels[i]);
  }
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  if (count == 0 || count >= size()) return *this;
  Dataset out = *this;
  out.labels.resize(count);
  out.pixels.resize(count * image_numel());
  return out;
}

void validate_dataset(const Dataset& data) {
  if (data.pixels.size() != data.size() * data.image_numel())
    throw ShapeError("dataset holds " + std::to_string(data.pixels.size()) + " pixels for " +
                     std::to_string(data.size()) + " images of " + std::to_string(data.image_numel()));
  if (data.class_count < 1) throw RangeError("dataset class count must be positive");
  for (int y : data.labels)
    if (y < 0 || y >= data.class_count)
      throw RangeError("label " + std::to_string(y) + " outside [0, " + std::to_string(data.class_count) + ")");
  for (double p : data.pixels)
    if (!(p >= 0.0 && p <= 1.0)) throw RangeError("pixel value outside [0, 1]");
}

std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix64 = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  mix64(data.channels);
  mix64(data.height);
  mix64(data.width);
  mix64(static_cast<std::uint64_t>(data.class_count));
  for (int y : data.labels) mix64(static_cast<std::uint64_t>(y));
  for (double p : data.pixels) mix64(std::bit_cast<std::uint64_t>(p));
  return h;
}

Dataset read_records(std::istream& in, const RecordLayout& layout, std::size_t limit) {
  if (layout.channels == 0 || layout.height == 0 || layout.width == 0)
    throw ShapeError("record layout must be positive in every dimension");
  if (layout.class_count < 1 || layout.class_count > 256) throw RangeError("record class count must be in [1, 256]");
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::size_t rec = layout.record_bytes();
  if (bytes.size() % rec != 0)
    throw FormatError("data size " + std::to_string(bytes.size()) + " is not a multiple of the " +
                      std::to_string(rec) + "-byte record size");
  std::size_t n = bytes.size() / rec;
  if (limit > 0) n = std::min(n, limit);

  Dataset out;
  out.channels = layout.channels;
  out.height = layout.height;
  out.width = layout.width;
  out.class_count = layout.class_count;
  out.labels.reserve(n);
  out.pixels.reserve(n * (rec - 1));
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* r = bytes.data() + i * rec;
    if (r[0] >= layout.class_count)
      throw FormatError("record " + std::to_string(i) + " has label " + std::to_string(r[0]) + ", expected < " +
                        std::to_string(layout.class_count));
    out.labels.push_back(r[0]);
    for (std::size_t j = 1; j < rec; ++j) out.pixels.push_back(r[j] / 255.0);
  }
  return out;
}

Dataset load_records(const std::string& path, const RecordLayout& layout, std::size_t limit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  Dataset out = read_records(in, layout, limit);
  out.provenance = path;
  return out;
}

Dataset load_cifar10_bin(const std::string& path, std::size_t limit) { return load_records(path, RecordLayout{}, limit); }

void write_records(std::ostream& out, const Dataset& data) {
  validate_dataset(data);
  if (data.class_count > 256) throw RangeError("records hold at most 256 classes");
  const std::size_t m = data.image_numel();
  std::vector<char> rec(1 + m);
  for (std::size_t i = 0; i < data.size(); ++i) {
    rec[0] = static_cast<char>(static_cast<unsigned char>(data.labels[i]));
    for (std::size_t j = 0; j < m; ++j)
      rec[1 + j] = static_cast<char>(static_cast<unsigned char>(std::lround(data.pixels[i * m + j] * 255.0)));
    out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
}

void save_records(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_records(out, data);
  if (!out) throw IoError("failed writing '" + path + "'");
}

Dataset gen_synthetic(std::uint64_t seed, std::size_t n, std::size_t size, int classes,
                      const SyntheticOptions& options) {
  if (classes < 1) throw RangeError("classes must be positive");
  if (n < static_cast<std::size_t>(classes)) throw RangeError("need at least one sample per class");
  if (size == 0 || options.channels == 0) throw ShapeError("image size and channels must be positive");
  if (options.noise < 0.0 || options.blob_sigma <= 0.0) throw ParamError("noise must be >= 0 and blob_sigma > 0");

  const std::size_t c = options.channels, plane = size * size, m = c * plane;
  const auto k_count = static_cast<std::size_t>(classes);
  const double side = static_cast<double>(size);

  // Class means depend only on the class, never on the seed.
  std::vector<double> means(k_count * m);
  Rng texture_rng(0x7e57u);
  for (std::size_t k = 0; k < k_count; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(k_count);
    const double cy = (side - 1.0) / 2.0 + 0.25 * side * std::sin(angle);
    const double cx = (side - 1.0) / 2.0 + 0.25 * side * std::cos(angle);
    const double sigma = options.blob_sigma * side;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          const double blob = options.blob_amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
          const double tex = texture_rng.uniform() < 0.5 ? -1.0 : 1.0;
          means[k * m + ch * plane + y * size + x] = 0.5 + blob + options.texture_amplitude * tex;
        }
  }

  Dataset out;
  out.channels = c;
  out.height = size;
  out.width = size;
  out.class_count = classes;
  out.provenance = "synthetic:seed=" + std::to_string(seed);
  out.labels.resize(n);
  out.pixels.resize(n * m);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % k_count;
    out.labels[i] = static_cast<int>(k);
    for (std::size_t j = 0; j < m; ++j) {
      const double noise = options.noise > 0.0 ? rng.normal(0.0, options.noise) : 0.0;
      out.pixels[i * m + j] = std::clamp(means[k * m + j] + noise, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace robarch
