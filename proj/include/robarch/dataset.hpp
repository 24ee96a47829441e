#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "robarch/tensor.hpp"

namespace robarch {

/// Images stored flat in N x C x H x W order with pixels in [0, 1].
struct Dataset {
  std::vector<double> pixels;
  std::vector<int> labels;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  int class_count = 0;
  std::string provenance;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t image_numel() const noexcept { return channels * height * width; }
  Shape image_shape() const { return {channels, height, width}; }

  /// Samples `indices` as an |indices| x C x H x W tensor.
  Tensor images(std::span<const std::size_t> indices) const;
  /// Contiguous range [begin, begin + count).
  Tensor images(std::size_t begin, std::size_t count) const;
  std::vector<int> labels_at(std::span<const std::size_t> indices) const;
  /// First `count` samples (all when count is 0 or exceeds the size).
  Dataset head(std::size_t count) const;
};

/// Throws ShapeError or RangeError when the fields disagree or leave their domains.
void validate_dataset(const Dataset& data);

/// FNV-1a over the dimensions, labels and pixel bytes.
std::uint64_t dataset_hash(const Dataset& data);

/// Fixed-size binary records: one label byte followed by C*H*W pixel bytes,
/// channel planes in order. CIFAR-10 is the 3 x 32 x 32 case.
struct RecordLayout {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  int class_count = 10;

  std::size_t record_bytes() const noexcept { return 1 + channels * height * width; }
};

/// Reads at most `limit` records (0 reads all). Pixels are scaled by 1/255.
/// Throws FormatError when the size is not a multiple of the record size or a
/// label is out of range.
Dataset read_records(std::istream& in, const RecordLayout& layout, std::size_t limit = 0);
Dataset load_records(const std::string& path, const RecordLayout& layout, std::size_t limit = 0);
Dataset load_cifar10_bin(const std::string& path, std::size_t limit = 0);

/// Writes the records format; pixels are quantized to the nearest multiple of 1/255.
void write_records(std::ostream& out, const Dataset& data);
void save_records(const std::string& path, const Dataset& data);

struct SyntheticOptions {
  std::size_t channels = 3;
  /// Per-pixel Gaussian noise standard deviation.
  double noise = 0.1;
  /// Peak height of the class blob above the 0.5 background.
  double blob_amplitude = 0.35;
  /// Blob radius (Gaussian sigma) as a fraction of the image side.
  double blob_sigma = 0.18;
  /// Amplitude of a class-specific +/-1 texture spread over every pixel.
  double texture_amplitude = 0.0;
};

/// Class k is a Gaussian blob at a class-specific position (plus the optional
/// class texture) with additive noise, clipped to [0, 1]. Labels cycle
/// 0, 1, ..., classes-1 so any prefix is balanced.
Dataset gen_synthetic(std::uint64_t seed, std::size_t n, std::size_t size, int classes,
                      const SyntheticOptions& options = {});

}  // namespace robarch
