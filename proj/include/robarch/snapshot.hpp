#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "robarch/tensor.hpp"

namespace robarch {

/// Weights snapshot layout (all integers and floats little-endian):
///
///   magic    8 bytes  "RBARCHW1"
///   count    u64      number of tensors
///   then per tensor:
///     name_len u32, name bytes (UTF-8, no terminator)
///     rank     u32, dims rank x u64
///     payload  product(dims) x f64
inline constexpr char kSnapshotMagic[8] = {'R', 'B', 'A', 'R', 'C', 'H', 'W', '1'};

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;

  bool operator==(const NamedTensor&) const = default;
};

void write_snapshot(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_snapshot(std::istream& in);

void save_snapshot(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_snapshot(const std::string& path);

}  // namespace robarch
