#include "robarch/snapshot.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "robarch/errors.hpp"

namespace robarch {

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.write(reinterpret_cast<const char*>(bits.data()), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bits{};
  if (!in.read(reinterpret_cast<char*>(bits.data()), sizeof(T))) throw FormatError("truncated weights snapshot");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_snapshot(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kSnapshotMagic, sizeof(kSnapshotMagic));
  put<std::uint64_t>(out, tensors.size());
  for (const auto& t : tensors) {
    if (t.values.size() != shape_numel(t.shape)) throw ShapeError("snapshot tensor '" + t.name + "' size mismatch");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    for (double v : t.values) put<double>(out, v);
  }
  if (!out) throw FormatError("failed writing weights snapshot");
}

std::vector<NamedTensor> read_snapshot(std::istream& in) {
  char magic[sizeof(kSnapshotMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kSnapshotMagic, sizeof(magic)) != 0)
    throw FormatError("not a weights snapshot (bad magic header)");
  const auto count = get<std::uint64_t>(in);
  std::vector<NamedTensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = get<std::uint32_t>(in);
    t.name.resize(len);
    if (!in.read(t.name.data(), len)) throw FormatError("truncated weights snapshot");
    const auto rank = get<std::uint32_t>(in);
    if (rank > 8) throw FormatError("snapshot tensor '" + t.name + "' has implausible rank");
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(in)));
    t.values.resize(shape_numel(t.shape));
    for (double& v : t.values) v = get<double>(in);
    out.push_back(std::move(t));
  }
  return out;
}

void save_snapshot(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_snapshot(out, tensors);
}

std::vector<NamedTensor> load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_snapshot(in);
}

}  // namespace robarch
