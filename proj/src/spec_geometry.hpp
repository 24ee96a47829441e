#pragma once

#include <cstddef>

#include "robarch/archspec.hpp"

namespace robarch::detail {

inline int stem_kernel(const StemSpec& stem) noexcept {
  switch (stem.kind) {
    case StemKind::ResNet:
    case StemKind::PostponedDownsampling:
      return 7;
    case StemKind::Cifar:
      return 3;
    case StemKind::Patchify:
      return stem.patch;
  }
  return 0;
}

/// Spatial reduction applied by the stem alone (conv stride times pooling).
inline int stem_downsampling(const StemSpec& stem) noexcept {
  switch (stem.kind) {
    case StemKind::ResNet:
      return 4;
    case StemKind::PostponedDownsampling:
      return 2;
    case StemKind::Cifar:
      return 1;
    case StemKind::Patchify:
      return stem.stride;
  }
  return 1;
}

/// Stride of the first block of stage 1. Stems that reduce by less than 4
/// (postponed downsampling, overlapping patchify) defer the remainder to
/// stage 1. Returns 0 when the remainder is not an integer.
inline int first_stage_stride(const StemSpec& stem) noexcept {
  switch (stem.kind) {
    case StemKind::PostponedDownsampling:
      return 2;
    case StemKind::Patchify:
      if (stem.stride >= 4) return 1;
      return 4 % stem.stride == 0 ? 4 / stem.stride : 0;
    default:
      return 1;
  }
}

inline bool stage_downsamples(const ArchitectureSpec& spec, std::size_t stage) noexcept {
  return stage > 0 || first_stage_stride(spec.stem) != 1;
}

}  // namespace robarch::detail
