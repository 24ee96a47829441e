#include <algorithm>
#include <cctype>

#include "robarch/archspec.hpp"

namespace robarch {

namespace {

std::vector<StageSpec> stages(std::initializer_list<int> depths, std::initializer_list<int> widths) {
  std::vector<StageSpec> out;
  auto w = widths.begin();
  for (int d : depths) out.push_back({d, *w++});
  return out;
}

BlockSpec basic_block() { return {BlockKind::Basic, 1, std::nullopt, {true, true}, {true, true}}; }

BlockSpec bottleneck_block(int expansion) {
  return {BlockKind::Bottleneck, expansion, std::nullopt, {true, true, true}, {true, true, true}};
}

ArchitectureSpec imagenet_baseline(std::string name, std::vector<StageSpec> s, int expansion) {
  return {std::move(name), {StemKind::ResNet, 64}, std::move(s), bottleneck_block(expansion), ActivationKind::ReLU,
          1000};
}

ArchitectureSpec cifar_baseline(std::string name, int blocks_per_stage, int widen) {
  const int n = blocks_per_stage;
  return {std::move(name),       {StemKind::Cifar, 16}, stages({n, n, n}, {16 * widen, 32 * widen, 64 * widen}),
          basic_block(),         ActivationKind::ReLU,  10};
}

// Robustified counterpart: postponed (or widened CIFAR) stem of width 96,
// SE with r = 4 after the 3x3 convolution, SiLU everywhere.
ArchitectureSpec robust_of(const ArchitectureSpec& base, std::vector<StageSpec> s) {
  ArchitectureSpec out = base;
  out.name = robust_name(base.name);
  out.stages = std::move(s);
  if (out.stem.kind != StemKind::Cifar) out.stem.kind = StemKind::PostponedDownsampling;
  out.stem.out_width = kRobustStemWidth;
  out.block.se_ratio = kRobustSeRatio;
  out.activation = ActivationKind::SiLU;
  return out;
}

RegistryEntry entry(ArchitectureSpec base, std::vector<StageSpec> robust_stages, double params_m, double wd) {
  RegistryEntry e;
  e.base_name = base.name;
  e.robust = robust_of(base, std::move(robust_stages));
  e.baseline = std::move(base);
  e.reported_params_millions = params_m;
  e.reported_wd_ratio = wd;
  return e;
}

std::vector<RegistryEntry> build_registry() {
  std::vector<RegistryEntry> r;
  r.push_back(entry(imagenet_baseline("ResNet-50", stages({3, 4, 6, 3}, {64, 128, 256, 512}), 4),
                    stages({5, 8, 13, 1}, {36, 72, 140, 270}), 26.0, 8.99));
  r.push_back(entry(cifar_baseline("WRN-22-10", 3, 10), stages({13, 15, 2}, {120, 240, 480}), 27.0, 12.62));
  r.push_back(entry(cifar_baseline("WRN-28-10", 4, 10), stages({14, 16, 3}, {128, 256, 512}), 37.0, 12.57));
  r.push_back(entry(imagenet_baseline("ResNet-101", stages({3, 4, 23, 3}, {64, 128, 256, 512}), 4),
                    stages({7, 11, 18, 1}, {42, 84, 166, 328}), 46.0, 7.62));
  r.push_back(entry(cifar_baseline("WRN-34-12", 5, 12), stages({18, 20, 5}, {144, 288, 576}), 67.0, 11.20));
  // Wide ResNet-101-2 doubles the 3x3 width but keeps the ResNet-101 block outputs, so expansion is 2.
  r.push_back(entry(imagenet_baseline("WRN-101-2", stages({3, 4, 23, 3}, {128, 256, 512, 1024}), 2),
                    stages({7, 11, 18, 1}, {64, 128, 252, 504}), 104.0, 11.59));
  r.push_back(entry(cifar_baseline("WRN-70-16", 11, 16), stages({30, 31, 10}, {216, 432, 864}), 267.0, 10.57));
  return r;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

const std::vector<RegistryEntry>& registry() {
  static const std::vector<RegistryEntry> table = build_registry();
  return table;
}

const RegistryEntry* find_registry_entry(std::string_view name) {
  if (name.starts_with("Ra")) name.remove_prefix(2);
  for (const auto& e : registry())
    if (iequals(e.base_name, name)) return &e;
  return nullptr;
}

}  // namespace robarch
