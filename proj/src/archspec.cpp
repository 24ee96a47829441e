#include "robarch/archspec.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>

#include "robarch/errors.hpp"
#include "spec_geometry.hpp"

namespace robarch {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

constexpr std::array<std::pair<ActivationKind, std::string_view>, 6> kActivationNames{{
    {ActivationKind::ReLU, "relu"},
    {ActivationKind::GELU, "gelu"},
    {ActivationKind::SiLU, "silu"},
    {ActivationKind::PReLU, "prelu"},
    {ActivationKind::PSiLU, "psilu"},
    {ActivationKind::PSSiLU, "pssilu"},
}};

constexpr std::array<std::pair<StemKind, std::string_view>, 4> kStemNames{{
    {StemKind::ResNet, "resnet"},
    {StemKind::PostponedDownsampling, "postponed"},
    {StemKind::Patchify, "patchify"},
    {StemKind::Cifar, "cifar"},
}};

constexpr std::array<std::pair<Principle, std::string_view>, 4> kPrincipleNames{{
    {Principle::DepthWidth, "depth-width"},
    {Principle::ConvStem, "conv-stem"},
    {Principle::SqueezeExcite, "se"},
    {Principle::SmoothAct, "smooth-act"},
}};

template <typename Table, typename Key>
std::string_view name_of(const Table& table, Key key) {
  for (const auto& [k, name] : table)
    if (k == key) return name;
  return "?";
}

template <typename Table>
auto key_of(const Table& table, std::string_view text) -> std::optional<typename Table::value_type::first_type> {
  const std::string needle = lower(text);
  for (const auto& [k, name] : table)
    if (name == needle) return k;
  return std::nullopt;
}

}  // namespace

int activation_param_count(ActivationKind kind) noexcept {
  switch (kind) {
    case ActivationKind::PReLU:
    case ActivationKind::PSiLU:
      return 1;
    case ActivationKind::PSSiLU:
      return 2;
    default:
      return 0;
  }
}

std::string_view to_string(ActivationKind kind) noexcept { return name_of(kActivationNames, kind); }
std::optional<ActivationKind> parse_activation_kind(std::string_view text) noexcept {
  return key_of(kActivationNames, text);
}

std::string_view to_string(StemKind kind) noexcept { return name_of(kStemNames, kind); }
std::optional<StemKind> parse_stem_kind(std::string_view text) noexcept { return key_of(kStemNames, text); }

std::string_view to_string(BlockKind kind) noexcept {
  return kind == BlockKind::Basic ? "basic" : "bottleneck";
}
std::optional<BlockKind> parse_block_kind(std::string_view text) noexcept {
  const std::string t = lower(text);
  if (t == "basic") return BlockKind::Basic;
  if (t == "bottleneck") return BlockKind::Bottleneck;
  return std::nullopt;
}

std::string_view to_string(Principle p) noexcept { return name_of(kPrincipleNames, p); }
std::optional<Principle> parse_principle(std::string_view text) noexcept { return key_of(kPrincipleNames, text); }

bool StemSpec::operator==(const StemSpec& other) const {
  if (kind != other.kind || out_width != other.out_width) return false;
  return kind != StemKind::Patchify || (patch == other.patch && stride == other.stride);
}

int block_output_width(const BlockSpec& block, int width) noexcept {
  return block.kind == BlockKind::Basic ? width : width * block.expansion;
}

std::vector<Violation> validate(const ArchitectureSpec& spec) {
  std::vector<Violation> out;
  auto fail = [&](std::string field, std::string rule) { out.push_back({std::move(field), std::move(rule)}); };

  if (spec.name.find_first_of("\r\n") != std::string::npos ||
      (!spec.name.empty() && (std::isspace(static_cast<unsigned char>(spec.name.front())) ||
                              std::isspace(static_cast<unsigned char>(spec.name.back())))))
    fail("name", "must be a single line without surrounding whitespace");

  const StemSpec& stem = spec.stem;
  if (stem.out_width < 1 || stem.out_width > 1024) fail("stem.out_width", "must lie in [1, 1024]");
  if (stem.kind == StemKind::Patchify) {
    if (stem.patch < 1) fail("stem.patch", "must be >= 1");
    if (stem.stride < 1 || stem.stride > stem.patch) fail("stem.stride", "must satisfy 1 <= stride <= patch");
  }

  if (spec.stages.empty()) fail("stages", "at least one stage is required");
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const std::string prefix = "stages[" + std::to_string(i) + "]";
    if (spec.stages[i].depth < 1) fail(prefix + ".depth", "must be >= 1");
    if (spec.stages[i].width < 1) fail(prefix + ".width", "must be >= 1");
  }

  const BlockSpec& block = spec.block;
  if (block.expansion < 1) fail("block.expansion", "must be >= 1");
  if (block.kind == BlockKind::Basic && block.expansion != 1)
    fail("block.expansion", "must be 1 for basic blocks");
  if (block.se_ratio && *block.se_ratio < 1) fail("block.se_ratio", "must be >= 1");
  const auto convs = static_cast<std::size_t>(block.conv_count());
  if (block.act_mask.size() != convs)
    fail("block.act_mask", "length must equal the block's convolution count (" + std::to_string(convs) + ")");
  if (block.norm_mask.size() != convs)
    fail("block.norm_mask", "length must equal the block's convolution count (" + std::to_string(convs) + ")");

  if (spec.num_classes < 1) fail("head.num_classes", "must be >= 1");
  return out;
}

void require_valid(const ArchitectureSpec& spec) {
  const auto violations = validate(spec);
  if (violations.empty()) return;
  std::ostringstream msg;
  msg << "invalid architecture spec";
  if (!spec.name.empty()) msg << " '" << spec.name << "'";
  for (const auto& v : violations) msg << "; " << v.field << ": " << v.rule;
  throw SpecError(msg.str());
}

double wd_ratio(const ArchitectureSpec& spec) {
  require_valid(spec);
  const std::size_t n = spec.stages.size();
  if (n < 2) throw SpecError("WD ratio needs at least 2 stages, got " + std::to_string(n));
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i)
    sum += static_cast<double>(spec.stages[i].width) / static_cast<double>(spec.stages[i].depth);
  return sum / static_cast<double>(n - 1);
}

bool in_optimal_range(const ArchitectureSpec& spec, const WdRange& range) {
  const double r = wd_ratio(spec);
  return range.lo <= r && r <= range.hi;
}

std::int64_t count_params(const ArchitectureSpec& spec, int input_channels) {
  require_valid(spec);
  using I = std::int64_t;
  const I act = activation_param_count(spec.activation);

  const I k = detail::stem_kernel(spec.stem);
  const I stem_w = spec.stem.out_width;
  I total = input_channels * stem_w * k * k + 2 * stem_w + act;

  const BlockSpec& b = spec.block;
  auto conv = [](I cin, I cout, I kk, bool normed) { return cin * cout * kk * kk + (normed ? 2 * cout : cout); };

  I in = stem_w;
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const I w = spec.stages[s].width;
    const I out = block_output_width(b, spec.stages[s].width);
    for (int d = 0; d < spec.stages[s].depth; ++d) {
      const bool downsample = d == 0 && detail::stage_downsamples(spec, s);
      if (b.kind == BlockKind::Basic) {
        total += conv(in, w, 3, b.norm_mask[0]) + conv(w, w, 3, b.norm_mask[1]);
      } else {
        total += conv(in, w, 1, b.norm_mask[0]) + conv(w, w, 3, b.norm_mask[1]) + conv(w, out, 1, b.norm_mask[2]);
      }
      if (b.se_ratio) {
        const I hidden = (w + *b.se_ratio - 1) / *b.se_ratio;
        total += w * hidden + hidden + hidden * w + w;
      }
      total += act * static_cast<I>(std::count(b.act_mask.begin(), b.act_mask.end(), true));
      if (in != out || downsample) total += in * out + 2 * out;
      in = out;
    }
  }
  total += in * spec.num_classes + spec.num_classes;
  return total;
}

std::string robust_name(std::string_view name) {
  if (name.starts_with("Ra")) return std::string(name);
  return "Ra" + std::string(name);
}

ArchitectureSpec robustify_step(const ArchitectureSpec& spec, Principle principle,
                                const std::optional<std::vector<StageSpec>>& stages) {
  require_valid(spec);
  ArchitectureSpec out = spec;
  switch (principle) {
    case Principle::DepthWidth: {
      if (stages) {
        out.stages = *stages;
      } else {
        const RegistryEntry* entry = find_registry_entry(spec.name);
        if (entry == nullptr)
          throw NeedsExplicitStages("no stage table registered for '" + spec.name +
                                    "'; supply depth/width stages explicitly");
        out.stages = entry->robust.stages;
      }
      require_valid(out);
      break;
    }
    case Principle::ConvStem:
      // CIFAR-style stems keep their topology and only widen.
      if (out.stem.kind != StemKind::Cifar) out.stem.kind = StemKind::PostponedDownsampling;
      out.stem.out_width = kRobustStemWidth;
      break;
    case Principle::SqueezeExcite:
      out.block.se_ratio = kRobustSeRatio;
      break;
    case Principle::SmoothAct:
      out.activation = ActivationKind::SiLU;
      break;
  }
  return out;
}

ArchitectureSpec robustify_all(const ArchitectureSpec& spec, const std::optional<std::vector<StageSpec>>& stages) {
  ArchitectureSpec out = robustify_step(spec, Principle::DepthWidth, stages);
  for (Principle p : {Principle::ConvStem, Principle::SqueezeExcite, Principle::SmoothAct}) out = robustify_step(out, p);
  out.name = robust_name(spec.name);
  return out;
}

}  // namespace robarch
