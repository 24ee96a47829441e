#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace robarch {

enum class ActivationKind { ReLU, GELU, SiLU, PReLU, PSiLU, PSSiLU };

/// Number of learnable scalars carried by one instance of the activation.
int activation_param_count(ActivationKind kind) noexcept;
std::string_view to_string(ActivationKind kind) noexcept;
std::optional<ActivationKind> parse_activation_kind(std::string_view text) noexcept;

struct StageSpec {
  int depth = 1;  // residual blocks in the stage
  int width = 1;  // channels of the 3x3 convolution

  bool operator==(const StageSpec&) const = default;
};

enum class StemKind { ResNet, PostponedDownsampling, Patchify, Cifar };

std::string_view to_string(StemKind kind) noexcept;
std::optional<StemKind> parse_stem_kind(std::string_view text) noexcept;

struct StemSpec {
  StemKind kind = StemKind::ResNet;
  int out_width = 64;
  // Only meaningful for Patchify.
  int patch = 4;
  int stride = 4;

  bool operator==(const StemSpec& other) const;
};

enum class BlockKind { Basic, Bottleneck };

std::string_view to_string(BlockKind kind) noexcept;
std::optional<BlockKind> parse_block_kind(std::string_view text) noexcept;

struct BlockSpec {
  BlockKind kind = BlockKind::Basic;
  int expansion = 1;
  std::optional<int> se_ratio;
  // One flag per convolution. The last activation flag is the post-add activation.
  std::vector<bool> act_mask{true, true};
  std::vector<bool> norm_mask{true, true};

  int conv_count() const noexcept { return kind == BlockKind::Basic ? 2 : 3; }
  bool operator==(const BlockSpec&) const = default;
};

struct ArchitectureSpec {
  std::string name;
  StemSpec stem;
  std::vector<StageSpec> stages;
  BlockSpec block;
  ActivationKind activation = ActivationKind::ReLU;
  int num_classes = 10;

  bool operator==(const ArchitectureSpec&) const = default;
};

struct WdRange {
  double lo = 7.5;
  double hi = 13.5;

  static WdRange unbounded() {
    return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
};

struct Violation {
  std::string field;
  std::string rule;

  bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate(const ArchitectureSpec& spec);

/// Throws SpecError listing every violation when the spec is invalid.
void require_valid(const ArchitectureSpec& spec);

/// Mean of W_i / D_i over every stage except the last.
double wd_ratio(const ArchitectureSpec& spec);

bool in_optimal_range(const ArchitectureSpec& spec, const WdRange& range = {});

/// Analytic parameter total of the network realized from `spec`.
std::int64_t count_params(const ArchitectureSpec& spec, int input_channels = 3);

/// Output channels of the residual blocks in a stage of the given width.
int block_output_width(const BlockSpec& block, int width) noexcept;

enum class Principle { DepthWidth, ConvStem, SqueezeExcite, SmoothAct };

std::string_view to_string(Principle p) noexcept;
std::optional<Principle> parse_principle(std::string_view text) noexcept;

inline constexpr int kRobustStemWidth = 96;
inline constexpr int kRobustSeRatio = 4;

/// Applies one roadmap transform and returns the new spec; `spec` is untouched.
/// DepthWidth uses `stages` when given, otherwise the registry table for the
/// spec's architecture family.
ArchitectureSpec robustify_step(const ArchitectureSpec& spec, Principle principle,
                                const std::optional<std::vector<StageSpec>>& stages = std::nullopt);

/// All four transforms in roadmap order.
ArchitectureSpec robustify_all(const ArchitectureSpec& spec,
                               const std::optional<std::vector<StageSpec>>& stages = std::nullopt);

// Spec text format.
ArchitectureSpec parse_spec(std::string_view text);
std::string emit_spec(const ArchitectureSpec& spec);
ArchitectureSpec load_spec_file(const std::string& path);
void save_spec_file(const ArchitectureSpec& spec, const std::string& path);

// Registry of baseline and robustified architectures.
struct RegistryEntry {
  std::string base_name;  // e.g. "ResNet-50"
  ArchitectureSpec baseline;
  ArchitectureSpec robust;
  double reported_params_millions = 0.0;  // #Param. column of the robustified model
  double reported_wd_ratio = 0.0;
};

const std::vector<RegistryEntry>& registry();

/// Looks up an entry by base or robustified name ("ResNet-50" or "RaResNet-50").
const RegistryEntry* find_registry_entry(std::string_view name);

/// Name with the robustified prefix applied once.
std::string robust_name(std::string_view name);

}  // namespace robarch
