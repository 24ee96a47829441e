#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "robarch/archspec.hpp"
#include "robarch/model.hpp"
#include "robarch/ops.hpp"
#include "robarch/snapshot.hpp"

namespace robarch {

struct InputShape {
  int channels = 3;
  int height = 32;
  int width = 32;

  bool operator==(const InputShape&) const = default;
};

/// One entry of the structural layer list, in execution order.
struct LayerInfo {
  std::string name;
  std::string kind;  // conv, norm, act, se, maxpool, add, global_avg_pool, linear
  std::string detail;
};

struct DescribeRow {
  std::string name;
  Shape shape;
  std::size_t count = 0;
};

struct LayerTable {
  std::vector<DescribeRow> rows;
  std::int64_t total = 0;
};

class Network : public Model {
 public:
  /// Realizes `spec` for inputs of the given shape. Throws ShapeError when the
  /// spatial size is not divisible by the total downsampling factor.
  static Network build(const ArchitectureSpec& spec, InputShape input, std::uint64_t seed);

  Tensor logits(const Tensor& batch, Mode mode) override;
  std::vector<Parameter> parameters() const override;
  std::size_t num_classes() const override { return static_cast<std::size_t>(spec_.num_classes); }
  std::unique_ptr<Model> clone_model() const override;

  const ArchitectureSpec& spec() const noexcept { return spec_; }
  InputShape input_shape() const noexcept { return input_; }
  const std::vector<LayerInfo>& layers() const noexcept { return layers_; }
  /// Spatial side length after each stage (height; width follows the same arithmetic).
  const std::vector<std::size_t>& stage_output_heights() const noexcept { return stage_heights_; }
  std::size_t total_downsampling() const noexcept { return total_downsampling_; }

  /// Independent copy: parameters and running statistics are duplicated.
  Network clone() const;

  /// Parameters plus normalization running statistics, for snapshots.
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& tensors);

 private:
  struct Conv {
    std::string name;
    Tensor weight;
    Tensor bias;  // present only when no normalization follows
    ConvGeometry geom;
  };
  struct Norm {
    std::string name;
    Tensor gamma;
    Tensor beta;
    BatchNormState state;
  };
  struct Act {
    std::string name;
    ActivationKind kind = ActivationKind::ReLU;
    Tensor params;
  };
  struct SqueezeExcite {
    std::string name;
    Tensor w1, b1, w2, b2;
  };
  struct Block {
    std::vector<Conv> convs;
    std::vector<std::optional<Norm>> norms;
    std::vector<std::optional<Act>> acts;  // last entry is the post-add activation
    std::optional<SqueezeExcite> se;       // applied after the 3x3 conv (index 1)
    std::optional<Conv> shortcut;
    std::optional<Norm> shortcut_norm;
  };

  Network() = default;
  Tensor run_conv(const Conv& c, const Tensor& x) const;
  Tensor run_norm(Norm& n, const Tensor& x, Mode mode) const;
  Tensor run_block(Block& b, const Tensor& x, Mode mode) const;
  template <typename Fn>
  void for_each_norm(Fn&& fn);
  template <typename Fn>
  void for_each_norm(Fn&& fn) const;

  ArchitectureSpec spec_;
  InputShape input_;
  Conv stem_conv_;
  Norm stem_norm_;
  Act stem_act_;
  bool stem_pool_ = false;
  std::vector<Block> blocks_;
  Tensor head_weight_, head_bias_;
  std::vector<LayerInfo> layers_;
  std::vector<std::size_t> stage_heights_;
  std::size_t total_downsampling_ = 1;
};

Network build_network(const ArchitectureSpec& spec, InputShape input, std::uint64_t seed);

/// Inference entry point: train mode records a graph, eval mode runs without one.
Tensor forward(Network& net, const Tensor& batch, Mode mode);

/// One row per parameter tensor plus the total.
LayerTable describe(const Network& net);
void write_describe_text(std::ostream& out, const LayerTable& table);
void write_describe_csv(std::ostream& out, const LayerTable& table);

}  // namespace robarch
