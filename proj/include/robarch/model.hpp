#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "robarch/tensor.hpp"

namespace robarch {

/// Weight-decay group. Normalization affine terms and activation parameters are excluded.
enum class ParamGroup { Decay, NoDecay };

struct Parameter {
  std::string name;
  Tensor tensor;
  ParamGroup group = ParamGroup::Decay;
};

/// Anything that maps an N x C x H x W batch to N x K logits.
class Model {
 public:
  virtual ~Model() = default;

  /// Logits for `batch`. A graph is recorded whenever recording is enabled and
  /// the batch or a parameter requires gradients; `mode` only selects the
  /// normalization statistics.
  virtual Tensor logits(const Tensor& batch, Mode mode) = 0;

  virtual std::vector<Parameter> parameters() const = 0;
  virtual std::size_t num_classes() const = 0;
  /// Independent deep copy, used to give each evaluation worker its own parameters.
  virtual std::unique_ptr<Model> clone_model() const = 0;
};

/// Affine classifier on the flattened input: logits = flatten(x) W^T + b.
class LinearModel : public Model {
 public:
  /// W is K x F, b has K entries.
  LinearModel(Tensor weight, Tensor bias);

  Tensor logits(const Tensor& batch, Mode mode) override;
  std::vector<Parameter> parameters() const override;
  std::size_t num_classes() const override { return weight_.dim(0); }
  std::unique_ptr<Model> clone_model() const override;

  const Tensor& weight() const noexcept { return weight_; }
  const Tensor& bias() const noexcept { return bias_; }

 private:
  Tensor weight_, bias_;
};

/// Clears requires_grad on every parameter for the guard's lifetime, so
/// backward passes only reach the input (attack generation).
class FrozenParameters {
 public:
  explicit FrozenParameters(const Model& model);
  ~FrozenParameters();
  FrozenParameters(const FrozenParameters&) = delete;
  FrozenParameters& operator=(const FrozenParameters&) = delete;

 private:
  std::vector<Parameter> params_;
  std::vector<bool> previous_;
};

/// FNV-1a over parameter names and raw value bytes.
std::uint64_t parameter_hash(const Model& model);

}  // namespace robarch
