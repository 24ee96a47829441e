#include "robarch/model.hpp"

#include <bit>
#include <cstring>

#include "robarch/errors.hpp"
#include "robarch/ops.hpp"

namespace robarch {

FrozenParameters::FrozenParameters(const Model& model) : params_(model.parameters()) {
  previous_.reserve(params_.size());
  for (auto& p : params_) {
    previous_.push_back(p.tensor.requires_grad());
    // Flip the flag on the node directly so accumulated gradients survive the guard.
    p.tensor.node().requires_grad = false;
  }
}

FrozenParameters::~FrozenParameters() {
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].tensor.node().requires_grad = previous_[i];
}

LinearModel::LinearModel(Tensor weight, Tensor bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rank() != 2 || bias_.rank() != 1 || bias_.dim(0) != weight_.dim(0))
    throw ShapeError("linear model expects a K x F weight and a K bias, got " + shape_string(weight_.shape()) +
                     " and " + shape_string(bias_.shape()));
}

Tensor LinearModel::logits(const Tensor& batch, Mode) {
  if (batch.rank() < 2 || batch.numel() / batch.dim(0) != weight_.dim(1))
    throw ShapeError("linear model expects " + std::to_string(weight_.dim(1)) + " features per sample, got " +
                     shape_string(batch.shape()));
  return linear(reshape(batch, {batch.dim(0), weight_.dim(1)}), weight_, bias_);
}

std::vector<Parameter> LinearModel::parameters() const {
  return {{"weight", weight_, ParamGroup::Decay}, {"bias", bias_, ParamGroup::Decay}};
}

std::unique_ptr<Model> LinearModel::clone_model() const {
  Tensor w = weight_.detach(), b = bias_.detach();
  w.set_requires_grad(weight_.requires_grad());
  b.set_requires_grad(bias_.requires_grad());
  return std::make_unique<LinearModel>(w, b);
}

std::uint64_t parameter_hash(const Model& model) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : model.parameters()) {
    mix(p.name.data(), p.name.size());
    for (double v : p.tensor.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      unsigned char le[8];
      for (int b = 0; b < 8; ++b) le[b] = static_cast<unsigned char>(bits >> (8 * b));
      mix(le, 8);
    }
  }
  return h;
}

}  // namespace robarch
