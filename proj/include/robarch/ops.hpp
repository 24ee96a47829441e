#pragma once

#include <span>
#include <vector>

#include "robarch/archspec.hpp"
#include "robarch/tensor.hpp"

namespace robarch {

struct ConvGeometry {
  int stride = 1;
  int pad_lo = 0;  // top/left
  int pad_hi = 0;  // bottom/right

  static ConvGeometry symmetric(int stride, int padding) { return {stride, padding, padding}; }
};

/// Output extent of a convolution or pooling window along one axis; 0 when the window does not fit.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const ConvGeometry& g) noexcept;

/// Cross-correlation of an N x C x H x W input with an O x C x kH x kW kernel.
/// `bias` may be undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const ConvGeometry& geom);
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = kBatchNormMomentum;
  double eps = kBatchNormEps;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Per-channel normalization over every axis except 1. Train mode uses batch
/// statistics and updates `state`; eval mode uses the running statistics.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode);

// Parametric activation initial values and bounds.
inline constexpr double kPReluInitSlope = 0.25;
inline constexpr double kPSiluInitBeta = 1.0;
inline constexpr double kPSSiluInitAlpha = 0.1;
inline constexpr double kPSSiluAlphaMax = 0.99;

/// Initial parameter vector for one activation instance ({} for non-parametric kinds).
std::vector<double> activation_initial_params(ActivationKind kind);

/// Elementwise activation. Parametric kinds read their scalars from `params`:
/// PReLU {slope}, PSiLU {beta}, PSSiLU {beta, alpha}.
Tensor activation(ActivationKind kind, const Tensor& input, const Tensor& params = {});

/// Squeeze-and-excitation gate: global average pool, FC (w1, b1), ReLU, FC (w2, b2),
/// sigmoid, then per-channel scaling of the input. w1 is hidden x C, w2 is C x hidden.
Tensor se_gate(const Tensor& input, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);

/// Max pooling; padded cells never win and ties go to the first index in window order.
Tensor max_pool2d(const Tensor& input, int kernel, int stride, int padding);

/// N x C x H x W -> N x C.
Tensor global_avg_pool(const Tensor& input);

/// x (N x F) times w^T (w is K x F) plus b (K).
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& input, Shape shape);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

enum class Reduction { Mean, Sum, None };

/// Softmax cross-entropy of N x K logits against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, Reduction reduction = Reduction::Mean);

/// KL(softmax(p_logits) || softmax(q_logits)) per row.
Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits, Reduction reduction = Reduction::Mean);

/// Row-wise softmax of an N x K matrix (values only).
std::vector<double> softmax_rows(std::span<const double> logits, std::size_t rows, std::size_t cols);

/// Row-wise argmax of an N x K tensor.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace robarch
