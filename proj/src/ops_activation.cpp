#include <algorithm>
#include <cmath>
#include <numbers>

#include "robarch/errors.hpp"
#include "robarch/ops.hpp"

namespace robarch {

namespace {

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// tanh approximation of GELU
constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluC * x * x * x))); }

double gelu_grad(double x) noexcept {
  const double t = std::tanh(kSqrt2OverPi * (x + kGeluC * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluC * x * x);
}

}  // namespace

std::vector<double> activation_initial_params(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::PReLU:
      return {kPReluInitSlope};
    case ActivationKind::PSiLU:
      return {kPSiluInitBeta};
    case ActivationKind::PSSiLU:
      return {kPSiluInitBeta, kPSSiluInitAlpha};
    default:
      return {};
  }
}

Tensor activation(ActivationKind kind, const Tensor& input, const Tensor& params) {
  const std::size_t needed = static_cast<std::size_t>(activation_param_count(kind));
  if (needed > 0 && (!params.defined() || params.numel() != needed))
    throw ParamError(std::string(to_string(kind)) + " needs " + std::to_string(needed) + " parameter(s)");

  const auto x = input.values();
  std::vector<double> out(x.size());
  const double* p = needed > 0 ? params.values().data() : nullptr;

  switch (kind) {
    case ActivationKind::ReLU:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case ActivationKind::GELU:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
      break;
    case ActivationKind::SiLU:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * sigmoid(x[i]);
      break;
    case ActivationKind::PReLU:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : p[0] * x[i];
      break;
    case ActivationKind::PSiLU:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * sigmoid(p[0] * x[i]);
      break;
    case ActivationKind::PSSiLU: {
      const double a = std::clamp(p[1], 0.0, kPSSiluAlphaMax);
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * (sigmoid(p[0] * x[i]) - a) / (1.0 - a);
      break;
    }
  }

  const char* op = kind == ActivationKind::ReLU ? "relu" : "activation";
  return detail::make_result(input.shape(), std::move(out), op, {input, params}, [kind](detail::Node& self) {
    detail::Node& xn = *self.parents[0];
    detail::Node* pn = self.parents[1].get();
    const bool want_p = pn != nullptr && pn->requires_grad;
    const double* x = xn.value.data();
    const double* dy = self.grad.data();
    const std::size_t count = xn.value.size();
    double* dx = xn.requires_grad ? xn.grad.data() : nullptr;

    switch (kind) {
      case ActivationKind::ReLU:
        if (dx)
          for (std::size_t i = 0; i < count; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
        break;
      case ActivationKind::GELU:
        if (dx)
          for (std::size_t i = 0; i < count; ++i) dx[i] += dy[i] * gelu_grad(x[i]);
        break;
      case ActivationKind::SiLU:
        if (dx)
          for (std::size_t i = 0; i < count; ++i) {
            const double s = sigmoid(x[i]);
            dx[i] += dy[i] * (s + x[i] * s * (1.0 - s));
          }
        break;
      case ActivationKind::PReLU: {
        const double a = pn->value[0];
        double da = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
          if (dx) dx[i] += x[i] > 0.0 ? dy[i] : a * dy[i];
          if (x[i] <= 0.0) da += dy[i] * x[i];
        }
        if (want_p) pn->grad[0] += da;
        break;
      }
      case ActivationKind::PSiLU: {
        const double beta = pn->value[0];
        double dbeta = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
          const double s = sigmoid(beta * x[i]);
          const double ds = s * (1.0 - s);
          if (dx) dx[i] += dy[i] * (s + beta * x[i] * ds);
          dbeta += dy[i] * x[i] * x[i] * ds;
        }
        if (want_p) pn->grad[0] += dbeta;
        break;
      }
      case ActivationKind::PSSiLU: {
        const double beta = pn->value[0];
        const double raw_a = pn->value[1];
        const double a = std::clamp(raw_a, 0.0, kPSSiluAlphaMax);
        const bool a_free = raw_a >= 0.0 && raw_a <= kPSSiluAlphaMax;
        const double inv = 1.0 / (1.0 - a);
        double dbeta = 0.0, da = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
          const double s = sigmoid(beta * x[i]);
          const double ds = s * (1.0 - s);
          if (dx) dx[i] += dy[i] * (s + beta * x[i] * ds - a) * inv;
          dbeta += dy[i] * x[i] * x[i] * ds * inv;
          da += dy[i] * x[i] * (s - 1.0) * inv * inv;
        }
        if (want_p) {
          pn->grad[0] += dbeta;
          if (a_free) pn->grad[1] += da;
        }
        break;
      }
    }
  });
}

}  // namespace robarch
