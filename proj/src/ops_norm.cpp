#include <algorithm>
#include <cmath>

#include "robarch/errors.hpp"
#include "robarch/ops.hpp"

namespace robarch {

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode) {
  const Shape& xs = input.shape();
  if (xs.size() < 2) throw ShapeError("batchnorm expects at least 2-d input, got " + shape_string(xs));
  const std::size_t n = xs[0], c = xs[1];
  const std::size_t inner = shape_numel(xs) / std::max<std::size_t>(n * c, 1);
  if (n == 0 || inner == 0) throw ShapeError("batchnorm on an empty batch");
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("batchnorm affine parameters must have " + std::to_string(c) + " entries");
  if (state.running_mean.size() != c || state.running_var.size() != c)
    throw ShapeError("batchnorm running statistics must have " + std::to_string(c) + " entries");
  if (!(state.eps > 0.0)) throw ParamError("batchnorm eps must be positive");

  const std::size_t m = n * inner;  // elements per channel
  const double* x = input.values().data();
  std::vector<double> mean(c, 0.0), inv_std(c, 0.0);

  if (mode == Mode::Train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      const double var = v / static_cast<double>(m);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased = m > 1 ? v / static_cast<double>(m - 1) : var;
      state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mu;
      state.running_var[ch] = (1.0 - state.momentum) * state.running_var[ch] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  std::vector<double> out(input.numel());
  const double* g = gamma.values().data();
  const double* bt = beta.values().data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * inner;
      const double a = g[ch] * inv_std[ch];
      const double shift = bt[ch] - a * mean[ch];
      for (std::size_t i = 0; i < inner; ++i) out[off + i] = a * x[off + i] + shift;
    }

  const bool batch_stats = mode == Mode::Train;
  return detail::make_result(
      xs, std::move(out), "batchnorm", {input, gamma, beta},
      [n, c, inner, m, batch_stats, mean = std::move(mean), inv_std = std::move(inv_std)](detail::Node& self) {
        detail::Node& xn = *self.parents[0];
        detail::Node& gn = *self.parents[1];
        detail::Node& bn = *self.parents[2];
        const double* dy = self.grad.data();
        const double* x = xn.value.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xhat += dy[off + i] * (x[off + i] - mean[ch]) * inv_std[ch];
            }
          }
          if (gn.requires_grad) gn.grad[ch] += sum_dy_xhat;
          if (bn.requires_grad) bn.grad[ch] += sum_dy;
          if (!xn.requires_grad) continue;
          const double gscale = gn.value[ch] * inv_std[ch];
          const double md = static_cast<double>(m);
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              if (batch_stats) {
                const double xhat = (x[off + i] - mean[ch]) * inv_std[ch];
                xn.grad[off + i] += gscale * (dy[off + i] - sum_dy / md - xhat * sum_dy_xhat / md);
              } else {
                xn.grad[off + i] += gscale * dy[off + i];
              }
            }
          }
        }
      });
}

}  // namespace robarch
