#include <algorithm>
#include <cmath>
#include <limits>

#include "robarch/errors.hpp"
#include "robarch/ops.hpp"

namespace robarch {

namespace {

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + " shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + " expects an N x K matrix, got " + shape_string(t.shape()));
}

// log-softmax of one row
void log_softmax_row(const double* z, std::size_t k, double* out) {
  const double mx = *std::max_element(z, z + k);
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] - mx);
  const double lse = mx + std::log(s);
  for (std::size_t j = 0; j < k; ++j) out[j] = z[j] - lse;
}

Tensor reduce_rows(std::vector<double> per_row, Reduction reduction, const char* op, std::vector<Tensor> parents,
                   std::function<void(detail::Node&, std::size_t row, double g)> row_backward) {
  const std::size_t n = per_row.size();
  if (reduction == Reduction::None) {
    return detail::make_result({n}, std::move(per_row), op, std::move(parents),
                               [row_backward, n](detail::Node& self) {
                                 for (std::size_t i = 0; i < n; ++i) row_backward(self, i, self.grad[i]);
                               });
  }
  double total = 0.0;
  for (double v : per_row) total += v;
  const double factor = reduction == Reduction::Mean ? 1.0 / static_cast<double>(std::max<std::size_t>(n, 1)) : 1.0;
  return detail::make_result({1}, {total * factor}, op, std::move(parents),
                             [row_backward, n, factor](detail::Node& self) {
                               for (std::size_t i = 0; i < n; ++i) row_backward(self, i, self.grad[0] * factor);
                             });
}

}  // namespace

Tensor se_gate(const Tensor& input, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  const Shape& xs = input.shape();
  if (xs.size() != 4) throw ShapeError("se_gate expects N x C x H x W input, got " + shape_string(xs));
  const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  if (w1.rank() != 2 || w1.dim(1) != c) throw ShapeError("se_gate w1 must be hidden x " + std::to_string(c));
  const std::size_t hid = w1.dim(0);
  if (b1.numel() != hid) throw ShapeError("se_gate b1 must have " + std::to_string(hid) + " entries");
  if (w2.rank() != 2 || w2.dim(0) != c || w2.dim(1) != hid)
    throw ShapeError("se_gate w2 must be " + std::to_string(c) + " x " + std::to_string(hid));
  if (b2.numel() != c) throw ShapeError("se_gate b2 must have " + std::to_string(c) + " entries");
  if (hw == 0) throw ShapeError("se_gate on an empty feature map");

  const double* x = input.values().data();
  const double* W1 = w1.values().data();
  const double* B1 = b1.values().data();
  const double* W2 = w2.values().data();
  const double* B2 = b2.values().data();

  // Saved for backward: pooled input, hidden pre-activation, gate.
  std::vector<double> pooled(n * c), hidden(n * hid), gate(n * c);
  std::vector<double> out(input.numel());
  for (std::size_t b = 0; b < n; ++b) {
    double* s = pooled.data() + b * c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* p = x + (b * c + ch) * hw;
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      s[ch] = acc / static_cast<double>(hw);
    }
    double* z = hidden.data() + b * hid;
    for (std::size_t j = 0; j < hid; ++j) {
      double acc = B1[j];
      for (std::size_t ch = 0; ch < c; ++ch) acc += W1[j * c + ch] * s[ch];
      z[j] = acc;
    }
    double* gt = gate.data() + b * c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = B2[ch];
      for (std::size_t j = 0; j < hid; ++j) acc += W2[ch * hid + j] * std::max(z[j], 0.0);
      gt[ch] = sigmoid(acc);
      const double* p = x + (b * c + ch) * hw;
      double* o = out.data() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) o[i] = p[i] * gt[ch];
    }
  }

  return detail::make_result(
      xs, std::move(out), "se_gate", {input, w1, b1, w2, b2},
      [n, c, hw, hid, pooled = std::move(pooled), hidden = std::move(hidden),
       gate = std::move(gate)](detail::Node& self) {
        detail::Node& xn = *self.parents[0];
        detail::Node& w1n = *self.parents[1];
        detail::Node& b1n = *self.parents[2];
        detail::Node& w2n = *self.parents[3];
        detail::Node& b2n = *self.parents[4];
        const double* x = xn.value.data();
        const double* dy = self.grad.data();
        std::vector<double> dlogit(c), dz(hid), ds(c);
        for (std::size_t b = 0; b < n; ++b) {
          const double* gt = gate.data() + b * c;
          const double* z = hidden.data() + b * hid;
          const double* s = pooled.data() + b * c;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * hw;
            double dgate = 0.0;
            for (std::size_t i = 0; i < hw; ++i) dgate += dy[off + i] * x[off + i];
            dlogit[ch] = dgate * gt[ch] * (1.0 - gt[ch]);
          }
          std::fill(dz.begin(), dz.end(), 0.0);
          for (std::size_t ch = 0; ch < c; ++ch) {
            if (b2n.requires_grad) b2n.grad[ch] += dlogit[ch];
            for (std::size_t j = 0; j < hid; ++j) {
              const double a = std::max(z[j], 0.0);
              if (w2n.requires_grad) w2n.grad[ch * hid + j] += dlogit[ch] * a;
              dz[j] += w2n.value[ch * hid + j] * dlogit[ch];
            }
          }
          for (std::size_t j = 0; j < hid; ++j) dz[j] = z[j] > 0.0 ? dz[j] : 0.0;
          std::fill(ds.begin(), ds.end(), 0.0);
          for (std::size_t j = 0; j < hid; ++j) {
            if (b1n.requires_grad) b1n.grad[j] += dz[j];
            for (std::size_t ch = 0; ch < c; ++ch) {
              if (w1n.requires_grad) w1n.grad[j * c + ch] += dz[j] * s[ch];
              ds[ch] += w1n.value[j * c + ch] * dz[j];
            }
          }
          if (!xn.requires_grad) continue;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * hw;
            const double from_pool = ds[ch] / static_cast<double>(hw);
            for (std::size_t i = 0; i < hw; ++i) xn.grad[off + i] += dy[off + i] * gt[ch] + from_pool;
          }
        }
      });
}

Tensor max_pool2d(const Tensor& input, int kernel, int stride, int padding) {
  const Shape& xs = input.shape();
  if (xs.size() != 4) throw ShapeError("max_pool2d expects 4-d input, got " + shape_string(xs));
  if (kernel < 1 || stride < 1 || padding < 0 || padding * 2 > kernel)
    throw ShapeError("max_pool2d needs kernel >= 1, stride >= 1, 0 <= padding <= kernel / 2");
  const ConvGeometry g = ConvGeometry::symmetric(stride, padding);
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::size_t ho = conv_output_extent(h, static_cast<std::size_t>(kernel), g);
  const std::size_t wo = conv_output_extent(w, static_cast<std::size_t>(kernel), g);
  if (ho == 0 || wo == 0) throw ShapeError("max_pool2d window does not fit input " + shape_string(xs));

  const double* x = input.values().data();
  std::vector<double> out(n * c * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = x + plane * h * w;
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (int ki = 0; ki < kernel; ++ki) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * stride - padding + ki;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * stride - padding + kj;
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw);
            if (!found || src[idx] > best) {
              best = src[idx];
              best_idx = idx;
              found = true;
            }
          }
        }
        const std::size_t o = (plane * ho + oh) * wo + ow;
        out[o] = best;
        argmax[o] = plane * h * w + best_idx;
      }
  }
  return detail::make_result({n, c, ho, wo}, std::move(out), "max_pool2d", {input},
                             [argmax = std::move(argmax)](detail::Node& self) {
                               detail::Node& xn = *self.parents[0];
                               for (std::size_t o = 0; o < argmax.size(); ++o) xn.grad[argmax[o]] += self.grad[o];
                             });
}

Tensor global_avg_pool(const Tensor& input) {
  const Shape& xs = input.shape();
  if (xs.size() != 4) throw ShapeError("global_avg_pool expects 4-d input, got " + shape_string(xs));
  const std::size_t nc = xs[0] * xs[1], hw = xs[2] * xs[3];
  if (hw == 0) throw ShapeError("global_avg_pool on an empty feature map");
  const double* x = input.values().data();
  std::vector<double> out(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < hw; ++j) acc += x[i * hw + j];
    out[i] = acc / static_cast<double>(hw);
  }
  return detail::make_result({xs[0], xs[1]}, std::move(out), "global_avg_pool", {input}, [nc, hw](detail::Node& self) {
    detail::Node& xn = *self.parents[0];
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t i = 0; i < nc; ++i)
      for (std::size_t j = 0; j < hw; ++j) xn.grad[i * hw + j] += self.grad[i] * inv;
  });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_matrix(input, "linear");
  require_matrix(weight, "linear");
  const std::size_t n = input.dim(0), f = input.dim(1), k = weight.dim(0);
  if (weight.dim(1) != f)
    throw ShapeError("linear weight " + shape_string(weight.shape()) + " does not match input " +
                     shape_string(input.shape()));
  if (bias.defined() && bias.numel() != k) throw ShapeError("linear bias must have " + std::to_string(k) + " entries");
  const double* x = input.values().data();
  const double* w = weight.values().data();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = bias.defined() ? bias.values()[j] : 0.0;
      for (std::size_t t = 0; t < f; ++t) acc += x[i * f + t] * w[j * f + t];
      out[i * k + j] = acc;
    }
  return detail::make_result({n, k}, std::move(out), "linear", {input, weight, bias}, [n, f, k](detail::Node& self) {
    detail::Node& xn = *self.parents[0];
    detail::Node& wn = *self.parents[1];
    detail::Node* bn = self.parents[2].get();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double g = self.grad[i * k + j];
        if (g == 0.0) continue;
        if (bn != nullptr && bn->requires_grad) bn->grad[j] += g;
        if (wn.requires_grad)
          for (std::size_t t = 0; t < f; ++t) wn.grad[j * f + t] += g * xn.value[i * f + t];
        if (xn.requires_grad)
          for (std::size_t t = 0; t < f; ++t) xn.grad[i * f + t] += g * wn.value[j * f + t];
      }
  });
}

Tensor reshape(const Tensor& input, Shape shape) {
  if (shape_numel(shape) != input.numel())
    throw ShapeError("cannot reshape " + shape_string(input.shape()) + " to " + shape_string(shape));
  std::vector<double> values(input.values().begin(), input.values().end());
  return detail::make_result(std::move(shape), std::move(values), "reshape", {input}, [](detail::Node& self) {
    detail::Node& xn = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return detail::make_result(a.shape(), std::move(out), "add", {a, b}, [](detail::Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return detail::make_result(a.shape(), std::move(out), "mul", {a, b}, [](detail::Node& self) {
    detail::Node& an = *self.parents[0];
    detail::Node& bn = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (an.requires_grad) an.grad[i] += self.grad[i] * bn.value[i];
      if (bn.requires_grad) bn.grad[i] += self.grad[i] * an.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * factor;
  return detail::make_result(a.shape(), std::move(out), "scale", {a}, [factor](detail::Node& self) {
    detail::Node& an = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i] * factor;
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return detail::make_result({1}, {acc}, "sum", {a}, [](detail::Node& self) {
    detail::Node& an = *self.parents[0];
    for (double& g : an.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

std::vector<double> softmax_rows(std::span<const double> logits, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    log_softmax_row(logits.data() + i * cols, cols, out.data() + i * cols);
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = std::exp(out[i * cols + j]);
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  require_matrix(logits, "argmax_rows");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.values().data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, Reduction reduction) {
  require_matrix(logits, "cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("cross_entropy got " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  if (k == 0) throw ShapeError("cross_entropy needs at least one class");
  std::vector<double> logp(n * k), per_row(n);
  std::vector<int> y(labels.begin(), labels.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= k)
      throw ShapeError("label " + std::to_string(y[i]) + " outside [0, " + std::to_string(k) + ")");
    log_softmax_row(logits.values().data() + i * k, k, logp.data() + i * k);
    per_row[i] = -logp[i * k + static_cast<std::size_t>(y[i])];
  }
  return reduce_rows(std::move(per_row), reduction, "cross_entropy", {logits},
                     [k, logp = std::move(logp), y = std::move(y)](detail::Node& self, std::size_t i, double g) {
                       detail::Node& zn = *self.parents[0];
                       for (std::size_t j = 0; j < k; ++j) {
                         const double p = std::exp(logp[i * k + j]);
                         zn.grad[i * k + j] += g * (p - (static_cast<int>(j) == y[i] ? 1.0 : 0.0));
                       }
                     });
}

Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits, Reduction reduction) {
  require_matrix(p_logits, "kl_divergence");
  require_same_shape(p_logits, q_logits, "kl_divergence");
  const std::size_t n = p_logits.dim(0), k = p_logits.dim(1);
  std::vector<double> lp(n * k), lq(n * k), per_row(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    log_softmax_row(p_logits.values().data() + i * k, k, lp.data() + i * k);
    log_softmax_row(q_logits.values().data() + i * k, k, lq.data() + i * k);
    for (std::size_t j = 0; j < k; ++j) per_row[i] += std::exp(lp[i * k + j]) * (lp[i * k + j] - lq[i * k + j]);
  }
  std::vector<double> kl = per_row;
  return reduce_rows(
      std::move(per_row), reduction, "kl_divergence", {p_logits, q_logits},
      [k, lp = std::move(lp), lq = std::move(lq), kl = std::move(kl)](detail::Node& self, std::size_t i, double g) {
        detail::Node& pn = *self.parents[0];
        detail::Node& qn = *self.parents[1];
        for (std::size_t j = 0; j < k; ++j) {
          const double p = std::exp(lp[i * k + j]);
          const double q = std::exp(lq[i * k + j]);
          if (pn.requires_grad) pn.grad[i * k + j] += g * p * (lp[i * k + j] - lq[i * k + j] - kl[i]);
          if (qn.requires_grad) qn.grad[i * k + j] += g * (q - p);
        }
      });
}

}  // namespace robarch
