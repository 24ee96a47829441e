#pragma once

// Reference implementations used as test oracles. Everything here is written
// independently of the library code paths it checks: plain nested loops, no
// shared helpers.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "robarch/archspec.hpp"
#include "robarch/random.hpp"

#ifndef ROBARCH_SPEC_DIR
#define ROBARCH_SPEC_DIR "specs"
#endif

namespace oracle {

inline std::string spec_path(const std::string& file) { return std::string(ROBARCH_SPEC_DIR) + "/" + file; }

/// Direct 6-loop cross-correlation, NCHW input, OCkk kernel.
inline std::vector<double> conv2d(const std::vector<double>& x, int n, int c, int h, int w, const std::vector<double>& k,
                                  int o, int kh, int kw, int stride, int pad_lo, int pad_hi,
                                  const std::vector<double>& bias = {}) {
  const int oh = (h + pad_lo + pad_hi - kh) / stride + 1;
  const int ow = (w + pad_lo + pad_hi - kw) / stride + 1;
  std::vector<double> y(static_cast<std::size_t>(n * o * oh * ow), 0.0);
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < o; ++oc)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(oc)];
          for (int ic = 0; ic < c; ++ic)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int yy = i * stride + u - pad_lo, xx = j * stride + v - pad_lo;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                acc += x[static_cast<std::size_t>(((b * c + ic) * h + yy) * w + xx)] *
                       k[static_cast<std::size_t>(((oc * c + ic) * kh + u) * kw + v)];
              }
          y[static_cast<std::size_t>(((b * o + oc) * oh + i) * ow + j)] = acc;
        }
  return y;
}

/// pool -> fc -> relu -> fc -> sigmoid -> scale, composed by hand.
inline std::vector<double> se(const std::vector<double>& x, int n, int c, int hw, const std::vector<double>& w1,
                              const std::vector<double>& b1, const std::vector<double>& w2,
                              const std::vector<double>& b2, int hidden) {
  std::vector<double> y(x.size());
  for (int b = 0; b < n; ++b) {
    std::vector<double> pooled(static_cast<std::size_t>(c), 0.0);
    for (int ch = 0; ch < c; ++ch) {
      for (int p = 0; p < hw; ++p) pooled[static_cast<std::size_t>(ch)] += x[static_cast<std::size_t>((b * c + ch) * hw + p)];
      pooled[static_cast<std::size_t>(ch)] /= hw;
    }
    std::vector<double> z(static_cast<std::size_t>(hidden));
    for (int j = 0; j < hidden; ++j) {
      double a = b1[static_cast<std::size_t>(j)];
      for (int ch = 0; ch < c; ++ch) a += w1[static_cast<std::size_t>(j * c + ch)] * pooled[static_cast<std::size_t>(ch)];
      z[static_cast<std::size_t>(j)] = a > 0 ? a : 0;
    }
    for (int ch = 0; ch < c; ++ch) {
      double a = b2[static_cast<std::size_t>(ch)];
      for (int j = 0; j < hidden; ++j) a += w2[static_cast<std::size_t>(ch * hidden + j)] * z[static_cast<std::size_t>(j)];
      const double gate = 1.0 / (1.0 + std::exp(-a));
      for (int p = 0; p < hw; ++p) {
        const auto idx = static_cast<std::size_t>((b * c + ch) * hw + p);
        y[idx] = gate * x[idx];
      }
    }
  }
  return y;
}

/// Width-depth ratio straight from the stage lists.
inline double wd(const std::vector<int>& depths, const std::vector<int>& widths) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < depths.size(); ++i) s += static_cast<double>(widths[i]) / depths[i];
  return s / static_cast<double>(depths.size() - 1);
}

/// Parameter total by walking the layers the way a textbook describes a ResNet.
inline std::int64_t params(const robarch::ArchitectureSpec& s, int cin = 3) {
  using namespace robarch;
  auto act = [&](bool present) -> std::int64_t {
    if (!present) return 0;
    switch (s.activation) {
      case ActivationKind::PReLU:
      case ActivationKind::PSiLU:
        return 1;
      case ActivationKind::PSSiLU:
        return 2;
      default:
        return 0;
    }
  };
  std::int64_t k = s.stem.kind == StemKind::Cifar ? 3 : (s.stem.kind == StemKind::Patchify ? s.stem.patch : 7);
  std::int64_t total = k * k * cin * s.stem.out_width + 2 * s.stem.out_width + act(true);
  std::int64_t in = s.stem.out_width;
  const bool deferred = s.stem.kind == StemKind::PostponedDownsampling ||
                        (s.stem.kind == StemKind::Patchify && s.stem.stride < 4);
  for (std::size_t st = 0; st < s.stages.size(); ++st) {
    const std::int64_t w = s.stages[st].width;
    const bool bottleneck = s.block.kind == BlockKind::Bottleneck;
    const std::int64_t out = bottleneck ? w * s.block.expansion : w;
    std::vector<std::pair<std::int64_t, std::int64_t>> io;  // (fan-in, fan-out) per conv
    for (int d = 0; d < s.stages[st].depth; ++d) {
      const std::int64_t bin = d == 0 ? in : out;
      if (bottleneck)
        io = {{bin, w}, {9 * w, w}, {w, out}};
      else
        io = {{9 * bin, w}, {9 * w, w}};
      for (std::size_t i = 0; i < io.size(); ++i) {
        total += io[i].first * io[i].second;
        total += s.block.norm_mask[i] ? 2 * io[i].second : io[i].second;
        total += act(s.block.act_mask[i]);
      }
      if (s.block.se_ratio) {
        const std::int64_t hid = (w + *s.block.se_ratio - 1) / *s.block.se_ratio;
        total += 2 * w * hid + hid + w;
      }
      const bool strided = d == 0 && (st > 0 || deferred);
      if (bin != out || strided) total += bin * out + 2 * out;
    }
    in = out;
  }
  return total + in * s.num_classes + s.num_classes;
}

/// A random spec that passes validation and builds for the input side returned
/// by buildable_side().
inline robarch::ArchitectureSpec random_spec(robarch::Rng& rng, int max_stages = 4, int max_width = 12) {
  using namespace robarch;
  ArchitectureSpec s;
  s.name = "random-" + std::to_string(rng.uniform_int(0, 1'000'000));
  const StemKind stems[] = {StemKind::ResNet, StemKind::PostponedDownsampling, StemKind::Patchify, StemKind::Cifar};
  s.stem.kind = stems[rng.uniform_int(0, 3)];
  s.stem.out_width = static_cast<int>(rng.uniform_int(1, 16));
  if (s.stem.kind == StemKind::Patchify) {
    const int options[][2] = {{4, 4}, {4, 1}, {4, 2}, {2, 2}, {3, 1}, {8, 4}};
    const auto& o = options[rng.uniform_int(0, 5)];
    s.stem.patch = o[0];
    s.stem.stride = o[1];
  }
  const auto n = rng.uniform_int(1, max_stages);
  for (std::int64_t i = 0; i < n; ++i)
    s.stages.push_back({static_cast<int>(rng.uniform_int(1, 3)), static_cast<int>(rng.uniform_int(1, max_width))});
  const bool bottleneck = rng.uniform() < 0.5;
  s.block.kind = bottleneck ? BlockKind::Bottleneck : BlockKind::Basic;
  s.block.expansion = bottleneck ? static_cast<int>(rng.uniform_int(1, 4)) : 1;
  if (rng.uniform() < 0.5) s.block.se_ratio = static_cast<int>(rng.uniform_int(1, 8));
  const std::size_t convs = bottleneck ? 3 : 2;
  s.block.act_mask.clear();
  s.block.norm_mask.clear();
  for (std::size_t i = 0; i < convs; ++i) {
    s.block.act_mask.push_back(rng.uniform() < 0.7);
    s.block.norm_mask.push_back(rng.uniform() < 0.7);
  }
  const ActivationKind acts[] = {ActivationKind::ReLU,  ActivationKind::GELU,  ActivationKind::SiLU,
                                 ActivationKind::PReLU, ActivationKind::PSiLU, ActivationKind::PSSiLU};
  s.activation = acts[rng.uniform_int(0, 5)];
  s.num_classes = static_cast<int>(rng.uniform_int(1, 10));
  return s;
}

/// Smallest square input side the spec can be built for.
inline int buildable_side(const robarch::ArchitectureSpec& s) {
  using namespace robarch;
  int f = 1;
  switch (s.stem.kind) {
    case StemKind::ResNet:
    case StemKind::PostponedDownsampling:
      f = 4;
      break;
    case StemKind::Patchify:
      f = s.stem.stride < 4 ? 4 : s.stem.stride;
      break;
    case StemKind::Cifar:
      f = 1;
      break;
  }
  for (std::size_t i = 1; i < s.stages.size(); ++i) f *= 2;
  return std::max(f, 8);
}

/// Rosenblatt perceptron; true when it reaches zero training errors.
inline bool perceptron_separates(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
                                 int max_epochs = 1000) {
  const std::size_t d = xs.front().size();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int e = 0; e < max_epochs; ++e) {
    int errors = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double t = ys[i] ? 1.0 : -1.0;
      double a = b;
      for (std::size_t j = 0; j < d; ++j) a += w[j] * xs[i][j];
      if (t * a <= 0.0) {
        ++errors;
        for (std::size_t j = 0; j < d; ++j) w[j] += t * xs[i][j];
        b += t;
      }
    }
    if (errors == 0) return true;
  }
  return false;
}

/// Sample correlation from the textbook two-pass formula.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Largest two-class softmax cross-entropy over the corners of the l-inf box
/// around x (clipped to [0, 1]) for logits z = W x + b.
inline double corner_max_ce(const std::vector<double>& x, int label, const std::vector<double>& W,
                            const std::vector<double>& b, int classes, double eps) {
  const std::size_t d = x.size();
  double best = -1e300;
  for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
    std::vector<double> p(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double v = (mask >> j) & 1U ? x[j] + eps : x[j] - eps;
      p[j] = v < 0 ? 0 : (v > 1 ? 1 : v);
    }
    std::vector<double> z(static_cast<std::size_t>(classes));
    double zmax = -1e300;
    for (int k = 0; k < classes; ++k) {
      double a = b[static_cast<std::size_t>(k)];
      for (std::size_t j = 0; j < d; ++j) a += W[static_cast<std::size_t>(k) * d + j] * p[j];
      z[static_cast<std::size_t>(k)] = a;
      zmax = std::max(zmax, a);
    }
    double lse = 0;
    for (double a : z) lse += std::exp(a - zmax);
    const double loss = zmax + std::log(lse) - z[static_cast<std::size_t>(label)];
    best = std::max(best, loss);
  }
  return best;
}

}  // namespace oracle
