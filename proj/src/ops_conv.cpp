// Convolution via per-sample im2col and a row-major GEMM.

#include <algorithm>

#include "robarch/errors.hpp"
#include "robarch/ops.hpp"

namespace robarch {

namespace {

struct ConvDims {
  std::size_t n, c, h, w;  // input
  std::size_t o, kh, kw;   // kernel
  std::size_t ho, wo;      // output
  ConvGeometry g;

  std::size_t patch() const { return c * kh * kw; }  // GEMM inner dimension
  std::size_t pixels() const { return ho * wo; }
  bool direct() const { return kh == 1 && kw == 1 && g.stride == 1 && g.pad_lo == 0 && g.pad_hi == 0; }
};

void im2col(const double* x, const ConvDims& d, double* col) {
  const auto s = static_cast<std::ptrdiff_t>(d.g.stride);
  const auto pad = static_cast<std::ptrdiff_t>(d.g.pad_lo);
  const auto h = static_cast<std::ptrdiff_t>(d.h), w = static_cast<std::ptrdiff_t>(d.w);
  const std::size_t p = d.pixels();
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t ki = 0; ki < d.kh; ++ki)
      for (std::size_t kj = 0; kj < d.kw; ++kj) {
        double* row = col + ((c * d.kh + ki) * d.kw + kj) * p;
        const double* plane = x + c * d.h * d.w;
        for (std::size_t oh = 0; oh < d.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * s - pad + static_cast<std::ptrdiff_t>(ki);
          double* dst = row + oh * d.wo;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + d.wo, 0.0);
            continue;
          }
          const double* src = plane + ih * w;
          for (std::size_t ow = 0; ow < d.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * s - pad + static_cast<std::ptrdiff_t>(kj);
            dst[ow] = (iw < 0 || iw >= w) ? 0.0 : src[iw];
          }
        }
      }
}

void col2im_add(const double* col, const ConvDims& d, double* dx) {
  const auto s = static_cast<std::ptrdiff_t>(d.g.stride);
  const auto pad = static_cast<std::ptrdiff_t>(d.g.pad_lo);
  const auto h = static_cast<std::ptrdiff_t>(d.h), w = static_cast<std::ptrdiff_t>(d.w);
  const std::size_t p = d.pixels();
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t ki = 0; ki < d.kh; ++ki)
      for (std::size_t kj = 0; kj < d.kw; ++kj) {
        const double* row = col + ((c * d.kh + ki) * d.kw + kj) * p;
        double* plane = dx + c * d.h * d.w;
        for (std::size_t oh = 0; oh < d.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * s - pad + static_cast<std::ptrdiff_t>(ki);
          if (ih < 0 || ih >= h) continue;
          const double* src = row + oh * d.wo;
          double* dst = plane + ih * w;
          for (std::size_t ow = 0; ow < d.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * s - pad + static_cast<std::ptrdiff_t>(kj);
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
}

// out[M x P] += a[M x K] * b[K x P]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * p;
    const double* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[M x K] += a[M x P] * b[K x P]^T
void gemm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * p;
      double acc = 0.0;
      for (std::size_t j = 0; j < p; ++j) acc += arow[j] * brow[j];
      out[i * k + kk] += acc;
    }
  }
}

// out[K x P] += a[M x K]^T * b[M x P]
void gemm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      double* orow = out + kk * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const ConvGeometry& g) noexcept {
  const auto padded = static_cast<std::ptrdiff_t>(in) + g.pad_lo + g.pad_hi;
  if (g.stride < 1 || padded < static_cast<std::ptrdiff_t>(kernel)) return 0;
  return static_cast<std::size_t>((padded - static_cast<std::ptrdiff_t>(kernel)) / g.stride) + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  return conv2d(input, kernel, Tensor{}, ConvGeometry::symmetric(stride, padding));
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const ConvGeometry& geom) {
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  if (xs.size() != 4 || ks.size() != 4)
    throw ShapeError("conv2d expects 4-d input and kernel, got " + shape_string(xs) + " and " + shape_string(ks));
  if (xs[1] != ks[1])
    throw ShapeError("conv2d channel mismatch: input " + shape_string(xs) + ", kernel " + shape_string(ks));
  if (geom.stride < 1 || geom.pad_lo < 0 || geom.pad_hi < 0) throw ShapeError("conv2d needs stride >= 1, padding >= 0");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != ks[0]))
    throw ShapeError("conv2d bias must have " + std::to_string(ks[0]) + " entries");

  ConvDims d{xs[0], xs[1], xs[2], xs[3], ks[0], ks[2], ks[3], 0, 0, geom};
  d.ho = conv_output_extent(d.h, d.kh, geom);
  d.wo = conv_output_extent(d.w, d.kw, geom);
  if (d.ho == 0 || d.wo == 0)
    throw ShapeError("conv2d kernel " + shape_string(ks) + " does not fit input " + shape_string(xs));

  const std::size_t kdim = d.patch(), p = d.pixels();
  std::vector<double> out(d.n * d.o * p, 0.0);
  std::vector<double> col(d.direct() ? 0 : kdim * p);
  const double* x = input.values().data();
  const double* w = kernel.values().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    const double* xn = x + n * d.c * d.h * d.w;
    double* on = out.data() + n * d.o * p;
    if (bias.defined())
      for (std::size_t o = 0; o < d.o; ++o) std::fill(on + o * p, on + (o + 1) * p, bias.values()[o]);
    if (d.direct()) {
      gemm_nn(w, xn, on, d.o, kdim, p);
    } else {
      im2col(xn, d, col.data());
      gemm_nn(w, col.data(), on, d.o, kdim, p);
    }
  }

  return detail::make_result(
      {d.n, d.o, d.ho, d.wo}, std::move(out), "conv2d", {input, kernel, bias}, [d](detail::Node& self) {
        detail::Node& xn = *self.parents[0];
        detail::Node& kn = *self.parents[1];
        detail::Node* bn = self.parents[2].get();
        const std::size_t kdim = d.patch(), p = d.pixels();
        std::vector<double> col(d.direct() ? 0 : kdim * p);
        std::vector<double> dcol(xn.requires_grad && !d.direct() ? kdim * p : 0);
        for (std::size_t n = 0; n < d.n; ++n) {
          const double* dy = self.grad.data() + n * d.o * p;
          const double* xs = xn.value.data() + n * d.c * d.h * d.w;
          if (kn.requires_grad) {
            const double* src = xs;
            if (!d.direct()) {
              im2col(xs, d, col.data());
              src = col.data();
            }
            gemm_nt(dy, src, kn.grad.data(), d.o, kdim, p);
          }
          if (bn != nullptr && bn->requires_grad)
            for (std::size_t o = 0; o < d.o; ++o)
              for (std::size_t j = 0; j < p; ++j) bn->grad[o] += dy[o * p + j];
          if (xn.requires_grad) {
            double* dx = xn.grad.data() + n * d.c * d.h * d.w;
            if (d.direct()) {
              gemm_tn(kn.value.data(), dy, dx, d.o, kdim, p);
            } else {
              std::fill(dcol.begin(), dcol.end(), 0.0);
              gemm_tn(kn.value.data(), dy, dcol.data(), d.o, kdim, p);
              col2im_add(dcol.data(), d, dx);
            }
          }
        }
      });
}

}  // namespace robarch
