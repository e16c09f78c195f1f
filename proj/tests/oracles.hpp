#pragma once

// Independent reference implementations used only by the tests.

#include <cmath>
#include <vector>

#include "sketchnet/conv.hpp"
#include "sketchnet/tensor.hpp"

namespace oracle {

using sketchnet::ConvParams;
using sketchnet::Tensor;

/// Direct seven-loop convolution.
template <typename T>
Tensor<T> naive_conv(const Tensor<T>& x, const ConvParams<T>& p) {
  const long n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const long f = p.out_channels(), k = p.kernel(), s = p.stride, pad = p.pad;
  const long oh = (h + 2 * pad - k) / s + 1, ow = (w + 2 * pad - k) / s + 1;
  Tensor<T> out({static_cast<std::size_t>(n), static_cast<std::size_t>(f),
                 static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (long b = 0; b < n; ++b)
    for (long o = 0; o < f; ++o)
      for (long y = 0; y < oh; ++y)
        for (long xx = 0; xx < ow; ++xx) {
          double acc = p.bias[o];
          for (long ci = 0; ci < c; ++ci)
            for (long ky = 0; ky < k; ++ky)
              for (long kx = 0; kx < k; ++kx) {
                const long iy = y * s + ky - pad, ix = xx * s + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += static_cast<double>(x.at(b, ci, iy, ix)) *
                       p.weights.at(o, ci, ky, kx);
              }
          out.at(b, o, y, xx) = static_cast<T>(acc);
        }
  return out;
}

/// dLoss/dWeights of a convolution from its definition:
/// sum over batch and output cells of upstream * input tap.
template <typename T>
Tensor<T> naive_conv_weight_grad(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& up) {
  const long n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const long f = p.out_channels(), k = p.kernel(), s = p.stride, pad = p.pad;
  const long oh = up.dim(2), ow = up.dim(3);
  Tensor<T> g(p.weights.shape());
  for (long o = 0; o < f; ++o)
    for (long ci = 0; ci < c; ++ci)
      for (long ky = 0; ky < k; ++ky)
        for (long kx = 0; kx < k; ++kx) {
          double acc = 0;
          for (long b = 0; b < n; ++b)
            for (long y = 0; y < oh; ++y)
              for (long xx = 0; xx < ow; ++xx) {
                const long iy = y * s + ky - pad, ix = xx * s + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += static_cast<double>(x.at(b, ci, iy, ix)) * up.at(b, o, y, xx);
              }
          g.at(o, ci, ky, kx) = static_cast<T>(acc);
        }
  return g;
}

/// Log-density of a zero-mean multivariate Gaussian from a dense covariance,
/// via an unpivoted Cholesky factorization written out by hand.
inline double gaussian_log_density(const std::vector<double>& z, std::vector<double> cov) {
  const std::size_t n = z.size();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) cov[j * n + j] -= cov[j * n + k] * cov[j * n + k];
    const double d = std::sqrt(cov[j * n + j]);
    cov[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      for (std::size_t k = 0; k < j; ++k) cov[i * n + j] -= cov[i * n + k] * cov[j * n + k];
      cov[i * n + j] /= d;
    }
  }
  // Solve L y = z.
  std::vector<double> y(n);
  double log_det = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = z[i];
    for (std::size_t k = 0; k < i; ++k) v -= cov[i * n + k] * y[k];
    y[i] = v / cov[i * n + i];
    log_det += 2 * std::log(cov[i * n + i]);
  }
  double quad = 0;
  for (double v : y) quad += v * v;
  return -0.5 * (quad + log_det + static_cast<double>(n) * std::log(2 * M_PI));
}

}  // namespace oracle
