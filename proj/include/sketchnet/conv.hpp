#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstring>
#include <string>

#include "sketchnet/tensor.hpp"

namespace sketchnet {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Weights [outChannels, inChannels, k, k] and bias [outChannels] of one
/// convolution. Fully connected layers are convolutions whose kernel covers
/// the whole input.
template <typename T>
struct ConvParams {
  Tensor<T> weights;
  Tensor<T> bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  ConvParams() = default;
  ConvParams(std::size_t out_ch, std::size_t in_ch, std::size_t kernel, std::size_t stride_,
             std::size_t pad_)
      : weights({out_ch, in_ch, kernel, kernel}), bias({out_ch}), stride(stride_), pad(pad_) {
    if (stride == 0) throw ShapeError("convolution stride must be >= 1");
  }

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t kernel() const { return weights.dim(2); }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;  // empty when the caller did not ask for it
  Tensor<T> weights;
  Tensor<T> bias;
};

namespace detail {

// Upper bound on patch-matrix columns materialized at once in the backward
// pass; samples are grouped until a chunk reaches it.
inline constexpr std::size_t kColumnBudget = 8192;

struct ConvGeometry {
  std::size_t n, c, h, w, f, k, stride, pad, oh, ow;
  std::size_t patch() const { return c * k * k; }
  std::size_t plane() const { return oh * ow; }
  std::size_t chunk() const { return std::max<std::size_t>(1, kColumnBudget / plane()); }
};

template <typename T>
ConvGeometry conv_geometry(const Shape& in, const ConvParams<T>& p) {
  if (in.size() != 4) throw ShapeError("conv input must be [N,C,H,W], got " + shape_str(in));
  if (p.weights.rank() != 4 || p.weights.dim(2) != p.weights.dim(3))
    throw ShapeError("conv weights must be [F,C,k,k], got " + shape_str(p.weights.shape()));
  if (p.bias.shape() != Shape{p.out_channels()})
    throw ShapeError("conv bias " + shape_str(p.bias.shape()) + " does not match weights " +
                     shape_str(p.weights.shape()));
  const std::size_t k = p.kernel();
  if (in[1] != p.in_channels() || in[2] + 2 * p.pad < k || in[3] + 2 * p.pad < k)
    throw ShapeError("conv input " + shape_str(in) + " incompatible with weights " +
                     shape_str(p.weights.shape()) + " (pad " + std::to_string(p.pad) + ")");
  ConvGeometry g{in[0], in[1], in[2], in[3], p.out_channels(), k, p.stride, p.pad, 0, 0};
  g.oh = window_output_size(g.h, k, g.stride, g.pad);
  g.ow = window_output_size(g.w, k, g.stride, g.pad);
  return g;
}

// Expands samples [n0, n0+nb) into a [C*k*k, nb*oh*ow] patch matrix.
template <typename T>
void im2col(const T* input, const ConvGeometry& g, std::size_t n0, std::size_t nb, T* cols) {
  const std::size_t ncols = nb * g.plane();
  const std::size_t sample = g.c * g.h * g.w;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = cols + ((c * g.k + ki) * g.k + kj) * ncols;
        for (std::size_t b = 0; b < nb; ++b) {
          const T* src = input + (n0 + b) * sample + c * g.h * g.w;
          T* dst = row + b * g.plane();
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
            T* drow = dst + oy * g.ow;
            if (iy < 0 || iy >= static_cast<long>(g.h)) {
              std::fill(drow, drow + g.ow, T{0});
              continue;
            }
            const T* srow = src + iy * g.w;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
              drow[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T{0} : srow[ix];
            }
          }
        }
      }
}

// Scatter-adds a patch-matrix gradient back onto samples [n0, n0+nb).
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, std::size_t n0, std::size_t nb, T* input) {
  const std::size_t ncols = nb * g.plane();
  const std::size_t sample = g.c * g.h * g.w;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = cols + ((c * g.k + ki) * g.k + kj) * ncols;
        for (std::size_t b = 0; b < nb; ++b) {
          T* dst = input + (n0 + b) * sample + c * g.h * g.w;
          const T* src = row + b * g.plane();
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            T* drow = dst + iy * g.w;
            const T* srow = src + oy * g.ow;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
              if (ix >= 0 && ix < static_cast<long>(g.w)) drow[ix] += srow[ox];
            }
          }
        }
      }
}


// Sparse inputs (rendered sketches are mostly blank) are convolved by
// scattering each nonzero pixel into the outputs it touches, which costs
// nnz * ceil(k/stride)^2 * F multiply-adds instead of F * C*k*k * H'*W'.
// The GEMM path is far more efficient per multiply-add, so the scatter
// path is only taken when it does several times less arithmetic.
inline constexpr double kScatterAdvantage = 4.0;

inline bool prefer_scatter(const ConvGeometry& g, std::size_t nnz) {
  const double reach = std::ceil(static_cast<double>(g.k) / static_cast<double>(g.stride));
  const double scatter = static_cast<double>(nnz) * reach * reach * static_cast<double>(g.f);
  const double dense = static_cast<double>(g.f) * static_cast<double>(g.patch()) * static_cast<double>(g.plane());
  return scatter * kScatterAdvantage < dense;
}

template <typename T>
std::size_t count_nonzero(const T* x, std::size_t n) {
  std::size_t nnz = 0;
  for (std::size_t i = 0; i < n; ++i) nnz += x[i] != T{0};
  return nnz;
}

// Weights as [C, k, k, F] so one tap is a contiguous F-vector.
template <typename T>
std::vector<T> taps_last(const T* w, const ConvGeometry& g) {
  std::vector<T> t(g.f * g.patch());
  for (std::size_t f = 0; f < g.f; ++f)
    for (std::size_t q = 0; q < g.patch(); ++q) t[q * g.f + f] = w[f * g.patch() + q];
  return t;
}

// Calls fn(tap, out_index) for every output position that input pixel
// (y, x) reaches, where tap = ki * k + kj.
template <typename Fn>
void for_each_reach(const ConvGeometry& g, std::size_t y, std::size_t x, Fn&& fn) {
  const long py = static_cast<long>(y + g.pad), px = static_cast<long>(x + g.pad);
  const long s = static_cast<long>(g.stride), k = static_cast<long>(g.k);
  for (long ki = py % s; ki < k && ki <= py; ki += s) {
    const long oy = (py - ki) / s;
    if (oy >= static_cast<long>(g.oh)) continue;
    for (long kj = px % s; kj < k && kj <= px; kj += s) {
      const long ox = (px - kj) / s;
      if (ox >= static_cast<long>(g.ow)) continue;
      fn(static_cast<std::size_t>(ki * k + kj), static_cast<std::size_t>(oy) * g.ow + static_cast<std::size_t>(ox));
    }
  }
}

// One sample, output written as [F, H'*W']. Vec is an F-vector type;
// a fixed-size one lets the tap loop compile to straight vector code.
template <typename T, typename Vec>
void scatter_forward_impl(const T* x, const ConvGeometry& g, const std::vector<T>& taps, const T* bias, T* out,
                          std::vector<T>& acc) {
  acc.resize(g.plane() * g.f);
  for (std::size_t o = 0; o < g.plane(); ++o) std::copy(bias, bias + g.f, acc.begin() + o * g.f);
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t y = 0; y < g.h; ++y)
      for (std::size_t xx = 0; xx < g.w; ++xx) {
        const T v = x[(c * g.h + y) * g.w + xx];
        if (v == T{0}) continue;
        for_each_reach(g, y, xx, [&](std::size_t tap, std::size_t o) {
          Eigen::Map<Vec>(acc.data() + o * g.f, g.f) +=
              v * Eigen::Map<const Vec>(taps.data() + (c * g.k * g.k + tap) * g.f, g.f);
        });
      }
  for (std::size_t f = 0; f < g.f; ++f)
    for (std::size_t o = 0; o < g.plane(); ++o) out[f * g.plane() + o] = acc[o * g.f + f];
}

template <typename T>
void scatter_forward(const T* x, const ConvGeometry& g, const std::vector<T>& taps, const T* bias, T* out,
                     std::vector<T>& acc) {
  if (g.f == 64)
    scatter_forward_impl<T, Eigen::Matrix<T, 64, 1>>(x, g, taps, bias, out, acc);
  else
    scatter_forward_impl<T, Eigen::Matrix<T, Eigen::Dynamic, 1>>(x, g, taps, bias, out, acc);
}

// Adds one sample's weight gradient, as [C, k, k, F], into dtaps.
template <typename T, typename Vec>
void scatter_weight_grad_impl(const T* x, const ConvGeometry& g, const T* dy, std::vector<T>& dtaps,
                              std::vector<T>& dy_t) {
  dy_t.resize(g.plane() * g.f);
  for (std::size_t f = 0; f < g.f; ++f)
    for (std::size_t o = 0; o < g.plane(); ++o) dy_t[o * g.f + f] = dy[f * g.plane() + o];
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t y = 0; y < g.h; ++y)
      for (std::size_t xx = 0; xx < g.w; ++xx) {
        const T v = x[(c * g.h + y) * g.w + xx];
        if (v == T{0}) continue;
        for_each_reach(g, y, xx, [&](std::size_t tap, std::size_t o) {
          Eigen::Map<Vec>(dtaps.data() + (c * g.k * g.k + tap) * g.f, g.f) +=
              v * Eigen::Map<const Vec>(dy_t.data() + o * g.f, g.f);
        });
      }
}

template <typename T>
void scatter_weight_grad(const T* x, const ConvGeometry& g, const T* dy, std::vector<T>& dtaps,
                         std::vector<T>& dy_t) {
  if (g.f == 64)
    scatter_weight_grad_impl<T, Eigen::Matrix<T, 64, 1>>(x, g, dy, dtaps, dy_t);
  else
    scatter_weight_grad_impl<T, Eigen::Matrix<T, Eigen::Dynamic, 1>>(x, g, dy, dtaps, dy_t);
}

}  // namespace detail

/// Convolution of each sample either through patch-matrix expansion and
/// one matrix product, or, for mostly-zero inputs, by scattering the
/// nonzero pixels. Output is [N, F, H', W'] with the usual size rule.
/// Samples are never mixed in one product, so a sample's output is
/// bit-identical whatever batch it arrives in.
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& input, const ConvParams<T>& p) {
  const auto g = detail::conv_geometry(input.shape(), p);
  Tensor<T> out({g.n, g.f, g.oh, g.ow});
  const std::size_t sample = g.c * g.h * g.w;
  std::vector<T> cols, taps, acc;
  ConstMatrixMap<T> w(p.weights.raw(), g.f, g.patch());
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(p.bias.raw(), g.f);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* x = input.raw() + n * sample;
    T* o_ptr = out.raw() + n * g.f * g.plane();
    if (detail::prefer_scatter(g, detail::count_nonzero(x, sample))) {
      if (taps.empty()) taps = detail::taps_last(p.weights.raw(), g);
      detail::scatter_forward(x, g, taps, p.bias.raw(), o_ptr, acc);
      continue;
    }
    cols.resize(g.patch() * g.plane());
    detail::im2col(input.raw(), g, n, 1, cols.data());
    ConstMatrixMap<T> cm(cols.data(), g.patch(), g.plane());
    MatrixMap<T> o(o_ptr, g.f, g.plane());
    o.noalias() = w * cm;
    o.colwise() += bias;
  }
  return out;
}

/// Exact gradients of conv_forward given the upstream gradient.
template <typename T>
ConvGrads<T> conv_backward(const Tensor<T>& input, const ConvParams<T>& p,
                           const Tensor<T>& grad_out, bool want_input_grad = true) {
  const auto g = detail::conv_geometry(input.shape(), p);
  const Shape expected{g.n, g.f, g.oh, g.ow};
  if (grad_out.shape() != expected)
    throw ShapeError("conv upstream gradient " + shape_str(grad_out.shape()) +
                     " does not match output shape " + shape_str(expected));

  ConvGrads<T> grads;
  grads.weights = Tensor<T>(p.weights.shape());
  grads.bias = Tensor<T>(p.bias.shape());
  if (want_input_grad) grads.input = Tensor<T>(input.shape());

  MatrixMap<T> dw(grads.weights.raw(), g.f, g.patch());
  ConstMatrixMap<T> w(p.weights.raw(), g.f, g.patch());
  const std::size_t chunk = g.chunk();
  std::vector<T> cols, dcols, dy;

  const std::size_t sample = g.c * g.h * g.w;
  const bool scatter = detail::prefer_scatter(g, detail::count_nonzero(input.raw(), input.size()) / g.n);
  if (scatter) {
    std::vector<T> dtaps(g.f * g.patch(), T{0}), dy_t;
    for (std::size_t n = 0; n < g.n; ++n)
      detail::scatter_weight_grad(input.raw() + n * sample, g, grad_out.raw() + n * g.f * g.plane(), dtaps, dy_t);
    for (std::size_t f = 0; f < g.f; ++f)
      for (std::size_t q = 0; q < g.patch(); ++q) dw(f, q) = dtaps[q * g.f + f];
  }

  for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
    const std::size_t nb = std::min(chunk, g.n - n0);
    const std::size_t ncols = nb * g.plane();
    const T* dy_ptr = grad_out.raw() + n0 * g.f * g.plane();
    if (nb > 1) {
      dy.resize(g.f * ncols);
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t f = 0; f < g.f; ++f)
          std::memcpy(dy.data() + f * ncols + b * g.plane(),
                      grad_out.raw() + ((n0 + b) * g.f + f) * g.plane(), g.plane() * sizeof(T));
      dy_ptr = dy.data();
    }
    ConstMatrixMap<T> dym(dy_ptr, g.f, ncols);
    // plain loop: Eigen reductions peel by runtime alignment, which would
    // make the rounding depend on where the buffer happens to live
    for (std::size_t f = 0; f < g.f; ++f) {
      const T* row = dy_ptr + f * ncols;
      T s{0};
      for (std::size_t j = 0; j < ncols; ++j) s += row[j];
      grads.bias[f] += s;
    }

    if (!scatter) {
      cols.resize(g.patch() * ncols);
      detail::im2col(input.raw(), g, n0, nb, cols.data());
      ConstMatrixMap<T> cm(cols.data(), g.patch(), ncols);
      dw.noalias() += dym * cm.transpose();
    }

    if (want_input_grad) {
      dcols.resize(g.patch() * ncols);
      MatrixMap<T> dc(dcols.data(), g.patch(), ncols);
      dc.noalias() = w.transpose() * dym;
      detail::col2im(dcols.data(), g, n0, nb, grads.input.raw());
    }
  }
  return grads;
}

}  // namespace sketchnet
