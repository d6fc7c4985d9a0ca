#pragma once

// Forward and backward passes for the layer primitives of a volumetric
// U-net. All volumes are depth x height x width x channels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tversky/tensor.hpp"

namespace tversky::nn {

enum class Padding { same, none };

/// Cubic convolution kernel: weights k x k x k x C_in x C_out, one bias per
/// output channel. For transposed convolutions C_in/C_out refer to the
/// transposed op's own input/output channels.
struct ConvKernel {
  Tensor weights;
  std::vector<double> bias;

  static ConvKernel zeros(std::size_t k, std::size_t c_in, std::size_t c_out) {
    return ConvKernel{Tensor({k, k, k, c_in, c_out}), std::vector<double>(c_out, 0.0)};
  }

  std::size_t size() const { return weights.extent(0); }
  std::size_t in_channels() const { return weights.extent(3); }
  std::size_t out_channels() const { return weights.extent(4); }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }

  void validate() const {
    if (weights.rank() != 5 || weights.extent(0) != weights.extent(1) ||
        weights.extent(0) != weights.extent(2)) {
      throw ConfigError("kernel weights must be k x k x k x C_in x C_out, got " +
                        shape_str(weights.shape()));
    }
    if (weights.extent(0) < 1 || weights.extent(0) > 3) {
      throw ConfigError("kernel size must be 1, 2 or 3, got " + std::to_string(weights.extent(0)));
    }
    if (bias.size() != out_channels()) {
      throw ConfigError("bias length " + std::to_string(bias.size()) +
                        " does not match C_out " + std::to_string(out_channels()));
    }
    if (!weights.all_finite() ||
        !std::all_of(bias.begin(), bias.end(), [](double b) { return std::isfinite(b); })) {
      throw NumericError("kernel holds non-finite values");
    }
  }
};

struct ConvGrads {
  Tensor input;
  ConvKernel kernel;
};

namespace detail {

struct ConvGeometry {
  std::size_t in_d, in_h, in_w, c_in;
  std::size_t out_d, out_h, out_w, c_out;
  std::size_t k, stride;
  std::ptrdiff_t pad;
};

inline std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::ptrdiff_t pad) {
  const auto padded = static_cast<std::ptrdiff_t>(in) + 2 * pad - static_cast<std::ptrdiff_t>(k);
  if (padded < 0) return 0;
  return static_cast<std::size_t>(padded) / stride + 1;
}

inline ConvGeometry conv_geometry(const Tensor& input, const ConvKernel& kernel, Padding padding,
                                  std::size_t stride) {
  require_rank(input, 4, "conv3d");
  kernel.validate();
  if (stride == 0) throw ConfigError("conv3d: stride must be positive");
  if (kernel.in_channels() != input.extent(3)) {
    throw ConfigError("conv3d: kernel " + shape_str(kernel.weights.shape()) +
                      " expects C_in " + std::to_string(kernel.in_channels()) + " but input " +
                      shape_str(input.shape()) + " has " + std::to_string(input.extent(3)));
  }
  const std::size_t k = kernel.size();
  std::ptrdiff_t pad = 0;
  if (padding == Padding::same) {
    if (stride != 1) throw ConfigError("conv3d: same padding requires stride 1");
    if (k % 2 == 0) throw ConfigError("conv3d: same padding requires an odd kernel size");
    pad = static_cast<std::ptrdiff_t>(k / 2);
  }
  ConvGeometry g{input.extent(0), input.extent(1), input.extent(2), input.extent(3),
                 0, 0, 0, kernel.out_channels(), k, stride, pad};
  g.out_d = conv_extent(g.in_d, k, stride, pad);
  g.out_h = conv_extent(g.in_h, k, stride, pad);
  g.out_w = conv_extent(g.in_w, k, stride, pad);
  if (g.out_d == 0 || g.out_h == 0 || g.out_w == 0) {
    throw ConfigError("conv3d: kernel " + shape_str(kernel.weights.shape()) +
                      " larger than input " + shape_str(input.shape()));
  }
  return g;
}

// Input index for output coordinate o at kernel tap t, or -1 when it falls in
// the zero padding.
inline std::ptrdiff_t tap(std::size_t o, std::size_t t, const ConvGeometry& g, std::size_t in_extent) {
  const auto i = static_cast<std::ptrdiff_t>(o * g.stride + t) - g.pad;
  return (i < 0 || i >= static_cast<std::ptrdiff_t>(in_extent)) ? -1 : i;
}

// Range [lo, hi) of output w-coordinates whose k taps all land inside the
// input. Empty (lo >= hi) when no such coordinate exists.
inline std::pair<std::size_t, std::size_t> interior_w(const ConvGeometry& g) {
  std::size_t lo = 0;
  while (lo < g.out_w && tap(lo, 0, g, g.in_w) < 0) ++lo;
  std::size_t hi = g.out_w;
  while (hi > lo && tap(hi - 1, g.k - 1, g, g.in_w) < 0) --hi;
  return {lo, hi};
}

// Calls f.template operator()<CO>() with CO equal to `channels` when it is one
// of the common widths (so the inner loops unroll), otherwise with CO = 0.
template <typename F>
void dispatch_channels(std::size_t channels, F&& f) {
  switch (channels) {
    case 1: f.template operator()<1>(); break;
    case 2: f.template operator()<2>(); break;
    case 4: f.template operator()<4>(); break;
    case 8: f.template operator()<8>(); break;
    case 12: f.template operator()<12>(); break;
    case 16: f.template operator()<16>(); break;
    case 24: f.template operator()<24>(); break;
    case 32: f.template operator()<32>(); break;
    default: f.template operator()<0>(); break;
  }
}

// y[co] += sum_j x[j] * wb[j][co] for a contiguous run of `len` taps. The
// accumulators start from y, so each output keeps its tap order.
template <std::size_t CO>
inline void accumulate_run(const double* __restrict x, const double* __restrict wb, double* __restrict y,
                           std::size_t len, std::size_t co_dyn) {
  if constexpr (CO > 0) {
    double acc[CO];
    for (std::size_t co = 0; co < CO; ++co) acc[co] = y[co];
    for (std::size_t j = 0; j < len; ++j) {
      const double xv = x[j];
      const double* wr = wb + j * CO;
      for (std::size_t co = 0; co < CO; ++co) acc[co] += xv * wr[co];
    }
    for (std::size_t co = 0; co < CO; ++co) y[co] = acc[co];
  } else {
    for (std::size_t j = 0; j < len; ++j) {
      const double xv = x[j];
      const double* wr = wb + j * co_dyn;
      for (std::size_t co = 0; co < co_dyn; ++co) y[co] += xv * wr[co];
    }
  }
}

// Adjoint of accumulate_run: gx[j] += sum_co wb[j][co] gy[co] and
// gwb[j][co] += x[j] gy[co]. gx may be null.
template <std::size_t CO>
inline void backprop_run(const double* __restrict x, const double* __restrict wb, const double* __restrict gy,
                         double* __restrict gx, double* __restrict gwb, std::size_t len, std::size_t co_dyn) {
  if constexpr (CO > 0) {
    double g[CO];
    for (std::size_t co = 0; co < CO; ++co) g[co] = gy[co];
    for (std::size_t j = 0; j < len; ++j) {
      const double* wr = wb + j * CO;
      double* gwr = gwb + j * CO;
      const double xv = x[j];
      double acc = 0.0;
      for (std::size_t co = 0; co < CO; ++co) {
        acc += wr[co] * g[co];
        gwr[co] += xv * g[co];
      }
      if (gx) gx[j] += acc;
    }
  } else {
    for (std::size_t j = 0; j < len; ++j) {
      const double* wr = wb + j * co_dyn;
      double* gwr = gwb + j * co_dyn;
      const double xv = x[j];
      double acc = 0.0;
      for (std::size_t co = 0; co < co_dyn; ++co) {
        acc += wr[co] * gy[co];
        gwr[co] += xv * gy[co];
      }
      if (gx) gx[j] += acc;
    }
  }
}

// For a fixed (kd, kh) the k taps along w read k * c_in contiguous inputs and
// the matching (kw, c_in, c_out) weight block is contiguous too, so interior
// voxels take one run of k * c_in taps; border voxels go tap by tap.
template <std::size_t CO>
void conv_forward_loops(const ConvGeometry& g, const double* in, const double* w, double* o) {
  const std::size_t ci_n = g.c_in, co_n = g.c_out, k = g.k;
  const std::size_t tap_block = ci_n * co_n;
  const auto [lo, hi] = interior_w(g);
  auto border = [&](const double* irow, const double* wb, double* y, std::size_t ow) {
    for (std::size_t kw = 0; kw < k; ++kw) {
      const auto iw = tap(ow, kw, g, g.in_w);
      if (iw >= 0) accumulate_run<CO>(irow + static_cast<std::size_t>(iw) * ci_n, wb + kw * tap_block, y, ci_n, co_n);
    }
  };
  for (std::size_t od = 0; od < g.out_d; ++od) {
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      double* orow = o + (od * g.out_h + oh) * g.out_w * co_n;
      for (std::size_t kd = 0; kd < k; ++kd) {
        const auto id = tap(od, kd, g, g.in_d);
        if (id < 0) continue;
        for (std::size_t kh = 0; kh < k; ++kh) {
          const auto ih = tap(oh, kh, g, g.in_h);
          if (ih < 0) continue;
          const double* irow = in + (static_cast<std::size_t>(id) * g.in_h + static_cast<std::size_t>(ih)) * g.in_w * ci_n;
          const double* wb = w + (kd * k + kh) * k * tap_block;
          for (std::size_t ow = 0; ow < lo; ++ow) border(irow, wb, orow + ow * co_n, ow);
          const double* x = irow + (lo * g.stride - static_cast<std::size_t>(g.pad)) * ci_n;
          for (std::size_t ow = lo; ow < hi; ++ow, x += g.stride * ci_n) {
            accumulate_run<CO>(x, wb, orow + ow * co_n, k * ci_n, co_n);
          }
          for (std::size_t ow = std::max(lo, hi); ow < g.out_w; ++ow) border(irow, wb, orow + ow * co_n, ow);
        }
      }
    }
  }
}

template <std::size_t CO>
void conv_backward_loops(const ConvGeometry& g, const double* in, const double* w, const double* go,
                         double* gi, double* gw) {
  const std::size_t ci_n = g.c_in, co_n = g.c_out, k = g.k;
  const std::size_t tap_block = ci_n * co_n;
  const auto [lo, hi] = interior_w(g);
  auto border = [&](std::size_t row_off, std::size_t wb_off, const double* gy, std::size_t ow) {
    for (std::size_t kw = 0; kw < k; ++kw) {
      const auto iw = tap(ow, kw, g, g.in_w);
      if (iw < 0) continue;
      const std::size_t x_off = row_off + static_cast<std::size_t>(iw) * ci_n;
      const std::size_t wk_off = wb_off + kw * tap_block;
      backprop_run<CO>(in + x_off, w + wk_off, gy, gi ? gi + x_off : nullptr, gw + wk_off, ci_n, co_n);
    }
  };
  for (std::size_t od = 0; od < g.out_d; ++od) {
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      const double* gorow = go + (od * g.out_h + oh) * g.out_w * co_n;
      for (std::size_t kd = 0; kd < k; ++kd) {
        const auto id = tap(od, kd, g, g.in_d);
        if (id < 0) continue;
        for (std::size_t kh = 0; kh < k; ++kh) {
          const auto ih = tap(oh, kh, g, g.in_h);
          if (ih < 0) continue;
          const std::size_t row_off = (static_cast<std::size_t>(id) * g.in_h + static_cast<std::size_t>(ih)) * g.in_w * ci_n;
          const std::size_t wb_off = (kd * k + kh) * k * tap_block;
          for (std::size_t ow = 0; ow < lo; ++ow) border(row_off, wb_off, gorow + ow * co_n, ow);
          std::size_t x_off = row_off + (lo * g.stride - static_cast<std::size_t>(g.pad)) * ci_n;
          for (std::size_t ow = lo; ow < hi; ++ow, x_off += g.stride * ci_n) {
            backprop_run<CO>(in + x_off, w + wb_off, gorow + ow * co_n, gi ? gi + x_off : nullptr, gw + wb_off,
                             k * ci_n, co_n);
          }
          for (std::size_t ow = std::max(lo, hi); ow < g.out_w; ++ow) border(row_off, wb_off, gorow + ow * co_n, ow);
        }
      }
    }
  }
}

}  // namespace detail

/// 3-D convolution over a (D, H, W, C_in) tensor. Padding::same keeps the
/// spatial extent for odd k at stride 1; Padding::none is a valid convolution.
inline Tensor conv3d_forward(const Tensor& input, const ConvKernel& kernel, Padding padding = Padding::same,
                             std::size_t stride = 1) {
  const auto g = detail::conv_geometry(input, kernel, padding, stride);
  Tensor out({g.out_d, g.out_h, g.out_w, g.c_out});
  double* o = out.raw();
  detail::dispatch_channels(g.c_out, [&]<std::size_t CO>() {
    detail::conv_forward_loops<CO>(g, input.raw(), kernel.weights.raw(), o);
  });
  const std::size_t voxels = g.out_d * g.out_h * g.out_w;
  for (std::size_t v = 0; v < voxels; ++v) {
    for (std::size_t co = 0; co < g.c_out; ++co) o[v * g.c_out + co] += kernel.bias[co];
  }
  return out;
}

/// Gradients of a conv3d_forward call. With `need_input_grad` false the
/// returned input gradient is left empty (first layer of a network).
inline ConvGrads conv3d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_out,
                                 Padding padding = Padding::same, std::size_t stride = 1,
                                 bool need_input_grad = true) {
  const auto g = detail::conv_geometry(input, kernel, padding, stride);
  const Shape expected{g.out_d, g.out_h, g.out_w, g.c_out};
  if (grad_out.shape() != expected) {
    throw ConfigError("conv3d_backward: grad_out " + shape_str(grad_out.shape()) +
                      " does not match forward output " + shape_str(expected));
  }
  ConvGrads grads{need_input_grad ? Tensor(input.shape()) : Tensor(), ConvKernel::zeros(g.k, g.c_in, g.c_out)};
  const double* go = grad_out.raw();
  double* gi = need_input_grad ? grads.input.raw() : nullptr;
  detail::dispatch_channels(g.c_out, [&]<std::size_t CO>() {
    detail::conv_backward_loops<CO>(g, input.raw(), kernel.weights.raw(), go, gi,
                                    grads.kernel.weights.raw());
  });
  const std::size_t co_n = g.c_out;
  const std::size_t voxels = g.out_d * g.out_h * g.out_w;
  for (std::size_t v = 0; v < voxels; ++v) {
    for (std::size_t co = 0; co < co_n; ++co) grads.kernel.bias[co] += go[v * co_n + co];
  }
  return grads;
}

struct PoolResult {
  Tensor output;
  /// Flat index into the input of the winning element, one per output element.
  std::vector<std::size_t> argmax;
};

/// 2x2x2 max pooling with stride 2. Ties resolve to the first element in
/// (d, h, w) scan order.
inline PoolResult maxpool3d_forward(const Tensor& input) {
  require_rank(input, 4, "maxpool3d");
  static constexpr const char* axis_names[] = {"depth", "height", "width"};
  for (std::size_t a = 0; a < 3; ++a) {
    if (input.extent(a) % 2 != 0) {
      throw ConfigError(std::string("maxpool3d: ") + axis_names[a] + " extent " +
                        std::to_string(input.extent(a)) + " is not divisible by 2");
    }
  }
  const std::size_t D = input.extent(0), H = input.extent(1), W = input.extent(2), C = input.extent(3);
  PoolResult r{Tensor({D / 2, H / 2, W / 2, C}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t d = 0; d < D / 2; ++d) {
    for (std::size_t h = 0; h < H / 2; ++h) {
      for (std::size_t w = 0; w < W / 2; ++w) {
        for (std::size_t c = 0; c < C; ++c, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = ((2 * d * H + 2 * h) * W + 2 * w) * C + c;
          for (std::size_t kd = 0; kd < 2; ++kd) {
            for (std::size_t kh = 0; kh < 2; ++kh) {
              for (std::size_t kw = 0; kw < 2; ++kw) {
                const std::size_t idx = (((2 * d + kd) * H + 2 * h + kh) * W + 2 * w + kw) * C + c;
                if (input[idx] > best) {
                  best = input[idx];
                  best_idx = idx;
                }
              }
            }
          }
          r.output[o] = best;
          r.argmax[o] = best_idx;
        }
      }
    }
  }
  return r;
}

inline Tensor maxpool3d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                                 const Tensor& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw ConfigError("maxpool3d_backward: argmax map has " + std::to_string(argmax.size()) +
                      " entries but grad_out " + shape_str(grad_out.shape()) + " has " +
                      std::to_string(grad_out.size()));
  }
  Tensor gi(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) gi[argmax[o]] += grad_out[o];
  return gi;
}

namespace detail {

inline void check_transposed(const Tensor& input, const ConvKernel& kernel) {
  require_rank(input, 4, "transposed_conv3d");
  kernel.validate();
  if (kernel.size() != 2) {
    throw ConfigError("transposed_conv3d: kernel size must be 2, got " + std::to_string(kernel.size()));
  }
  if (kernel.in_channels() != input.extent(3)) {
    throw ConfigError("transposed_conv3d: kernel " + shape_str(kernel.weights.shape()) +
                      " expects C_in " + std::to_string(kernel.in_channels()) + " but input " +
                      shape_str(input.shape()) + " has " + std::to_string(input.extent(3)));
  }
}

}  // namespace detail

/// 2x2x2 transposed convolution with stride 2: each input voxel scatters a
/// kernel-weighted 2x2x2 block, so spatial extents double exactly.
inline Tensor transposed_conv3d_forward(const Tensor& input, const ConvKernel& kernel) {
  detail::check_transposed(input, kernel);
  const std::size_t D = input.extent(0), H = input.extent(1), W = input.extent(2);
  const std::size_t ci_n = kernel.in_channels(), co_n = kernel.out_channels();
  Tensor out({2 * D, 2 * H, 2 * W, co_n});
  const double* w = kernel.weights.raw();
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t x = 0; x < W; ++x) {
        const double* in = input.raw() + ((d * H + h) * W + x) * ci_n;
        for (std::size_t kd = 0; kd < 2; ++kd) {
          for (std::size_t kh = 0; kh < 2; ++kh) {
            for (std::size_t kw = 0; kw < 2; ++kw) {
              double* y = out.raw() + (((2 * d + kd) * 2 * H + 2 * h + kh) * 2 * W + 2 * x + kw) * co_n;
              const double* wk = w + ((kd * 2 + kh) * 2 + kw) * ci_n * co_n;
              for (std::size_t ci = 0; ci < ci_n; ++ci) {
                const double xv = in[ci];
                const double* wr = wk + ci * co_n;
                for (std::size_t co = 0; co < co_n; ++co) y[co] += xv * wr[co];
              }
              for (std::size_t co = 0; co < co_n; ++co) y[co] += kernel.bias[co];
            }
          }
        }
      }
    }
  }
  return out;
}

inline ConvGrads transposed_conv3d_backward(const Tensor& input, const ConvKernel& kernel,
                                            const Tensor& grad_out) {
  detail::check_transposed(input, kernel);
  const std::size_t D = input.extent(0), H = input.extent(1), W = input.extent(2);
  const std::size_t ci_n = kernel.in_channels(), co_n = kernel.out_channels();
  const Shape expected{2 * D, 2 * H, 2 * W, co_n};
  if (grad_out.shape() != expected) {
    throw ConfigError("transposed_conv3d_backward: grad_out " + shape_str(grad_out.shape()) +
                      " does not match forward output " + shape_str(expected));
  }
  ConvGrads grads{Tensor(input.shape()), ConvKernel::zeros(2, ci_n, co_n)};
  const double* w = kernel.weights.raw();
  double* gw = grads.kernel.weights.raw();
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t in_off = ((d * H + h) * W + x) * ci_n;
        const double* in = input.raw() + in_off;
        double* gi = grads.input.raw() + in_off;
        for (std::size_t kd = 0; kd < 2; ++kd) {
          for (std::size_t kh = 0; kh < 2; ++kh) {
            for (std::size_t kw = 0; kw < 2; ++kw) {
              const double* gy =
                  grad_out.raw() + (((2 * d + kd) * 2 * H + 2 * h + kh) * 2 * W + 2 * x + kw) * co_n;
              const std::size_t wk_off = ((kd * 2 + kh) * 2 + kw) * ci_n * co_n;
              for (std::size_t ci = 0; ci < ci_n; ++ci) {
                const double* wr = w + wk_off + ci * co_n;
                double* gwr = gw + wk_off + ci * co_n;
                double acc = 0.0;
                for (std::size_t co = 0; co < co_n; ++co) {
                  acc += wr[co] * gy[co];
                  gwr[co] += in[ci] * gy[co];
                }
                gi[ci] += acc;
              }
              for (std::size_t co = 0; co < co_n; ++co) grads.kernel.bias[co] += gy[co];
            }
          }
        }
      }
    }
  }
  return grads;
}

inline Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Passes the gradient where the forward input was strictly positive.
inline Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  require_same_shape(input, grad_out, "relu_backward");
  Tensor gi(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) gi[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return gi;
}

/// Softmax over the last axis, stabilized by subtracting the per-voxel max.
inline Tensor softmax_channels(const Tensor& logits) {
  const std::size_t c = logits.extent(logits.rank() - 1);
  if (c < 2) throw ConfigError("softmax_channels: need at least 2 channels, got " + std::to_string(c));
  if (!logits.all_finite()) throw NumericError("softmax_channels: non-finite logits");
  Tensor out(logits.shape());
  const std::size_t voxels = logits.size() / c;
  for (std::size_t v = 0; v < voxels; ++v) {
    const double* z = logits.raw() + v * c;
    double* p = out.raw() + v * c;
    const double zmax = *std::max_element(z, z + c);
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      p[k] = std::exp(z[k] - zmax);
      total += p[k];
    }
    for (std::size_t k = 0; k < c; ++k) p[k] /= total;
  }
  return out;
}

/// Gradient w.r.t. the logits given the softmax output and dL/dp.
inline Tensor softmax_channels_backward(const Tensor& probs, const Tensor& grad_probs) {
  require_same_shape(probs, grad_probs, "softmax_channels_backward");
  const std::size_t c = probs.extent(probs.rank() - 1);
  Tensor gz(probs.shape());
  const std::size_t voxels = probs.size() / c;
  for (std::size_t v = 0; v < voxels; ++v) {
    const double* p = probs.raw() + v * c;
    const double* gp = grad_probs.raw() + v * c;
    double inner = 0.0;
    for (std::size_t k = 0; k < c; ++k) inner += p[k] * gp[k];
    for (std::size_t k = 0; k < c; ++k) gz[v * c + k] = p[k] * (gp[k] - inner);
  }
  return gz;
}

/// Channel concatenation: channels of `a` first, then `b`.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  for (std::size_t ax = 0; ax < 3; ++ax) {
    if (a.extent(ax) != b.extent(ax)) {
      throw ConfigError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
    }
  }
  const std::size_t ca = a.extent(3), cb = b.extent(3);
  Tensor out({a.extent(0), a.extent(1), a.extent(2), ca + cb});
  const std::size_t voxels = a.size() / ca;
  for (std::size_t v = 0; v < voxels; ++v) {
    std::copy_n(a.raw() + v * ca, ca, out.raw() + v * (ca + cb));
    std::copy_n(b.raw() + v * cb, cb, out.raw() + v * (ca + cb) + ca);
  }
  return out;
}

inline std::pair<Tensor, Tensor> concat_channels_backward(const Tensor& grad_out, std::size_t channels_a) {
  require_rank(grad_out, 4, "concat_channels_backward");
  const std::size_t c = grad_out.extent(3);
  if (channels_a == 0 || channels_a >= c) {
    throw ConfigError("concat_channels_backward: split " + std::to_string(channels_a) +
                      " outside (0, " + std::to_string(c) + ")");
  }
  const std::size_t cb = c - channels_a;
  const std::size_t D = grad_out.extent(0), H = grad_out.extent(1), W = grad_out.extent(2);
  Tensor ga({D, H, W, channels_a}), gb({D, H, W, cb});
  const std::size_t voxels = D * H * W;
  for (std::size_t v = 0; v < voxels; ++v) {
    std::copy_n(grad_out.raw() + v * c, channels_a, ga.raw() + v * channels_a);
    std::copy_n(grad_out.raw() + v * c + channels_a, cb, gb.raw() + v * cb);
  }
  return {std::move(ga), std::move(gb)};
}

}  // namespace tversky::nn
