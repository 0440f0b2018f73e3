#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "camp/autodiff.hpp"
#include "camp/conv_kernels.hpp"
#include "camp/errors.hpp"
#include "camp/rng.hpp"

namespace camp {

enum class Padding { same, valid };

inline int conv_out_size(int in, int k, int stride, Padding pad) {
  if (pad == Padding::same) return (in + stride - 1) / stride;
  return (in - k) / stride + 1;
}

// Zero padding before the first row/column; any odd remainder goes to the
// bottom/right edge.
inline int conv_pad_begin(int in, int k, int stride, Padding pad) {
  if (pad == Padding::valid) return 0;
  const int out = conv_out_size(in, k, stride, pad);
  const int total = std::max((out - 1) * stride + k - in, 0);
  return total / 2;
}

inline int convt_pad_begin(int k, int stride) { return std::max(k - stride, 0) / 2; }

namespace detail {

template <class T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                     int stride, std::size_t kernel_in_axis, std::size_t kernel_out_axis,
                     const char* op) {
  if (x.rank() != 4) throw numeric_error(std::string(op) + ": input must be rank 4 (NHWC)");
  if (kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1))
    throw numeric_error(std::string(op) + ": kernel must be [k,k,...] with square window");
  if (stride < 1) throw numeric_error(std::string(op) + ": non-positive stride");
  if (kernel.dim(kernel_in_axis) != x.dim(3))
    throw numeric_error(std::string(op) + ": channel mismatch, input has " +
                        std::to_string(x.dim(3)) + " channels, kernel expects " +
                        std::to_string(kernel.dim(kernel_in_axis)));
  if (bias.rank() != 1 || bias.dim(0) != kernel.dim(kernel_out_axis))
    throw numeric_error(std::string(op) + ": bias length must equal output channels");
}

template <class T>
void fill_bias(Tensor<T>& out, const Tensor<T>& bias) {
  const int C = static_cast<int>(bias.dim(0));
  const std::size_t positions = out.size() / C;
  T* d = out.data();
  for (std::size_t p = 0; p < positions; ++p)
    for (int c = 0; c < C; ++c) d[p * C + c] = bias[c];
}

}  // namespace detail

/// Strided cross-correlation plus bias. Kernel layout [k,k,C_in,C_out].
template <class T>
int conv2d(Graph<T>& g, int x, int kernel, int bias, int stride, Padding pad) {
  const Tensor<T>& in = g.value(x);
  const Tensor<T>& ker = g.value(kernel);
  const Tensor<T>& b = g.value(bias);
  detail::check_conv_args(in, ker, b, stride, 2, 3, "conv2d");

  const int N = static_cast<int>(in.dim(0)), H = static_cast<int>(in.dim(1)),
            W = static_cast<int>(in.dim(2)), Ci = static_cast<int>(in.dim(3));
  const int k = static_cast<int>(ker.dim(0)), Co = static_cast<int>(ker.dim(3));
  const int OH = conv_out_size(H, k, stride, pad), OW = conv_out_size(W, k, stride, pad);
  const int py = conv_pad_begin(H, k, stride, pad), px = conv_pad_begin(W, k, stride, pad);
  if (OH < 1 || OW < 1) throw numeric_error("conv2d: output would be empty");

  Tensor<T> out({static_cast<std::size_t>(N), static_cast<std::size_t>(OH),
                 static_cast<std::size_t>(OW), static_cast<std::size_t>(Co)});
  detail::fill_bias(out, b);
  kernels::conv_gather_out(in.data(), N, H, W, Ci, ker.data(), k, Co, stride, py, px, out.data(),
                           OH, OW);

  const int id = g.add("conv2d", {x, kernel, bias}, std::move(out));
  g.set_back(id, [id, x, kernel, bias, N, H, W, Ci, k, Co, stride, py, px, OH, OW](Graph<T>& gg) {
    const Tensor<T>& go = gg.grad(id);
    if (gg.needs_grad(x))
      kernels::conv_gather_in(go.data(), N, OH, OW, Co, gg.value(kernel).data(), k, Ci, stride, py,
                              px, gg.grad(x).data(), H, W);
    if (gg.needs_grad(kernel))
      kernels::conv_grad_kernel(gg.value(x).data(), N, H, W, Ci, go.data(), OH, OW, Co, k, stride,
                                py, px, gg.grad(kernel).data());
    if (gg.needs_grad(bias))
      kernels::sum_per_channel(go.data(), static_cast<std::size_t>(N) * OH * OW, Co,
                               gg.grad(bias).data());
  });
  return id;
}

/// Fractionally-strided (transposed) convolution; output spatial size is
/// exactly stride times the input size. Kernel layout [k,k,C_out,C_in] so
/// that with a shared kernel this operation is the exact adjoint of conv2d
/// at matching stride and "same" padding.
template <class T>
int conv2d_transpose(Graph<T>& g, int x, int kernel, int bias, int stride) {
  const Tensor<T>& in = g.value(x);
  const Tensor<T>& ker = g.value(kernel);
  const Tensor<T>& b = g.value(bias);
  detail::check_conv_args(in, ker, b, stride, 3, 2, "conv2d_transpose");

  const int N = static_cast<int>(in.dim(0)), H = static_cast<int>(in.dim(1)),
            W = static_cast<int>(in.dim(2)), Ci = static_cast<int>(in.dim(3));
  const int k = static_cast<int>(ker.dim(0)), Co = static_cast<int>(ker.dim(2));
  const int OH = H * stride, OW = W * stride;
  const int pb = convt_pad_begin(k, stride);

  Tensor<T> out({static_cast<std::size_t>(N), static_cast<std::size_t>(OH),
                 static_cast<std::size_t>(OW), static_cast<std::size_t>(Co)});
  detail::fill_bias(out, b);
  kernels::conv_gather_in(in.data(), N, H, W, Ci, ker.data(), k, Co, stride, pb, pb, out.data(),
                          OH, OW);

  const int id = g.add("conv2d_transpose", {x, kernel, bias}, std::move(out));
  g.set_back(id, [id, x, kernel, bias, N, H, W, Ci, k, Co, stride, pb, OH, OW](Graph<T>& gg) {
    const Tensor<T>& go = gg.grad(id);
    if (gg.needs_grad(x))
      kernels::conv_gather_out(go.data(), N, OH, OW, Co, gg.value(kernel).data(), k, Ci, stride,
                               pb, pb, gg.grad(x).data(), H, W);
    if (gg.needs_grad(kernel))
      kernels::conv_grad_kernel(go.data(), N, OH, OW, Co, gg.value(x).data(), H, W, Ci, k, stride,
                                pb, pb, gg.grad(kernel).data());
    if (gg.needs_grad(bias))
      kernels::sum_per_channel(go.data(), static_cast<std::size_t>(N) * OH * OW, Co,
                               gg.grad(bias).data());
  });
  return id;
}

/// 2x2 max pooling with stride 2. Gradient flows only to each window's
/// argmax; ties go to the first element in row-major window order.
template <class T>
int maxpool2d(Graph<T>& g, int x) {
  const Tensor<T>& in = g.value(x);
  if (in.rank() != 4) throw numeric_error("maxpool2d: input must be rank 4 (NHWC)");
  const int N = static_cast<int>(in.dim(0)), H = static_cast<int>(in.dim(1)),
            W = static_cast<int>(in.dim(2)), C = static_cast<int>(in.dim(3));
  if (H % 2 != 0 || W % 2 != 0)
    throw numeric_error("maxpool2d: odd spatial dimension " + std::to_string(H) + "x" +
                        std::to_string(W));
  Tensor<T> out({static_cast<std::size_t>(N), static_cast<std::size_t>(H / 2),
                 static_cast<std::size_t>(W / 2), static_cast<std::size_t>(C)});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  kernels::maxpool2_forward(in.data(), N, H, W, C, out.data(), argmax->data());

  const int id = g.add("maxpool2d", {x}, std::move(out));
  g.set_back(id, [id, x, argmax](Graph<T>& gg) {
    if (!gg.needs_grad(x)) return;
    const Tensor<T>& go = gg.grad(id);
    kernels::maxpool2_backward(go.data(), go.size(), argmax->data(), gg.grad(x).data());
  });
  return id;
}

/// Affine map out = in * w + b for in [N,F], w [F,U], b [U].
template <class T>
int dense(Graph<T>& g, int x, int w, int b) {
  const Tensor<T>& in = g.value(x);
  const Tensor<T>& wt = g.value(w);
  const Tensor<T>& bt = g.value(b);
  if (in.rank() != 2 || wt.rank() != 2 || bt.rank() != 1)
    throw numeric_error("dense: expected input [N,F], weights [F,U], bias [U]");
  if (in.dim(1) != wt.dim(0) || wt.dim(1) != bt.dim(0))
    throw numeric_error("dense: dimension mismatch, input [N," + std::to_string(in.dim(1)) +
                        "] vs weights " + Tensor<T>::shape_string(wt.shape()));
  const int N = static_cast<int>(in.dim(0)), F = static_cast<int>(in.dim(1)),
            U = static_cast<int>(wt.dim(1));
  Tensor<T> out({static_cast<std::size_t>(N), static_cast<std::size_t>(U)});
  kernels::dense_forward(in.data(), N, F, wt.data(), bt.data(), U, out.data());

  const int id = g.add("dense", {x, w, b}, std::move(out));
  g.set_back(id, [id, x, w, b, N, F, U](Graph<T>& gg) {
    const Tensor<T>& go = gg.grad(id);
    // dense_backward writes all three gradients in one pass; route discarded
    // ones into scratch so leaf flags stay respected.
    Tensor<T> scratch_in, scratch_w, scratch_b;
    T* gi = gg.needs_grad(x) ? gg.grad(x).data()
                             : (scratch_in = Tensor<T>(gg.value(x).shape())).data();
    T* gw = gg.needs_grad(w) ? gg.grad(w).data()
                             : (scratch_w = Tensor<T>(gg.value(w).shape())).data();
    T* gb = gg.needs_grad(b) ? gg.grad(b).data()
                             : (scratch_b = Tensor<T>(gg.value(b).shape())).data();
    kernels::dense_backward(gg.value(x).data(), N, F, gg.value(w).data(), go.data(), U, gi, gw,
                            gb);
  });
  return id;
}

/// Per-channel batch normalization over NHWC input. Train mode normalizes by
/// batch statistics (population variance) and updates the running estimates
/// with the given momentum; infer mode uses the running estimates. gamma and
/// beta are trainable; the running statistics are not.
template <class T>
int batchnorm2d(Graph<T>& g, int x, int gamma, int beta, Tensor<T>& running_mean,
                Tensor<T>& running_var, bool train, T eps = T(1e-5), T momentum = T(0.9)) {
  const Tensor<T>& in = g.value(x);
  if (in.rank() != 4) throw numeric_error("batchnorm2d: input must be rank 4 (NHWC)");
  const int C = static_cast<int>(in.dim(3));
  const std::size_t M = in.size() / C;
  if (g.value(gamma).size() != static_cast<std::size_t>(C) ||
      g.value(beta).size() != static_cast<std::size_t>(C) ||
      running_mean.size() != static_cast<std::size_t>(C) ||
      running_var.size() != static_cast<std::size_t>(C))
    throw numeric_error("batchnorm2d: parameter length must equal channel count");
  if (train && M < 2) throw numeric_error("batchnorm2d: degenerate batch (need N*H*W >= 2)");

  const Tensor<T>& gam = g.value(gamma);
  const Tensor<T>& bet = g.value(beta);
  auto x_hat = std::make_shared<Tensor<T>>(in.shape());
  auto inv_std = std::make_shared<std::vector<T>>(C);

  if (train) {
    std::vector<T> mean(C, T{}), var(C, T{});
    const T* d = in.data();
    for (std::size_t m = 0; m < M; ++m)
      for (int c = 0; c < C; ++c) mean[c] += d[m * C + c];
    for (int c = 0; c < C; ++c) mean[c] /= static_cast<T>(M);
    for (std::size_t m = 0; m < M; ++m)
      for (int c = 0; c < C; ++c) {
        const T dv = d[m * C + c] - mean[c];
        var[c] += dv * dv;
      }
    for (int c = 0; c < C; ++c) var[c] /= static_cast<T>(M);
    for (int c = 0; c < C; ++c) {
      (*inv_std)[c] = T(1) / std::sqrt(var[c] + eps);
      running_mean[c] = momentum * running_mean[c] + (T(1) - momentum) * mean[c];
      running_var[c] = momentum * running_var[c] + (T(1) - momentum) * var[c];
    }
    Tensor<T> out(in.shape());
    T* xh = x_hat->data();
    T* o = out.data();
    for (std::size_t m = 0; m < M; ++m)
      for (int c = 0; c < C; ++c) {
        const T h = (d[m * C + c] - mean[c]) * (*inv_std)[c];
        xh[m * C + c] = h;
        o[m * C + c] = gam[c] * h + bet[c];
      }
    const int id = g.add("batchnorm2d", {x, gamma, beta}, std::move(out));
    g.set_back(id, [id, x, gamma, beta, x_hat, inv_std, C, M](Graph<T>& gg) {
      const T* go = gg.grad(id).data();
      const T* xh = x_hat->data();
      std::vector<T> s1(C, T{}), s2(C, T{});
      for (std::size_t m = 0; m < M; ++m)
        for (int c = 0; c < C; ++c) {
          s1[c] += go[m * C + c];
          s2[c] += go[m * C + c] * xh[m * C + c];
        }
      if (gg.needs_grad(gamma)) {
        Tensor<T>& gg_gamma = gg.grad(gamma);
        for (int c = 0; c < C; ++c) gg_gamma[c] += s2[c];
      }
      if (gg.needs_grad(beta)) {
        Tensor<T>& gg_beta = gg.grad(beta);
        for (int c = 0; c < C; ++c) gg_beta[c] += s1[c];
      }
      if (gg.needs_grad(x)) {
        const Tensor<T>& gam2 = gg.value(gamma);
        T* gi = gg.grad(x).data();
        const T invM = T(1) / static_cast<T>(M);
        for (std::size_t m = 0; m < M; ++m)
          for (int c = 0; c < C; ++c)
            gi[m * C + c] += gam2[c] * (*inv_std)[c] *
                             (go[m * C + c] - s1[c] * invM - xh[m * C + c] * s2[c] * invM);
      }
    });
    return id;
  }

  // inference path: fixed statistics
  for (int c = 0; c < C; ++c) (*inv_std)[c] = T(1) / std::sqrt(running_var[c] + eps);
  Tensor<T> out(in.shape());
  const T* d = in.data();
  T* xh = x_hat->data();
  T* o = out.data();
  for (std::size_t m = 0; m < M; ++m)
    for (int c = 0; c < C; ++c) {
      const T h = (d[m * C + c] - running_mean[c]) * (*inv_std)[c];
      xh[m * C + c] = h;
      o[m * C + c] = gam[c] * h + bet[c];
    }
  const int id = g.add("batchnorm2d_infer", {x, gamma, beta}, std::move(out));
  g.set_back(id, [id, x, gamma, beta, x_hat, inv_std, C, M](Graph<T>& gg) {
    const T* go = gg.grad(id).data();
    const T* xh = x_hat->data();
    if (gg.needs_grad(gamma) || gg.needs_grad(beta)) {
      std::vector<T> s1(C, T{}), s2(C, T{});
      for (std::size_t m = 0; m < M; ++m)
        for (int c = 0; c < C; ++c) {
          s1[c] += go[m * C + c];
          s2[c] += go[m * C + c] * xh[m * C + c];
        }
      if (gg.needs_grad(gamma)) {
        Tensor<T>& gg_gamma = gg.grad(gamma);
        for (int c = 0; c < C; ++c) gg_gamma[c] += s2[c];
      }
      if (gg.needs_grad(beta)) {
        Tensor<T>& gg_beta = gg.grad(beta);
        for (int c = 0; c < C; ++c) gg_beta[c] += s1[c];
      }
    }
    if (gg.needs_grad(x)) {
      const Tensor<T>& gam2 = gg.value(gamma);
      T* gi = gg.grad(x).data();
      for (std::size_t m = 0; m < M; ++m)
        for (int c = 0; c < C; ++c) gi[m * C + c] += go[m * C + c] * gam2[c] * (*inv_std)[c];
    }
  });
  return id;
}

template <class T>
int leaky_relu(Graph<T>& g, int x, T alpha) {
  const Tensor<T>& in = g.value(x);
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T v = in[i];
    const T a = alpha * v;
    out[i] = v > a ? v : a;
  }
  const int id = g.add("leaky_relu", {x}, std::move(out));
  g.set_back(id, [id, x, alpha](Graph<T>& gg) {
    if (!gg.needs_grad(x)) return;
    const Tensor<T>& go = gg.grad(id);
    const Tensor<T>& in2 = gg.value(x);
    Tensor<T>& gi = gg.grad(x);
    for (std::size_t i = 0; i < go.size(); ++i)
      gi[i] += go[i] * (in2[i] > T{0} ? T{1} : alpha);
  });
  return id;
}

/// Numerically stable logistic squashing.
template <class T>
int sigmoid(Graph<T>& g, int x) {
  const Tensor<T>& in = g.value(x);
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T v = in[i];
    if (v >= T{0}) {
      out[i] = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T{1} + e);
    }
  }
  const int id = g.add("sigmoid", {x}, std::move(out));
  g.set_back(id, [id, x](Graph<T>& gg) {
    if (!gg.needs_grad(x)) return;
    const Tensor<T>& go = gg.grad(id);
    const Tensor<T>& s = gg.value(id);
    Tensor<T>& gi = gg.grad(x);
    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * s[i] * (T{1} - s[i]);
  });
  return id;
}

/// Inverted dropout: in train mode each element is zeroed with the given
/// probability and survivors are scaled by 1/(1-rate); inference is the
/// identity. The mask comes from the run's seeded generator.
template <class T>
int dropout(Graph<T>& g, int x, double rate, bool train, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw numeric_error("dropout: rate must lie in [0,1)");
  if (!train || rate == 0.0) return x;
  const Tensor<T>& in = g.value(x);
  const T scale = T(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(in.size());
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T m = rng.uniform() < rate ? T{0} : scale;
    (*mask)[i] = m;
    out[i] = in[i] * m;
  }
  const int id = g.add("dropout", {x}, std::move(out));
  g.set_back(id, [id, x, mask](Graph<T>& gg) {
    if (!gg.needs_grad(x)) return;
    const Tensor<T>& go = gg.grad(id);
    Tensor<T>& gi = gg.grad(x);
    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * (*mask)[i];
  });
  return id;
}

/// Copies the value into a new shape with identical element count.
template <class T>
int reshape(Graph<T>& g, int x, std::vector<std::size_t> shape) {
  Tensor<T> out = g.value(x).reshaped(std::move(shape));
  const int id = g.add("reshape", {x}, std::move(out));
  g.set_back(id, [id, x](Graph<T>& gg) {
    if (!gg.needs_grad(x)) return;
    const Tensor<T>& go = gg.grad(id);
    Tensor<T>& gi = gg.grad(x);
    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
  });
  return id;
}

template <class T>
int flatten(Graph<T>& g, int x) {
  const Tensor<T>& in = g.value(x);
  return reshape(g, x, {in.dim(0), in.size() / in.dim(0)});
}

/// Elementwise sum of two nodes with identical shapes.
template <class T>
int add(Graph<T>& g, int a, int b) {
  const Tensor<T>& va = g.value(a);
  const Tensor<T>& vb = g.value(b);
  if (!va.same_shape(vb)) throw numeric_error("add: shape mismatch");
  Tensor<T> out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  const int id = g.add("add", {a, b}, std::move(out));
  g.set_back(id, [id, a, b](Graph<T>& gg) {
    const Tensor<T>& go = gg.grad(id);
    if (gg.needs_grad(a)) {
      Tensor<T>& ga = gg.grad(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (gg.needs_grad(b)) {
      Tensor<T>& gb = gg.grad(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
    }
  });
  return id;
}

}  // namespace camp
