#pragma once

// Naive reference implementations used as independent oracles. These stay
// deliberately literal (explicit padding reads, scatter-form transposed
// convolution) and share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <vector>

#include "camp/tensor.hpp"

namespace oracle {

using camp::Tensor;

inline double pad_read(const Tensor<double>& t, int n, int y, int x, int c) {
  if (y < 0 || x < 0 || y >= static_cast<int>(t.dim(1)) || x >= static_cast<int>(t.dim(2)))
    return 0.0;
  return t.at4(n, y, x, c);
}

// Cross-correlation with explicit zero padding. Kernel layout [k,k,Cin,Cout].
inline Tensor<double> conv2d_ref(const Tensor<double>& in, const Tensor<double>& ker,
                                 const Tensor<double>& bias, int stride, int out_h, int out_w,
                                 int pad_y, int pad_x) {
  const int N = static_cast<int>(in.dim(0));
  const int Ci = static_cast<int>(in.dim(3));
  const int k = static_cast<int>(ker.dim(0));
  const int Co = static_cast<int>(ker.dim(3));
  Tensor<double> out({static_cast<std::size_t>(N), static_cast<std::size_t>(out_h),
                      static_cast<std::size_t>(out_w), static_cast<std::size_t>(Co)});
  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox)
        for (int co = 0; co < Co; ++co) {
          double acc = bias[co];
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx)
              for (int ci = 0; ci < Ci; ++ci)
                acc += pad_read(in, n, oy * stride + dy - pad_y, ox * stride + dx - pad_x, ci) *
                       ker.at4(dy, dx, ci, co);
          out.at4(n, oy, ox, co) = acc;
        }
  return out;
}

// Scatter-form transposed convolution. Kernel layout [k,k,Cout,Cin]; output
// spatial size is exactly stride * input size, writes falling outside are
// cropped.
inline Tensor<double> conv2d_transpose_ref(const Tensor<double>& in, const Tensor<double>& ker,
                                           const Tensor<double>& bias, int stride) {
  const int N = static_cast<int>(in.dim(0));
  const int H = static_cast<int>(in.dim(1));
  const int W = static_cast<int>(in.dim(2));
  const int Ci = static_cast<int>(in.dim(3));
  const int k = static_cast<int>(ker.dim(0));
  const int Co = static_cast<int>(ker.dim(2));
  const int OH = H * stride, OW = W * stride;
  const int pb = std::max(k - stride, 0) / 2;
  Tensor<double> out({static_cast<std::size_t>(N), static_cast<std::size_t>(OH),
                      static_cast<std::size_t>(OW), static_cast<std::size_t>(Co)});
  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox)
        for (int co = 0; co < Co; ++co) out.at4(n, oy, ox, co) = bias[co];
  for (int n = 0; n < N; ++n)
    for (int iy = 0; iy < H; ++iy)
      for (int ix = 0; ix < W; ++ix)
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const int oy = iy * stride + dy - pb;
            const int ox = ix * stride + dx - pb;
            if (oy < 0 || ox < 0 || oy >= OH || ox >= OW) continue;
            for (int co = 0; co < Co; ++co)
              for (int ci = 0; ci < Ci; ++ci)
                out.at4(n, oy, ox, co) += in.at4(n, iy, ix, ci) * ker.at4(dy, dx, co, ci);
          }
  return out;
}

inline Tensor<double> maxpool2_ref(const Tensor<double>& in) {
  const int N = static_cast<int>(in.dim(0));
  const int H = static_cast<int>(in.dim(1));
  const int W = static_cast<int>(in.dim(2));
  const int C = static_cast<int>(in.dim(3));
  Tensor<double> out({static_cast<std::size_t>(N), static_cast<std::size_t>(H / 2),
                      static_cast<std::size_t>(W / 2), static_cast<std::size_t>(C)});
  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < H / 2; ++oy)
      for (int ox = 0; ox < W / 2; ++ox)
        for (int c = 0; c < C; ++c)
          out.at4(n, oy, ox, c) =
              std::max(std::max(in.at4(n, oy * 2, ox * 2, c), in.at4(n, oy * 2, ox * 2 + 1, c)),
                       std::max(in.at4(n, oy * 2 + 1, ox * 2, c), in.at4(n, oy * 2 + 1, ox * 2 + 1, c)));
  return out;
}

inline Tensor<double> dense_ref(const Tensor<double>& in, const Tensor<double>& w,
                                const Tensor<double>& b) {
  const int N = static_cast<int>(in.dim(0));
  const int F = static_cast<int>(in.dim(1));
  const int U = static_cast<int>(w.dim(1));
  Tensor<double> out({static_cast<std::size_t>(N), static_cast<std::size_t>(U)});
  for (int n = 0; n < N; ++n)
    for (int u = 0; u < U; ++u) {
      double acc = b[u];
      for (int f = 0; f < F; ++f) acc += in.at2(n, f) * w.at2(f, u);
      out.at2(n, u) = acc;
    }
  return out;
}

// Train-mode batch normalization with population statistics.
inline Tensor<double> batchnorm_ref(const Tensor<double>& in, const std::vector<double>& gamma,
                                    const std::vector<double>& beta, double eps) {
  const int C = static_cast<int>(in.dim(3));
  const std::size_t M = in.size() / C;
  Tensor<double> out(in.shape());
  for (int c = 0; c < C; ++c) {
    double mean = 0.0;
    for (std::size_t m = 0; m < M; ++m) mean += in[m * C + c];
    mean /= static_cast<double>(M);
    double var = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      const double d = in[m * C + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m)
      out[m * C + c] = gamma[c] * (in[m * C + c] - mean) / std::sqrt(var + eps) + beta[c];
  }
  return out;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
