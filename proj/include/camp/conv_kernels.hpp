#pragma once

#include <cstddef>
#include <cstdint>

namespace camp::kernels {

// Raw NHWC loops shared by the graph operations. Every output element is
// accumulated in a fixed traversal order, so results do not depend on how
// callers might split the outer loops.

template <class T>
inline T dot_fixed(const T* __restrict__ a, const T* __restrict__ b, int n) {
  T s0{}, s1{}, s2{}, s3{}, s4{}, s5{}, s6{}, s7{};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 += a[i + 0] * b[i + 0];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
    s4 += a[i + 4] * b[i + 4];
    s5 += a[i + 5] * b[i + 5];
    s6 += a[i + 6] * b[i + 6];
    s7 += a[i + 7] * b[i + 7];
  }
  T tail{};
  for (; i < n; ++i) tail += a[i] * b[i];
  return (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))) + tail;
}

// dst[n,oy,ox,cd] += sum_{dy,dx,cs} src[n, oy*stride+dy-pad_y, ox*stride+dx-pad_x, cs]
//                                   * ker[dy,dx,cs,cd]
// Serves conv2d forward and the input gradient of conv2d_transpose.
template <class T>
void conv_gather_out(const T* __restrict__ src, int N, int SH, int SW, int Cs,
                     const T* __restrict__ ker, int k, int Cd, int stride, int pad_y, int pad_x,
                     T* __restrict__ dst, int OH, int OW) {
  for (int n = 0; n < N; ++n) {
    const T* sn = src + static_cast<std::size_t>(n) * SH * SW * Cs;
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        T* out = dst + ((static_cast<std::size_t>(n) * OH + oy) * OW + ox) * Cd;
        for (int dy = 0; dy < k; ++dy) {
          const int iy = oy * stride + dy - pad_y;
          if (iy < 0 || iy >= SH) continue;
          for (int dx = 0; dx < k; ++dx) {
            const int ix = ox * stride + dx - pad_x;
            if (ix < 0 || ix >= SW) continue;
            const T* s = sn + (static_cast<std::size_t>(iy) * SW + ix) * Cs;
            const T* kr = ker + static_cast<std::size_t>(dy * k + dx) * Cs * Cd;
            if (Cd == 1) {
              out[0] += dot_fixed(s, kr, Cs);
            } else {
              for (int cs = 0; cs < Cs; ++cs) {
                const T v = s[cs];
                const T* kc = kr + static_cast<std::size_t>(cs) * Cd;
                for (int cd = 0; cd < Cd; ++cd) out[cd] += v * kc[cd];
              }
            }
          }
        }
      }
    }
  }
}

// dst[n,jy,jx,cd] += sum_{dy,dx : (jy+pad_y-dy) % stride == 0, source in range}
//                    sum_cs src[n,sy,sx,cs] * ker[dy,dx,cd,cs]
// Serves conv2d_transpose forward and the input gradient of conv2d.
template <class T>
void conv_gather_in(const T* __restrict__ src, int N, int SH, int SW, int Cs,
                    const T* __restrict__ ker, int k, int Cd, int stride, int pad_y, int pad_x,
                    T* __restrict__ dst, int DH, int DW) {
  for (int n = 0; n < N; ++n) {
    const T* sn = src + static_cast<std::size_t>(n) * SH * SW * Cs;
    for (int jy = 0; jy < DH; ++jy) {
      for (int jx = 0; jx < DW; ++jx) {
        T* out = dst + ((static_cast<std::size_t>(n) * DH + jy) * DW + jx) * Cd;
        for (int dy = 0; dy < k; ++dy) {
          const int ty = jy + pad_y - dy;
          if (ty < 0 || ty % stride != 0) continue;
          const int sy = ty / stride;
          if (sy >= SH) continue;
          for (int dx = 0; dx < k; ++dx) {
            const int tx = jx + pad_x - dx;
            if (tx < 0 || tx % stride != 0) continue;
            const int sx = tx / stride;
            if (sx >= SW) continue;
            const T* s = sn + (static_cast<std::size_t>(sy) * SW + sx) * Cs;
            const T* kr = ker + static_cast<std::size_t>(dy * k + dx) * Cd * Cs;
            for (int cd = 0; cd < Cd; ++cd)
              out[cd] += dot_fixed(s, kr + static_cast<std::size_t>(cd) * Cs, Cs);
          }
        }
      }
    }
  }
}

// gk[dy,dx,c1,c2] += sum_{n,oy,ox} img[n, oy*stride+dy-pad_y, ox*stride+dx-pad_x, c1]
//                                  * grad[n,oy,ox,c2]
// Serves the kernel gradient of both convolution flavours.
template <class T>
void conv_grad_kernel(const T* __restrict__ img, int N, int SH, int SW, int C1,
                      const T* __restrict__ grad, int OH, int OW, int C2, int k, int stride,
                      int pad_y, int pad_x, T* __restrict__ gk) {
  for (int n = 0; n < N; ++n) {
    const T* in = img + static_cast<std::size_t>(n) * SH * SW * C1;
    const T* gn = grad + static_cast<std::size_t>(n) * OH * OW * C2;
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        const T* g = gn + (static_cast<std::size_t>(oy) * OW + ox) * C2;
        for (int dy = 0; dy < k; ++dy) {
          const int iy = oy * stride + dy - pad_y;
          if (iy < 0 || iy >= SH) continue;
          for (int dx = 0; dx < k; ++dx) {
            const int ix = ox * stride + dx - pad_x;
            if (ix < 0 || ix >= SW) continue;
            const T* s = in + (static_cast<std::size_t>(iy) * SW + ix) * C1;
            T* gkr = gk + static_cast<std::size_t>(dy * k + dx) * C1 * C2;
            for (int c1 = 0; c1 < C1; ++c1) {
              const T v = s[c1];
              T* row = gkr + static_cast<std::size_t>(c1) * C2;
              for (int c2 = 0; c2 < C2; ++c2) row[c2] += v * g[c2];
            }
          }
        }
      }
    }
  }
}

// grad_bias[c] += sum over batch and spatial positions of grad[..., c]
template <class T>
void sum_per_channel(const T* __restrict__ grad, std::size_t positions, int C,
                     T* __restrict__ out) {
  for (std::size_t p = 0; p < positions; ++p) {
    const T* g = grad + p * C;
    for (int c = 0; c < C; ++c) out[c] += g[c];
  }
}

// 2x2/stride-2 max pooling; ties resolved to the first element in row-major
// window order. argmax stores flat source indices for the backward pass.
template <class T>
void maxpool2_forward(const T* __restrict__ src, int N, int H, int W, int C,
                      T* __restrict__ dst, std::int64_t* __restrict__ argmax) {
  const int OH = H / 2, OW = W / 2;
  for (int n = 0; n < N; ++n) {
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        for (int c = 0; c < C; ++c) {
          T best{};
          std::int64_t best_at = -1;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::int64_t at =
                  ((static_cast<std::int64_t>(n) * H + oy * 2 + dy) * W + ox * 2 + dx) * C + c;
              const T v = src[at];
              if (best_at < 0 || v > best) {
                best = v;
                best_at = at;
              }
            }
          }
          const std::size_t o = ((static_cast<std::size_t>(n) * OH + oy) * OW + ox) * C + c;
          dst[o] = best;
          argmax[o] = best_at;
        }
      }
    }
  }
}

template <class T>
void maxpool2_backward(const T* __restrict__ grad_out, std::size_t count,
                       const std::int64_t* __restrict__ argmax, T* __restrict__ grad_in) {
  for (std::size_t i = 0; i < count; ++i) grad_in[argmax[i]] += grad_out[i];
}

// out[n,u] = bias[u] + sum_f in[n,f] * w[f,u]
template <class T>
void dense_forward(const T* __restrict__ in, int N, int F, const T* __restrict__ w,
                   const T* __restrict__ bias, int U, T* __restrict__ out) {
  for (int n = 0; n < N; ++n) {
    T* o = out + static_cast<std::size_t>(n) * U;
    for (int u = 0; u < U; ++u) o[u] = bias[u];
    const T* x = in + static_cast<std::size_t>(n) * F;
    for (int f = 0; f < F; ++f) {
      const T v = x[f];
      const T* wr = w + static_cast<std::size_t>(f) * U;
      for (int u = 0; u < U; ++u) o[u] += v * wr[u];
    }
  }
}

template <class T>
void dense_backward(const T* __restrict__ in, int N, int F, const T* __restrict__ w,
                    const T* __restrict__ grad_out, int U, T* __restrict__ grad_in,
                    T* __restrict__ grad_w, T* __restrict__ grad_bias) {
  for (int n = 0; n < N; ++n) {
    const T* g = grad_out + static_cast<std::size_t>(n) * U;
    const T* x = in + static_cast<std::size_t>(n) * F;
    T* gi = grad_in + static_cast<std::size_t>(n) * F;
    for (int f = 0; f < F; ++f) {
      gi[f] += dot_fixed(g, w + static_cast<std::size_t>(f) * U, U);
      const T v = x[f];
      T* gw = grad_w + static_cast<std::size_t>(f) * U;
      for (int u = 0; u < U; ++u) gw[u] += v * g[u];
    }
    for (int u = 0; u < U; ++u) grad_bias[u] += g[u];
  }
}

}  // namespace camp::kernels
