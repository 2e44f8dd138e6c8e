#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstring>
#include <vector>

#include "famnet/tape.hpp"

namespace famnet {
namespace detail {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;
using MapCol = Eigen::Map<ColMat>;
using MapColC = Eigen::Map<const ColMat>;
using MapRowStride = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using MapRowStrideC = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Upper bound on im2col scratch (floats); keeps large 3D convolutions from
// materializing multi-GB column matrices.
constexpr int64_t kColBudget = int64_t(6) << 20;

// Column p of the tile holds the receptive field of output position p0+p,
// contiguous over (ci, kh, kw). Out-of-bounds taps are zero.
inline void im2col2d_tile(const float* xn, float* col, int Cin, int H, int W, int kh, int kw,
                          int stride, int pad, int Wo, int64_t K, int64_t p0, int64_t T) {
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < T; ++p) {
    const int64_t pos = p0 + p;
    const int oh = static_cast<int>(pos / Wo);
    const int ow = static_cast<int>(pos % Wo);
    const int ih0 = oh * stride - pad;
    const int iw0 = ow * stride - pad;
    float* dst = col + p * K;
    for (int ci = 0; ci < Cin; ++ci) {
      const float* src = xn + static_cast<int64_t>(ci) * H * W;
      for (int ki = 0; ki < kh; ++ki) {
        const int ih = ih0 + ki;
        if (ih < 0 || ih >= H) {
          std::memset(dst, 0, sizeof(float) * static_cast<size_t>(kw));
          dst += kw;
          continue;
        }
        for (int kj = 0; kj < kw; ++kj) {
          const int iw = iw0 + kj;
          *dst++ = (iw < 0 || iw >= W) ? 0.0f : src[static_cast<int64_t>(ih) * W + iw];
        }
      }
    }
  }
}

// Scatter-add of a column tile back into the input gradient. Parallel over
// input channels so writes stay disjoint and the result is deterministic.
inline void col2im2d_tile(float* dxn, const float* col, int Cin, int H, int W, int kh, int kw,
                          int stride, int pad, int Wo, int64_t K, int64_t p0, int64_t T) {
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < Cin; ++ci) {
    float* dst = dxn + static_cast<int64_t>(ci) * H * W;
    for (int64_t p = 0; p < T; ++p) {
      const int64_t pos = p0 + p;
      const int oh = static_cast<int>(pos / Wo);
      const int ow = static_cast<int>(pos % Wo);
      const int ih0 = oh * stride - pad;
      const int iw0 = ow * stride - pad;
      const float* src = col + p * K + static_cast<int64_t>(ci) * kh * kw;
      for (int ki = 0; ki < kh; ++ki) {
        const int ih = ih0 + ki;
        if (ih < 0 || ih >= H) continue;
        for (int kj = 0; kj < kw; ++kj) {
          const int iw = iw0 + kj;
          if (iw >= 0 && iw < W) dst[static_cast<int64_t>(ih) * W + iw] += src[ki * kw + kj];
        }
      }
    }
  }
}

inline void im2col3d_tile(const float* xn, float* col, int Cin, int H, int W, int D, int kh,
                          int kw, int kd, int sh, int sw, int sd, int ph, int pw, int pd, int Wo,
                          int Do, int64_t K, int64_t p0, int64_t T) {
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < T; ++p) {
    const int64_t pos = p0 + p;
    const int od = static_cast<int>(pos % Do);
    const int ow = static_cast<int>((pos / Do) % Wo);
    const int oh = static_cast<int>(pos / (static_cast<int64_t>(Do) * Wo));
    const int ih0 = oh * sh - ph;
    const int iw0 = ow * sw - pw;
    const int id0 = od * sd - pd;
    float* dst = col + p * K;
    for (int ci = 0; ci < Cin; ++ci) {
      const float* src = xn + static_cast<int64_t>(ci) * H * W * D;
      for (int ki = 0; ki < kh; ++ki) {
        const int ih = ih0 + ki;
        const bool hok = ih >= 0 && ih < H;
        for (int kj = 0; kj < kw; ++kj) {
          const int iw = iw0 + kj;
          const bool wok = iw >= 0 && iw < W;
          if (!hok || !wok) {
            std::memset(dst, 0, sizeof(float) * static_cast<size_t>(kd));
            dst += kd;
            continue;
          }
          const float* plane = src + (static_cast<int64_t>(ih) * W + iw) * D;
          for (int kl = 0; kl < kd; ++kl) {
            const int id = id0 + kl;
            *dst++ = (id < 0 || id >= D) ? 0.0f : plane[id];
          }
        }
      }
    }
  }
}

inline void col2im3d_tile(float* dxn, const float* col, int Cin, int H, int W, int D, int kh,
                          int kw, int kd, int sh, int sw, int sd, int ph, int pw, int pd, int Wo,
                          int Do, int64_t K, int64_t p0, int64_t T) {
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < Cin; ++ci) {
    float* dst = dxn + static_cast<int64_t>(ci) * H * W * D;
    const int64_t krows = static_cast<int64_t>(kh) * kw * kd;
    for (int64_t p = 0; p < T; ++p) {
      const int64_t pos = p0 + p;
      const int od = static_cast<int>(pos % Do);
      const int ow = static_cast<int>((pos / Do) % Wo);
      const int oh = static_cast<int>(pos / (static_cast<int64_t>(Do) * Wo));
      const int ih0 = oh * sh - ph;
      const int iw0 = ow * sw - pw;
      const int id0 = od * sd - pd;
      const float* src = col + p * K + ci * krows;
      for (int ki = 0; ki < kh; ++ki) {
        const int ih = ih0 + ki;
        if (ih < 0 || ih >= H) continue;
        for (int kj = 0; kj < kw; ++kj) {
          const int iw = iw0 + kj;
          if (iw < 0 || iw >= W) continue;
          float* plane = dst + (static_cast<int64_t>(ih) * W + iw) * D;
          const float* s = src + (ki * kw + kj) * kd;
          for (int kl = 0; kl < kd; ++kl) {
            const int id = id0 + kl;
            if (id >= 0 && id < D) plane[id] += s[kl];
          }
        }
      }
    }
  }
}

}  // namespace detail

namespace ops {

// 2D convolution, x [N,Cin,H,W] * w [Cout,Cin,kh,kw] (+ optional bias [Cout])
// -> [N,Cout,Ho,Wo]. im2col tiles + GEMM.
inline NodePtr conv2d(Tape& tape, const NodePtr& x, const NodePtr& w, const NodePtr& bias,
                      int stride, int pad) {
  FAMNET_CHECK(x->val.ndim() == 4, "conv2d: input must be [N,C,H,W], got %s",
               x->val.shape_str().c_str());
  const int N = x->val.dim(0), Cin = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
  const int Cout = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3);
  FAMNET_CHECK(w->val.ndim() == 4 && w->val.dim(1) == Cin,
               "conv2d: weight %s does not match input %s", w->val.shape_str().c_str(),
               x->val.shape_str().c_str());
  if (bias) FAMNET_CHECK(bias->val.numel() == Cout, "conv2d: bad bias size");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  FAMNET_CHECK(Ho > 0 && Wo > 0, "conv2d: empty output for input %s", x->val.shape_str().c_str());

  const int64_t K = static_cast<int64_t>(Cin) * kh * kw;
  const int64_t P = static_cast<int64_t>(Ho) * Wo;
  const int64_t tile = std::clamp<int64_t>(detail::kColBudget / K, 1, P);

  Tensor out({N, Cout, Ho, Wo});
  {
    std::vector<float> col(static_cast<size_t>(K * tile));
    detail::MapRowC wm(w->val.ptr(), Cout, K);
    for (int n = 0; n < N; ++n) {
      const float* xn = x->val.ptr() + static_cast<int64_t>(n) * Cin * H * W;
      float* yn = out.ptr() + static_cast<int64_t>(n) * Cout * P;
      for (int64_t p0 = 0; p0 < P; p0 += tile) {
        const int64_t T = std::min(tile, P - p0);
        detail::im2col2d_tile(xn, col.data(), Cin, H, W, kh, kw, stride, pad, Wo, K, p0, T);
        detail::MapColC cm(col.data(), K, T);
        detail::MapRowStride ym(yn + p0, Cout, T, Eigen::OuterStride<>(P));
        ym.noalias() = wm * cm;
      }
      if (bias) {
        for (int co = 0; co < Cout; ++co) {
          const float b = bias->val.data[static_cast<size_t>(co)];
          float* row = yn + static_cast<int64_t>(co) * P;
          for (int64_t p = 0; p < P; ++p) row[p] += b;
        }
      }
    }
  }

  const bool rg = x->requires_grad || w->requires_grad || (bias && bias->requires_grad);
  NodePtr out_node = tape.make(std::move(out), rg);
  if (rg && tape.enabled()) {
    tape.record([=]() {
      if (!out_node->has_grad) return;
      std::vector<float> col(static_cast<size_t>(K * tile));
      std::vector<float> dcol;
      if (x->requires_grad) dcol.resize(static_cast<size_t>(K * tile));
      detail::MapRowC wm(w->val.ptr(), Cout, K);
      for (int n = 0; n < N; ++n) {
        const float* xn = x->val.ptr() + static_cast<int64_t>(n) * Cin * H * W;
        const float* dyn = out_node->grad.ptr() + static_cast<int64_t>(n) * Cout * P;
        for (int64_t p0 = 0; p0 < P; p0 += tile) {
          const int64_t T = std::min(tile, P - p0);
          detail::MapRowStrideC dym(dyn + p0, Cout, T, Eigen::OuterStride<>(P));
          if (w->requires_grad) {
            detail::im2col2d_tile(xn, col.data(), Cin, H, W, kh, kw, stride, pad, Wo, K, p0, T);
            detail::MapColC cm(col.data(), K, T);
            detail::MapRow dwm(w->g().ptr(), Cout, K);
            dwm.noalias() += dym * cm.transpose();
          }
          if (x->requires_grad) {
            detail::MapCol dcm(dcol.data(), K, T);
            dcm.noalias() = wm.transpose() * dym;
            float* dxn = x->g().ptr() + static_cast<int64_t>(n) * Cin * H * W;
            detail::col2im2d_tile(dxn, dcol.data(), Cin, H, W, kh, kw, stride, pad, Wo, K, p0, T);
          }
        }
        if (bias && bias->requires_grad) {
          for (int co = 0; co < Cout; ++co) {
            double s = 0.0;
            const float* row = dyn + static_cast<int64_t>(co) * P;
            for (int64_t p = 0; p < P; ++p) s += row[p];
            bias->g().data[static_cast<size_t>(co)] += static_cast<float>(s);
          }
        }
      }
    });
  }
  return out_node;
}

// 3D convolution, x [N,Cin,H,W,D] * w [Cout,Cin,kh,kw,kd] -> [N,Cout,Ho,Wo,Do].
inline NodePtr conv3d(Tape& tape, const NodePtr& x, const NodePtr& w, const NodePtr& bias,
                      int sh, int sw, int sd, int ph, int pw, int pd) {
  FAMNET_CHECK(x->val.ndim() == 5, "conv3d: input must be [N,C,H,W,D], got %s",
               x->val.shape_str().c_str());
  const int N = x->val.dim(0), Cin = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3),
            D = x->val.dim(4);
  const int Cout = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3), kd = w->val.dim(4);
  FAMNET_CHECK(w->val.ndim() == 5 && w->val.dim(1) == Cin,
               "conv3d: weight %s does not match input %s", w->val.shape_str().c_str(),
               x->val.shape_str().c_str());
  if (bias) FAMNET_CHECK(bias->val.numel() == Cout, "conv3d: bad bias size");
  const int Ho = (H + 2 * ph - kh) / sh + 1;
  const int Wo = (W + 2 * pw - kw) / sw + 1;
  const int Do = (D + 2 * pd - kd) / sd + 1;
  FAMNET_CHECK(Ho > 0 && Wo > 0 && Do > 0, "conv3d: empty output for input %s",
               x->val.shape_str().c_str());

  const int64_t K = static_cast<int64_t>(Cin) * kh * kw * kd;
  const int64_t P = static_cast<int64_t>(Ho) * Wo * Do;
  const int64_t tile = std::clamp<int64_t>(detail::kColBudget / K, 1, P);

  Tensor out({N, Cout, Ho, Wo, Do});
  {
    std::vector<float> col(static_cast<size_t>(K * tile));
    detail::MapRowC wm(w->val.ptr(), Cout, K);
    for (int n = 0; n < N; ++n) {
      const float* xn = x->val.ptr() + static_cast<int64_t>(n) * Cin * H * W * D;
      float* yn = out.ptr() + static_cast<int64_t>(n) * Cout * P;
      for (int64_t p0 = 0; p0 < P; p0 += tile) {
        const int64_t T = std::min(tile, P - p0);
        detail::im2col3d_tile(xn, col.data(), Cin, H, W, D, kh, kw, kd, sh, sw, sd, ph, pw, pd,
                              Wo, Do, K, p0, T);
        detail::MapColC cm(col.data(), K, T);
        detail::MapRowStride ym(yn + p0, Cout, T, Eigen::OuterStride<>(P));
        ym.noalias() = wm * cm;
      }
      if (bias) {
        for (int co = 0; co < Cout; ++co) {
          const float b = bias->val.data[static_cast<size_t>(co)];
          float* row = yn + static_cast<int64_t>(co) * P;
          for (int64_t p = 0; p < P; ++p) row[p] += b;
        }
      }
    }
  }

  const bool rg = x->requires_grad || w->requires_grad || (bias && bias->requires_grad);
  NodePtr out_node = tape.make(std::move(out), rg);
  if (rg && tape.enabled()) {
    tape.record([=]() {
      if (!out_node->has_grad) return;
      std::vector<float> col(static_cast<size_t>(K * tile));
      std::vector<float> dcol;
      if (x->requires_grad) dcol.resize(static_cast<size_t>(K * tile));
      detail::MapRowC wm(w->val.ptr(), Cout, K);
      for (int n = 0; n < N; ++n) {
        const float* xn = x->val.ptr() + static_cast<int64_t>(n) * Cin * H * W * D;
        const float* dyn = out_node->grad.ptr() + static_cast<int64_t>(n) * Cout * P;
        for (int64_t p0 = 0; p0 < P; p0 += tile) {
          const int64_t T = std::min(tile, P - p0);
          detail::MapRowStrideC dym(dyn + p0, Cout, T, Eigen::OuterStride<>(P));
          if (w->requires_grad) {
            detail::im2col3d_tile(xn, col.data(), Cin, H, W, D, kh, kw, kd, sh, sw, sd, ph, pw,
                                  pd, Wo, Do, K, p0, T);
            detail::MapColC cm(col.data(), K, T);
            detail::MapRow dwm(w->g().ptr(), Cout, K);
            dwm.noalias() += dym * cm.transpose();
          }
          if (x->requires_grad) {
            detail::MapCol dcm(dcol.data(), K, T);
            dcm.noalias() = wm.transpose() * dym;
            float* dxn = x->g().ptr() + static_cast<int64_t>(n) * Cin * H * W * D;
            detail::col2im3d_tile(dxn, dcol.data(), Cin, H, W, D, kh, kw, kd, sh, sw, sd, ph, pw,
                                  pd, Wo, Do, K, p0, T);
          }
        }
        if (bias && bias->requires_grad) {
          for (int co = 0; co < Cout; ++co) {
            double s = 0.0;
            const float* row = dyn + static_cast<int64_t>(co) * P;
            for (int64_t p = 0; p < P; ++p) s += row[p];
            bias->g().data[static_cast<size_t>(co)] += static_cast<float>(s);
          }
        }
      }
    });
  }
  return out_node;
}

}  // namespace ops
}  // namespace famnet
