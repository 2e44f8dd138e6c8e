#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "famnet/conv.hpp"
#include "famnet/tape.hpp"

namespace famnet {
namespace ops {

inline NodePtr add(Tape& tape, const NodePtr& a, const NodePtr& b) {
  FAMNET_CHECK(a->val.same_shape(b->val), "add: shape mismatch %s vs %s",
               a->val.shape_str().c_str(), b->val.shape_str().c_str());
  Tensor out(a->val.shape);
  const int64_t n = out.numel();
#pragma omp parallel for schedule(static) if (n > 65536)
  for (int64_t i = 0; i < n; ++i) out.data[i] = a->val.data[i] + b->val.data[i];
  NodePtr o = tape.make(std::move(out), a->requires_grad || b->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    tape.record([=]() {
      if (!o->has_grad) return;
      if (a->requires_grad) {
        float* g = a->g().ptr();
#pragma omp parallel for schedule(static) if (n > 65536)
        for (int64_t i = 0; i < n; ++i) g[i] += o->grad.data[i];
      }
      if (b->requires_grad) {
        float* g = b->g().ptr();
#pragma omp parallel for schedule(static) if (n > 65536)
        for (int64_t i = 0; i < n; ++i) g[i] += o->grad.data[i];
      }
    });
  }
  return o;
}

inline NodePtr mul(Tape& tape, const NodePtr& a, const NodePtr& b) {
  FAMNET_CHECK(a->val.same_shape(b->val), "mul: shape mismatch %s vs %s",
               a->val.shape_str().c_str(), b->val.shape_str().c_str());
  Tensor out(a->val.shape);
  const int64_t n = out.numel();
#pragma omp parallel for schedule(static) if (n > 65536)
  for (int64_t i = 0; i < n; ++i) out.data[i] = a->val.data[i] * b->val.data[i];
  NodePtr o = tape.make(std::move(out), a->requires_grad || b->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    tape.record([=]() {
      if (!o->has_grad) return;
      if (a->requires_grad) {
        float* g = a->g().ptr();
#pragma omp parallel for schedule(static) if (n > 65536)
        for (int64_t i = 0; i < n; ++i) g[i] += o->grad.data[i] * b->val.data[i];
      }
      if (b->requires_grad) {
        float* g = b->g().ptr();
#pragma omp parallel for schedule(static) if (n > 65536)
        for (int64_t i = 0; i < n; ++i) g[i] += o->grad.data[i] * a->val.data[i];
      }
    });
  }
  return o;
}

inline NodePtr relu(Tape& tape, const NodePtr& x) {
  Tensor out(x->val.shape);
  const int64_t n = out.numel();
#pragma omp parallel for schedule(static) if (n > 65536)
  for (int64_t i = 0; i < n; ++i) out.data[i] = x->val.data[i] > 0.0f ? x->val.data[i] : 0.0f;
  NodePtr o = tape.make(std::move(out), x->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    tape.record([=]() {
      if (!o->has_grad) return;
      float* g = x->g().ptr();
#pragma omp parallel for schedule(static) if (n > 65536)
      for (int64_t i = 0; i < n; ++i)
        if (x->val.data[i] > 0.0f) g[i] += o->grad.data[i];
    });
  }
  return o;
}

inline NodePtr sigmoid(Tape& tape, const NodePtr& x) {
  Tensor out(x->val.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.data[i] = 1.0f / (1.0f + std::exp(-x->val.data[i]));
  NodePtr o = tape.make(std::move(out), x->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    tape.record([=]() {
      if (!o->has_grad) return;
      float* g = x->g().ptr();
      for (int64_t i = 0; i < n; ++i) {
        const float y = o->val.data[i];
        g[i] += o->grad.data[i] * y * (1.0f - y);
      }
    });
  }
  return o;
}

// Batch normalization over the channel axis (dim 1); covers both 2D and 3D
// maps. Running statistics live in the caller-owned tensors and are updated
// in-place during training (unbiased variance, torch convention).
inline NodePtr batch_norm(Tape& tape, const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                          Tensor* running_mean, Tensor* running_var, bool training,
                          float momentum = 0.1f, float eps = 1e-5f) {
  FAMNET_CHECK(x->val.ndim() >= 2, "batch_norm: need [N,C,...] input");
  const int N = x->val.dim(0), C = x->val.dim(1);
  const int64_t S = x->val.numel() / (static_cast<int64_t>(N) * C);
  const int64_t M = static_cast<int64_t>(N) * S;
  FAMNET_CHECK(gamma->val.numel() == C && beta->val.numel() == C, "batch_norm: bad affine size");
  FAMNET_CHECK(running_mean->numel() == C && running_var->numel() == C,
               "batch_norm: bad running stats size");

  std::vector<float> mean(static_cast<size_t>(C)), invstd(static_cast<size_t>(C));
  if (training) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
      double sum = 0.0, sq = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* p = x->val.ptr() + (static_cast<int64_t>(n) * C + c) * S;
        for (int64_t s = 0; s < S; ++s) {
          sum += p[s];
          sq += static_cast<double>(p[s]) * p[s];
        }
      }
      const double mu = sum / static_cast<double>(M);
      double var = sq / static_cast<double>(M) - mu * mu;
      if (var < 0.0) var = 0.0;
      mean[static_cast<size_t>(c)] = static_cast<float>(mu);
      invstd[static_cast<size_t>(c)] = static_cast<float>(1.0 / std::sqrt(var + eps));
      const double unbiased = M > 1 ? var * static_cast<double>(M) / (M - 1) : var;
      running_mean->data[static_cast<size_t>(c)] =
          (1.0f - momentum) * running_mean->data[static_cast<size_t>(c)] +
          momentum * static_cast<float>(mu);
      running_var->data[static_cast<size_t>(c)] =
          (1.0f - momentum) * running_var->data[static_cast<size_t>(c)] +
          momentum * static_cast<float>(unbiased);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[static_cast<size_t>(c)] = running_mean->data[static_cast<size_t>(c)];
      invstd[static_cast<size_t>(c)] = static_cast<float>(
          1.0 / std::sqrt(static_cast<double>(running_var->data[static_cast<size_t>(c)]) + eps));
    }
  }

  Tensor out(x->val.shape);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const float mu = mean[static_cast<size_t>(c)];
    const float is = invstd[static_cast<size_t>(c)];
    const float ga = gamma->val.data[static_cast<size_t>(c)];
    const float be = beta->val.data[static_cast<size_t>(c)];
    for (int n = 0; n < N; ++n) {
      const int64_t off = (static_cast<int64_t>(n) * C + c) * S;
      const float* px = x->val.ptr() + off;
      float* py = out.ptr() + off;
      for (int64_t s = 0; s < S; ++s) py[s] = ga * (px[s] - mu) * is + be;
    }
  }

  const bool rg = x->requires_grad || gamma->requires_grad || beta->requires_grad;
  NodePtr o = tape.make(std::move(out), rg);
  if (rg && tape.enabled()) {
    tape.record([=, mean = std::move(mean), invstd = std::move(invstd)]() {
      if (!o->has_grad) return;
      // Allocate receiving gradients before the parallel loop.
      if (x->requires_grad) x->g();
      if (gamma->requires_grad) gamma->g();
      if (beta->requires_grad) beta->g();
#pragma omp parallel for schedule(static)
      for (int c = 0; c < C; ++c) {
        const float mu = mean[static_cast<size_t>(c)];
        const float is = invstd[static_cast<size_t>(c)];
        const float ga = gamma->val.data[static_cast<size_t>(c)];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int n = 0; n < N; ++n) {
          const int64_t off = (static_cast<int64_t>(n) * C + c) * S;
          const float* px = x->val.ptr() + off;
          const float* pdy = o->grad.ptr() + off;
          for (int64_t s = 0; s < S; ++s) {
            sum_dy += pdy[s];
            sum_dy_xhat += static_cast<double>(pdy[s]) * (px[s] - mu) * is;
          }
        }
        if (gamma->requires_grad)
          gamma->g().data[static_cast<size_t>(c)] += static_cast<float>(sum_dy_xhat);
        if (beta->requires_grad)
          beta->g().data[static_cast<size_t>(c)] += static_cast<float>(sum_dy);
        if (x->requires_grad) {
          float* gx0 = x->g().ptr();
          if (training) {
            const float k = ga * is / static_cast<float>(M);
            for (int n = 0; n < N; ++n) {
              const int64_t off = (static_cast<int64_t>(n) * C + c) * S;
              const float* px = x->val.ptr() + off;
              const float* pdy = o->grad.ptr() + off;
              float* pgx = gx0 + off;
              for (int64_t s = 0; s < S; ++s) {
                const float xhat = (px[s] - mu) * is;
                pgx[s] += k * (static_cast<float>(M) * pdy[s] - static_cast<float>(sum_dy) -
                               xhat * static_cast<float>(sum_dy_xhat));
              }
            }
          } else {
            const float k = ga * is;
            for (int n = 0; n < N; ++n) {
              const int64_t off = (static_cast<int64_t>(n) * C + c) * S;
              const float* pdy = o->grad.ptr() + off;
              float* pgx = gx0 + off;
              for (int64_t s = 0; s < S; ++s) pgx[s] += k * pdy[s];
            }
          }
        }
      }
    });
  }
  return o;
}

// Max pooling; shared 2D/3D implementation. kd/sd/pd are ignored for 4-D
// inputs. Argmax indices are stored for the backward scatter.
inline NodePtr max_pool(Tape& tape, const NodePtr& x, int k, int s, int p, int kd = 1, int sd = 1,
                        int pd = 0) {
  const bool is3d = x->val.ndim() == 5;
  FAMNET_CHECK(x->val.ndim() == 4 || is3d, "max_pool: need 4-D or 5-D input");
  const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
  const int D = is3d ? x->val.dim(4) : 1;
  const int Ho = (H + 2 * p - k) / s + 1;
  const int Wo = (W + 2 * p - k) / s + 1;
  const int Do = is3d ? (D + 2 * pd - kd) / sd + 1 : 1;
  FAMNET_CHECK(Ho > 0 && Wo > 0 && Do > 0, "max_pool: empty output");

  std::vector<int> shape = is3d ? std::vector<int>{N, C, Ho, Wo, Do}
                                : std::vector<int>{N, C, Ho, Wo};
  Tensor out(shape);
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.numel()));
  const int64_t planes = static_cast<int64_t>(N) * C;
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < planes; ++nc) {
    const float* src = x->val.ptr() + nc * H * W * D;
    float* dst = out.ptr() + nc * Ho * Wo * Do;
    int64_t* am = argmax->data() + nc * Ho * Wo * Do;
    int64_t q = 0;
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow)
        for (int od = 0; od < Do; ++od, ++q) {
          float best = -std::numeric_limits<float>::infinity();
          int64_t best_i = -1;
          for (int ki = 0; ki < k; ++ki) {
            const int ih = oh * s - p + ki;
            if (ih < 0 || ih >= H) continue;
            for (int kj = 0; kj < k; ++kj) {
              const int iw = ow * s - p + kj;
              if (iw < 0 || iw >= W) continue;
              for (int kl = 0; kl < kd; ++kl) {
                const int id = od * sd - pd + kl;
                if (id < 0 || id >= D) continue;
                const int64_t idx = (static_cast<int64_t>(ih) * W + iw) * D + id;
                if (src[idx] > best) {
                  best = src[idx];
                  best_i = idx;
                }
              }
            }
          }
          dst[q] = best;
          am[q] = best_i;
        }
  }

  NodePtr o = tape.make(std::move(out), x->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    const int64_t po = static_cast<int64_t>(Ho) * Wo * Do;
    const int64_t pi = static_cast<int64_t>(H) * W * D;
    tape.record([=]() {
      if (!o->has_grad) return;
      float* gx0 = x->g().ptr();
#pragma omp parallel for schedule(static)
      for (int64_t nc = 0; nc < planes; ++nc) {
        float* gx = gx0 + nc * pi;
        const float* gy = o->grad.ptr() + nc * po;
        const int64_t* am = argmax->data() + nc * po;
        for (int64_t q = 0; q < po; ++q)
          if (am[q] >= 0) gx[am[q]] += gy[q];
      }
    });
  }
  return o;
}

// 2x (2x2x2) average-pool downsampling with stride 2; all pooled dims must be
// even. Used to align F_{k-1} with the next stage before concatenation.
inline NodePtr avg_pool_half(Tape& tape, const NodePtr& x) {
  const bool is3d = x->val.ndim() == 5;
  FAMNET_CHECK(x->val.ndim() == 4 || is3d, "avg_pool_half: need 4-D or 5-D input");
  const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
  const int D = is3d ? x->val.dim(4) : 1;
  FAMNET_CHECK(H % 2 == 0 && W % 2 == 0 && (!is3d || D % 2 == 0),
               "avg_pool_half: dims must be even, got %s", x->val.shape_str().c_str());
  const int Ho = H / 2, Wo = W / 2, Do = is3d ? D / 2 : 1;
  std::vector<int> shape = is3d ? std::vector<int>{N, C, Ho, Wo, Do}
                                : std::vector<int>{N, C, Ho, Wo};
  Tensor out(shape);
  const int64_t planes = static_cast<int64_t>(N) * C;
  const int kd = is3d ? 2 : 1;
  const float inv = 1.0f / static_cast<float>(4 * kd);
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < planes; ++nc) {
    const float* src = x->val.ptr() + nc * H * W * D;
    float* dst = out.ptr() + nc * Ho * Wo * Do;
    int64_t q = 0;
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow)
        for (int od = 0; od < Do; ++od, ++q) {
          float acc = 0.0f;
          for (int ki = 0; ki < 2; ++ki)
            for (int kj = 0; kj < 2; ++kj)
              for (int kl = 0; kl < kd; ++kl)
                acc += src[(static_cast<int64_t>(oh * 2 + ki) * W + (ow * 2 + kj)) * D +
                           (od * kd + kl)];
          dst[q] = acc * inv;
        }
  }
  NodePtr o = tape.make(std::move(out), x->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    const int64_t po = static_cast<int64_t>(Ho) * Wo * Do;
    tape.record([=]() {
      if (!o->has_grad) return;
      float* gx0 = x->g().ptr();
#pragma omp parallel for schedule(static)
      for (int64_t nc = 0; nc < planes; ++nc) {
        float* gx = gx0 + nc * H * W * D;
        const float* gy = o->grad.ptr() + nc * po;
        int64_t q = 0;
        for (int oh = 0; oh < Ho; ++oh)
          for (int ow = 0; ow < Wo; ++ow)
            for (int od = 0; od < Do; ++od, ++q) {
              const float g = gy[q] * inv;
              for (int ki = 0; ki < 2; ++ki)
                for (int kj = 0; kj < 2; ++kj)
                  for (int kl = 0; kl < kd; ++kl)
                    gx[(static_cast<int64_t>(oh * 2 + ki) * W + (ow * 2 + kj)) * D +
                       (od * kd + kl)] += g;
            }
      }
    });
  }
  return o;
}

// Mean over every non-channel axis: [N,C,...] -> [N,C].
inline NodePtr global_avg_pool(Tape& tape, const NodePtr& x) {
  FAMNET_CHECK(x->val.ndim() >= 3, "global_avg_pool: need [N,C,spatial...] input");
  const int N = x->val.dim(0), C = x->val.dim(1);
  const int64_t S = x->val.numel() / (static_cast<int64_t>(N) * C);
  Tensor out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* p = x->val.ptr() + (static_cast<int64_t>(n) * C + c) * S;
      double acc = 0.0;
      for (int64_t s = 0; s < S; ++s) acc += p[s];
      out.data[static_cast<size_t>(n) * C + c] = static_cast<float>(acc / static_cast<double>(S));
    }
  NodePtr o = tape.make(std::move(out), x->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    tape.record([=]() {
      if (!o->has_grad) return;
      const float inv = 1.0f / static_cast<float>(S);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const float g = o->grad.data[static_cast<size_t>(n) * C + c] * inv;
          float* px = x->g().ptr() + (static_cast<int64_t>(n) * C + c) * S;
          for (int64_t s = 0; s < S; ++s) px[s] += g;
        }
    });
  }
  return o;
}

// Fully connected layer: x [N,I] * w [O,I]^T + b -> [N,O].
inline NodePtr linear(Tape& tape, const NodePtr& x, const NodePtr& w, const NodePtr& b) {
  FAMNET_CHECK(x->val.ndim() == 2, "linear: input must be [N,I]");
  const int N = x->val.dim(0), I = x->val.dim(1), O = w->val.dim(0);
  FAMNET_CHECK(w->val.ndim() == 2 && w->val.dim(1) == I, "linear: weight %s vs input %s",
               w->val.shape_str().c_str(), x->val.shape_str().c_str());
  FAMNET_CHECK(!b || b->val.numel() == O, "linear: bad bias size");
  Tensor out({N, O});
  {
    detail::MapRowC xm(x->val.ptr(), N, I), wm(w->val.ptr(), O, I);
    detail::MapRow ym(out.ptr(), N, O);
    ym.noalias() = xm * wm.transpose();
    if (b)
      for (int n = 0; n < N; ++n)
        for (int o_ = 0; o_ < O; ++o_) out.data[static_cast<size_t>(n) * O + o_] += b->val.data[static_cast<size_t>(o_)];
  }
  const bool rg = x->requires_grad || w->requires_grad || (b && b->requires_grad);
  NodePtr o = tape.make(std::move(out), rg);
  if (rg && tape.enabled()) {
    tape.record([=]() {
      if (!o->has_grad) return;
      detail::MapRowC dym(o->grad.ptr(), N, O);
      if (x->requires_grad) {
        detail::MapRowC wm(w->val.ptr(), O, I);
        detail::MapRow dxm(x->g().ptr(), N, I);
        dxm.noalias() += dym * wm;
      }
      if (w->requires_grad) {
        detail::MapRowC xm(x->val.ptr(), N, I);
        detail::MapRow dwm(w->g().ptr(), O, I);
        dwm.noalias() += dym.transpose() * xm;
      }
      if (b && b->requires_grad) {
        for (int o_ = 0; o_ < O; ++o_) {
          double s = 0.0;
          for (int n = 0; n < N; ++n) s += o->grad.data[static_cast<size_t>(n) * O + o_];
          b->g().data[static_cast<size_t>(o_)] += static_cast<float>(s);
        }
      }
    });
  }
  return o;
}

inline NodePtr concat_channels(Tape& tape, const NodePtr& a, const NodePtr& b) {
  FAMNET_CHECK(a->val.ndim() == b->val.ndim() && a->val.ndim() >= 2,
               "concat_channels: rank mismatch");
  FAMNET_CHECK(a->val.dim(0) == b->val.dim(0), "concat_channels: batch mismatch");
  for (int i = 2; i < a->val.ndim(); ++i)
    FAMNET_CHECK(a->val.dim(i) == b->val.dim(i), "concat_channels: spatial mismatch %s vs %s",
                 a->val.shape_str().c_str(), b->val.shape_str().c_str());
  const int N = a->val.dim(0), Ca = a->val.dim(1), Cb = b->val.dim(1);
  const int64_t S = a->val.numel() / (static_cast<int64_t>(N) * Ca);
  std::vector<int> shape = a->val.shape;
  shape[1] = Ca + Cb;
  Tensor out(shape);
  for (int n = 0; n < N; ++n) {
    float* dst = out.ptr() + static_cast<int64_t>(n) * (Ca + Cb) * S;
    std::memcpy(dst, a->val.ptr() + static_cast<int64_t>(n) * Ca * S,
                sizeof(float) * static_cast<size_t>(Ca * S));
    std::memcpy(dst + Ca * S, b->val.ptr() + static_cast<int64_t>(n) * Cb * S,
                sizeof(float) * static_cast<size_t>(Cb * S));
  }
  NodePtr o = tape.make(std::move(out), a->requires_grad || b->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    tape.record([=]() {
      if (!o->has_grad) return;
      for (int n = 0; n < N; ++n) {
        const float* src = o->grad.ptr() + static_cast<int64_t>(n) * (Ca + Cb) * S;
        if (a->requires_grad) {
          float* g = a->g().ptr() + static_cast<int64_t>(n) * Ca * S;
          for (int64_t i = 0; i < Ca * S; ++i) g[i] += src[i];
        }
        if (b->requires_grad) {
          float* g = b->g().ptr() + static_cast<int64_t>(n) * Cb * S;
          for (int64_t i = 0; i < Cb * S; ++i) g[i] += src[Ca * S + i];
        }
      }
    });
  }
  return o;
}

// Softmax over all positions after the channel axis, independently per
// (sample, channel). Produces the attention matrices M_k.
inline NodePtr softmax_positions(Tape& tape, const NodePtr& x) {
  FAMNET_CHECK(x->val.ndim() >= 3, "softmax_positions: need [N,C,spatial...] input");
  const int N = x->val.dim(0), C = x->val.dim(1);
  const int64_t S = x->val.numel() / (static_cast<int64_t>(N) * C);
  Tensor out(x->val.shape);
  const int64_t planes = static_cast<int64_t>(N) * C;
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < planes; ++nc) {
    const float* src = x->val.ptr() + nc * S;
    float* dst = out.ptr() + nc * S;
    float mx = src[0];
    for (int64_t s = 1; s < S; ++s) mx = std::max(mx, src[s]);
    double sum = 0.0;
    for (int64_t s = 0; s < S; ++s) {
      dst[s] = std::exp(src[s] - mx);
      sum += dst[s];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int64_t s = 0; s < S; ++s) dst[s] *= inv;
  }
  NodePtr o = tape.make(std::move(out), x->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    tape.record([=]() {
      if (!o->has_grad) return;
      float* gx0 = x->g().ptr();
#pragma omp parallel for schedule(static)
      for (int64_t nc = 0; nc < planes; ++nc) {
        const float* y = o->val.ptr() + nc * S;
        const float* dy = o->grad.ptr() + nc * S;
        float* gx = gx0 + nc * S;
        double dot = 0.0;
        for (int64_t s = 0; s < S; ++s) dot += static_cast<double>(dy[s]) * y[s];
        for (int64_t s = 0; s < S; ++s)
          gx[s] += y[s] * (dy[s] - static_cast<float>(dot));
      }
    });
  }
  return o;
}

// Row-wise softmax for classifier outputs: [N,K] -> [N,K].
inline NodePtr softmax_rows(Tape& tape, const NodePtr& x) {
  FAMNET_CHECK(x->val.ndim() == 2, "softmax_rows: need [N,K] input");
  const int N = x->val.dim(0), K = x->val.dim(1);
  Tensor out(x->val.shape);
  for (int n = 0; n < N; ++n) {
    const float* src = x->val.ptr() + static_cast<int64_t>(n) * K;
    float* dst = out.ptr() + static_cast<int64_t>(n) * K;
    float mx = src[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, src[k]);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
      dst[k] = std::exp(src[k] - mx);
      sum += dst[k];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int k = 0; k < K; ++k) dst[k] *= inv;
  }
  NodePtr o = tape.make(std::move(out), x->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    tape.record([=]() {
      if (!o->has_grad) return;
      for (int n = 0; n < N; ++n) {
        const float* y = o->val.ptr() + static_cast<int64_t>(n) * K;
        const float* dy = o->grad.ptr() + static_cast<int64_t>(n) * K;
        float* gx = x->g().ptr() + static_cast<int64_t>(n) * K;
        double dot = 0.0;
        for (int k = 0; k < K; ++k) dot += static_cast<double>(dy[k]) * y[k];
        for (int k = 0; k < K; ++k) gx[k] += y[k] * (dy[k] - static_cast<float>(dot));
      }
    });
  }
  return o;
}

inline NodePtr sum_all(Tape& tape, const NodePtr& x) {
  double acc = 0.0;
  for (float v : x->val.data) acc += v;
  NodePtr o = tape.make(Tensor::scalar(static_cast<float>(acc)), x->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    tape.record([=]() {
      if (!o->has_grad) return;
      const float g = o->grad.data[0];
      float* gx = x->g().ptr();
      const int64_t n = x->val.numel();
      for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return o;
}

}  // namespace ops
}  // namespace famnet
