#pragma once

#include "mmf/core/ops.hpp"

namespace mmf {

// Batch normalization over (n, h, w) per channel.
//
// Training mode normalizes with batch statistics; inference uses tracked
// running statistics (momentum 0.1 by default, PyTorch-style unbiased running
// variance). `group_size` > 0 computes statistics over consecutive sub-batches
// of that size instead of the whole batch, which makes a large physical batch
// statistically identical to the same samples fed through gradient
// accumulation with that micro-batch size.
template <typename T>
int batchnorm2d(Tape<T>& t, int x, int gamma, int beta, Tensor<T>* running_mean,
                Tensor<T>* running_var, bool training, bool update_stats, double momentum,
                double eps, int group_size = 0) {
    const Shape4 s = t.val(x).shape;
    const int C = s.c;
    if (int(t.val(gamma).size()) != C || int(t.val(beta).size()) != C)
        throw std::invalid_argument("batchnorm2d: affine params must have C elements");
    if (int(running_mean->size()) != C || int(running_var->size()) != C)
        throw std::invalid_argument("batchnorm2d: running stats must have C elements");
    if (group_size <= 0 || group_size > s.n) group_size = s.n;
    if (s.n % group_size != 0)
        throw std::invalid_argument("batchnorm2d: batch " + std::to_string(s.n) +
                                    " not divisible by group size " + std::to_string(group_size));

    const std::size_t hw = std::size_t(s.h) * s.w;
    const int ngroups = s.n / group_size;
    const Tensor<T>& vx = t.val(x);
    const Tensor<T>& vg = t.val(gamma);
    const Tensor<T>& vb = t.val(beta);
    Tensor<T> out(s);

    // saved per (group, channel) for backward
    auto mean = std::make_shared<std::vector<T>>(std::size_t(ngroups) * C);
    auto inv_std = std::make_shared<std::vector<T>>(std::size_t(ngroups) * C);

    if (training) {
        const std::size_t m = std::size_t(group_size) * hw;
        for (int g = 0; g < ngroups; ++g)
            for (int c = 0; c < C; ++c) {
                T mu = T(0);
                for (int n = g * group_size; n < (g + 1) * group_size; ++n) {
                    const T* p = vx.data() + (std::size_t(n) * C + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i) mu += p[i];
                }
                mu /= T(m);
                T var = T(0);
                for (int n = g * group_size; n < (g + 1) * group_size; ++n) {
                    const T* p = vx.data() + (std::size_t(n) * C + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        T d = p[i] - mu;
                        var += d * d;
                    }
                }
                var /= T(m);
                const T istd = T(1) / std::sqrt(var + T(eps));
                (*mean)[std::size_t(g) * C + c] = mu;
                (*inv_std)[std::size_t(g) * C + c] = istd;
                for (int n = g * group_size; n < (g + 1) * group_size; ++n) {
                    const T* p = vx.data() + (std::size_t(n) * C + c) * hw;
                    T* q = out.data() + (std::size_t(n) * C + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i)
                        q[i] = vg[c] * (p[i] - mu) * istd + vb[c];
                }
                if (update_stats) {
                    T var_u = m > 1 ? var * T(double(m) / double(m - 1)) : var;
                    (*running_mean)[c] = T(1.0 - momentum) * (*running_mean)[c] + T(momentum) * mu;
                    (*running_var)[c] = T(1.0 - momentum) * (*running_var)[c] + T(momentum) * var_u;
                }
            }
    } else {
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < C; ++c) {
                const T istd = T(1) / std::sqrt((*running_var)[c] + T(eps));
                const T mu = (*running_mean)[c];
                const T* p = vx.data() + (std::size_t(n) * C + c) * hw;
                T* q = out.data() + (std::size_t(n) * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) q[i] = vg[c] * (p[i] - mu) * istd + vb[c];
            }
    }

    if (training) {
        return t.push(std::move(out), {x, gamma, beta},
                      [x, gamma, beta, s, group_size, mean, inv_std](Tape<T>& tp, int y) {
                          const int C = s.c;
                          const std::size_t hw = std::size_t(s.h) * s.w;
                          const int ngroups = s.n / group_size;
                          const std::size_t m = std::size_t(group_size) * hw;
                          const Tensor<T>& g = tp.grad(y);
                          const Tensor<T>& vx2 = tp.val(x);
                          const Tensor<T>& vg2 = tp.val(gamma);
                          const bool nx = tp.needs_grad(x);
                          for (int gi = 0; gi < ngroups; ++gi)
                              for (int c = 0; c < C; ++c) {
                                  const T mu = (*mean)[std::size_t(gi) * C + c];
                                  const T istd = (*inv_std)[std::size_t(gi) * C + c];
                                  T sum_dy = T(0), sum_dy_xhat = T(0);
                                  for (int n = gi * group_size; n < (gi + 1) * group_size; ++n) {
                                      const T* gy = g.data() + (std::size_t(n) * C + c) * hw;
                                      const T* px = vx2.data() + (std::size_t(n) * C + c) * hw;
                                      for (std::size_t i = 0; i < hw; ++i) {
                                          sum_dy += gy[i];
                                          sum_dy_xhat += gy[i] * (px[i] - mu) * istd;
                                      }
                                  }
                                  if (tp.needs_grad(gamma)) tp.grad(gamma)[c] += sum_dy_xhat;
                                  if (tp.needs_grad(beta)) tp.grad(beta)[c] += sum_dy;
                                  if (nx) {
                                      Tensor<T>& gx = tp.grad(x);
                                      const T k1 = sum_dy / T(m), k2 = sum_dy_xhat / T(m);
                                      for (int n = gi * group_size; n < (gi + 1) * group_size; ++n) {
                                          const T* gy = g.data() + (std::size_t(n) * C + c) * hw;
                                          const T* px = vx2.data() + (std::size_t(n) * C + c) * hw;
                                          T* q = gx.data() + (std::size_t(n) * C + c) * hw;
                                          for (std::size_t i = 0; i < hw; ++i) {
                                              T xhat = (px[i] - mu) * istd;
                                              q[i] += vg2[c] * istd * (gy[i] - k1 - xhat * k2);
                                          }
                                      }
                                  }
                              }
                      });
    }
    // inference: affine transform with constants
    auto rm = std::make_shared<Tensor<T>>(*running_mean);
    auto rv = std::make_shared<Tensor<T>>(*running_var);
    return t.push(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, s, rm, rv, eps](Tape<T>& tp, int y) {
                      const int C = s.c;
                      const std::size_t hw = std::size_t(s.h) * s.w;
                      const Tensor<T>& g = tp.grad(y);
                      const Tensor<T>& vx2 = tp.val(x);
                      const Tensor<T>& vg2 = tp.val(gamma);
                      for (int n = 0; n < s.n; ++n)
                          for (int c = 0; c < C; ++c) {
                              const T istd = T(1) / std::sqrt((*rv)[c] + T(eps));
                              const T* gy = g.data() + (std::size_t(n) * C + c) * hw;
                              if (tp.needs_grad(x)) {
                                  T* q = tp.grad(x).data() + (std::size_t(n) * C + c) * hw;
                                  for (std::size_t i = 0; i < hw; ++i) q[i] += gy[i] * vg2[c] * istd;
                              }
                              if (tp.needs_grad(gamma)) {
                                  const T* px = vx2.data() + (std::size_t(n) * C + c) * hw;
                                  T acc = T(0);
                                  for (std::size_t i = 0; i < hw; ++i)
                                      acc += gy[i] * (px[i] - (*rm)[c]) * istd;
                                  tp.grad(gamma)[c] += acc;
                              }
                              if (tp.needs_grad(beta)) {
                                  T acc = T(0);
                                  for (std::size_t i = 0; i < hw; ++i) acc += gy[i];
                                  tp.grad(beta)[c] += acc;
                              }
                          }
                  });
}

// Layer normalization over the innermost axis of token tensors (B,1,N,C).
// gamma/beta hold C elements; pass gamma = -1 to skip the affine part
// (bias-free test configurations pass beta = -1).
template <typename T>
int layernorm_lastdim(Tape<T>& t, int x, int gamma, int beta, double eps = 1e-6) {
    const Shape4 s = t.val(x).shape;
    const int C = s.w;
    const std::size_t rows = t.val(x).size() / C;
    const Tensor<T>& vx = t.val(x);
    Tensor<T> out(s);
    auto mean = std::make_shared<std::vector<T>>(rows);
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* p = vx.data() + r * C;
        T mu = T(0);
        for (int i = 0; i < C; ++i) mu += p[i];
        mu /= T(C);
        T var = T(0);
        for (int i = 0; i < C; ++i) {
            T d = p[i] - mu;
            var += d * d;
        }
        var /= T(C);
        T istd = T(1) / std::sqrt(var + T(eps));
        (*mean)[r] = mu;
        (*inv_std)[r] = istd;
        T* q = out.data() + r * C;
        for (int i = 0; i < C; ++i) q[i] = (p[i] - mu) * istd;
    }
    if (gamma >= 0) {
        const Tensor<T>& vg = t.val(gamma);
        if (int(vg.size()) != C) throw std::invalid_argument("layernorm: gamma size != C");
        for (std::size_t r = 0; r < rows; ++r) {
            T* q = out.data() + r * C;
            for (int i = 0; i < C; ++i) q[i] *= vg[i];
        }
    }
    if (beta >= 0) {
        const Tensor<T>& vb = t.val(beta);
        if (int(vb.size()) != C) throw std::invalid_argument("layernorm: beta size != C");
        for (std::size_t r = 0; r < rows; ++r) {
            T* q = out.data() + r * C;
            for (int i = 0; i < C; ++i) q[i] += vb[i];
        }
    }
    return t.push(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, s, mean, inv_std](Tape<T>& tp, int y) {
                      const int C = s.w;
                      const std::size_t rows = tp.val(x).size() / C;
                      const Tensor<T>& g = tp.grad(y);
                      const Tensor<T>& vx2 = tp.val(x);
                      const bool has_g = gamma >= 0;
                      for (std::size_t r = 0; r < rows; ++r) {
                          const T* gy = g.data() + r * C;
                          const T* px = vx2.data() + r * C;
                          const T mu = (*mean)[r], istd = (*inv_std)[r];
                          if (tp.needs_grad(x)) {
                              T sum_dxh = T(0), sum_dxh_xhat = T(0);
                              for (int i = 0; i < C; ++i) {
                                  T gv = has_g ? gy[i] * tp.val(gamma)[i] : gy[i];
                                  T xhat = (px[i] - mu) * istd;
                                  sum_dxh += gv;
                                  sum_dxh_xhat += gv * xhat;
                              }
                              T* q = tp.grad(x).data() + r * C;
                              const T k1 = sum_dxh / T(C), k2 = sum_dxh_xhat / T(C);
                              for (int i = 0; i < C; ++i) {
                                  T gv = has_g ? gy[i] * tp.val(gamma)[i] : gy[i];
                                  T xhat = (px[i] - mu) * istd;
                                  q[i] += istd * (gv - k1 - xhat * k2);
                              }
                          }
                          if (has_g && tp.needs_grad(gamma)) {
                              Tensor<T>& gg = tp.grad(gamma);
                              for (int i = 0; i < C; ++i) gg[i] += gy[i] * (px[i] - mu) * istd;
                          }
                          if (beta >= 0 && tp.needs_grad(beta)) {
                              Tensor<T>& gb = tp.grad(beta);
                              for (int i = 0; i < C; ++i) gb[i] += gy[i];
                          }
                      }
                  });
}

}  // namespace mmf
