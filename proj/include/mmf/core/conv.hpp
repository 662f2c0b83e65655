#pragma once

#include "mmf/core/ops.hpp"

namespace mmf {

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

// col layout: (Cin*kh*kw) rows x (Ho*Wo) cols, zero padding
template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo,
            T* col) {
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
                T* dst = col + ((std::size_t(c) * kh + i) * kw + j) * (std::size_t(Ho) * Wo);
                for (int oh = 0; oh < Ho; ++oh) {
                    int ih = oh * stride - pad + i;
                    if (ih < 0 || ih >= H) {
                        for (int ow = 0; ow < Wo; ++ow) dst[std::size_t(oh) * Wo + ow] = T(0);
                        continue;
                    }
                    const T* src = x + (std::size_t(c) * H + ih) * W;
                    for (int ow = 0; ow < Wo; ++ow) {
                        int iw = ow * stride - pad + j;
                        dst[std::size_t(oh) * Wo + ow] = (iw < 0 || iw >= W) ? T(0) : src[iw];
                    }
                }
            }
}

template <typename T>
void col2im_acc(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
                int Wo, T* x) {
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
                const T* src = col + ((std::size_t(c) * kh + i) * kw + j) * (std::size_t(Ho) * Wo);
                for (int oh = 0; oh < Ho; ++oh) {
                    int ih = oh * stride - pad + i;
                    if (ih < 0 || ih >= H) continue;
                    T* dst = x + (std::size_t(c) * H + ih) * W;
                    for (int ow = 0; ow < Wo; ++ow) {
                        int iw = ow * stride - pad + j;
                        if (iw >= 0 && iw < W) dst[iw] += src[std::size_t(oh) * Wo + ow];
                    }
                }
            }
}

}  // namespace detail

// x (N,Cin,H,W), w (Cout,Cin/groups,kh,kw), optional bias (1,Cout,1,1).
// Cross-correlation, zero padding. Output spatial dims follow
// floor((H + 2*pad - k)/stride) + 1.
template <typename T>
int conv2d(Tape<T>& t, int x, int w, int bias, int stride, int pad, int groups = 1) {
    const Shape4 sx = t.val(x).shape;
    const Shape4 sw = t.val(w).shape;
    const int Cout = sw.n, kh = sw.h, kw = sw.w;
    if (groups < 1 || sx.c % groups != 0 || Cout % groups != 0)
        throw std::invalid_argument("conv2d: bad groups");
    if (sw.c != sx.c / groups)
        throw std::invalid_argument("conv2d: weight shape " + sw.str() + " does not match input " +
                                    sx.str() + " with groups=" + std::to_string(groups));
    if (kh > sx.h + 2 * pad || kw > sx.w + 2 * pad)
        throw std::invalid_argument("conv2d: kernel " + sw.str() + " larger than padded input " +
                                    sx.str());
    const int Ho = conv_out_dim(sx.h, kh, stride, pad);
    const int Wo = conv_out_dim(sx.w, kw, stride, pad);
    if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv2d: empty output for input " + sx.str());

    const int Cin_g = sx.c / groups, Cout_g = Cout / groups;
    const std::size_t K = std::size_t(Cin_g) * kh * kw;
    const std::size_t HW = std::size_t(Ho) * Wo;

    Tensor<T> out(Shape4(sx.n, Cout, Ho, Wo));
    const Tensor<T>& vx = t.val(x);
    const Tensor<T>& vw = t.val(w);
    std::vector<T> col(K * HW);
    for (int n = 0; n < sx.n; ++n)
        for (int g = 0; g < groups; ++g) {
            detail::im2col(vx.data() + (std::size_t(n) * sx.c + std::size_t(g) * Cin_g) * sx.h * sx.w,
                           Cin_g, sx.h, sx.w, kh, kw, stride, pad, Ho, Wo, col.data());
            gemm_acc(vw.data() + std::size_t(g) * Cout_g * K, col.data(),
                     out.data() + (std::size_t(n) * Cout + std::size_t(g) * Cout_g) * HW, Cout_g,
                     int(K), int(HW));
        }
    if (bias >= 0) {
        const Tensor<T>& vb = t.val(bias);
        if (int(vb.size()) != Cout) throw std::invalid_argument("conv2d: bias size != Cout");
        for (int n = 0; n < sx.n; ++n)
            for (int c = 0; c < Cout; ++c) {
                T* p = out.data() + (std::size_t(n) * Cout + c) * HW;
                const T b = vb[c];
                for (std::size_t i = 0; i < HW; ++i) p[i] += b;
            }
    }

    return t.push(std::move(out), {x, w, bias},
                  [x, w, bias, stride, pad, groups, sx, sw, Ho, Wo](Tape<T>& tp, int y) {
                      const int Cout = sw.n, kh = sw.h, kw = sw.w;
                      const int Cin_g = sx.c / groups, Cout_g = Cout / groups;
                      const std::size_t K = std::size_t(Cin_g) * kh * kw;
                      const std::size_t HW = std::size_t(Ho) * Wo;
                      const Tensor<T>& g = tp.grad(y);
                      const Tensor<T>& vx2 = tp.val(x);
                      const Tensor<T>& vw2 = tp.val(w);
                      const bool nx = tp.needs_grad(x), nw = tp.needs_grad(w);
                      std::vector<T> col(K * HW), dcol(K * HW);
                      for (int n = 0; n < sx.n; ++n)
                          for (int gi = 0; gi < groups; ++gi) {
                              const T* gout =
                                  g.data() + (std::size_t(n) * Cout + std::size_t(gi) * Cout_g) * HW;
                              if (nw) {
                                  detail::im2col(vx2.data() + (std::size_t(n) * sx.c +
                                                               std::size_t(gi) * Cin_g) *
                                                                  sx.h * sx.w,
                                                 Cin_g, sx.h, sx.w, kh, kw, stride, pad, Ho, Wo,
                                                 col.data());
                                  auto colT = transpose_mat(col.data(), int(K), int(HW));
                                  gemm_acc(gout, colT.data(),
                                           tp.grad(w).data() + std::size_t(gi) * Cout_g * K, Cout_g,
                                           int(HW), int(K));
                              }
                              if (nx) {
                                  auto wT = transpose_mat(vw2.data() + std::size_t(gi) * Cout_g * K,
                                                          Cout_g, int(K));
                                  std::fill(dcol.begin(), dcol.end(), T(0));
                                  gemm_acc(wT.data(), gout, dcol.data(), int(K), Cout_g, int(HW));
                                  detail::col2im_acc(dcol.data(), Cin_g, sx.h, sx.w, kh, kw, stride,
                                                     pad, Ho, Wo,
                                                     tp.grad(x).data() +
                                                         (std::size_t(n) * sx.c +
                                                          std::size_t(gi) * Cin_g) *
                                                             sx.h * sx.w);
                              }
                          }
                      if (bias >= 0 && tp.needs_grad(bias)) {
                          Tensor<T>& gb = tp.grad(bias);
                          for (int n = 0; n < sx.n; ++n)
                              for (int c = 0; c < Cout; ++c) {
                                  const T* p = g.data() + (std::size_t(n) * Cout + c) * HW;
                                  T acc = T(0);
                                  for (std::size_t i = 0; i < HW; ++i) acc += p[i];
                                  gb[c] += acc;
                              }
                      }
                  });
}

// replicate (edge) padding by p pixels on all sides
template <typename T>
int pad_edge(Tape<T>& t, int x, int p) {
    if (p < 0) throw std::invalid_argument("pad_edge: negative pad");
    if (p == 0) return x;
    const Shape4 s = t.val(x).shape;
    Tensor<T> out(Shape4(s.n, s.c, s.h + 2 * p, s.w + 2 * p));
    const Tensor<T>& vx = t.val(x);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oh = 0; oh < s.h + 2 * p; ++oh) {
                int ih = std::clamp(oh - p, 0, s.h - 1);
                for (int ow = 0; ow < s.w + 2 * p; ++ow) {
                    int iw = std::clamp(ow - p, 0, s.w - 1);
                    out.at(n, c, oh, ow) = vx.at(n, c, ih, iw);
                }
            }
    return t.push(std::move(out), {x}, [x, p, s](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        Tensor<T>& gx = tp.grad(x);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int oh = 0; oh < s.h + 2 * p; ++oh) {
                    int ih = std::clamp(oh - p, 0, s.h - 1);
                    for (int ow = 0; ow < s.w + 2 * p; ++ow) {
                        int iw = std::clamp(ow - p, 0, s.w - 1);
                        gx.at(n, c, ih, iw) += g.at(n, c, oh, ow);
                    }
                }
    });
}

// ---------------------------------------------------------------------------
// plain (non-autodiff) convolution with replicate padding, used by the fixed
// forensic filters; stride 1, spatial dims preserved.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d_plain_edge(const Tensor<T>& x, const Tensor<T>& w) {
    const Shape4 sx = x.shape, sw = w.shape;
    if (sw.c != sx.c) throw std::invalid_argument("conv2d_plain_edge: channel mismatch");
    if (sw.h % 2 == 0 || sw.w % 2 == 0)
        throw std::invalid_argument("conv2d_plain_edge: kernel must be odd");
    const int ph = sw.h / 2, pw = sw.w / 2;
    Tensor<T> out(Shape4(sx.n, sw.n, sx.h, sx.w));
    for (int n = 0; n < sx.n; ++n)
        for (int co = 0; co < sw.n; ++co)
            for (int oh = 0; oh < sx.h; ++oh)
                for (int ow = 0; ow < sx.w; ++ow) {
                    T acc = T(0);
                    for (int ci = 0; ci < sx.c; ++ci)
                        for (int i = 0; i < sw.h; ++i) {
                            int ih = std::clamp(oh - ph + i, 0, sx.h - 1);
                            for (int j = 0; j < sw.w; ++j) {
                                int iw = std::clamp(ow - pw + j, 0, sx.w - 1);
                                acc += w.at(co, ci, i, j) * x.at(n, ci, ih, iw);
                            }
                        }
                    out.at(n, co, oh, ow) = acc;
                }
    return out;
}

}  // namespace mmf
