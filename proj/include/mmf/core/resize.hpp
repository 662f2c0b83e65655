#pragma once

#include "mmf/core/ops.hpp"

namespace mmf {

namespace detail {

// half-pixel source coordinate (align_corners = false)
inline void bilin_coeff(int out, int in, int i, int& i0, int& i1, double& w1) {
    double src = (double(i) + 0.5) * double(in) / double(out) - 0.5;
    if (src < 0) src = 0;
    if (src > in - 1) src = in - 1;
    i0 = int(src);
    i1 = std::min(i0 + 1, in - 1);
    w1 = src - i0;
}

}  // namespace detail

// Bilinear resampling to (out_h, out_w); preserves constants exactly.
template <typename T>
int bilinear_resize(Tape<T>& t, int x, int out_h, int out_w) {
    const Shape4 s = t.val(x).shape;
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: bad target size");
    if (out_h == s.h && out_w == s.w) return x;
    Tensor<T> out(Shape4(s.n, s.c, out_h, out_w));
    const Tensor<T>& vx = t.val(x);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oh = 0; oh < out_h; ++oh) {
                int h0, h1;
                double wh;
                detail::bilin_coeff(out_h, s.h, oh, h0, h1, wh);
                for (int ow = 0; ow < out_w; ++ow) {
                    int w0, w1i;
                    double ww;
                    detail::bilin_coeff(out_w, s.w, ow, w0, w1i, ww);
                    double v = (1 - wh) * ((1 - ww) * vx.at(n, c, h0, w0) + ww * vx.at(n, c, h0, w1i)) +
                               wh * ((1 - ww) * vx.at(n, c, h1, w0) + ww * vx.at(n, c, h1, w1i));
                    out.at(n, c, oh, ow) = T(v);
                }
            }
    return t.push(std::move(out), {x}, [x, s, out_h, out_w](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        Tensor<T>& gx = tp.grad(x);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int oh = 0; oh < out_h; ++oh) {
                    int h0, h1;
                    double wh;
                    detail::bilin_coeff(out_h, s.h, oh, h0, h1, wh);
                    for (int ow = 0; ow < out_w; ++ow) {
                        int w0, w1i;
                        double ww;
                        detail::bilin_coeff(out_w, s.w, ow, w0, w1i, ww);
                        const T gv = g.at(n, c, oh, ow);
                        gx.at(n, c, h0, w0) += T((1 - wh) * (1 - ww)) * gv;
                        gx.at(n, c, h0, w1i) += T((1 - wh) * ww) * gv;
                        gx.at(n, c, h1, w0) += T(wh * (1 - ww)) * gv;
                        gx.at(n, c, h1, w1i) += T(wh * ww) * gv;
                    }
                }
    });
}

// Average pooling with window == stride, partial windows at the borders.
template <typename T>
int avgpool(Tape<T>& t, int x, int window) {
    const Shape4 s = t.val(x).shape;
    if (window <= 1) return x;
    const int Ho = (s.h + window - 1) / window;
    const int Wo = (s.w + window - 1) / window;
    Tensor<T> out(Shape4(s.n, s.c, Ho, Wo));
    const Tensor<T>& vx = t.val(x);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    int h0 = oh * window, h1 = std::min(h0 + window, s.h);
                    int w0 = ow * window, w1 = std::min(w0 + window, s.w);
                    T acc = T(0);
                    for (int ih = h0; ih < h1; ++ih)
                        for (int iw = w0; iw < w1; ++iw) acc += vx.at(n, c, ih, iw);
                    out.at(n, c, oh, ow) = acc / T((h1 - h0) * (w1 - w0));
                }
    return t.push(std::move(out), {x}, [x, s, window, Ho, Wo](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        Tensor<T>& gx = tp.grad(x);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow) {
                        int h0 = oh * window, h1 = std::min(h0 + window, s.h);
                        int w0 = ow * window, w1 = std::min(w0 + window, s.w);
                        const T gv = g.at(n, c, oh, ow) / T((h1 - h0) * (w1 - w0));
                        for (int ih = h0; ih < h1; ++ih)
                            for (int iw = w0; iw < w1; ++iw) gx.at(n, c, ih, iw) += gv;
                    }
    });
}

// Plain nearest-neighbor resize (not differentiable; used for masks).
template <typename T>
Tensor<T> nearest_resize_plain(const Tensor<T>& x, int out_h, int out_w) {
    const Shape4 s = x.shape;
    Tensor<T> out(Shape4(s.n, s.c, out_h, out_w));
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oh = 0; oh < out_h; ++oh) {
                int ih = std::min(int((double(oh) + 0.5) * double(s.h) / double(out_h)), s.h - 1);
                for (int ow = 0; ow < out_w; ++ow) {
                    int iw = std::min(int((double(ow) + 0.5) * double(s.w) / double(out_w)), s.w - 1);
                    out.at(n, c, oh, ow) = x.at(n, c, ih, iw);
                }
            }
    return out;
}

// Plain bilinear resize on raw tensors (augmentation path).
template <typename T>
Tensor<T> bilinear_resize_plain(const Tensor<T>& x, int out_h, int out_w) {
    const Shape4 s = x.shape;
    if (out_h == s.h && out_w == s.w) return x;
    Tensor<T> out(Shape4(s.n, s.c, out_h, out_w));
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oh = 0; oh < out_h; ++oh) {
                int h0, h1;
                double wh;
                detail::bilin_coeff(out_h, s.h, oh, h0, h1, wh);
                for (int ow = 0; ow < out_w; ++ow) {
                    int w0, w1i;
                    double ww;
                    detail::bilin_coeff(out_w, s.w, ow, w0, w1i, ww);
                    double v = (1 - wh) * ((1 - ww) * x.at(n, c, h0, w0) + ww * x.at(n, c, h0, w1i)) +
                               wh * ((1 - ww) * x.at(n, c, h1, w0) + ww * x.at(n, c, h1, w1i));
                    out.at(n, c, oh, ow) = T(v);
                }
            }
    return out;
}

}  // namespace mmf
