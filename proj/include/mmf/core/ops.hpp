#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "mmf/core/rng.hpp"
#include "mmf/core/tape.hpp"

// Core differentiable operators. Convolutions live in conv.hpp, normalization
// in norm.hpp, resampling in resize.hpp. Convention used across the repo:
// conv-style ops compute cross-correlation (no kernel flip); every shipped
// kernel is stored in the orientation the code applies.

namespace mmf {

// C(MxN) += A(MxK) * B(KxN), row-major. ikj order so the inner loop streams.
template <typename T>
void gemm_acc(const T* A, const T* B, T* C, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const T* a = A + std::size_t(i) * K;
        T* c = C + std::size_t(i) * N;
        for (int k = 0; k < K; ++k) {
            const T av = a[k];
            if (av == T(0)) continue;
            const T* b = B + std::size_t(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

template <typename T>
std::vector<T> transpose_mat(const T* A, int rows, int cols) {
    std::vector<T> out(std::size_t(rows) * cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out[std::size_t(j) * rows + i] = A[std::size_t(i) * cols + j];
    return out;
}

// ---------------------------------------------------------------------------
// elementwise, same shape
// ---------------------------------------------------------------------------

template <typename T>
int add(Tape<T>& t, int a, int b) {
    check_same_shape(t.val(a), t.val(b), "add");
    Tensor<T> out = t.val(a);
    const Tensor<T>& vb = t.val(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    return t.push(std::move(out), {a, b}, [a, b](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        if (tp.needs_grad(a)) {
            Tensor<T>& ga = tp.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.needs_grad(b)) {
            Tensor<T>& gb = tp.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

template <typename T>
int sub(Tape<T>& t, int a, int b) {
    check_same_shape(t.val(a), t.val(b), "sub");
    Tensor<T> out = t.val(a);
    const Tensor<T>& vb = t.val(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
    return t.push(std::move(out), {a, b}, [a, b](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        if (tp.needs_grad(a)) {
            Tensor<T>& ga = tp.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.needs_grad(b)) {
            Tensor<T>& gb = tp.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

template <typename T>
int mul(Tape<T>& t, int a, int b) {
    check_same_shape(t.val(a), t.val(b), "mul");
    Tensor<T> out = t.val(a);
    const Tensor<T>& vb = t.val(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return t.push(std::move(out), {a, b}, [a, b](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        const Tensor<T>& va = tp.val(a);
        const Tensor<T>& vb2 = tp.val(b);
        if (tp.needs_grad(a)) {
            Tensor<T>& ga = tp.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb2[i];
        }
        if (tp.needs_grad(b)) {
            Tensor<T>& gb = tp.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
        }
    });
}

template <typename T>
int scale(Tape<T>& t, int a, T s) {
    Tensor<T> out = t.val(a);
    for (T& x : out.v) x *= s;
    return t.push(std::move(out), {a}, [a, s](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        Tensor<T>& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
}

// ---------------------------------------------------------------------------
// broadcast binary: each dim of b equals a's dim or 1
// ---------------------------------------------------------------------------

enum class BcastOp { Add, Mul, Div };

template <typename T>
inline std::size_t bcast_index(const Shape4& sa, const Shape4& sb, int n, int c, int h, int w) {
    int bn = sb.n == 1 ? 0 : n;
    int bc = sb.c == 1 ? 0 : c;
    int bh = sb.h == 1 ? 0 : h;
    int bw = sb.w == 1 ? 0 : w;
    (void)sa;
    return ((std::size_t(bn) * sb.c + bc) * sb.h + bh) * sb.w + bw;
}

template <typename T>
int binary_bcast(Tape<T>& t, int a, int b, BcastOp op) {
    const Shape4 sa = t.val(a).shape;
    const Shape4 sb = t.val(b).shape;
    for (int i = 0; i < 4; ++i)
        if (sb.dim(i) != 1 && sb.dim(i) != sa.dim(i))
            throw std::invalid_argument("binary_bcast: " + sb.str() + " not broadcastable to " + sa.str());
    Tensor<T> out(sa);
    const Tensor<T>& va = t.val(a);
    const Tensor<T>& vb = t.val(b);
    std::size_t i = 0;
    for (int n = 0; n < sa.n; ++n)
        for (int c = 0; c < sa.c; ++c)
            for (int h = 0; h < sa.h; ++h)
                for (int w = 0; w < sa.w; ++w, ++i) {
                    T x = va[i], y = vb[bcast_index<T>(sa, sb, n, c, h, w)];
                    out[i] = op == BcastOp::Add ? x + y : op == BcastOp::Mul ? x * y : x / y;
                }
    return t.push(std::move(out), {a, b}, [a, b, sa, sb, op](Tape<T>& tp, int yid) {
        const Tensor<T>& g = tp.grad(yid);
        const Tensor<T>& va2 = tp.val(a);
        const Tensor<T>& vb2 = tp.val(b);
        const bool na = tp.needs_grad(a), nb = tp.needs_grad(b);
        Tensor<T>* ga = na ? &tp.grad(a) : nullptr;
        Tensor<T>* gb = nb ? &tp.grad(b) : nullptr;
        std::size_t i = 0;
        for (int n = 0; n < sa.n; ++n)
            for (int c = 0; c < sa.c; ++c)
                for (int h = 0; h < sa.h; ++h)
                    for (int w = 0; w < sa.w; ++w, ++i) {
                        std::size_t j = bcast_index<T>(sa, sb, n, c, h, w);
                        switch (op) {
                            case BcastOp::Add:
                                if (na) (*ga)[i] += g[i];
                                if (nb) (*gb)[j] += g[i];
                                break;
                            case BcastOp::Mul:
                                if (na) (*ga)[i] += g[i] * vb2[j];
                                if (nb) (*gb)[j] += g[i] * va2[i];
                                break;
                            case BcastOp::Div:
                                if (na) (*ga)[i] += g[i] / vb2[j];
                                if (nb) (*gb)[j] -= g[i] * va2[i] / (vb2[j] * vb2[j]);
                                break;
                        }
                    }
    });
}

template <typename T>
int add_bcast(Tape<T>& t, int a, int b) { return binary_bcast(t, a, b, BcastOp::Add); }
template <typename T>
int mul_bcast(Tape<T>& t, int a, int b) { return binary_bcast(t, a, b, BcastOp::Mul); }
template <typename T>
int div_bcast(Tape<T>& t, int a, int b) { return binary_bcast(t, a, b, BcastOp::Div); }

// ---------------------------------------------------------------------------
// nonlinearities
// ---------------------------------------------------------------------------

template <typename T>
int relu(Tape<T>& t, int a) {
    Tensor<T> out = t.val(a);
    for (T& x : out.v) x = x > T(0) ? x : T(0);
    return t.push(std::move(out), {a}, [a](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        const Tensor<T>& va = tp.val(a);
        Tensor<T>& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (va[i] > T(0)) ga[i] += g[i];
    });
}

template <typename T>
int sigmoid(Tape<T>& t, int a) {
    Tensor<T> out = t.val(a);
    for (T& x : out.v) x = T(1) / (T(1) + std::exp(-x));
    return t.push(std::move(out), {a}, [a](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        const Tensor<T>& vy = tp.val(y);
        Tensor<T>& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vy[i] * (T(1) - vy[i]);
    });
}

template <typename T>
int gelu(Tape<T>& t, int a) {
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    Tensor<T> out = t.val(a);
    for (T& x : out.v) x = T(0.5) * x * (T(1) + T(std::erf(double(x) * kInvSqrt2)));
    return t.push(std::move(out), {a}, [a](Tape<T>& tp, int y) {
        constexpr double kInvSqrt2Pi = 0.3989422804014326779;
        const Tensor<T>& g = tp.grad(y);
        const Tensor<T>& va = tp.val(a);
        Tensor<T>& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            double x = double(va[i]);
            double d = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244)) +
                       x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
            ga[i] += g[i] * T(d);
        }
    });
}

// ---------------------------------------------------------------------------
// reductions over (h, w), keeping (n, c, 1, 1)
// ---------------------------------------------------------------------------

template <typename T>
int reduce_mean_hw(Tape<T>& t, int a) {
    const Shape4 s = t.val(a).shape;
    Tensor<T> out(Shape4(s.n, s.c, 1, 1));
    const Tensor<T>& va = t.val(a);
    const std::size_t hw = std::size_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const T* p = va.data() + (std::size_t(n) * s.c + c) * hw;
            T acc = T(0);
            for (std::size_t i = 0; i < hw; ++i) acc += p[i];
            out.at(n, c, 0, 0) = acc / T(hw);
        }
    return t.push(std::move(out), {a}, [a, s](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        Tensor<T>& ga = tp.grad(a);
        const std::size_t hw = std::size_t(s.h) * s.w;
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                T gv = g.at(n, c, 0, 0) / T(hw);
                T* p = ga.data() + (std::size_t(n) * s.c + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) p[i] += gv;
            }
    });
}

template <typename T>
int reduce_sum_hw(Tape<T>& t, int a) {
    const Shape4 s = t.val(a).shape;
    int m = reduce_mean_hw(t, a);
    return scale(t, m, T(std::size_t(s.h) * s.w));
}

// extreme = +1 for max, -1 for min; gradient flows to the first arg-extreme.
template <typename T>
int reduce_extreme_hw(Tape<T>& t, int a, int sign) {
    const Shape4 s = t.val(a).shape;
    Tensor<T> out(Shape4(s.n, s.c, 1, 1));
    const Tensor<T>& va = t.val(a);
    const std::size_t hw = std::size_t(s.h) * s.w;
    auto arg = std::make_shared<std::vector<std::size_t>>(std::size_t(s.n) * s.c);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const T* p = va.data() + (std::size_t(n) * s.c + c) * hw;
            std::size_t best = 0;
            for (std::size_t i = 1; i < hw; ++i)
                if (sign > 0 ? p[i] > p[best] : p[i] < p[best]) best = i;
            (*arg)[std::size_t(n) * s.c + c] = best;
            out.at(n, c, 0, 0) = p[best];
        }
    return t.push(std::move(out), {a}, [a, s, arg](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        Tensor<T>& ga = tp.grad(a);
        const std::size_t hw = std::size_t(s.h) * s.w;
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                ga.data()[(std::size_t(n) * s.c + c) * hw + (*arg)[std::size_t(n) * s.c + c]] +=
                    g.at(n, c, 0, 0);
    });
}

template <typename T>
int reduce_max_hw(Tape<T>& t, int a) { return reduce_extreme_hw(t, a, +1); }
template <typename T>
int reduce_min_hw(Tape<T>& t, int a) { return reduce_extreme_hw(t, a, -1); }

// mean over every element -> scalar node
template <typename T>
int reduce_mean_all(Tape<T>& t, int a) {
    const Tensor<T>& va = t.val(a);
    T acc = T(0);
    for (const T& x : va.v) acc += x;
    const std::size_t n = va.size();
    Tensor<T> out = Tensor<T>::scalar(acc / T(n));
    return t.push(std::move(out), {a}, [a, n](Tape<T>& tp, int y) {
        T gv = tp.grad(y)[0] / T(n);
        Tensor<T>& ga = tp.grad(a);
        for (T& x : ga.v) x += gv;
    });
}

template <typename T>
int add_scalar_nodes(Tape<T>& t, int a, int b) { return add(t, a, b); }

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

template <typename T>
int reshape(Tape<T>& t, int a, Shape4 s) {
    if (s.numel() != t.val(a).size())
        throw std::invalid_argument("reshape: numel mismatch " + t.val(a).shape.str() + " -> " + s.str());
    Tensor<T> out(s);
    out.v = t.val(a).v;
    return t.push(std::move(out), {a}, [a](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        Tensor<T>& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

// perm maps output axis -> input axis
template <typename T>
int permute(Tape<T>& t, int a, std::array<int, 4> perm) {
    const Shape4 s = t.val(a).shape;
    int od[4] = {s.dim(perm[0]), s.dim(perm[1]), s.dim(perm[2]), s.dim(perm[3])};
    Tensor<T> out(Shape4(od[0], od[1], od[2], od[3]));
    const Tensor<T>& va = t.val(a);
    int id[4] = {s.n, s.c, s.h, s.w};
    std::size_t istride[4] = {std::size_t(s.c) * s.h * s.w, std::size_t(s.h) * s.w, std::size_t(s.w), 1};
    (void)id;
    std::size_t i = 0;
    int idx[4];
    for (idx[0] = 0; idx[0] < od[0]; ++idx[0])
        for (idx[1] = 0; idx[1] < od[1]; ++idx[1])
            for (idx[2] = 0; idx[2] < od[2]; ++idx[2])
                for (idx[3] = 0; idx[3] < od[3]; ++idx[3], ++i) {
                    std::size_t src = 0;
                    for (int ax = 0; ax < 4; ++ax) src += std::size_t(idx[ax]) * istride[perm[ax]];
                    out[i] = va[src];
                }
    return t.push(std::move(out), {a}, [a, perm, s, od0 = od[0], od1 = od[1], od2 = od[2], od3 = od[3]](
                                           Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        Tensor<T>& ga = tp.grad(a);
        std::size_t istride[4] = {std::size_t(s.c) * s.h * s.w, std::size_t(s.h) * s.w,
                                  std::size_t(s.w), 1};
        std::size_t i = 0;
        int idx[4];
        int od[4] = {od0, od1, od2, od3};
        for (idx[0] = 0; idx[0] < od[0]; ++idx[0])
            for (idx[1] = 0; idx[1] < od[1]; ++idx[1])
                for (idx[2] = 0; idx[2] < od[2]; ++idx[2])
                    for (idx[3] = 0; idx[3] < od[3]; ++idx[3], ++i) {
                        std::size_t src = 0;
                        for (int ax = 0; ax < 4; ++ax) src += std::size_t(idx[ax]) * istride[perm[ax]];
                        ga[src] += g[i];
                    }
    });
}

template <typename T>
int concat_channels(Tape<T>& t, const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: empty");
    Shape4 s0 = t.val(parts[0]).shape;
    int ctotal = 0;
    for (int p : parts) {
        const Shape4& sp = t.val(p).shape;
        if (sp.n != s0.n || sp.h != s0.h || sp.w != s0.w)
            throw std::invalid_argument("concat_channels: mismatched dims " + sp.str() + " vs " + s0.str());
        ctotal += sp.c;
    }
    Tensor<T> out(Shape4(s0.n, ctotal, s0.h, s0.w));
    const std::size_t hw = std::size_t(s0.h) * s0.w;
    int coff = 0;
    for (int p : parts) {
        const Tensor<T>& vp = t.val(p);
        int pc = vp.shape.c;
        for (int n = 0; n < s0.n; ++n)
            std::memcpy(out.data() + ((std::size_t(n) * ctotal + coff) * hw),
                        vp.data() + (std::size_t(n) * pc * hw), sizeof(T) * pc * hw);
        coff += pc;
    }
    auto parts_copy = std::make_shared<std::vector<int>>(parts);
    return t.push(std::move(out), parts, [parts_copy, s0, ctotal, hw](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        int coff = 0;
        for (int p : *parts_copy) {
            int pc = tp.val(p).shape.c;
            if (tp.needs_grad(p)) {
                Tensor<T>& gp = tp.grad(p);
                for (int n = 0; n < s0.n; ++n) {
                    const T* src = g.data() + ((std::size_t(n) * ctotal + coff) * hw);
                    T* dst = gp.data() + (std::size_t(n) * pc * hw);
                    for (std::size_t i = 0; i < std::size_t(pc) * hw; ++i) dst[i] += src[i];
                }
            }
            coff += pc;
        }
    });
}

template <typename T>
int slice_channels(Tape<T>& t, int a, int c0, int count) {
    const Shape4 s = t.val(a).shape;
    if (c0 < 0 || count < 1 || c0 + count > s.c)
        throw std::invalid_argument("slice_channels: [" + std::to_string(c0) + "," +
                                    std::to_string(c0 + count) + ") out of " + s.str());
    Tensor<T> out(Shape4(s.n, count, s.h, s.w));
    const Tensor<T>& va = t.val(a);
    const std::size_t hw = std::size_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        std::memcpy(out.data() + std::size_t(n) * count * hw,
                    va.data() + (std::size_t(n) * s.c + c0) * hw, sizeof(T) * count * hw);
    return t.push(std::move(out), {a}, [a, s, c0, count, hw](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        Tensor<T>& ga = tp.grad(a);
        for (int n = 0; n < s.n; ++n) {
            const T* src = g.data() + std::size_t(n) * count * hw;
            T* dst = ga.data() + (std::size_t(n) * s.c + c0) * hw;
            for (std::size_t i = 0; i < std::size_t(count) * hw; ++i) dst[i] += src[i];
        }
    });
}

// ---------------------------------------------------------------------------
// softmax over the innermost axis
// ---------------------------------------------------------------------------

template <typename T>
int softmax_lastdim(Tape<T>& t, int a) {
    const Shape4 s = t.val(a).shape;
    Tensor<T> out = t.val(a);
    const std::size_t rows = out.size() / s.w;
    for (std::size_t r = 0; r < rows; ++r) {
        T* p = out.data() + r * s.w;
        T mx = p[0];
        for (int i = 1; i < s.w; ++i) mx = std::max(mx, p[i]);
        T sum = T(0);
        for (int i = 0; i < s.w; ++i) {
            p[i] = std::exp(p[i] - mx);
            sum += p[i];
        }
        for (int i = 0; i < s.w; ++i) p[i] /= sum;
    }
    return t.push(std::move(out), {a}, [a, s](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        const Tensor<T>& vy = tp.val(y);
        Tensor<T>& ga = tp.grad(a);
        const std::size_t rows = g.size() / s.w;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* gy = g.data() + r * s.w;
            const T* py = vy.data() + r * s.w;
            T* pa = ga.data() + r * s.w;
            T dot = T(0);
            for (int i = 0; i < s.w; ++i) dot += gy[i] * py[i];
            for (int i = 0; i < s.w; ++i) pa[i] += (gy[i] - dot) * py[i];
        }
    });
}

// ---------------------------------------------------------------------------
// batched matmul: a (B,H,M,K) x b (B,H,K,N) -> (B,H,M,N)
// ---------------------------------------------------------------------------

template <typename T>
int bmm(Tape<T>& t, int a, int b) {
    const Shape4 sa = t.val(a).shape;
    const Shape4 sb = t.val(b).shape;
    if (sa.n != sb.n || sa.c != sb.c || sa.w != sb.h)
        throw std::invalid_argument("bmm: incompatible " + sa.str() + " x " + sb.str());
    const int B = sa.n * sa.c, M = sa.h, K = sa.w, N = sb.w;
    Tensor<T> out(Shape4(sa.n, sa.c, M, N));
    const Tensor<T>& va = t.val(a);
    const Tensor<T>& vb = t.val(b);
    for (int bi = 0; bi < B; ++bi)
        gemm_acc(va.data() + std::size_t(bi) * M * K, vb.data() + std::size_t(bi) * K * N,
                 out.data() + std::size_t(bi) * M * N, M, K, N);
    return t.push(std::move(out), {a, b}, [a, b, B, M, K, N](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        const Tensor<T>& va2 = tp.val(a);
        const Tensor<T>& vb2 = tp.val(b);
        if (tp.needs_grad(a)) {
            // dA = dY * B^T
            Tensor<T>& ga = tp.grad(a);
            for (int bi = 0; bi < B; ++bi) {
                auto bt = transpose_mat(vb2.data() + std::size_t(bi) * K * N, K, N);  // N x K
                gemm_acc(g.data() + std::size_t(bi) * M * N, bt.data(),
                         ga.data() + std::size_t(bi) * M * K, M, N, K);
            }
        }
        if (tp.needs_grad(b)) {
            // dB = A^T * dY
            Tensor<T>& gb = tp.grad(b);
            for (int bi = 0; bi < B; ++bi) {
                auto at = transpose_mat(va2.data() + std::size_t(bi) * M * K, M, K);  // K x M
                gemm_acc(at.data(), g.data() + std::size_t(bi) * M * N,
                         gb.data() + std::size_t(bi) * K * N, K, M, N);
            }
        }
    });
}

// tokens (B,1,N,C) x weight (1,1,Co,C) [+ bias (1,1,1,Co)] -> (B,1,N,Co)
template <typename T>
int linear_tokens(Tape<T>& t, int x, int w, int bias = -1) {
    const Shape4 sx = t.val(x).shape;
    const Shape4 sw = t.val(w).shape;
    if (sx.c != 1 || sw.n != 1 || sw.c != 1 || sw.w != sx.w)
        throw std::invalid_argument("linear_tokens: incompatible " + sx.str() + " x " + sw.str());
    const int B = sx.n, N = sx.h, C = sx.w, Co = sw.h;
    Tensor<T> out(Shape4(B, 1, N, Co));
    const Tensor<T>& vx = t.val(x);
    const Tensor<T>& vw = t.val(w);
    auto wt = transpose_mat(vw.data(), Co, C);  // C x Co
    for (int bi = 0; bi < B; ++bi)
        gemm_acc(vx.data() + std::size_t(bi) * N * C, wt.data(), out.data() + std::size_t(bi) * N * Co,
                 N, C, Co);
    if (bias >= 0) {
        const Tensor<T>& vb = t.val(bias);
        if (int(vb.size()) != Co) throw std::invalid_argument("linear_tokens: bias size");
        for (int bi = 0; bi < B; ++bi)
            for (int ni = 0; ni < N; ++ni) {
                T* p = out.data() + (std::size_t(bi) * N + ni) * Co;
                for (int j = 0; j < Co; ++j) p[j] += vb[j];
            }
    }
    return t.push(std::move(out), {x, w, bias}, [x, w, bias, B, N, C, Co](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        if (tp.needs_grad(x)) {
            // dX = dY (N x Co) * W (Co x C)
            Tensor<T>& gx = tp.grad(x);
            const Tensor<T>& vw2 = tp.val(w);
            for (int bi = 0; bi < B; ++bi)
                gemm_acc(g.data() + std::size_t(bi) * N * Co, vw2.data(),
                         gx.data() + std::size_t(bi) * N * C, N, Co, C);
        }
        if (tp.needs_grad(w)) {
            // dW = sum_b dY^T (Co x N) * X (N x C)
            Tensor<T>& gw = tp.grad(w);
            const Tensor<T>& vx2 = tp.val(x);
            for (int bi = 0; bi < B; ++bi) {
                auto gt = transpose_mat(g.data() + std::size_t(bi) * N * Co, N, Co);  // Co x N
                gemm_acc(gt.data(), vx2.data() + std::size_t(bi) * N * C, gw.data(), Co, N, C);
            }
        }
        if (bias >= 0 && tp.needs_grad(bias)) {
            Tensor<T>& gb = tp.grad(bias);
            for (int bi = 0; bi < B; ++bi)
                for (int ni = 0; ni < N; ++ni) {
                    const T* p = g.data() + (std::size_t(bi) * N + ni) * Co;
                    for (int j = 0; j < Co; ++j) gb[j] += p[j];
                }
        }
    });
}

// per-sample select: out[n] = cond[n] ? a[n] : b[n]
template <typename T>
int where_sample(Tape<T>& t, const std::vector<bool>& cond, int a, int b) {
    check_same_shape(t.val(a), t.val(b), "where_sample");
    const Shape4 s = t.val(a).shape;
    if (int(cond.size()) != s.n) throw std::invalid_argument("where_sample: cond size != batch");
    Tensor<T> out(s);
    const std::size_t per = std::size_t(s.c) * s.h * s.w;
    const Tensor<T>& va = t.val(a);
    const Tensor<T>& vb = t.val(b);
    auto cond_copy = std::make_shared<std::vector<bool>>(cond);
    for (int n = 0; n < s.n; ++n) {
        const T* src = (cond[n] ? va.data() : vb.data()) + std::size_t(n) * per;
        std::memcpy(out.data() + std::size_t(n) * per, src, sizeof(T) * per);
    }
    return t.push(std::move(out), {a, b}, [a, b, s, per, cond_copy](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        for (int n = 0; n < s.n; ++n) {
            int target = (*cond_copy)[n] ? a : b;
            if (!tp.needs_grad(target)) continue;
            T* dst = tp.grad(target).data() + std::size_t(n) * per;
            const T* src = g.data() + std::size_t(n) * per;
            for (std::size_t i = 0; i < per; ++i) dst[i] += src[i];
        }
    });
}

// ---------------------------------------------------------------------------
// dropout (inverted scaling). Masks are derived per sample from stable seeds
// so results do not depend on how samples are grouped into physical batches.
// ---------------------------------------------------------------------------

template <typename T>
int dropout(Tape<T>& t, int a, double rate, const std::vector<std::uint64_t>& sample_seeds,
            std::uint64_t layer_id, bool enabled) {
    if (!enabled || rate <= 0.0) return a;
    if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
    const Shape4 s = t.val(a).shape;
    if (int(sample_seeds.size()) != s.n)
        throw std::invalid_argument("dropout: need one seed per sample");
    auto mask = std::make_shared<std::vector<T>>(t.val(a).size());
    const T keep_inv = T(1.0 / (1.0 - rate));
    const std::size_t per = std::size_t(s.c) * s.h * s.w;
    for (int n = 0; n < s.n; ++n) {
        Rng rng(derive_seed(sample_seeds[n], layer_id));
        T* m = mask->data() + std::size_t(n) * per;
        for (std::size_t i = 0; i < per; ++i) m[i] = rng.uniform() < rate ? T(0) : keep_inv;
    }
    Tensor<T> out = t.val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
    return t.push(std::move(out), {a}, [a, mask](Tape<T>& tp, int y) {
        const Tensor<T>& g = tp.grad(y);
        Tensor<T>& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*mask)[i];
    });
}

}  // namespace mmf
