#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmf {

// Dense rank-4 shape, interpreted as (batch, channels, height, width).
// Vectors and scalars use degenerate dims, e.g. a length-C vector is (1,C,1,1).
struct Shape4 {
    int n = 1, c = 1, h = 1, w = 1;

    Shape4() = default;
    Shape4(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

    std::size_t numel() const {
        return std::size_t(n) * std::size_t(c) * std::size_t(h) * std::size_t(w);
    }
    bool operator==(const Shape4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape4& o) const { return !(*this == o); }
    int dim(int i) const {
        switch (i) {
            case 0: return n;
            case 1: return c;
            case 2: return h;
            default: return w;
        }
    }
    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
    void validate() const {
        if (n < 1 || c < 1 || h < 1 || w < 1)
            throw std::invalid_argument("Shape4: all dims must be >= 1, got " + str());
    }
};

template <typename T>
struct Tensor {
    Shape4 shape;
    std::vector<T> v;

    Tensor() : shape(1, 1, 1, 1), v(1, T(0)) {}
    explicit Tensor(Shape4 s) : shape(s) {
        s.validate();
        v.assign(s.numel(), T(0));
    }
    Tensor(Shape4 s, T fill) : shape(s) {
        s.validate();
        v.assign(s.numel(), fill);
    }

    static Tensor zeros(Shape4 s) { return Tensor(s); }
    static Tensor full(Shape4 s, T x) { return Tensor(s, x); }
    static Tensor scalar(T x) { return Tensor(Shape4(1, 1, 1, 1), x); }

    std::size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& at(int n, int c, int h, int w) {
        return v[((std::size_t(n) * shape.c + c) * shape.h + h) * shape.w + w];
    }
    const T& at(int n, int c, int h, int w) const {
        return v[((std::size_t(n) * shape.c + c) * shape.h + h) * shape.w + w];
    }
    T& operator[](std::size_t i) { return v[i]; }
    const T& operator[](std::size_t i) const { return v[i]; }

    T item() const {
        if (size() != 1) throw std::runtime_error("Tensor::item on non-scalar " + shape.str());
        return v[0];
    }

    bool all_finite() const {
        for (const T& x : v)
            if (!std::isfinite(double(x))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.v.resize(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = U(v[i]);
        return out;
    }
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape != b.shape)
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape.str() +
                                    " vs " + b.shape.str());
}

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& what) {
    if (!t.all_finite()) throw std::runtime_error(what + ": non-finite values");
}

}  // namespace mmf
