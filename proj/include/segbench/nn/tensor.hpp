#pragma once

#include <cmath>
#include <vector>

#include "segbench/common.hpp"

namespace segbench::nn {

// Dense NCHW tensor.
template <class T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_, T fill = T{})
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {
        if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1)
            throw ShapeError("tensor dims must be >= 1, got " + shape_str());
    }

    T& at(int in, int ic, int iy, int ix) {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    const T& at(int in, int ic, int iy, int ix) const {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    size_t size() const { return v.size(); }

    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
               std::to_string(w);
    }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    template <class U>
    Tensor4<U> cast() const {
        Tensor4<U> out(n, c, h, w);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

} // namespace segbench::nn
