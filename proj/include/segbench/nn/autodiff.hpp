#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "segbench/nn/tensor.hpp"
#include "segbench/rng.hpp"

namespace segbench::nn {

// When enabled, every tape node is checked for NaN/Inf at creation.
inline std::atomic<bool> g_debug_finite{false};
inline void set_debug_finite(bool on) { g_debug_finite.store(on); }

template <class T>
struct Node {
    Tensor4<T> val;
    Tensor4<T> grad;
    std::function<void()> back; // reads this->grad, accumulates into parents
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

// Reverse-mode tape. Ops append nodes in evaluation order; backward()
// replays the tape in reverse. One tape per forward pass.
template <class T>
class Tape {
public:
    Var<T> make(Tensor4<T> val) {
        auto n = std::make_shared<Node<T>>();
        if (g_debug_finite.load() && !val.all_finite())
            throw Error("non-finite value produced (debug finite check)");
        n->grad = Tensor4<T>(val.n, val.c, val.h, val.w, T{});
        n->val = std::move(val);
        nodes_.push_back(n);
        return n;
    }

    // Leaf wrapping an externally owned value (parameters, inputs).
    Var<T> leaf(const Tensor4<T>& val) { return make(val); }

    void backward(const Var<T>& loss) {
        if (loss->val.size() != 1) throw ShapeError("backward expects a scalar loss");
        loss->grad.fill(T{1});
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if ((*it)->back) (*it)->back();
    }

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

private:
    std::vector<Var<T>> nodes_;
};

namespace detail {

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Valid output range [lo, hi) so that ox*stride - pad + kx stays inside [0, in).
inline void valid_out_range(int in, int k_off, int stride, int pad, int out, int& lo, int& hi) {
    // ix = ox*stride - pad + k_off in [0, in)
    int num_lo = pad - k_off;
    lo = num_lo <= 0 ? 0 : (num_lo + stride - 1) / stride;
    int num_hi = in - 1 + pad - k_off;
    hi = num_hi < 0 ? 0 : num_hi / stride + 1;
    lo = std::clamp(lo, 0, out);
    hi = std::clamp(hi, lo, out);
}

} // namespace detail

// ---- convolution -----------------------------------------------------------

// Cross-correlation (no kernel flip), the mainstream DL convention.
// x: (N,IC,H,W), w: (OC,IC,KH,KW), bias: (1,OC,1,1) or empty Var.
template <class T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride,
              int pad) {
    const auto& xv = x->val;
    const auto& wv = w->val;
    if (wv.c != xv.c) throw ShapeError("conv2d: input channels " + std::to_string(xv.c) +
                                       " != weight channels " + std::to_string(wv.c));
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    const int oh = detail::conv_out_dim(xv.h, wv.h, stride, pad);
    const int ow = detail::conv_out_dim(xv.w, wv.w, stride, pad);
    if (oh < 1 || ow < 1) throw ShapeError("conv2d: output would be empty for input " + xv.shape_str());

    Tensor4<T> out(xv.n, wv.n, oh, ow);
    for (int b = 0; b < xv.n; ++b)
        for (int oc = 0; oc < wv.n; ++oc) {
            T bias_v = bias ? bias->val.v[oc] : T{0};
            for (int oy = 0; oy < oh; ++oy) {
                T* orow = &out.at(b, oc, oy, 0);
                for (int ox = 0; ox < ow; ++ox) orow[ox] = bias_v;
            }
            for (int ic = 0; ic < xv.c; ++ic)
                for (int ky = 0; ky < wv.h; ++ky)
                    for (int kx = 0; kx < wv.w; ++kx) {
                        const T wv_k = wv.at(oc, ic, ky, kx);
                        if (wv_k == T{0}) continue;
                        int xlo, xhi;
                        detail::valid_out_range(xv.w, kx, stride, pad, ow, xlo, xhi);
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= xv.h) continue;
                            const T* xrow = &xv.at(b, ic, iy, 0);
                            T* orow = &out.at(b, oc, oy, 0);
                            for (int ox = xlo; ox < xhi; ++ox)
                                orow[ox] += wv_k * xrow[ox * stride - pad + kx];
                        }
                    }
        }

    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    const int s = stride, p = pad;
    o->back = [self, x, w, bias, s, p]() {
        const auto& g = self->grad;
        const auto& xv = x->val;
        const auto& wv = w->val;
        for (int b = 0; b < xv.n; ++b)
            for (int oc = 0; oc < wv.n; ++oc) {
                if (bias) {
                    T acc{0};
                    for (int oy = 0; oy < g.h; ++oy) {
                        const T* grow = &g.at(b, oc, oy, 0);
                        for (int ox = 0; ox < g.w; ++ox) acc += grow[ox];
                    }
                    bias->grad.v[oc] += acc;
                }
                for (int ic = 0; ic < xv.c; ++ic)
                    for (int ky = 0; ky < wv.h; ++ky)
                        for (int kx = 0; kx < wv.w; ++kx) {
                            int xlo, xhi;
                            detail::valid_out_range(xv.w, kx, s, p, g.w, xlo, xhi);
                            const T wk = wv.at(oc, ic, ky, kx);
                            T dwk{0};
                            for (int oy = 0; oy < g.h; ++oy) {
                                const int iy = oy * s - p + ky;
                                if (iy < 0 || iy >= xv.h) continue;
                                const T* grow = &g.at(b, oc, oy, 0);
                                const T* xrow = &xv.at(b, ic, iy, 0);
                                T* dxrow = &x->grad.at(b, ic, iy, 0);
                                for (int ox = xlo; ox < xhi; ++ox) {
                                    const T gv = grow[ox];
                                    dwk += gv * xrow[ox * s - p + kx];
                                    dxrow[ox * s - p + kx] += gv * wk;
                                }
                            }
                            w->grad.at(oc, ic, ky, kx) += dwk;
                        }
            }
    };
    return o;
}

// x: (N,C,H,W), w: (C,1,KH,KW), bias: (1,C,1,1) or empty.
template <class T>
Var<T> depthwise_conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& bias,
                        int stride, int pad) {
    const auto& xv = x->val;
    const auto& wv = w->val;
    if (wv.n != xv.c || wv.c != 1)
        throw ShapeError("depthwise_conv2d: weight must be (C,1,kh,kw) with C = input channels");
    const int oh = detail::conv_out_dim(xv.h, wv.h, stride, pad);
    const int ow = detail::conv_out_dim(xv.w, wv.w, stride, pad);
    if (oh < 1 || ow < 1) throw ShapeError("depthwise_conv2d: output would be empty");

    Tensor4<T> out(xv.n, xv.c, oh, ow);
    for (int b = 0; b < xv.n; ++b)
        for (int c = 0; c < xv.c; ++c) {
            T bias_v = bias ? bias->val.v[c] : T{0};
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = bias_v;
                    for (int ky = 0; ky < wv.h; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= xv.h) continue;
                        for (int kx = 0; kx < wv.w; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= xv.w) continue;
                            acc += xv.at(b, c, iy, ix) * wv.at(c, 0, ky, kx);
                        }
                    }
                    out.at(b, c, oy, ox) = acc;
                }
        }

    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    const int s = stride, p = pad;
    o->back = [self, x, w, bias, s, p]() {
        const auto& g = self->grad;
        const auto& xv = x->val;
        const auto& wv = w->val;
        for (int b = 0; b < xv.n; ++b)
            for (int c = 0; c < xv.c; ++c)
                for (int oy = 0; oy < g.h; ++oy)
                    for (int ox = 0; ox < g.w; ++ox) {
                        const T gv = g.at(b, c, oy, ox);
                        if (bias) bias->grad.v[c] += gv;
                        for (int ky = 0; ky < wv.h; ++ky) {
                            const int iy = oy * s - p + ky;
                            if (iy < 0 || iy >= xv.h) continue;
                            for (int kx = 0; kx < wv.w; ++kx) {
                                const int ix = ox * s - p + kx;
                                if (ix < 0 || ix >= xv.w) continue;
                                w->grad.at(c, 0, ky, kx) += gv * xv.at(b, c, iy, ix);
                                x->grad.at(b, c, iy, ix) += gv * wv.at(c, 0, ky, kx);
                            }
                        }
                    }
    };
    return o;
}

// ---- pointwise -------------------------------------------------------------

template <class T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
    Tensor4<T> out = x->val;
    for (T& v : out.v) v = v > T{0} ? v : T{0};
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    o->back = [self, x]() {
        for (size_t i = 0; i < x->val.size(); ++i)
            if (x->val.v[i] > T{0}) x->grad.v[i] += self->grad.v[i];
    };
    return o;
}

template <class T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x) {
    Tensor4<T> out = x->val;
    for (T& v : out.v) {
        if (v >= T{0}) {
            v = T{1} / (T{1} + std::exp(-v));
        } else {
            T e = std::exp(v);
            v = e / (T{1} + e);
        }
    }
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    o->back = [self, x]() {
        for (size_t i = 0; i < x->val.size(); ++i) {
            const T y = self->val.v[i];
            x->grad.v[i] += self->grad.v[i] * y * (T{1} - y);
        }
    };
    return o;
}

template <class T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
    if (!a->val.same_shape(b->val))
        throw ShapeError("add: " + a->val.shape_str() + " vs " + b->val.shape_str());
    Tensor4<T> out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] += b->val.v[i];
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    o->back = [self, a, b]() {
        for (size_t i = 0; i < self->grad.size(); ++i) {
            a->grad.v[i] += self->grad.v[i];
            b->grad.v[i] += self->grad.v[i];
        }
    };
    return o;
}

// Inverted-scale dropout; eval is an exact no-op (the input Var is returned).
template <class T>
Var<T> dropout(Tape<T>& tape, const Var<T>& x, double rate, RngStream rng, bool training) {
    if (!training || rate <= 0.0) return x;
    if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    auto mask = std::make_shared<std::vector<T>>(x->val.size());
    Tensor4<T> out = x->val;
    for (size_t i = 0; i < out.size(); ++i) {
        const T m = rng.next_double() >= rate ? scale : T{0};
        (*mask)[i] = m;
        out.v[i] *= m;
    }
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    o->back = [self, x, mask]() {
        for (size_t i = 0; i < x->val.size(); ++i) x->grad.v[i] += self->grad.v[i] * (*mask)[i];
    };
    return o;
}

// ---- pooling / resampling --------------------------------------------------

template <class T>
Var<T> max_pool2d(Tape<T>& tape, const Var<T>& x, int k, int stride) {
    const auto& xv = x->val;
    const int oh = (xv.h - k) / stride + 1;
    const int ow = (xv.w - k) / stride + 1;
    if (k < 1 || stride < 1 || oh < 1 || ow < 1)
        throw ShapeError("max_pool2d: invalid window for input " + xv.shape_str());
    Tensor4<T> out(xv.n, xv.c, oh, ow);
    auto argmax = std::make_shared<std::vector<size_t>>(out.size());
    size_t oi = 0;
    for (int b = 0; b < xv.n; ++b)
        for (int c = 0; c < xv.c; ++c)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox, ++oi) {
                    T best{};
                    size_t best_i = 0;
                    bool first = true;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride + ky;
                            const int ix = ox * stride + kx;
                            const size_t idx =
                                ((static_cast<size_t>(b) * xv.c + c) * xv.h + iy) * xv.w + ix;
                            if (first || xv.v[idx] > best) {
                                best = xv.v[idx];
                                best_i = idx;
                                first = false;
                            }
                        }
                    out.v[oi] = best;
                    (*argmax)[oi] = best_i;
                }
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    o->back = [self, x, argmax]() {
        for (size_t i = 0; i < self->grad.size(); ++i) x->grad.v[(*argmax)[i]] += self->grad.v[i];
    };
    return o;
}

// Adaptive average pooling; output cell (i,j) averages the input region
// [floor(i*H/oh), ceil((i+1)*H/oh)) x [floor(j*W/ow), ceil((j+1)*W/ow)).
template <class T>
Var<T> adaptive_avg_pool2d(Tape<T>& tape, const Var<T>& x, int oh, int ow) {
    const auto& xv = x->val;
    if (oh < 1 || ow < 1) throw ShapeError("adaptive_avg_pool2d: output dims must be >= 1");
    Tensor4<T> out(xv.n, xv.c, oh, ow);
    for (int b = 0; b < xv.n; ++b)
        for (int c = 0; c < xv.c; ++c)
            for (int oy = 0; oy < oh; ++oy) {
                const int ys = oy * xv.h / oh;
                const int ye = ((oy + 1) * xv.h + oh - 1) / oh;
                for (int ox = 0; ox < ow; ++ox) {
                    const int xs = ox * xv.w / ow;
                    const int xe = ((ox + 1) * xv.w + ow - 1) / ow;
                    T acc{0};
                    for (int iy = ys; iy < ye; ++iy)
                        for (int ix = xs; ix < xe; ++ix) acc += xv.at(b, c, iy, ix);
                    out.at(b, c, oy, ox) = acc / static_cast<T>((ye - ys) * (xe - xs));
                }
            }
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    const int OH = oh, OW = ow;
    o->back = [self, x, OH, OW]() {
        const auto& xv = x->val;
        for (int b = 0; b < xv.n; ++b)
            for (int c = 0; c < xv.c; ++c)
                for (int oy = 0; oy < OH; ++oy) {
                    const int ys = oy * xv.h / OH;
                    const int ye = ((oy + 1) * xv.h + OH - 1) / OH;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int xs = ox * xv.w / OW;
                        const int xe = ((ox + 1) * xv.w + OW - 1) / OW;
                        const T g = self->grad.at(b, c, oy, ox) /
                                    static_cast<T>((ye - ys) * (xe - xs));
                        for (int iy = ys; iy < ye; ++iy)
                            for (int ix = xs; ix < xe; ++ix) x->grad.at(b, c, iy, ix) += g;
                    }
                }
    };
    return o;
}

template <class T>
Var<T> upsample_nearest2x(Tape<T>& tape, const Var<T>& x) {
    const auto& xv = x->val;
    Tensor4<T> out(xv.n, xv.c, xv.h * 2, xv.w * 2);
    for (int b = 0; b < xv.n; ++b)
        for (int c = 0; c < xv.c; ++c)
            for (int iy = 0; iy < xv.h; ++iy)
                for (int ix = 0; ix < xv.w; ++ix) {
                    const T v = xv.at(b, c, iy, ix);
                    out.at(b, c, 2 * iy, 2 * ix) = v;
                    out.at(b, c, 2 * iy, 2 * ix + 1) = v;
                    out.at(b, c, 2 * iy + 1, 2 * ix) = v;
                    out.at(b, c, 2 * iy + 1, 2 * ix + 1) = v;
                }
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    o->back = [self, x]() {
        const auto& xv = x->val;
        for (int b = 0; b < xv.n; ++b)
            for (int c = 0; c < xv.c; ++c)
                for (int iy = 0; iy < xv.h; ++iy)
                    for (int ix = 0; ix < xv.w; ++ix)
                        x->grad.at(b, c, iy, ix) += self->grad.at(b, c, 2 * iy, 2 * ix) +
                                                    self->grad.at(b, c, 2 * iy, 2 * ix + 1) +
                                                    self->grad.at(b, c, 2 * iy + 1, 2 * ix) +
                                                    self->grad.at(b, c, 2 * iy + 1, 2 * ix + 1);
    };
    return o;
}

namespace detail {

// align_corners=false source coordinate with edge clamping.
inline void bilinear_coords(int od, int id, int o, int& i0, int& i1, double& w1) {
    double src = (o + 0.5) * static_cast<double>(id) / od - 0.5;
    double f = std::floor(src);
    i0 = static_cast<int>(f);
    i1 = i0 + 1;
    w1 = src - f;
    i0 = std::clamp(i0, 0, id - 1);
    i1 = std::clamp(i1, 0, id - 1);
}

} // namespace detail

template <class T>
Var<T> bilinear_resize(Tape<T>& tape, const Var<T>& x, int oh, int ow) {
    const auto& xv = x->val;
    if (oh < 1 || ow < 1) throw ShapeError("bilinear_resize: output dims must be >= 1");
    Tensor4<T> out(xv.n, xv.c, oh, ow);
    for (int oy = 0; oy < oh; ++oy) {
        int y0, y1;
        double wy;
        detail::bilinear_coords(oh, xv.h, oy, y0, y1, wy);
        for (int ox = 0; ox < ow; ++ox) {
            int x0, x1;
            double wx;
            detail::bilinear_coords(ow, xv.w, ox, x0, x1, wx);
            for (int b = 0; b < xv.n; ++b)
                for (int c = 0; c < xv.c; ++c) {
                    const double v = (1 - wy) * ((1 - wx) * xv.at(b, c, y0, x0) +
                                                 wx * xv.at(b, c, y0, x1)) +
                                     wy * ((1 - wx) * xv.at(b, c, y1, x0) +
                                           wx * xv.at(b, c, y1, x1));
                    out.at(b, c, oy, ox) = static_cast<T>(v);
                }
        }
    }
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    const int OH = oh, OW = ow;
    o->back = [self, x, OH, OW]() {
        const auto& xv = x->val;
        for (int oy = 0; oy < OH; ++oy) {
            int y0, y1;
            double wy;
            detail::bilinear_coords(OH, xv.h, oy, y0, y1, wy);
            for (int ox = 0; ox < OW; ++ox) {
                int x0, x1;
                double wx;
                detail::bilinear_coords(OW, xv.w, ox, x0, x1, wx);
                for (int b = 0; b < xv.n; ++b)
                    for (int c = 0; c < xv.c; ++c) {
                        const T g = self->grad.at(b, c, oy, ox);
                        x->grad.at(b, c, y0, x0) += static_cast<T>((1 - wy) * (1 - wx)) * g;
                        x->grad.at(b, c, y0, x1) += static_cast<T>((1 - wy) * wx) * g;
                        x->grad.at(b, c, y1, x0) += static_cast<T>(wy * (1 - wx)) * g;
                        x->grad.at(b, c, y1, x1) += static_cast<T>(wy * wx) * g;
                    }
            }
        }
    };
    return o;
}

// ---- structure -------------------------------------------------------------

template <class T>
Var<T> channel_concat(Tape<T>& tape, const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw ShapeError("channel_concat: no inputs");
    int total_c = 0;
    for (const auto& x : xs) {
        if (x->val.n != xs[0]->val.n || x->val.h != xs[0]->val.h || x->val.w != xs[0]->val.w)
            throw ShapeError("channel_concat: spatial/batch dims differ");
        total_c += x->val.c;
    }
    const auto& f = xs[0]->val;
    Tensor4<T> out(f.n, total_c, f.h, f.w);
    for (int b = 0; b < f.n; ++b) {
        int co = 0;
        for (const auto& x : xs)
            for (int c = 0; c < x->val.c; ++c, ++co)
                std::copy_n(&x->val.at(b, c, 0, 0), static_cast<size_t>(f.h) * f.w,
                            &out.at(b, co, 0, 0));
    }
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    o->back = [self, xs]() {
        const auto& g = self->grad;
        for (int b = 0; b < g.n; ++b) {
            int co = 0;
            for (const auto& x : xs)
                for (int c = 0; c < x->val.c; ++c, ++co) {
                    const T* src = &g.at(b, co, 0, 0);
                    T* dst = &x->grad.at(b, c, 0, 0);
                    const size_t plane = static_cast<size_t>(g.h) * g.w;
                    for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
                }
        }
    };
    return o;
}

// Batch normalization. gamma/beta: (1,C,1,1). In training mode batch
// statistics normalize and running stats are updated in place (PyTorch
// convention: biased variance for normalization, unbiased for the running
// estimate); frozen_stats suppresses the update. In eval mode running
// stats normalize and the op is a pure per-channel affine map.
template <class T>
Var<T> batch_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor4<T>& running_mean, Tensor4<T>& running_var, bool training,
                  double momentum = 0.1, double eps = 1e-5, bool frozen_stats = false) {
    const auto& xv = x->val;
    const int C = xv.c;
    if (gamma->val.size() != static_cast<size_t>(C) || beta->val.size() != static_cast<size_t>(C))
        throw ShapeError("batch_norm: gamma/beta must have C elements");
    const size_t plane = static_cast<size_t>(xv.h) * xv.w;
    const size_t m = static_cast<size_t>(xv.n) * plane;

    Tensor4<T> out(xv.n, C, xv.h, xv.w);

    if (training) {
        auto mean = std::make_shared<std::vector<T>>(C);
        auto inv_std = std::make_shared<std::vector<T>>(C);
        auto xhat = std::make_shared<Tensor4<T>>(xv.n, C, xv.h, xv.w);
        for (int c = 0; c < C; ++c) {
            double acc = 0;
            for (int b = 0; b < xv.n; ++b) {
                const T* p = &xv.at(b, c, 0, 0);
                for (size_t i = 0; i < plane; ++i) acc += p[i];
            }
            const double mu = acc / static_cast<double>(m);
            double var = 0;
            for (int b = 0; b < xv.n; ++b) {
                const T* p = &xv.at(b, c, 0, 0);
                for (size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mu;
                    var += d * d;
                }
            }
            var /= static_cast<double>(m);
            const double istd = 1.0 / std::sqrt(var + eps);
            (*mean)[c] = static_cast<T>(mu);
            (*inv_std)[c] = static_cast<T>(istd);
            const T g = gamma->val.v[c], bb = beta->val.v[c];
            for (int b = 0; b < xv.n; ++b) {
                const T* p = &xv.at(b, c, 0, 0);
                T* xh = &xhat->at(b, c, 0, 0);
                T* op = &out.at(b, c, 0, 0);
                for (size_t i = 0; i < plane; ++i) {
                    xh[i] = static_cast<T>((p[i] - mu) * istd);
                    op[i] = g * xh[i] + bb;
                }
            }
            if (!frozen_stats) {
                const double unbiased = m > 1 ? var * static_cast<double>(m) / (m - 1) : var;
                running_mean.v[c] =
                    static_cast<T>((1.0 - momentum) * running_mean.v[c] + momentum * mu);
                running_var.v[c] =
                    static_cast<T>((1.0 - momentum) * running_var.v[c] + momentum * unbiased);
            }
        }
        auto o = tape.make(std::move(out));
        Node<T>* self = o.get();
        o->back = [self, x, gamma, beta, xhat, inv_std, plane, m]() {
            const auto& g = self->grad;
            const int C = x->val.c;
            for (int c = 0; c < C; ++c) {
                double sum_g = 0, sum_gx = 0;
                for (int b = 0; b < g.n; ++b) {
                    const T* gp = &g.at(b, c, 0, 0);
                    const T* xh = &xhat->at(b, c, 0, 0);
                    for (size_t i = 0; i < plane; ++i) {
                        sum_g += gp[i];
                        sum_gx += gp[i] * xh[i];
                    }
                }
                gamma->grad.v[c] += static_cast<T>(sum_gx);
                beta->grad.v[c] += static_cast<T>(sum_g);
                const double ga = gamma->val.v[c];
                const double istd = (*inv_std)[c];
                const double inv_m = 1.0 / static_cast<double>(m);
                for (int b = 0; b < g.n; ++b) {
                    const T* gp = &g.at(b, c, 0, 0);
                    const T* xh = &xhat->at(b, c, 0, 0);
                    T* dx = &x->grad.at(b, c, 0, 0);
                    for (size_t i = 0; i < plane; ++i) {
                        const double dxhat = gp[i] * ga;
                        dx[i] += static_cast<T>(
                            istd * (dxhat - inv_m * sum_g * ga - xh[i] * inv_m * sum_gx * ga));
                    }
                }
            }
        };
        return o;
    }

    // eval: per-channel affine using running statistics
    auto scale = std::make_shared<std::vector<T>>(C);
    for (int c = 0; c < C; ++c) {
        const double istd = 1.0 / std::sqrt(static_cast<double>(running_var.v[c]) + eps);
        (*scale)[c] = static_cast<T>(istd);
        const T g = gamma->val.v[c], bb = beta->val.v[c];
        const T mu = running_mean.v[c];
        for (int b = 0; b < xv.n; ++b) {
            const T* p = &xv.at(b, c, 0, 0);
            T* op = &out.at(b, c, 0, 0);
            for (size_t i = 0; i < plane; ++i)
                op[i] = g * static_cast<T>((p[i] - mu) * (*scale)[c]) + bb;
        }
    }
    auto rm = std::make_shared<Tensor4<T>>(running_mean);
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    o->back = [self, x, gamma, beta, scale, rm, plane]() {
        const auto& g = self->grad;
        for (int c = 0; c < g.c; ++c) {
            const T ga = gamma->val.v[c];
            const T istd = (*scale)[c];
            const T mu = rm->v[c];
            double sum_g = 0, sum_gx = 0;
            for (int b = 0; b < g.n; ++b) {
                const T* gp = &g.at(b, c, 0, 0);
                const T* xp = &x->val.at(b, c, 0, 0);
                T* dx = &x->grad.at(b, c, 0, 0);
                for (size_t i = 0; i < plane; ++i) {
                    sum_g += gp[i];
                    sum_gx += gp[i] * (xp[i] - mu) * istd;
                    dx[i] += gp[i] * ga * istd;
                }
            }
            gamma->grad.v[c] += static_cast<T>(sum_gx);
            beta->grad.v[c] += static_cast<T>(sum_g);
        }
    };
    return o;
}

// Soft Dice Loss over a batch: per sample 1 - 2*sum(y*p)/(sum(y^2)+sum(p^2)+eps),
// mean-reduced. target is treated as a constant.
template <class T>
Var<T> soft_dice_loss_batch(Tape<T>& tape, const Var<T>& pred, const Var<T>& target, double eps) {
    const auto& pv = pred->val;
    const auto& tv = target->val;
    if (!pv.same_shape(tv))
        throw ShapeError("soft_dice_loss: " + pv.shape_str() + " vs " + tv.shape_str());
    const size_t per = static_cast<size_t>(pv.c) * pv.h * pv.w;
    auto inter = std::make_shared<std::vector<double>>(pv.n);
    auto den = std::make_shared<std::vector<double>>(pv.n);
    double loss = 0;
    for (int b = 0; b < pv.n; ++b) {
        const T* p = &pv.v[b * per];
        const T* t = &tv.v[b * per];
        double i2 = 0, ps = 0, ts = 0;
        for (size_t i = 0; i < per; ++i) {
            i2 += static_cast<double>(p[i]) * t[i];
            ps += static_cast<double>(p[i]) * p[i];
            ts += static_cast<double>(t[i]) * t[i];
        }
        (*inter)[b] = i2;
        (*den)[b] = ts + ps + eps;
        loss += 1.0 - 2.0 * i2 / (*den)[b];
    }
    loss /= pv.n;
    Tensor4<T> out(1, 1, 1, 1);
    out.v[0] = static_cast<T>(loss);
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    o->back = [self, pred, target, inter, den, per]() {
        const double g = self->grad.v[0] / pred->val.n;
        for (int b = 0; b < pred->val.n; ++b) {
            const T* p = &pred->val.v[b * per];
            const T* t = &target->val.v[b * per];
            T* dp = &pred->grad.v[b * per];
            const double d = (*den)[b];
            const double i2 = (*inter)[b];
            for (size_t i = 0; i < per; ++i)
                dp[i] += static_cast<T>(g * (4.0 * i2 * p[i] - 2.0 * t[i] * d) / (d * d));
        }
    };
    return o;
}

// sum(x * weights); the cotangent hook used by operation-level gradient checks.
template <class T>
Var<T> weighted_sum(Tape<T>& tape, const Var<T>& x, const Tensor4<T>& weights) {
    if (!x->val.same_shape(weights))
        throw ShapeError("weighted_sum: shape mismatch");
    double acc = 0;
    for (size_t i = 0; i < x->val.size(); ++i) acc += static_cast<double>(x->val.v[i]) * weights.v[i];
    Tensor4<T> out(1, 1, 1, 1);
    out.v[0] = static_cast<T>(acc);
    auto o = tape.make(std::move(out));
    Node<T>* self = o.get();
    auto wcopy = std::make_shared<Tensor4<T>>(weights);
    o->back = [self, x, wcopy]() {
        for (size_t i = 0; i < x->val.size(); ++i)
            x->grad.v[i] += self->grad.v[0] * wcopy->v[i];
    };
    return o;
}

} // namespace segbench::nn
