#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pansharp/box_filter.hpp"
#include "pansharp/gemm.hpp"
#include "pansharp/log.hpp"
#include "pansharp/resample.hpp"
#include "pansharp/types.hpp"

namespace pansharp::ad {

// Reverse-mode automatic differentiation over dense NCHW tensors. A Graph
// owns its nodes in creation order, which is already topological; forward()
// re-evaluates every node from the current leaf contents, so a built graph
// can be driven repeatedly with fresh inputs and parameter values. backward()
// visits nodes in reverse creation order exactly once. The scalar type is
// float for training and double for finite-difference checking.

template <typename T>
struct Tensor {
    int n = 1, c = 1, h = 1, w = 1;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_) { resize(n_, c_, h_, w_); }

    void resize(int n_, int c_, int h_, int w_) {
        n = n_;
        c = c_;
        h = h_;
        w = w_;
        v.assign(size(), T(0));
    }
    std::size_t size() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    std::string shape_str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
               std::to_string(w);
    }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
};

// Named trainable tensor with Adam state (zero-initialized).
template <typename T>
struct Param {
    std::string name;
    std::vector<int> dims;
    std::vector<T> value, m1, m2;
    bool trainable = true;

    std::size_t size() const { return value.size(); }
};

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool grad_set = false;
    std::function<void()> fwd;  // empty for leaves
    std::function<void()> bwd;
    const char* op = "leaf";
    T* external = nullptr;  // Param backing storage refreshed on forward()
    std::size_t index = 0;
};

template <typename T>
struct Var {
    Node<T>* node = nullptr;

    explicit operator bool() const { return node != nullptr; }
    Tensor<T>& value() const { return node->value; }
    Tensor<T>& grad() const { return node->grad; }
    int n() const { return node->value.n; }
    int c() const { return node->value.c; }
    int h() const { return node->value.h; }
    int w() const { return node->value.w; }
};

namespace detail {

// col has (ci*kh*kw) rows and (oh*ow) columns.
template <typename T>
void im2col(const T* x, int ci, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow,
            T* col) {
    const std::size_t cols = static_cast<std::size_t>(oh) * ow;
    T* out = col;
    for (int c = 0; c < ci; ++c) {
        const T* xc = x + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx, out += cols)
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    T* dst = out + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, T(0));
                        continue;
                    }
                    const T* src = xc + static_cast<std::size_t>(iy) * w;
                    if (stride == 1) {
                        const int lo = std::max(0, pad - kx);
                        const int hi = std::min(ow - 1, w - 1 - kx + pad);
                        if (lo > 0) std::fill(dst, dst + lo, T(0));
                        if (hi >= lo) std::copy(src + lo + kx - pad, src + hi + kx - pad + 1, dst + lo);
                        if (hi + 1 < ow) std::fill(dst + hi + 1, dst + ow, T(0));
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + kx - pad;
                            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                        }
                    }
                }
    }
}

template <typename T>
void col2im_add(const T* col, int ci, int h, int w, int kh, int kw, int stride, int pad, int oh,
                int ow, T* x) {
    const std::size_t cols = static_cast<std::size_t>(oh) * ow;
    const T* in = col;
    for (int c = 0; c < ci; ++c) {
        T* xc = x + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx, in += cols)
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = xc + static_cast<std::size_t>(iy) * w;
                    const T* src = in + static_cast<std::size_t>(oy) * ow;
                    if (stride == 1) {
                        const int lo = std::max(0, pad - kx);
                        const int hi = std::min(ow - 1, w - 1 - kx + pad);
                        for (int i = lo; i <= hi; ++i) dst[i + kx - pad] += src[i];
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + kx - pad;
                            if (ix >= 0 && ix < w) dst[ix] += src[ox];
                        }
                    }
                }
    }
}

}  // namespace detail

// Non-trainable batch-norm state (running statistics).
template <typename T>
struct BnState {
    std::vector<T> running_mean, running_var;
    double momentum = 0.1;
    bool seen = false;
    bool warned = false;

    explicit BnState(int channels = 0) { reset(channels); }
    void reset(int channels) {
        running_mean.assign(static_cast<std::size_t>(channels), T(0));
        running_var.assign(static_cast<std::size_t>(channels), T(1));
        seen = false;
        warned = false;
    }
};

template <typename T>
class Graph {
public:
    explicit Graph(bool training = true) : training_(training) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool training() const { return training_; }
    std::size_t node_count() const { return nodes_.size(); }

    // ---- leaves ----

    Var<T> input(int n, int c, int h, int w) {
        Node<T>* nd = make(n, c, h, w, "input");
        return {nd};
    }

    // One leaf per Param per graph: repeated bindings return the same node,
    // so gradients from every use accumulate in one place.
    Var<T> param(Param<T>& p) {
        auto cached = param_cache_.find(&p);
        if (cached != param_cache_.end()) return {cached->second};
        int n = 1, c = 1, h = 1, w = 1;
        if (p.dims.size() == 1) {
            c = p.dims[0];
        } else if (p.dims.size() == 4) {
            n = p.dims[0];
            c = p.dims[1];
            h = p.dims[2];
            w = p.dims[3];
        } else {
            throw ShapeError("param node supports rank-1 or rank-4 params: " + p.name);
        }
        Node<T>* nd = make(n, c, h, w, "param");
        nd->external = p.value.data();
        if (p.value.size() != nd->value.size())
            throw ShapeError("param size mismatch: " + p.name);
        Node<T>* raw = nd;
        nd->fwd = [raw] { std::copy_n(raw->external, raw->value.size(), raw->value.data()); };
        nd->fwd();
        bindings_.push_back({&p, nd});
        param_cache_[&p] = nd;
        return {nd};
    }

    struct ParamBinding {
        Param<T>* param;
        Node<T>* node;
    };
    const std::vector<ParamBinding>& bindings() const { return bindings_; }

    // ---- execution ----

    void forward() { forward_range(0, nodes_.size()); }

    void forward_range(std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end && i < nodes_.size(); ++i)
            if (nodes_[i]->fwd) nodes_[i]->fwd();
    }

    void backward(Var<T> loss) {
        if (!training_) throw ValueError("backward() on an inference graph");
        if (loss.value().size() != 1) throw ShapeError("backward() needs a scalar loss");
        for (auto& nd : nodes_) nd->grad_set = false;
        loss.node->grad.v[0] = T(1);
        loss.node->grad_set = true;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node<T>* nd = nodes_[i].get();
            if (nd->grad_set && nd->bwd) nd->bwd();
        }
    }

    // ---- elementwise and structural ops ----

    Var<T> relu(Var<T> x) {
        Node<T>* nd = make_like(x, "relu");
        Node<T>* xn = x.node;
        nd->fwd = [nd, xn] {
            const T* xv = xn->value.data();
            T* y = nd->value.data();
            for (std::size_t i = 0, n = nd->value.size(); i < n; ++i)
                y[i] = xv[i] > T(0) ? xv[i] : T(0);
        };
        if (training_)
            nd->bwd = [this, nd, xn] {
                const T* xv = xn->value.data();
                const T* dy = nd->grad.data();
                contribute(xn, [&](std::size_t i) { return xv[i] > T(0) ? dy[i] : T(0); });
            };
        return {nd};
    }

    Var<T> leaky_relu(Var<T> x, T slope) {
        Node<T>* nd = make_like(x, "leaky_relu");
        Node<T>* xn = x.node;
        nd->fwd = [nd, xn, slope] {
            const T* xv = xn->value.data();
            T* y = nd->value.data();
            for (std::size_t i = 0, n = nd->value.size(); i < n; ++i)
                y[i] = xv[i] > T(0) ? xv[i] : slope * xv[i];
        };
        if (training_)
            nd->bwd = [this, nd, xn, slope] {
                const T* xv = xn->value.data();
                const T* dy = nd->grad.data();
                contribute(xn, [&](std::size_t i) { return xv[i] > T(0) ? dy[i] : slope * dy[i]; });
            };
        return {nd};
    }

    Var<T> sigmoid(Var<T> x) {
        Node<T>* nd = make_like(x, "sigmoid");
        Node<T>* xn = x.node;
        nd->fwd = [nd, xn] {
            const T* xv = xn->value.data();
            T* y = nd->value.data();
            for (std::size_t i = 0, n = nd->value.size(); i < n; ++i)
                y[i] = T(1) / (T(1) + std::exp(-xv[i]));
        };
        if (training_)
            nd->bwd = [this, nd, xn] {
                const T* y = nd->value.data();
                const T* dy = nd->grad.data();
                contribute(xn, [&](std::size_t i) { return y[i] * (T(1) - y[i]) * dy[i]; });
            };
        return {nd};
    }

    Var<T> add(Var<T> a, Var<T> b) {
        require_same(a, b, "add");
        Node<T>* nd = make_like(a, "add");
        Node<T>* an = a.node;
        Node<T>* bn = b.node;
        nd->fwd = [nd, an, bn] {
            const T* av = an->value.data();
            const T* bv = bn->value.data();
            T* y = nd->value.data();
            for (std::size_t i = 0, n = nd->value.size(); i < n; ++i) y[i] = av[i] + bv[i];
        };
        if (training_)
            nd->bwd = [this, nd, an, bn] {
                const T* dy = nd->grad.data();
                contribute(an, [&](std::size_t i) { return dy[i]; });
                contribute(bn, [&](std::size_t i) { return dy[i]; });
            };
        return {nd};
    }

    Var<T> sub(Var<T> a, Var<T> b) {
        require_same(a, b, "sub");
        Node<T>* nd = make_like(a, "sub");
        Node<T>* an = a.node;
        Node<T>* bn = b.node;
        nd->fwd = [nd, an, bn] {
            const T* av = an->value.data();
            const T* bv = bn->value.data();
            T* y = nd->value.data();
            for (std::size_t i = 0, n = nd->value.size(); i < n; ++i) y[i] = av[i] - bv[i];
        };
        if (training_)
            nd->bwd = [this, nd, an, bn] {
                const T* dy = nd->grad.data();
                contribute(an, [&](std::size_t i) { return dy[i]; });
                contribute(bn, [&](std::size_t i) { return -dy[i]; });
            };
        return {nd};
    }

    Var<T> mul(Var<T> a, Var<T> b) {
        require_same(a, b, "mul");
        Node<T>* nd = make_like(a, "mul");
        Node<T>* an = a.node;
        Node<T>* bn = b.node;
        nd->fwd = [nd, an, bn] {
            const T* av = an->value.data();
            const T* bv = bn->value.data();
            T* y = nd->value.data();
            for (std::size_t i = 0, n = nd->value.size(); i < n; ++i) y[i] = av[i] * bv[i];
        };
        if (training_)
            nd->bwd = [this, nd, an, bn] {
                const T* dy = nd->grad.data();
                const T* av = an->value.data();
                const T* bv = bn->value.data();
                contribute(an, [&](std::size_t i) { return bv[i] * dy[i]; });
                contribute(bn, [&](std::size_t i) { return av[i] * dy[i]; });
            };
        return {nd};
    }

    // x / (y + eps)
    Var<T> div_guarded(Var<T> x, Var<T> y, T eps) {
        require_same(x, y, "div_guarded");
        Node<T>* nd = make_like(x, "div_guarded");
        Node<T>* xn = x.node;
        Node<T>* yn = y.node;
        nd->fwd = [nd, xn, yn, eps] {
            const T* xv = xn->value.data();
            const T* yv = yn->value.data();
            T* out = nd->value.data();
            for (std::size_t i = 0, n = nd->value.size(); i < n; ++i) out[i] = xv[i] / (yv[i] + eps);
        };
        if (training_)
            nd->bwd = [this, nd, xn, yn, eps] {
                const T* dy = nd->grad.data();
                const T* yv = yn->value.data();
                const T* q = nd->value.data();
                contribute(xn, [&](std::size_t i) { return dy[i] / (yv[i] + eps); });
                contribute(yn, [&](std::size_t i) { return -q[i] / (yv[i] + eps) * dy[i]; });
            };
        return {nd};
    }

    // k*x + c with scalar constants
    Var<T> scale_add(Var<T> x, T k, T c) {
        Node<T>* nd = make_like(x, "scale_add");
        Node<T>* xn = x.node;
        nd->fwd = [nd, xn, k, c] {
            const T* xv = xn->value.data();
            T* y = nd->value.data();
            for (std::size_t i = 0, n = nd->value.size(); i < n; ++i) y[i] = k * xv[i] + c;
        };
        if (training_)
            nd->bwd = [this, nd, xn, k] {
                const T* dy = nd->grad.data();
                contribute(xn, [&](std::size_t i) { return k * dy[i]; });
            };
        return {nd};
    }

    // x - s, with s a 1-element node broadcast over x
    Var<T> sub_bscalar(Var<T> x, Var<T> s) {
        if (s.value().size() != 1) throw ShapeError("sub_bscalar: s must be scalar");
        Node<T>* nd = make_like(x, "sub_bscalar");
        Node<T>* xn = x.node;
        Node<T>* sn = s.node;
        nd->fwd = [nd, xn, sn] {
            const T sv = sn->value.v[0];
            const T* xv = xn->value.data();
            T* y = nd->value.data();
            for (std::size_t i = 0, n = nd->value.size(); i < n; ++i) y[i] = xv[i] - sv;
        };
        if (training_)
            nd->bwd = [this, nd, xn, sn] {
                const T* dy = nd->grad.data();
                contribute(xn, [&](std::size_t i) { return dy[i]; });
                double acc = 0;
                for (std::size_t i = 0, n = nd->grad.size(); i < n; ++i) acc += dy[i];
                const T total = static_cast<T>(-acc);
                contribute(sn, [&](std::size_t) { return total; });
            };
        return {nd};
    }

    Var<T> abs(Var<T> x) {
        Node<T>* nd = make_like(x, "abs");
        Node<T>* xn = x.node;
        nd->fwd = [nd, xn] {
            const T* xv = xn->value.data();
            T* y = nd->value.data();
            for (std::size_t i = 0, n = nd->value.size(); i < n; ++i) y[i] = std::abs(xv[i]);
        };
        if (training_)
            nd->bwd = [this, nd, xn] {
                const T* xv = xn->value.data();
                const T* dy = nd->grad.data();
                contribute(xn, [&](std::size_t i) {
                    return xv[i] > T(0) ? dy[i] : (xv[i] < T(0) ? -dy[i] : T(0));
                });
            };
        return {nd};
    }

    Var<T> square(Var<T> x) {
        Node<T>* nd = make_like(x, "square");
        Node<T>* xn = x.node;
        nd->fwd = [nd, xn] {
            const T* xv = xn->value.data();
            T* y = nd->value.data();
            for (std::size_t i = 0, n = nd->value.size(); i < n; ++i) y[i] = xv[i] * xv[i];
        };
        if (training_)
            nd->bwd = [this, nd, xn] {
                const T* xv = xn->value.data();
                const T* dy = nd->grad.data();
                contribute(xn, [&](std::size_t i) { return T(2) * xv[i] * dy[i]; });
            };
        return {nd};
    }

    Var<T> mean_all(Var<T> x) {
        Node<T>* nd = make(1, 1, 1, 1, "mean_all");
        Node<T>* xn = x.node;
        const T inv = T(1) / static_cast<T>(x.value().size());
        nd->fwd = [nd, xn, inv] {
            const T* xv = xn->value.data();
            double acc = 0;
            for (std::size_t i = 0, n = xn->value.size(); i < n; ++i) acc += xv[i];
            nd->value.v[0] = static_cast<T>(acc) * inv;
        };
        if (training_)
            nd->bwd = [this, nd, xn, inv] {
                const T g = nd->grad.v[0] * inv;
                contribute(xn, [&](std::size_t) { return g; });
            };
        return {nd};
    }

    Var<T> concat_channels(const std::vector<Var<T>>& parts) {
        if (parts.empty()) throw ShapeError("concat_channels: empty list");
        int ctotal = 0;
        for (const auto& p : parts) {
            if (p.n() != parts[0].n() || p.h() != parts[0].h() || p.w() != parts[0].w())
                throw ShapeError("concat_channels: mismatched shapes");
            ctotal += p.c();
        }
        Node<T>* nd = make(parts[0].n(), ctotal, parts[0].h(), parts[0].w(), "concat");
        std::vector<Node<T>*> src;
        for (const auto& p : parts) src.push_back(p.node);
        nd->fwd = [nd, src] {
            const std::size_t plane = nd->value.plane();
            for (int n = 0; n < nd->value.n; ++n) {
                T* base = nd->value.data() + static_cast<std::size_t>(n) * nd->value.c * plane;
                std::size_t off = 0;
                for (Node<T>* s : src) {
                    const std::size_t sz = static_cast<std::size_t>(s->value.c) * plane;
                    std::copy_n(s->value.data() + static_cast<std::size_t>(n) * sz, sz, base + off);
                    off += sz;
                }
            }
        };
        if (training_)
            nd->bwd = [this, nd, src] {
                const std::size_t plane = nd->value.plane();
                std::size_t off = 0;
                for (Node<T>* s : src) {
                    const std::size_t sz = static_cast<std::size_t>(s->value.c) * plane;
                    const int batch = nd->value.n;
                    const std::size_t stride = static_cast<std::size_t>(nd->value.c) * plane;
                    contribute(s, [&](std::size_t i) {
                        const std::size_t n = i / sz, rem = i % sz;
                        return nd->grad.v[n * stride + off + rem];
                    });
                    (void)batch;
                    off += sz;
                }
            };
        return {nd};
    }

    Var<T> expand_channels(Var<T> x, int channels) {
        if (x.c() != 1) throw ShapeError("expand_channels: input must have 1 channel");
        Node<T>* nd = make(x.n(), channels, x.h(), x.w(), "expand_channels");
        Node<T>* xn = x.node;
        nd->fwd = [nd, xn] {
            const std::size_t plane = nd->value.plane();
            for (int n = 0; n < nd->value.n; ++n) {
                const T* src = xn->value.data() + static_cast<std::size_t>(n) * plane;
                for (int c = 0; c < nd->value.c; ++c)
                    std::copy_n(src, plane,
                                nd->value.data() +
                                    (static_cast<std::size_t>(n) * nd->value.c + c) * plane);
            }
        };
        if (training_)
            nd->bwd = [this, nd, xn] {
                const std::size_t plane = nd->value.plane();
                const int channels = nd->value.c;
                contribute(xn, [&](std::size_t i) {
                    const std::size_t n = i / plane, rem = i % plane;
                    double acc = 0;
                    const T* g = nd->grad.data() + static_cast<std::size_t>(n) * channels * plane;
                    for (int c = 0; c < channels; ++c) acc += g[c * plane + rem];
                    return static_cast<T>(acc);
                });
            };
        return {nd};
    }

    Var<T> channel_avg(Var<T> x) {
        Node<T>* nd = make(x.n(), 1, x.h(), x.w(), "channel_avg");
        Node<T>* xn = x.node;
        nd->fwd = [nd, xn] {
            const std::size_t plane = nd->value.plane();
            const int channels = xn->value.c;
            const T inv = T(1) / static_cast<T>(channels);
            for (int n = 0; n < nd->value.n; ++n) {
                const T* src = xn->value.data() + static_cast<std::size_t>(n) * channels * plane;
                T* dst = nd->value.data() + static_cast<std::size_t>(n) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    double acc = 0;
                    for (int c = 0; c < channels; ++c) acc += src[c * plane + i];
                    dst[i] = static_cast<T>(acc) * inv;
                }
            }
        };
        if (training_)
            nd->bwd = [this, nd, xn] {
                const std::size_t plane = nd->value.plane();
                const int channels = xn->value.c;
                const T inv = T(1) / static_cast<T>(channels);
                contribute(xn, [&](std::size_t i) {
                    const std::size_t n = i / (channels * plane);
                    const std::size_t rem = i % plane;
                    return nd->grad.v[n * plane + rem] * inv;
                });
            };
        return {nd};
    }

    // Max over channels; gradient routes to the first max index on ties.
    Var<T> channel_max(Var<T> x) {
        Node<T>* nd = make(x.n(), 1, x.h(), x.w(), "channel_max");
        Node<T>* xn = x.node;
        auto argmax = std::make_shared<std::vector<int>>(nd->value.size());
        nd->fwd = [nd, xn, argmax] {
            const std::size_t plane = nd->value.plane();
            const int channels = xn->value.c;
            for (int n = 0; n < nd->value.n; ++n) {
                const T* src = xn->value.data() + static_cast<std::size_t>(n) * channels * plane;
                T* dst = nd->value.data() + static_cast<std::size_t>(n) * plane;
                int* am = argmax->data() + static_cast<std::size_t>(n) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    T best = src[i];
                    int bc = 0;
                    for (int c = 1; c < channels; ++c)
                        if (src[c * plane + i] > best) {
                            best = src[c * plane + i];
                            bc = c;
                        }
                    dst[i] = best;
                    am[i] = bc;
                }
            }
        };
        if (training_)
            nd->bwd = [this, nd, xn, argmax] {
                const std::size_t plane = nd->value.plane();
                const int channels = xn->value.c;
                ensure_zero(xn);
                T* g = xn->grad.data();
                const T* dy = nd->grad.data();
                for (int n = 0; n < nd->value.n; ++n)
                    for (std::size_t i = 0; i < plane; ++i) {
                        const std::size_t oi = static_cast<std::size_t>(n) * plane + i;
                        g[(static_cast<std::size_t>(n) * channels + (*argmax)[oi]) * plane + i] +=
                            dy[oi];
                    }
            };
        return {nd};
    }

    // x (N,C,H,W) scaled per pixel by a 1-channel map m (N,1,H,W).
    Var<T> scale_channels(Var<T> x, Var<T> m) {
        if (m.c() != 1 || m.n() != x.n() || m.h() != x.h() || m.w() != x.w())
            throw ShapeError("scale_channels: map must be (N,1,H,W) matching x");
        Node<T>* nd = make_like(x, "scale_channels");
        Node<T>* xn = x.node;
        Node<T>* mn = m.node;
        nd->fwd = [nd, xn, mn] {
            const std::size_t plane = nd->value.plane();
            const int channels = nd->value.c;
            for (int n = 0; n < nd->value.n; ++n) {
                const T* mv = mn->value.data() + static_cast<std::size_t>(n) * plane;
                for (int c = 0; c < channels; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
                    const T* xv = xn->value.data() + off;
                    T* y = nd->value.data() + off;
                    for (std::size_t i = 0; i < plane; ++i) y[i] = xv[i] * mv[i];
                }
            }
        };
        if (training_)
            nd->bwd = [this, nd, xn, mn] {
                const std::size_t plane = nd->value.plane();
                const int channels = nd->value.c;
                contribute(xn, [&](std::size_t i) {
                    const std::size_t n = i / (channels * plane);
                    const std::size_t rem = i % plane;
                    return nd->grad.v[i] * mn->value.v[n * plane + rem];
                });
                contribute(mn, [&](std::size_t i) {
                    const std::size_t n = i / plane;
                    const std::size_t rem = i % plane;
                    double acc = 0;
                    const std::size_t base = n * channels * plane;
                    for (int c = 0; c < channels; ++c) {
                        const std::size_t j = base + c * plane + rem;
                        acc += static_cast<double>(nd->grad.v[j]) * xn->value.v[j];
                    }
                    return static_cast<T>(acc);
                });
            };
        return {nd};
    }

    // Normalized box filter with shrinking windows; the adjoint is the box
    // sum of the count-normalized upstream gradient.
    Var<T> box(Var<T> x, int r) {
        if (r < 0) throw ShapeError("box: radius must be >= 0");
        Node<T>* nd = make_like(x, "box");
        Node<T>* xn = x.node;
        const int h = x.h(), w = x.w();
        auto counts = std::make_shared<std::vector<T>>(static_cast<std::size_t>(h) * w);
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                (*counts)[static_cast<std::size_t>(y) * w + xx] = static_cast<T>(
                    pansharp::detail::axis_count(y, h, r) * pansharp::detail::axis_count(xx, w, r));
        nd->fwd = [this, nd, xn, r, h, w] {
            double* col = dscratch(static_cast<std::size_t>(w));
            const std::size_t plane = nd->value.plane();
            const int planes = nd->value.n * nd->value.c;
            for (int p = 0; p < planes; ++p)
                box_mean_plane(xn->value.data() + p * plane, h, w, r,
                               nd->value.data() + p * plane, col);
        };
        if (training_)
            nd->bwd = [this, nd, xn, r, h, w, counts] {
                const std::size_t plane = nd->value.plane();
                const int planes = nd->value.n * nd->value.c;
                T* tmp = scratch(2 * plane);
                T* summed = tmp + plane;
                double* col = dscratch(static_cast<std::size_t>(w));
                ensure_zero(xn);
                for (int p = 0; p < planes; ++p) {
                    const T* dy = nd->grad.data() + p * plane;
                    const T* cnt = counts->data();
                    for (std::size_t i = 0; i < plane; ++i) tmp[i] = dy[i] / cnt[i];
                    box_sum_plane(tmp, h, w, r, summed, col);
                    T* g = xn->grad.data() + p * plane;
                    for (std::size_t i = 0; i < plane; ++i) g[i] += summed[i];
                }
            };
        return {nd};
    }

    Var<T> bilinear_resize(Var<T> x, int oh, int ow) { return resize_node(x, oh, ow, false); }
    Var<T> bicubic_resize(Var<T> x, int oh, int ow) { return resize_node(x, oh, ow, true); }

    // Cross-correlation with zero padding and bias; spatial output dims are
    // floor((in + 2*pad - k) / stride) + 1. Lowered to GEMM via im2col.
    Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
        const int co = w.value().n, ci = w.value().c, kh = w.value().h, kw = w.value().w;
        if (x.c() != ci)
            throw ShapeError("conv2d: input has " + std::to_string(x.c()) + " channels, kernel expects " +
                             std::to_string(ci));
        if (b.value().size() != static_cast<std::size_t>(co))
            throw ShapeError("conv2d: bias size mismatch");
        if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
        const int oh = (x.h() + 2 * pad - kh) / stride + 1;
        const int ow = (x.w() + 2 * pad - kw) / stride + 1;
        if (oh < 1 || ow < 1) throw ShapeError("conv2d: empty output");
        Node<T>* nd = make(x.n(), co, oh, ow, "conv2d");
        Node<T>* xn = x.node;
        Node<T>* wn = w.node;
        Node<T>* bn = b.node;
        const int K = ci * kh * kw;
        const std::size_t P = static_cast<std::size_t>(oh) * ow;
        nd->fwd = [this, nd, xn, wn, bn, stride, pad, K, P, co, ci, kh, kw, oh, ow] {
            T* col = scratch(static_cast<std::size_t>(K) * P);
            const std::size_t in_sz = xn->value.size() / xn->value.n;
            const std::size_t out_sz = static_cast<std::size_t>(co) * P;
            for (int n = 0; n < xn->value.n; ++n) {
                detail::im2col(xn->value.data() + n * in_sz, ci, xn->value.h, xn->value.w, kh, kw,
                               stride, pad, oh, ow, col);
                gemm(false, false, co, static_cast<int>(P), K, T(1), wn->value.data(), K, col,
                     static_cast<int>(P), T(0), nd->value.data() + n * out_sz, static_cast<int>(P));
                T* y = nd->value.data() + n * out_sz;
                for (int c = 0; c < co; ++c) {
                    const T bias = bn->value.v[c];
                    T* row = y + static_cast<std::size_t>(c) * P;
                    for (std::size_t i = 0; i < P; ++i) row[i] += bias;
                }
            }
        };
        if (training_)
            nd->bwd = [this, nd, xn, wn, bn, stride, pad, K, P, co, ci, kh, kw, oh, ow] {
                const std::size_t in_sz = xn->value.size() / xn->value.n;
                const std::size_t out_sz = static_cast<std::size_t>(co) * P;
                const int batch = xn->value.n;
                // bias
                {
                    std::vector<double> sums(static_cast<std::size_t>(co), 0.0);
                    for (int n = 0; n < batch; ++n) {
                        const T* dy = nd->grad.data() + n * out_sz;
                        for (int c = 0; c < co; ++c) {
                            double acc = 0;
                            const T* row = dy + static_cast<std::size_t>(c) * P;
                            for (std::size_t i = 0; i < P; ++i) acc += row[i];
                            sums[c] += acc;
                        }
                    }
                    contribute(bn, [&](std::size_t i) { return static_cast<T>(sums[i]); });
                }
                // weights: dW += dY_n * col_n^T
                {
                    T* col = scratch(static_cast<std::size_t>(K) * P);
                    T first_beta = wn->grad_set ? T(1) : T(0);
                    for (int n = 0; n < batch; ++n) {
                        detail::im2col(xn->value.data() + n * in_sz, ci, xn->value.h, xn->value.w,
                                       kh, kw, stride, pad, oh, ow, col);
                        gemm(false, true, co, K, static_cast<int>(P), T(1),
                             nd->grad.data() + n * out_sz, static_cast<int>(P), col,
                             static_cast<int>(P), n == 0 ? first_beta : T(1), wn->grad.data(), K);
                    }
                    wn->grad_set = true;
                }
                // input: col-grad = W^T * dY_n, scattered back
                {
                    T* colg = scratch(static_cast<std::size_t>(K) * P);
                    ensure_zero(xn);
                    for (int n = 0; n < batch; ++n) {
                        gemm(true, false, K, static_cast<int>(P), co, T(1), wn->value.data(), K,
                             nd->grad.data() + n * out_sz, static_cast<int>(P), T(0), colg,
                             static_cast<int>(P));
                        detail::col2im_add(colg, ci, xn->value.h, xn->value.w, kh, kw, stride, pad,
                                           oh, ow, xn->grad.data() + n * in_sz);
                    }
                }
            };
        return {nd};
    }

    // Batch normalization over (batch, spatial) per channel. Train mode uses
    // batch statistics (variance epsilon 1e-5) and updates running stats;
    // eval mode normalizes with the running stats.
    Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, BnState<T>* state, bool train_mode) {
        const int channels = x.c();
        if (static_cast<int>(gamma.value().size()) != channels ||
            static_cast<int>(beta.value().size()) != channels)
            throw ShapeError("batch_norm: gamma/beta size mismatch");
        if (static_cast<int>(state->running_mean.size()) != channels)
            throw ShapeError("batch_norm: state channel mismatch");
        Node<T>* nd = make_like(x, "batch_norm");
        Node<T>* xn = x.node;
        Node<T>* gn = gamma.node;
        Node<T>* bn = beta.node;
        auto saved_mean = std::make_shared<std::vector<double>>(channels);
        auto saved_invstd = std::make_shared<std::vector<double>>(channels);
        constexpr double bn_eps = 1e-5;
        nd->fwd = [nd, xn, gn, bn, state, train_mode, saved_mean, saved_invstd, channels] {
            const std::size_t plane = nd->value.plane();
            const int batch = nd->value.n;
            const std::size_t m = static_cast<std::size_t>(batch) * plane;
            for (int c = 0; c < channels; ++c) {
                double mean, var;
                if (train_mode) {
                    double s = 0, s2 = 0;
                    for (int n = 0; n < batch; ++n) {
                        const T* xv = xn->value.data() +
                                      (static_cast<std::size_t>(n) * channels + c) * plane;
                        for (std::size_t i = 0; i < plane; ++i) {
                            s += xv[i];
                            s2 += static_cast<double>(xv[i]) * xv[i];
                        }
                    }
                    mean = s / static_cast<double>(m);
                    var = s2 / static_cast<double>(m) - mean * mean;
                    if (var < 0) var = 0;
                    const double unbiased = m > 1 ? var * static_cast<double>(m) / (m - 1) : var;
                    state->running_mean[c] = static_cast<T>((1 - state->momentum) * state->running_mean[c] +
                                                            state->momentum * mean);
                    state->running_var[c] = static_cast<T>((1 - state->momentum) * state->running_var[c] +
                                                           state->momentum * unbiased);
                } else {
                    if (!state->seen && !state->warned) {
                        log_warn("batch_norm: eval before any train step, using init stats");
                        state->warned = true;
                    }
                    mean = state->running_mean[c];
                    var = state->running_var[c];
                }
                const double invstd = 1.0 / std::sqrt(var + bn_eps);
                (*saved_mean)[c] = mean;
                (*saved_invstd)[c] = invstd;
                const double g = gn->value.v[c], b = bn->value.v[c];
                for (int n = 0; n < batch; ++n) {
                    const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
                    const T* xv = xn->value.data() + off;
                    T* y = nd->value.data() + off;
                    for (std::size_t i = 0; i < plane; ++i)
                        y[i] = static_cast<T>(g * ((xv[i] - mean) * invstd) + b);
                }
            }
            if (train_mode) state->seen = true;
        };
        if (training_)
            nd->bwd = [this, nd, xn, gn, bn, train_mode, saved_mean, saved_invstd, channels] {
                const std::size_t plane = nd->value.plane();
                const int batch = nd->value.n;
                const double m = static_cast<double>(batch) * plane;
                std::vector<double> s1(channels, 0.0), s2(channels, 0.0);
                for (int c = 0; c < channels; ++c) {
                    const double mean = (*saved_mean)[c], invstd = (*saved_invstd)[c];
                    for (int n = 0; n < batch; ++n) {
                        const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
                        const T* dy = nd->grad.data() + off;
                        const T* xv = xn->value.data() + off;
                        for (std::size_t i = 0; i < plane; ++i) {
                            s1[c] += dy[i];
                            s2[c] += dy[i] * ((xv[i] - mean) * invstd);
                        }
                    }
                }
                contribute(gn, [&](std::size_t c) { return static_cast<T>(s2[c]); });
                contribute(bn, [&](std::size_t c) { return static_cast<T>(s1[c]); });
                ensure_zero(xn);
                for (int c = 0; c < channels; ++c) {
                    const double mean = (*saved_mean)[c], invstd = (*saved_invstd)[c];
                    const double g = gn->value.v[c];
                    for (int n = 0; n < batch; ++n) {
                        const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
                        const T* dy = nd->grad.data() + off;
                        const T* xv = xn->value.data() + off;
                        T* gx = xn->grad.data() + off;
                        if (train_mode) {
                            for (std::size_t i = 0; i < plane; ++i) {
                                const double xhat = (xv[i] - mean) * invstd;
                                gx[i] += static_cast<T>(g * invstd *
                                                        (dy[i] - s1[c] / m - xhat * s2[c] / m));
                            }
                        } else {
                            for (std::size_t i = 0; i < plane; ++i)
                                gx[i] += static_cast<T>(g * invstd * dy[i]);
                        }
                    }
                }
            };
        return {nd};
    }

private:
    Node<T>* make(int n, int c, int h, int w, const char* op) {
        auto nd = std::make_unique<Node<T>>();
        nd->value.resize(n, c, h, w);
        if (training_) nd->grad.resize(n, c, h, w);
        nd->op = op;
        nd->index = nodes_.size();
        nodes_.push_back(std::move(nd));
        return nodes_.back().get();
    }

    Node<T>* make_like(Var<T> x, const char* op) {
        return make(x.n(), x.c(), x.h(), x.w(), op);
    }

    static void require_same(Var<T> a, Var<T> b, const char* op) {
        if (!a.value().same_shape(b.value()))
            throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                             " vs " + b.value().shape_str());
    }

    // First contribution assigns, later ones accumulate.
    template <typename F>
    void contribute(Node<T>* p, F&& f) {
        T* g = p->grad.data();
        const std::size_t n = p->grad.size();
        if (!p->grad_set) {
            for (std::size_t i = 0; i < n; ++i) g[i] = f(i);
            p->grad_set = true;
        } else {
            for (std::size_t i = 0; i < n; ++i) g[i] += f(i);
        }
    }

    void ensure_zero(Node<T>* p) {
        if (!p->grad_set) {
            std::fill(p->grad.v.begin(), p->grad.v.end(), T(0));
            p->grad_set = true;
        }
    }

    T* scratch(std::size_t n) {
        if (scratch_.size() < n) scratch_.resize(n);
        return scratch_.data();
    }
    double* dscratch(std::size_t n) {
        if (dscratch_.size() < n) dscratch_.resize(n);
        return dscratch_.data();
    }

    Var<T> resize_node(Var<T> x, int oh, int ow, bool cubic) {
        if (oh < 1 || ow < 1) throw ShapeError("resize: output dims must be >= 1");
        Node<T>* nd = make(x.n(), x.c(), oh, ow, cubic ? "bicubic_resize" : "bilinear_resize");
        Node<T>* xn = x.node;
        const int h = x.h(), w = x.w();
        auto ytaps = std::make_shared<AxisTaps<T>>(cubic ? bicubic_axis_taps<T>(h, oh)
                                                         : bilinear_axis_taps<T>(h, oh));
        auto xtaps = std::make_shared<AxisTaps<T>>(cubic ? bicubic_axis_taps<T>(w, ow)
                                                         : bilinear_axis_taps<T>(w, ow));
        nd->fwd = [this, nd, xn, ytaps, xtaps, h, w, oh, ow] {
            T* tmp = scratch(static_cast<std::size_t>(oh) * w);
            const std::size_t in_plane = xn->value.plane();
            const std::size_t out_plane = nd->value.plane();
            const int planes = nd->value.n * nd->value.c;
            for (int p = 0; p < planes; ++p)
                resample_plane(xn->value.data() + p * in_plane, h, w,
                               nd->value.data() + p * out_plane, oh, ow, *ytaps, *xtaps, tmp);
        };
        if (training_)
            nd->bwd = [this, nd, xn, ytaps, xtaps, h, w, oh, ow] {
                T* tmp = scratch(static_cast<std::size_t>(oh) * w);
                const std::size_t in_plane = xn->value.plane();
                const std::size_t out_plane = nd->value.plane();
                const int planes = nd->value.n * nd->value.c;
                ensure_zero(xn);
                for (int p = 0; p < planes; ++p)
                    resample_plane_adjoint(nd->grad.data() + p * out_plane, oh, ow,
                                           xn->grad.data() + p * in_plane, h, w, *ytaps, *xtaps,
                                           tmp);
            };
        return {nd};
    }

    bool training_;
    std::vector<std::unique_ptr<Node<T>>> nodes_;
    std::vector<ParamBinding> bindings_;
    std::map<Param<T>*, Node<T>*> param_cache_;
    std::vector<T> scratch_;
    std::vector<double> dscratch_;
};

}  // namespace pansharp::ad
