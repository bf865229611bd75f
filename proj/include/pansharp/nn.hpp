#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pansharp/autodiff.hpp"
#include "pansharp/types.hpp"

namespace pansharp::ad {

// Parameter registry with deterministic, name-keyed initialization: conv
// kernels are uniform in +-sqrt(6/fan_in), biases zero, BN gamma 1 / beta 0.
// Keying the init stream by (seed, name) keeps shared layers identical
// across model variants built from the same seed.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t name_seed(std::uint64_t seed, const std::string& name) {
    std::uint64_t h = splitmix64(seed);
    for (unsigned char ch : name) h = splitmix64(h ^ ch);
    return h;
}

inline double u01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

template <typename T>
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    Param<T>& create(const std::string& name, std::vector<int> dims, bool trainable = true) {
        if (index_.count(name)) throw ValueError("duplicate parameter name: " + name);
        auto p = std::make_unique<Param<T>>();
        p->name = name;
        p->dims = std::move(dims);
        std::size_t total = 1;
        for (int d : p->dims) total *= static_cast<std::size_t>(d);
        p->value.assign(total, T(0));
        p->m1.assign(total, T(0));
        p->m2.assign(total, T(0));
        p->trainable = trainable;
        index_[name] = params_.size();
        params_.push_back(std::move(p));
        return *params_.back();
    }

    // Conv kernel (co, ci, kh, kw): uniform +-sqrt(6 / fan_in).
    Param<T>& create_conv_weight(const std::string& name, int co, int ci, int kh, int kw) {
        Param<T>& p = create(name, {co, ci, kh, kw});
        const double bound = std::sqrt(6.0 / (static_cast<double>(ci) * kh * kw));
        std::mt19937_64 rng(detail::name_seed(seed_, name));
        for (auto& v : p.value)
            v = static_cast<T>((2.0 * detail::u01(rng) - 1.0) * bound);
        return p;
    }

    Param<T>& create_bias(const std::string& name, int c) { return create(name, {c}); }

    Param<T>& create_bn_gamma(const std::string& name, int c) {
        Param<T>& p = create(name, {c});
        std::fill(p.value.begin(), p.value.end(), T(1));
        return p;
    }
    Param<T>& create_bn_beta(const std::string& name, int c) { return create(name, {c}); }

    Param<T>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : params_[it->second].get();
    }

    std::vector<Param<T>*> all() {
        std::vector<Param<T>*> out;
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }
    std::vector<const Param<T>*> all() const {
        std::vector<const Param<T>*> out;
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::vector<std::unique_ptr<Param<T>>> params_;
    std::map<std::string, std::size_t> index_;
};

// Total element count of trainable parameters.
template <typename T>
std::int64_t param_count(const ParamStore<T>& store) {
    std::int64_t total = 0;
    for (const Param<T>* p : store.all())
        if (p->trainable) total += static_cast<std::int64_t>(p->size());
    return total;
}

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update. Throws on non-finite gradients, naming the
// parameter and step.
template <typename T>
void adam_step(Param<T>& p, const T* grad, const AdamConfig& cfg, std::int64_t t) {
    if (t < 1) throw ValueError("adam_step: step index must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = grad[i];
        if (!std::isfinite(g))
            throw ValueError("non-finite gradient in parameter '" + p.name + "' at step " +
                             std::to_string(t));
        const double m = cfg.beta1 * p.m1[i] + (1.0 - cfg.beta1) * g;
        const double v = cfg.beta2 * p.m2[i] + (1.0 - cfg.beta2) * g * g;
        p.m1[i] = static_cast<T>(m);
        p.m2[i] = static_cast<T>(v);
        p.value[i] -= static_cast<T>(cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
    }
}

// Central finite differences against reverse-mode gradients on a scalar
// graph. Checks every element of the listed leaves, or a seeded subsample of
// at least `max_per_leaf` elements for large tensors. Relative error is
// |fd - ad| / max(|fd|, |ad|, 1e-8).
template <typename T>
double grad_check(Graph<T>& g, Var<T> loss, const std::vector<Var<T>>& leaves,
                  std::uint64_t seed = 0, std::size_t max_per_leaf = 200, double step = 1e-6) {
    g.forward();
    g.backward(loss);
    std::vector<std::vector<T>> ad_grads;
    for (const auto& leaf : leaves) ad_grads.push_back(leaf.grad().v);

    double max_rel = 0;
    std::mt19937_64 rng(detail::splitmix64(seed ^ 0xc0ffee));
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Node<T>* nd = leaves[li].node;
        const std::size_t n = nd->value.size();
        std::vector<std::size_t> picks;
        if (n <= max_per_leaf) {
            picks.resize(n);
            for (std::size_t i = 0; i < n; ++i) picks[i] = i;
        } else {
            for (std::size_t i = 0; i < max_per_leaf; ++i) picks.push_back(rng() % n);
        }
        T* store = nd->external ? nd->external : nd->value.data();
        for (std::size_t i : picks) {
            const T saved = store[i];
            store[i] = saved + static_cast<T>(step);
            g.forward();
            const double fp = loss.value().v[0];
            store[i] = saved - static_cast<T>(step);
            g.forward();
            const double fm = loss.value().v[0];
            store[i] = saved;
            const double fd = (fp - fm) / (2.0 * step);
            const double ad = ad_grads[li][i];
            const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-8});
            if (rel > max_rel) max_rel = rel;
        }
    }
    g.forward();  // leave the graph consistent
    return max_rel;
}

}  // namespace pansharp::ad
