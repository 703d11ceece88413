#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "evkd/params.hpp"
#include "evkd/tensor.hpp"

namespace evkd {

struct AdamWConfig {
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double max_grad_norm = 0.0; // 0 disables clipping
};

/// Scale all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
template <typename T>
double clip_grad_norm(ParamStore<T>& ps, double max_norm) {
    double sq = 0.0;
    for (auto& [name, p] : ps.items) {
        if (!p->requires_grad) continue;
        for (const T g : p->grad.v) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const T s = static_cast<T>(max_norm / norm);
        for (auto& [name, p] : ps.items) {
            if (!p->requires_grad) continue;
            for (T& g : p->grad.v) g *= s;
        }
    }
    return norm;
}

/// AdamW: adaptive moments with bias correction and decoupled weight decay
/// (the decay term is added to the update and scaled by the learning rate,
/// not mixed into the gradient moments).
template <typename T>
struct AdamW {
    AdamWConfig cfg;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::uint64_t t = 0;

    AdamW() = default;
    AdamW(const ParamStore<T>& ps, AdamWConfig config) : cfg(config) {
        m.reserve(ps.items.size());
        v.reserve(ps.items.size());
        for (const auto& [name, p] : ps.items) {
            m.push_back(Tensor<T>::zeros(p->value.shape));
            v.push_back(Tensor<T>::zeros(p->value.shape));
        }
    }

    void step(ParamStore<T>& ps) {
        if (ps.items.size() != m.size())
            throw ShapeMismatch("optimizer state does not match parameter store");
        ++t;
        if (cfg.max_grad_norm > 0.0) clip_grad_norm(ps, cfg.max_grad_norm);
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < ps.items.size(); ++i) {
            auto& p = ps.items[i].second;
            if (!p->requires_grad) continue;
            if (!p->grad.same_shape(p->value))
                throw ShapeMismatch("gradient missing for " + ps.items[i].first);
            Tensor<T>& mi = m[i];
            Tensor<T>& vi = v[i];
            for (std::size_t j = 0; j < p->value.v.size(); ++j) {
                const double g = static_cast<double>(p->grad.v[j]);
                const double mn = cfg.beta1 * static_cast<double>(mi.v[j]) +
                                  (1.0 - cfg.beta1) * g;
                const double vn = cfg.beta2 * static_cast<double>(vi.v[j]) +
                                  (1.0 - cfg.beta2) * g * g;
                mi.v[j] = static_cast<T>(mn);
                vi.v[j] = static_cast<T>(vn);
                const double mhat = mn / bc1;
                const double vhat = vn / bc2;
                const double w = static_cast<double>(p->value.v[j]);
                p->value.v[j] = static_cast<T>(
                    w - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                  cfg.weight_decay * w));
            }
        }
    }
};

} // namespace evkd
