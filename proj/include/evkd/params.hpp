#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "evkd/autodiff.hpp"
#include "evkd/rng.hpp"
#include "evkd/tensor.hpp"

namespace evkd {

/// Named trainable leaves in registration order. Registration order is the
/// iteration order everywhere (optimizer, checkpoints), which keeps training
/// deterministic.
template <typename T>
struct ParamStore {
    std::vector<std::pair<std::string, ad::Var<T>>> items;
    std::unordered_map<std::string, std::size_t> index;

    ad::Var<T>& add(const std::string& name, Tensor<T> init, bool requires_grad = true) {
        if (index.count(name))
            throw ConfigError("duplicate parameter name: " + name);
        index[name] = items.size();
        items.emplace_back(name, ad::leaf(std::move(init), requires_grad));
        return items.back().second;
    }

    bool has(const std::string& name) const { return index.count(name) != 0; }

    ad::Var<T>& get(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown parameter: " + name);
        return items[it->second].second;
    }
    const ad::Var<T>& get(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown parameter: " + name);
        return items[it->second].second;
    }

    void zero_grads() {
        for (auto& [name, p] : items)
            if (p->requires_grad) p->zero_grad();
    }
    void freeze() {
        for (auto& [name, p] : items) p->requires_grad = false;
    }
    void unfreeze() {
        for (auto& [name, p] : items) p->requires_grad = true;
    }
    void freeze(const std::string& name) { get(name)->requires_grad = false; }
    void unfreeze(const std::string& name) { get(name)->requires_grad = true; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [name, p] : items) n += p->value.numel();
        return n;
    }
};

template <typename T>
Tensor<T> trunc_normal_init(std::vector<int> shape, double std_dev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (auto& x : t.v) x = static_cast<T>(rng.truncated_normal(0.0, std_dev));
    return t;
}

} // namespace evkd
