#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "evkd/errors.hpp"

namespace evkd {

/// Dense row-major array. The network keeps everything rank 2 (scalars are
/// 1x1); higher ranks only pass through reshape-style bookkeeping.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> shp, T fill = T{})
        : shape(std::move(shp)), v(checked_numel(shape), fill) {}

    static Tensor zeros(std::vector<int> shp) { return Tensor(std::move(shp)); }
    static Tensor full(std::vector<int> shp, T value) {
        return Tensor(std::move(shp), value);
    }
    static Tensor scalar(T value) { return Tensor({1, 1}, value); }
    static Tensor from_values(std::vector<int> shp, std::vector<T> values) {
        Tensor t;
        t.shape = std::move(shp);
        t.v = std::move(values);
        if (t.v.size() != checked_numel(t.shape))
            throw ShapeMismatch("value count " + std::to_string(t.v.size()) +
                                " does not match shape " + shape_string(t.shape));
        return t;
    }

    std::size_t numel() const { return v.size(); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    T& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
    T at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(T value) { std::fill(v.begin(), v.end(), value); }

    static std::string shape_string(const std::vector<int>& s) {
        std::string out = "(";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += "x";
            out += std::to_string(s[i]);
        }
        return out + ")";
    }
    std::string shape_string() const { return shape_string(shape); }

private:
    static std::size_t checked_numel(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeMismatch("non-positive dimension in " + shape_string(s));
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }
};

/// Accumulating matmul kernels. ikj ordering keeps the inner loop contiguous
/// so the compiler can vectorize it.
namespace kernels {

// c (m x n) += a (m x k) * b (k x n)
template <typename T>
void matmul_nn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c (m x k) += a (m x n) * b^T, with b stored (k x n)
template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * n;
        T* crow = c + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T* brow = b + static_cast<std::size_t>(p) * n;
            T acc = T{};
            for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// c (k x n) += a^T * b, with a stored (m x k), b stored (m x n)
template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        const T* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            T* crow = c + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

} // namespace kernels

} // namespace evkd
