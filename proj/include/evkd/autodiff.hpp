#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <unordered_set>
#include <vector>

#include "evkd/errors.hpp"
#include "evkd/tensor.hpp"

namespace evkd::ad {

/// Tracks multiply-accumulate counts of matmul nodes built since reset().
/// Attention products are tagged separately so the cost split between the
/// token-mixing path and everything else can be measured.
struct MacCounter {
    std::uint64_t total = 0;
    std::uint64_t attention = 0;
    bool enabled = false;
    bool in_attention = false;

    static MacCounter& instance() {
        static MacCounter c;
        return c;
    }
    void reset() {
        total = 0;
        attention = 0;
    }
    void add(std::uint64_t macs) {
        if (!enabled) return;
        total += macs;
        if (in_attention) attention += macs;
    }
};

struct AttentionScope {
    bool prev;
    AttentionScope() : prev(MacCounter::instance().in_attention) {
        MacCounter::instance().in_attention = true;
    }
    ~AttentionScope() { MacCounter::instance().in_attention = prev; }
};

template <typename T>
struct Node;

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool leaf = true;
    std::vector<Var<T>> inputs;
    std::function<void(Node<T>&)> backprop;

    void ensure_grad() {
        if (!grad.same_shape(value)) grad = Tensor<T>::zeros(value.shape);
    }
    void zero_grad() {
        ensure_grad();
        grad.fill(T{});
    }
};

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->leaf = true;
    if (requires_grad) n->zero_grad();
    return n;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
    return leaf(std::move(value), false);
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs,
               std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->inputs = std::move(inputs);
    n->leaf = false;
    for (const auto& in : n->inputs)
        if (in->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeMismatch(std::string(op) + ": " + a.shape_string() + " vs " +
                            b.shape_string());
}

template <typename T>
void topo_order(const Var<T>& root, std::vector<Node<T>*>& order) {
    // Iterative post-order DFS; recursion would overflow on deep graphs.
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        Node<T>* node = stack.back().first;
        const std::size_t next = stack.back().second;
        if (next < node->inputs.size()) {
            stack.back().second = next + 1;
            Node<T>* child = node->inputs[next].get();
            if (child->requires_grad && !seen.count(child)) {
                seen.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

} // namespace detail

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into leaves
/// only; interior grads are zeroed at the start of every call, so running
/// backward twice exactly doubles leaf gradients.
template <typename T>
void backward(const Var<T>& loss) {
    if (loss->value.numel() != 1)
        throw NonScalarLoss("backward needs a scalar, got " + loss->value.shape_string());
    if (!loss->requires_grad) return;

    std::vector<Node<T>*> order;
    detail::topo_order(loss, order);
    for (Node<T>* n : order) {
        if (n->leaf)
            n->ensure_grad();
        else
            n->zero_grad();
    }
    loss->grad.v[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (!n->leaf && n->backprop) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    detail::require_same_shape(a->value, b->value, "add");
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b->value.v[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        for (int k = 0; k < 2; ++k) {
            auto& in = n.inputs[k];
            if (!in->requires_grad) continue;
            in->ensure_grad();
            for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                in->grad.v[i] += n.grad.v[i];
        }
    });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    detail::require_same_shape(a->value, b->value, "sub");
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b->value.v[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < n.grad.v.size(); ++i) b->grad.v[i] -= n.grad.v[i];
        }
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    detail::require_same_shape(a->value, b->value, "mul");
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b->value.v[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                a->grad.v[i] += n.grad.v[i] * b->value.v[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                b->grad.v[i] += n.grad.v[i] * a->value.v[i];
        }
    });
}

template <typename T>
Var<T> divide(Var<T> a, Var<T> b) {
    detail::require_same_shape(a->value, b->value, "divide");
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] /= b->value.v[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                a->grad.v[i] += n.grad.v[i] / b->value.v[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                b->grad.v[i] -= n.grad.v[i] * n.value.v[i] / b->value.v[i];
        }
    });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
    Tensor<T> out = a->value;
    for (auto& x : out.v) x *= s;
    return make_op<T>(std::move(out), {a}, [s](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.v.size(); ++i)
            a->grad.v[i] += s * n.grad.v[i];
    });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
    Tensor<T> out = a->value;
    for (auto& x : out.v) x += s;
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i];
    });
}

template <typename T>
Var<T> exp_(Var<T> a) {
    Tensor<T> out = a->value;
    for (auto& x : out.v) x = std::exp(x);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.v.size(); ++i)
            a->grad.v[i] += n.grad.v[i] * n.value.v[i];
    });
}

template <typename T>
Var<T> log_(Var<T> a) {
    Tensor<T> out = a->value;
    for (auto& x : out.v) x = std::log(x);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.v.size(); ++i)
            a->grad.v[i] += n.grad.v[i] / a->value.v[i];
    });
}

template <typename T>
Var<T> sqrt_(Var<T> a) {
    Tensor<T> out = a->value;
    for (auto& x : out.v) x = std::sqrt(x);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.v.size(); ++i)
            a->grad.v[i] += n.grad.v[i] / (T{2} * n.value.v[i]);
    });
}

template <typename T>
Var<T> abs_(Var<T> a) {
    Tensor<T> out = a->value;
    for (auto& x : out.v) x = std::abs(x);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
            const T x = a->value.v[i];
            const T s = x > T{0} ? T{1} : (x < T{0} ? T{-1} : T{0});
            a->grad.v[i] += n.grad.v[i] * s;
        }
    });
}

template <typename T>
Var<T> pow_const(Var<T> a, T p) {
    Tensor<T> out = a->value;
    for (auto& x : out.v) x = std::pow(x, p);
    return make_op<T>(std::move(out), {a}, [p](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.v.size(); ++i)
            a->grad.v[i] += n.grad.v[i] * p * std::pow(a->value.v[i], p - T{1});
    });
}

template <typename T>
Var<T> maximum(Var<T> a, Var<T> b) {
    detail::require_same_shape(a->value, b->value, "maximum");
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = std::max(out.v[i], b->value.v[i]);
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
            // Ties route to the first argument.
            const bool take_a = a->value.v[i] >= b->value.v[i];
            auto& in = take_a ? a : b;
            if (!in->requires_grad) continue;
            in->ensure_grad();
            in->grad.v[i] += n.grad.v[i];
        }
    });
}

template <typename T>
Var<T> minimum(Var<T> a, Var<T> b) {
    detail::require_same_shape(a->value, b->value, "minimum");
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = std::min(out.v[i], b->value.v[i]);
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
            const bool take_a = a->value.v[i] <= b->value.v[i];
            auto& in = take_a ? a : b;
            if (!in->requires_grad) continue;
            in->ensure_grad();
            in->grad.v[i] += n.grad.v[i];
        }
    });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
    Tensor<T> out = a->value;
    for (auto& x : out.v) {
        // Split by sign so exp never overflows.
        x = x >= T{0} ? T{1} / (T{1} + std::exp(-x))
                      : std::exp(x) / (T{1} + std::exp(x));
    }
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
            const T y = n.value.v[i];
            a->grad.v[i] += n.grad.v[i] * y * (T{1} - y);
        }
    });
}

template <typename T>
Var<T> gelu(Var<T> a) {
    // tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    static constexpr T k0 = T{0.7978845608028654};
    static constexpr T k1 = T{0.044715};
    Tensor<T> out = a->value;
    for (auto& x : out.v) {
        const T u = k0 * (x + k1 * x * x * x);
        x = T{0.5} * x * (T{1} + std::tanh(u));
    }
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
            const T x = a->value.v[i];
            const T u = k0 * (x + k1 * x * x * x);
            const T th = std::tanh(u);
            const T sech2 = T{1} - th * th;
            const T du = k0 * (T{1} + T{3} * k1 * x * x);
            const T d = T{0.5} * (T{1} + th) + T{0.5} * x * sech2 * du;
            a->grad.v[i] += n.grad.v[i] * d;
        }
    });
}

// ---------------------------------------------------------------------------
// Matrix ops

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    if (a->value.shape.size() != 2 || b->value.shape.size() != 2 ||
        a->value.cols() != b->value.rows())
        throw ShapeMismatch("matmul: " + a->value.shape_string() + " vs " +
                            b->value.shape_string());
    const int m = a->value.rows(), k = a->value.cols(), n = b->value.cols();
    MacCounter::instance().add(static_cast<std::uint64_t>(m) * k * n);
    Tensor<T> out = Tensor<T>::zeros({m, n});
    kernels::matmul_nn_acc(a->value.v.data(), b->value.v.data(), out.v.data(), m, k, n);
    return make_op<T>(std::move(out), {a, b}, [m, k, n](Node<T>& n_) {
        auto& a = n_.inputs[0];
        auto& b = n_.inputs[1];
        if (a->requires_grad) {
            a->ensure_grad();
            kernels::matmul_nt_acc(n_.grad.v.data(), b->value.v.data(),
                                   a->grad.v.data(), m, n, k);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            kernels::matmul_tn_acc(a->value.v.data(), n_.grad.v.data(),
                                   b->grad.v.data(), m, k, n);
        }
    });
}

template <typename T>
Var<T> transpose(Var<T> a) {
    const int r = a->value.rows(), c = a->value.cols();
    Tensor<T> out = Tensor<T>::zeros({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(j, i) = a->value.at(i, j);
    return make_op<T>(std::move(out), {a}, [r, c](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) a->grad.at(i, j) += n.grad.at(j, i);
    });
}

template <typename T>
Var<T> reshape(Var<T> a, std::vector<int> shape) {
    Tensor<T> out = Tensor<T>::zeros(shape);
    if (out.numel() != a->value.numel())
        throw ShapeMismatch("reshape: " + a->value.shape_string() + " -> " +
                            Tensor<T>::shape_string(shape));
    out.v = a->value.v;
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i];
    });
}

template <typename T>
Var<T> concat_rows(Var<T> a, Var<T> b) {
    if (a->value.cols() != b->value.cols())
        throw ShapeMismatch("concat_rows: " + a->value.shape_string() + " vs " +
                            b->value.shape_string());
    const int ra = a->value.rows(), rb = b->value.rows(), c = a->value.cols();
    Tensor<T> out = Tensor<T>::zeros({ra + rb, c});
    std::copy(a->value.v.begin(), a->value.v.end(), out.v.begin());
    std::copy(b->value.v.begin(), b->value.v.end(),
              out.v.begin() + static_cast<std::ptrdiff_t>(ra) * c);
    return make_op<T>(std::move(out), {a, b}, [ra, rb, c](Node<T>& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        const std::size_t na = static_cast<std::size_t>(ra) * c;
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < na; ++i) a->grad.v[i] += n.grad.v[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            const std::size_t nb = static_cast<std::size_t>(rb) * c;
            for (std::size_t i = 0; i < nb; ++i) b->grad.v[i] += n.grad.v[na + i];
        }
    });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
    if (a->value.rows() != b->value.rows())
        throw ShapeMismatch("concat_cols: " + a->value.shape_string() + " vs " +
                            b->value.shape_string());
    const int r = a->value.rows(), ca = a->value.cols(), cb = b->value.cols();
    Tensor<T> out = Tensor<T>::zeros({r, ca + cb});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < ca; ++j) out.at(i, j) = a->value.at(i, j);
        for (int j = 0; j < cb; ++j) out.at(i, ca + j) = b->value.at(i, j);
    }
    return make_op<T>(std::move(out), {a, b}, [r, ca, cb](Node<T>& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        if (a->requires_grad) {
            a->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < ca; ++j) a->grad.at(i, j) += n.grad.at(i, j);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < cb; ++j) b->grad.at(i, j) += n.grad.at(i, ca + j);
        }
    });
}

/// Rows [r0, r1) and cols [c0, c1).
template <typename T>
Var<T> slice(Var<T> a, int r0, int r1, int c0, int c1) {
    if (r0 < 0 || c0 < 0 || r1 > a->value.rows() || c1 > a->value.cols() ||
        r0 >= r1 || c0 >= c1)
        throw ShapeMismatch("slice out of range on " + a->value.shape_string());
    Tensor<T> out = Tensor<T>::zeros({r1 - r0, c1 - c0});
    for (int i = r0; i < r1; ++i)
        for (int j = c0; j < c1; ++j) out.at(i - r0, j - c0) = a->value.at(i, j);
    return make_op<T>(std::move(out), {a}, [r0, r1, c0, c1](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (int i = r0; i < r1; ++i)
            for (int j = c0; j < c1; ++j) a->grad.at(i, j) += n.grad.at(i - r0, j - c0);
    });
}

// ---------------------------------------------------------------------------
// Broadcast against a 1 x D row vector

template <typename T>
Var<T> add_rowvec(Var<T> a, Var<T> b) {
    if (b->value.rows() != 1 || b->value.cols() != a->value.cols())
        throw ShapeMismatch("add_rowvec: " + a->value.shape_string() + " vs " +
                            b->value.shape_string());
    const int r = a->value.rows(), c = a->value.cols();
    Tensor<T> out = a->value;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) += b->value.v[j];
    return make_op<T>(std::move(out), {a, b}, [r, c](Node<T>& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) b->grad.v[j] += n.grad.at(i, j);
        }
    });
}

template <typename T>
Var<T> mul_rowvec(Var<T> a, Var<T> b) {
    if (b->value.rows() != 1 || b->value.cols() != a->value.cols())
        throw ShapeMismatch("mul_rowvec: " + a->value.shape_string() + " vs " +
                            b->value.shape_string());
    const int r = a->value.rows(), c = a->value.cols();
    Tensor<T> out = a->value;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) *= b->value.v[j];
    return make_op<T>(std::move(out), {a, b}, [r, c](Node<T>& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        if (a->requires_grad) {
            a->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) a->grad.at(i, j) += n.grad.at(i, j) * b->value.v[j];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) b->grad.v[j] += n.grad.at(i, j) * a->value.at(i, j);
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization and reductions

template <typename T>
Var<T> row_softmax(Var<T> a) {
    const int r = a->value.rows(), c = a->value.cols();
    Tensor<T> out = Tensor<T>::zeros({r, c});
    for (int i = 0; i < r; ++i) {
        T mx = a->value.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, a->value.at(i, j));
        T sum = T{};
        for (int j = 0; j < c; ++j) {
            const T e = std::exp(a->value.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < c; ++j) out.at(i, j) /= sum;
    }
    return make_op<T>(std::move(out), {a}, [r, c](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (int i = 0; i < r; ++i) {
            T dot = T{};
            for (int j = 0; j < c; ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
            for (int j = 0; j < c; ++j)
                a->grad.at(i, j) += n.value.at(i, j) * (n.grad.at(i, j) - dot);
        }
    });
}

/// Per-row standardization with biased variance: y = (x - mu) / sqrt(var + eps).
template <typename T>
Var<T> layer_norm(Var<T> a, T eps) {
    const int r = a->value.rows(), c = a->value.cols();
    Tensor<T> out = Tensor<T>::zeros({r, c});
    std::vector<T> inv_std(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        T mean = T{};
        for (int j = 0; j < c; ++j) mean += a->value.at(i, j);
        mean /= static_cast<T>(c);
        T var = T{};
        for (int j = 0; j < c; ++j) {
            const T d = a->value.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T is = T{1} / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = is;
        for (int j = 0; j < c; ++j) out.at(i, j) = (a->value.at(i, j) - mean) * is;
    }
    return make_op<T>(std::move(out), {a},
                      [r, c, inv_std = std::move(inv_std)](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        for (int i = 0; i < r; ++i) {
            T gmean = T{}, gymean = T{};
            for (int j = 0; j < c; ++j) {
                gmean += n.grad.at(i, j);
                gymean += n.grad.at(i, j) * n.value.at(i, j);
            }
            gmean /= static_cast<T>(c);
            gymean /= static_cast<T>(c);
            const T is = inv_std[static_cast<std::size_t>(i)];
            for (int j = 0; j < c; ++j)
                a->grad.at(i, j) +=
                    is * (n.grad.at(i, j) - gmean - n.value.at(i, j) * gymean);
        }
    });
}

template <typename T>
Var<T> reduce_sum(Var<T> a) {
    T s = T{};
    for (const T x : a->value.v) s += x;
    return make_op<T>(Tensor<T>::scalar(s), {a}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        const T g = n.grad.v[0];
        for (auto& x : a->grad.v) x += g;
    });
}

template <typename T>
Var<T> reduce_mean(Var<T> a) {
    T s = T{};
    for (const T x : a->value.v) s += x;
    const T inv = T{1} / static_cast<T>(a->value.numel());
    return make_op<T>(Tensor<T>::scalar(s * inv), {a}, [inv](Node<T>& n) {
        auto& a = n.inputs[0];
        a->ensure_grad();
        const T g = n.grad.v[0] * inv;
        for (auto& x : a->grad.v) x += g;
    });
}

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradCheckOptions {
    double eps = 1e-5;
    std::size_t max_coords_per_leaf = static_cast<std::size_t>(-1);
    std::uint64_t seed = 7;
};

/// Central-difference check of d(loss)/d(leaf) for every requested leaf
/// coordinate. `build` must construct a fresh scalar graph from the current
/// leaf values on every call. Returns the max relative error
/// |a - n| / max(1e-8, |a| + |n|).
template <typename T, typename Build>
double grad_check(Build&& build, const std::vector<Var<T>>& leaves,
                  const GradCheckOptions& opt = {}) {
    for (auto& l : leaves) l->zero_grad();
    {
        Var<T> loss = build();
        backward(loss);
    }
    std::vector<Tensor<T>> analytic;
    analytic.reserve(leaves.size());
    for (auto& l : leaves) analytic.push_back(l->grad);

    std::mt19937_64 pick(opt.seed);
    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& l = leaves[li];
        const std::size_t n = l->value.numel();
        std::vector<std::size_t> coords;
        if (opt.max_coords_per_leaf >= n) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (std::size_t i = 0; i < opt.max_coords_per_leaf; ++i)
                coords.push_back(static_cast<std::size_t>(pick() % n));
        }
        for (const std::size_t ci : coords) {
            const T saved = l->value.v[ci];
            l->value.v[ci] = saved + static_cast<T>(opt.eps);
            const double up = static_cast<double>(build()->value.v[0]);
            l->value.v[ci] = saved - static_cast<T>(opt.eps);
            const double dn = static_cast<double>(build()->value.v[0]);
            l->value.v[ci] = saved;
            const double numeric = (up - dn) / (2.0 * opt.eps);
            const double a = static_cast<double>(analytic[li].v[ci]);
            const double rel =
                std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

template <typename T, typename F>
double grad_check_single(F&& f, const Tensor<T>& x, double eps = 1e-5) {
    Var<T> leaf_x = leaf(x, true);
    GradCheckOptions opt;
    opt.eps = eps;
    return grad_check<T>([&] { return f(leaf_x); }, {leaf_x}, opt);
}

} // namespace evkd::ad
