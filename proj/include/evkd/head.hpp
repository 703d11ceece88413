#pragma once

#include <cmath>
#include <string>

#include "evkd/autodiff.hpp"
#include "evkd/geometry.hpp"
#include "evkd/params.hpp"

namespace evkd {

/// Tracking-head output over the search grid: a sigmoid score map plus
/// per-cell center offsets and normalized box sizes. All three stay attached
/// to the graph so losses can differentiate through them.
template <typename T>
struct ResponseMap {
    ad::Var<T> score;  // {side, side}, values in (0,1)
    ad::Var<T> offset; // {side*side, 2}, within-cell offsets in (0,1)
    ad::Var<T> size;   // {side*side, 2}, box size as a fraction of the patch
    int side = 0;
};

template <typename T>
void register_head_params(ParamStore<T>& ps, const std::string& prefix, int dim,
                          Rng& rng) {
    auto mlp = [&](const std::string& name, int out_dim) {
        ps.add(prefix + name + ".w1", trunc_normal_init<T>({dim, dim}, 0.02, rng));
        ps.add(prefix + name + ".b1", Tensor<T>::zeros({1, dim}));
        ps.add(prefix + name + ".w2", trunc_normal_init<T>({dim, out_dim}, 0.02, rng));
        ps.add(prefix + name + ".b2", Tensor<T>::zeros({1, out_dim}));
    };
    mlp("score", 1);
    mlp("offset", 2);
    mlp("size", 2);
}

/// Three independent two-layer perceptrons over the search tokens, reshaped
/// onto the side x side grid.
template <typename T>
ResponseMap<T> head_forward(ad::Var<T> search_tokens, ParamStore<T>& ps,
                            const std::string& prefix, int side) {
    const int n = search_tokens->value.rows();
    if (n != side * side)
        throw ShapeMismatch("head expects " + std::to_string(side * side) +
                            " search tokens, got " + std::to_string(n));
    auto mlp = [&](const std::string& name) {
        auto h = ad::gelu(ad::add_rowvec(
            ad::matmul(search_tokens, ps.get(prefix + name + ".w1")),
            ps.get(prefix + name + ".b1")));
        return ad::sigmoid(ad::add_rowvec(ad::matmul(h, ps.get(prefix + name + ".w2")),
                                          ps.get(prefix + name + ".b2")));
    };
    ResponseMap<T> r;
    r.side = side;
    r.score = ad::reshape(mlp("score"), {side, side});
    r.offset = mlp("offset");
    r.size = mlp("size");
    return r;
}

/// Peak cell of the score map plus that cell's offset and size, decoded to a
/// box in patch coordinates and mapped to frame coordinates through the crop
/// affine. The grid stride is patch_px / side; cell (gx, gy) with offset
/// (ox, oy) decodes to center ((gx+ox), (gy+oy)) * stride.
template <typename T>
BBox decode_box(const ResponseMap<T>& r, const AffineMap& affine, int patch_px) {
    const int side = r.side;
    int best = 0;
    const auto& s = r.score->value.v;
    for (int i = 1; i < side * side; ++i)
        if (s[static_cast<std::size_t>(i)] > s[static_cast<std::size_t>(best)]) best = i;
    const int gy = best / side;
    const int gx = best % side;

    const double stride = static_cast<double>(patch_px) / side;
    const double ox = static_cast<double>(r.offset->value.at(best, 0));
    const double oy = static_cast<double>(r.offset->value.at(best, 1));
    const double w = static_cast<double>(r.size->value.at(best, 0)) * patch_px;
    const double h = static_cast<double>(r.size->value.at(best, 1)) * patch_px;
    const double cx = (gx + ox) * stride;
    const double cy = (gy + oy) * stride;
    return affine.box_to_frame(BBox::from_center(cx, cy, w, h));
}

} // namespace evkd
