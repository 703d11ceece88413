#pragma once

#include <cmath>
#include <vector>

#include "evkd/autodiff.hpp"
#include "evkd/backbone.hpp"
#include "evkd/geometry.hpp"
#include "evkd/head.hpp"

namespace evkd {

struct HeatmapParams {
    double alpha = 2.0;
    double beta = 4.0;
    double tau = 2.0;

    /// Size-adaptive Gaussian std in grid cells for a box of (w, h) grid
    /// units: a sixth of the short side, floored at one cell.
    static double sigma_for(double w_grid, double h_grid) {
        return std::max(1.0, std::min(w_grid, h_grid) / 6.0);
    }
};

struct LossWeights {
    double lambda_focal = 1.0;
    double lambda_l1 = 5.0;
    double lambda_giou = 2.0;
    double eta_sim = 0.7;
    double eta_feat = 1.0;
    double eta_res = 0.7;
};

/// Which layers feed the similarity distillation term.
enum class KdLayerPolicy { LastOnly, EveryThird };

inline std::vector<int> kd_layer_set(KdLayerPolicy policy, int num_layers) {
    std::vector<int> out;
    if (policy == KdLayerPolicy::EveryThird)
        for (int l = 3; l <= num_layers; l += 3) out.push_back(l - 1);
    if (out.empty()) out.push_back(num_layers - 1);
    return out;
}

/// Gaussian target map exp(-((x-px)^2 + (y-py)^2) / (2 sigma^2)) over a
/// side x side grid of integer cell coordinates.
template <typename T>
Tensor<T> gaussian_heatmap(double px, double py, double sigma, int side) {
    if (!(px >= 0 && px < side && py >= 0 && py < side))
        throw CenterOutOfGrid("heatmap center (" + std::to_string(px) + ", " +
                              std::to_string(py) + ") outside " +
                              std::to_string(side) + "-cell grid");
    Tensor<T> map({side, side});
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            map.at(y, x) = static_cast<T>(
                std::exp(-((x - px) * (x - px) + (y - py) * (y - py)) * inv));
    return map;
}

/// Gaussian-weighted focal loss. Cells where the target saturates (>= 1-1e-6)
/// use the positive branch -(1-P)^alpha log P; all others use the soft branch
/// -(1-target)^beta P^alpha log(1-P). Predictions are clamped to
/// [1e-6, 1-1e-6] so the logarithms stay finite.
template <typename T>
ad::Var<T> gwf_loss(ad::Var<T> pred, const Tensor<T>& target, double alpha,
                    double beta) {
    if (!pred->value.same_shape(target))
        throw ShapeMismatch("gwf_loss: " + pred->value.shape_string() + " vs " +
                            Tensor<T>::shape_string(target.shape));
    const T lo = static_cast<T>(1e-6);
    const T hi = static_cast<T>(1.0 - 1e-6);
    auto p = ad::minimum(ad::maximum(std::move(pred),
                                     ad::constant(Tensor<T>::full(target.shape, lo))),
                         ad::constant(Tensor<T>::full(target.shape, hi)));

    Tensor<T> w_pos(target.shape);
    Tensor<T> w_neg(target.shape);
    for (std::size_t i = 0; i < target.v.size(); ++i) {
        if (target.v[i] >= hi) {
            w_pos.v[i] = T{1};
            w_neg.v[i] = T{0};
        } else {
            w_pos.v[i] = T{0};
            w_neg.v[i] = static_cast<T>(
                std::pow(1.0 - static_cast<double>(target.v[i]), beta));
        }
    }
    auto ones = ad::constant(Tensor<T>::full(target.shape, T{1}));
    auto pos = ad::mul(ad::constant(std::move(w_pos)),
                       ad::mul(ad::pow_const(ad::sub(ones, p), static_cast<T>(alpha)),
                               ad::log_(p)));
    auto neg = ad::mul(ad::constant(std::move(w_neg)),
                       ad::mul(ad::pow_const(p, static_cast<T>(alpha)),
                               ad::log_(ad::sub(ones, p))));
    return ad::scale(ad::reduce_sum(ad::add(pos, neg)), T{-1});
}

// ---------------------------------------------------------------------------
// Box losses, plain-value form (evaluation, oracles)

inline double giou(const BBox& a, const BBox& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    const double ex = std::max(a.x + a.w, b.x + b.w) - std::min(a.x, b.x);
    const double ey = std::max(a.y + a.h, b.y + b.h) - std::min(a.y, b.y);
    const double enc = ex * ey;
    const double i = uni > 0 ? inter / uni : 0.0;
    return enc > 0 ? i - (enc - uni) / enc : i;
}

inline double giou_loss(const BBox& pred, const BBox& gt) {
    if (gt.w <= 0 || gt.h <= 0)
        throw DegenerateGT("giou_loss requires a positive-area GT box");
    return 1.0 - giou(pred, gt);
}

inline double l1_box_loss(const BBox& pred, const BBox& gt) {
    return (std::abs(pred.x - gt.x) + std::abs(pred.y - gt.y) +
            std::abs(pred.w - gt.w) + std::abs(pred.h - gt.h)) /
           4.0;
}

// ---------------------------------------------------------------------------
// Box losses, graph form over {1,4} tensors laid out (x, y, w, h)

template <typename T>
ad::Var<T> box_var(const BBox& b) {
    return ad::constant(Tensor<T>::from_values(
        {1, 4}, {static_cast<T>(b.x), static_cast<T>(b.y), static_cast<T>(b.w),
                 static_cast<T>(b.h)}));
}

template <typename T>
ad::Var<T> giou_loss_graph(ad::Var<T> pred, ad::Var<T> gt) {
    using namespace ad;
    if (pred->value.shape != std::vector<int>{1, 4} ||
        gt->value.shape != std::vector<int>{1, 4})
        throw ShapeMismatch("box tensors must be (1x4)");
    if (gt->value.v[2] <= T{0} || gt->value.v[3] <= T{0})
        throw DegenerateGT("giou_loss requires a positive-area GT box");
    auto coord = [](Var<T> b, int i) { return slice(b, 0, 1, i, i + 1); };
    auto ax = coord(pred, 0), ay = coord(pred, 1), aw = coord(pred, 2),
         ah = coord(pred, 3);
    auto bx = coord(gt, 0), by = coord(gt, 1), bw = coord(gt, 2), bh = coord(gt, 3);
    auto ax2 = add(ax, aw), ay2 = add(ay, ah);
    auto bx2 = add(bx, bw), by2 = add(by, bh);
    auto zero = constant(Tensor<T>::scalar(T{0}));
    auto iw = maximum(sub(minimum(ax2, bx2), maximum(ax, bx)), zero);
    auto ih = maximum(sub(minimum(ay2, by2), maximum(ay, by)), zero);
    auto inter = mul(iw, ih);
    auto uni = sub(add(mul(aw, ah), mul(bw, bh)), inter);
    auto iou_v = divide(inter, uni);
    auto enc = mul(sub(maximum(ax2, bx2), minimum(ax, bx)),
                   sub(maximum(ay2, by2), minimum(ay, by)));
    auto giou_v = sub(iou_v, divide(sub(enc, uni), enc));
    return sub(constant(Tensor<T>::scalar(T{1})), giou_v);
}

template <typename T>
ad::Var<T> l1_box_loss_graph(ad::Var<T> pred, ad::Var<T> gt) {
    if (!pred->value.same_shape(gt->value))
        throw ShapeMismatch("l1 box loss: " + pred->value.shape_string() + " vs " +
                            gt->value.shape_string());
    return ad::reduce_mean(ad::abs_(ad::sub(std::move(pred), std::move(gt))));
}

// ---------------------------------------------------------------------------
// Distillation losses

/// Sum of squared differences between the 2x2-tiled student similarity and
/// the teacher similarity, over all teacher-shaped entries.
template <typename T>
ad::Var<T> sim_kd_single(ad::Var<T> student_sim, ad::Var<T> teacher_sim) {
    auto aligned = align_repeat_sim(std::move(student_sim));
    if (!aligned->value.same_shape(teacher_sim->value))
        throw ShapeMismatch("sim_kd: aligned " + aligned->value.shape_string() +
                            " vs teacher " + teacher_sim->value.shape_string());
    auto d = ad::sub(aligned, std::move(teacher_sim));
    return ad::reduce_sum(ad::mul(d, d));
}

/// Mean of sim_kd_single over the selected layer pairs (same index on both
/// sides; both networks have the same depth).
template <typename T>
ad::Var<T> sim_kd(const std::vector<ad::Var<T>>& student_sims,
                  const std::vector<ad::Var<T>>& teacher_sims,
                  const std::vector<int>& layers) {
    if (student_sims.size() != teacher_sims.size())
        throw ShapeMismatch("sim_kd: layer count mismatch");
    ad::Var<T> total;
    for (int l : layers) {
        auto term = sim_kd_single(student_sims.at(static_cast<std::size_t>(l)),
                                  teacher_sims.at(static_cast<std::size_t>(l)));
        total = total ? ad::add(total, term) : term;
    }
    return ad::scale(total, static_cast<T>(1.0 / layers.size()));
}

/// Mean squared difference between repeated student tokens and teacher
/// tokens, over all teacher-shaped entries.
template <typename T>
ad::Var<T> feat_kd(ad::Var<T> student_tokens, ad::Var<T> teacher_tokens) {
    auto aligned = align_repeat_tokens(std::move(student_tokens));
    if (!aligned->value.same_shape(teacher_tokens->value))
        throw ShapeMismatch("feat_kd: aligned " + aligned->value.shape_string() +
                            " vs teacher " + teacher_tokens->value.shape_string());
    auto d = ad::sub(aligned, std::move(teacher_tokens));
    return ad::reduce_mean(ad::mul(d, d));
}

/// Response distillation: both score maps are divided by the temperature and
/// the teacher map becomes the soft focal target.
template <typename T>
ad::Var<T> res_kd(ad::Var<T> student_score, const Tensor<T>& teacher_score,
                  const HeatmapParams& hp) {
    if (!student_score->value.same_shape(teacher_score))
        throw ShapeMismatch("res_kd: " + student_score->value.shape_string() +
                            " vs " + Tensor<T>::shape_string(teacher_score.shape));
    const T inv_tau = static_cast<T>(1.0 / hp.tau);
    Tensor<T> target = teacher_score;
    for (auto& x : target.v) {
        x *= inv_tau;
        x = std::min(x, static_cast<T>(1.0 - 1e-6));
    }
    return gwf_loss(ad::scale(std::move(student_score), inv_tau), target, hp.alpha,
                    hp.beta);
}

// ---------------------------------------------------------------------------
// Assembled objectives

template <typename T>
struct LossTerms {
    ad::Var<T> focal, l1, giou, sim, feat, res;
};

template <typename T>
ad::Var<T> total_loss(const LossTerms<T>& t, const LossWeights& w) {
    auto weighted = [](ad::Var<T> term, double weight) -> ad::Var<T> {
        if (!term) {
            if (weight != 0.0)
                throw NonFinite("weighted loss term missing");
            return nullptr;
        }
        if (!std::isfinite(static_cast<double>(term->value.v[0])))
            throw NonFinite("non-finite loss term");
        return ad::scale(term, static_cast<T>(weight));
    };
    ad::Var<T> total;
    const std::pair<ad::Var<T>, double> parts[] = {
        {t.focal, w.lambda_focal}, {t.l1, w.lambda_l1}, {t.giou, w.lambda_giou},
        {t.sim, w.eta_sim},        {t.feat, w.eta_feat}, {t.res, w.eta_res}};
    for (const auto& [term, weight] : parts) {
        auto wt = weighted(term, weight);
        if (!wt) continue;
        total = total ? ad::add(total, wt) : wt;
    }
    if (!total) total = ad::constant(Tensor<T>::scalar(T{0}));
    return total;
}

/// Tracking supervision for one response map against a GT box given in patch
/// pixel coordinates. The focal target is the Gaussian heatmap; the box
/// losses compare the offset/size read at the GT center cell against the
/// normalized GT box.
template <typename T>
struct TrackingLosses {
    ad::Var<T> focal, l1, giou;
    Tensor<T> heatmap;
};

template <typename T>
TrackingLosses<T> tracking_losses(const ResponseMap<T>& r, const BBox& gt_patch,
                                  int patch_px, const HeatmapParams& hp) {
    if (gt_patch.w <= 0 || gt_patch.h <= 0)
        throw DegenerateGT("tracking supervision requires a positive-area GT box");
    const int side = r.side;
    const double stride = static_cast<double>(patch_px) / side;
    const double px = gt_patch.cx() / stride;
    const double py = gt_patch.cy() / stride;
    const double sigma = HeatmapParams::sigma_for(gt_patch.w / stride, gt_patch.h / stride);

    TrackingLosses<T> out;
    out.heatmap = gaussian_heatmap<T>(px, py, sigma, side);
    out.focal = gwf_loss(r.score, out.heatmap, hp.alpha, hp.beta);

    const int gx = std::min(side - 1, static_cast<int>(px));
    const int gy = std::min(side - 1, static_cast<int>(py));
    const int cell = gy * side + gx;
    auto row_o = ad::slice(r.offset, cell, cell + 1, 0, 2);
    auto row_s = ad::slice(r.size, cell, cell + 1, 0, 2);
    auto ox = ad::slice(row_o, 0, 1, 0, 1);
    auto oy = ad::slice(row_o, 0, 1, 1, 2);
    auto w = ad::slice(row_s, 0, 1, 0, 1);
    auto h = ad::slice(row_s, 0, 1, 1, 2);
    const T inv_side = static_cast<T>(1.0 / side);
    auto cxn = ad::scale(ad::add_scalar(ox, static_cast<T>(gx)), inv_side);
    auto cyn = ad::scale(ad::add_scalar(oy, static_cast<T>(gy)), inv_side);
    auto x = ad::sub(cxn, ad::scale(w, T{0.5}));
    auto y = ad::sub(cyn, ad::scale(h, T{0.5}));
    auto pred = ad::concat_cols(ad::concat_cols(x, y), ad::concat_cols(w, h));

    const double inv_px = 1.0 / patch_px;
    BBox gt_norm{gt_patch.x * inv_px, gt_patch.y * inv_px, gt_patch.w * inv_px,
                 gt_patch.h * inv_px};
    auto gt4 = box_var<T>(gt_norm);
    out.l1 = l1_box_loss_graph(pred, gt4);
    out.giou = giou_loss_graph(pred, gt4);
    return out;
}

} // namespace evkd
