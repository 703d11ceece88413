#pragma once

#include <string>
#include <vector>

#include "evkd/backbone.hpp"
#include "evkd/losses.hpp"
#include "evkd/rng.hpp"

namespace evkd {

struct TermCheck {
    std::string name;
    double rel_err = 0;
};

struct ModelGradCheck {
    double full_model = 0;          // total loss, all six terms, through the student
    double dead_coord_numeric = 0;  // |finite difference| where analytic grad ~ 0
    std::vector<TermCheck> terms;   // each loss in isolation on small inputs

    double worst_term() const {
        double w = 0;
        for (const TermCheck& t : terms) w = std::max(w, t.rel_err);
        return w;
    }
};

namespace gradcheck_detail {

inline Image<float> random_image(int channels, int side, Rng& rng) {
    Image<float> img(channels, side, side);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

inline Patch make_patch(int side, PatchRole role, Rng& rng) {
    Patch p;
    p.pixels = random_image(3, side, rng);
    p.role = role;
    return p;
}

} // namespace gradcheck_detail

struct FullModelCheck {
    double worst_rel = 0;       // over the highest-|gradient| coordinates
    double dead_numeric = 0;    // |finite difference| at near-zero-gradient coords
};

/// Central finite differences against the analytic gradients of the complete
/// student objective: forward through the backbone and head, tracking losses
/// plus the three distillation terms against a fixed two-view teacher.
///
/// Coordinates are probed where the analytic gradient is largest; at
/// near-zero-gradient coordinates the relative-error convention only measures
/// finite-difference rounding noise, so those are checked in absolute terms
/// instead (the numeric derivative must itself be ~0).
inline FullModelCheck full_model_gradcheck(int embed_dim = 16, int num_layers = 2,
                                           std::uint64_t seed = 5,
                                           std::size_t coords_per_leaf = 6) {
    using namespace gradcheck_detail;
    BackboneConfig cfg;
    cfg.embed_dim = embed_dim;
    cfg.num_layers = num_layers;
    cfg.num_heads = 2;
    cfg.validate();

    Rng rng(seed);
    TrackerNet<double> student = TrackerNet<double>::make(cfg, false, seed);
    TrackerNet<double> teacher = TrackerNet<double>::make(cfg, true, seed + 1);

    const Patch tmpl_a = make_patch(cfg.template_size, PatchRole::Template, rng);
    const Patch search_a = make_patch(cfg.search_size, PatchRole::Search, rng);
    const Patch tmpl_b = make_patch(cfg.template_size, PatchRole::Template, rng);
    const Patch search_b = make_patch(cfg.search_size, PatchRole::Search, rng);
    const BBox gt_patch{96.3, 88.7, 61.4, 70.2};
    const HeatmapParams hp;
    const LossWeights w; // defaults keep all six terms active

    // Teacher targets are constants: compute once, reuse in every probe.
    ForwardResult<double> tf =
        teacher.forward_teacher(tmpl_a, search_a, tmpl_b, search_b);
    std::vector<Tensor<double>> t_sims;
    for (const auto& s : tf.sims) t_sims.push_back(s->value);
    const Tensor<double> t_tokens = tf.tokens->value;
    const Tensor<double> t_score = tf.response.score->value;
    const std::vector<int> layers = kd_layer_set(KdLayerPolicy::LastOnly, num_layers);

    auto build = [&]() {
        ForwardResult<double> fw = student.forward_student(tmpl_a, search_a);
        LossTerms<double> terms;
        TrackingLosses<double> tl =
            tracking_losses(fw.response, gt_patch, cfg.search_size, hp);
        terms.focal = tl.focal;
        terms.l1 = tl.l1;
        terms.giou = tl.giou;
        std::vector<ad::Var<double>> tsv;
        for (const auto& t : t_sims) tsv.push_back(ad::constant(t));
        terms.sim = sim_kd(fw.sims, tsv, layers);
        terms.feat = feat_kd(fw.tokens, ad::constant(t_tokens));
        terms.res = res_kd(fw.response.score, t_score, hp);
        return total_loss(terms, w);
    };

    const std::vector<std::string> names = {
        "embed_a.proj.w", "embed_a.pos.search", "embed_a.role.template",
        "layer.0.wq",     "layer.0.wv",         "layer.0.mlp.w1",
        "layer.0.ln1.g",  "layer.1.wo",         "layer.1.mlp.w2",
        "final_ln.g",     "head.score.w2",      "head.offset.w1",
        "head.size.w2"};
    std::vector<ad::Var<double>> leaves;
    for (const std::string& n : names) leaves.push_back(student.params.get(n));

    for (auto& l : leaves) l->zero_grad();
    ad::backward(build());
    std::vector<Tensor<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& l : leaves) analytic.push_back(l->grad);

    const double eps = 1e-5;
    auto numeric_at = [&](ad::Var<double>& l, std::size_t ci) {
        const double saved = l->value.v[ci];
        l->value.v[ci] = saved + eps;
        const double up = build()->value.v[0];
        l->value.v[ci] = saved - eps;
        const double dn = build()->value.v[0];
        l->value.v[ci] = saved;
        return (up - dn) / (2.0 * eps);
    };

    FullModelCheck out;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& l = leaves[li];
        const std::size_t n = l->value.numel();
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(analytic[li].v[a]) > std::abs(analytic[li].v[b]);
        });
        for (std::size_t k = 0; k < std::min(coords_per_leaf, n); ++k) {
            const std::size_t ci = order[k];
            const double a = analytic[li].v[ci];
            const double num = numeric_at(l, ci);
            const double rel =
                std::abs(a - num) / std::max(1e-8, std::abs(a) + std::abs(num));
            out.worst_rel = std::max(out.worst_rel, rel);
        }
        // weakest coordinate: numeric derivative must also vanish
        const std::size_t tail = order.back();
        if (std::abs(analytic[li].v[tail]) < 1e-10)
            out.dead_numeric =
                std::max(out.dead_numeric, std::abs(numeric_at(l, tail)));
    }
    return out;
}

/// Each loss term in isolation on small random inputs, full-coordinate
/// central differences.
inline std::vector<TermCheck> per_term_gradcheck(std::uint64_t seed = 17) {
    Rng rng(seed);
    std::vector<TermCheck> out;
    ad::GradCheckOptions opt;
    opt.eps = 1e-5;

    {
        Tensor<double> pred({5, 5}), target({5, 5});
        for (auto& v : pred.v) v = 0.2 + 0.6 * rng.uniform();
        for (auto& v : target.v) v = 0.8 * rng.uniform();
        target.v[7] = 1.0; // one saturated positive cell
        auto leaf = ad::leaf(pred, true);
        const double e = ad::grad_check<double>(
            [&] { return gwf_loss(leaf, target, 2.0, 4.0); }, {leaf}, opt);
        out.push_back({"gwf", e});
    }
    {
        Tensor<double> p({1, 4});
        p.v = {0.31, 0.33, 0.43, 0.39};
        Tensor<double> g({1, 4});
        g.v = {0.35, 0.30, 0.40, 0.35};
        auto pl = ad::leaf(p, true);
        auto gv = ad::constant(g);
        const double eg = ad::grad_check<double>(
            [&] { return giou_loss_graph(pl, gv); }, {pl}, opt);
        out.push_back({"giou", eg});
        const double el = ad::grad_check<double>(
            [&] { return l1_box_loss_graph(pl, gv); }, {pl}, opt);
        out.push_back({"l1", el});
    }
    {
        Tensor<double> s({4, 4}), t({8, 8});
        for (auto& v : s.v) v = rng.uniform();
        for (auto& v : t.v) v = rng.uniform();
        auto sl = ad::leaf(s, true);
        auto tv = ad::constant(t);
        const double e = ad::grad_check<double>(
            [&] { return sim_kd_single(sl, tv); }, {sl}, opt);
        out.push_back({"sim_kd", e});
    }
    {
        Tensor<double> s({4, 3}), t({8, 3});
        for (auto& v : s.v) v = rng.uniform();
        for (auto& v : t.v) v = rng.uniform();
        auto sl = ad::leaf(s, true);
        auto tv = ad::constant(t);
        const double e = ad::grad_check<double>(
            [&] { return feat_kd(sl, tv); }, {sl}, opt);
        out.push_back({"feat_kd", e});
    }
    {
        HeatmapParams hp;
        Tensor<double> s({5, 5}), t({5, 5});
        for (auto& v : s.v) v = 0.2 + 0.6 * rng.uniform();
        for (auto& v : t.v) v = 0.9 * rng.uniform();
        auto sl = ad::leaf(s, true);
        const double e = ad::grad_check<double>(
            [&] { return res_kd(sl, t, hp); }, {sl}, opt);
        out.push_back({"res_kd", e});
    }
    {
        // focal term through the assembled heatmap supervision
        Tensor<double> target = gaussian_heatmap<double>(7.4, 8.6, 2.0, 16);
        Tensor<double> pred({16, 16});
        for (auto& v : pred.v) v = 0.2 + 0.6 * rng.uniform();
        auto leaf = ad::leaf(pred, true);
        ad::GradCheckOptions sampled = opt;
        sampled.max_coords_per_leaf = 64;
        const double e = ad::grad_check<double>(
            [&] { return gwf_loss(leaf, target, 2.0, 4.0); }, {leaf}, sampled);
        out.push_back({"focal", e});
    }
    return out;
}

inline ModelGradCheck run_model_gradcheck(int embed_dim = 16, int num_layers = 2,
                                          std::uint64_t seed = 5) {
    ModelGradCheck r;
    const FullModelCheck f = full_model_gradcheck(embed_dim, num_layers, seed);
    r.full_model = f.worst_rel;
    r.dead_coord_numeric = f.dead_numeric;
    r.terms = per_term_gradcheck(seed + 12);
    return r;
}

} // namespace evkd
