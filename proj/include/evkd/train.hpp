#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "evkd/backbone.hpp"
#include "evkd/checkpoint.hpp"
#include "evkd/config.hpp"
#include "evkd/dataset.hpp"
#include "evkd/losses.hpp"
#include "evkd/optim.hpp"
#include "evkd/patch.hpp"
#include "evkd/rng.hpp"

namespace evkd {

// ---------------------------------------------------------------------------
// Pair sampling: template from frame 0 GT, search from a nearby frame with a
// jittered GT-centered crop.

struct TrainSample {
    Patch tmpl_a, search_a; // event-frame view
    Patch tmpl_b, search_b; // voxel view, filled when two_view is set
    BBox gt_patch;          // GT box in search-patch pixel coordinates
};

inline std::optional<TrainSample> sample_pair(const SequenceData& seq,
                                              const TrainConfig& cfg, bool two_view,
                                              Rng& rng) {
    const std::size_t n = seq.frames();
    if (n < 2 || seq.boxes[0].absent()) return std::nullopt;

    const int hi = static_cast<int>(std::min<std::size_t>(n - 1, cfg.max_frame_gap));
    int j = -1;
    for (int tries = 0; tries < 20 && j < 0; ++tries) {
        const int cand = rng.uniform_int(1, hi);
        if (!seq.boxes[static_cast<std::size_t>(cand)].absent()) j = cand;
    }
    if (j < 0) return std::nullopt;

    const BBox gt = seq.boxes[static_cast<std::size_t>(j)];
    const double jx = rng.uniform(-cfg.center_jitter, cfg.center_jitter) * gt.w;
    const double jy = rng.uniform(-cfg.center_jitter, cfg.center_jitter) * gt.h;
    const double js = 1.0 + rng.uniform(-cfg.scale_jitter, cfg.scale_jitter);
    const BBox crop = BBox::from_center(gt.cx() + jx, gt.cy() + jy, gt.w * js, gt.h * js);

    TrainSample s;
    const Image<float> tmpl_img = seq.frame_view(0);
    const Image<float> search_img = seq.frame_view(static_cast<std::size_t>(j));
    s.tmpl_a = crop_resize_patch(tmpl_img, seq.boxes[0], cfg.template_context,
                                 cfg.backbone.template_size, PatchRole::Template);
    s.search_a = crop_resize_patch(search_img, crop, cfg.search_context,
                                   cfg.backbone.search_size, PatchRole::Search);
    if (two_view) {
        s.tmpl_b = crop_resize_patch(seq.voxel_view(0), seq.boxes[0],
                                     cfg.template_context, cfg.backbone.template_size,
                                     PatchRole::Template);
        s.search_b = crop_resize_patch(seq.voxel_view(static_cast<std::size_t>(j)), crop,
                                       cfg.search_context, cfg.backbone.search_size,
                                       PatchRole::Search);
    }
    s.gt_patch = s.search_a.to_frame.box_to_patch(gt);
    return s;
}

// ---------------------------------------------------------------------------
// Loss bookkeeping

struct StepStats {
    double focal = 0, l1 = 0, giou = 0, sim = 0, feat = 0, res = 0, total = 0;

    StepStats& operator+=(const StepStats& o) {
        focal += o.focal;
        l1 += o.l1;
        giou += o.giou;
        sim += o.sim;
        feat += o.feat;
        res += o.res;
        total += o.total;
        return *this;
    }
    StepStats scaled(double k) const {
        return {focal * k, l1 * k, giou * k, sim * k, feat * k, res * k, total * k};
    }
};

struct EpochStats {
    StepStats mean;
    int steps = 0;
};

template <typename T>
struct TrainResult {
    TrackerNet<T> net;
    std::vector<EpochStats> epochs;
    std::uint64_t optimizer_steps = 0;
    std::string rng_state;
};

/// Called after each epoch with the live network; return false to stop early
/// (e.g. once a validation metric is reached).
template <typename T>
using EpochCallback = std::function<bool(int, TrackerNet<T>&, const EpochStats&)>;

namespace train_detail {

inline void log_step(std::ostream* log, std::uint64_t step, const StepStats& s) {
    if (!log) return;
    (*log) << step << '\t' << s.focal << '\t' << s.l1 << '\t' << s.giou << '\t' << s.sim
           << '\t' << s.feat << '\t' << s.res << '\t' << s.total << '\n';
}

template <typename T>
double scalar_of(const ad::Var<T>& v) {
    return static_cast<double>(v->value.v[0]);
}

// Forward + loss graph for one sample. In teacher mode the KD terms are
// inactive; in student mode the teacher's outputs enter as constants so no
// gradient can reach its parameters.
template <typename T>
std::pair<ad::Var<T>, StepStats> sample_loss(TrackerNet<T>& net,
                                             TrackerNet<T>* teacher,
                                             const TrainSample& s,
                                             const TrainConfig& cfg) {
    const HeatmapParams hp;
    LossWeights w = cfg.weights;
    if (cfg.stage == Stage::Teacher) w.eta_sim = w.eta_feat = w.eta_res = 0;

    ForwardResult<T> fw = cfg.stage == Stage::Teacher && net.two_view
                              ? net.forward_teacher(s.tmpl_a, s.search_a, s.tmpl_b,
                                                    s.search_b)
                              : net.forward_student(s.tmpl_a, s.search_a);

    LossTerms<T> terms;
    TrackingLosses<T> tl =
        tracking_losses(fw.response, s.gt_patch, cfg.backbone.search_size, hp);
    terms.focal = tl.focal;
    terms.l1 = tl.l1;
    terms.giou = tl.giou;

    const bool any_kd = w.eta_sim != 0 || w.eta_feat != 0 || w.eta_res != 0;
    if (any_kd) {
        if (!teacher) throw ConfigMismatch("KD weights set but no teacher provided");
        ForwardResult<T> tf =
            teacher->forward_teacher(s.tmpl_a, s.search_a, s.tmpl_b, s.search_b);
        if (w.eta_sim != 0) {
            std::vector<ad::Var<T>> tsims;
            tsims.reserve(tf.sims.size());
            for (const auto& sim : tf.sims) tsims.push_back(ad::constant(sim->value));
            terms.sim = sim_kd(fw.sims, tsims,
                               kd_layer_set(cfg.kd_policy, cfg.backbone.num_layers));
        }
        if (w.eta_feat != 0)
            terms.feat = feat_kd(fw.tokens, ad::constant(tf.tokens->value));
        if (w.eta_res != 0) terms.res = res_kd(fw.response.score, tf.response.score->value, hp);
    }

    ad::Var<T> total;
    try {
        total = total_loss(terms, w);
    } catch (const NonFinite& e) {
        throw NonFiniteLoss(e.what());
    }
    if (!std::isfinite(scalar_of(total)))
        throw NonFiniteLoss("training loss became non-finite");

    StepStats st;
    st.focal = scalar_of(terms.focal);
    st.l1 = scalar_of(terms.l1);
    st.giou = scalar_of(terms.giou);
    st.sim = terms.sim ? scalar_of(terms.sim) : 0.0;
    st.feat = terms.feat ? scalar_of(terms.feat) : 0.0;
    st.res = terms.res ? scalar_of(terms.res) : 0.0;
    st.total = scalar_of(total);
    return {total, st};
}

template <typename T>
TrainResult<T> run_training(TrackerNet<T> net, TrackerNet<T>* teacher,
                            const std::vector<SequenceData>& data,
                            const TrainConfig& cfg, std::ostream* log,
                            const EpochCallback<T>& on_epoch = {}) {
    cfg.validate();
    if (data.empty()) throw InvalidSpec("training requires at least one sequence");
    if (teacher) {
        if (!teacher->two_view)
            throw MissingView("distillation requires a two-view teacher");
        if (teacher->cfg.embed_dim != cfg.backbone.embed_dim ||
            teacher->cfg.num_layers != cfg.backbone.num_layers ||
            teacher->cfg.patch_size != cfg.backbone.patch_size ||
            teacher->cfg.template_size != cfg.backbone.template_size ||
            teacher->cfg.search_size != cfg.backbone.search_size)
            throw ConfigMismatch("teacher and student geometry must agree");
        teacher->params.freeze();
    }

    AdamWConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.weight_decay = cfg.weight_decay;
    ocfg.max_grad_norm = cfg.max_grad_norm;
    AdamW<T> opt(net.params, ocfg);

    Rng rng(cfg.seed);
    const bool needs_two_view =
        (cfg.stage == Stage::Teacher && net.two_view) || teacher != nullptr;

    TrainResult<T> result{std::move(net), {}, 0, ""};
    std::uint64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        StepStats epoch_sum;
        int epoch_steps = 0;
        StepStats batch_sum;
        int in_batch = 0;
        result.net.params.zero_grads();

        auto flush = [&]() {
            if (in_batch == 0) return;
            opt.step(result.net.params);
            result.net.params.zero_grads();
            const StepStats mean = batch_sum.scaled(1.0 / in_batch);
            log_step(log, ++step, mean);
            epoch_sum += mean;
            ++epoch_steps;
            batch_sum = {};
            in_batch = 0;
        };

        for (const SequenceData& seq : data)
            for (int k = 0; k < cfg.pairs_per_sequence; ++k) {
                std::optional<TrainSample> s = sample_pair(seq, cfg, needs_two_view, rng);
                if (!s) continue;
                auto [loss, stats] = sample_loss(result.net, teacher, *s, cfg);
                ad::backward(ad::scale(loss, static_cast<T>(1.0 / cfg.batch_size)));
                batch_sum += stats;
                if (++in_batch == cfg.batch_size) flush();
            }
        flush(); // partial tail batch still updates

        EpochStats es;
        es.steps = epoch_steps;
        es.mean = epoch_steps > 0 ? epoch_sum.scaled(1.0 / epoch_steps) : StepStats{};
        result.epochs.push_back(es);
        if (on_epoch && !on_epoch(epoch, result.net, es)) break;
    }
    result.optimizer_steps = opt.t;
    result.rng_state = rng.save_state();
    return result;
}

} // namespace train_detail

// ---------------------------------------------------------------------------
// Stage entry points

template <typename T = float>
TrainResult<T> train_teacher(const std::vector<SequenceData>& data,
                             const TrainConfig& cfg, std::ostream* log = nullptr,
                             const EpochCallback<T>& on_epoch = {}) {
    if (cfg.stage != Stage::Teacher)
        throw ConfigError("train_teacher requires stage=teacher");
    TrackerNet<T> net = TrackerNet<T>::make(cfg.backbone, true, cfg.seed);
    return train_detail::run_training(std::move(net), static_cast<TrackerNet<T>*>(nullptr),
                                      data, cfg, log, on_epoch);
}

template <typename T = float>
TrainResult<T> distill_student(const std::vector<SequenceData>& data,
                               TrackerNet<T>& teacher, const TrainConfig& cfg,
                               std::ostream* log = nullptr,
                               const EpochCallback<T>& on_epoch = {}) {
    if (cfg.stage != Stage::Student)
        throw ConfigError("distill_student requires stage=student");
    TrackerNet<T> net = TrackerNet<T>::make(cfg.backbone, false, cfg.seed);
    const bool any_kd = cfg.weights.eta_sim != 0 || cfg.weights.eta_feat != 0 ||
                        cfg.weights.eta_res != 0;
    return train_detail::run_training(std::move(net), any_kd ? &teacher : nullptr, data,
                                      cfg, log, on_epoch);
}

// ---------------------------------------------------------------------------
// Checkpoint plumbing

template <typename T>
void save_tracker(const std::string& path, const TrackerNet<T>& net,
                  const TrainConfig& cfg, int epoch, const AdamW<T>* opt = nullptr,
                  const std::string& rng_state = "") {
    nlohmann::json meta;
    meta["stage"] = stage_name(cfg.stage);
    meta["epoch"] = epoch;
    meta["seed"] = cfg.seed;
    meta["two_view"] = net.two_view;
    meta["backbone"] = to_json(net.cfg);
    meta["train"] = to_json(cfg);
    meta["rng_state"] = rng_state;
    ckpt::save(path, net.params, meta, opt);
}

template <typename T>
struct LoadedTracker {
    TrackerNet<T> net;
    nlohmann::json meta;
};

template <typename T = float>
LoadedTracker<T> load_tracker(const std::string& path) {
    ckpt::Loaded<T> loaded = ckpt::load<T>(path);
    if (!loaded.meta.contains("backbone"))
        throw ConfigMismatch("checkpoint lacks a backbone config echo");
    const BackboneConfig bc = backbone_from_json(loaded.meta.at("backbone"));
    const bool two_view = loaded.meta.value("two_view", false);
    LoadedTracker<T> out{TrackerNet<T>::make(bc, two_view, 0), loaded.meta};
    ckpt::apply(loaded, out.net.params);
    return out;
}

} // namespace evkd
