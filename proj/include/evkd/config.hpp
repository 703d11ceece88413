#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>

#include "json.hpp"

#include "evkd/backbone.hpp"
#include "evkd/errors.hpp"
#include "evkd/losses.hpp"

namespace evkd {

enum class Stage { Teacher, Student };

inline const char* stage_name(Stage s) {
    return s == Stage::Teacher ? "teacher" : "student";
}

inline Stage stage_from_name(const std::string& s) {
    if (s == "teacher") return Stage::Teacher;
    if (s == "student") return Stage::Student;
    throw ConfigError("unknown stage: " + s);
}

inline const char* kd_policy_name(KdLayerPolicy p) {
    return p == KdLayerPolicy::LastOnly ? "last" : "every_third";
}

inline KdLayerPolicy kd_policy_from_name(const std::string& s) {
    if (s == "last") return KdLayerPolicy::LastOnly;
    if (s == "every_third") return KdLayerPolicy::EveryThird;
    throw ConfigError("unknown kd layer policy: " + s);
}

struct TrainConfig {
    Stage stage = Stage::Teacher;
    BackboneConfig backbone = desk_backbone();
    double lr = 1e-4;
    double weight_decay = 1e-4;
    int batch_size = 8;
    int epochs = 50;
    std::uint64_t seed = 1;
    LossWeights weights;
    KdLayerPolicy kd_policy = KdLayerPolicy::LastOnly;
    std::string teacher_checkpoint; // student stage only
    int pairs_per_sequence = 4;
    int max_frame_gap = 50;
    double center_jitter = 0.10; // fraction of GT extent
    double scale_jitter = 0.05;
    double max_grad_norm = 0.0; // 0 disables clipping
    double template_context = 2.0;
    double search_context = 4.0;

    static BackboneConfig desk_backbone() {
        BackboneConfig c;
        c.num_layers = 4; // desk-scale default; deeper configs stay available
        return c;
    }

    void validate() const {
        backbone.validate();
        if (lr <= 0) throw ConfigError("learning rate must be positive");
        if (weight_decay < 0) throw ConfigError("weight decay must be non-negative");
        if (batch_size < 1) throw ConfigError("batch size must be at least 1");
        if (epochs < 0) throw ConfigError("epoch count must be non-negative");
        if (pairs_per_sequence < 1)
            throw ConfigError("pairs per sequence must be at least 1");
        if (max_frame_gap < 1) throw ConfigError("max frame gap must be at least 1");
        if (center_jitter < 0 || center_jitter > 0.4 || scale_jitter < 0 ||
            scale_jitter > 0.4)
            throw ConfigError("jitter fractions must lie in [0, 0.4]");
        if (max_grad_norm < 0) throw ConfigError("max grad norm must be non-negative");
        if (template_context <= 0 || search_context <= 0)
            throw ConfigError("context factors must be positive");
        if (stage == Stage::Student && teacher_checkpoint.empty())
            throw ConfigError("student stage requires a teacher checkpoint path");
    }
};

namespace cfgio {

inline void reject_unknown(const nlohmann::json& j,
                           std::initializer_list<const char*> allowed,
                           const char* context) {
    if (!j.is_object())
        throw ConfigError(std::string(context) + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
                return key == a;
            }) == allowed.end())
            throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
    }
}

} // namespace cfgio

inline nlohmann::json to_json(const BackboneConfig& c) {
    return {{"patch_size", c.patch_size},
            {"embed_dim", c.embed_dim},
            {"num_layers", c.num_layers},
            {"num_heads", c.num_heads},
            {"template_size", c.template_size},
            {"search_size", c.search_size},
            {"in_channels", c.in_channels},
            {"mlp_ratio", c.mlp_ratio},
            {"ln_eps", c.ln_eps}};
}

inline BackboneConfig backbone_from_json(const nlohmann::json& j,
                                         BackboneConfig base = BackboneConfig{}) {
    cfgio::reject_unknown(j,
                          {"patch_size", "embed_dim", "num_layers", "num_heads",
                           "template_size", "search_size", "in_channels", "mlp_ratio",
                           "ln_eps"},
                          "backbone");
    base.patch_size = j.value("patch_size", base.patch_size);
    base.embed_dim = j.value("embed_dim", base.embed_dim);
    base.num_layers = j.value("num_layers", base.num_layers);
    base.num_heads = j.value("num_heads", base.num_heads);
    base.template_size = j.value("template_size", base.template_size);
    base.search_size = j.value("search_size", base.search_size);
    base.in_channels = j.value("in_channels", base.in_channels);
    base.mlp_ratio = j.value("mlp_ratio", base.mlp_ratio);
    base.ln_eps = j.value("ln_eps", base.ln_eps);
    return base;
}

inline nlohmann::json to_json(const LossWeights& w) {
    return {{"lambda_focal", w.lambda_focal}, {"lambda_l1", w.lambda_l1},
            {"lambda_giou", w.lambda_giou},   {"eta_sim", w.eta_sim},
            {"eta_feat", w.eta_feat},         {"eta_res", w.eta_res}};
}

inline LossWeights weights_from_json(const nlohmann::json& j,
                                     LossWeights base = LossWeights{}) {
    cfgio::reject_unknown(j,
                          {"lambda_focal", "lambda_l1", "lambda_giou", "eta_sim",
                           "eta_feat", "eta_res"},
                          "weights");
    base.lambda_focal = j.value("lambda_focal", base.lambda_focal);
    base.lambda_l1 = j.value("lambda_l1", base.lambda_l1);
    base.lambda_giou = j.value("lambda_giou", base.lambda_giou);
    base.eta_sim = j.value("eta_sim", base.eta_sim);
    base.eta_feat = j.value("eta_feat", base.eta_feat);
    base.eta_res = j.value("eta_res", base.eta_res);
    return base;
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"stage", stage_name(c.stage)},
            {"backbone", to_json(c.backbone)},
            {"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"weights", to_json(c.weights)},
            {"kd_policy", kd_policy_name(c.kd_policy)},
            {"teacher_checkpoint", c.teacher_checkpoint},
            {"pairs_per_sequence", c.pairs_per_sequence},
            {"max_frame_gap", c.max_frame_gap},
            {"center_jitter", c.center_jitter},
            {"scale_jitter", c.scale_jitter},
            {"max_grad_norm", c.max_grad_norm},
            {"template_context", c.template_context},
            {"search_context", c.search_context}};
}

inline TrainConfig train_from_json(const nlohmann::json& j,
                                   TrainConfig base = TrainConfig{}) {
    cfgio::reject_unknown(
        j, {"stage", "backbone", "lr", "weight_decay", "batch_size", "epochs", "seed",
            "weights", "kd_policy", "teacher_checkpoint", "pairs_per_sequence",
            "max_frame_gap", "center_jitter", "scale_jitter", "max_grad_norm",
            "template_context", "search_context"},
        "train");
    if (j.contains("stage")) base.stage = stage_from_name(j.at("stage").get<std::string>());
    if (j.contains("backbone")) base.backbone = backbone_from_json(j.at("backbone"), base.backbone);
    base.lr = j.value("lr", base.lr);
    base.weight_decay = j.value("weight_decay", base.weight_decay);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.epochs = j.value("epochs", base.epochs);
    base.seed = j.value("seed", base.seed);
    if (j.contains("weights")) base.weights = weights_from_json(j.at("weights"), base.weights);
    if (j.contains("kd_policy"))
        base.kd_policy = kd_policy_from_name(j.at("kd_policy").get<std::string>());
    base.teacher_checkpoint = j.value("teacher_checkpoint", base.teacher_checkpoint);
    base.pairs_per_sequence = j.value("pairs_per_sequence", base.pairs_per_sequence);
    base.max_frame_gap = j.value("max_frame_gap", base.max_frame_gap);
    base.center_jitter = j.value("center_jitter", base.center_jitter);
    base.scale_jitter = j.value("scale_jitter", base.scale_jitter);
    base.max_grad_norm = j.value("max_grad_norm", base.max_grad_norm);
    base.template_context = j.value("template_context", base.template_context);
    base.search_context = j.value("search_context", base.search_context);
    return base;
}

// ---------------------------------------------------------------------------
// Top-level run configuration shared by all CLI subcommands. Flags override
// file values; the effective config is echoed into every output directory.

struct RunConfig {
    TrainConfig train;
    std::string preset = "smoke";
    std::uint64_t synth_seed = 7;
    std::string data_dir;
    std::string out_dir;
    std::string teacher_path;
    std::string ckpt_path;
    std::string results_dir;
    int threads = 1;
    bool deterministic = false;
};

inline nlohmann::json to_json(const RunConfig& c) {
    return {{"train", to_json(c.train)},
            {"synth", {{"preset", c.preset}, {"seed", c.synth_seed}}},
            {"paths",
             {{"data", c.data_dir},
              {"out", c.out_dir},
              {"teacher", c.teacher_path},
              {"checkpoint", c.ckpt_path},
              {"results", c.results_dir}}},
            {"threads", c.threads},
            {"deterministic", c.deterministic}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j,
                                      RunConfig base = RunConfig{}) {
    cfgio::reject_unknown(j, {"train", "synth", "paths", "threads", "deterministic"},
                          "config");
    if (j.contains("train")) base.train = train_from_json(j.at("train"), base.train);
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        cfgio::reject_unknown(s, {"preset", "seed"}, "synth");
        base.preset = s.value("preset", base.preset);
        base.synth_seed = s.value("seed", base.synth_seed);
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        cfgio::reject_unknown(p, {"data", "out", "teacher", "checkpoint", "results"},
                              "paths");
        base.data_dir = p.value("data", base.data_dir);
        base.out_dir = p.value("out", base.out_dir);
        base.teacher_path = p.value("teacher", base.teacher_path);
        base.ckpt_path = p.value("checkpoint", base.ckpt_path);
        base.results_dir = p.value("results", base.results_dir);
    }
    base.threads = j.value("threads", base.threads);
    base.deterministic = j.value("deterministic", base.deterministic);
    return base;
}

} // namespace evkd
