#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "evkd/autodiff.hpp"
#include "evkd/head.hpp"
#include "evkd/params.hpp"
#include "evkd/patch.hpp"
#include "evkd/rng.hpp"

namespace evkd {

struct BackboneConfig {
    int patch_size = 16;
    int embed_dim = 64;
    int num_layers = 12;
    int num_heads = 4;
    int template_size = 128;
    int search_size = 256;
    int in_channels = 3;
    int mlp_ratio = 4;
    double ln_eps = 1e-5;

    int template_tokens() const {
        const int side = template_size / patch_size;
        return side * side;
    }
    int search_tokens() const {
        const int side = search_size / patch_size;
        return side * side;
    }
    int student_tokens() const { return template_tokens() + search_tokens(); }
    int grid_side() const { return search_size / patch_size; }

    void validate() const {
        if (patch_size <= 0 || embed_dim <= 0 || num_layers <= 0 || num_heads <= 0)
            throw ConfigError("backbone dimensions must be positive");
        if (embed_dim % num_heads != 0)
            throw ConfigError("embed_dim must be divisible by num_heads");
        if (template_size % patch_size != 0 || search_size % patch_size != 0)
            throw ConfigError("patch size must divide template and search sizes");
    }
};

/// One network forward: final tokens, the per-layer head-averaged attention
/// maps, and the head response.
template <typename T>
struct ForwardResult {
    ad::Var<T> tokens;
    std::vector<ad::Var<T>> sims;
    ResponseMap<T> response;
};

namespace detail {

template <typename T>
Tensor<T> patch_to_rows(const Patch& patch, int patch_size, int in_channels) {
    const auto& img = patch.pixels;
    if (img.width != img.height || img.width % patch_size != 0)
        throw BadPatchSize("patch side " + std::to_string(img.width) +
                           " not divisible by " + std::to_string(patch_size));
    if (img.channels != in_channels)
        throw BadPatchSize("patch has " + std::to_string(img.channels) +
                           " channels, backbone expects " + std::to_string(in_channels));
    const int side = img.width / patch_size;
    const int flat = in_channels * patch_size * patch_size;
    Tensor<T> rows({side * side, flat});
    for (int py = 0; py < side; ++py)
        for (int px = 0; px < side; ++px) {
            T* dst = rows.v.data() +
                     static_cast<std::size_t>(py * side + px) * flat;
            for (int c = 0; c < in_channels; ++c)
                for (int y = 0; y < patch_size; ++y)
                    for (int x = 0; x < patch_size; ++x)
                        *dst++ = static_cast<T>(
                            img.at(c, py * patch_size + y, px * patch_size + x));
        }
    return rows;
}

} // namespace detail

template <typename T>
void register_embed_params(ParamStore<T>& ps, const std::string& prefix,
                           const BackboneConfig& cfg, Rng& rng) {
    const int flat = cfg.in_channels * cfg.patch_size * cfg.patch_size;
    ps.add(prefix + "proj.w", trunc_normal_init<T>({flat, cfg.embed_dim}, 0.02, rng));
    ps.add(prefix + "proj.b", Tensor<T>::zeros({1, cfg.embed_dim}));
    ps.add(prefix + "pos.template",
           trunc_normal_init<T>({cfg.template_tokens(), cfg.embed_dim}, 0.02, rng));
    ps.add(prefix + "pos.search",
           trunc_normal_init<T>({cfg.search_tokens(), cfg.embed_dim}, 0.02, rng));
    ps.add(prefix + "role.template",
           trunc_normal_init<T>({1, cfg.embed_dim}, 0.02, rng));
    ps.add(prefix + "role.search",
           trunc_normal_init<T>({1, cfg.embed_dim}, 0.02, rng));
}

template <typename T>
void register_layer_params(ParamStore<T>& ps, const std::string& prefix,
                           const BackboneConfig& cfg, Rng& rng) {
    const int d = cfg.embed_dim;
    const int hidden = cfg.mlp_ratio * d;
    ps.add(prefix + "ln1.g", Tensor<T>::full({1, d}, T{1}));
    ps.add(prefix + "ln1.b", Tensor<T>::zeros({1, d}));
    for (const char* w : {"wq", "wk", "wv", "wo"})
        ps.add(prefix + w, trunc_normal_init<T>({d, d}, 0.02, rng));
    for (const char* b : {"bq", "bk", "bv", "bo"})
        ps.add(prefix + b, Tensor<T>::zeros({1, d}));
    ps.add(prefix + "ln2.g", Tensor<T>::full({1, d}, T{1}));
    ps.add(prefix + "ln2.b", Tensor<T>::zeros({1, d}));
    ps.add(prefix + "mlp.w1", trunc_normal_init<T>({d, hidden}, 0.02, rng));
    ps.add(prefix + "mlp.b1", Tensor<T>::zeros({1, hidden}));
    ps.add(prefix + "mlp.w2", trunc_normal_init<T>({hidden, d}, 0.02, rng));
    ps.add(prefix + "mlp.b2", Tensor<T>::zeros({1, d}));
}

/// Token embedding for one patch: linear projection of flattened 16x16
/// blocks, plus learned positional and role embeddings.
template <typename T>
ad::Var<T> embed(const Patch& patch, PatchRole role, ParamStore<T>& ps,
                 const std::string& prefix, const BackboneConfig& cfg) {
    Tensor<T> rows = detail::patch_to_rows<T>(patch, cfg.patch_size, cfg.in_channels);
    const char* which = role == PatchRole::Template ? "template" : "search";
    const int want = role == PatchRole::Template ? cfg.template_tokens()
                                                 : cfg.search_tokens();
    if (rows.rows() != want)
        throw BadPatchSize("patch yields " + std::to_string(rows.rows()) +
                           " tokens, role expects " + std::to_string(want));
    auto x = ad::add_rowvec(ad::matmul(ad::constant(std::move(rows)),
                                       ps.get(prefix + "proj.w")),
                            ps.get(prefix + "proj.b"));
    x = ad::add(x, ps.get(prefix + std::string("pos.") + which));
    return ad::add_rowvec(x, ps.get(prefix + std::string("role.") + which));
}

/// Pre-norm Transformer block. Returns the new tokens and the head-averaged
/// post-softmax attention matrix.
template <typename T>
std::pair<ad::Var<T>, ad::Var<T>> transformer_layer(ad::Var<T> x, ParamStore<T>& ps,
                                                    const std::string& prefix,
                                                    const BackboneConfig& cfg) {
    const int n = x->value.rows();
    const int d = cfg.embed_dim;
    if (x->value.cols() != d)
        throw ShapeMismatch("layer expects token dim " + std::to_string(d) +
                            ", got " + x->value.shape_string());
    const int heads = cfg.num_heads;
    const int dh = d / heads;
    const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    auto ln = [&](ad::Var<T> t, const std::string& name) {
        return ad::add_rowvec(ad::mul_rowvec(ad::layer_norm(t, static_cast<T>(cfg.ln_eps)),
                                             ps.get(prefix + name + ".g")),
                              ps.get(prefix + name + ".b"));
    };

    auto xn = ln(x, "ln1");
    auto q = ad::add_rowvec(ad::matmul(xn, ps.get(prefix + "wq")), ps.get(prefix + "bq"));
    auto k = ad::add_rowvec(ad::matmul(xn, ps.get(prefix + "wk")), ps.get(prefix + "bk"));
    auto v = ad::add_rowvec(ad::matmul(xn, ps.get(prefix + "wv")), ps.get(prefix + "bv"));

    ad::Var<T> heads_out;
    ad::Var<T> sim_sum;
    for (int h = 0; h < heads; ++h) {
        auto qh = ad::slice(q, 0, n, h * dh, (h + 1) * dh);
        auto kh = ad::slice(k, 0, n, h * dh, (h + 1) * dh);
        auto vh = ad::slice(v, 0, n, h * dh, (h + 1) * dh);
        ad::Var<T> attn;
        {
            ad::AttentionScope scope;
            auto logits = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dh);
            attn = ad::row_softmax(logits);
            auto oh = ad::matmul(attn, vh);
            heads_out = h == 0 ? oh : ad::concat_cols(heads_out, oh);
        }
        sim_sum = h == 0 ? attn : ad::add(sim_sum, attn);
    }
    auto sim = ad::scale(sim_sum, static_cast<T>(1.0 / heads));

    auto attn_out = ad::add_rowvec(ad::matmul(heads_out, ps.get(prefix + "wo")),
                                   ps.get(prefix + "bo"));
    x = ad::add(x, attn_out);

    auto yn = ln(x, "ln2");
    auto hdn = ad::gelu(ad::add_rowvec(ad::matmul(yn, ps.get(prefix + "mlp.w1")),
                                       ps.get(prefix + "mlp.b1")));
    auto mlp_out = ad::add_rowvec(ad::matmul(hdn, ps.get(prefix + "mlp.w2")),
                                  ps.get(prefix + "mlp.b2"));
    x = ad::add(x, mlp_out);
    return {x, sim};
}

/// Repeat a student token sequence along rows to teacher length.
template <typename T>
ad::Var<T> align_repeat_tokens(ad::Var<T> student_tokens) {
    return ad::concat_rows(student_tokens, student_tokens);
}

/// Tile a student similarity matrix 2x2 to teacher shape.
template <typename T>
ad::Var<T> align_repeat_sim(ad::Var<T> student_sim) {
    if (student_sim->value.rows() != student_sim->value.cols())
        throw ShapeMismatch("similarity must be square, got " +
                            student_sim->value.shape_string());
    auto wide = ad::concat_cols(student_sim, student_sim);
    return ad::concat_rows(wide, wide);
}

/// One-stream tracker. The student embeds a single event view (320 tokens);
/// the teacher embeds two views through separate projections (640 tokens)
/// and averages the two search-token blocks before the shared head.
template <typename T>
struct TrackerNet {
    BackboneConfig cfg;
    bool two_view = false;
    ParamStore<T> params;

    static TrackerNet make(const BackboneConfig& config, bool two_view,
                           std::uint64_t seed) {
        config.validate();
        TrackerNet net;
        net.cfg = config;
        net.two_view = two_view;
        Rng rng(seed);
        register_embed_params(net.params, "embed_a.", config, rng);
        if (two_view) register_embed_params(net.params, "embed_b.", config, rng);
        for (int l = 0; l < config.num_layers; ++l)
            register_layer_params(net.params, "layer." + std::to_string(l) + ".",
                                  config, rng);
        net.params.add("final_ln.g", Tensor<T>::full({1, config.embed_dim}, T{1}));
        net.params.add("final_ln.b", Tensor<T>::zeros({1, config.embed_dim}));
        register_head_params(net.params, "head.", config.embed_dim, rng);
        return net;
    }

    ForwardResult<T> forward_student(const Patch& tmpl, const Patch& search) {
        auto t = embed(tmpl, PatchRole::Template, params, "embed_a.", cfg);
        auto s = embed(search, PatchRole::Search, params, "embed_a.", cfg);
        return run_body(ad::concat_rows(t, s), false);
    }

    ForwardResult<T> forward_teacher(const Patch& tmpl_a, const Patch& search_a,
                                     const Patch& tmpl_b, const Patch& search_b) {
        if (!two_view)
            throw MissingView("teacher forward requires a two-view network");
        auto ta = embed(tmpl_a, PatchRole::Template, params, "embed_a.", cfg);
        auto sa = embed(search_a, PatchRole::Search, params, "embed_a.", cfg);
        auto tb = embed(tmpl_b, PatchRole::Template, params, "embed_b.", cfg);
        auto sb = embed(search_b, PatchRole::Search, params, "embed_b.", cfg);
        auto x = ad::concat_rows(ad::concat_rows(ta, sa), ad::concat_rows(tb, sb));
        return run_body(x, true);
    }

private:
    ForwardResult<T> run_body(ad::Var<T> x, bool fused_head) {
        ForwardResult<T> out;
        out.sims.reserve(static_cast<std::size_t>(cfg.num_layers));
        for (int l = 0; l < cfg.num_layers; ++l) {
            auto [nx, sim] = transformer_layer(x, params, "layer." + std::to_string(l) + ".",
                                               cfg);
            x = nx;
            out.sims.push_back(sim);
        }
        x = ad::add_rowvec(ad::mul_rowvec(ad::layer_norm(x, static_cast<T>(cfg.ln_eps)),
                                          params.get("final_ln.g")),
                           params.get("final_ln.b"));
        out.tokens = x;

        const int tt = cfg.template_tokens();
        const int st = cfg.search_tokens();
        const int d = cfg.embed_dim;
        ad::Var<T> search_tokens;
        if (!fused_head) {
            search_tokens = ad::slice(x, tt, tt + st, 0, d);
        } else {
            auto sa = ad::slice(x, tt, tt + st, 0, d);
            auto sb = ad::slice(x, 2 * tt + st, 2 * (tt + st), 0, d);
            search_tokens = ad::scale(ad::add(sa, sb), static_cast<T>(0.5));
        }
        out.response = head_forward(search_tokens, params, "head.", cfg.grid_side());
        return out;
    }
};

} // namespace evkd
