#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "evkd/errors.hpp"
#include "evkd/events.hpp"
#include "evkd/geometry.hpp"
#include "evkd/repr.hpp"
#include "evkd/rng.hpp"

namespace evkd {

// ---------------------------------------------------------------------------
// Challenge attributes

enum class Attribute {
    CM,  // abrupt camera motion
    MOC, // mild occlusion
    HOC, // heavy occlusion
    FOC, // full occlusion
    DEF, // deformable target
    LI,  // low illumination
    OV,  // target leaves the view
    SV,  // scale variation
    BC,  // background clutter
    FM,  // fast motion
    NMO, // no motion interval
    BOM, // background object motion
    SIO, // similar interfering object
    ST,  // small target
};

inline constexpr int kAttributeCount = 14;

inline constexpr std::array<const char*, kAttributeCount> kAttributeNames = {
    "CM", "MOC", "HOC", "FOC", "DEF", "LI", "OV",
    "SV", "BC",  "FM",  "NMO", "BOM", "SIO", "ST"};

inline const char* attribute_name(Attribute a) {
    return kAttributeNames[static_cast<std::size_t>(a)];
}

inline Attribute attribute_from_name(const std::string& name) {
    for (int i = 0; i < kAttributeCount; ++i)
        if (name == kAttributeNames[static_cast<std::size_t>(i)])
            return static_cast<Attribute>(i);
    throw UnknownTag("unknown attribute tag: " + name);
}

// ---------------------------------------------------------------------------
// Scene specification

enum class ObjectShape { Disc, Rectangle, Ring };
enum class TrajectoryKind { Linear, Sinusoid };

inline const char* shape_name(ObjectShape s) {
    switch (s) {
        case ObjectShape::Disc: return "disc";
        case ObjectShape::Rectangle: return "rectangle";
        default: return "ring";
    }
}

inline ObjectShape shape_from_name(const std::string& s) {
    if (s == "disc") return ObjectShape::Disc;
    if (s == "rectangle") return ObjectShape::Rectangle;
    if (s == "ring") return ObjectShape::Ring;
    throw InvalidSpec("unknown object shape: " + s);
}

inline const char* trajectory_name(TrajectoryKind t) {
    return t == TrajectoryKind::Linear ? "linear" : "sinusoid";
}

inline TrajectoryKind trajectory_from_name(const std::string& s) {
    if (s == "linear") return TrajectoryKind::Linear;
    if (s == "sinusoid") return TrajectoryKind::Sinusoid;
    throw InvalidSpec("unknown trajectory kind: " + s);
}

struct SceneSpec {
    int width = 256;
    int height = 256;
    int frames = 499;
    std::uint64_t frame_duration_us = 1000;
    int steps_per_frame = 10; // latent renders per frame interval
    ObjectShape shape = ObjectShape::Disc;
    TrajectoryKind trajectory = TrajectoryKind::Linear;
    double size_px = 36.0;            // nominal target box side
    double speed_px_per_frame = 2.0;  // path speed before attribute overrides
    double contrast_threshold = 0.3;  // theta_c, log-intensity units
    double noise_rate = 0.05;         // background events / pixel / second
    std::vector<Attribute> attributes;

    std::uint64_t duration_us() const {
        return static_cast<std::uint64_t>(frames) * frame_duration_us;
    }

    bool has(Attribute a) const {
        return std::find(attributes.begin(), attributes.end(), a) != attributes.end();
    }

    void validate() const {
        if (width < 32 || height < 32)
            throw InvalidSpec("scene resolution must be at least 32x32");
        if (frames < 2) throw InvalidSpec("a sequence needs at least 2 frames");
        if (frame_duration_us == 0) throw InvalidSpec("frame duration must be positive");
        if (steps_per_frame < 10)
            throw InvalidSpec("latent rendering must run at >= 10x the frame rate");
        if (size_px < 4.0 || size_px > 0.5 * std::min(width, height))
            throw InvalidSpec("target size must be in [4, min(W,H)/2] pixels");
        if (speed_px_per_frame < 0) throw InvalidSpec("speed must be non-negative");
        if (contrast_threshold <= 0)
            throw InvalidSpec("contrast threshold must be positive");
        if (noise_rate < 0) throw InvalidSpec("noise rate must be non-negative");
    }
};

struct GeneratedSequence {
    SceneSpec spec;
    std::uint64_t seed = 0;
    EventStream events;
    std::vector<BBox> boxes;                       // one per frame; absent = all zero
    std::vector<std::vector<Attribute>> frame_tags;
};

// ---------------------------------------------------------------------------
// Internal scene model

namespace synth_detail {

constexpr double kTwoPi = 6.283185307179586477;
constexpr double kIntensityEps = 0.05; // keeps log() away from -inf at I = 0
constexpr double kBackground = 0.30;

struct Vec2 {
    double x = 0, y = 0;
};

struct Path {
    TrajectoryKind kind = TrajectoryKind::Linear;
    Vec2 a, b;                 // linear shuttle endpoints
    Vec2 center;               // sinusoid ellipse center
    double rx = 0, ry = 0;     // ellipse radii
    double phase = 0;
    double travels = 0;        // one-way traversals (linear) or full loops
    bool hold = false;         // NMO: freeze motion mid-sequence
    static constexpr double kHoldLo = 0.35, kHoldHi = 0.65;

    // Remaps normalized time so the held interval contributes no motion while
    // the full path is still covered by s = 1.
    double warp(double s) const {
        if (!hold) return s;
        double m = s < kHoldLo ? s : (s < kHoldHi ? kHoldLo : s - (kHoldHi - kHoldLo));
        return m / (1.0 - (kHoldHi - kHoldLo));
    }

    Vec2 at(double s) const {
        const double u = warp(std::clamp(s, 0.0, 1.0));
        if (kind == TrajectoryKind::Linear) {
            const double q = u * travels;
            const double k = std::floor(q);
            const double f = q - k;
            const bool forward = static_cast<long long>(k) % 2 == 0;
            const double w = forward ? f : 1.0 - f;
            return {a.x + (b.x - a.x) * w, a.y + (b.y - a.y) * w};
        }
        const double ang = kTwoPi * travels * u + phase;
        return {center.x + rx * std::cos(ang), center.y + ry * std::sin(ang)};
    }
};

struct DrawState {
    Vec2 c;
    double hw = 0, hh = 0;
    double brightness = 0;

    bool operator==(const DrawState& o) const {
        return c.x == o.c.x && c.y == o.c.y && hw == o.hw && hh == o.hh &&
               brightness == o.brightness;
    }
};

struct Drawable {
    ObjectShape shape = ObjectShape::Disc;
    double intensity = 0.9;
    Path path;
    double w0 = 30, h0 = 30;        // base box extents
    double scale0 = 1, scale1 = 1;  // SV: linear scale ramp over the sequence
    double wobble = 0;              // DEF: anisotropic extent modulation
    double flicker_amp = 0;         // BC blobs: brightness modulation
    double flicker_freq = 0;
    double flicker_phase = 0;
    bool jittered = false;          // CM: camera shake applies

    DrawState state(double s, Vec2 jitter) const {
        DrawState st;
        st.c = path.at(s);
        if (jittered) {
            st.c.x += jitter.x;
            st.c.y += jitter.y;
        }
        const double k = scale0 + (scale1 - scale0) * s;
        const double wob = wobble == 0 ? 0.0 : wobble * std::sin(kTwoPi * 5.0 * s);
        st.hw = 0.5 * w0 * k * (1.0 + wob);
        st.hh = 0.5 * h0 * k * (1.0 - wob);
        st.brightness =
            flicker_amp == 0
                ? intensity
                : intensity * (1.0 + flicker_amp *
                                         std::sin(kTwoPi * (flicker_freq * s + flicker_phase)));
        return st;
    }

    bool contains(const DrawState& st, double px, double py) const {
        const double dx = (px - st.c.x) / st.hw;
        const double dy = (py - st.c.y) / st.hh;
        switch (shape) {
            case ObjectShape::Disc: return dx * dx + dy * dy <= 1.0;
            case ObjectShape::Rectangle:
                return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
            default: {
                const double r2 = dx * dx + dy * dy;
                return r2 <= 1.0 && r2 >= 0.36; // inner radius 0.6
            }
        }
    }
};

inline BBox state_box(const DrawState& st) {
    return {st.c.x - st.hw, st.c.y - st.hh, 2 * st.hw, 2 * st.hh};
}

struct Scene {
    SceneSpec spec;
    Drawable target;
    std::vector<Drawable> extras; // drawn below the target, in order
    bool has_occluder = false;
    double occ_cx = 0, occ_half_w = 0; // full-height vertical bar
    double occ_intensity = 0.55;
    double li_scale = 1.0;             // LI compresses contrast toward background
    Vec2 jitter_amp;
    double jfx = 0, jfy = 0, jphase = 0;

    Vec2 jitter(double s) const {
        if (jitter_amp.x == 0 && jitter_amp.y == 0) return {};
        return {jitter_amp.x * std::sin(kTwoPi * (jfx * s + jphase)),
                jitter_amp.y * std::sin(kTwoPi * (jfy * s + 0.25 + jphase))};
    }
};

inline double ellipse_perimeter(double rx, double ry) {
    // Ramanujan's approximation; plenty for speed calibration.
    return 3.14159265358979323846 *
           (3.0 * (rx + ry) - std::sqrt((3.0 * rx + ry) * (rx + 3.0 * ry)));
}

inline Scene build_scene(const SceneSpec& spec, Rng& rng) {
    Scene sc;
    sc.spec = spec;
    const double W = spec.width, H = spec.height;

    double size = spec.size_px;
    if (spec.has(Attribute::ST))
        size = std::min(size, std::floor(std::sqrt(0.0045 * W * H)));
    double speed = spec.speed_px_per_frame;
    if (spec.has(Attribute::FM)) speed = std::max(speed, 4.5);

    const double smax = (spec.has(Attribute::SV) ? 1.55 : 1.0) *
                        (spec.has(Attribute::DEF) ? 1.25 : 1.0);
    const double margin = 0.75 * size * smax + 8.0;

    Drawable& tgt = sc.target;
    tgt.shape = spec.shape;
    tgt.intensity = 0.92;
    tgt.w0 = size;
    tgt.h0 = spec.shape == ObjectShape::Rectangle ? 0.75 * size : size;
    tgt.path.kind = spec.trajectory;
    if (spec.trajectory == TrajectoryKind::Linear) {
        tgt.path.a = {margin + rng.uniform(0.0, 0.08 * W),
                      margin + rng.uniform(0.0, 0.08 * H)};
        tgt.path.b = {W - margin - rng.uniform(0.0, 0.08 * W),
                      H - margin - rng.uniform(0.0, 0.08 * H)};
        if (spec.has(Attribute::OV)) tgt.path.b.x = W + 1.6 * size;
        const double dx = tgt.path.b.x - tgt.path.a.x;
        const double dy = tgt.path.b.y - tgt.path.a.y;
        const double len = std::max(1.0, std::hypot(dx, dy));
        tgt.path.travels = speed * spec.frames / len;
        // the exit must actually be reached, then the target swings back in
        if (spec.has(Attribute::OV))
            tgt.path.travels = std::max(tgt.path.travels, 1.3);
    } else {
        tgt.path.center = {W / 2 + rng.uniform(-6.0, 6.0), H / 2 + rng.uniform(-6.0, 6.0)};
        tgt.path.rx = W / 2 - margin;
        tgt.path.ry = 0.8 * (H / 2 - margin);
        tgt.path.phase = rng.uniform(0.0, kTwoPi);
        if (spec.has(Attribute::OV)) {
            tgt.path.rx = W / 2 + size;
            tgt.path.phase = 0.25 * kTwoPi; // start at x-center, in view
        }
        const double perim =
            std::max(1.0, ellipse_perimeter(tgt.path.rx, tgt.path.ry));
        tgt.path.travels = speed * spec.frames / perim;
        if (spec.has(Attribute::OV)) tgt.path.travels = std::max(tgt.path.travels, 1.0);
    }
    if (spec.has(Attribute::SV)) {
        tgt.scale0 = 0.7;
        tgt.scale1 = 1.55;
    }
    if (spec.has(Attribute::DEF)) tgt.wobble = 0.22;
    if (spec.has(Attribute::NMO)) tgt.path.hold = true;

    if (spec.has(Attribute::CM)) {
        sc.jitter_amp = {5.0 + rng.uniform(0.0, 2.0), 4.0 + rng.uniform(0.0, 2.0)};
        sc.jfx = 9.0 + rng.uniform(0.0, 3.0);
        sc.jfy = 12.0 + rng.uniform(0.0, 3.0);
        sc.jphase = rng.uniform(0.0, 1.0);
        tgt.jittered = true;
        // Static landmarks make the shake observable away from the target.
        for (int i = 0; i < 6; ++i) {
            Drawable lm;
            lm.shape = ObjectShape::Disc;
            lm.intensity = 0.55;
            const double r = 4.0 + rng.uniform(0.0, 3.0);
            lm.w0 = lm.h0 = 2 * r;
            lm.path.a = lm.path.b = {rng.uniform(0.12 * W, 0.88 * W),
                                     rng.uniform(0.12 * H, 0.88 * H)};
            lm.jittered = true;
            sc.extras.push_back(lm);
        }
    }

    if (spec.has(Attribute::BC)) {
        for (int i = 0; i < 10; ++i) {
            Drawable blob;
            blob.shape = ObjectShape::Disc;
            blob.intensity = 0.42;
            const double r = 4.0 + rng.uniform(0.0, 4.0);
            blob.w0 = blob.h0 = 2 * r;
            blob.path.a = blob.path.b = {rng.uniform(0.08 * W, 0.92 * W),
                                         rng.uniform(0.08 * H, 0.92 * H)};
            blob.flicker_amp = 0.35;
            blob.flicker_freq = 5.0 + rng.uniform(0.0, 4.0);
            blob.flicker_phase = rng.uniform(0.0, 1.0);
            blob.jittered = tgt.jittered;
            sc.extras.push_back(blob);
        }
    }

    const bool wants_distractor =
        spec.has(Attribute::BOM) || spec.has(Attribute::SIO);
    if (wants_distractor) {
        Drawable d;
        if (spec.has(Attribute::SIO)) {
            // A near-twin of the target mirrored across the horizontal axis.
            d.shape = tgt.shape;
            d.intensity = 0.88;
            d.w0 = tgt.w0;
            d.h0 = tgt.h0;
            d.path = tgt.path;
            d.path.hold = false;
            if (d.path.kind == TrajectoryKind::Linear) {
                d.path.a.y = H - d.path.a.y;
                d.path.b.y = H - d.path.b.y;
            } else {
                d.path.center.y = H - d.path.center.y;
                d.path.phase += 3.14159265358979323846;
            }
        } else {
            d.shape = tgt.shape == ObjectShape::Rectangle ? ObjectShape::Disc
                                                          : ObjectShape::Rectangle;
            d.intensity = 0.75;
            d.w0 = 1.25 * size;
            d.h0 = d.shape == ObjectShape::Rectangle ? 0.9 * size : 1.25 * size;
            d.path.kind = TrajectoryKind::Linear;
            const double y = 0.22 * H + rng.uniform(0.0, 0.06 * H);
            d.path.a = {margin, y};
            d.path.b = {W - margin, y};
            const double len = std::max(1.0, d.path.b.x - d.path.a.x);
            d.path.travels = 3.0 * spec.frames / len;
        }
        d.jittered = tgt.jittered;
        sc.extras.push_back(d);
    }

    const bool moc = spec.has(Attribute::MOC);
    const bool hoc = spec.has(Attribute::HOC);
    const bool foc = spec.has(Attribute::FOC);
    if (moc || hoc || foc) {
        sc.has_occluder = true;
        const double ref_w = size * (spec.has(Attribute::SV) ? 1.1 : 1.0);
        const double bar_w = foc ? 1.45 * ref_w : hoc ? 0.85 * ref_w : 0.38 * ref_w;
        sc.occ_half_w = 0.5 * bar_w;
        // Center the bar on a point the trajectory actually visits, but keep
        // it off the frame-0 target: tracking and templates initialize there.
        sc.occ_cx = std::clamp(tgt.path.at(0.45).x, 0.2 * W, 0.8 * W);
        const DrawState st0 = tgt.state(0.5 / spec.frames, {});
        const double clear = sc.occ_half_w + st0.hw + 6.0;
        if (std::abs(sc.occ_cx - st0.c.x) < clear)
            sc.occ_cx = st0.c.x + clear <= 0.8 * W ? st0.c.x + clear : st0.c.x - clear;
    }

    if (spec.has(Attribute::LI)) sc.li_scale = 0.3;
    return sc;
}

// Composited scene intensity at a pixel center. Later layers win: clutter and
// distractors sit under the target, the occluder covers everything.
inline double scene_intensity(const Scene& sc, double px, double py,
                              const DrawState& tgt_state,
                              const std::vector<DrawState>& extra_states,
                              double occ_cx) {
    double v = kBackground;
    for (std::size_t i = 0; i < sc.extras.size(); ++i)
        if (sc.extras[i].contains(extra_states[i], px, py))
            v = extra_states[i].brightness;
    if (sc.target.contains(tgt_state, px, py)) v = tgt_state.brightness;
    if (sc.has_occluder && std::abs(px - occ_cx) <= sc.occ_half_w)
        v = sc.occ_intensity;
    if (sc.li_scale != 1.0) v = kBackground + sc.li_scale * (v - kBackground);
    return v;
}

struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0; // half-open

    bool empty() const { return x1 <= x0 || y1 <= y0; }
};

inline PixelRect clamp_rect(const BBox& b, int w, int h, double pad) {
    PixelRect r;
    r.x0 = std::max(0, static_cast<int>(std::floor(b.x - pad)));
    r.y0 = std::max(0, static_cast<int>(std::floor(b.y - pad)));
    r.x1 = std::min(w, static_cast<int>(std::ceil(b.x + b.w + pad)) + 1);
    r.y1 = std::min(h, static_cast<int>(std::ceil(b.y + b.h + pad)) + 1);
    return r;
}

} // namespace synth_detail

// ---------------------------------------------------------------------------
// Generation

inline GeneratedSequence generate(const SceneSpec& spec, std::uint64_t seed) {
    using namespace synth_detail;
    spec.validate();

    Rng layout_rng(split_seed(seed, 0));
    Scene sc = build_scene(spec, layout_rng);

    const int W = spec.width, H = spec.height;
    const double T = static_cast<double>(spec.duration_us());
    const std::uint64_t last_t = spec.duration_us() - 1;
    const long steps = static_cast<long>(spec.frames) * spec.steps_per_frame;
    const double theta = spec.contrast_threshold;

    GeneratedSequence out;
    out.spec = spec;
    out.seed = seed;
    out.events.width = W;
    out.events.height = H;

    std::vector<double> l_ref(static_cast<std::size_t>(W) * H);
    std::vector<double> l_cur(static_cast<std::size_t>(W) * H);

    auto eval_state = [&](double s, DrawState& tgt, std::vector<DrawState>& extras,
                          double& occ_cx) {
        const Vec2 j = sc.jitter(s);
        tgt = sc.target.state(s, j);
        extras.resize(sc.extras.size());
        for (std::size_t i = 0; i < sc.extras.size(); ++i)
            extras[i] = sc.extras[i].state(s, j);
        occ_cx = sc.occ_cx + (sc.jitter_amp.x != 0 ? j.x : 0.0);
    };

    DrawState tgt_prev, tgt_cur;
    std::vector<DrawState> ext_prev, ext_cur;
    double occ_prev = 0, occ_cur = 0;
    eval_state(0.0, tgt_prev, ext_prev, occ_prev);

    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double v =
                scene_intensity(sc, x + 0.5, y + 0.5, tgt_prev, ext_prev, occ_prev);
            const double l = std::log(kIntensityEps + v);
            l_ref[static_cast<std::size_t>(y) * W + x] = l;
            l_cur[static_cast<std::size_t>(y) * W + x] = l;
        }

    auto emit_rect = [&](const PixelRect& r, double t_prev, double t_cur) {
        if (r.empty()) return;
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x) {
                const double v =
                    scene_intensity(sc, x + 0.5, y + 0.5, tgt_cur, ext_cur, occ_cur);
                const double l_new = std::log(kIntensityEps + v);
                const std::size_t idx = static_cast<std::size_t>(y) * W + x;
                const double from = l_cur[idx];
                if (l_new == from) continue;
                double& ref = l_ref[idx];
                const double denom = l_new - from;
                auto stamp = [&](double level) {
                    double f = std::clamp((level - from) / denom, 0.0, 1.0);
                    const double te = t_prev + f * (t_cur - t_prev);
                    return std::min(last_t, static_cast<std::uint64_t>(
                                                std::llround(std::max(0.0, te))));
                };
                while (l_new - ref >= theta) {
                    ref += theta;
                    out.events.events.push_back(
                        {stamp(ref), static_cast<std::uint16_t>(x),
                         static_cast<std::uint16_t>(y), +1});
                }
                while (ref - l_new >= theta) {
                    ref -= theta;
                    out.events.events.push_back(
                        {stamp(ref), static_cast<std::uint16_t>(x),
                         static_cast<std::uint16_t>(y), -1});
                }
                l_cur[idx] = l_new;
            }
    };

    for (long k = 1; k <= steps; ++k) {
        const double s_prev = static_cast<double>(k - 1) / steps;
        const double s_cur = static_cast<double>(k) / steps;
        const double t_prev = T * s_prev;
        const double t_cur = T * s_cur;
        eval_state(s_cur, tgt_cur, ext_cur, occ_cur);

        if (!(tgt_cur == tgt_prev)) {
            emit_rect(clamp_rect(state_box(tgt_prev), W, H, 2.0), t_prev, t_cur);
            emit_rect(clamp_rect(state_box(tgt_cur), W, H, 2.0), t_prev, t_cur);
        }
        for (std::size_t i = 0; i < sc.extras.size(); ++i)
            if (!(ext_cur[i] == ext_prev[i])) {
                emit_rect(clamp_rect(state_box(ext_prev[i]), W, H, 2.0), t_prev, t_cur);
                emit_rect(clamp_rect(state_box(ext_cur[i]), W, H, 2.0), t_prev, t_cur);
            }
        if (sc.has_occluder && occ_cur != occ_prev) {
            PixelRect bar;
            bar.x0 = std::max(
                0, static_cast<int>(std::floor(std::min(occ_prev, occ_cur) -
                                               sc.occ_half_w - 2.0)));
            bar.x1 = std::min(
                W, static_cast<int>(std::ceil(std::max(occ_prev, occ_cur) +
                                              sc.occ_half_w + 2.0)) + 1);
            bar.y0 = 0;
            bar.y1 = H;
            emit_rect(bar, t_prev, t_cur);
        }

        tgt_prev = tgt_cur;
        ext_prev = ext_cur;
        occ_prev = occ_cur;
    }

    Rng noise_rng(split_seed(seed, 1));
    const double area = static_cast<double>(W) * H;
    const double mean = spec.noise_rate * area * (T / 1e6);
    const std::uint64_t noise_count = noise_rng.poisson(mean);
    for (std::uint64_t i = 0; i < noise_count; ++i) {
        EventPoint e;
        e.t = noise_rng.uniform_index(spec.duration_us());
        e.x = static_cast<std::uint16_t>(noise_rng.uniform_index(W));
        e.y = static_cast<std::uint16_t>(noise_rng.uniform_index(H));
        e.p = noise_rng.coin() ? +1 : -1;
        out.events.events.push_back(e);
    }

    std::stable_sort(out.events.events.begin(), out.events.events.end(),
                     [](const EventPoint& a, const EventPoint& b) { return a.t < b.t; });

    // Ground truth at each frame window's midpoint, from the analytic state.
    out.boxes.resize(static_cast<std::size_t>(spec.frames));
    out.frame_tags.resize(static_cast<std::size_t>(spec.frames));
    const BBox frame_rect{0, 0, static_cast<double>(W), static_cast<double>(H)};
    for (int i = 0; i < spec.frames; ++i) {
        const TimeWindow win = frame_window(0, spec.duration_us(), spec.frames, i);
        const double s = (0.5 * (win.first + win.second)) / T;
        DrawState st;
        std::vector<DrawState> unused;
        double occ_cx = 0;
        eval_state(s, st, unused, occ_cx);
        BBox amodal = state_box(st);

        double coverage = 0.0;
        if (sc.has_occluder && amodal.w > 0) {
            const double lo = std::max(amodal.x, occ_cx - sc.occ_half_w);
            const double hi = std::min(amodal.x + amodal.w, occ_cx + sc.occ_half_w);
            coverage = std::max(0.0, hi - lo) / amodal.w;
        }

        BBox clipped;
        {
            const double x0 = std::max(amodal.x, frame_rect.x);
            const double y0 = std::max(amodal.y, frame_rect.y);
            const double x1 = std::min(amodal.x + amodal.w, frame_rect.w);
            const double y1 = std::min(amodal.y + amodal.h, frame_rect.h);
            if (x1 > x0 && y1 > y0) clipped = {x0, y0, x1 - x0, y1 - y0};
        }

        const bool out_of_view = clipped.absent();
        const bool fully_occluded = coverage >= 0.999;

        std::vector<Attribute>& tags = out.frame_tags[static_cast<std::size_t>(i)];
        for (int a = 0; a < kAttributeCount; ++a) {
            const Attribute attr = static_cast<Attribute>(a);
            if (!spec.has(attr)) continue;
            bool active = true;
            switch (attr) {
                case Attribute::MOC: active = coverage > 0.05 && coverage <= 0.5; break;
                case Attribute::HOC: active = coverage > 0.5 && coverage < 0.999; break;
                case Attribute::FOC: active = fully_occluded; break;
                case Attribute::OV: active = out_of_view; break;
                case Attribute::NMO:
                    active = s >= Path::kHoldLo && s < Path::kHoldHi;
                    break;
                default: break;
            }
            if (active) tags.push_back(attr);
        }

        out.boxes[static_cast<std::size_t>(i)] =
            (out_of_view || fully_occluded) ? BBox{} : clipped;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Suite planning

enum class SuitePreset { Smoke, Ablation };

inline const char* preset_name(SuitePreset p) {
    return p == SuitePreset::Smoke ? "smoke" : "ablation";
}

inline SuitePreset preset_from_name(const std::string& s) {
    if (s == "smoke") return SuitePreset::Smoke;
    if (s == "ablation") return SuitePreset::Ablation;
    throw InvalidSpec("unknown suite preset: " + s);
}

struct PlannedSequence {
    std::string name;
    std::string split; // train / val / test
    SceneSpec spec;
    std::uint64_t seed = 0;
};

inline std::vector<PlannedSequence> plan_suite(SuitePreset preset,
                                               std::uint64_t seed) {
    using A = Attribute;
    SceneSpec base;
    base.width = 256;
    base.height = 256;
    base.frames = 96;
    base.frame_duration_us = 1000;
    base.steps_per_frame = 10;
    base.size_px = 36.0;
    base.speed_px_per_frame = 2.2;
    base.contrast_threshold = 0.3;
    base.noise_rate = 0.05;

    struct Row {
        std::string split;
        std::vector<A> tags;
    };
    std::vector<Row> rows;
    if (preset == SuitePreset::Smoke) {
        rows = {{"train", {}},       {"train", {A::FM}}, {"train", {A::SV}},
                {"train", {A::DEF}}, {"train", {A::BC}}, {"val", {}},
                {"test", {A::FM}},   {"test", {}}};
    } else {
        // Each of the 14 attributes appears in at least two test rows; pairs
        // avoid combinations that would cancel each other (e.g. NMO with FM).
        const std::vector<std::vector<A>> test_rows = {
            {A::CM, A::BC},  {A::MOC, A::SV},  {A::HOC, A::FM},  {A::FOC},
            {A::DEF, A::LI}, {A::OV},          {A::SV, A::ST},   {A::BC, A::SIO},
            {A::FM, A::BOM}, {A::NMO, A::LI},  {A::BOM, A::CM},  {A::SIO, A::ST},
            {A::ST, A::MOC}, {A::FOC, A::DEF}, {A::OV, A::HOC},  {A::NMO, A::BOM}};
        for (int i = 0; i < 40; ++i)
            rows.push_back({"train", test_rows[static_cast<std::size_t>(i) % 16]});
        rows.push_back({"val", {}});
        rows.push_back({"val", {A::FM}});
        rows.push_back({"val", {A::BC}});
        rows.push_back({"val", {A::SV}});
        for (const auto& tags : test_rows) rows.push_back({"test", tags});
    }

    std::vector<PlannedSequence> plan;
    std::array<int, 3> counters{0, 0, 0};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        PlannedSequence p;
        p.split = rows[i].split;
        p.spec = base;
        p.spec.attributes = rows[i].tags;
        p.spec.shape = static_cast<ObjectShape>(i % 3);
        p.spec.trajectory = i % 2 == 0 ? TrajectoryKind::Linear : TrajectoryKind::Sinusoid;
        p.seed = split_seed(seed, i);
        int& n = counters[p.split == "train" ? 0 : p.split == "val" ? 1 : 2];
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%s_%03d", p.split.c_str(), n++);
        p.name = buf;
        plan.push_back(std::move(p));
    }
    return plan;
}

} // namespace evkd
