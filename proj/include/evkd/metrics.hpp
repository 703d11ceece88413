#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "evkd/errors.hpp"
#include "evkd/events.hpp"
#include "evkd/geometry.hpp"
#include "evkd/synth.hpp"
#include "evkd/track.hpp"

namespace evkd {

inline constexpr int kSuccessSteps = 21;   // IoU thresholds 0.00 .. 1.00
inline constexpr int kPrecisionSteps = 51; // CLE thresholds 0 .. 50 px
inline constexpr int kNprSteps = 51;       // normalized CLE 0.00 .. 0.50
inline constexpr int kPrecisionHeadlinePx = 20;

struct SequenceScore {
    std::string id;
    int counted = 0; // frames in the denominator (frame 0 and absent GT excluded)
    std::array<double, kSuccessSteps> success{};
    std::array<double, kPrecisionSteps> precision{};
    std::array<double, kNprSteps> norm_precision{};
    double sr = 0, pr = 0, npr = 0;
};

/// Per-sequence metrics. Frame 0 carries the initialization and is excluded,
/// as is every frame whose GT is the absent encoding.
inline SequenceScore score_sequence(const std::string& id,
                                    const std::vector<BBox>& pred,
                                    const std::vector<BBox>& gt) {
    if (pred.size() != gt.size())
        throw MissingAnnotation("sequence " + id + ": " + std::to_string(pred.size()) +
                                " predictions vs " + std::to_string(gt.size()) +
                                " annotations");
    SequenceScore s;
    s.id = id;
    for (std::size_t i = 1; i < gt.size(); ++i) {
        if (gt[i].absent()) continue;
        ++s.counted;
        const double v = iou(pred[i], gt[i]);
        const double cle = center_error(pred[i], gt[i]);
        const double ncle = normalized_center_error(pred[i], gt[i]);
        for (int k = 0; k < kSuccessSteps; ++k)
            if (v >= 0.05 * k) s.success[static_cast<std::size_t>(k)] += 1;
        for (int k = 0; k < kPrecisionSteps; ++k)
            if (cle <= k) s.precision[static_cast<std::size_t>(k)] += 1;
        for (int k = 0; k < kNprSteps; ++k)
            if (ncle <= 0.01 * k) s.norm_precision[static_cast<std::size_t>(k)] += 1;
    }
    if (s.counted > 0) {
        const double inv = 1.0 / s.counted;
        for (auto& v : s.success) v *= inv;
        for (auto& v : s.precision) v *= inv;
        for (auto& v : s.norm_precision) v *= inv;
        for (double v : s.success) s.sr += v;
        s.sr /= kSuccessSteps;
        s.pr = s.precision[kPrecisionHeadlinePx];
        for (double v : s.norm_precision) s.npr += v;
        s.npr /= kNprSteps;
    }
    return s;
}

struct AttributeRow {
    std::string tag;
    int sequences = 0;
    double sr = 0, pr = 0, npr = 0;
};

struct MetricReport {
    double sr = 0, pr = 0, npr = 0, fps = 0;
    std::array<double, kSuccessSteps> success_curve{};
    std::array<double, kPrecisionSteps> precision_curve{};
    std::array<double, kNprSteps> npr_curve{};
    std::vector<SequenceScore> per_sequence;
    std::vector<AttributeRow> per_attribute;
    std::vector<std::string> notes;
};

/// Sequence-averaged aggregation: every per-sequence value weighs equally,
/// regardless of length. Sequences with no counted frames are skipped with a
/// note rather than polluting the mean with zeros.
inline MetricReport aggregate_scores(const std::vector<SequenceScore>& scores) {
    MetricReport r;
    r.per_sequence = scores;
    int used = 0;
    for (const SequenceScore& s : scores) {
        if (s.counted == 0) {
            r.notes.push_back("sequence " + s.id + " has no scoreable frames; skipped");
            continue;
        }
        ++used;
        r.sr += s.sr;
        r.pr += s.pr;
        r.npr += s.npr;
        for (int k = 0; k < kSuccessSteps; ++k)
            r.success_curve[static_cast<std::size_t>(k)] +=
                s.success[static_cast<std::size_t>(k)];
        for (int k = 0; k < kPrecisionSteps; ++k)
            r.precision_curve[static_cast<std::size_t>(k)] +=
                s.precision[static_cast<std::size_t>(k)];
        for (int k = 0; k < kNprSteps; ++k)
            r.npr_curve[static_cast<std::size_t>(k)] +=
                s.norm_precision[static_cast<std::size_t>(k)];
    }
    if (used > 0) {
        const double inv = 1.0 / used;
        r.sr *= inv;
        r.pr *= inv;
        r.npr *= inv;
        for (auto& v : r.success_curve) v *= inv;
        for (auto& v : r.precision_curve) v *= inv;
        for (auto& v : r.npr_curve) v *= inv;
    }
    return r;
}

/// Per-attribute rows: aggregate recomputed over the subset of sequences
/// carrying each tag. Tags outside the 14-entry vocabulary are an error;
/// vocabulary tags with no sequences produce a note instead of a row.
inline std::vector<AttributeRow> attribute_breakdown(
    const std::vector<SequenceScore>& scores,
    const std::map<std::string, std::vector<std::string>>& tags_by_sequence,
    std::vector<std::string>* notes = nullptr) {
    for (const auto& [id, tags] : tags_by_sequence)
        for (const std::string& t : tags) attribute_from_name(t);

    std::vector<AttributeRow> rows;
    for (int a = 0; a < kAttributeCount; ++a) {
        const std::string tag = attribute_name(static_cast<Attribute>(a));
        std::vector<SequenceScore> subset;
        for (const SequenceScore& s : scores) {
            auto it = tags_by_sequence.find(s.id);
            if (it == tags_by_sequence.end()) continue;
            if (std::find(it->second.begin(), it->second.end(), tag) != it->second.end())
                subset.push_back(s);
        }
        if (subset.empty()) {
            if (notes) notes->push_back("attribute " + tag + ": no sequences; row omitted");
            continue;
        }
        const MetricReport sub = aggregate_scores(subset);
        rows.push_back({tag, static_cast<int>(subset.size()), sub.sr, sub.pr, sub.npr});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Report emission / parsing

inline nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json j;
    j["SR"] = r.sr;
    j["PR"] = r.pr;
    j["NPR"] = r.npr;
    j["FPS"] = r.fps;
    j["per_attribute"] = nlohmann::json::object();
    for (const AttributeRow& row : r.per_attribute)
        j["per_attribute"][row.tag] = {{"sequences", row.sequences},
                                       {"SR", row.sr},
                                       {"PR", row.pr},
                                       {"NPR", row.npr}};
    j["per_sequence"] = nlohmann::json::array();
    for (const SequenceScore& s : r.per_sequence)
        j["per_sequence"].push_back({{"id", s.id},
                                     {"frames", s.counted},
                                     {"SR", s.sr},
                                     {"PR", s.pr},
                                     {"NPR", s.npr}});
    j["notes"] = r.notes;
    return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.sr = j.at("SR").get<double>();
    r.pr = j.at("PR").get<double>();
    r.npr = j.at("NPR").get<double>();
    r.fps = j.at("FPS").get<double>();
    if (j.contains("per_attribute"))
        for (const auto& [tag, row] : j.at("per_attribute").items())
            r.per_attribute.push_back({tag, row.at("sequences").get<int>(),
                                       row.at("SR").get<double>(),
                                       row.at("PR").get<double>(),
                                       row.at("NPR").get<double>()});
    if (j.contains("per_sequence"))
        for (const auto& row : j.at("per_sequence")) {
            SequenceScore s;
            s.id = row.at("id").get<std::string>();
            s.counted = row.at("frames").get<int>();
            s.sr = row.at("SR").get<double>();
            s.pr = row.at("PR").get<double>();
            s.npr = row.at("NPR").get<double>();
            r.per_sequence.push_back(std::move(s));
        }
    if (j.contains("notes"))
        for (const auto& n : j.at("notes")) r.notes.push_back(n.get<std::string>());
    return r;
}

namespace metric_detail {

template <std::size_t N>
std::string curve_csv(const std::array<double, N>& curve, double step) {
    std::string out;
    char buf[64];
    for (std::size_t k = 0; k < N; ++k) {
        std::snprintf(buf, sizeof(buf), "%.2f,%.10g\n", step * static_cast<double>(k),
                      curve[k]);
        out += buf;
    }
    return out;
}

} // namespace metric_detail

inline void emit_report(const MetricReport& r, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_file((out_dir / "report.json").string(), to_json(r).dump(2) + "\n");

    std::string csv = "sequence,frames,SR,PR,NPR\n";
    char buf[200];
    for (const SequenceScore& s : r.per_sequence) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.10g,%.10g,%.10g\n", s.id.c_str(),
                      s.counted, s.sr, s.pr, s.npr);
        csv += buf;
    }
    write_file((out_dir / "per_sequence.csv").string(), csv);

    write_file((out_dir / "success_curve.csv").string(),
               metric_detail::curve_csv(r.success_curve, 0.05));
    write_file((out_dir / "precision_curve.csv").string(),
               metric_detail::curve_csv(r.precision_curve, 1.0));
    write_file((out_dir / "npr_curve.csv").string(),
               metric_detail::curve_csv(r.npr_curve, 0.01));
}

} // namespace evkd
