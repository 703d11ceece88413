#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "evkd/errors.hpp"
#include "evkd/events.hpp"
#include "evkd/geometry.hpp"
#include "evkd/image.hpp"
#include "evkd/repr.hpp"
#include "evkd/synth.hpp"

namespace evkd {

// ---------------------------------------------------------------------------
// Annotation format: one line per frame, "frame_idx,x,y,w,h" with the absent
// target written as "frame_idx,0,0,0,0".

inline std::string serialize_annotations(const std::vector<BBox>& boxes) {
    std::string out;
    char buf[160];
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const BBox& b = boxes[i];
        if (b.absent())
            std::snprintf(buf, sizeof(buf), "%zu,0,0,0,0\n", i);
        else
            std::snprintf(buf, sizeof(buf), "%zu,%.2f,%.2f,%.2f,%.2f\n", i, b.x, b.y,
                          b.w, b.h);
        out += buf;
    }
    return out;
}

inline std::vector<BBox> parse_annotations(std::string_view text) {
    std::vector<BBox> boxes;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string line(text.substr(pos, end - pos));
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        unsigned long idx = 0;
        double x, y, w, h;
        char trail = 0;
        const int got =
            std::sscanf(line.c_str(), "%lu,%lf,%lf,%lf,%lf%c", &idx, &x, &y, &w, &h,
                        &trail);
        if (got != 5)
            throw MalformedRecord("bad annotation line " + std::to_string(line_no) +
                                  ": '" + line + "'");
        if (idx != line_no)
            throw MalformedRecord("annotation frame index " + std::to_string(idx) +
                                  " out of order at line " + std::to_string(line_no));
        boxes.push_back(w > 0 && h > 0 ? BBox{x, y, w, h} : BBox{});
        ++line_no;
    }
    return boxes;
}

// ---------------------------------------------------------------------------
// Sequence on disk: events.evbin + groundtruth.txt + meta.json.

struct SequenceData {
    std::string name;
    std::filesystem::path dir;
    EventStream events;
    std::vector<BBox> boxes;
    std::vector<std::string> attributes; // sequence-level tag names
    std::uint64_t duration_us = 0;

    std::size_t frames() const { return boxes.size(); }

    TimeWindow window(std::size_t i) const {
        return frame_window(0, duration_us, frames(), i);
    }

    // Events inside frame window i (closed at the end for the final frame).
    EventStream slice(std::size_t i) const {
        const TimeWindow w = window(i);
        EventStream s;
        s.width = events.width;
        s.height = events.height;
        auto lo = std::lower_bound(events.events.begin(), events.events.end(), w.first,
                                   [](const EventPoint& e, std::uint64_t t) {
                                       return e.t < t;
                                   });
        const std::uint64_t end = w.second + (i + 1 == frames() ? 1 : 0);
        auto hi = std::lower_bound(lo, events.events.end(), end,
                                   [](const EventPoint& e, std::uint64_t t) {
                                       return e.t < t;
                                   });
        s.events.assign(lo, hi);
        return s;
    }

    Image<float> frame_view(std::size_t i) const {
        const EventStream sub = slice(i);
        EventFrame f;
        f.window = window(i);
        f.planes = Image<std::uint32_t>(2, events.height, events.width);
        for (const EventPoint& e : sub.events)
            ++f.planes.at(e.p > 0 ? 0 : 1, e.y, e.x);
        return render_event_frame(f);
    }

    Image<float> voxel_view(std::size_t i) const {
        return render_voxel_view(slice(i), window(i));
    }

    Image<float> surface_view(std::size_t i) const {
        return render_time_surface(slice(i), window(i), 0);
    }
};

inline void write_sequence(const std::filesystem::path& dir,
                           const GeneratedSequence& g, const std::string& name,
                           const std::string& split) {
    std::filesystem::create_directories(dir);
    write_file((dir / "events.evbin").string(), serialize_evbin(g.events));
    write_file((dir / "groundtruth.txt").string(), serialize_annotations(g.boxes));

    nlohmann::json meta;
    meta["name"] = name;
    meta["split"] = split;
    meta["seed"] = g.seed;
    meta["attributes"] = nlohmann::json::array();
    for (Attribute a : g.spec.attributes) meta["attributes"].push_back(attribute_name(a));
    meta["frame_tags"] = nlohmann::json::array();
    for (const auto& tags : g.frame_tags) {
        nlohmann::json row = nlohmann::json::array();
        for (Attribute a : tags) row.push_back(attribute_name(a));
        meta["frame_tags"].push_back(std::move(row));
    }
    nlohmann::json spec;
    spec["width"] = g.spec.width;
    spec["height"] = g.spec.height;
    spec["frames"] = g.spec.frames;
    spec["frame_duration_us"] = g.spec.frame_duration_us;
    spec["steps_per_frame"] = g.spec.steps_per_frame;
    spec["shape"] = shape_name(g.spec.shape);
    spec["trajectory"] = trajectory_name(g.spec.trajectory);
    spec["size_px"] = g.spec.size_px;
    spec["speed_px_per_frame"] = g.spec.speed_px_per_frame;
    spec["contrast_threshold"] = g.spec.contrast_threshold;
    spec["noise_rate"] = g.spec.noise_rate;
    meta["spec"] = std::move(spec);
    write_file((dir / "meta.json").string(), meta.dump(2) + "\n");
}

inline SequenceData load_sequence(const std::filesystem::path& dir) {
    SequenceData seq;
    seq.dir = dir;
    seq.name = dir.filename().string();

    const auto gt_path = dir / "groundtruth.txt";
    if (!std::filesystem::exists(gt_path))
        throw MissingAnnotation("no groundtruth.txt in " + dir.string());
    seq.boxes = parse_annotations(read_file(gt_path.string()));
    if (seq.boxes.empty())
        throw MissingAnnotation("empty annotation file in " + dir.string());

    int width = 0, height = 0;
    const auto meta_path = dir / "meta.json";
    if (std::filesystem::exists(meta_path)) {
        const nlohmann::json meta = nlohmann::json::parse(read_file(meta_path.string()));
        if (meta.contains("attributes"))
            for (const auto& t : meta.at("attributes")) {
                const std::string name = t.get<std::string>();
                attribute_from_name(name); // vocabulary check
                seq.attributes.push_back(name);
            }
        if (meta.contains("spec")) {
            const auto& spec = meta.at("spec");
            width = spec.value("width", 0);
            height = spec.value("height", 0);
            seq.duration_us = static_cast<std::uint64_t>(spec.value("frames", 0)) *
                              spec.value("frame_duration_us", std::uint64_t{0});
        }
    }

    seq.events = load_events((dir / "events.evbin").string(), width > 0 ? width : 1280,
                             height > 0 ? height : 720);
    if (seq.duration_us == 0)
        seq.duration_us = seq.events.empty() ? seq.boxes.size() : seq.events.t_last() + 1;
    return seq;
}

inline std::vector<std::filesystem::path> list_sequence_dirs(
    const std::filesystem::path& split_dir) {
    if (!std::filesystem::exists(split_dir))
        throw IoFailure("no such data directory: " + split_dir.string());
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(split_dir))
        if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

inline std::vector<SequenceData> load_split(const std::filesystem::path& root,
                                            const std::string& split) {
    std::vector<SequenceData> out;
    for (const auto& dir : list_sequence_dirs(root / split))
        out.push_back(load_sequence(dir));
    return out;
}

// ---------------------------------------------------------------------------
// Suite materialization (generation + writing, per plan_suite).

inline void make_suite(SuitePreset preset, std::uint64_t seed,
                       const std::filesystem::path& out_dir) {
    const std::vector<PlannedSequence> plan = plan_suite(preset, seed);
    nlohmann::json splits;
    for (const PlannedSequence& p : plan) {
        const GeneratedSequence g = generate(p.spec, p.seed);
        write_sequence(out_dir / p.split / p.name, g, p.name, p.split);
        splits[p.split].push_back(p.name);
    }
    nlohmann::json suite;
    suite["preset"] = preset_name(preset);
    suite["seed"] = seed;
    suite["splits"] = std::move(splits);
    std::filesystem::create_directories(out_dir);
    write_file((out_dir / "suite.json").string(), suite.dump(2) + "\n");
}

} // namespace evkd
