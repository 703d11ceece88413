#pragma once

#include <atomic>
#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include "evkd/backbone.hpp"
#include "evkd/dataset.hpp"
#include "evkd/errors.hpp"
#include "evkd/head.hpp"
#include "evkd/patch.hpp"

namespace evkd {

struct TrackOptions {
    double template_context = 2.0;
    double search_context = 4.0;
    bool deterministic = false; // zero recorded latencies for stable reports
};

struct SequenceResult {
    std::string id;
    std::vector<BBox> boxes;      // one per annotated frame; frame 0 = GT
    std::vector<double> latency_s; // forward + decode only
};

// One-pass protocol: initialize on frame-0 GT, crop the search region around
// the previous prediction, never re-initialize.
template <typename T>
SequenceResult track_sequence(TrackerNet<T>& net, const SequenceData& seq,
                              const TrackOptions& opt = {}) {
    if (seq.boxes.empty() || seq.boxes[0].absent())
        throw MissingAnnotation("sequence " + seq.name +
                                " lacks a visible frame-0 annotation");

    SequenceResult out;
    out.id = seq.name;
    out.boxes.reserve(seq.frames());
    out.latency_s.assign(seq.frames(), 0.0);

    const Image<float> tmpl_view = seq.frame_view(0);
    const Patch tmpl_a = crop_resize_patch(tmpl_view, seq.boxes[0], opt.template_context,
                                           net.cfg.template_size, PatchRole::Template);
    Patch tmpl_b;
    if (net.two_view)
        tmpl_b = crop_resize_patch(seq.voxel_view(0), seq.boxes[0], opt.template_context,
                                   net.cfg.template_size, PatchRole::Template);

    BBox prev = seq.boxes[0];
    out.boxes.push_back(prev);

    using clock = std::chrono::steady_clock;
    for (std::size_t i = 1; i < seq.frames(); ++i) {
        const Image<float> view = seq.frame_view(i);
        const Patch search_a = crop_resize_patch(view, prev, opt.search_context,
                                                 net.cfg.search_size, PatchRole::Search);
        Patch search_b;
        if (net.two_view)
            search_b = crop_resize_patch(seq.voxel_view(i), prev, opt.search_context,
                                         net.cfg.search_size, PatchRole::Search);

        const auto t0 = clock::now();
        ForwardResult<T> fw = net.two_view
                                  ? net.forward_teacher(tmpl_a, search_a, tmpl_b, search_b)
                                  : net.forward_student(tmpl_a, search_a);
        const BBox box = decode_box(fw.response, search_a.to_frame, net.cfg.search_size);
        const auto t1 = clock::now();

        if (!opt.deterministic)
            out.latency_s[i] = std::chrono::duration<double>(t1 - t0).count();
        out.boxes.push_back(box);
        prev = box;
    }
    return out;
}

template <typename T>
std::vector<SequenceResult> run_ope(TrackerNet<T>& net,
                                    const std::vector<SequenceData>& sequences,
                                    const TrackOptions& opt = {}, int threads = 1) {
    std::vector<SequenceResult> results(sequences.size());
    if (threads <= 1 || sequences.size() <= 1) {
        for (std::size_t i = 0; i < sequences.size(); ++i)
            results[i] = track_sequence(net, sequences[i], opt);
        return results;
    }
    // Each worker owns a deep copy of the network; forward passes mutate node
    // buffers, so sharing parameter nodes across threads is not safe.
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    const int n_workers = std::min<int>(threads, static_cast<int>(sequences.size()));
    for (int w = 0; w < n_workers; ++w)
        pool.emplace_back([&]() {
            TrackerNet<T> local = TrackerNet<T>::make(net.cfg, net.two_view, 0);
            for (auto& [name, p] : local.params.items)
                p->value = net.params.get(name)->value;
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= sequences.size()) break;
                results[i] = track_sequence(local, sequences[i], opt);
            }
        });
    for (auto& th : pool) th.join();
    return results;
}

/// Frames per second over forward+decode time, after an untimed warm-up pass
/// on the first sequence.
template <typename T>
double measure_fps(TrackerNet<T>& net, const std::vector<SequenceData>& sequences,
                   const TrackOptions& opt = {}) {
    if (sequences.empty()) throw InvalidSpec("fps measurement needs sequences");
    TrackOptions timed = opt;
    timed.deterministic = false;
    track_sequence(net, sequences[0], timed); // warm-up, discarded

    double total_s = 0;
    std::uint64_t frames = 0;
    for (const SequenceData& seq : sequences) {
        const SequenceResult r = track_sequence(net, seq, timed);
        for (std::size_t i = 1; i < r.latency_s.size(); ++i) total_s += r.latency_s[i];
        frames += r.latency_s.empty() ? 0 : r.latency_s.size() - 1;
    }
    return total_s > 0 ? static_cast<double>(frames) / total_s : 0.0;
}

// ---------------------------------------------------------------------------
// Result files: boxes in the annotation format, latencies one value per line.

inline void write_results(const std::filesystem::path& dir,
                          const std::vector<SequenceResult>& results) {
    std::filesystem::create_directories(dir);
    for (const SequenceResult& r : results) {
        write_file((dir / (r.id + ".txt")).string(), serialize_annotations(r.boxes));
        std::string times;
        char buf[48];
        for (double s : r.latency_s) {
            std::snprintf(buf, sizeof(buf), "%.9f\n", s);
            times += buf;
        }
        write_file((dir / (r.id + "_time.txt")).string(), times);
    }
}

inline SequenceResult load_result(const std::filesystem::path& dir,
                                  const std::string& id) {
    SequenceResult r;
    r.id = id;
    const auto box_path = dir / (id + ".txt");
    if (!std::filesystem::exists(box_path))
        throw MissingAnnotation("no result file for sequence " + id);
    r.boxes = parse_annotations(read_file(box_path.string()));
    const auto time_path = dir / (id + "_time.txt");
    if (std::filesystem::exists(time_path)) {
        const std::string text = read_file(time_path.string());
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t end = text.find('\n', pos);
            if (end == std::string::npos) end = text.size();
            const std::string line = text.substr(pos, end - pos);
            pos = end + 1;
            if (!line.empty()) r.latency_s.push_back(std::stod(line));
        }
    }
    return r;
}

} // namespace evkd
