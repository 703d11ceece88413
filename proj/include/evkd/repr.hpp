#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "evkd/errors.hpp"
#include "evkd/events.hpp"
#include "evkd/image.hpp"

namespace evkd {

using TimeWindow = std::pair<std::uint64_t, std::uint64_t>; // [t_start, t_end)

/// Per-polarity event counts accumulated over a time window.
/// Channel 0 counts positive events, channel 1 negative ones.
struct EventFrame {
    TimeWindow window{0, 0};
    Image<std::uint32_t> planes; // 2 x H x W

    std::uint64_t total_count() const {
        std::uint64_t sum = 0;
        for (std::uint32_t v : planes.data) sum += v;
        return sum;
    }
};

/// Spatio-temporal cell size: a x b pixels by c microseconds.
struct VoxelSpec {
    int a = 1;
    int b = 1;
    std::uint64_t c = 1;

    void validate() const {
        if (a <= 0 || b <= 0 || c == 0)
            throw InvalidSpec("voxel spec dimensions must be positive");
    }
};

struct VoxelGrid {
    int nx = 0, ny = 0, nt = 0;
    std::vector<std::uint32_t> counts;       // nt x ny x nx
    std::vector<std::int64_t> polarity_sums; // nt x ny x nx

    std::size_t index(int ix, int iy, int it) const {
        return (static_cast<std::size_t>(it) * ny + iy) * nx + ix;
    }
    std::uint64_t total_count() const {
        std::uint64_t sum = 0;
        for (std::uint32_t v : counts) sum += v;
        return sum;
    }
};

/// Per-pixel, per-polarity exponential decay of time since the last event.
struct TimeSurface {
    std::uint64_t t_ref = 0;
    std::uint64_t tau_us = 1;
    Image<double> values; // 2 x H x W, in [0, 1]
};

namespace detail {

// Frame index for an event at time t. Windows are half-open except the last,
// which is closed, so t == t_end lands in the final frame.
inline std::size_t frame_index(std::uint64_t t, std::uint64_t t0, std::uint64_t dur,
                               std::size_t n) {
    if (dur == 0) return 0;
    unsigned __int128 scaled = static_cast<unsigned __int128>(t - t0) * n;
    std::size_t idx = static_cast<std::size_t>(scaled / dur);
    return idx >= n ? n - 1 : idx;
}

} // namespace detail

/// Window i of [t0, t0 + dur) split into n equal parts, using the same
/// ceiling-division boundaries as stack_event_frames so both agree exactly.
inline TimeWindow frame_window(std::uint64_t t0, std::uint64_t dur, std::size_t n,
                               std::size_t i) {
    if (n == 0 || i >= n) throw InvalidSpec("frame index out of range");
    auto bound = [&](std::size_t k) {
        unsigned __int128 num = static_cast<unsigned __int128>(dur) * k + n - 1;
        return t0 + static_cast<std::uint64_t>(num / n);
    };
    return {bound(i), bound(i + 1)};
}

/// Split the stream's full time range into n equal windows and accumulate
/// per-pixel, per-polarity counts for each.
inline std::vector<EventFrame> stack_event_frames(const EventStream& stream,
                                                  std::size_t n_frames) {
    if (n_frames == 0) throw InvalidSpec("n_frames must be >= 1");
    if (stream.empty()) throw EmptyStream("cannot stack an empty stream");

    const std::uint64_t t0 = stream.t_first();
    const std::uint64_t dur = stream.t_last() - t0;

    // Window boundaries are the exact level sets of the binning rule
    // floor((t - t0) * n / dur), hence the ceiling division.
    auto bound = [&](std::size_t i) {
        unsigned __int128 num = static_cast<unsigned __int128>(dur) * i + n_frames - 1;
        return t0 + static_cast<std::uint64_t>(num / n_frames);
    };
    std::vector<EventFrame> frames(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        frames[i].window = {bound(i), bound(i + 1)};
        frames[i].planes = Image<std::uint32_t>(2, stream.height, stream.width);
    }
    for (const EventPoint& e : stream.events) {
        EventFrame& f = frames[detail::frame_index(e.t, t0, dur, n_frames)];
        ++f.planes.at(e.p > 0 ? 0 : 1, e.y, e.x);
    }
    return frames;
}

struct WindowStackResult {
    std::vector<EventFrame> frames;
    std::uint64_t dropped = 0; // events outside every window
};

/// Accumulate one frame per caller-provided window. Windows must be ascending
/// and non-overlapping; all are half-open except the last, which is closed.
inline WindowStackResult stack_by_windows(const EventStream& stream,
                                          const std::vector<TimeWindow>& windows) {
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].second <= windows[i].first)
            throw OverlappingWindows("window " + std::to_string(i) + " is empty or inverted");
        if (i > 0 && windows[i].first < windows[i - 1].second)
            throw OverlappingWindows("windows " + std::to_string(i - 1) + " and " +
                                     std::to_string(i) + " overlap or are out of order");
    }

    WindowStackResult result;
    result.frames.resize(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        result.frames[i].window = windows[i];
        result.frames[i].planes = Image<std::uint32_t>(2, stream.height, stream.width);
    }
    for (const EventPoint& e : stream.events) {
        // windows are few; linear scan keeps the binning rule obvious
        bool placed = false;
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const bool last = i + 1 == windows.size();
            if (e.t >= windows[i].first &&
                (e.t < windows[i].second || (last && e.t == windows[i].second))) {
                ++result.frames[i].planes.at(e.p > 0 ? 0 : 1, e.y, e.x);
                placed = true;
                break;
            }
        }
        if (!placed) ++result.dropped;
    }
    return result;
}

/// Bin the in-window events of a stream into (count, polarity sum) cells of
/// size (a, b, c). Grid dimensions are rounded up; the window is treated as
/// closed at t_end, which falls into the final time slice.
inline VoxelGrid voxelize(const EventStream& stream, TimeWindow window,
                          const VoxelSpec& spec) {
    spec.validate();
    if (window.second <= window.first)
        throw EmptyWindow("voxelize window has zero duration");

    const std::uint64_t dur = window.second - window.first;
    VoxelGrid grid;
    grid.nx = (stream.width + spec.a - 1) / spec.a;
    grid.ny = (stream.height + spec.b - 1) / spec.b;
    grid.nt = static_cast<int>((dur + spec.c - 1) / spec.c);
    const std::size_t cells =
        static_cast<std::size_t>(grid.nx) * grid.ny * grid.nt;
    grid.counts.assign(cells, 0);
    grid.polarity_sums.assign(cells, 0);

    for (const EventPoint& e : stream.events) {
        if (e.t < window.first || e.t > window.second) continue;
        int it = static_cast<int>((e.t - window.first) / spec.c);
        if (it >= grid.nt) it = grid.nt - 1; // t == t_end on divisible durations
        const std::size_t idx = grid.index(e.x / spec.a, e.y / spec.b, it);
        ++grid.counts[idx];
        grid.polarity_sums[idx] += e.p;
    }
    return grid;
}

/// For each pixel and polarity, exp(-(t_ref - t_last)/tau) over the most
/// recent event at or before t_ref; pixels with no prior event stay 0.
inline TimeSurface time_surface(const EventStream& stream, std::uint64_t t_ref,
                                std::uint64_t tau_us) {
    if (tau_us == 0) throw InvalidSpec("time-surface tau must be positive");
    TimeSurface surface;
    surface.t_ref = t_ref;
    surface.tau_us = tau_us;
    surface.values = Image<double>(2, stream.height, stream.width);

    Image<std::uint64_t> last(2, stream.height, stream.width, 0);
    Image<std::uint8_t> seen(2, stream.height, stream.width, 0);
    for (const EventPoint& e : stream.events) {
        if (e.t > t_ref) break; // stream is sorted
        const int c = e.p > 0 ? 0 : 1;
        last.at(c, e.y, e.x) = e.t;
        seen.at(c, e.y, e.x) = 1;
    }
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < stream.height; ++y)
            for (int x = 0; x < stream.width; ++x)
                if (seen.at(c, y, x))
                    surface.values.at(c, y, x) = std::exp(
                        -(static_cast<double>(t_ref - last.at(c, y, x)) / tau_us));
    return surface;
}

/// Dense 3-channel tracker input rendered from an event frame:
/// (positive, negative, positive+negative) counts scaled to [0, 1] by the
/// frame's maximum total count.
inline Image<float> render_event_frame(const EventFrame& frame) {
    const int h = frame.planes.height, w = frame.planes.width;
    Image<float> img(3, h, w);
    std::uint32_t max_total = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::uint32_t total = frame.planes.at(0, y, x) + frame.planes.at(1, y, x);
            max_total = std::max(max_total, total);
        }
    if (max_total == 0) return img;
    const float inv = 1.0f / static_cast<float>(max_total);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::uint32_t pos = frame.planes.at(0, y, x);
            const std::uint32_t neg = frame.planes.at(1, y, x);
            img.at(0, y, x) = pos * inv;
            img.at(1, y, x) = neg * inv;
            img.at(2, y, x) = (pos + neg) * inv;
        }
    return img;
}

/// Voxel-view render: the window is cut into three equal time slices at full
/// spatial resolution and each slice's count map becomes one channel.
inline Image<float> render_voxel_view(const EventStream& stream, TimeWindow window) {
    if (window.second <= window.first)
        throw EmptyWindow("voxel render window has zero duration");
    const std::uint64_t dur = window.second - window.first;
    const std::uint64_t slice = std::max<std::uint64_t>(1, (dur + 2) / 3);
    VoxelGrid grid = voxelize(stream, window, VoxelSpec{1, 1, slice});

    const int h = stream.height, w = stream.width;
    Image<float> img(3, h, w);
    std::uint32_t max_count = 0;
    for (std::uint32_t v : grid.counts) max_count = std::max(max_count, v);
    if (max_count == 0) return img;
    const float inv = 1.0f / static_cast<float>(max_count);
    for (int it = 0; it < grid.nt && it < 3; ++it)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(it, y, x) = grid.counts[grid.index(x, y, it)] * inv;
    return img;
}

/// Time-surface render: positive and negative decay channels plus their mean.
inline Image<float> render_time_surface(const EventStream& stream, TimeWindow window,
                                        std::uint64_t tau_us) {
    if (tau_us == 0) tau_us = std::max<std::uint64_t>(1, window.second - window.first);
    TimeSurface surface = time_surface(stream, window.second, tau_us);
    const int h = stream.height, w = stream.width;
    Image<float> img(3, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double pos = surface.values.at(0, y, x);
            const double neg = surface.values.at(1, y, x);
            img.at(0, y, x) = static_cast<float>(pos);
            img.at(1, y, x) = static_cast<float>(neg);
            img.at(2, y, x) = static_cast<float>(0.5 * (pos + neg));
        }
    return img;
}

} // namespace evkd
