#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "evkd/errors.hpp"

namespace evkd {

/// One asynchronous sensor event. Polarity is +1 (brighter) or -1 (darker);
/// the on-disk encoding maps 1 -> +1 and 0 -> -1.
struct EventPoint {
    std::uint64_t t = 0; // microseconds
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::int8_t p = 1;
};

struct EventStream {
    int width = 1280;
    int height = 720;
    std::vector<EventPoint> events;

    bool empty() const { return events.empty(); }
    std::size_t size() const { return events.size(); }
    std::uint64_t t_first() const { return events.front().t; }
    std::uint64_t t_last() const { return events.back().t; }
};

enum class EventFormat { Csv, Evbin };

namespace detail {

inline void check_event(const EventPoint& e, int w, int h, const std::string& where) {
    if (e.x >= w || e.y >= h)
        throw OutOfBounds("event coordinate (" + std::to_string(e.x) + "," +
                          std::to_string(e.y) + ") outside " + std::to_string(w) +
                          "x" + std::to_string(h) + " at " + where);
    if (e.p != 1 && e.p != -1)
        throw MalformedRecord("polarity must be 0 or 1 at " + where);
}

inline void sort_if_needed(EventStream& s) {
    bool sorted = std::is_sorted(
        s.events.begin(), s.events.end(),
        [](const EventPoint& a, const EventPoint& b) { return a.t < b.t; });
    if (!sorted)
        std::stable_sort(
            s.events.begin(), s.events.end(),
            [](const EventPoint& a, const EventPoint& b) { return a.t < b.t; });
}

template <typename T>
T read_le(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <typename T>
void write_le(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

} // namespace detail

/// Parse a CSV event file: one `t,x,y,p` record per line, p in {0,1}.
/// Unsorted input is stable-sorted by timestamp.
inline EventStream parse_csv(std::string_view text, int width, int height) {
    EventStream stream;
    stream.width = width;
    stream.height = height;

    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = eol + 1;
        ++line_no;
        if (line.empty()) continue;

        std::uint64_t fields[4];
        std::size_t fpos = 0;
        const std::string where = "line " + std::to_string(line_no);
        for (int f = 0; f < 4; ++f) {
            std::size_t comma = line.find(',', fpos);
            std::string_view tok =
                line.substr(fpos, comma == std::string_view::npos ? std::string_view::npos
                                                                  : comma - fpos);
            if (tok.empty() || (f < 3 && comma == std::string_view::npos))
                throw MalformedRecord("expected 4 comma-separated integers at " + where);
            std::uint64_t v = 0;
            for (char c : tok) {
                if (c < '0' || c > '9')
                    throw MalformedRecord("non-numeric field '" + std::string(tok) +
                                          "' at " + where);
                v = v * 10 + static_cast<std::uint64_t>(c - '0');
            }
            fields[f] = v;
            fpos = comma + 1;
            if (f == 3 && comma != std::string_view::npos)
                throw MalformedRecord("trailing fields at " + where);
        }
        if (fields[3] > 1)
            throw MalformedRecord("polarity must be 0 or 1 at " + where);
        EventPoint e{fields[0], static_cast<std::uint16_t>(fields[1]),
                     static_cast<std::uint16_t>(fields[2]),
                     fields[3] == 1 ? std::int8_t{1} : std::int8_t{-1}};
        if (fields[1] >= static_cast<std::uint64_t>(width) ||
            fields[2] >= static_cast<std::uint64_t>(height))
            throw OutOfBounds("event coordinate (" + std::to_string(fields[1]) + "," +
                              std::to_string(fields[2]) + ") outside " +
                              std::to_string(width) + "x" + std::to_string(height) +
                              " at " + where);
        stream.events.push_back(e);
    }
    detail::sort_if_needed(stream);
    return stream;
}

/// Parse the `evbin` container: magic "EVB1", little-endian u32 W, u32 H,
/// u64 count, then count records of (u64 t, u16 x, u16 y, u8 p).
inline EventStream parse_evbin(std::string_view bytes) {
    constexpr std::size_t kHeader = 4 + 4 + 4 + 8;
    constexpr std::size_t kRecord = 8 + 2 + 2 + 1;
    if (bytes.size() < kHeader || bytes.substr(0, 4) != "EVB1")
        throw MalformedRecord("evbin: missing EVB1 magic");
    EventStream stream;
    stream.width = static_cast<int>(detail::read_le<std::uint32_t>(bytes.data() + 4));
    stream.height = static_cast<int>(detail::read_le<std::uint32_t>(bytes.data() + 8));
    const std::uint64_t count = detail::read_le<std::uint64_t>(bytes.data() + 12);
    if (bytes.size() != kHeader + count * kRecord)
        throw MalformedRecord("evbin: size mismatch at offset " +
                              std::to_string(bytes.size()));
    stream.events.reserve(count);
    const char* p = bytes.data() + kHeader;
    for (std::uint64_t i = 0; i < count; ++i, p += kRecord) {
        EventPoint e;
        e.t = detail::read_le<std::uint64_t>(p);
        e.x = detail::read_le<std::uint16_t>(p + 8);
        e.y = detail::read_le<std::uint16_t>(p + 10);
        const std::uint8_t raw = static_cast<std::uint8_t>(p[12]);
        if (raw > 1)
            throw MalformedRecord("evbin: bad polarity at record " + std::to_string(i));
        e.p = raw == 1 ? std::int8_t{1} : std::int8_t{-1};
        detail::check_event(e, stream.width, stream.height, "record " + std::to_string(i));
        stream.events.push_back(e);
    }
    detail::sort_if_needed(stream);
    return stream;
}

/// Parse raw file content in the given format. CSV carries no resolution, so
/// the caller supplies it; evbin ignores the hint and uses its header.
inline EventStream parse_stream(std::string_view bytes, EventFormat format,
                                int width = 1280, int height = 720) {
    return format == EventFormat::Csv ? parse_csv(bytes, width, height)
                                      : parse_evbin(bytes);
}

inline std::string serialize_csv(const EventStream& s) {
    std::string out;
    out.reserve(s.events.size() * 16);
    for (const EventPoint& e : s.events) {
        out += std::to_string(e.t);
        out += ',';
        out += std::to_string(e.x);
        out += ',';
        out += std::to_string(e.y);
        out += ',';
        out += e.p > 0 ? '1' : '0';
        out += '\n';
    }
    return out;
}

inline std::string serialize_evbin(const EventStream& s) {
    std::string out;
    out.reserve(16 + s.events.size() * 13);
    out += "EVB1";
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.width));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.height));
    detail::write_le<std::uint64_t>(out, s.events.size());
    for (const EventPoint& e : s.events) {
        detail::write_le<std::uint64_t>(out, e.t);
        detail::write_le<std::uint16_t>(out, e.x);
        detail::write_le<std::uint16_t>(out, e.y);
        out += static_cast<char>(e.p > 0 ? 1 : 0);
    }
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path);
    std::string content((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    return content;
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot write " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoFailure("short write to " + path);
}

inline EventStream load_events(const std::string& path, int width = 1280,
                               int height = 720) {
    const std::string content = read_file(path);
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv")
        return parse_csv(content, width, height);
    return parse_evbin(content);
}

} // namespace evkd
