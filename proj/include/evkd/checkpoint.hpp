#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "evkd/optim.hpp"
#include "evkd/params.hpp"
#include "evkd/tensor.hpp"

namespace evkd {

/// Checkpoint container: magic "HKDT", u16 version, u64-length-prefixed JSON
/// metadata, then named little-endian tensor blobs. Optimizer moments ride
/// along as blobs prefixed "opt.m." / "opt.v.".
namespace ckpt {

constexpr char kMagic[4] = {'H', 'K', 'D', 'T'};
constexpr std::uint16_t kVersion = 1;

namespace detail {

template <typename V>
void write_pod(std::ostream& os, V v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is) {
    V v;
    is.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!is) throw IoFailure("truncated checkpoint");
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    const auto n = read_pod<std::uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw IoFailure("truncated checkpoint string");
    return s;
}

template <typename T>
void write_tensor(std::ostream& os, const std::string& name, const Tensor<T>& t) {
    write_string(os, name);
    write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(sizeof(T)));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(t.v.size()));
    os.write(reinterpret_cast<const char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * sizeof(T)));
}

template <typename T>
std::pair<std::string, Tensor<T>> read_tensor(std::istream& is) {
    const std::string name = read_string(is);
    const auto width = read_pod<std::uint8_t>(is);
    const auto rank = read_pod<std::uint32_t>(is);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_pod<std::uint32_t>(is));
    const auto count = read_pod<std::uint64_t>(is);
    Tensor<T> t(shape);
    if (t.v.size() != count)
        throw IoFailure("tensor blob " + name + " count/shape mismatch");
    auto read_as = [&](auto witness) {
        using S = decltype(witness);
        std::vector<S> raw(count);
        is.read(reinterpret_cast<char*>(raw.data()),
                static_cast<std::streamsize>(count * sizeof(S)));
        if (!is) throw IoFailure("truncated tensor blob " + name);
        for (std::size_t i = 0; i < count; ++i) t.v[i] = static_cast<T>(raw[i]);
    };
    if (width == 4)
        read_as(float{});
    else if (width == 8)
        read_as(double{});
    else
        throw IoFailure("unknown tensor dtype width in " + name);
    return {name, std::move(t)};
}

} // namespace detail

template <typename T>
struct Loaded {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor<T>>> tensors;

    const Tensor<T>* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

template <typename T>
void save(const std::string& path, const ParamStore<T>& ps,
          const nlohmann::json& meta, const AdamW<T>* opt = nullptr) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoFailure("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    detail::write_pod<std::uint16_t>(os, kVersion);
    const std::string doc = meta.dump();
    detail::write_pod<std::uint64_t>(os, doc.size());
    os.write(doc.data(), static_cast<std::streamsize>(doc.size()));

    std::uint64_t blobs = ps.items.size();
    if (opt) blobs += 2 * opt->m.size();
    detail::write_pod<std::uint64_t>(os, blobs);
    for (const auto& [name, p] : ps.items) detail::write_tensor(os, name, p->value);
    if (opt) {
        for (std::size_t i = 0; i < opt->m.size(); ++i)
            detail::write_tensor(os, "opt.m." + ps.items[i].first, opt->m[i]);
        for (std::size_t i = 0; i < opt->v.size(); ++i)
            detail::write_tensor(os, "opt.v." + ps.items[i].first, opt->v[i]);
    }
    if (!os) throw IoFailure("write failed: " + path);
}

template <typename T>
Loaded<T> load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoFailure("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoFailure("not a checkpoint file: " + path);
    const auto version = detail::read_pod<std::uint16_t>(is);
    if (version != kVersion)
        throw IoFailure("unsupported checkpoint version " + std::to_string(version));
    const auto doc_len = detail::read_pod<std::uint64_t>(is);
    std::string doc(doc_len, '\0');
    is.read(doc.data(), static_cast<std::streamsize>(doc_len));
    if (!is) throw IoFailure("truncated checkpoint metadata");

    Loaded<T> out;
    out.meta = nlohmann::json::parse(doc);
    const auto blobs = detail::read_pod<std::uint64_t>(is);
    out.tensors.reserve(blobs);
    for (std::uint64_t i = 0; i < blobs; ++i)
        out.tensors.push_back(detail::read_tensor<T>(is));
    return out;
}

/// Copy loaded weights into an existing store. Every store parameter must be
/// present with a matching shape.
template <typename T>
void apply(const Loaded<T>& loaded, ParamStore<T>& ps) {
    for (auto& [name, p] : ps.items) {
        const Tensor<T>* t = loaded.find(name);
        if (!t)
            throw ConfigMismatch("checkpoint is missing parameter: " + name);
        if (t->shape != p->value.shape)
            throw ConfigMismatch("checkpoint shape mismatch for " + name + ": " +
                                 Tensor<T>::shape_string(t->shape) + " vs " +
                                 p->value.shape_string());
        p->value = *t;
    }
}

/// Restore optimizer moments saved alongside the parameters, if present.
template <typename T>
void apply_optimizer(const Loaded<T>& loaded, const ParamStore<T>& ps, AdamW<T>& opt) {
    for (std::size_t i = 0; i < ps.items.size(); ++i) {
        const Tensor<T>* m = loaded.find("opt.m." + ps.items[i].first);
        const Tensor<T>* v = loaded.find("opt.v." + ps.items[i].first);
        if (!m || !v) throw ConfigMismatch("checkpoint has no optimizer state");
        opt.m[i] = *m;
        opt.v[i] = *v;
    }
    if (loaded.meta.contains("optimizer_step"))
        opt.t = loaded.meta["optimizer_step"].template get<std::uint64_t>();
}

} // namespace ckpt
} // namespace evkd
