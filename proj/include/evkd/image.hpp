#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace evkd {

/// Dense channel-major raster: values laid out as [channel][row][col].
template <typename T>
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Image() = default;
    Image(int c, int h, int w, T fill = T{})
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, fill) {}

    T& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    T at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    std::size_t size() const { return data.size(); }

    T max_value() const {
        T m = T{};
        for (const T& v : data) m = std::max(m, v);
        return m;
    }
};

} // namespace evkd
