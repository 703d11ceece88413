#pragma once

#include <cmath>

#include "evkd/geometry.hpp"
#include "evkd/image.hpp"

namespace evkd {

enum class PatchRole { Template, Search };

/// Square tracker input crop, together with the affine map that takes patch
/// coordinates back to source-frame coordinates.
struct Patch {
    Image<float> pixels;
    BBox source_box;
    PatchRole role = PatchRole::Search;
    AffineMap to_frame;

    int side() const { return pixels.width; }
};

/// Crop a square region of side context_factor * sqrt(w*h) centered on the
/// box and bilinearly resize it to out_size. Samples outside the image are
/// zero. The returned patch records the patch-to-frame affine map.
inline Patch crop_resize_patch(const Image<float>& image, const BBox& box,
                               double context_factor, int out_size,
                               PatchRole role = PatchRole::Search) {
    if (box.w <= 0 || box.h <= 0)
        throw DegenerateBox("crop box must have positive width and height");
    if (context_factor <= 0)
        throw DegenerateBox("context factor must be positive");

    const double side = context_factor * std::sqrt(box.w * box.h);
    const double scale = side / out_size;

    Patch patch;
    patch.source_box = box;
    patch.role = role;
    patch.to_frame.scale = scale;
    patch.to_frame.x0 = box.cx() - 0.5 * side;
    patch.to_frame.y0 = box.cy() - 0.5 * side;
    patch.pixels = Image<float>(image.channels, out_size, out_size);

    const int h = image.height, w = image.width;
    for (int oy = 0; oy < out_size; ++oy) {
        const double sy = patch.to_frame.to_frame_y(oy);
        const int y0 = static_cast<int>(std::floor(sy));
        const double fy = sy - y0;
        for (int ox = 0; ox < out_size; ++ox) {
            const double sx = patch.to_frame.to_frame_x(ox);
            const int x0 = static_cast<int>(std::floor(sx));
            const double fx = sx - x0;
            for (int c = 0; c < image.channels; ++c) {
                auto tap = [&](int yy, int xx) -> double {
                    return (yy < 0 || yy >= h || xx < 0 || xx >= w)
                               ? 0.0
                               : image.at(c, yy, xx);
                };
                const double v = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                                 fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
                patch.pixels.at(c, oy, ox) = static_cast<float>(v);
            }
        }
    }
    return patch;
}

} // namespace evkd
