#pragma once

#include <algorithm>
#include <cmath>

#include "evkd/errors.hpp"

namespace evkd {

/// Axis-aligned box: top-left corner plus size, in pixels.
struct BBox {
    double x = 0, y = 0, w = 0, h = 0;

    double area() const { return w > 0 && h > 0 ? w * h : 0.0; }
    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }
    bool absent() const { return w <= 0 || h <= 0; }

    static BBox from_center(double cx, double cy, double w, double h) {
        return {cx - 0.5 * w, cy - 0.5 * h, w, h};
    }
};

// Overlap extents are measured from the shared left/top edge rather than by
// subtracting absolute corners, so iou(b, b) == 1.0 exactly: the corner form
// (x + w) - x does not round back to w, and the top success threshold is an
// inclusive >= 1.0 comparison.
inline double intersection_area(const BBox& a, const BBox& b) {
    const double lx = std::max(a.x, b.x);
    const double ly = std::max(a.y, b.y);
    const double ix = std::min(a.w - (lx - a.x), b.w - (lx - b.x));
    const double iy = std::min(a.h - (ly - a.y), b.h - (ly - b.y));
    return ix > 0 && iy > 0 ? ix * iy : 0.0;
}

inline double iou(const BBox& a, const BBox& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

/// Center location error in pixels.
inline double center_error(const BBox& a, const BBox& b) {
    const double dx = a.cx() - b.cx();
    const double dy = a.cy() - b.cy();
    return std::sqrt(dx * dx + dy * dy);
}

/// Center error with each axis normalized by the ground-truth box size.
inline double normalized_center_error(const BBox& pred, const BBox& gt) {
    if (gt.w <= 0 || gt.h <= 0)
        throw DegenerateGT("normalized center error requires a positive-size GT box");
    const double dx = (pred.cx() - gt.cx()) / gt.w;
    const double dy = (pred.cy() - gt.cy()) / gt.h;
    return std::sqrt(dx * dx + dy * dy);
}

/// Similarity map between patch coordinates and frame coordinates. Pixel
/// sample positions use the index convention (frame index = x0 + (u + 0.5) *
/// scale - 0.5); box corners are continuous edges, where pixel i spans
/// [i, i+1), so edges map as frame = x0 + patch * scale. The two agree: the
/// continuous position of index u is u + 0.5.
struct AffineMap {
    double scale = 1.0;
    double x0 = 0.0;
    double y0 = 0.0;

    double to_frame_x(double px) const { return x0 + (px + 0.5) * scale - 0.5; }
    double to_frame_y(double py) const { return y0 + (py + 0.5) * scale - 0.5; }
    double to_patch_x(double fx) const { return (fx + 0.5 - x0) / scale - 0.5; }
    double to_patch_y(double fy) const { return (fy + 0.5 - y0) / scale - 0.5; }

    BBox box_to_frame(const BBox& patch_box) const {
        BBox out;
        out.x = x0 + patch_box.x * scale;
        out.y = y0 + patch_box.y * scale;
        out.w = patch_box.w * scale;
        out.h = patch_box.h * scale;
        return out;
    }
    BBox box_to_patch(const BBox& frame_box) const {
        BBox out;
        out.x = (frame_box.x - x0) / scale;
        out.y = (frame_box.y - y0) / scale;
        out.w = frame_box.w / scale;
        out.h = frame_box.h / scale;
        return out;
    }
};

} // namespace evkd
