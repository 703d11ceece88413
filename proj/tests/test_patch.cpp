#include <gtest/gtest.h>

#include <cmath>

#include "evkd/geometry.hpp"
#include "evkd/patch.hpp"
#include "evkd/rng.hpp"

using namespace evkd;

TEST(BoxGeometry, IoUHandCases) {
    BBox a{0, 0, 2, 2};
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    BBox b{1, 1, 2, 2};
    EXPECT_NEAR(iou(a, b), 1.0 / 7.0, 1e-12);
    BBox far{10, 10, 2, 2};
    EXPECT_DOUBLE_EQ(iou(a, far), 0.0);
}

TEST(BoxGeometry, CenterErrors) {
    BBox a{0, 0, 4, 4};
    BBox b{3, 4, 4, 4};
    EXPECT_NEAR(center_error(a, b), 5.0, 1e-12);
    EXPECT_NEAR(normalized_center_error(b, a), std::sqrt(9.0 + 16.0) / 4.0, 1e-12);
    BBox degenerate{0, 0, 0, 0};
    EXPECT_THROW(normalized_center_error(a, degenerate), DegenerateGT);
}

TEST(CropResize, FullFrameCropIsIdentity) {
    Image<float> img(3, 64, 64);
    Rng rng(21);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    // context 2 on a 32x32 box centered in the frame covers exactly 64x64.
    BBox box = BBox::from_center(32, 32, 32, 32);
    Patch p = crop_resize_patch(img, box, 2.0, 64, PatchRole::Search);
    ASSERT_EQ(p.side(), 64);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                ASSERT_NEAR(p.pixels.at(c, y, x), img.at(c, y, x), 1e-6);
}

TEST(CropResize, CornerBoxIsZeroPadded) {
    Image<float> img(3, 64, 64, 1.0f);
    BBox box{0, 0, 8, 8}; // crop side 32 centered at (4,4), mostly outside
    Patch p = crop_resize_patch(img, box, 4.0, 32, PatchRole::Template);
    EXPECT_EQ(p.pixels.at(0, 0, 0), 0.0f);
    EXPECT_GT(p.pixels.at(0, 31, 31), 0.0f);
}

TEST(CropResize, DegenerateBoxThrows) {
    Image<float> img(3, 64, 64);
    EXPECT_THROW(crop_resize_patch(img, BBox{0, 0, 0, 4}, 2.0, 32), DegenerateBox);
    EXPECT_THROW(crop_resize_patch(img, BBox{0, 0, 4, -1}, 2.0, 32), DegenerateBox);
}

TEST(CropResize, AffineRoundTripWithinHalfPixel) {
    Image<float> img(3, 128, 96);
    Rng rng(22);
    for (int iter = 0; iter < 50; ++iter) {
        BBox box{rng.uniform() * 60, rng.uniform() * 80, 4 + rng.uniform() * 30,
                 4 + rng.uniform() * 30};
        Patch p = crop_resize_patch(img, box, 2.0 + 2.0 * rng.uniform(), 128);
        BBox in_patch = p.to_frame.box_to_patch(box);
        BBox back = p.to_frame.box_to_frame(in_patch);
        EXPECT_NEAR(back.x, box.x, 0.5);
        EXPECT_NEAR(back.y, box.y, 0.5);
        EXPECT_NEAR(back.w, box.w, 0.5);
        EXPECT_NEAR(back.h, box.h, 0.5);
        // Corners as well, via the coordinate maps.
        const double fx = p.to_frame.to_frame_x(p.to_frame.to_patch_x(box.x));
        EXPECT_NEAR(fx, box.x, 1e-9);
    }
}

TEST(CropResize, SourceBoxLandsCenteredInPatch) {
    Image<float> img(3, 256, 256);
    BBox box{40, 60, 20, 10};
    Patch p = crop_resize_patch(img, box, 4.0, 256);
    BBox in_patch = p.to_frame.box_to_patch(box);
    EXPECT_NEAR(in_patch.cx(), 128.0, 1e-9);
    EXPECT_NEAR(in_patch.cy(), 128.0, 1e-9);
    // context_factor 4 on a sqrt(200)-sized box: the box occupies 1/4 of the
    // patch side in linear scale-normalized units.
    EXPECT_NEAR(in_patch.w / 256.0, box.w / (4.0 * std::sqrt(200.0)), 1e-12);
}

TEST(CropResize, BilinearInterpolatesBetweenPixels) {
    Image<float> img(1, 2, 2);
    img.at(0, 0, 0) = 0.0f;
    img.at(0, 0, 1) = 1.0f;
    img.at(0, 1, 0) = 1.0f;
    img.at(0, 1, 1) = 0.0f;
    // Crop the full 2x2 frame, upsampled to 4x4.
    BBox box = BBox::from_center(1, 1, 1, 1);
    Patch p = crop_resize_patch(img, box, 2.0, 4);
    // Patch center sits exactly between all four source pixels.
    const double scale = p.to_frame.scale;
    EXPECT_DOUBLE_EQ(scale, 0.5);
    const float center_mean =
        (p.pixels.at(0, 1, 1) + p.pixels.at(0, 1, 2) + p.pixels.at(0, 2, 1) +
         p.pixels.at(0, 2, 2)) /
        4.0f;
    EXPECT_NEAR(center_mean, 0.5f, 1e-6);
}
