#ifndef BOXGUIDE_GEOMETRY_HPP
#define BOXGUIDE_GEOMETRY_HPP

#include <string>
#include <vector>

#include "boxguide/tensor.hpp"

namespace boxguide {

// Axis-aligned box in normalized image coordinates (fractions of width/height).
// Valid boxes satisfy 0 <= left < right <= 1 and 0 <= top < bottom <= 1.
struct BBox {
    double left = 0.0;
    double top = 0.0;
    double right = 0.0;
    double bottom = 0.0;

    bool valid() const {
        return 0.0 <= left && left < right && right <= 1.0 && 0.0 <= top && top < bottom &&
               bottom <= 1.0;
    }
    bool operator==(const BBox& o) const = default;
};

// Smallest box containing both a and b.
BBox bbox_hull(const BBox& a, const BBox& b);

// Pixel footprint of a BBox at a given layer resolution. Fractional bounds
// scale by (w-1, h-1) and round outward, so the footprint is never empty for
// a valid box. b_w/b_h are the box side lengths in pixels, ceil((right-left)*w)
// and ceil((bottom-top)*h); they size the Gaussian window, not the mask.
struct PixelRegion {
    int w = 0;
    int h = 0;
    int x_lo = 0, x_hi = 0;  // inclusive pixel interval
    int y_lo = 0, y_hi = 0;
    int b_w = 0;
    int b_h = 0;
    Mask mask;

    bool contains(int x, int y) const { return x_lo <= x && x <= x_hi && y_lo <= y && y <= y_hi; }
    // Pixel-space center; the Gaussian window peaks here.
    int center_x() const { return (x_lo + x_hi) / 2; }
    int center_y() const { return (y_lo + y_hi) / 2; }
};

PixelRegion bbox_pixel_region(const BBox& bbox, int w, int h);

// Separable Gaussian with sigma_x = b_w/2, sigma_y = b_h/2, value exactly 1
// at the region's center pixel and exactly 0 outside the region mask.
Grid gaussian_window(const BBox& bbox, int w, int h);

// One key on a subject track: frame index, box, prompt tokens.
struct Keyframe {
    int frame = 0;
    BBox bbox;
    std::vector<std::string> tokens;

    bool operator==(const Keyframe&) const = default;
};

// Per-frame boxes and prompt embeddings after keyframe interpolation.
struct FrameSchedule {
    std::vector<BBox> bbox;         // N_F entries
    std::vector<Matrix> embedding;  // N_F entries, each N_P x d_text
};

// Linear interpolation between bracketing keys; exact key values at key
// frames. Keys must strictly increase in frame and cover 0 and n_frames-1.
std::vector<BBox> interpolate_bboxes(const std::vector<Keyframe>& keys, int n_frames);

std::vector<Matrix> interpolate_embeddings(const std::vector<std::pair<int, Matrix>>& keys,
                                           int n_frames);

}  // namespace boxguide

#endif  // BOXGUIDE_GEOMETRY_HPP
