#include "boxguide/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace boxguide {

const char* to_string(MapKind k) { return k == MapKind::spatial ? "spatial" : "temporal"; }
const char* to_string(EditPhase p) { return p == EditPhase::pre ? "pre" : "post"; }

std::pair<double, double> attention_centroid(const Grid& field) {
    double mass = 0.0, mx = 0.0, my = 0.0;
    for (int y = 0; y < field.h; ++y) {
        for (int x = 0; x < field.w; ++x) {
            const double v = field.at(x, y);
            if (v < 0.0) throw std::invalid_argument("attention_centroid: negative value");
            mass += v;
            mx += v * x;
            my += v * y;
        }
    }
    if (mass <= 0.0) throw std::invalid_argument("attention_centroid: zero mass");
    return {mx / mass, my / mass};
}

double mass_in_bbox(const Grid& field, const Mask& region_mask) {
    if (field.w != region_mask.w || field.h != region_mask.h)
        throw std::invalid_argument("mass_in_bbox: mask resolution mismatch");
    double total = 0.0, inside = 0.0;
    for (int y = 0; y < field.h; ++y) {
        for (int x = 0; x < field.w; ++x) {
            const double v = field.at(x, y);
            total += v;
            if (region_mask.at(x, y)) inside += v;
        }
    }
    if (total <= 0.0) throw std::invalid_argument("mass_in_bbox: zero mass");
    return inside / total;
}

std::pair<int, int> argmax_pixel(const Grid& field) {
    int bx = 0, by = 0;
    double best = field.at(0, 0);
    for (int y = 0; y < field.h; ++y) {
        for (int x = 0; x < field.w; ++x) {
            if (field.at(x, y) > best) {
                best = field.at(x, y);
                bx = x;
                by = y;
            }
        }
    }
    return {bx, by};
}

Grid slice_grid(const SpatialAttnMap& map, int frame, int token) {
    Grid g(map.w, map.h);
    for (int p = 0; p < map.pixels(); ++p) g.v[p] = map.data.at(frame, p, token);
    return g;
}

SubjectMetrics build_subject_metrics(const SpatialAttnMap& map, const GuidanceRegion& region,
                                     int step, int subject_index) {
    SubjectMetrics out;
    out.subject = subject_index;
    out.step = step;

    const int n_f = map.frames();
    if (static_cast<size_t>(n_f) != region.schedule.bbox.size())
        throw std::invalid_argument("build_subject_metrics: schedule length != frame count");

    for (int f = 0; f < n_f; ++f) {
        const BBox& box = region.schedule.bbox[f];
        const PixelRegion pr = bbox_pixel_region(box, map.w, map.h);

        Grid subject_field(map.w, map.h, 0.0);
        for (int i : region.subject_indices) {
            const int tok = i - 1;
            for (int p = 0; p < map.pixels(); ++p) subject_field.v[p] += map.data.at(f, p, tok);
        }
        for (double& v : subject_field.v) v /= static_cast<double>(region.subject_indices.size());

        FrameMetrics fm;
        fm.frame = f;
        fm.bbox = box;
        std::tie(fm.centroid_x, fm.centroid_y) = attention_centroid(subject_field);
        std::tie(fm.argmax_x, fm.argmax_y) = argmax_pixel(subject_field);

        double mass_sum = 0.0;
        for (int tok = 0; tok < map.tokens(); ++tok)
            mass_sum += mass_in_bbox(slice_grid(map, f, tok), pr.mask);
        fm.mass_in_bbox = mass_sum / map.tokens();

        const double cx = 0.5 * (box.left + box.right) * (map.w - 1);
        const double cy = 0.5 * (box.top + box.bottom) * (map.h - 1);
        fm.tracking_error_px = std::hypot(fm.centroid_x - cx, fm.centroid_y - cy);

        out.mean_tracking_error_px += fm.tracking_error_px;
        out.mean_mass_in_bbox += fm.mass_in_bbox;
        out.frames.push_back(fm);
    }
    out.mean_tracking_error_px /= n_f;
    out.mean_mass_in_bbox /= n_f;
    return out;
}

}  // namespace boxguide
