#include "boxguide/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace boxguide {

std::vector<int> GuidanceRegion::edited_indices() const {
    std::vector<int> out = subject_indices;
    out.insert(out.end(), trailing_indices.begin(), trailing_indices.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<int> trailing_indices(int prompt_len, int count, int n_tokens_max) {
    if (prompt_len < 0 || count < 0) throw std::invalid_argument("trailing_indices: negative input");
    if (prompt_len + count > n_tokens_max)
        throw std::invalid_argument("trailing_indices: " + std::to_string(prompt_len) + "+" +
                                    std::to_string(count) + " exceeds token capacity " +
                                    std::to_string(n_tokens_max));
    std::vector<int> out(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) out[i] = prompt_len + 1 + i;
    return out;
}

Grid spatial_weight_field(const PixelRegion& region, double c_w) {
    Grid w(region.w, region.h, c_w);
    for (int y = region.y_lo; y <= region.y_hi; ++y)
        for (int x = region.x_lo; x <= region.x_hi; ++x) w.at(x, y) = 1.0;
    return w;
}

Grid spatial_injection_field(const BBox& bbox, int w, int h, double c_s) {
    Grid g = gaussian_window(bbox, w, h);
    for (double& v : g.v) v *= c_s;
    return g;
}

Grid temporal_injection_field(const BBox& bbox, int w, int h, double c_m, double d) {
    if (d < 0.0 || d > 1.0) throw std::invalid_argument("temporal distance must be in [0,1]");
    Grid g = gaussian_window(bbox, w, h);
    const double scale = c_m * (1.0 - 2.0 * d);
    for (double& v : g.v) v *= scale;
    return g;
}

namespace {

void check_indices(const std::vector<int>& indices, int n_tokens) {
    for (int i : indices)
        if (i < 1 || i > n_tokens)
            throw std::invalid_argument("edited token index " + std::to_string(i) +
                                        " outside [1, " + std::to_string(n_tokens) + "]");
}

}  // namespace

void edit_spatial_map(SpatialAttnMap& map, const GuidanceRegion& region, int frame) {
    if (frame < 0 || frame >= map.frames())
        throw std::invalid_argument("edit_spatial_map: frame out of range");
    if (static_cast<size_t>(map.frames()) != region.schedule.bbox.size())
        throw std::invalid_argument("edit_spatial_map: schedule length != frame count");
    const std::vector<int> indices = region.edited_indices();
    check_indices(indices, map.tokens());

    const BBox& box = region.schedule.bbox[frame];
    const PixelRegion pr = bbox_pixel_region(box, map.w, map.h);
    const Grid weight = spatial_weight_field(pr, region.c_w);
    const Grid inject = spatial_injection_field(box, map.w, map.h, region.c_s);

    for (int i : indices) {
        const int tok = i - 1;
        for (int p = 0; p < map.pixels(); ++p) {
            double& a = map.data.at(frame, p, tok);
            a = a * weight.v[p] + inject.v[p];
        }
    }
}

void edit_temporal_map(TemporalAttnMap& map, const GuidanceRegion& region) {
    const int n_f = map.frames();
    if (static_cast<size_t>(n_f) != region.schedule.bbox.size())
        throw std::invalid_argument("edit_temporal_map: schedule length != frame count");

    for (int i = 0; i < n_f; ++i) {
        for (int j = 0; j < n_f; ++j) {
            const BBox pair_box = bbox_hull(region.schedule.bbox[i], region.schedule.bbox[j]);
            const double d = static_cast<double>(std::abs(i - j)) / n_f;
            const PixelRegion pr = bbox_pixel_region(pair_box, map.w, map.h);
            const Grid weight = spatial_weight_field(pr, region.c_w);
            const Grid inject = temporal_injection_field(pair_box, map.w, map.h, region.c_m, d);
            for (int p = 0; p < map.pixels(); ++p) {
                double& a = map.data.at(p, i, j);
                a = a * weight.v[p] + inject.v[p];
            }
        }
    }
}

namespace {

bool in_edit_window(int t, int t_total, int n) {
    if (t < 1 || t > t_total) throw std::invalid_argument("step t outside [1, T]");
    return t >= t_total - n;
}

}  // namespace

bool should_edit_spatial(int t, const EditSchedule& sched) {
    return in_edit_window(t, sched.t_total, sched.n_s);
}

bool should_edit_temporal(int t, const EditSchedule& sched) {
    return in_edit_window(t, sched.t_total, sched.n_m);
}

}  // namespace boxguide
