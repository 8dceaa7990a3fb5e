#ifndef BOXGUIDE_GUIDANCE_HPP
#define BOXGUIDE_GUIDANCE_HPP

#include <vector>

#include "boxguide/attention.hpp"
#include "boxguide/geometry.hpp"

namespace boxguide {

// Everything needed to steer one subject: its per-frame schedule, the token
// indices it edits (1-based: subject words plus trailing padding positions),
// and the editing coefficients.
struct GuidanceRegion {
    FrameSchedule schedule;
    std::vector<int> subject_indices;   // within [1, |P|]
    std::vector<int> trailing_indices;  // within [|P|+1, N_P]
    double c_w = 0.9;                   // attenuation outside the box, in (0, 1]
    double c_s = 0.1;                   // spatial injection strength
    double c_m = 0.001;                 // temporal injection strength

    std::vector<int> edited_indices() const;  // union of subject and trailing
};

// Editing/compositing windows counted in descending steps from T_total.
struct EditSchedule {
    int t_total = 40;
    int n_s = 5;
    int n_m = 5;
    int n_c = 5;
};

// Contiguous 1-based token positions immediately after the prompt:
// {prompt_len+1, ..., prompt_len+count}. Errors past n_tokens_max.
std::vector<int> trailing_indices(int prompt_len, int count, int n_tokens_max);

// W: 1 inside the region, c_w outside.
Grid spatial_weight_field(const PixelRegion& region, double c_w);

// S_s: c_s * gaussian_window inside the box, 0 outside.
Grid spatial_injection_field(const BBox& bbox, int w, int h, double c_s);

// S_m: c_m * (1 - 2d) * gaussian_window inside the box, 0 outside, where d is
// the normalized temporal distance between the frame pair.
Grid temporal_injection_field(const BBox& bbox, int w, int h, double c_m, double d);

// Eq. A := A (.) W + S applied at frame f to every edited token slice.
void edit_spatial_map(SpatialAttnMap& map, const GuidanceRegion& region, int frame);

// Same edit per frame pair (i, j) on the hull of B_i and B_j with
// d = |i - j| / N_F.
void edit_temporal_map(TemporalAttnMap& map, const GuidanceRegion& region);

// Editing is active in the early steps t in {T, ..., T - N}.
bool should_edit_spatial(int t, const EditSchedule& sched);
bool should_edit_temporal(int t, const EditSchedule& sched);

}  // namespace boxguide

#endif  // BOXGUIDE_GUIDANCE_HPP
