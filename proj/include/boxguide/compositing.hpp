#ifndef BOXGUIDE_COMPOSITING_HPP
#define BOXGUIDE_COMPOSITING_HPP

#include <vector>

#include "boxguide/diffusion.hpp"
#include "boxguide/geometry.hpp"
#include "boxguide/guidance.hpp"

namespace boxguide {

// Per-subject latents at one denoising step plus their box schedules.
struct SubjectLatentSet {
    std::vector<Tensor4> latents;           // each (N_F, C, h, w)
    std::vector<std::vector<BBox>> bboxes;  // per subject, N_F entries
};

// Blend weight on the composed latent: 0 at t = T (subject latent wins),
// 1 at t = T - N_C. Callers gate t to the compositing window.
double compositing_weight(int t, int t_total, int n_c);

// Inside each covered pixel, averages w*z + (1-w)*z_r over the covering
// subjects; pixels outside every box pass through untouched.
Tensor4 composite_latents(const Tensor4& z, const SubjectLatentSet& subjects, int t,
                          const EditSchedule& sched);

// Runs one guided denoising per subject, then the composed pass: compositing
// before each windowed step, plain denoising with the composed prompt after.
GenerateResult run_composed_denoise(const RunConfig& cfg, const GenerateOptions& opt = {});

}  // namespace boxguide

#endif  // BOXGUIDE_COMPOSITING_HPP
