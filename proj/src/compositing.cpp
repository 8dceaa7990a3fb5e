#include "boxguide/compositing.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "boxguide/rng.hpp"

namespace boxguide {

double compositing_weight(int t, int t_total, int n_c) {
    if (n_c < 1) throw std::invalid_argument("compositing_weight: N_C must be >= 1");
    if (t > t_total || t < t_total - n_c)
        throw std::invalid_argument("compositing_weight: step " + std::to_string(t) +
                                    " outside window [" + std::to_string(t_total - n_c) + ", " +
                                    std::to_string(t_total) + "]");
    return 1.0 - static_cast<double>(n_c - (t_total - t)) / n_c;
}

Tensor4 composite_latents(const Tensor4& z, const SubjectLatentSet& subjects, int t,
                          const EditSchedule& sched) {
    const size_t n_r = subjects.latents.size();
    if (n_r == 0) throw std::invalid_argument("composite_latents: empty subject set");
    if (subjects.bboxes.size() != n_r)
        throw std::invalid_argument("composite_latents: bbox schedule count != subject count");
    for (const Tensor4& s : subjects.latents)
        if (!s.same_shape(z)) throw std::invalid_argument("composite_latents: latent shape mismatch");
    for (const auto& schedule : subjects.bboxes)
        if (static_cast<int>(schedule.size()) != z.n0)
            throw std::invalid_argument("composite_latents: mismatched frame counts");

    const double w = sched.n_c == 0 ? 0.0 : compositing_weight(t, sched.t_total, sched.n_c);
    if (sched.n_c == 0 && t != sched.t_total)
        throw std::invalid_argument("composite_latents: step outside the compositing window");

    const int n_f = z.n0, channels = z.n1, h = z.n2, width = z.n3;
    Tensor4 out = z;
    std::vector<double> vals;
    vals.reserve(n_r);

    for (int f = 0; f < n_f; ++f) {
        std::vector<Mask> masks;
        masks.reserve(n_r);
        for (size_t r = 0; r < n_r; ++r)
            masks.push_back(bbox_pixel_region(subjects.bboxes[r][f], width, h).mask);

        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < width; ++x) {
                for (int c = 0; c < channels; ++c) {
                    vals.clear();
                    for (size_t r = 0; r < n_r; ++r)
                        if (masks[r].at(x, y)) vals.push_back(subjects.latents[r].at(f, c, y, x));
                    if (vals.empty()) continue;
                    // sorted accumulation keeps the blend independent of
                    // subject order, bit for bit
                    std::sort(vals.begin(), vals.end());
                    double sum = 0.0;
                    for (double v : vals) sum += v;
                    out.at(f, c, y, x) =
                        w * z.at(f, c, y, x) + (1.0 - w) * (sum / static_cast<double>(vals.size()));
                }
            }
        }
    }
    return out;
}

GenerateResult run_composed_denoise(const RunConfig& cfg, const GenerateOptions& opt) {
    if (!cfg.composed_prompt.has_value())
        throw std::invalid_argument("run_composed_denoise: composed prompt required");
    const int t_total = cfg.sampler.steps;
    const int n_f = cfg.sampler.frames;
    const int n_r = static_cast<int>(cfg.subjects.size());
    const EditSchedule sched = make_edit_schedule(cfg);

    GenerateResult result;
    std::vector<SingleRunOutput> subject_runs;
    subject_runs.reserve(n_r);
    for (int r = 0; r < n_r; ++r) {
        const std::uint64_t seed = derive_seed(cfg.sampler.seed, static_cast<std::uint64_t>(r));
        subject_runs.push_back(run_single_subject(cfg, r, seed, "subject" + std::to_string(r),
                                                  opt, sched.n_c));
        result.metrics.subjects.push_back(subject_runs.back().metrics);
        result.dump.records.merge(subject_runs.back().dump.records);
    }

    std::vector<std::vector<BBox>> box_schedules;
    box_schedules.reserve(n_r);
    for (int r = 0; r < n_r; ++r)
        box_schedules.push_back(interpolate_bboxes(cfg.subjects[r].keyframes, n_f));

    const TokenEmbedder embedder;
    const Matrix composed = embedder.embed(tokenize(*cfg.composed_prompt));
    const FrameEmbeddings cond(n_f, composed);
    const FrameEmbeddings uncond(n_f, Matrix(kMaxTokens, kTextDim, 0.0));
    const ToyDenoiser denoiser;

    auto capture = make_dump_capture(&result.dump, &cfg.dump, "composed");

    Tensor4 z = seeded_noise(n_f, cfg.sampler.seed);
    for (int t = t_total; t >= 1; --t) {
        if (opt.apply_guidance && t >= t_total - sched.n_c) {
            SubjectLatentSet set;
            for (int r = 0; r < n_r; ++r) {
                set.latents.push_back(subject_runs[r].window_latents.at(t));
                set.bboxes.push_back(box_schedules[r]);
            }
            z = composite_latents(z, set, t, sched);
        }
        z = denoise_step(denoiser, z, t, cond, uncond, nullptr, sched, cfg.sampler.cfg_scale,
                         capture.get());
    }
    result.latent = LatentVideo{std::move(z), 0};
    return result;
}

}  // namespace boxguide
