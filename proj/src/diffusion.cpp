#include "boxguide/diffusion.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "boxguide/compositing.hpp"
#include "boxguide/rng.hpp"

namespace boxguide {

namespace {

constexpr int kAttnDim = 16;
constexpr std::uint64_t kEmbedderSalt = 0x42d1a3f96c85e07bull;

Matrix random_weights(Rng& rng, int rows, int cols) {
    Matrix w(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& v : w.v) v = rng.gaussian() * scale;
    return w;
}

// (N_F, C, s, s) -> (N_F, s*s, C), tanh squashed
Tensor3 pixel_features(const Tensor4& z) {
    const int n_f = z.n0, c = z.n1, s = z.n2;
    Tensor3 x(n_f, s * s, c);
    for (int f = 0; f < n_f; ++f)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < s; ++y)
                for (int xx = 0; xx < s; ++xx)
                    x.at(f, y * s + xx, ch) = std::tanh(z.at(f, ch, y, xx));
    return x;
}

Tensor4 avg_pool2(const Tensor4& z) {
    const int n_f = z.n0, c = z.n1, s = z.n2 / 2;
    Tensor4 out(n_f, c, s, s);
    for (int f = 0; f < n_f; ++f)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x)
                    out.at(f, ch, y, x) = 0.25 * (z.at(f, ch, 2 * y, 2 * x) +
                                                  z.at(f, ch, 2 * y, 2 * x + 1) +
                                                  z.at(f, ch, 2 * y + 1, 2 * x) +
                                                  z.at(f, ch, 2 * y + 1, 2 * x + 1));
    return out;
}

// (B, M, d_in) x (d_in, d_out) -> (B, M, d_out)
Tensor3 project(const Tensor3& x, const Matrix& w) {
    Tensor3 out(x.n0, x.n1, w.cols, 0.0);
    for (int b = 0; b < x.n0; ++b)
        for (int m = 0; m < x.n1; ++m)
            for (int i = 0; i < x.n2; ++i) {
                const double xv = x.at(b, m, i);
                for (int j = 0; j < w.cols; ++j) out.at(b, m, j) += xv * w.at(i, j);
            }
    return out;
}

// per-frame embedding matrices -> (N_F, N_P, d_out)
Tensor3 project_embeddings(const FrameEmbeddings& emb, const Matrix& w) {
    const int n_f = static_cast<int>(emb.size());
    Tensor3 out(n_f, emb.front().rows, w.cols, 0.0);
    for (int f = 0; f < n_f; ++f)
        for (int m = 0; m < emb[f].rows; ++m)
            for (int i = 0; i < emb[f].cols; ++i) {
                const double xv = emb[f].at(m, i);
                for (int j = 0; j < w.cols; ++j) out.at(f, m, j) += xv * w.at(i, j);
            }
    return out;
}

Tensor3 transpose01(const Tensor3& x) {
    Tensor3 out(x.n1, x.n0, x.n2);
    for (int i = 0; i < x.n0; ++i)
        for (int j = 0; j < x.n1; ++j)
            for (int k = 0; k < x.n2; ++k) out.at(j, i, k) = x.at(i, j, k);
    return out;
}

// (N_F, s*s, C) pixel-major hidden -> (N_F, C, s, s)
Tensor4 to_latent_layout(const Tensor3& h, int s) {
    Tensor4 out(h.n0, h.n2, s, s);
    for (int f = 0; f < h.n0; ++f)
        for (int p = 0; p < h.n1; ++p)
            for (int c = 0; c < h.n2; ++c) out.at(f, c, p / s, p % s) = h.at(f, p, c);
    return out;
}

// dst (N_F, C, 2s, 2s) += nearest-upsampled src (N_F, C, s, s)
void add_upsampled(Tensor4& dst, const Tensor4& src) {
    for (int f = 0; f < src.n0; ++f)
        for (int c = 0; c < src.n1; ++c)
            for (int y = 0; y < dst.n2; ++y)
                for (int x = 0; x < dst.n3; ++x)
                    dst.at(f, c, y, x) += src.at(f, c, y / 2, x / 2);
}

}  // namespace

std::vector<std::string> tokenize(const std::string& prompt) {
    std::istringstream in(prompt);
    std::vector<std::string> tokens;
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return tokens;
}

TokenEmbedder::TokenEmbedder() : salt(kEmbedderSalt) {}

Matrix TokenEmbedder::embed(const std::vector<std::string>& tokens) const {
    if (static_cast<int>(tokens.size()) > max_tokens)
        throw std::invalid_argument("prompt longer than " + std::to_string(max_tokens) + " tokens");
    Matrix m(max_tokens, text_dim, 0.0);
    for (size_t i = 0; i < tokens.size(); ++i) {
        Rng rng(mix64(fnv1a64(tokens[i]) ^ salt));
        double norm2 = 0.0;
        for (int j = 0; j < text_dim; ++j) {
            const double u = rng.uniform(-1.0, 1.0);
            m.at(static_cast<int>(i), j) = u;
            norm2 += u * u;
        }
        const double norm = std::sqrt(norm2);
        for (int j = 0; j < text_dim; ++j) m.at(static_cast<int>(i), j) /= norm;
    }
    return m;
}

ToyDenoiser::ToyDenoiser(std::uint64_t model_seed) {
    Rng rng(model_seed);
    wq16_ = random_weights(rng, kLatentChannels, kAttnDim);
    wk16_ = random_weights(rng, kTextDim, kAttnDim);
    wv16_ = random_weights(rng, kTextDim, kLatentChannels);
    wq8_ = random_weights(rng, kLatentChannels, kAttnDim);
    wk8_ = random_weights(rng, kTextDim, kAttnDim);
    wv8_ = random_weights(rng, kTextDim, kLatentChannels);
    wqm_ = random_weights(rng, kLatentChannels, kAttnDim);
    wkm_ = random_weights(rng, kLatentChannels, kAttnDim);
    wvm_ = random_weights(rng, kLatentChannels, kLatentChannels);
}

Tensor4 ToyDenoiser::predict_eps(const Tensor4& z, const FrameEmbeddings& embeddings, int t,
                                 const GuidanceRegion* region, const EditSchedule& sched,
                                 MapCapture* capture) const {
    const int n_f = z.n0;
    if (z.n1 != kLatentChannels || z.n2 != kLatentSize || z.n3 != kLatentSize)
        throw std::invalid_argument("latent must be (N_F, 4, 16, 16)");
    if (static_cast<int>(embeddings.size()) != n_f)
        throw std::invalid_argument("one embedding matrix per frame required");
    if (!all_finite(z.v))
        throw std::runtime_error("non-finite latent entering denoiser at step " + std::to_string(t));

    const Tensor3 x16 = pixel_features(z);
    const Tensor4 z8 = avg_pool2(z);
    const Tensor3 x8 = pixel_features(z8);
    const bool edit_s = region != nullptr && should_edit_spatial(t, sched);
    const bool edit_m = region != nullptr && should_edit_temporal(t, sched);

    // spatial cross-attention, 16x16
    SpatialAttnMap a16 = spatial_cross_attention(project(x16, wq16_),
                                                 project_embeddings(embeddings, wk16_),
                                                 kLatentSize, kLatentSize);
    if (capture) capture->on_spatial(t, "sattn16", EditPhase::pre, a16);
    if (edit_s) {
        for (int f = 0; f < n_f; ++f) edit_spatial_map(a16, *region, f);
        if (capture) capture->on_spatial(t, "sattn16", EditPhase::post, a16);
    }
    const Tensor3 h16 = attention_output(a16.data, project_embeddings(embeddings, wv16_));

    // spatial cross-attention, 8x8
    SpatialAttnMap a8 = spatial_cross_attention(project(x8, wq8_),
                                                project_embeddings(embeddings, wk8_),
                                                kLatentSize / 2, kLatentSize / 2);
    if (capture) capture->on_spatial(t, "sattn8", EditPhase::pre, a8);
    if (edit_s) {
        for (int f = 0; f < n_f; ++f) edit_spatial_map(a8, *region, f);
        if (capture) capture->on_spatial(t, "sattn8", EditPhase::post, a8);
    }
    const Tensor3 h8 = attention_output(a8.data, project_embeddings(embeddings, wv8_));

    // temporal attention, 8x8, the single editable temporal layer
    const Tensor3 xm = transpose01(x8);
    TemporalAttnMap am = temporal_attention(project(xm, wqm_), project(xm, wkm_),
                                            kLatentSize / 2, kLatentSize / 2);
    if (capture) capture->on_temporal(t, "tattn8", EditPhase::pre, am);
    if (edit_m) {
        edit_temporal_map(am, *region);
        if (capture) capture->on_temporal(t, "tattn8", EditPhase::post, am);
    }
    const Tensor3 hm = attention_output(am.data, project(xm, wvm_));

    Tensor4 eps = to_latent_layout(h16, kLatentSize);
    add_upsampled(eps, to_latent_layout(h8, kLatentSize / 2));
    add_upsampled(eps, to_latent_layout(transpose01(hm), kLatentSize / 2));
    if (!all_finite(eps.v))
        throw std::runtime_error("non-finite activations at step " + std::to_string(t));
    return eps;
}

double alpha_bar(int step, int t_total) {
    const double c = std::cos(1.5707963267948966 * (static_cast<double>(step) / (t_total + 1)));
    return c * c;
}

Tensor4 seeded_noise(int frames, std::uint64_t seed) {
    Tensor4 z(frames, kLatentChannels, kLatentSize, kLatentSize);
    Rng rng(seed);
    for (double& v : z.v) v = rng.gaussian();
    return z;
}

Tensor4 denoise_step(const ToyDenoiser& denoiser, const Tensor4& z, int t,
                     const FrameEmbeddings& cond, const FrameEmbeddings& uncond,
                     const GuidanceRegion* region, const EditSchedule& sched, double cfg_scale,
                     MapCapture* capture) {
    if (t < 1 || t > sched.t_total) throw std::invalid_argument("denoise_step: t outside [1, T]");

    const Tensor4 eps_u = denoiser.predict_eps(z, uncond, t, nullptr, sched, nullptr);
    const Tensor4 eps_c = denoiser.predict_eps(z, cond, t, region, sched, capture);

    Tensor4 eps = eps_u;
    for (size_t i = 0; i < eps.v.size(); ++i)
        eps.v[i] = eps_u.v[i] + cfg_scale * (eps_c.v[i] - eps_u.v[i]);

    const double ab_t = alpha_bar(t, sched.t_total);
    const double ab_prev = alpha_bar(t - 1, sched.t_total);
    const double sq_ab_t = std::sqrt(ab_t);
    const double sq_1m_t = std::sqrt(1.0 - ab_t);
    const double sq_ab_p = std::sqrt(ab_prev);
    const double sq_1m_p = std::sqrt(1.0 - ab_prev);

    Tensor4 next = z;
    for (size_t i = 0; i < next.v.size(); ++i) {
        const double x0 = (z.v[i] - sq_1m_t * eps.v[i]) / sq_ab_t;
        next.v[i] = sq_ab_p * x0 + sq_1m_p * eps.v[i];
    }
    if (!all_finite(next.v))
        throw std::runtime_error("non-finite latent after step " + std::to_string(t));
    return next;
}

GuidanceRegion build_guidance_region(const SubjectConfig& subject, int frames,
                                     const TokenEmbedder& embedder) {
    if (subject.keyframes.empty()) throw std::invalid_argument("subject has no keyframes");
    const int prompt_len = static_cast<int>(subject.keyframes.front().tokens.size());
    for (const Keyframe& k : subject.keyframes)
        if (static_cast<int>(k.tokens.size()) != prompt_len)
            throw std::invalid_argument("keyframe prompts must have equal token counts");
    for (int i : subject.subject_indices)
        if (i < 1 || i > prompt_len)
            throw std::invalid_argument("subject word index " + std::to_string(i) +
                                        " outside prompt of length " + std::to_string(prompt_len));

    GuidanceRegion region;
    region.c_w = subject.c_w;
    region.c_s = subject.c_s;
    region.c_m = subject.c_m;
    region.subject_indices = subject.subject_indices;
    region.trailing_indices = trailing_indices(prompt_len, subject.trailing_count, kMaxTokens);
    region.schedule.bbox = interpolate_bboxes(subject.keyframes, frames);

    std::vector<std::pair<int, Matrix>> keys;
    keys.reserve(subject.keyframes.size());
    for (const Keyframe& k : subject.keyframes) keys.emplace_back(k.frame, embedder.embed(k.tokens));
    region.schedule.embedding = interpolate_embeddings(keys, frames);
    return region;
}

EditSchedule make_edit_schedule(const RunConfig& cfg) {
    return EditSchedule{cfg.sampler.steps, cfg.schedule.spatial_steps, cfg.schedule.temporal_steps,
                        cfg.schedule.compositing_steps};
}

namespace {

// Routes conditional-branch maps into the dump (for selected steps) and
// keeps the map the trajectory metrics are computed from.
class RunCapture : public MapCapture {
public:
    RunCapture(AttentionDump* dump, const DumpSelection* selection, std::string pass,
               int metrics_step)
        : dump_(dump), selection_(selection), pass_(std::move(pass)), metrics_step_(metrics_step) {}

    void on_spatial(int t, const char* layer, EditPhase phase, const SpatialAttnMap& map) override {
        if (selection_->contains(t))
            dump_->records[DumpKey{pass_, t, layer, MapKind::spatial, phase}] =
                DumpRecord{map.data, map.w, map.h};
        if (t == metrics_step_ && std::string_view(layer) == "sattn16") metrics_map_ = map;
    }

    void on_temporal(int t, const char* layer, EditPhase phase,
                     const TemporalAttnMap& map) override {
        if (selection_->contains(t))
            dump_->records[DumpKey{pass_, t, layer, MapKind::temporal, phase}] =
                DumpRecord{map.data, map.w, map.h};
    }

    const SpatialAttnMap* metrics_map() const {
        return metrics_map_.data.v.empty() ? nullptr : &metrics_map_;
    }

private:
    AttentionDump* dump_;
    const DumpSelection* selection_;
    std::string pass_;
    int metrics_step_;
    SpatialAttnMap metrics_map_;
};

class DumpOnlyCapture : public MapCapture {
public:
    DumpOnlyCapture(AttentionDump* dump, const DumpSelection* selection, std::string pass)
        : dump_(dump), selection_(selection), pass_(std::move(pass)) {}

    void on_spatial(int t, const char* layer, EditPhase phase, const SpatialAttnMap& map) override {
        if (selection_->contains(t))
            dump_->records[DumpKey{pass_, t, layer, MapKind::spatial, phase}] =
                DumpRecord{map.data, map.w, map.h};
    }

    void on_temporal(int t, const char* layer, EditPhase phase,
                     const TemporalAttnMap& map) override {
        if (selection_->contains(t))
            dump_->records[DumpKey{pass_, t, layer, MapKind::temporal, phase}] =
                DumpRecord{map.data, map.w, map.h};
    }

private:
    AttentionDump* dump_;
    const DumpSelection* selection_;
    std::string pass_;
};

}  // namespace

std::unique_ptr<MapCapture> make_dump_capture(AttentionDump* dump, const DumpSelection* selection,
                                              std::string pass) {
    return std::make_unique<DumpOnlyCapture>(dump, selection, std::move(pass));
}

SingleRunOutput run_single_subject(const RunConfig& cfg, int subject_index,
                                   std::uint64_t noise_seed, const std::string& pass,
                                   const GenerateOptions& opt, int capture_window) {
    const int t_total = cfg.sampler.steps;
    const int n_f = cfg.sampler.frames;

    const TokenEmbedder embedder;
    const GuidanceRegion region =
        build_guidance_region(cfg.subjects.at(subject_index), n_f, embedder);
    const EditSchedule sched = make_edit_schedule(cfg);
    const ToyDenoiser denoiser;

    const FrameEmbeddings& cond = region.schedule.embedding;
    const FrameEmbeddings uncond(n_f, Matrix(kMaxTokens, kTextDim, 0.0));

    SingleRunOutput out;
    const int metrics_step = std::max(t_total - sched.n_s, 1);
    RunCapture capture(&out.dump, &cfg.dump, pass, metrics_step);

    Tensor4 z = seeded_noise(n_f, noise_seed);
    for (int t = t_total; t >= 1; --t) {
        if (capture_window >= 0 && t >= t_total - capture_window) out.window_latents[t] = z;
        const GuidanceRegion* active = opt.apply_guidance ? &region : nullptr;
        z = denoise_step(denoiser, z, t, cond, uncond, active, sched, cfg.sampler.cfg_scale,
                         &capture);
    }
    out.latent = LatentVideo{std::move(z), 0};
    if (capture.metrics_map() != nullptr)
        out.metrics =
            build_subject_metrics(*capture.metrics_map(), region, metrics_step, subject_index);
    return out;
}

GenerateResult generate(const RunConfig& cfg, const GenerateOptions& opt) {
    if (cfg.subjects.empty()) throw std::invalid_argument("config has no subjects");
    if (cfg.composed_prompt.has_value()) return run_composed_denoise(cfg, opt);

    SingleRunOutput single = run_single_subject(cfg, 0, cfg.sampler.seed, "single", opt, -1);
    GenerateResult result;
    result.latent = std::move(single.latent);
    result.dump = std::move(single.dump);
    result.metrics.subjects.push_back(std::move(single.metrics));
    return result;
}

}  // namespace boxguide
