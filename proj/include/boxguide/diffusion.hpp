#ifndef BOXGUIDE_DIFFUSION_HPP
#define BOXGUIDE_DIFFUSION_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "boxguide/attention.hpp"
#include "boxguide/geometry.hpp"
#include "boxguide/guidance.hpp"
#include "boxguide/metrics.hpp"
#include "boxguide/run_config.hpp"

namespace boxguide {

inline constexpr int kMaxTokens = 77;  // tokenizer capacity N_P
inline constexpr int kTextDim = 32;
inline constexpr int kLatentChannels = 4;
inline constexpr int kLatentSize = 16;

std::vector<std::string> tokenize(const std::string& prompt);

// Deterministic text-encoder stand-in: each token maps to a fixed unit-norm
// vector from a seeded hash; padding rows stay zero, so padding positions
// carry attention only through editing.
struct TokenEmbedder {
    std::uint64_t salt;
    int text_dim = kTextDim;
    int max_tokens = kMaxTokens;

    TokenEmbedder();

    Matrix embed(const std::vector<std::string>& tokens) const;  // (max_tokens x text_dim)
};

struct LatentVideo {
    Tensor4 data;  // (N_F, C, h, w)
    int t = 0;
};

using FrameEmbeddings = std::vector<Matrix>;  // one (N_P x d_text) per frame

// Receives each attention map computed on the conditional branch.
struct MapCapture {
    virtual ~MapCapture() = default;
    virtual void on_spatial(int t, const char* layer, EditPhase phase,
                            const SpatialAttnMap& map) = 0;
    virtual void on_temporal(int t, const char* layer, EditPhase phase,
                             const TemporalAttnMap& map) = 0;
};

// Fixed-random-weight denoiser standing in for the UNet: spatial
// cross-attention at 16x16 and 8x8, one temporal attention block at 8x8
// (the editable temporal layer). Weights are a pure function of the seed.
class ToyDenoiser {
public:
    explicit ToyDenoiser(std::uint64_t model_seed = kDefaultModelSeed);

    // Noise prediction for one branch. When `region` is set, spatial maps
    // are edited per frame and the temporal map per pair, gated by `sched`.
    Tensor4 predict_eps(const Tensor4& z, const FrameEmbeddings& embeddings, int t,
                        const GuidanceRegion* region, const EditSchedule& sched,
                        MapCapture* capture) const;

    static constexpr std::uint64_t kDefaultModelSeed = 0x7a6c1f9d2b34e581ull;

private:
    Matrix wq16_, wk16_, wv16_;
    Matrix wq8_, wk8_, wv8_;
    Matrix wqm_, wkm_, wvm_;
};

double alpha_bar(int step, int t_total);

Tensor4 seeded_noise(int frames, std::uint64_t seed);

// One reverse step: conditional + unconditional prediction, classifier-free
// combination eps_u + s * (eps_c - eps_u), deterministic DDIM update.
// Editing and capture run on the conditional branch only.
Tensor4 denoise_step(const ToyDenoiser& denoiser, const Tensor4& z, int t,
                     const FrameEmbeddings& cond, const FrameEmbeddings& uncond,
                     const GuidanceRegion* region, const EditSchedule& sched, double cfg_scale,
                     MapCapture* capture);

struct GenerateOptions {
    bool apply_guidance = true;  // false: same prompts, no edits or compositing
};

struct GenerateResult {
    LatentVideo latent;
    AttentionDump dump;
    MetricsReport metrics;
};

// Full reverse loop from seeded noise at t = T down to t = 0. Single subject
// runs directly; a composed prompt routes through the compositing pipeline.
GenerateResult generate(const RunConfig& cfg, const GenerateOptions& opt = {});

// Internals shared with the compositing pipeline -----------------------------

GuidanceRegion build_guidance_region(const SubjectConfig& subject, int frames,
                                     const TokenEmbedder& embedder);

struct SingleRunOutput {
    LatentVideo latent;
    AttentionDump dump;
    SubjectMetrics metrics;
    std::map<int, Tensor4> window_latents;  // latent at entry of captured steps
};

// One guided single-subject denoising. capture_window >= 0 additionally
// records the latent at entry of steps {T, ..., T - capture_window}.
SingleRunOutput run_single_subject(const RunConfig& cfg, int subject_index,
                                   std::uint64_t noise_seed, const std::string& pass,
                                   const GenerateOptions& opt, int capture_window);

EditSchedule make_edit_schedule(const RunConfig& cfg);

// Capture that stores maps of selected steps into `dump` under `pass`.
std::unique_ptr<MapCapture> make_dump_capture(AttentionDump* dump, const DumpSelection* selection,
                                              std::string pass);

}  // namespace boxguide

#endif  // BOXGUIDE_DIFFUSION_HPP
