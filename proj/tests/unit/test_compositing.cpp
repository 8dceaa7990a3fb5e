#include <bit>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"

#include "boxguide/compositing.hpp"
#include "boxguide/config.hpp"
#include "boxguide/rng.hpp"

using namespace boxguide;

namespace {

Tensor4 random_latent(std::mt19937& rng, int n_f) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Tensor4 z(n_f, kLatentChannels, kLatentSize, kLatentSize);
    for (double& v : z.v) v = u(rng);
    return z;
}

SubjectLatentSet make_set(std::vector<Tensor4> latents, std::vector<BBox> boxes, int n_f) {
    SubjectLatentSet set;
    set.latents = std::move(latents);
    for (const BBox& b : boxes) set.bboxes.emplace_back(n_f, b);
    return set;
}

}  // namespace

TEST_CASE("compositing weight endpoints and midpoint") {
    CHECK(compositing_weight(40, 40, 10) == 0.0);
    CHECK(compositing_weight(30, 40, 10) == 1.0);
    CHECK(compositing_weight(35, 40, 10) == 0.5);
    CHECK_THROWS_AS(compositing_weight(29, 40, 10), std::invalid_argument);
    CHECK_THROWS_AS(compositing_weight(41, 40, 10), std::invalid_argument);
    CHECK_THROWS_AS(compositing_weight(40, 40, 0), std::invalid_argument);
}

TEST_CASE("weight is non-decreasing as t descends through the window") {
    double prev = -1.0;
    for (int t = 40; t >= 30; --t) {
        const double w = compositing_weight(t, 40, 10);
        CHECK(w >= prev);
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
        prev = w;
    }
}

TEST_CASE("at t = T a sole subject replaces the latent inside its box") {
    std::mt19937 rng(3);
    const int n_f = 3;
    const Tensor4 z = random_latent(rng, n_f);
    const Tensor4 sub = random_latent(rng, n_f);
    const BBox box{0.2, 0.2, 0.6, 0.6};
    const SubjectLatentSet set = make_set({sub}, {box}, n_f);
    const EditSchedule sched{40, 5, 5, 5};
    const Tensor4 out = composite_latents(z, set, 40, sched);

    const Mask mask = bbox_pixel_region(box, kLatentSize, kLatentSize).mask;
    for (int f = 0; f < n_f; ++f)
        for (int c = 0; c < kLatentChannels; ++c)
            for (int y = 0; y < kLatentSize; ++y)
                for (int x = 0; x < kLatentSize; ++x) {
                    if (mask.at(x, y))
                        CHECK(out.at(f, c, y, x) == sub.at(f, c, y, x));
                    else
                        CHECK(out.at(f, c, y, x) == z.at(f, c, y, x));
                }
}

TEST_CASE("pixels outside every box are bit-identical at every windowed step") {
    std::mt19937 rng(7);
    const int n_f = 2;
    const Tensor4 z = random_latent(rng, n_f);
    const BBox a{0.1, 0.1, 0.4, 0.4}, b{0.5, 0.5, 0.9, 0.9};
    const SubjectLatentSet set = make_set({random_latent(rng, n_f), random_latent(rng, n_f)},
                                          {a, b}, n_f);
    const EditSchedule sched{40, 5, 5, 10};
    const Mask ma = bbox_pixel_region(a, kLatentSize, kLatentSize).mask;
    const Mask mb = bbox_pixel_region(b, kLatentSize, kLatentSize).mask;
    for (int t = 40; t >= 30; --t) {
        const Tensor4 out = composite_latents(z, set, t, sched);
        for (int f = 0; f < n_f; ++f)
            for (int c = 0; c < kLatentChannels; ++c)
                for (int y = 0; y < kLatentSize; ++y)
                    for (int x = 0; x < kLatentSize; ++x)
                        if (!ma.at(x, y) && !mb.at(x, y))
                            CHECK(out.at(f, c, y, x) == z.at(f, c, y, x));
    }
}

TEST_CASE("overlapping subjects at w = 0 average inside the overlap") {
    std::mt19937 rng(11);
    const int n_f = 2;
    const Tensor4 z = random_latent(rng, n_f);
    const Tensor4 s0 = random_latent(rng, n_f);
    const Tensor4 s1 = random_latent(rng, n_f);
    const BBox a{0.1, 0.1, 0.6, 0.6}, b{0.4, 0.4, 0.9, 0.9};
    const SubjectLatentSet set = make_set({s0, s1}, {a, b}, n_f);
    const EditSchedule sched{40, 5, 5, 5};
    const Tensor4 out = composite_latents(z, set, 40, sched);

    const Mask ma = bbox_pixel_region(a, kLatentSize, kLatentSize).mask;
    const Mask mb = bbox_pixel_region(b, kLatentSize, kLatentSize).mask;
    for (int f = 0; f < n_f; ++f)
        for (int c = 0; c < kLatentChannels; ++c)
            for (int y = 0; y < kLatentSize; ++y)
                for (int x = 0; x < kLatentSize; ++x)
                    if (ma.at(x, y) && mb.at(x, y))
                        CHECK(out.at(f, c, y, x) ==
                              doctest::Approx(0.5 * (s0.at(f, c, y, x) + s1.at(f, c, y, x)))
                                  .epsilon(1e-14));
}

TEST_CASE("general step matches the per-pixel loop oracle") {
    std::mt19937 rng(13);
    const int n_f = 2;
    const Tensor4 z = random_latent(rng, n_f);
    const Tensor4 s0 = random_latent(rng, n_f);
    const Tensor4 s1 = random_latent(rng, n_f);
    const BBox a{0.05, 0.2, 0.55, 0.7}, b{0.35, 0.4, 0.95, 0.95};
    const SubjectLatentSet set = make_set({s0, s1}, {a, b}, n_f);
    const EditSchedule sched{40, 5, 5, 8};
    const int t = 36;
    const Tensor4 out = composite_latents(z, set, t, sched);

    const double w = 1.0 - static_cast<double>(8 - (40 - t)) / 8;
    const Mask ma = bbox_pixel_region(a, kLatentSize, kLatentSize).mask;
    const Mask mb = bbox_pixel_region(b, kLatentSize, kLatentSize).mask;
    for (int f = 0; f < n_f; ++f)
        for (int c = 0; c < kLatentChannels; ++c)
            for (int y = 0; y < kLatentSize; ++y)
                for (int x = 0; x < kLatentSize; ++x) {
                    double sum = 0.0;
                    int covering = 0;
                    if (ma.at(x, y)) {
                        sum += w * z.at(f, c, y, x) + (1.0 - w) * s0.at(f, c, y, x);
                        ++covering;
                    }
                    if (mb.at(x, y)) {
                        sum += w * z.at(f, c, y, x) + (1.0 - w) * s1.at(f, c, y, x);
                        ++covering;
                    }
                    const double want = covering ? sum / covering : z.at(f, c, y, x);
                    CHECK(out.at(f, c, y, x) == doctest::Approx(want).epsilon(1e-12));
                }
}

TEST_CASE("subject order does not change the composite") {
    std::mt19937 rng(17);
    const int n_f = 2;
    const Tensor4 z = random_latent(rng, n_f);
    const Tensor4 s0 = random_latent(rng, n_f);
    const Tensor4 s1 = random_latent(rng, n_f);
    const BBox a{0.1, 0.1, 0.7, 0.7}, b{0.3, 0.3, 0.9, 0.9};
    const EditSchedule sched{40, 5, 5, 6};
    const Tensor4 fwd = composite_latents(z, make_set({s0, s1}, {a, b}, n_f), 37, sched);
    const Tensor4 rev = composite_latents(z, make_set({s1, s0}, {b, a}, n_f), 37, sched);
    CHECK(fwd.v == rev.v);
}

TEST_CASE("composite is affine in the composed latent") {
    std::mt19937 rng(19);
    const int n_f = 2;
    const Tensor4 z0 = random_latent(rng, n_f);
    const Tensor4 z1 = random_latent(rng, n_f);
    const SubjectLatentSet set = make_set({random_latent(rng, n_f)}, {BBox{0.2, 0.2, 0.8, 0.8}}, n_f);
    const EditSchedule sched{40, 5, 5, 6};

    Tensor4 blend = z0;
    for (size_t i = 0; i < blend.v.size(); ++i) blend.v[i] = 0.25 * z0.v[i] + 0.75 * z1.v[i];
    const Tensor4 lhs = composite_latents(blend, set, 38, sched);
    const Tensor4 c0 = composite_latents(z0, set, 38, sched);
    const Tensor4 c1 = composite_latents(z1, set, 38, sched);
    for (size_t i = 0; i < lhs.v.size(); ++i)
        CHECK(lhs.v[i] == doctest::Approx(0.25 * c0.v[i] + 0.75 * c1.v[i]).epsilon(1e-12));
}

TEST_CASE("composite input validation") {
    std::mt19937 rng(23);
    const Tensor4 z = random_latent(rng, 2);
    const EditSchedule sched{40, 5, 5, 5};
    CHECK_THROWS_AS(composite_latents(z, SubjectLatentSet{}, 40, sched), std::invalid_argument);

    SubjectLatentSet bad_frames = make_set({random_latent(rng, 2)}, {BBox{0.1, 0.1, 0.5, 0.5}}, 3);
    CHECK_THROWS_AS(composite_latents(z, bad_frames, 40, sched), std::invalid_argument);

    SubjectLatentSet bad_shape = make_set({random_latent(rng, 3)}, {BBox{0.1, 0.1, 0.5, 0.5}}, 2);
    CHECK_THROWS_AS(composite_latents(z, bad_shape, 40, sched), std::invalid_argument);

    const EditSchedule no_window{40, 5, 5, 0};
    SubjectLatentSet ok = make_set({random_latent(rng, 2)}, {BBox{0.1, 0.1, 0.5, 0.5}}, 2);
    CHECK_NOTHROW(composite_latents(z, ok, 40, no_window));
    CHECK_THROWS_AS(composite_latents(z, ok, 39, no_window), std::invalid_argument);
}

namespace {

RunConfig tiny_two_subject_config() {
    RunConfig cfg;
    cfg.sampler = SamplerSettings{6, 9.0, 4, 77};
    cfg.schedule = ScheduleConfig{2, 2, 2};
    SubjectConfig cat;
    cat.keyframes = {Keyframe{0, BBox{0.05, 0.3, 0.35, 0.7}, {"a", "cat"}},
                     Keyframe{3, BBox{0.6, 0.3, 0.9, 0.7}, {"a", "cat"}}};
    cat.subject_indices = {2};
    cat.trailing_count = 4;
    SubjectConfig dog = cat;
    dog.keyframes = {Keyframe{0, BBox{0.55, 0.3, 0.9, 0.7}, {"a", "dog"}},
                     Keyframe{3, BBox{0.1, 0.3, 0.4, 0.7}, {"a", "dog"}}};
    cfg.subjects = {cat, dog};
    cfg.composed_prompt = "a cat and a dog on the road";
    return cfg;
}

}  // namespace

TEST_CASE("degenerate composed pipeline: one subject, zero-step window") {
    RunConfig cfg = tiny_two_subject_config();
    cfg.subjects.resize(1);
    cfg.schedule.compositing_steps = 0;
    const GenerateResult got = run_composed_denoise(cfg);

    // reference: substitute the subject's seed noise inside its box at t = T,
    // then denoise plainly under the composed prompt
    const int t_total = cfg.sampler.steps, n_f = cfg.sampler.frames;
    const EditSchedule sched = make_edit_schedule(cfg);
    const TokenEmbedder embedder;
    const Matrix composed = embedder.embed(tokenize(*cfg.composed_prompt));
    const FrameEmbeddings cond(n_f, composed);
    const FrameEmbeddings uncond(n_f, Matrix(kMaxTokens, kTextDim, 0.0));
    const ToyDenoiser denoiser;

    const SingleRunOutput sub = run_single_subject(cfg, 0, derive_seed(cfg.sampler.seed, 0),
                                                   "subject0", GenerateOptions{}, 0);
    SubjectLatentSet set;
    set.latents.push_back(sub.window_latents.at(t_total));
    set.bboxes.push_back(interpolate_bboxes(cfg.subjects[0].keyframes, n_f));

    Tensor4 z = seeded_noise(n_f, cfg.sampler.seed);
    z = composite_latents(z, set, t_total, sched);
    for (int t = t_total; t >= 1; --t)
        z = denoise_step(denoiser, z, t, cond, uncond, nullptr, sched, cfg.sampler.cfg_scale,
                         nullptr);
    CHECK(got.latent.data.v == z.v);
}

TEST_CASE("composed pipeline is deterministic and windowed") {
    const RunConfig cfg = tiny_two_subject_config();
    const GenerateResult a = run_composed_denoise(cfg);
    const GenerateResult b = run_composed_denoise(cfg);
    CHECK(a.latent.data.v == b.latent.data.v);
    CHECK(a.metrics.subjects.size() == 2);
    REQUIRE(a.latent.data.n0 == cfg.sampler.frames);
}

TEST_CASE("composed demo reproduces the recorded golden latent") {
    namespace fs = std::filesystem;
    std::ifstream cfg_in(fs::path(BOXGUIDE_CONFIG_DIR) / "two_subject.json");
    REQUIRE(cfg_in);
    const std::string text{std::istreambuf_iterator<char>(cfg_in),
                           std::istreambuf_iterator<char>()};
    const GenerateResult result = generate(parse_config(text));

    std::ifstream golden(fs::path(BOXGUIDE_GOLDEN_DIR) / "composed_demo_latent.f64",
                         std::ios::binary);
    REQUIRE(golden);
    const std::vector<char> bytes{std::istreambuf_iterator<char>(golden),
                                  std::istreambuf_iterator<char>()};
    REQUIRE(bytes.size() == result.latent.data.v.size() * sizeof(double));
    size_t mismatches = 0;
    for (size_t i = 0; i < result.latent.data.v.size(); ++i) {
        std::uint64_t want = 0;
        for (int b = 7; b >= 0; --b)
            want = (want << 8) | static_cast<std::uint8_t>(bytes[i * 8 + b]);
        if (std::bit_cast<std::uint64_t>(result.latent.data.v[i]) != want) ++mismatches;
    }
    CHECK(mismatches == 0);
}
