#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"

#include "boxguide/config.hpp"
#include "boxguide/diffusion.hpp"

using namespace boxguide;
namespace fs = std::filesystem;

namespace {

const char* kMinimalConfig = R"({
  "seed": 7,
  "subjects": [{
    "keyframes": {
      "0":  {"bbox": [0.1, 0.3, 0.4, 0.7], "prompt": "an astronaut walking on the moon"},
      "23": {"bbox": [0.6, 0.3, 0.9, 0.7], "prompt": "an astronaut walking on the moon"}
    }
  }]
})";

std::string tiny_config_text(int steps = 6, int frames = 4, const char* extra = "") {
    std::ostringstream out;
    out << R"({"seed": 3, "steps": )" << steps << R"(, "frames": )" << frames
        << R"(, "schedule": {"spatial_steps": 2, "temporal_steps": 2, "compositing_steps": 2},)"
        << R"( "subjects": [{"keyframes": {)"
        << R"("0": {"bbox": [0.05, 0.3, 0.35, 0.7], "prompt": "an astronaut"},)"
        << R"(")" << frames - 1 << R"(": {"bbox": [0.6, 0.3, 0.9, 0.7], "prompt": "an astronaut"}},)"
        << R"( "subject_indices": [2], "trailing_count": 6}])" << extra << "}";
    return out.str();
}

std::set<std::string> list_files(const fs::path& dir) {
    std::set<std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file()) out.insert(fs::relative(entry.path(), dir).string());
    return out;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("minimal config resolves to the documented defaults") {
    const RunConfig cfg = parse_config(kMinimalConfig);
    CHECK(cfg.sampler.seed == 7);
    CHECK(cfg.sampler.steps == 40);
    CHECK(cfg.sampler.cfg_scale == 9.0);
    CHECK(cfg.sampler.frames == 24);
    CHECK(cfg.schedule.spatial_steps == 5);
    CHECK(cfg.schedule.temporal_steps == 5);
    CHECK(cfg.schedule.compositing_steps == 5);
    REQUIRE(cfg.subjects.size() == 1);
    CHECK(cfg.subjects[0].trailing_count == 10);
    CHECK(cfg.subjects[0].c_w == 0.9);
    CHECK(cfg.subjects[0].c_s == 0.1);
    CHECK(cfg.subjects[0].c_m == 0.001);
    // no explicit subject words: every prompt position is constrained
    CHECK(cfg.subjects[0].subject_indices == std::vector<int>{1, 2, 3, 4, 5, 6});
    CHECK_FALSE(cfg.composed_prompt.has_value());
    CHECK(cfg.dump.steps.empty());
    CHECK_FALSE(cfg.emit_png);
}

TEST_CASE("compositing window defaults to the spatial window") {
    const std::string text = tiny_config_text();
    RunConfig cfg = parse_config(R"({"seed": 1, "schedule": {"spatial_steps": 3}, "subjects": [{
        "keyframes": {"0": {"bbox": [0.1,0.1,0.5,0.5], "prompt": "a cat"},
                      "23": {"bbox": [0.5,0.5,0.9,0.9], "prompt": "a cat"}}}]})");
    CHECK(cfg.schedule.spatial_steps == 3);
    CHECK(cfg.schedule.temporal_steps == 5);
    CHECK(cfg.schedule.compositing_steps == 3);
}

TEST_CASE("parse-serialize round trip is lossless") {
    const RunConfig cfg = parse_config(tiny_config_text());
    const RunConfig again = parse_config(config_to_json(cfg).dump());
    CHECK(cfg == again);

    const RunConfig minimal = parse_config(kMinimalConfig);
    CHECK(minimal == parse_config(config_to_json(minimal).dump()));
}

TEST_CASE("validation errors carry the offending path") {
    // right <= left
    CHECK_THROWS_WITH_AS(
        parse_config(R"({"seed": 1, "subjects": [{"keyframes": {
            "0": {"bbox": [0.5, 0.1, 0.2, 0.9], "prompt": "a cat"},
            "23": {"bbox": [0.1, 0.1, 0.9, 0.9], "prompt": "a cat"}}}]})"),
        "config.subjects[0].keyframes.0.bbox: need 0 <= left < right <= 1 and 0 <= top < bottom <= 1",
        ValidationError);

    // two subjects need a composed prompt
    const char* two = R"({"seed": 1, "subjects": [
        {"keyframes": {"0": {"bbox": [0.1,0.1,0.4,0.4], "prompt": "a cat"},
                       "23": {"bbox": [0.5,0.5,0.9,0.9], "prompt": "a cat"}}},
        {"keyframes": {"0": {"bbox": [0.5,0.5,0.9,0.9], "prompt": "a dog"},
                       "23": {"bbox": [0.1,0.1,0.4,0.4], "prompt": "a dog"}}}]})";
    CHECK_THROWS_WITH_AS(parse_config(two),
                         "config.composed_prompt: required with more than one subject",
                         ValidationError);

    CHECK_THROWS_WITH_AS(parse_config(R"({"seed": 1, "subjects": [], "typo_key": 3})"),
                         "config: unknown key 'typo_key'", ValidationError);

    // trailing past the tokenizer capacity
    CHECK_THROWS_AS(parse_config(R"({"seed": 1, "subjects": [{"trailing_count": 76, "keyframes": {
        "0": {"bbox": [0.1,0.1,0.4,0.4], "prompt": "a cat"},
        "23": {"bbox": [0.5,0.5,0.9,0.9], "prompt": "a cat"}}}]})"),
                    ValidationError);

    // keyframe coverage
    CHECK_THROWS_WITH_AS(parse_config(R"({"seed": 1, "subjects": [{"keyframes": {
        "1": {"bbox": [0.1,0.1,0.4,0.4], "prompt": "a cat"},
        "23": {"bbox": [0.5,0.5,0.9,0.9], "prompt": "a cat"}}}]})"),
                         "config.subjects[0].keyframes: missing keyframe at frame 0",
                         ValidationError);

    // subject index out of the prompt
    CHECK_THROWS_AS(parse_config(R"({"seed": 1, "subjects": [{"subject_indices": [3], "keyframes": {
        "0": {"bbox": [0.1,0.1,0.4,0.4], "prompt": "a cat"},
        "23": {"bbox": [0.5,0.5,0.9,0.9], "prompt": "a cat"}}}]})"),
                    ValidationError);

    // frame out of timeline, mixed prompt lengths, bad dump step
    CHECK_THROWS_AS(parse_config(tiny_config_text(6, 4, R"(, "dump": {"steps": [9]})")),
                    ValidationError);
    CHECK_THROWS_AS(parse_config(R"({"seed": 1, "frames": 4, "subjects": [{"keyframes": {
        "0": {"bbox": [0.1,0.1,0.4,0.4], "prompt": "a cat"},
        "3": {"bbox": [0.5,0.5,0.9,0.9], "prompt": "a cat sitting"}}}]})"),
                    ValidationError);
    CHECK_THROWS_AS(parse_config(R"({"seed": 1})"), ValidationError);
    CHECK_THROWS_AS(parse_config(R"({"subjects": []})"), ValidationError);
    CHECK_THROWS_AS(parse_config("not json"), ValidationError);
}

TEST_CASE("dump spec parsing") {
    CHECK(parse_dump_spec("steps=40..36") == std::vector<int>{40, 39, 38, 37, 36});
    CHECK(parse_dump_spec("steps=36..40") == std::vector<int>{40, 39, 38, 37, 36});
    CHECK(parse_dump_spec("steps=40,39,12") == std::vector<int>{40, 39, 12});
    CHECK(parse_dump_spec("steps=5,7..6,5") == std::vector<int>{7, 6, 5});
    CHECK_THROWS_AS(parse_dump_spec("40..36"), ValidationError);
    CHECK_THROWS_AS(parse_dump_spec("steps=a..b"), ValidationError);
    CHECK_THROWS_AS(parse_dump_spec("steps="), ValidationError);
}

TEST_CASE("flag overrides beat file values") {
    RunConfig cfg = parse_config(tiny_config_text());
    CliOverrides o;
    o.seed = 99;
    o.trailing = 0;
    o.n_s = 1;
    o.dump_spec = "steps=6..5";
    apply_overrides(cfg, o);
    CHECK(cfg.sampler.seed == 99);
    CHECK(cfg.sampler.frames == 4);  // untouched file value survives
    CHECK(cfg.subjects[0].trailing_count == 0);
    CHECK(cfg.schedule.spatial_steps == 1);
    CHECK(cfg.schedule.temporal_steps == 2);
    CHECK(cfg.dump.steps == std::vector<int>{6, 5});
    CHECK_NOTHROW(validate_config(cfg));

    o.steps = 3;  // makes schedule and dump inconsistent
    apply_overrides(cfg, o);
    CHECK_THROWS_AS(validate_config(cfg), ValidationError);
}

TEST_CASE("run writes a deterministic artifact tree") {
    const RunConfig cfg = parse_config(tiny_config_text(6, 4, R"(, "dump": {"steps": [6, 5]})"));
    const fs::path base = fs::temp_directory_path() / "boxguide_test_run";
    fs::remove_all(base);
    run_to_directory(cfg, base / "a");
    run_to_directory(cfg, base / "b");

    const auto files = list_files(base / "a");
    CHECK(files.contains("config_resolved.json"));
    CHECK(files.contains("latent_final.f64"));
    CHECK(files.contains("latent_final.json"));
    CHECK(files.contains("metrics.json"));
    CHECK(files.contains("attn/single_t006_sattn16_pre.pgm"));
    CHECK(files.contains("attn/single_t006_sattn16_post.pgm"));
    CHECK(files.contains("attn/single_t006_tattn8_pre_self.pgm"));
    CHECK(files.contains("attn/single_t006_tattn8_pre_cross.pgm"));
    CHECK(files.contains("attn/single_t005_sattn8_post.pgm"));

    // dumps exist only for the selected steps
    for (const std::string& f : files)
        if (f.starts_with("attn/")) CHECK((f.find("_t006_") != std::string::npos ||
                                           f.find("_t005_") != std::string::npos));

    CHECK(files == list_files(base / "b"));
    for (const std::string& f : files) CHECK(slurp(base / "a" / f) == slurp(base / "b" / f));

    // latent payload: 4 frames x 4 channels x 16 x 16 doubles
    CHECK(fs::file_size(base / "a" / "latent_final.f64") == 4 * 4 * 16 * 16 * 8);
    fs::remove_all(base);
}

TEST_CASE("png emission is opt-in") {
    RunConfig cfg = parse_config(tiny_config_text(6, 4, R"(, "dump": {"steps": [6]})"));
    cfg.emit_png = true;
    const fs::path base = fs::temp_directory_path() / "boxguide_test_png";
    fs::remove_all(base);
    run_to_directory(cfg, base);
    const auto files = list_files(base);
    CHECK(files.contains("attn/single_t006_sattn16_pre.png"));
    fs::remove_all(base);
}

TEST_CASE("a failing run leaves no partial outputs") {
    RunConfig cfg = parse_config(tiny_config_text());
    cfg.sampler.frames = 0;  // breaks generate after validation is bypassed
    const fs::path base = fs::temp_directory_path() / "boxguide_test_fail";
    fs::remove_all(base);
    CHECK_THROWS(run_to_directory(cfg, base));
    CHECK((!fs::exists(base) || list_files(base).empty()));
    fs::remove_all(base);
}

TEST_CASE("trailing ablation lowers the token-averaged in-box mass") {
    RunConfig with = parse_config(tiny_config_text());
    RunConfig without = with;
    without.subjects[0].trailing_count = 0;
    const GenerateResult a = generate(with);
    const GenerateResult b = generate(without);
    REQUIRE(a.metrics.subjects.size() == 1);
    REQUIRE(b.metrics.subjects.size() == 1);
    CHECK(a.metrics.subjects[0].mean_mass_in_bbox > b.metrics.subjects[0].mean_mass_in_bbox);
}
