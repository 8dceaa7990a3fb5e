#include "boxguide/config.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include "boxguide/compositing.hpp"
#include "boxguide/diffusion.hpp"
#include "boxguide/metrics.hpp"
#include "boxguide/render.hpp"

namespace boxguide {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ValidationError(path + ": " + what);
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& path) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.contains(key)) fail(path, "unknown key '" + key + "'");
}

const json& require_key(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(path, std::string("missing required key '") + key + "'");
    return *it;
}

int get_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<int>();
}

double get_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "must be finite");
    return d;
}

SubjectConfig parse_subject(const json& j, const std::string& path) {
    if (!j.is_object()) fail(path, "expected an object");
    reject_unknown_keys(
        j, {"keyframes", "subject_indices", "trailing_count", "c_w", "c_s", "c_m"}, path);

    SubjectConfig s;
    const json& keyframes = require_key(j, "keyframes", path);
    if (!keyframes.is_object()) fail(path + ".keyframes", "expected an object keyed by frame");
    for (const auto& [frame_key, kf] : keyframes.items()) {
        const std::string kf_path = path + ".keyframes." + frame_key;
        Keyframe key;
        try {
            size_t pos = 0;
            key.frame = std::stoi(frame_key, &pos);
            if (pos != frame_key.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            fail(kf_path, "frame key must be an integer");
        }
        if (!kf.is_object()) fail(kf_path, "expected an object");
        reject_unknown_keys(kf, {"bbox", "prompt"}, kf_path);
        const json& bbox = require_key(kf, "bbox", kf_path);
        if (!bbox.is_array() || bbox.size() != 4)
            fail(kf_path + ".bbox", "expected [left, top, right, bottom]");
        key.bbox = BBox{get_number(bbox[0], kf_path + ".bbox"), get_number(bbox[1], kf_path + ".bbox"),
                        get_number(bbox[2], kf_path + ".bbox"), get_number(bbox[3], kf_path + ".bbox")};
        const json& prompt = require_key(kf, "prompt", kf_path);
        if (!prompt.is_string()) fail(kf_path + ".prompt", "expected a string");
        key.tokens = tokenize(prompt.get<std::string>());
        s.keyframes.push_back(std::move(key));
    }
    std::sort(s.keyframes.begin(), s.keyframes.end(),
              [](const Keyframe& a, const Keyframe& b) { return a.frame < b.frame; });

    if (j.contains("subject_indices")) {
        const json& idx = j["subject_indices"];
        if (!idx.is_array()) fail(path + ".subject_indices", "expected an array");
        for (const json& v : idx)
            s.subject_indices.push_back(get_int(v, path + ".subject_indices"));
        std::sort(s.subject_indices.begin(), s.subject_indices.end());
        s.subject_indices.erase(
            std::unique(s.subject_indices.begin(), s.subject_indices.end()),
            s.subject_indices.end());
    }
    // no explicit subject words: constrain every prompt token
    if (s.subject_indices.empty() && !s.keyframes.empty())
        for (size_t i = 1; i <= s.keyframes.front().tokens.size(); ++i)
            s.subject_indices.push_back(static_cast<int>(i));

    if (j.contains("trailing_count")) s.trailing_count = get_int(j["trailing_count"], path + ".trailing_count");
    if (j.contains("c_w")) s.c_w = get_number(j["c_w"], path + ".c_w");
    if (j.contains("c_s")) s.c_s = get_number(j["c_s"], path + ".c_s");
    if (j.contains("c_m")) s.c_m = get_number(j["c_m"], path + ".c_m");
    return s;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    if (!root.is_object()) throw ValidationError("config: top level must be an object");
    reject_unknown_keys(root,
                        {"seed", "steps", "cfg_scale", "frames", "subjects", "schedule",
                         "composed_prompt", "dump", "emit_png"},
                        "config");

    RunConfig cfg;
    const json& seed = require_key(root, "seed", "config");
    if (!seed.is_number_unsigned() && !seed.is_number_integer()) fail("config.seed", "expected an integer");
    cfg.sampler.seed = seed.get<std::uint64_t>();
    if (root.contains("steps")) cfg.sampler.steps = get_int(root["steps"], "config.steps");
    if (root.contains("cfg_scale"))
        cfg.sampler.cfg_scale = get_number(root["cfg_scale"], "config.cfg_scale");
    if (root.contains("frames")) cfg.sampler.frames = get_int(root["frames"], "config.frames");

    const json& subjects = require_key(root, "subjects", "config");
    if (!subjects.is_array() || subjects.empty()) fail("config.subjects", "expected a non-empty array");
    for (size_t i = 0; i < subjects.size(); ++i)
        cfg.subjects.push_back(parse_subject(subjects[i], "config.subjects[" + std::to_string(i) + "]"));

    if (root.contains("schedule")) {
        const json& sched = root["schedule"];
        if (!sched.is_object()) fail("config.schedule", "expected an object");
        reject_unknown_keys(sched, {"spatial_steps", "temporal_steps", "compositing_steps"},
                            "config.schedule");
        if (sched.contains("spatial_steps"))
            cfg.schedule.spatial_steps = get_int(sched["spatial_steps"], "config.schedule.spatial_steps");
        if (sched.contains("temporal_steps"))
            cfg.schedule.temporal_steps =
                get_int(sched["temporal_steps"], "config.schedule.temporal_steps");
        cfg.schedule.compositing_steps =
            sched.contains("compositing_steps")
                ? get_int(sched["compositing_steps"], "config.schedule.compositing_steps")
                : cfg.schedule.spatial_steps;
    }

    if (root.contains("composed_prompt")) {
        const json& prompt = root["composed_prompt"];
        if (!prompt.is_string()) fail("config.composed_prompt", "expected a string");
        cfg.composed_prompt = prompt.get<std::string>();
    }

    if (root.contains("dump")) {
        const json& dump = root["dump"];
        if (!dump.is_object()) fail("config.dump", "expected an object");
        reject_unknown_keys(dump, {"steps"}, "config.dump");
        if (dump.contains("steps")) {
            if (!dump["steps"].is_array()) fail("config.dump.steps", "expected an array");
            for (const json& v : dump["steps"])
                cfg.dump.steps.push_back(get_int(v, "config.dump.steps"));
            std::sort(cfg.dump.steps.begin(), cfg.dump.steps.end(), std::greater<>());
            cfg.dump.steps.erase(std::unique(cfg.dump.steps.begin(), cfg.dump.steps.end()),
                                 cfg.dump.steps.end());
        }
    }

    if (root.contains("emit_png")) {
        if (!root["emit_png"].is_boolean()) fail("config.emit_png", "expected a boolean");
        cfg.emit_png = root["emit_png"].get<bool>();
    }

    validate_config(cfg);
    return cfg;
}

void validate_config(const RunConfig& cfg) {
    if (cfg.sampler.steps < 1) fail("config.steps", "must be >= 1");
    if (cfg.sampler.frames < 2) fail("config.frames", "must be >= 2");
    if (cfg.sampler.cfg_scale < 0.0) fail("config.cfg_scale", "must be >= 0");

    const auto check_window = [&](int n, const char* name) {
        if (n < 0 || n > cfg.sampler.steps)
            fail(std::string("config.schedule.") + name,
                 "must be in [0, " + std::to_string(cfg.sampler.steps) + "]");
    };
    check_window(cfg.schedule.spatial_steps, "spatial_steps");
    check_window(cfg.schedule.temporal_steps, "temporal_steps");
    check_window(cfg.schedule.compositing_steps, "compositing_steps");

    if (cfg.subjects.empty()) fail("config.subjects", "expected a non-empty array");
    for (size_t i = 0; i < cfg.subjects.size(); ++i) {
        const SubjectConfig& s = cfg.subjects[i];
        const std::string path = "config.subjects[" + std::to_string(i) + "]";

        if (s.keyframes.size() < 2) fail(path + ".keyframes", "at least 2 keyframes required");
        int prompt_len = -1;
        for (const Keyframe& k : s.keyframes) {
            const std::string kf_path = path + ".keyframes." + std::to_string(k.frame);
            if (k.frame < 0 || k.frame >= cfg.sampler.frames)
                fail(kf_path, "frame outside [0, " + std::to_string(cfg.sampler.frames - 1) + "]");
            if (!k.bbox.valid())
                fail(kf_path + ".bbox", "need 0 <= left < right <= 1 and 0 <= top < bottom <= 1");
            if (k.tokens.empty()) fail(kf_path + ".prompt", "prompt has no tokens");
            if (static_cast<int>(k.tokens.size()) > kMaxTokens)
                fail(kf_path + ".prompt", "prompt longer than " + std::to_string(kMaxTokens) + " tokens");
            if (prompt_len < 0) prompt_len = static_cast<int>(k.tokens.size());
            if (static_cast<int>(k.tokens.size()) != prompt_len)
                fail(kf_path + ".prompt", "token count differs between keyframes");
        }
        for (size_t k = 1; k < s.keyframes.size(); ++k)
            if (s.keyframes[k].frame == s.keyframes[k - 1].frame)
                fail(path + ".keyframes", "duplicate frame " + std::to_string(s.keyframes[k].frame));
        if (s.keyframes.front().frame != 0) fail(path + ".keyframes", "missing keyframe at frame 0");
        if (s.keyframes.back().frame != cfg.sampler.frames - 1)
            fail(path + ".keyframes",
                 "missing keyframe at frame " + std::to_string(cfg.sampler.frames - 1));

        if (s.subject_indices.empty()) fail(path + ".subject_indices", "must not be empty");
        for (int idx : s.subject_indices)
            if (idx < 1 || idx > prompt_len)
                fail(path + ".subject_indices", "index " + std::to_string(idx) +
                                                    " outside [1, " + std::to_string(prompt_len) + "]");
        if (s.trailing_count < 0) fail(path + ".trailing_count", "must be >= 0");
        if (prompt_len + s.trailing_count > kMaxTokens)
            fail(path + ".trailing_count", "prompt length " + std::to_string(prompt_len) + " + " +
                                               std::to_string(s.trailing_count) + " exceeds " +
                                               std::to_string(kMaxTokens));
        if (!(s.c_w > 0.0 && s.c_w <= 1.0)) fail(path + ".c_w", "must be in (0, 1]");
        if (s.c_s < 0.0) fail(path + ".c_s", "must be >= 0");
        if (s.c_m < 0.0) fail(path + ".c_m", "must be >= 0");
    }

    if (cfg.subjects.size() > 1 && !cfg.composed_prompt.has_value())
        fail("config.composed_prompt", "required with more than one subject");
    if (cfg.composed_prompt.has_value()) {
        const auto tokens = tokenize(*cfg.composed_prompt);
        if (tokens.empty()) fail("config.composed_prompt", "prompt has no tokens");
        if (static_cast<int>(tokens.size()) > kMaxTokens)
            fail("config.composed_prompt", "prompt longer than " + std::to_string(kMaxTokens) + " tokens");
    }

    for (int t : cfg.dump.steps)
        if (t < 1 || t > cfg.sampler.steps)
            fail("config.dump.steps",
                 "step " + std::to_string(t) + " outside [1, " + std::to_string(cfg.sampler.steps) + "]");
}

nlohmann::json config_to_json(const RunConfig& cfg) {
    json root;
    root["seed"] = cfg.sampler.seed;
    root["steps"] = cfg.sampler.steps;
    root["cfg_scale"] = cfg.sampler.cfg_scale;
    root["frames"] = cfg.sampler.frames;
    root["schedule"] = {{"spatial_steps", cfg.schedule.spatial_steps},
                        {"temporal_steps", cfg.schedule.temporal_steps},
                        {"compositing_steps", cfg.schedule.compositing_steps}};
    root["subjects"] = json::array();
    for (const SubjectConfig& s : cfg.subjects) {
        json keyframes = json::object();
        for (const Keyframe& k : s.keyframes)
            keyframes[std::to_string(k.frame)] = {
                {"bbox", {k.bbox.left, k.bbox.top, k.bbox.right, k.bbox.bottom}},
                {"prompt", join_tokens(k.tokens)}};
        root["subjects"].push_back({{"keyframes", std::move(keyframes)},
                                    {"subject_indices", s.subject_indices},
                                    {"trailing_count", s.trailing_count},
                                    {"c_w", s.c_w},
                                    {"c_s", s.c_s},
                                    {"c_m", s.c_m}});
    }
    if (cfg.composed_prompt.has_value()) root["composed_prompt"] = *cfg.composed_prompt;
    if (!cfg.dump.steps.empty()) root["dump"] = {{"steps", cfg.dump.steps}};
    root["emit_png"] = cfg.emit_png;
    return root;
}

std::vector<int> parse_dump_spec(const std::string& spec) {
    const std::string prefix = "steps=";
    if (spec.rfind(prefix, 0) != 0)
        throw ValidationError("dump spec must look like steps=40..36 or steps=40,39");
    std::vector<int> steps;
    std::string body = spec.substr(prefix.size());
    size_t start = 0;
    while (start <= body.size()) {
        const size_t comma = body.find(',', start);
        const std::string item =
            body.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (item.empty()) throw ValidationError("dump spec: empty item");
        try {
            const size_t dots = item.find("..");
            if (dots == std::string::npos) {
                steps.push_back(std::stoi(item));
            } else {
                const int a = std::stoi(item.substr(0, dots));
                const int b = std::stoi(item.substr(dots + 2));
                const int lo = std::min(a, b), hi = std::max(a, b);
                for (int t = hi; t >= lo; --t) steps.push_back(t);
            }
        } catch (const std::exception&) {
            throw ValidationError("dump spec: bad item '" + item + "'");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    std::sort(steps.begin(), steps.end(), std::greater<>());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    return steps;
}

void apply_overrides(RunConfig& cfg, const CliOverrides& overrides) {
    if (overrides.seed) cfg.sampler.seed = *overrides.seed;
    if (overrides.steps) cfg.sampler.steps = *overrides.steps;
    if (overrides.frames) cfg.sampler.frames = *overrides.frames;
    if (overrides.trailing)
        for (SubjectConfig& s : cfg.subjects) s.trailing_count = *overrides.trailing;
    if (overrides.n_s) cfg.schedule.spatial_steps = *overrides.n_s;
    if (overrides.n_m) cfg.schedule.temporal_steps = *overrides.n_m;
    if (overrides.n_c) cfg.schedule.compositing_steps = *overrides.n_c;
    if (overrides.dump_spec) cfg.dump.steps = parse_dump_spec(*overrides.dump_spec);
    if (overrides.emit_png) cfg.emit_png = true;
}

namespace {

std::vector<std::uint8_t> latent_bytes(const Tensor4& z) {
    std::vector<std::uint8_t> out(z.v.size() * sizeof(double));
    for (size_t i = 0; i < z.v.size(); ++i) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(z.v[i]);
        if constexpr (std::endian::native == std::endian::big) {
            std::uint64_t sw = 0;
            for (int b = 0; b < 8; ++b) sw |= ((bits >> (8 * b)) & 0xffull) << (8 * (7 - b));
            bits = sw;
        }
        std::memcpy(&out[i * 8], &bits, 8);
    }
    return out;
}

json metrics_to_json(const MetricsReport& report) {
    json subjects = json::array();
    for (const SubjectMetrics& sm : report.subjects) {
        json frames = json::array();
        for (const FrameMetrics& fm : sm.frames)
            frames.push_back({{"frame", fm.frame},
                              {"centroid", {fm.centroid_x, fm.centroid_y}},
                              {"argmax", {fm.argmax_x, fm.argmax_y}},
                              {"mass_in_bbox", fm.mass_in_bbox},
                              {"bbox", {fm.bbox.left, fm.bbox.top, fm.bbox.right, fm.bbox.bottom}},
                              {"tracking_error_px", fm.tracking_error_px}});
        subjects.push_back({{"subject", sm.subject},
                            {"step", sm.step},
                            {"mean_tracking_error_px", sm.mean_tracking_error_px},
                            {"mean_mass_in_bbox", sm.mean_mass_in_bbox},
                            {"frames", std::move(frames)}});
    }
    return json{{"subjects", std::move(subjects)}};
}

// Mean field over a set of 1-based token slices at one frame.
Grid token_mean_grid(const DumpRecord& rec, int frame, const std::vector<int>& token_set) {
    Grid g(rec.w, rec.h, 0.0);
    for (int tok : token_set)
        for (int p = 0; p < rec.w * rec.h; ++p) g.v[p] += rec.data.at(frame, p, tok - 1);
    for (double& v : g.v) v /= static_cast<double>(token_set.size());
    return g;
}

class OutputWriter {
public:
    explicit OutputWriter(std::filesystem::path root) : root_(std::move(root)) {}

    void ensure_dir(const std::filesystem::path& dir) {
        std::filesystem::path current;
        for (const auto& part : dir) {
            current /= part;
            if (!std::filesystem::exists(current)) {
                std::filesystem::create_directory(current);
                created_dirs_.push_back(current);
            }
        }
    }

    void write(const std::filesystem::path& rel, const void* data, size_t n) {
        const std::filesystem::path full = root_ / rel;
        ensure_dir(full.parent_path());
        std::ofstream out(full, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + full.string());
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out) throw std::runtime_error("write failed for " + full.string());
        created_files_.push_back(full);
    }

    void write(const std::filesystem::path& rel, const std::vector<std::uint8_t>& bytes) {
        write(rel, bytes.data(), bytes.size());
    }

    void write(const std::filesystem::path& rel, const std::string& text) {
        write(rel, text.data(), text.size());
    }

    void remove_partial_outputs() {
        std::error_code ec;
        for (auto it = created_files_.rbegin(); it != created_files_.rend(); ++it)
            std::filesystem::remove(*it, ec);
        for (auto it = created_dirs_.rbegin(); it != created_dirs_.rend(); ++it)
            std::filesystem::remove(*it, ec);  // only succeeds when empty
    }

private:
    std::filesystem::path root_;
    std::vector<std::filesystem::path> created_files_;
    std::vector<std::filesystem::path> created_dirs_;
};

std::string step_tag(int t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "t%03d", t);
    return buf;
}

void write_heatmaps(OutputWriter& writer, const RunConfig& cfg, const AttentionDump& dump) {
    // token slices rendered per pass: the subject's word indices, or every
    // real token of the composed prompt
    std::map<std::string, std::vector<int>> token_sets;
    if (cfg.composed_prompt.has_value()) {
        for (size_t r = 0; r < cfg.subjects.size(); ++r) {
            std::vector<int> set = cfg.subjects[r].subject_indices;
            if (set.empty())
                for (size_t i = 1; i <= cfg.subjects[r].keyframes.front().tokens.size(); ++i)
                    set.push_back(static_cast<int>(i));
            token_sets["subject" + std::to_string(r)] = std::move(set);
        }
        std::vector<int> composed;
        for (size_t i = 1; i <= tokenize(*cfg.composed_prompt).size(); ++i)
            composed.push_back(static_cast<int>(i));
        token_sets["composed"] = std::move(composed);
    } else {
        std::vector<int> set = cfg.subjects[0].subject_indices;
        if (set.empty())
            for (size_t i = 1; i <= cfg.subjects[0].keyframes.front().tokens.size(); ++i)
                set.push_back(static_cast<int>(i));
        token_sets["single"] = std::move(set);
    }

    for (const auto& [key, rec] : dump.records) {
        const std::string stem = key.pass + "_" + step_tag(key.step) + "_" + key.layer + "_" +
                                 to_string(key.phase);
        if (key.kind == MapKind::spatial) {
            const std::vector<int>& token_set = token_sets.at(key.pass);
            std::vector<Grid> tiles;
            for (int f = 0; f < rec.data.n0; ++f)
                tiles.push_back(token_mean_grid(rec, f, token_set));
            const GrayImage img = compose_heatmap_grid(tiles);
            writer.write(std::filesystem::path("attn") / (stem + ".pgm"), encode_pgm(img));
            if (cfg.emit_png)
                writer.write(std::filesystem::path("attn") / (stem + ".png"), encode_png(img));
        } else {
            const int n_f = rec.data.n1;
            std::vector<Grid> self_tiles, cross_tiles;
            for (int i = 0; i < n_f; ++i) {
                Grid self(rec.w, rec.h), cross(rec.w, rec.h);
                for (int p = 0; p < rec.w * rec.h; ++p) {
                    self.v[p] = rec.data.at(p, i, i);
                    cross.v[p] = rec.data.at(p, 0, i);
                }
                self_tiles.push_back(std::move(self));
                cross_tiles.push_back(std::move(cross));
            }
            for (const auto& [suffix, tiles] :
                 {std::pair{"_self", &self_tiles}, std::pair{"_cross", &cross_tiles}}) {
                const GrayImage img = compose_heatmap_grid(*tiles);
                writer.write(std::filesystem::path("attn") / (stem + suffix + ".pgm"),
                             encode_pgm(img));
                if (cfg.emit_png)
                    writer.write(std::filesystem::path("attn") / (stem + suffix + ".png"),
                                 encode_png(img));
            }
        }
    }
}

}  // namespace

void run_to_directory(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    validate_config(cfg);
    OutputWriter writer(out_dir);
    try {
        writer.ensure_dir(out_dir);
        const GenerateResult result = generate(cfg);

        writer.write("config_resolved.json", config_to_json(cfg).dump(2) + "\n");

        const Tensor4& z = result.latent.data;
        writer.write("latent_final.f64", latent_bytes(z));
        const json sidecar{{"dtype", "float64"},
                           {"byte_order", "little"},
                           {"order", "row-major"},
                           {"shape", {z.n0, z.n1, z.n2, z.n3}}};
        writer.write("latent_final.json", sidecar.dump(2) + "\n");

        writer.write("metrics.json", metrics_to_json(result.metrics).dump(2) + "\n");
        write_heatmaps(writer, cfg, result.dump);

        for (const SubjectMetrics& sm : result.metrics.subjects)
            std::printf("subject %d: mean tracking error %.6f px, mean mass_in_bbox %.6f (step %d)\n",
                        sm.subject, sm.mean_tracking_error_px, sm.mean_mass_in_bbox, sm.step);
    } catch (...) {
        writer.remove_partial_outputs();
        throw;
    }
}

}  // namespace boxguide
