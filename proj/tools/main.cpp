#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "boxguide/config.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw boxguide::ValidationError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"keyframed bounding-box trajectory guidance for a toy latent-video denoiser"};
    app.require_subcommand(1);

    CLI::App* run_cmd = app.add_subcommand("run", "execute a run config and write its artifacts");
    std::string config_path, out_dir, dump_spec;
    std::uint64_t seed = 0;
    int steps = 0, frames = 0, trailing = 0, n_s = 0, n_m = 0, n_c = 0;
    bool emit_png = false;

    run_cmd->add_option("--config", config_path, "run config (JSON)")->required();
    run_cmd->add_option("--out", out_dir, "output directory")->required();
    CLI::Option* seed_opt = run_cmd->add_option("--seed", seed, "noise seed override");
    CLI::Option* steps_opt = run_cmd->add_option("--steps", steps, "denoising steps override");
    CLI::Option* frames_opt = run_cmd->add_option("--frames", frames, "frame count override");
    CLI::Option* trailing_opt =
        run_cmd->add_option("--trailing", trailing, "trailing map count override (all subjects)");
    CLI::Option* ns_opt = run_cmd->add_option("--ns", n_s, "spatial edit steps override");
    CLI::Option* nm_opt = run_cmd->add_option("--nm", n_m, "temporal edit steps override");
    CLI::Option* nc_opt = run_cmd->add_option("--nc", n_c, "compositing steps override");
    CLI::Option* dump_opt =
        run_cmd->add_option("--dump-attn", dump_spec, "attention dump selection, e.g. steps=40..36");
    run_cmd->add_flag("--emit-png", emit_png, "also write PNG heatmaps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        boxguide::RunConfig cfg = boxguide::parse_config(read_file(config_path));

        boxguide::CliOverrides overrides;
        if (*seed_opt) overrides.seed = seed;
        if (*steps_opt) overrides.steps = steps;
        if (*frames_opt) overrides.frames = frames;
        if (*trailing_opt) overrides.trailing = trailing;
        if (*ns_opt) overrides.n_s = n_s;
        if (*nm_opt) overrides.n_m = n_m;
        if (*nc_opt) overrides.n_c = n_c;
        if (*dump_opt) overrides.dump_spec = dump_spec;
        overrides.emit_png = emit_png;
        boxguide::apply_overrides(cfg, overrides);
        boxguide::validate_config(cfg);

        boxguide::run_to_directory(cfg, out_dir);
        return 0;
    } catch (const boxguide::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
