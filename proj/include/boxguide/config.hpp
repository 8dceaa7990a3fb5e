#ifndef BOXGUIDE_CONFIG_HPP
#define BOXGUIDE_CONFIG_HPP

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "boxguide/run_config.hpp"

namespace boxguide {

// Config or input rejection; maps to exit code 1 at the CLI.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Parses a UTF-8 JSON document into a fully validated RunConfig with
// defaults filled. Unknown keys and violated invariants are rejected with
// path-qualified messages.
RunConfig parse_config(const std::string& text);

// Semantic checks only; used after CLI overrides mutate a parsed config.
void validate_config(const RunConfig& cfg);

nlohmann::json config_to_json(const RunConfig& cfg);

// "steps=40..36" or "steps=40,39,12" -> descending unique step list.
std::vector<int> parse_dump_spec(const std::string& spec);

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::optional<int> frames;
    std::optional<int> trailing;  // applies to every subject
    std::optional<int> n_s;
    std::optional<int> n_m;
    std::optional<int> n_c;
    std::optional<std::string> dump_spec;
    bool emit_png = false;
};

// Flag values beat file values beat defaults.
void apply_overrides(RunConfig& cfg, const CliOverrides& overrides);

// Executes the config and writes latents, metrics, and heatmaps under
// out_dir; prints a one-line summary per subject. Partial outputs are
// removed on failure.
void run_to_directory(const RunConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace boxguide

#endif  // BOXGUIDE_CONFIG_HPP
