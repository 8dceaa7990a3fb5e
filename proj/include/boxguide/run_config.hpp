#ifndef BOXGUIDE_RUN_CONFIG_HPP
#define BOXGUIDE_RUN_CONFIG_HPP

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "boxguide/geometry.hpp"

namespace boxguide {

struct SamplerSettings {
    int steps = 40;
    double cfg_scale = 9.0;
    int frames = 24;
    std::uint64_t seed = 0;

    bool operator==(const SamplerSettings&) const = default;
};

struct SubjectConfig {
    std::vector<Keyframe> keyframes;  // sorted by frame; all with equal token counts
    std::vector<int> subject_indices;
    int trailing_count = 10;
    double c_w = 0.9;
    double c_s = 0.1;
    double c_m = 0.001;

    bool operator==(const SubjectConfig&) const = default;
};

struct ScheduleConfig {
    int spatial_steps = 5;
    int temporal_steps = 5;
    int compositing_steps = 5;

    bool operator==(const ScheduleConfig&) const = default;
};

struct DumpSelection {
    std::vector<int> steps;  // descending, unique

    bool contains(int t) const { return std::find(steps.begin(), steps.end(), t) != steps.end(); }
    bool operator==(const DumpSelection&) const = default;
};

struct RunConfig {
    SamplerSettings sampler;
    std::vector<SubjectConfig> subjects;
    ScheduleConfig schedule;
    std::optional<std::string> composed_prompt;  // required with two or more subjects
    DumpSelection dump;
    bool emit_png = false;

    bool operator==(const RunConfig&) const = default;
};

}  // namespace boxguide

#endif  // BOXGUIDE_RUN_CONFIG_HPP
