#ifndef BOXGUIDE_METRICS_HPP
#define BOXGUIDE_METRICS_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "boxguide/attention.hpp"
#include "boxguide/guidance.hpp"

namespace boxguide {

enum class MapKind { spatial, temporal };
enum class EditPhase { pre, post };

const char* to_string(MapKind k);
const char* to_string(EditPhase p);

// One captured attention map. `pass` names the denoising pass the map came
// from ("single", "subject0", ..., "composed").
struct DumpKey {
    std::string pass;
    int step = 0;
    std::string layer;
    MapKind kind = MapKind::spatial;
    EditPhase phase = EditPhase::pre;

    auto operator<=>(const DumpKey&) const = default;
};

struct DumpRecord {
    Tensor3 data;  // (N_F, d_h, N_P) spatial, (d_h, N_F, N_F) temporal
    int w = 0;
    int h = 0;
};

struct AttentionDump {
    std::map<DumpKey, DumpRecord> records;
};

// Mass-weighted mean coordinate of a nonnegative field. Errors on zero mass.
std::pair<double, double> attention_centroid(const Grid& field);

// Fraction of total mass on masked pixels. Errors on zero mass.
double mass_in_bbox(const Grid& field, const Mask& region_mask);

// Location of the maximum value; row-major first on ties.
std::pair<int, int> argmax_pixel(const Grid& field);

// One token slice of a spatial map at one frame, as an h x w field.
Grid slice_grid(const SpatialAttnMap& map, int frame, int token);

struct FrameMetrics {
    int frame = 0;
    double centroid_x = 0.0, centroid_y = 0.0;
    int argmax_x = 0, argmax_y = 0;
    double mass_in_bbox = 0.0;  // token-averaged in-box mass fraction
    BBox bbox;
    double tracking_error_px = 0.0;  // centroid distance to the box center
};

struct SubjectMetrics {
    int subject = 0;
    int step = 0;  // denoising step the maps were taken at
    std::vector<FrameMetrics> frames;
    double mean_tracking_error_px = 0.0;
    double mean_mass_in_bbox = 0.0;
};

struct MetricsReport {
    std::vector<SubjectMetrics> subjects;
};

// Per-frame trajectory metrics from one spatial map. Centroid/argmax use the
// mean field over the subject's word slices; mass_in_bbox averages over all
// token slices.
SubjectMetrics build_subject_metrics(const SpatialAttnMap& map, const GuidanceRegion& region,
                                     int step, int subject_index);

}  // namespace boxguide

#endif  // BOXGUIDE_METRICS_HPP
