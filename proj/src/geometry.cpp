#include "boxguide/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace boxguide {

namespace {

void require_valid(const BBox& b) {
    if (!b.valid()) throw std::invalid_argument("invalid bbox: need 0<=left<right<=1, 0<=top<bottom<=1");
}

// Convex combination that cannot leave [min(a,b), max(a,b)] under rounding.
double lerp_clamped(double a, double b, double t) {
    const double x = (1.0 - t) * a + t * b;
    return std::clamp(x, std::min(a, b), std::max(a, b));
}

// Frames must strictly increase and cover both endpoints of the timeline.
void check_key_frames(const std::vector<int>& frames, int n_frames) {
    if (n_frames < 2) throw std::invalid_argument("keyframe timeline needs at least 2 frames");
    if (frames.size() < 2) throw std::invalid_argument("at least 2 keyframes required");
    for (size_t i = 1; i < frames.size(); ++i) {
        if (frames[i] == frames[i - 1])
            throw std::invalid_argument("duplicate keyframe at frame " + std::to_string(frames[i]));
        if (frames[i] < frames[i - 1]) throw std::invalid_argument("keyframes must be sorted by frame");
    }
    if (frames.front() != 0) throw std::invalid_argument("first keyframe must be at frame 0");
    if (frames.back() != n_frames - 1)
        throw std::invalid_argument("last keyframe must be at frame " + std::to_string(n_frames - 1));
}

}  // namespace

BBox bbox_hull(const BBox& a, const BBox& b) {
    return BBox{std::min(a.left, b.left), std::min(a.top, b.top), std::max(a.right, b.right),
                std::max(a.bottom, b.bottom)};
}

PixelRegion bbox_pixel_region(const BBox& bbox, int w, int h) {
    require_valid(bbox);
    if (w < 1 || h < 1) throw std::invalid_argument("resolution must be >= 1");

    PixelRegion r;
    r.w = w;
    r.h = h;
    r.x_lo = static_cast<int>(std::floor(bbox.left * (w - 1)));
    r.x_hi = static_cast<int>(std::ceil(bbox.right * (w - 1)));
    r.y_lo = static_cast<int>(std::floor(bbox.top * (h - 1)));
    r.y_hi = static_cast<int>(std::ceil(bbox.bottom * (h - 1)));
    r.b_w = static_cast<int>(std::ceil((bbox.right - bbox.left) * w));
    r.b_h = static_cast<int>(std::ceil((bbox.bottom - bbox.top) * h));
    if (r.x_hi < r.x_lo || r.y_hi < r.y_lo || r.b_w < 1 || r.b_h < 1)
        throw std::invalid_argument("empty region at this resolution");

    r.mask = Mask(w, h, false);
    for (int y = r.y_lo; y <= r.y_hi; ++y)
        for (int x = r.x_lo; x <= r.x_hi; ++x) r.mask.set(x, y, true);
    return r;
}

Grid gaussian_window(const BBox& bbox, int w, int h) {
    const PixelRegion r = bbox_pixel_region(bbox, w, h);
    const double sx = r.b_w / 2.0;
    const double sy = r.b_h / 2.0;
    const int cx = r.center_x();
    const int cy = r.center_y();

    Grid g(w, h, 0.0);
    for (int y = r.y_lo; y <= r.y_hi; ++y) {
        const double dy = (y - cy) / sy;
        for (int x = r.x_lo; x <= r.x_hi; ++x) {
            const double dx = (x - cx) / sx;
            g.at(x, y) = std::exp(-0.5 * (dx * dx + dy * dy));
        }
    }
    return g;
}

std::vector<BBox> interpolate_bboxes(const std::vector<Keyframe>& keys, int n_frames) {
    std::vector<int> frames;
    frames.reserve(keys.size());
    for (const Keyframe& k : keys) {
        require_valid(k.bbox);
        frames.push_back(k.frame);
    }
    check_key_frames(frames, n_frames);

    std::vector<BBox> out(static_cast<size_t>(n_frames));
    size_t seg = 0;
    for (int f = 0; f < n_frames; ++f) {
        while (seg + 2 < keys.size() && f >= keys[seg + 1].frame) ++seg;
        const Keyframe& kb = keys[seg];
        const Keyframe& ke = keys[seg + 1];
        if (f == kb.frame) {
            out[f] = kb.bbox;
        } else if (f == ke.frame) {
            out[f] = ke.bbox;
        } else {
            const double a = static_cast<double>(f - kb.frame) / (ke.frame - kb.frame);
            out[f] = BBox{lerp_clamped(kb.bbox.left, ke.bbox.left, a),
                          lerp_clamped(kb.bbox.top, ke.bbox.top, a),
                          lerp_clamped(kb.bbox.right, ke.bbox.right, a),
                          lerp_clamped(kb.bbox.bottom, ke.bbox.bottom, a)};
        }
    }
    return out;
}

std::vector<Matrix> interpolate_embeddings(const std::vector<std::pair<int, Matrix>>& keys,
                                           int n_frames) {
    std::vector<int> frames;
    frames.reserve(keys.size());
    for (const auto& [f, m] : keys) {
        frames.push_back(f);
        if (!m.same_shape(keys.front().second))
            throw std::invalid_argument("key embeddings must share one shape");
    }
    check_key_frames(frames, n_frames);

    std::vector<Matrix> out(static_cast<size_t>(n_frames));
    size_t seg = 0;
    for (int f = 0; f < n_frames; ++f) {
        while (seg + 2 < keys.size() && f >= keys[seg + 1].first) ++seg;
        const auto& [fb, mb] = keys[seg];
        const auto& [fe, me] = keys[seg + 1];
        if (f == fb) {
            out[f] = mb;
        } else if (f == fe) {
            out[f] = me;
        } else {
            const double a = static_cast<double>(f - fb) / (fe - fb);
            Matrix m(mb.rows, mb.cols);
            for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = lerp_clamped(mb.v[i], me.v[i], a);
            out[f] = std::move(m);
        }
    }
    return out;
}

}  // namespace boxguide
