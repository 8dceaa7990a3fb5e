#include "boxguide/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace boxguide {

namespace {

void require_finite(const Tensor3& t, const char* name) {
    if (!all_finite(t.v)) throw std::invalid_argument(std::string(name) + ": non-finite input");
}

// Softmax over the last axis with max-subtraction.
void softmax_last(Tensor3& t) {
    const int n = t.n2;
    for (int i = 0; i < t.n0; ++i) {
        for (int j = 0; j < t.n1; ++j) {
            double* row = &t.v[(static_cast<size_t>(i) * t.n1 + j) * n];
            const double m = *std::max_element(row, row + n);
            double sum = 0.0;
            for (int k = 0; k < n; ++k) {
                row[k] = std::exp(row[k] - m);
                sum += row[k];
            }
            for (int k = 0; k < n; ++k) row[k] /= sum;
        }
    }
}

}  // namespace

Tensor3 scaled_dot_attention(const Tensor3& q, const Tensor3& k) {
    if (q.n0 != k.n0 || q.n2 != k.n2)
        throw std::invalid_argument("scaled_dot_attention: Q and K shapes incompatible");
    require_finite(q, "Q");
    require_finite(k, "K");

    const double scale = 1.0 / std::sqrt(static_cast<double>(q.n2));
    Tensor3 logits(q.n0, q.n1, k.n1);
    for (int b = 0; b < q.n0; ++b) {
        for (int m = 0; m < q.n1; ++m) {
            for (int n = 0; n < k.n1; ++n) {
                double dot = 0.0;
                for (int d = 0; d < q.n2; ++d) dot += q.at(b, m, d) * k.at(b, n, d);
                logits.at(b, m, n) = dot * scale;
            }
        }
    }
    softmax_last(logits);
    return logits;
}

SpatialAttnMap spatial_cross_attention(const Tensor3& q, const Tensor3& k, int w, int h) {
    if (q.n1 != w * h) throw std::invalid_argument("spatial_cross_attention: d_h must equal w*h");
    return SpatialAttnMap{scaled_dot_attention(q, k), w, h};
}

TemporalAttnMap temporal_attention(const Tensor3& q, const Tensor3& k, int w, int h) {
    if (q.n0 != w * h) throw std::invalid_argument("temporal_attention: d_h must equal w*h");
    if (q.n1 != k.n1) throw std::invalid_argument("temporal_attention: frame counts differ");
    return TemporalAttnMap{scaled_dot_attention(q, k), w, h};
}

Tensor3 attention_output(const Tensor3& a, const Tensor3& v) {
    if (a.n0 != v.n0 || a.n2 != v.n1)
        throw std::invalid_argument("attention_output: A and V shapes incompatible");
    Tensor3 out(a.n0, a.n1, v.n2, 0.0);
    for (int b = 0; b < a.n0; ++b) {
        for (int m = 0; m < a.n1; ++m) {
            for (int n = 0; n < a.n2; ++n) {
                const double w = a.at(b, m, n);
                for (int d = 0; d < v.n2; ++d) out.at(b, m, d) += w * v.at(b, n, d);
            }
        }
    }
    return out;
}

}  // namespace boxguide
