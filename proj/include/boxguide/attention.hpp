#ifndef BOXGUIDE_ATTENTION_HPP
#define BOXGUIDE_ATTENTION_HPP

#include "boxguide/tensor.hpp"

namespace boxguide {

// Per-frame pixel-to-token attention, data (N_F, d_h, N_P) with d_h = w*h.
// Pixel index p = y*w + x. Rows over the token axis sum to 1 before editing.
struct SpatialAttnMap {
    Tensor3 data;
    int w = 0;
    int h = 0;

    int frames() const { return data.n0; }
    int pixels() const { return data.n1; }
    int tokens() const { return data.n2; }
};

// Per-pixel frame-to-frame attention, data (d_h, N_F, N_F).
struct TemporalAttnMap {
    Tensor3 data;
    int w = 0;
    int h = 0;

    int pixels() const { return data.n0; }
    int frames() const { return data.n1; }
};

// Q (B, M, d) against K (B, N, d): softmax(Q K^T / sqrt(d)) over the last axis.
Tensor3 scaled_dot_attention(const Tensor3& q, const Tensor3& k);

// (N_F, d_h, d) x (N_F, N_P, d) -> (N_F, d_h, N_P), softmax over tokens.
SpatialAttnMap spatial_cross_attention(const Tensor3& q, const Tensor3& k, int w, int h);

// (d_h, N_F, d) x (d_h, N_F, d) -> (d_h, N_F, N_F), softmax over key frames.
TemporalAttnMap temporal_attention(const Tensor3& q, const Tensor3& k, int w, int h);

// Batched A (B, M, N) times V (B, N, d_v) -> (B, M, d_v).
Tensor3 attention_output(const Tensor3& a, const Tensor3& v);

}  // namespace boxguide

#endif  // BOXGUIDE_ATTENTION_HPP
