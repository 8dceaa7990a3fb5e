#ifndef BOXGUIDE_RENDER_HPP
#define BOXGUIDE_RENDER_HPP

#include <cstdint>
#include <vector>

#include "boxguide/tensor.hpp"

namespace boxguide {

struct GrayImage {
    int w = 0;
    int h = 0;
    std::vector<std::uint8_t> px;  // row-major
};

// Lays tiles out row-major on a rows = floor(sqrt(N)), cols = ceil(N/rows)
// grid. Each tile is min-max normalized to [0, 255] on its own; a constant
// tile maps to 128. Unused cells are black.
GrayImage compose_heatmap_grid(const std::vector<Grid>& tiles);

// Binary PGM (P5, maxval 255).
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);

// 8-bit grayscale PNG (stored-deflate zlib stream; no external codec).
std::vector<std::uint8_t> encode_png(const GrayImage& img);

// compose + encode_pgm in one step.
std::vector<std::uint8_t> render_heatmap_grid(const std::vector<Grid>& tiles);

}  // namespace boxguide

#endif  // BOXGUIDE_RENDER_HPP
