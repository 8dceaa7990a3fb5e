#include "boxguide/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace boxguide {

namespace {

void normalize_tile(const Grid& tile, GrayImage& img, int x0, int y0) {
    const auto [lo_it, hi_it] = std::minmax_element(tile.v.begin(), tile.v.end());
    const double lo = *lo_it, hi = *hi_it;
    for (int y = 0; y < tile.h; ++y) {
        for (int x = 0; x < tile.w; ++x) {
            std::uint8_t p = 128;
            if (hi > lo) {
                const double t = (tile.at(x, y) - lo) / (hi - lo);
                p = static_cast<std::uint8_t>(std::llround(255.0 * t));
            }
            img.px[static_cast<size_t>(y0 + y) * img.w + (x0 + x)] = p;
        }
    }
}

void append_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t crc32(const std::uint8_t* data, size_t n, std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

std::uint32_t adler32(const std::vector<std::uint8_t>& data) {
    std::uint32_t a = 1, b = 0;
    for (std::uint8_t c : data) {
        a = (a + c) % 65521;
        b = (b + a) % 65521;
    }
    return (b << 16) | a;
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
    append_u32be(out, static_cast<std::uint32_t>(payload.size()));
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    append_u32be(out, crc32(body.data(), body.size()));
}

}  // namespace

GrayImage compose_heatmap_grid(const std::vector<Grid>& tiles) {
    if (tiles.empty()) throw std::invalid_argument("compose_heatmap_grid: empty selection");
    const int tw = tiles.front().w, th = tiles.front().h;
    for (const Grid& t : tiles) {
        if (t.w != tw || t.h != th)
            throw std::invalid_argument("compose_heatmap_grid: tiles must share one size");
        if (!all_finite(t.v)) throw std::invalid_argument("compose_heatmap_grid: non-finite tile");
    }

    const int n = static_cast<int>(tiles.size());
    const int rows = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(n)))));
    const int cols = (n + rows - 1) / rows;

    GrayImage img;
    img.w = cols * tw;
    img.h = rows * th;
    img.px.assign(static_cast<size_t>(img.w) * img.h, 0);
    for (int i = 0; i < n; ++i)
        normalize_tile(tiles[i], img, (i % cols) * tw, (i / cols) * th);
    return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
    const std::string header =
        "P5\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.px.begin(), img.px.end());
    return out;
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
    // filter byte 0 per scanline
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.h) * (img.w + 1));
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), img.px.begin() + static_cast<size_t>(y) * img.w,
                   img.px.begin() + static_cast<size_t>(y + 1) * img.w);
    }

    // zlib stream of stored (uncompressed) deflate blocks
    std::vector<std::uint8_t> zlib{0x78, 0x01};
    size_t off = 0;
    while (off < raw.size()) {
        const size_t len = std::min<size_t>(65535, raw.size() - off);
        const bool final = off + len == raw.size();
        zlib.push_back(final ? 1 : 0);
        zlib.push_back(static_cast<std::uint8_t>(len & 0xff));
        zlib.push_back(static_cast<std::uint8_t>(len >> 8));
        zlib.push_back(static_cast<std::uint8_t>(~len & 0xff));
        zlib.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xff));
        zlib.insert(zlib.end(), raw.begin() + off, raw.begin() + off + len);
        off += len;
    }
    append_u32be(zlib, adler32(raw));

    std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<std::uint8_t> ihdr;
    append_u32be(ihdr, static_cast<std::uint32_t>(img.w));
    append_u32be(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", zlib);
    append_chunk(out, "IEND", {});
    return out;
}

std::vector<std::uint8_t> render_heatmap_grid(const std::vector<Grid>& tiles) {
    return encode_pgm(compose_heatmap_grid(tiles));
}

}  // namespace boxguide
