#ifndef MRT_CODEC_HPP
#define MRT_CODEC_HPP

#include "mrt/canvas.hpp"

namespace mrt {

constexpr int kDefaultPatchSize = 8;

// Lossless patch latent: s x s RGBA patches rearranged into C = 4*s^2
// channels. One latent cell per patch; decode inverts encode exactly.
struct LatentGrid {
    int h = 0;  // cells
    int w = 0;  // cells
    int channels = 0;
    std::vector<float> data;  // row-major [h][w][channels]

    LatentGrid() = default;
    LatentGrid(int h_, int w_, int channels_)
        : h(h_), w(w_), channels(channels_), data(size_t(h_) * w_ * channels_, 0.0f) {}

    float* cell(int row, int col) { return data.data() + (size_t(row) * w + col) * channels; }
    const float* cell(int row, int col) const {
        return data.data() + (size_t(row) * w + col) * channels;
    }
    int token_count() const { return h * w; }

    bool operator==(const LatentGrid& o) const = default;
};

// Minimal s-aligned rect containing `rect` (floor the origin, ceil the far
// edge, both toward multiples of s).
Rect snap_rect(const Rect& rect, int s);

// Channel c of cell (i,j) holds pixel (y = i*s + dy, x = j*s + dx) channel ch
// with c = (dy*s + dx)*4 + ch. Throws InputError unless dims divide by s.
LatentGrid encode(const RgbaImage& img, int s = kDefaultPatchSize);

// Exact inverse of encode.
RgbaImage decode(const LatentGrid& z, int s = kDefaultPatchSize);

// Fraction of decoded values outside the premultiplied-valid range; used by
// samplers to log before clamping.
double out_of_range_fraction(const RgbaImage& img);

// Clamp to the premultiplied-valid range: a into [0,1], r,g,b into [0,a].
RgbaImage clamp_premultiplied(const RgbaImage& img);

}  // namespace mrt

#endif
