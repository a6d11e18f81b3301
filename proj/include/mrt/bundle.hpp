#ifndef MRT_BUNDLE_HPP
#define MRT_BUNDLE_HPP

#include <filesystem>

#include "mrt/canvas.hpp"

namespace mrt {

// On-disk design bundle, format "mrt-bundle/1": a directory holding
// manifest.json plus one straight-alpha 8-bit RGBA PNG per layer, named
// layer_{z}.png. The loader premultiplies; the saver un-premultiplies.
inline constexpr const char* kBundleFormat = "mrt-bundle/1";

struct Straight8 {  // straight-alpha byte image, the file-boundary form
    int width = 0;
    int height = 0;
    std::vector<uint8_t> px;  // RGBA

    Straight8() = default;
    Straight8(int w, int h) : width(w), height(h), px(size_t(w) * h * 4, 0) {}
    uint8_t* at(int x, int y) { return px.data() + (size_t(y) * width + x) * 4; }
    const uint8_t* at(int x, int y) const { return px.data() + (size_t(y) * width + x) * 4; }
};

RgbaImage premultiply(const Straight8& img);
Straight8 unpremultiply(const RgbaImage& img);

void write_png(const std::filesystem::path& path, const Straight8& img);
Straight8 read_png(const std::filesystem::path& path);

void save_bundle(const std::filesystem::path& dir, const LayeredDesign& design);
LayeredDesign load_bundle(const std::filesystem::path& dir);

// Flat raster I/O for the image-to-layers entry point.
void save_raster(const std::filesystem::path& path, const RgbaImage& img);
RgbaImage load_raster(const std::filesystem::path& path);

}  // namespace mrt

#endif
