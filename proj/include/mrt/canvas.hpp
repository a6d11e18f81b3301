#ifndef MRT_CANVAS_HPP
#define MRT_CANVAS_HPP

#include <algorithm>
#include <string>
#include <vector>

#include "mrt/common.hpp"

namespace mrt {

// Canvas-pixel rect, top-left origin. Coordinates may be negative (overflow
// relative to some other frame); width/height are always positive.
struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int x1() const { return x + w; }
    int y1() const { return y + h; }
    bool valid() const { return w > 0 && h > 0; }
    bool contains(const Rect& o) const {
        return o.x >= x && o.y >= y && o.x1() <= x1() && o.y1() <= y1();
    }
    bool operator==(const Rect& o) const = default;

    static Rect bounding(const Rect& a, const Rect& b) {
        int nx = std::min(a.x, b.x);
        int ny = std::min(a.y, b.y);
        return {nx, ny, std::max(a.x1(), b.x1()) - nx, std::max(a.y1(), b.y1()) - ny};
    }
};

// Premultiplied-alpha float RGBA, row-major. 0 <= a <= 1 and r,g,b in [0,a].
// Straight-alpha conversion happens only at file boundaries (see bundle.hpp).
struct RgbaImage {
    int width = 0;
    int height = 0;
    std::vector<float> px;  // 4 floats per pixel

    RgbaImage() = default;
    RgbaImage(int w, int h) : width(w), height(h), px(size_t(w) * h * 4, 0.0f) {}

    float* at(int x, int y) { return px.data() + (size_t(y) * width + x) * 4; }
    const float* at(int x, int y) const { return px.data() + (size_t(y) * width + x) * 4; }

    bool operator==(const RgbaImage& o) const = default;
};

enum class LayerKind { background, foreground };

struct LayerRecord {
    RgbaImage image;  // dimensions equal rect dimensions
    Rect rect;        // placement in canvas coordinates
    int z = 0;        // unique within a design, higher = on top
    LayerKind kind = LayerKind::foreground;
    std::string caption;
};

// Layered document. The canvas is the tight bounding container of bg_rect and
// all layer rects; overflow pixels live on the canvas outside bg_rect.
struct LayeredDesign {
    int canvas_w = 0;
    int canvas_h = 0;
    Rect bg_rect;                     // visible region, inside canvas
    std::vector<LayerRecord> layers;  // sorted by z ascending, background first
    std::string global_caption;

    int foreground_count() const {
        int k = 0;
        for (const auto& l : layers) {
            if (l.kind == LayerKind::foreground) {
                ++k;
            }
        }
        return k;
    }
    const LayerRecord& background() const {
        for (const auto& l : layers) {
            if (l.kind == LayerKind::background) {
                return l;
            }
        }
        throw InputError("design has no background layer");
    }
};

// Source-over on premultiplied pixels: out = fg + (1 - fg.a) * bg, all four
// channels. Throws InputError on dimension mismatch.
RgbaImage over(const RgbaImage& fg, const RgbaImage& bg);

// Writes the layer into a transparent canvas at its rect offset. Pixels
// falling outside the canvas are silently discarded.
RgbaImage place(const LayerRecord& layer, int canvas_w, int canvas_h);

// over-fold of placed layers from lowest z upward onto transparency.
RgbaImage compose(const LayeredDesign& design);

// Exact sub-image copy. Throws InputError if the rect is not inside the image.
RgbaImage visible_crop(const RgbaImage& img, const Rect& bg_rect);

// The fully transparent full-extent base plane.
RgbaImage canvas_layer(const LayeredDesign& design);

// Replaces the layers at `indices` (positions into design.layers, all
// foreground, contiguous in z order) by a single composite layer whose rect is
// the union bounding rect. z of the group = topmost member z; captions are
// concatenated in z order.
LayeredDesign group_layers(const LayeredDesign& design, const std::vector<int>& indices);

// Checks every LayeredDesign invariant; throws InputError with a message on
// the first violation.
void validate(const LayeredDesign& design);

}  // namespace mrt

#endif
