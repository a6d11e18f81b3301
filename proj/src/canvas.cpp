#include "mrt/canvas.hpp"

#include <algorithm>
#include <set>

namespace mrt {

RgbaImage over(const RgbaImage& fg, const RgbaImage& bg) {
    if (fg.width != bg.width || fg.height != bg.height) {
        throw InputError("over: dimension mismatch");
    }
    RgbaImage out(fg.width, fg.height);
    const size_t n = fg.px.size() / 4;
    for (size_t i = 0; i < n; ++i) {
        const float* f = fg.px.data() + i * 4;
        const float* b = bg.px.data() + i * 4;
        float* o = out.px.data() + i * 4;
        float k = 1.0f - f[3];
        o[0] = f[0] + k * b[0];
        o[1] = f[1] + k * b[1];
        o[2] = f[2] + k * b[2];
        o[3] = f[3] + k * b[3];
    }
    return out;
}

RgbaImage place(const LayerRecord& layer, int canvas_w, int canvas_h) {
    if (canvas_w <= 0 || canvas_h <= 0) {
        throw InputError("place: canvas dimensions must be positive");
    }
    RgbaImage out(canvas_w, canvas_h);
    const Rect& r = layer.rect;
    int x0 = std::max(r.x, 0);
    int y0 = std::max(r.y, 0);
    int x1 = std::min(r.x1(), canvas_w);
    int y1 = std::min(r.y1(), canvas_h);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const float* src = layer.image.at(x - r.x, y - r.y);
            std::copy(src, src + 4, out.at(x, y));
        }
    }
    return out;
}

RgbaImage compose(const LayeredDesign& design) {
    RgbaImage acc(design.canvas_w, design.canvas_h);
    for (const auto& layer : design.layers) {
        acc = over(place(layer, design.canvas_w, design.canvas_h), acc);
    }
    return acc;
}

RgbaImage visible_crop(const RgbaImage& img, const Rect& bg_rect) {
    if (!bg_rect.valid() || bg_rect.x < 0 || bg_rect.y < 0 || bg_rect.x1() > img.width ||
        bg_rect.y1() > img.height) {
        throw InputError("visible_crop: rect out of bounds");
    }
    RgbaImage out(bg_rect.w, bg_rect.h);
    for (int y = 0; y < bg_rect.h; ++y) {
        const float* src = img.at(bg_rect.x, bg_rect.y + y);
        std::copy(src, src + size_t(bg_rect.w) * 4, out.at(0, y));
    }
    return out;
}

RgbaImage canvas_layer(const LayeredDesign& design) {
    return RgbaImage(design.canvas_w, design.canvas_h);
}

LayeredDesign group_layers(const LayeredDesign& design, const std::vector<int>& indices) {
    if (indices.empty()) {
        throw InputError("group_layers: empty index set");
    }
    std::set<int> members(indices.begin(), indices.end());
    for (int i : members) {
        if (i < 0 || i >= int(design.layers.size())) {
            throw InputError("group_layers: index out of range");
        }
        if (design.layers[i].kind == LayerKind::background) {
            throw InputError("group_layers: background cannot be grouped");
        }
    }
    // layers are z-sorted, so z-contiguity == positional contiguity
    int lo = *members.begin();
    int hi = *members.rbegin();
    if (hi - lo + 1 != int(members.size())) {
        throw InputError("group_layers: members must be contiguous in z order");
    }

    Rect grect = design.layers[lo].rect;
    for (int i = lo + 1; i <= hi; ++i) {
        grect = Rect::bounding(grect, design.layers[i].rect);
    }
    RgbaImage gimg(grect.w, grect.h);
    std::string gcaption;
    for (int i = lo; i <= hi; ++i) {
        LayerRecord shifted = design.layers[i];
        shifted.rect.x -= grect.x;
        shifted.rect.y -= grect.y;
        gimg = over(place(shifted, grect.w, grect.h), gimg);
        if (!gcaption.empty()) {
            gcaption += " ";
        }
        gcaption += design.layers[i].caption;
    }

    LayeredDesign out;
    out.canvas_w = design.canvas_w;
    out.canvas_h = design.canvas_h;
    out.bg_rect = design.bg_rect;
    out.global_caption = design.global_caption;
    for (int i = 0; i < lo; ++i) {
        out.layers.push_back(design.layers[i]);
    }
    out.layers.push_back({std::move(gimg), grect, design.layers[hi].z, LayerKind::foreground,
                          std::move(gcaption)});
    for (int i = hi + 1; i < int(design.layers.size()); ++i) {
        out.layers.push_back(design.layers[i]);
    }
    return out;
}

static void validate_image(const RgbaImage& img, const char* what) {
    if (img.width < 1 || img.height < 1) {
        throw InputError(std::string(what) + ": dimensions must be >= 1");
    }
    if (img.px.size() != size_t(img.width) * img.height * 4) {
        throw InputError(std::string(what) + ": pixel buffer size mismatch");
    }
    for (size_t i = 0; i < img.px.size(); i += 4) {
        float a = img.px[i + 3];
        if (!(a >= 0.0f && a <= 1.0f)) {
            throw InputError(std::string(what) + ": alpha out of [0,1]");
        }
        for (int c = 0; c < 3; ++c) {
            float v = img.px[i + c];
            if (!(v >= 0.0f && v <= a + 1e-9f)) {
                throw InputError(std::string(what) + ": color exceeds alpha (not premultiplied)");
            }
        }
    }
}

void validate(const LayeredDesign& d) {
    if (d.canvas_w < 1 || d.canvas_h < 1) {
        throw InputError("design: canvas dimensions must be >= 1");
    }
    Rect canvas{0, 0, d.canvas_w, d.canvas_h};
    if (!d.bg_rect.valid() || !canvas.contains(d.bg_rect)) {
        throw InputError("design: bg_rect must lie inside the canvas");
    }
    if (d.layers.empty()) {
        throw InputError("design: no layers");
    }

    int bg_count = 0;
    int prev_z = 0;
    Rect content = d.bg_rect;
    for (size_t i = 0; i < d.layers.size(); ++i) {
        const auto& l = d.layers[i];
        if (!l.rect.valid()) {
            throw InputError("design: layer rect must have positive extent");
        }
        if (l.image.width != l.rect.w || l.image.height != l.rect.h) {
            throw InputError("design: layer image dimensions must equal rect dimensions");
        }
        validate_image(l.image, "layer image");
        if (i > 0 && l.z <= prev_z) {
            throw InputError("design: layers must be sorted by strictly increasing z");
        }
        prev_z = l.z;
        if (l.kind == LayerKind::background) {
            ++bg_count;
            if (i != 0) {
                throw InputError("design: background must be the lowest layer");
            }
            if (!(l.rect == d.bg_rect)) {
                throw InputError("design: background rect must equal bg_rect");
            }
        }
        content = Rect::bounding(content, l.rect);
    }
    if (bg_count != 1) {
        throw InputError("design: exactly one background layer required");
    }
    if (!(content == canvas)) {
        throw InputError("design: canvas must be the tight container of all content");
    }
}

}  // namespace mrt
