#include "mrt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "mrt/bundle.hpp"

namespace mrt {

using nlohmann::json;

namespace {

struct PaletteEntry {
    const char* name;
    int r, g, b;
};

constexpr PaletteEntry kPalette[] = {
    {"red", 220, 50, 47},    {"orange", 230, 126, 34}, {"yellow", 241, 196, 15},
    {"green", 39, 174, 96},  {"teal", 26, 188, 156},   {"blue", 41, 128, 185},
    {"navy", 44, 62, 80},    {"purple", 142, 68, 173}, {"pink", 255, 105, 180},
    {"brown", 139, 87, 42},  {"white", 236, 240, 241}, {"black", 30, 30, 30},
    {"gray", 127, 140, 141},
};

struct Color8 {
    int r, g, b;
    std::string name;
};

Color8 pick_color(Rng& rng) {
    const auto& p = kPalette[rng.below(std::size(kPalette))];
    auto jitter = [&](int v) { return std::clamp(v + rng.range(-20, 20), 0, 255); };
    return {jitter(p.r), jitter(p.g), jitter(p.b), p.name};
}

enum class Shape { solid_rect, circle, ring, gradient_band, glyph_strip };

const char* shape_name(Shape s) {
    switch (s) {
        case Shape::solid_rect: return "rectangle";
        case Shape::circle: return "circle";
        case Shape::ring: return "ring";
        case Shape::gradient_band: return "gradient band";
        case Shape::glyph_strip: return "glyph strip";
    }
    return "?";
}

void fill_pixel(Straight8& img, int x, int y, const Color8& c, int a) {
    uint8_t* p = img.at(x, y);
    p[0] = uint8_t(c.r);
    p[1] = uint8_t(c.g);
    p[2] = uint8_t(c.b);
    p[3] = uint8_t(a);
}

Straight8 draw_shape(Shape shape, int w, int h, const Color8& color, int alpha, Rng& rng) {
    Straight8 img(w, h);
    switch (shape) {
        case Shape::solid_rect: {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    fill_pixel(img, x, y, color, alpha);
                }
            }
            break;
        }
        case Shape::circle:
        case Shape::ring: {
            int R = std::min(w, h);
            int Ri = (R * 5) / 8;
            int64_t outer = int64_t(R - 1) * (R - 1);
            int64_t inner = int64_t(std::max(Ri - 1, 0)) * std::max(Ri - 1, 0);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    int64_t ix = 2 * x + 1 - w;
                    int64_t iy = 2 * y + 1 - h;
                    int64_t d2 = ix * ix + iy * iy;
                    bool in = d2 <= outer && (shape == Shape::circle || d2 > inner);
                    if (in) {
                        fill_pixel(img, x, y, color, alpha);
                    }
                }
            }
            break;
        }
        case Shape::gradient_band: {
            Color8 other = pick_color(rng);
            bool horizontal = rng.below(2) == 0;
            int span = std::max(horizontal ? w - 1 : h - 1, 1);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    int t = horizontal ? x : y;
                    Color8 c{color.r + ((other.r - color.r) * t) / span,
                             color.g + ((other.g - color.g) * t) / span,
                             color.b + ((other.b - color.b) * t) / span, color.name};
                    fill_pixel(img, x, y, c, alpha);
                }
            }
            break;
        }
        case Shape::glyph_strip: {
            // monospaced block glyphs: each cell gets a random 3x5 bit pattern
            int cw = std::max(3, (h * 3) / 5);
            int ncell = std::max(1, w / cw);
            for (int k = 0; k < ncell; ++k) {
                uint32_t bits = uint32_t(rng.below(1u << 15));
                int x0 = k * cw;
                for (int gy = 0; gy < 5; ++gy) {
                    for (int gx = 0; gx < 3; ++gx) {
                        if (!(bits >> (gy * 3 + gx) & 1u)) {
                            continue;
                        }
                        int bx0 = x0 + (gx * cw) / 3;
                        int bx1 = x0 + ((gx + 1) * cw) / 3;
                        int by0 = (gy * h) / 5;
                        int by1 = ((gy + 1) * h) / 5;
                        for (int y = by0; y < by1; ++y) {
                            for (int x = bx0; x < std::min(bx1, w); ++x) {
                                fill_pixel(img, x, y, color, alpha);
                            }
                        }
                    }
                }
            }
            break;
        }
    }
    return img;
}

std::string position_bucket(const Rect& r, int vw, int vh) {
    int cx = r.x + r.w / 2;
    int cy = r.y + r.h / 2;
    int col = cx < vw / 3 ? 0 : (cx < (2 * vw) / 3 ? 1 : 2);
    int row = cy < vh / 3 ? 0 : (cy < (2 * vh) / 3 ? 1 : 2);
    static const char* rows[] = {"upper", "middle", "lower"};
    static const char* cols[] = {"left", "center", "right"};
    if (row == 1 && col == 1) {
        return "center";
    }
    return std::string(rows[row]) + " " + cols[col];
}

}  // namespace

LayeredDesign gen_design(uint64_t seed, const GenParams& params) {
    params.check();
    Rng rng(hash_mix(seed, 0x6d72742d67656eULL));

    int vw = rng.range(params.min_size, params.max_size);
    int vh = rng.range(params.min_size, params.max_size);
    int K = rng.range(params.min_layers, params.max_layers);

    bool want_overflow = rng.bernoulli(params.overflow_prob);
    int n_overflow = want_overflow ? std::min(K, 1 + int(rng.below(2))) : 0;
    std::vector<bool> overflows(K, false);
    for (int placed = 0; placed < n_overflow;) {
        int i = int(rng.below(K));
        if (!overflows[i]) {
            overflows[i] = true;
            ++placed;
        }
    }

    struct Pending {
        Rect rect;  // relative to bg origin
        Straight8 image;
        std::string caption;
    };
    std::vector<Pending> fgs;
    fgs.reserve(K);

    for (int i = 0; i < K; ++i) {
        Shape shape = Shape(rng.below(5));
        int sw, sh;
        if (shape == Shape::glyph_strip) {
            sw = rng.range(vw / 4, std::max(vw / 4 + 1, vw / 2));
            sh = rng.range(std::max(6, vh / 10), std::max(7, vh / 5));
        } else {
            sw = rng.range(std::max(6, vw / 8), std::max(8, vw / 3));
            sh = rng.range(std::max(6, vh / 8), std::max(8, vh / 3));
        }

        int x, y;
        bool of = overflows[i];
        if (of) {
            int side = int(rng.below(4));
            int ox = rng.range(1, std::max(1, sw / 2));
            int oy = rng.range(1, std::max(1, sh / 2));
            switch (side) {
                case 0: x = -ox; y = rng.range(0, std::max(0, vh - sh)); break;
                case 1: x = vw - sw + ox; y = rng.range(0, std::max(0, vh - sh)); break;
                case 2: x = rng.range(0, std::max(0, vw - sw)); y = -oy; break;
                default: x = rng.range(0, std::max(0, vw - sw)); y = vh - sh + oy; break;
            }
        } else {
            x = rng.range(0, std::max(0, vw - sw));
            y = rng.range(0, std::max(0, vh - sh));
        }

        Color8 color = pick_color(rng);
        bool translucent = rng.bernoulli(0.3);
        int alpha = translucent ? rng.range(140, 220) : 255;
        Straight8 img = draw_shape(shape, sw, sh, color, alpha, rng);

        Rect rect{x, y, sw, sh};
        std::string caption = std::string("a ") + (translucent ? "translucent " : "") +
                              color.name + " " + shape_name(shape) + " in the " +
                              position_bucket(rect, vw, vh);
        if (of) {
            caption += " overflowing the canvas edge";
        }
        fgs.push_back({rect, std::move(img), std::move(caption)});
    }

    Rect content{0, 0, vw, vh};
    for (const auto& f : fgs) {
        content = Rect::bounding(content, f.rect);
    }

    LayeredDesign d;
    d.canvas_w = content.w;
    d.canvas_h = content.h;
    d.bg_rect = {-content.x, -content.y, vw, vh};

    Color8 bg_color = pick_color(rng);
    int bg_alpha = rng.bernoulli(0.3) ? rng.range(170, 240) : 255;
    Straight8 bg_img(vw, vh);
    for (int y = 0; y < vh; ++y) {
        for (int x = 0; x < vw; ++x) {
            fill_pixel(bg_img, x, y, bg_color, bg_alpha);
        }
    }
    LayerRecord bg;
    bg.image = premultiply(bg_img);
    bg.rect = d.bg_rect;
    bg.z = 0;
    bg.kind = LayerKind::background;
    bg.caption = std::string("a ") + (bg_alpha < 255 ? "translucent " : "") + bg_color.name +
                 " background";
    d.layers.push_back(std::move(bg));

    for (int i = 0; i < K; ++i) {
        LayerRecord l;
        l.image = premultiply(fgs[i].image);
        l.rect = {fgs[i].rect.x - content.x, fgs[i].rect.y - content.y, fgs[i].rect.w,
                  fgs[i].rect.h};
        l.z = i + 1;
        l.kind = LayerKind::foreground;
        l.caption = std::move(fgs[i].caption);
        d.layers.push_back(std::move(l));
    }

    CaptionMode mode = params.caption_mode;
    if (mode == CaptionMode::mixed) {
        mode = rng.bernoulli(0.5) ? CaptionMode::short_form : CaptionMode::long_form;
    }
    d.global_caption = global_caption(d, mode);
    return d;
}

Layout derive_layout(const LayeredDesign& design) {
    Layout layout;
    layout.canvas_w = design.canvas_w;
    layout.canvas_h = design.canvas_h;
    layout.bg_rect = design.bg_rect;
    for (const auto& l : design.layers) {
        layout.entries.push_back({l.rect, l.z, l.kind, l.caption});
    }
    return layout;
}

void validate_layout(const Layout& layout) {
    if (layout.canvas_w < 1 || layout.canvas_h < 1) {
        throw InputError("layout: canvas dimensions must be >= 1");
    }
    if (layout.entries.empty()) {
        throw InputError("layout: no entries");
    }
    int bg_count = 0;
    int prev_z = 0;
    for (size_t i = 0; i < layout.entries.size(); ++i) {
        const auto& e = layout.entries[i];
        if (!e.rect.valid()) {
            throw InputError("layout: rect must have positive extent");
        }
        if (i > 0 && e.z <= prev_z) {
            throw InputError("layout: z must be strictly increasing");
        }
        prev_z = e.z;
        if (e.kind == LayerKind::background) {
            ++bg_count;
            if (i != 0) {
                throw InputError("layout: background entry must come first");
            }
            if (!(e.rect == layout.bg_rect)) {
                throw InputError("layout: background rect must equal bg_rect");
            }
        }
    }
    if (bg_count != 1) {
        throw InputError("layout: exactly one background entry required");
    }
}

std::string global_caption(const LayeredDesign& design, CaptionMode mode) {
    if (mode == CaptionMode::mixed) {
        throw InputError("global_caption: mode must be resolved to short or long");
    }
    std::string bg_desc = design.background().caption;
    std::string head = "A layered design with " + std::to_string(design.foreground_count()) +
                       " elements on " + bg_desc + ".";
    if (mode == CaptionMode::short_form) {
        return head;
    }
    std::string out = head + " Layers:";
    bool first = true;
    for (const auto& l : design.layers) {
        if (l.kind != LayerKind::foreground) {
            continue;
        }
        out += first ? " " : "; ";
        out += l.caption;
        first = false;
    }
    out += ".";
    return out;
}

RgbaImage restyle_variant(const RgbaImage& img, Rng& rng) {
    double angle = double(60 + rng.below(240)) * M_PI / 180.0;
    double c = std::cos(angle);
    double s = std::sin(angle);
    double third = (1.0 - c) / 3.0;
    double root = s / std::sqrt(3.0);
    // hue rotation about the gray axis
    double m[3][3] = {{c + third, third - root, third + root},
                      {third + root, c + third, third - root},
                      {third - root, third + root, c + third}};

    bool stripes = rng.below(2) == 0;
    bool horizontal = rng.below(2) == 0;
    int period = 4 + int(rng.below(12));
    const double amp = 0.2;

    RgbaImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const float* p = img.at(x, y);
            float* q = out.at(x, y);
            float a = p[3];
            q[3] = a;
            if (a <= 0.0f) {
                continue;
            }
            double rgb[3];
            for (int ch = 0; ch < 3; ++ch) {
                rgb[ch] = p[ch] / a;  // straight color
            }
            double rot[3];
            for (int ch = 0; ch < 3; ++ch) {
                rot[ch] = m[ch][0] * rgb[0] + m[ch][1] * rgb[1] + m[ch][2] * rgb[2];
            }
            double gain = 1.0;
            if (stripes) {
                int t = horizontal ? y : x;
                gain = 1.0 + amp * std::sin(2.0 * M_PI * double(t) / double(period));
            }
            for (int ch = 0; ch < 3; ++ch) {
                q[ch] = float(std::clamp(rot[ch] * gain, 0.0, 1.0)) * a;
            }
        }
    }
    return out;
}

static json rect_json(const Rect& r) {
    return json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
}

static Rect rect_from_json(const json& j) {
    return {j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(),
            j.at("h").get<int>()};
}

void save_layout(const std::filesystem::path& path, const Layout& layout) {
    json entries = json::array();
    for (const auto& e : layout.entries) {
        entries.push_back({{"rect", rect_json(e.rect)},
                           {"z", e.z},
                           {"kind", e.kind == LayerKind::background ? "background" : "foreground"},
                           {"caption", e.caption}});
    }
    json j{{"format", "mrt-layout/1"},
           {"canvas_w", layout.canvas_w},
           {"canvas_h", layout.canvas_h},
           {"bg_rect", rect_json(layout.bg_rect)},
           {"entries", entries}};
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << "\n";
    if (!out) {
        throw InputError("cannot write layout: " + path.string());
    }
}

Layout load_layout(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open layout: " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InputError("layout parse error: " + std::string(e.what()));
    }
    if (j.value("format", "") != "mrt-layout/1") {
        throw InputError("layout: unsupported format (want mrt-layout/1)");
    }
    Layout layout;
    try {
        layout.canvas_w = j.at("canvas_w").get<int>();
        layout.canvas_h = j.at("canvas_h").get<int>();
        layout.bg_rect = rect_from_json(j.at("bg_rect"));
        for (const auto& je : j.at("entries")) {
            LayoutEntry e;
            e.rect = rect_from_json(je.at("rect"));
            e.z = je.at("z").get<int>();
            std::string kind = je.at("kind").get<std::string>();
            if (kind == "background") {
                e.kind = LayerKind::background;
            } else if (kind == "foreground") {
                e.kind = LayerKind::foreground;
            } else {
                throw InputError("layout: unknown entry kind '" + kind + "'");
            }
            e.caption = je.value("caption", "");
            layout.entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw InputError("layout: " + std::string(e.what()));
    }
    validate_layout(layout);
    return layout;
}

}  // namespace mrt
