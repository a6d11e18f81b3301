#include "mrt/bundle.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace mrt {

namespace fs = std::filesystem;
using nlohmann::json;

RgbaImage premultiply(const Straight8& img) {
    RgbaImage out(img.width, img.height);
    size_t n = img.px.size() / 4;
    for (size_t i = 0; i < n; ++i) {
        const uint8_t* s = img.px.data() + i * 4;
        float* d = out.px.data() + i * 4;
        float a = s[3] / 255.0f;
        d[0] = (s[0] / 255.0f) * a;
        d[1] = (s[1] / 255.0f) * a;
        d[2] = (s[2] / 255.0f) * a;
        d[3] = a;
    }
    return out;
}

Straight8 unpremultiply(const RgbaImage& img) {
    Straight8 out(img.width, img.height);
    size_t n = img.px.size() / 4;
    for (size_t i = 0; i < n; ++i) {
        const float* s = img.px.data() + i * 4;
        uint8_t* d = out.px.data() + i * 4;
        float a = std::clamp(s[3], 0.0f, 1.0f);
        d[3] = uint8_t(std::lround(a * 255.0f));
        for (int c = 0; c < 3; ++c) {
            float v = a > 0.0f ? std::clamp(s[c] / a, 0.0f, 1.0f) : 0.0f;
            d[c] = uint8_t(std::lround(v * 255.0f));
        }
    }
    return out;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) {
            std::fclose(f);
        }
    }
};

void write_png(const fs::path& path, const Straight8& img) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) {
        throw InputError("cannot open for writing: " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("png write failed: " + path.string());
    }
    png_init_io(png, fp.get());
    // fixed settings and no timestamp chunk keep output byte-reproducible
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) {
        rows[y] = const_cast<uint8_t*>(img.px.data()) + size_t(y) * img.width * 4;
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Straight8 read_png(const fs::path& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) {
        throw InputError("cannot open: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("png read failed: " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    // normalize any valid PNG to 8-bit RGBA
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_gray_to_rgb(png);
    png_set_add_alpha(png, 0xFF, PNG_FILLER_AFTER);
    png_read_update_info(png, info);
    Straight8 img(int(png_get_image_width(png, info)), int(png_get_image_height(png, info)));
    if (png_get_rowbytes(png, info) != size_t(img.width) * 4) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("png: unexpected row size: " + path.string());
    }
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) {
        rows[y] = img.px.data() + size_t(y) * img.width * 4;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

static json rect_json(const Rect& r) {
    return json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
}

static Rect rect_from_json(const json& j) {
    Rect r{j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(), j.at("h").get<int>()};
    if (!r.valid()) {
        throw InputError("manifest: rect must have positive extent");
    }
    return r;
}

void save_bundle(const fs::path& dir, const LayeredDesign& design) {
    fs::create_directories(dir);
    json layers = json::array();
    for (const auto& l : design.layers) {
        std::string file = "layer_" + std::to_string(l.z) + ".png";
        write_png(dir / file, unpremultiply(l.image));
        layers.push_back({{"file", file},
                          {"rect", rect_json(l.rect)},
                          {"z", l.z},
                          {"kind", l.kind == LayerKind::background ? "background" : "foreground"},
                          {"caption", l.caption}});
    }
    json manifest{{"format", kBundleFormat},
                  {"canvas_w", design.canvas_w},
                  {"canvas_h", design.canvas_h},
                  {"bg_rect", rect_json(design.bg_rect)},
                  {"global_caption", design.global_caption},
                  {"layers", layers}};
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << "\n";
    if (!out) {
        throw InputError("cannot write manifest: " + (dir / "manifest.json").string());
    }
}

LayeredDesign load_bundle(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in) {
        throw InputError("cannot open manifest: " + (dir / "manifest.json").string());
    }
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw InputError("manifest parse error: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != kBundleFormat) {
        throw InputError("manifest: unsupported format (want mrt-bundle/1)");
    }
    LayeredDesign d;
    try {
        d.canvas_w = manifest.at("canvas_w").get<int>();
        d.canvas_h = manifest.at("canvas_h").get<int>();
        d.bg_rect = rect_from_json(manifest.at("bg_rect"));
        d.global_caption = manifest.at("global_caption").get<std::string>();
        for (const auto& jl : manifest.at("layers")) {
            LayerRecord l;
            l.rect = rect_from_json(jl.at("rect"));
            l.z = jl.at("z").get<int>();
            std::string kind = jl.at("kind").get<std::string>();
            if (kind == "background") {
                l.kind = LayerKind::background;
            } else if (kind == "foreground") {
                l.kind = LayerKind::foreground;
            } else {
                throw InputError("manifest: unknown layer kind '" + kind + "'");
            }
            l.caption = jl.at("caption").get<std::string>();
            Straight8 raw = read_png(dir / jl.at("file").get<std::string>());
            if (raw.width != l.rect.w || raw.height != l.rect.h) {
                throw InputError("bundle: PNG dimensions disagree with manifest rect");
            }
            l.image = premultiply(raw);
            d.layers.push_back(std::move(l));
        }
    } catch (const json::exception& e) {
        throw InputError("manifest: " + std::string(e.what()));
    }
    validate(d);
    return d;
}

void save_raster(const fs::path& path, const RgbaImage& img) {
    write_png(path, unpremultiply(img));
}

RgbaImage load_raster(const fs::path& path) {
    return premultiply(read_png(path));
}

}  // namespace mrt
