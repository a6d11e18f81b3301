#include "mrt/codec.hpp"

#include <algorithm>

namespace mrt {

static int floor_div(int a, int b) {
    int q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) {
        --q;
    }
    return q;
}

Rect snap_rect(const Rect& rect, int s) {
    if (s < 1) {
        throw InputError("snap_rect: patch size must be >= 1");
    }
    if (!rect.valid()) {
        throw InputError("snap_rect: rect must have positive extent");
    }
    int x0 = floor_div(rect.x, s) * s;
    int y0 = floor_div(rect.y, s) * s;
    int x1 = -floor_div(-rect.x1(), s) * s;  // ceil
    int y1 = -floor_div(-rect.y1(), s) * s;
    return {x0, y0, x1 - x0, y1 - y0};
}

LatentGrid encode(const RgbaImage& img, int s) {
    if (s < 1) {
        throw InputError("encode: patch size must be >= 1");
    }
    if (img.width % s != 0 || img.height % s != 0) {
        throw InputError("encode: image dimensions must be divisible by the patch size");
    }
    LatentGrid z(img.height / s, img.width / s, 4 * s * s);
    for (int i = 0; i < z.h; ++i) {
        for (int j = 0; j < z.w; ++j) {
            float* c = z.cell(i, j);
            for (int dy = 0; dy < s; ++dy) {
                const float* row = img.at(j * s, i * s + dy);
                std::copy(row, row + size_t(s) * 4, c + size_t(dy) * s * 4);
            }
        }
    }
    return z;
}

RgbaImage decode(const LatentGrid& z, int s) {
    if (s < 1 || z.channels != 4 * s * s) {
        throw InputError("decode: channel count does not match the patch size");
    }
    if (z.h < 1 || z.w < 1 || z.data.size() != size_t(z.h) * z.w * z.channels) {
        throw InputError("decode: malformed grid");
    }
    RgbaImage img(z.w * s, z.h * s);
    for (int i = 0; i < z.h; ++i) {
        for (int j = 0; j < z.w; ++j) {
            const float* c = z.cell(i, j);
            for (int dy = 0; dy < s; ++dy) {
                float* row = img.at(j * s, i * s + dy);
                std::copy(c + size_t(dy) * s * 4, c + size_t(dy + 1) * s * 4, row);
            }
        }
    }
    return img;
}

double out_of_range_fraction(const RgbaImage& img) {
    size_t bad = 0;
    size_t n = img.px.size() / 4;
    for (size_t i = 0; i < n; ++i) {
        const float* p = img.px.data() + i * 4;
        float a = p[3];
        bool ok = a >= 0.0f && a <= 1.0f;
        for (int c = 0; c < 3 && ok; ++c) {
            ok = p[c] >= 0.0f && p[c] <= a;
        }
        if (!ok) {
            ++bad;
        }
    }
    return n == 0 ? 0.0 : double(bad) / double(n);
}

RgbaImage clamp_premultiplied(const RgbaImage& img) {
    RgbaImage out = img;
    size_t n = out.px.size() / 4;
    for (size_t i = 0; i < n; ++i) {
        float* p = out.px.data() + i * 4;
        float a = std::clamp(p[3], 0.0f, 1.0f);
        p[3] = a;
        for (int c = 0; c < 3; ++c) {
            p[c] = std::clamp(p[c], 0.0f, a);
        }
    }
    return out;
}

}  // namespace mrt
