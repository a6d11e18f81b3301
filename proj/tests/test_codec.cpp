#include <cmath>

#include "doctest.h"
#include "mrt/codec.hpp"
#include "mrt/common.hpp"

using namespace mrt;

namespace {

RgbaImage random_premult(Rng& rng, int w, int h) {
    RgbaImage img(w, h);
    for (size_t i = 0; i < img.px.size(); i += 4) {
        float a = float(rng.uniform());
        img.px[i + 3] = a;
        for (int c = 0; c < 3; ++c) {
            img.px[i + c] = float(rng.uniform()) * a;
        }
    }
    return img;
}

}  // namespace

TEST_CASE("snap_rect aligns to the patch grid") {
    CHECK(snap_rect({0, 0, 16, 8}, 8) == Rect{0, 0, 16, 8});  // already aligned
    CHECK(snap_rect({1, 1, 2, 2}, 8) == Rect{0, 0, 8, 8});
    CHECK(snap_rect({3, 5, 10, 9}, 8) == Rect{0, 0, 16, 16});
    CHECK(snap_rect({-3, -5, 10, 9}, 8) == Rect{-8, -8, 16, 16});
    CHECK(snap_rect({7, 0, 2, 1}, 4) == Rect{4, 0, 8, 4});
}

TEST_CASE("snap_rect output is the minimal aligned container") {
    Rng rng(13);
    for (int trial = 0; trial < 500; ++trial) {
        int s = rng.range(1, 9);
        Rect r{rng.range(-20, 20), rng.range(-20, 20), rng.range(1, 25), rng.range(1, 25)};
        Rect snapped = snap_rect(r, s);
        CHECK(snapped.x % s == 0);
        CHECK(snapped.y % s == 0);
        CHECK(snapped.w % s == 0);
        CHECK(snapped.h % s == 0);
        CHECK(snapped.contains(r));
        // minimality: shrinking any side by one cell loses containment
        CHECK_FALSE(Rect{snapped.x + s, snapped.y, snapped.w - s, snapped.h}.contains(r));
        CHECK_FALSE(Rect{snapped.x, snapped.y + s, snapped.w, snapped.h - s}.contains(r));
        CHECK_FALSE(Rect{snapped.x, snapped.y, snapped.w - s, snapped.h}.contains(r));
        CHECK_FALSE(Rect{snapped.x, snapped.y, snapped.w, snapped.h - s}.contains(r));
    }
}

TEST_CASE("encode shape and channel layout") {
    RgbaImage img(8, 8);
    img.at(3, 2)[1] = 0.25f;  // pixel (x=3,y=2), green
    LatentGrid z = encode(img, 8);
    CHECK(z.h == 1);
    CHECK(z.w == 1);
    CHECK(z.channels == 256);
    CHECK(z.token_count() == 1);
    // channel index (dy*s + dx)*4 + ch with dy=2, dx=3, ch=1
    int expect = (2 * 8 + 3) * 4 + 1;
    for (int c = 0; c < 256; ++c) {
        CHECK(z.cell(0, 0)[c] == (c == expect ? 0.25f : 0.0f));
    }
}

TEST_CASE("all-transparent image encodes to an all-zero grid") {
    LatentGrid z = encode(RgbaImage(16, 24), 8);
    CHECK(z.h == 3);
    CHECK(z.w == 2);
    for (float v : z.data) {
        CHECK(v == 0.0f);
    }
}

TEST_CASE("encode rejects non-divisible dimensions") {
    CHECK_THROWS_AS(encode(RgbaImage(12, 8), 8), InputError);
    CHECK_THROWS_AS(encode(RgbaImage(8, 9), 8), InputError);
}

TEST_CASE("decode is the exact inverse of encode") {
    Rng rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
        int s = 1 << rng.range(0, 3);
        int w = s * rng.range(1, 4);
        int h = s * rng.range(1, 4);
        RgbaImage img = random_premult(rng, w, h);
        RgbaImage back = decode(encode(img, s), s);
        CHECK(back == img);  // bit-exact
    }
}

TEST_CASE("encode then decode round trips random grids exactly") {
    Rng rng(37);
    LatentGrid z;
    z.h = 2;
    z.w = 3;
    z.channels = 4 * 4 * 4;
    z.data.resize(size_t(z.h) * z.w * z.channels);
    for (float& v : z.data) {
        v = float(rng.normal());
    }
    LatentGrid back = encode(decode(z, 4), 4);
    CHECK(back.data == z.data);
}

TEST_CASE("encode is linear") {
    Rng rng(41);
    RgbaImage x = random_premult(rng, 16, 8);
    RgbaImage y = random_premult(rng, 16, 8);
    const float alpha = 0.375f, beta = -1.25f;
    RgbaImage mix(16, 8);
    for (size_t i = 0; i < mix.px.size(); ++i) {
        mix.px[i] = alpha * x.px[i] + beta * y.px[i];
    }
    LatentGrid zx = encode(x, 8);
    LatentGrid zy = encode(y, 8);
    LatentGrid zm = encode(mix, 8);
    for (size_t i = 0; i < zm.data.size(); ++i) {
        CHECK(zm.data[i] == alpha * zx.data[i] + beta * zy.data[i]);
    }
}

TEST_CASE("out_of_range_fraction flags invalid premultiplied pixels") {
    RgbaImage img(2, 2);  // all zeros: valid
    CHECK(out_of_range_fraction(img) == 0.0);
    img.at(0, 0)[0] = 0.5f;  // r > a
    CHECK(out_of_range_fraction(img) == doctest::Approx(0.25));
    img.at(1, 1)[3] = 1.5f;  // a > 1
    CHECK(out_of_range_fraction(img) == doctest::Approx(0.5));
}

TEST_CASE("clamp_premultiplied restores validity without touching valid pixels") {
    RgbaImage img(1, 2);
    float* p = img.at(0, 0);
    p[0] = 1.4f;
    p[1] = -0.2f;
    p[2] = 0.3f;
    p[3] = 1.2f;
    float* q = img.at(0, 1);
    q[0] = 0.25f;
    q[3] = 0.5f;
    RgbaImage out = clamp_premultiplied(img);
    CHECK(out.at(0, 0)[3] == 1.0f);
    CHECK(out.at(0, 0)[0] == 1.0f);
    CHECK(out.at(0, 0)[1] == 0.0f);
    CHECK(out.at(0, 0)[2] == 0.3f);
    CHECK(out.at(0, 1)[0] == 0.25f);
    CHECK(out.at(0, 1)[3] == 0.5f);
    CHECK(out_of_range_fraction(out) == 0.0);
}
