#ifndef MRT_SYNTH_HPP
#define MRT_SYNTH_HPP

#include <filesystem>

#include "mrt/canvas.hpp"

namespace mrt {

enum class CaptionMode { short_form, long_form, mixed };

// Procedural layered-design generator. Geometry and colors come from integer
// RNG draws only, so generation reproduces across platforms.
struct GenParams {
    int min_size = 64;   // background (visible region) extent range
    int max_size = 96;   // canvas grows beyond this only through overflow
    int min_layers = 4;  // foreground layer count range, inclusive
    int max_layers = 32;
    double overflow_prob = 0.6;  // chance that >= 1 layer overflows bg_rect
    CaptionMode caption_mode = CaptionMode::mixed;  // mixed draws 50/50

    void check() const {
        if (min_size < 8 || max_size < min_size) {
            throw ConfigError("gen: bad size range");
        }
        if (min_layers < 1 || max_layers < min_layers) {
            throw ConfigError("gen: bad layer count range");
        }
        if (overflow_prob < 0.0 || overflow_prob > 1.0) {
            throw ConfigError("gen: overflow_prob out of [0,1]");
        }
    }
};

struct LayoutEntry {
    Rect rect;
    int z = 0;
    LayerKind kind = LayerKind::foreground;
    std::string caption;  // optional, used by layer-addition prompts
};

// Ground-truth layout: background entry first, z strictly increasing.
struct Layout {
    int canvas_w = 0;
    int canvas_h = 0;
    Rect bg_rect;
    std::vector<LayoutEntry> entries;

    int foreground_count() const {
        int k = 0;
        for (const auto& e : entries) {
            if (e.kind == LayerKind::foreground) {
                ++k;
            }
        }
        return k;
    }
};

void validate_layout(const Layout& layout);

// Deterministic function of (seed, params). The produced design always passes
// validate(); whether any layer overflows bg_rect is an exact Bernoulli draw
// with params.overflow_prob.
LayeredDesign gen_design(uint64_t seed, const GenParams& params);

// Copies rects/z/kind/captions out of a design (ground-truth stand-in for a
// layout detector).
Layout derive_layout(const LayeredDesign& design);

// Recomputes the global caption from stored layer captions. short_form is a
// single sentence (<= 200 chars); long_form enumerates every layer caption.
std::string global_caption(const LayeredDesign& design, CaptionMode mode);

// Procedural appearance transform (hue rotation plus an optional stripe
// overlay), preserving alpha. Stands in for an external restyling model when
// building layer-restylization training pairs.
RgbaImage restyle_variant(const RgbaImage& img, Rng& rng);

void save_layout(const std::filesystem::path& path, const Layout& layout);
Layout load_layout(const std::filesystem::path& path);

}  // namespace mrt

#endif
