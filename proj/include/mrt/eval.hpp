#ifndef MRT_EVAL_HPP
#define MRT_EVAL_HPP

#include <array>

#include "mrt/sampler.hpp"

namespace mrt {

// Reconstruction metrics on the premultiplied unit-range representation.
// Merged variants use all four channels over every pixel; masked variants
// use RGB restricted to pixels where the reference alpha is positive.
// Identical inputs give +infinity PSNR.
double psnr(const RgbaImage& a, const RgbaImage& b);
double psnr_masked(const RgbaImage& a, const RgbaImage& ref);

// Single-scale SSIM: sliding 8x8 box windows (stride 1, fully inside the
// image), C1=(0.01)^2 C2=(0.03)^2, per channel then averaged. Masked form
// keeps windows containing at least one visible reference pixel and
// computes window statistics over the visible pixels only.
double ssim(const RgbaImage& a, const RgbaImage& b);
double ssim_masked(const RgbaImage& a, const RgbaImage& ref);

struct BinStats {
    int count = 0;
    double psnr_merged = 0.0;
    double ssim_merged = 0.0;
    double psnr_layer = 0.0;
    double ssim_layer = 0.0;
};

// Bins keyed by total design layer count. Designs outside every bin still
// contribute to `overall`.
struct MetricReport {
    static constexpr std::array<std::pair<int, int>, 3> kBins = {
        {{4, 8}, {8, 16}, {16, 32}}};
    std::array<BinStats, 3> bins;
    BinStats overall;
};

// Pairwise metrics between predicted and ground-truth designs: merged =
// compare composites, layer = mean over layers on canvas-placed rasters
// (fully transparent ground-truth layers skipped). Sizes must match.
MetricReport evaluate_designs(const std::vector<LayeredDesign>& pred,
                              const std::vector<LayeredDesign>& gt);

// Decompose each dataset composite with the model (I2L task, per-design
// seed hash_mix(cfg.seed, index)) and score against the ground truth.
MetricReport evaluate_i2l(const Model<float>& model,
                          const std::vector<LayeredDesign>& dataset,
                          const SampleConfig& cfg);

std::string report_json(const MetricReport& report);
std::string report_csv(const MetricReport& report);

// Analytic cost contrast: regional packing (composed + bg + snapped layer
// rects) vs the per-layer full-resolution baseline ((K+2) canvas-sized
// planes in one joint-attention sequence). Image tokens only; FLOPs per
// block = 4*N^2*d + (8+4*mlp_ratio)*N*d^2, memory = fp32 activations
// (N*d*depth) plus materialized attention workspace (heads*N^2). Scalar
// fields are dataset means; ratio fields are means of per-design ratios.
struct CostReport {
    double tokens_regional = 0.0;
    double tokens_fullres = 0.0;
    double token_ratio = 0.0;
    double flops_regional = 0.0;
    double flops_fullres = 0.0;
    double flop_ratio = 0.0;
    double quad_flop_ratio = 0.0;
    double memory_regional = 0.0;
    double memory_fullres = 0.0;
    double memory_ratio = 0.0;
};

CostReport cost_model(const std::vector<LayeredDesign>& designs, const ModelConfig& mc,
                      int s);

std::string cost_json(const CostReport& report);

}  // namespace mrt

#endif
