#ifndef MRT_SAMPLER_HPP
#define MRT_SAMPLER_HPP

#include <functional>

#include "mrt/model.hpp"

namespace mrt {

struct SampleConfig {
    int steps = 50;          // distilled models typically use 16 or 8
    double guidance = 1.0;   // 1.0 = conditional pass only
    uint64_t seed = 0;

    void check() const {
        if (steps < 1) {
            throw ConfigError("sample: steps must be >= 1");
        }
        if (guidance < 0.0) {
            throw ConfigError("sample: guidance must be >= 0");
        }
    }
};

// Velocity field over the image tokens of a packed sequence. Double-valued so
// the Euler update can be accumulated without losing the float inputs.
using VelocityFn = std::function<Mat<double>(const PackedSequence&, double)>;

// Euler ODE integration from noise (t=1) to data (t=0): t_k = 1 - k/T,
// z <- z + (1/T) v. Noised slots start at seeded standard normal noise drawn
// region-by-region in pack order; masked and condition slots are re-pinned to
// their clean latents after every step. Throws NumericError on NaN.
PackedSequence euler_sample(const VelocityFn& field, PackedSequence seq,
                            const SampleConfig& cfg);

// v = v_null + scale (v_cond - v_null); scale == 1 runs only the conditional
// pass. The null pass swaps in an empty caption.
Mat<float> guided_velocity(const Model<float>& model, const PackedSequence& seq, double t,
                           double scale);

// Adapts a model (plus guidance scale) to a VelocityFn. The model must
// outlive the returned closure.
VelocityFn model_velocity_fn(const Model<float>& model, double guidance);

// Patch side length implied by the latent channel count (C = 4 s^2).
int patch_from_latent_dim(int latent_dim);

struct SampleInputs {
    LayeredDesign design;                  // full design, or a skeleton with
                                           // transparent images at generated slots
    const RgbaImage* i2l_raster = nullptr; // visible composite for I2L; when
                                           // null it is derived from `design`
};

// Runs one task end to end: pack, sample, unpack, decode, reassemble.
// Generated layers are clamped to the premultiplied-valid range and the
// violating pixel fraction over generated regions is reported through
// `out_of_range` when non-null. Masked layers pass through unchanged.
LayeredDesign run_task(const Model<float>& model, const TaskSpec& task,
                       const SampleInputs& inputs, const SampleConfig& cfg,
                       double* out_of_range = nullptr);

}  // namespace mrt

#endif
