#include "mrt/sampler.hpp"

namespace mrt {

int patch_from_latent_dim(int latent_dim) {
    int s = int(std::lround(std::sqrt(double(latent_dim) / 4.0)));
    if (s < 1 || 4 * s * s != latent_dim) {
        throw ConfigError("latent dim " + std::to_string(latent_dim) +
                          " is not 4 s^2 for integer patch size s");
    }
    return s;
}

PackedSequence euler_sample(const VelocityFn& field, PackedSequence seq,
                            const SampleConfig& cfg) {
    cfg.check();
    const int n = seq.n_tokens();
    const int c = seq.channels;
    if (n == 0) {
        throw InputError("euler_sample: empty sequence");
    }

    // Clean latents for pinning; noised slots are overwritten with noise.
    Mat<double> clean(n, c);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            clean(i, j) = double(seq.token(i)[j]);
        }
    }
    Mat<double> state = clean;
    Rng rng(hash_mix(cfg.seed, fnv1a("mrt-sample")));
    for (int i = 0; i < n; ++i) {
        if (seq.meta[size_t(i)].role != Role::noised) {
            continue;
        }
        for (int j = 0; j < c; ++j) {
            state(i, j) = double(float(rng.normal()));
        }
    }

    const double h = 1.0 / cfg.steps;
    for (int k = 0; k < cfg.steps; ++k) {
        double t = 1.0 - double(k) / cfg.steps;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < c; ++j) {
                seq.token(i)[j] = float(state(i, j));
            }
        }
        Mat<double> v = field(seq, t);
        if (v.rows() != n || v.cols() != c) {
            throw InputError("euler_sample: velocity shape mismatch");
        }
        if (!v.allFinite()) {
            throw NumericError("euler_sample: non-finite velocity at step " + std::to_string(k));
        }
        for (int i = 0; i < n; ++i) {
            if (seq.meta[size_t(i)].role == Role::noised) {
                state.row(i) += h * v.row(i);
            } else {
                state.row(i) = clean.row(i);  // re-pin clean slots
            }
        }
    }

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            seq.token(i)[j] = float(state(i, j));
        }
    }
    return seq;
}

Mat<float> guided_velocity(const Model<float>& model, const PackedSequence& seq, double t,
                           double scale) {
    if (scale == 1.0) {
        return model.velocity(seq, t);
    }
    Mat<float> cond = model.velocity(seq, t);
    PackedSequence null_seq = seq;
    null_seq.caption.clear();
    Mat<float> null_v = model.velocity(null_seq, t);
    return null_v + float(scale) * (cond - null_v);
}

VelocityFn model_velocity_fn(const Model<float>& model, double guidance) {
    return [&model, guidance](const PackedSequence& seq, double t) {
        return guided_velocity(model, seq, t, guidance).cast<double>().eval();
    };
}

namespace {

// Copies `src` into a region-frame image of `region_rect` dimensions at the
// offset of `src_rect` relative to the region.
RgbaImage region_frame(const RgbaImage& src, const Rect& src_rect, const Rect& region_rect) {
    LayerRecord lr;
    lr.image = src;
    lr.rect = {src_rect.x - region_rect.x, src_rect.y - region_rect.y, src_rect.w, src_rect.h};
    return place(lr, region_rect.w, region_rect.h);
}

}  // namespace

LayeredDesign run_task(const Model<float>& model, const TaskSpec& task,
                       const SampleInputs& inputs, const SampleConfig& cfg,
                       double* out_of_range) {
    cfg.check();
    validate(inputs.design);
    const int s = patch_from_latent_dim(model.cfg.latent_dim);

    RegionLatents rl = build_region_latents(inputs.design, task.variant, s);
    if (task.variant == TaskVariant::i2l && inputs.i2l_raster != nullptr) {
        const RgbaImage& raster = *inputs.i2l_raster;
        if (raster.width != rl.bg_rect.w || raster.height != rl.bg_rect.h) {
            throw InputError("run_task: raster dimensions must match the visible region");
        }
        rl.composed.z = encode(region_frame(raster, rl.bg_rect, rl.composed.rect), s);
    }

    PackedSequence seq = pack(rl, task);
    PackedSequence final_seq = euler_sample(model_velocity_fn(model, cfg.guidance), seq, cfg);
    std::vector<Region> regions = unpack(final_seq);

    MaskPlan plan = mask_plan(task, inputs.design.foreground_count());

    LayeredDesign out = inputs.design;
    double violated = 0.0, total = 0.0;
    // Region ids: 0 composed (not a layer), 1 background, 1+i foreground i.
    int fg_index = 0;
    for (size_t li = 0; li < out.layers.size(); ++li) {
        LayerRecord& layer = out.layers[li];
        int rid = layer.kind == LayerKind::background ? 1 : 1 + (++fg_index);
        if (plan.roles[size_t(rid)] != Role::noised) {
            continue;  // masked layers pass through bit-identical
        }
        const Region& r = regions[size_t(rid)];
        RgbaImage decoded = decode(r.z, s);
        violated += out_of_range_fraction(decoded) * double(r.rect.w) * double(r.rect.h);
        total += double(r.rect.w) * double(r.rect.h);
        RgbaImage clamped = clamp_premultiplied(decoded);
        layer.image = visible_crop(
            clamped, {layer.rect.x - r.rect.x, layer.rect.y - r.rect.y, layer.rect.w,
                      layer.rect.h});
    }
    if (out_of_range != nullptr) {
        *out_of_range = total > 0.0 ? violated / total : 0.0;
    }
    validate(out);
    return out;
}

}  // namespace mrt
