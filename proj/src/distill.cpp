#include "mrt/distill.hpp"

namespace mrt {

PackedSequence student_generate(const Model<float>& student, const PackedSequence& clean,
                                int steps, uint64_t seed) {
    SampleConfig cfg;
    cfg.steps = steps;
    cfg.seed = seed;
    return euler_sample(model_velocity_fn(student, 1.0), clean, cfg);
}

namespace {

int count_noised_entries(const PackedSequence& seq) {
    int n = 0;
    for (const TokenMeta& m : seq.meta) {
        if (m.role == Role::noised) {
            n += seq.channels;
        }
    }
    return n;
}

}  // namespace

Mat<float> dmd_student_gradient(const Model<float>& teacher, const Model<float>& critic,
                                const PackedSequence& samples, Rng& rng) {
    const int n = samples.n_tokens();
    const int c = samples.channels;
    const int denom = count_noised_entries(samples);
    if (denom == 0) {
        throw InputError("dmd gradient: no noised tokens");
    }
    double t = rng.uniform();
    PackedSequence noised = samples;
    for (int i = 0; i < n; ++i) {
        if (noised.meta[size_t(i)].role != Role::noised) {
            continue;
        }
        float* tok = noised.token(i);
        for (int ch = 0; ch < c; ++ch) {
            float eps = float(rng.normal());
            tok[ch] = float((1.0 - t) * tok[ch] + t * eps);
        }
    }
    Mat<float> vt = teacher.velocity(noised, t);
    Mat<float> vc = critic.velocity(noised, t);
    Mat<float> g = Mat<float>::Zero(n, c);
    for (int i = 0; i < n; ++i) {
        if (samples.meta[size_t(i)].role == Role::noised) {
            // t * (v_c - v_t) is the x-space posterior-mean difference, the
            // standard DMD gradient; it keeps step size even across t.
            g.row(i) = float(t) * (vc.row(i) - vt.row(i)) / float(denom);
        }
    }
    if (!g.allFinite()) {
        throw NumericError("dmd gradient: non-finite");
    }
    return g;
}

double critic_update(Model<float>& critic, AdamW& opt, const PackedSequence& samples, Rng& rng) {
    const int n = samples.n_tokens();
    const int c = samples.channels;
    double t = rng.uniform();
    PackedSequence noised = samples;
    Mat<float> target = Mat<float>::Zero(n, c);
    for (int i = 0; i < n; ++i) {
        if (noised.meta[size_t(i)].role != Role::noised) {
            continue;
        }
        float* tok = noised.token(i);
        for (int ch = 0; ch < c; ++ch) {
            float z0 = tok[ch];
            float eps = float(rng.normal());
            target(i, ch) = z0 - eps;
            tok[ch] = float((1.0 - t) * z0 + t * eps);
        }
    }
    Tape<float> tape;
    ParamHandles handles;
    T pred = critic.forward(tape, noised, t, &handles);
    T loss = masked_flow_loss(tape, pred, target, noised.meta);
    double lv = double(tape.value(loss)(0, 0));
    if (!std::isfinite(lv)) {
        throw NumericError("critic update: non-finite loss");
    }
    tape.backward(loss);
    NamedTensors grads;
    for (const auto& [name, h] : handles.items) {
        grads.items.emplace_back(name, tape.grad(h));
    }
    opt.step(critic.params, grads);
    return lv;
}

DistillResult distill(const Checkpoint& teacher_ckpt, const DistillConfig& cfg,
                      const std::vector<LayeredDesign>& dataset) {
    cfg.check();
    if (dataset.empty()) {
        throw InputError("distill: empty dataset");
    }
    ModelConfig mc;
    TrainConfig tc;
    parse_checkpoint_config(teacher_ckpt.config_json, &mc, &tc, nullptr);
    Model<float> teacher = model_from_checkpoint(teacher_ckpt);
    Model<float> student = teacher;  // standard init from teacher weights
    Model<float> critic = teacher;

    AdamW sopt, copt;
    sopt.lr = cfg.student_lr;
    copt.lr = cfg.critic_lr;
    sopt.init_like(student.params);
    copt.init_like(critic.params);

    Rng rng(hash_mix(cfg.seed, fnv1a("mrt-distill")));
    DistillResult result;
    const float h = float(1.0 / cfg.student_steps);

    for (int64_t iter = 0; iter < cfg.iterations; ++iter) {
        const LayeredDesign& d = dataset[size_t(rng.below(dataset.size()))];
        PackedSequence clean = make_task_sequence(d, tc, rng);
        const int n = clean.n_tokens();
        const int c = clean.channels;

        // Differentiable student rollout: one tape spans all T_S forwards.
        Tape<float> tape;
        ParamHandles sh;
        Mat<float> init(n, c);
        Mat<float> pin_mask = Mat<float>::Zero(n, c);
        for (int i = 0; i < n; ++i) {
            const bool is_noised = clean.meta[size_t(i)].role == Role::noised;
            for (int ch = 0; ch < c; ++ch) {
                init(i, ch) = is_noised ? float(rng.normal()) : clean.token(i)[ch];
                if (is_noised) {
                    pin_mask(i, ch) = 1.0f;
                }
            }
        }
        T z = tape.input(std::move(init));
        T mask_node = tape.input(std::move(pin_mask));
        for (int k = 0; k < cfg.student_steps; ++k) {
            double t_k = 1.0 - double(k) / cfg.student_steps;
            T v = student.forward(tape, clean, t_k, &sh, nullptr, &z);
            z = tape.add(z, tape.mul(tape.scale(v, h), mask_node));
        }

        PackedSequence samples = clean;
        const Mat<float>& zv = tape.value(z);
        for (int i = 0; i < n; ++i) {
            for (int ch = 0; ch < c; ++ch) {
                samples.token(i)[ch] = zv(i, ch);
            }
        }

        Mat<float> g = dmd_student_gradient(teacher, critic, samples, rng);
        // Straight-through surrogate <g, z>: its z-gradient is exactly g.
        T surrogate = tape.sum(tape.mul(z, tape.input(g)));
        tape.backward(surrogate);
        NamedTensors sgrads;
        for (const auto& [name, hn] : sh.items) {
            const Mat<float>& gm = tape.grad(hn);
            if (!gm.allFinite()) {
                throw NumericError("distill: non-finite student gradient at iteration " +
                                   std::to_string(iter));
            }
            sgrads.items.emplace_back(name, gm);
        }
        sopt.step(student.params, sgrads);

        double closs = 0.0;
        for (int r = 0; r < cfg.critic_ratio; ++r) {
            closs += critic_update(critic, copt, samples, rng);
        }

        DistillRow row;
        row.iter = iter;
        row.critic_loss = closs / cfg.critic_ratio;
        row.grad_rms = std::sqrt(double(g.squaredNorm()) / count_noised_entries(samples));
        result.log.push_back(row);
    }

    result.student = make_checkpoint(student, tc, sopt, cfg.iterations, rng, true);
    return result;
}

// ---- 1-D analytic apparatus ----

Field1d mixture_field(const std::vector<double>& means, double sigma) {
    if (means.empty() || sigma <= 0.0) {
        throw ConfigError("mixture field: need components and positive sigma");
    }
    return [means, sigma](double z, double t) {
        t = std::max(t, 1e-9);
        const double omt = 1.0 - t;
        // Responsibilities under z_t = (1-t) x + t eps per component.
        double max_lw = -std::numeric_limits<double>::infinity();
        std::vector<double> lw(means.size());
        const double var = omt * omt * sigma * sigma + t * t;
        for (size_t k = 0; k < means.size(); ++k) {
            double dz = z - omt * means[k];
            lw[k] = -0.5 * dz * dz / var;
            max_lw = std::max(max_lw, lw[k]);
        }
        double wsum = 0.0, post_mean = 0.0;
        const double prec = 1.0 / (sigma * sigma) + omt * omt / (t * t);
        for (size_t k = 0; k < means.size(); ++k) {
            double w = std::exp(lw[k] - max_lw);
            double mk = (means[k] / (sigma * sigma) + omt * z / (t * t)) / prec;
            wsum += w;
            post_mean += w * mk;
        }
        post_mean /= wsum;
        return (post_mean - z) / t;
    };
}

std::vector<double> rollout_1d(const Field1d& field, int steps, int n, uint64_t seed) {
    if (steps < 1 || n < 1) {
        throw ConfigError("rollout: steps and n must be >= 1");
    }
    Rng rng(hash_mix(seed, fnv1a("mrt-toy-rollout")));
    std::vector<double> out(static_cast<size_t>(n));
    const double h = 1.0 / steps;
    for (int i = 0; i < n; ++i) {
        double z = rng.normal();
        for (int k = 0; k < steps; ++k) {
            double t = 1.0 - double(k) / steps;
            z += h * field(z, t);
            if (!std::isfinite(z)) {
                throw NumericError("rollout: trajectory diverged");
            }
        }
        out[size_t(i)] = z;
    }
    return out;
}

double energy_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) {
        throw InputError("energy distance: empty sample set");
    }
    auto mean_abs = [](const std::vector<double>& x, const std::vector<double>& y) {
        double acc = 0.0;
        for (double xi : x) {
            for (double yi : y) {
                acc += std::abs(xi - yi);
            }
        }
        return acc / (double(x.size()) * double(y.size()));
    };
    return 2.0 * mean_abs(a, b) - mean_abs(a, a) - mean_abs(b, b);
}

ToyNet ToyNet::init(int hidden, uint64_t seed) {
    if (hidden < 1) {
        throw ConfigError("toy net: hidden must be >= 1");
    }
    Rng rng(hash_mix(seed, fnv1a("mrt-toy-init")));
    auto normal = [&](int r, int c, double scale) {
        Mat<float> w(r, c);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                w(i, j) = float(scale * rng.normal());
            }
        }
        return w;
    };
    ToyNet net;
    net.w1 = normal(2, hidden, 1.0 / std::sqrt(2.0));
    net.b1 = Mat<float>::Zero(1, hidden);
    net.w2 = normal(hidden, hidden, 1.0 / std::sqrt(double(hidden)));
    net.b2 = Mat<float>::Zero(1, hidden);
    net.w3 = normal(hidden, 1, 1.0 / std::sqrt(double(hidden)));
    net.b3 = Mat<float>::Zero(1, 1);
    return net;
}

ParamRefs ToyNet::refs() {
    return {{"w1", &w1}, {"b1", &b1}, {"w2", &w2},
            {"b2", &b2}, {"w3", &w3}, {"b3", &b3}};
}

T ToyNet::forward(Tape<float>& tape, T zt, ParamHandles* handles) const {
    ParamHandles local;
    ParamHandles& ph = handles ? *handles : local;
    if (ph.items.empty()) {
        ToyNet& self = const_cast<ToyNet&>(*this);
        for (auto& [name, p] : self.refs()) {
            ph.items.emplace_back(name, tape.input(*p));
        }
    }
    auto P = [&](const char* n) { return ph.at(n); };
    T h1 = tape.silu(tape.add_rowvec(tape.matmul(zt, P("w1")), P("b1")));
    T h2 = tape.silu(tape.add_rowvec(tape.matmul(h1, P("w2")), P("b2")));
    return tape.add_rowvec(tape.matmul(h2, P("w3")), P("b3"));
}

double ToyNet::eval(double z, double t) const {
    Tape<float> tape;
    Mat<float> zt(1, 2);
    zt(0, 0) = float(z);
    zt(0, 1) = float(t);
    return double(tape.value(forward(tape, tape.input(zt)))(0, 0));
}

Field1d ToyNet::field() const {
    return [net = *this](double z, double t) { return net.eval(z, t); };
}

std::vector<double> dmd_gradient_1d(const Field1d& teacher, const Field1d& critic,
                                    const std::vector<double>& samples, Rng& rng) {
    if (samples.empty()) {
        throw InputError("dmd gradient: empty batch");
    }
    double t = 0.05 + 0.95 * rng.uniform();
    std::vector<double> g(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        double zt = (1.0 - t) * samples[i] + t * rng.normal();
        // t * (v_c - v_t) is the posterior-mean difference: the x-space DMD
        // gradient, bounded even where the velocity fields scale like 1/t.
        g[i] = t * (critic(zt, t) - teacher(zt, t)) / double(samples.size());
        if (!std::isfinite(g[i])) {
            throw NumericError("dmd gradient: non-finite");
        }
    }
    return g;
}

std::vector<double> dmd_gradient_1d(const Field1d& teacher, const ToyNet& critic,
                                    const std::vector<double>& samples, Rng& rng) {
    if (samples.empty()) {
        throw InputError("dmd gradient: empty batch");
    }
    const int n = int(samples.size());
    double t = 0.05 + 0.95 * rng.uniform();
    std::vector<double> zts(samples.size());
    Mat<float> zt(n, 2);
    for (int i = 0; i < n; ++i) {
        zts[size_t(i)] = (1.0 - t) * samples[size_t(i)] + t * rng.normal();
        zt(i, 0) = float(zts[size_t(i)]);
        zt(i, 1) = float(t);
    }
    Tape<float> tape;
    Mat<float> vc = tape.value(critic.forward(tape, tape.input(std::move(zt))));
    std::vector<double> g(samples.size());
    for (int i = 0; i < n; ++i) {
        g[size_t(i)] = t * (double(vc(i, 0)) - teacher(zts[size_t(i)], t)) / double(n);
        if (!std::isfinite(g[size_t(i)])) {
            throw NumericError("dmd gradient: non-finite");
        }
    }
    return g;
}

namespace {

// Flow-matching gradient of `net` toward targets drawn from `data`.
// grid_steps > 0 restricts t to the Euler grid {1 - k/S}; 0 draws t uniform.
double toy_flow_grads(ToyNet& net, const std::vector<double>& data, int batch, Rng& rng,
                      int grid_steps, NamedTensors& grads) {
    Mat<float> zt(batch, 2);
    Mat<float> target(batch, 1);
    for (int i = 0; i < batch; ++i) {
        double x = data[size_t(rng.below(data.size()))];
        double t = grid_steps > 0
                       ? 1.0 - double(rng.below(uint64_t(grid_steps))) / grid_steps
                       : rng.uniform();
        double eps = rng.normal();
        zt(i, 0) = float((1.0 - t) * x + t * eps);
        zt(i, 1) = float(t);
        target(i, 0) = float(x - eps);
    }
    Tape<float> tape;
    ParamHandles ph;
    T pred = net.forward(tape, tape.input(std::move(zt)), &ph);
    T loss = tape.mean_sq(tape.sub(pred, tape.input(std::move(target))));
    double lv = double(tape.value(loss)(0, 0));
    tape.backward(loss);
    for (const auto& [name, h] : ph.items) {
        grads.items.emplace_back(name, tape.grad(h));
    }
    return lv;
}

double toy_flow_step(ToyNet& net, AdamW& opt, const std::vector<double>& data, int batch,
                     Rng& rng, int grid_steps = 0) {
    NamedTensors grads;
    double lv = toy_flow_grads(net, data, batch, rng, grid_steps, grads);
    opt.step(net.refs(), grads);
    return lv;
}

}  // namespace

ToyDistillResult toy_distill(const Field1d& teacher, const ToyDistillConfig& cfg) {
    if (cfg.student_steps < 1 || cfg.critic_ratio < 1 || cfg.batch < 1 || cfg.hidden < 1 ||
        cfg.pretrain_iters < 0 || cfg.iterations < 0 || cfg.lr <= 0.0 || cfg.dmd_lr <= 0.0 ||
        cfg.grad_samples < 1 || cfg.anchor < 0.0) {
        throw ConfigError("toy distill: bad config");
    }
    ToyDistillResult out;
    out.teacher_bank =
        rollout_1d(teacher, cfg.teacher_steps, cfg.bank, hash_mix(cfg.seed, fnv1a("bank")));

    ToyNet student = ToyNet::init(cfg.hidden, hash_mix(cfg.seed, 1));
    AdamW sopt;
    sopt.lr = cfg.lr;
    sopt.init_like(student.refs());
    Rng rng(hash_mix(cfg.seed, fnv1a("mrt-toy-distill")));

    // Warmup: regress the flow field from teacher rollouts (the 1-D analogue
    // of initializing the student from teacher weights). The student only
    // ever evaluates its Euler grid, so its pretrain focuses there.
    for (int i = 0; i < cfg.pretrain_iters; ++i) {
        toy_flow_step(student, sopt, out.teacher_bank, cfg.batch, rng, cfg.student_steps);
    }

    ToyNet critic = student;
    AdamW copt;
    copt.lr = cfg.lr;
    copt.init_like(critic.refs());

    // Reservoir of recent student samples for critic training; pre-filled so
    // the critic reflects the student before the first update.
    std::vector<double> reservoir =
        rollout_1d(student.field(), cfg.student_steps, cfg.bank,
                   hash_mix(cfg.seed, fnv1a("reservoir")));
    size_t cursor = 0;
    const int critic_warmup = std::max(50, cfg.pretrain_iters / 10);
    for (int i = 0; i < critic_warmup; ++i) {
        toy_flow_step(critic, copt, reservoir, cfg.batch, rng);
    }

    // The surrogate objective needs smaller steps than the warmup; fresh
    // optimizer state because the flow-loss moments do not transfer.
    sopt = AdamW{};
    sopt.lr = cfg.dmd_lr;
    sopt.init_like(student.refs());

    const float h = float(1.0 / cfg.student_steps);
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        // Batched differentiable rollout.
        Tape<float> tape;
        ParamHandles sh;
        Mat<float> z0(cfg.batch, 1);
        for (int i = 0; i < cfg.batch; ++i) {
            z0(i, 0) = float(rng.normal());
        }
        T z = tape.input(std::move(z0));
        for (int k = 0; k < cfg.student_steps; ++k) {
            double t_k = 1.0 - double(k) / cfg.student_steps;
            T zt = tape.concat_cols(
                {z, tape.input(Mat<float>::Constant(cfg.batch, 1, float(t_k)))});
            T v = student.forward(tape, zt, &sh);
            z = tape.add(z, tape.scale(v, h));
        }
        std::vector<double> samples(static_cast<size_t>(cfg.batch));
        for (int i = 0; i < cfg.batch; ++i) {
            samples[size_t(i)] = double(tape.value(z)(i, 0));
            reservoir[cursor] = samples[size_t(i)];
            cursor = (cursor + 1) % reservoir.size();
        }

        // Average the estimator over several (t, noise) draws.
        std::vector<double> g(samples.size(), 0.0);
        for (int s = 0; s < cfg.grad_samples; ++s) {
            std::vector<double> gs = dmd_gradient_1d(teacher, critic, samples, rng);
            for (size_t i = 0; i < g.size(); ++i) {
                g[i] += gs[i] / cfg.grad_samples;
            }
        }
        Mat<float> gm(cfg.batch, 1);
        for (int i = 0; i < cfg.batch; ++i) {
            gm(i, 0) = float(g[size_t(i)]);
        }
        T surrogate = tape.sum(tape.mul(z, tape.input(std::move(gm))));
        tape.backward(surrogate);
        NamedTensors sgrads;
        for (const auto& [name, hn] : sh.items) {
            sgrads.items.emplace_back(name, tape.grad(hn));
        }
        if (cfg.anchor > 0.0) {
            // Keep the map pinned to the teacher flow at the grid times so
            // the DMD updates refine rather than erode the pretrained field.
            NamedTensors agrads;
            toy_flow_grads(student, out.teacher_bank, cfg.batch, rng, cfg.student_steps,
                           agrads);
            for (auto& [name, gmat] : sgrads.items) {
                gmat += float(cfg.anchor) * agrads.at(name);
            }
        }
        sopt.step(student.refs(), sgrads);

        for (int r = 0; r < cfg.critic_ratio; ++r) {
            toy_flow_step(critic, copt, reservoir, cfg.batch, rng);
        }
    }

    out.student = student;
    out.critic = critic;
    return out;
}

}  // namespace mrt
