#include "mrt/train.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mrt {

using nlohmann::json;

std::vector<float> interpolate(const std::vector<float>& z0, const std::vector<float>& eps,
                               double t) {
    if (z0.size() != eps.size()) {
        throw InputError("interpolate: size mismatch");
    }
    std::vector<float> out(z0.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = float((1.0 - t) * z0[i] + t * eps[i]);
    }
    return out;
}

std::vector<float> velocity_target(const std::vector<float>& z0, const std::vector<float>& eps) {
    if (z0.size() != eps.size()) {
        throw InputError("velocity_target: size mismatch");
    }
    std::vector<float> out(z0.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = z0[i] - eps[i];
    }
    return out;
}

static std::vector<int> noised_rows(const std::vector<TokenMeta>& meta) {
    std::vector<int> rows;
    for (size_t i = 0; i < meta.size(); ++i) {
        if (meta[i].role == Role::noised) {
            rows.push_back(int(i));
        }
    }
    return rows;
}

T masked_flow_loss(Tape<float>& tape, T pred, const Mat<float>& target,
                   const std::vector<TokenMeta>& meta) {
    if (tape.value(pred).rows() != Eigen::Index(meta.size()) ||
        tape.value(pred).rows() != target.rows() || tape.value(pred).cols() != target.cols()) {
        throw InputError("masked_flow_loss: shape mismatch");
    }
    std::vector<int> rows = noised_rows(meta);
    if (rows.empty()) {
        throw InputError("masked_flow_loss: no noised tokens");
    }
    Mat<float> tgt(Eigen::Index(rows.size()), target.cols());
    for (size_t i = 0; i < rows.size(); ++i) {
        tgt.row(Eigen::Index(i)) = target.row(rows[i]);
    }
    // Only noised rows are gathered, so d(loss)/d(pred) is exactly zero at
    // masked and condition rows.
    T sel = tape.gather_rows(pred, rows);
    return tape.mean_sq(tape.sub(sel, tape.input(std::move(tgt))));
}

double masked_flow_loss_value(const Mat<float>& pred, const Mat<float>& target,
                              const std::vector<TokenMeta>& meta) {
    Tape<float> tape;
    T p = tape.input(pred);
    return double(tape.value(masked_flow_loss(tape, p, target, meta))(0, 0));
}

// ---- example construction ----

static std::vector<int> sample_subset(Rng& rng, int k, int size) {
    std::vector<int> cand(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        cand[size_t(i)] = i + 1;
    }
    for (int j = 0; j < size; ++j) {
        int pick = j + int(rng.below(uint64_t(k - j)));
        std::swap(cand[size_t(j)], cand[size_t(pick)]);
    }
    cand.resize(size_t(size));
    std::sort(cand.begin(), cand.end());
    return cand;
}

PackedSequence make_task_sequence(const LayeredDesign& design, const TrainConfig& cfg,
                                  Rng& rng) {
    cfg.check();
    LayeredDesign d = design;
    int k = d.foreground_count();

    // Grouping augmentation: merge a random contiguous run of foregrounds.
    if (k >= 2 && rng.bernoulli(cfg.group_prob)) {
        int lo = 1 + int(rng.below(uint64_t(k - 1)));             // [1, k-1]
        int hi = lo + 1 + int(rng.below(uint64_t(k - lo)));       // [lo+1, k]
        std::vector<int> span;
        for (int i = lo; i <= hi; ++i) {
            span.push_back(i);  // layers[0] is the background
        }
        d = group_layers(d, span);
        k = d.foreground_count();
    }

    TaskVariant variant;
    double u = rng.uniform();
    if (u < cfg.mix_t2l) {
        variant = TaskVariant::t2l;
    } else if (u < cfg.mix_t2l + cfg.mix_i2l) {
        variant = TaskVariant::i2l;
    } else {
        variant = rng.bernoulli(0.5) ? TaskVariant::l2l_add : TaskVariant::l2l_restyle;
        if (variant == TaskVariant::l2l_add && k < 2) {
            variant = TaskVariant::l2l_restyle;  // addition needs a proper subset
        }
    }

    RegionLatents rl = build_region_latents(d, variant, cfg.patch);

    TaskSpec task;
    switch (variant) {
        case TaskVariant::t2l:
            task = TaskSpec::t2l(d.global_caption);
            break;
        case TaskVariant::i2l:
            task = TaskSpec::i2l(d.global_caption);
            break;
        case TaskVariant::l2l_add: {
            std::vector<int> a = sample_subset(rng, k, 1 + int(rng.below(uint64_t(k - 1))));
            std::vector<std::string> caps;
            for (const auto& l : d.layers) {
                if (l.kind == LayerKind::foreground) {
                    caps.push_back(l.caption);
                }
            }
            task = TaskSpec::l2l_add(a, assemble_layer_prompt(caps, a));
            break;
        }
        case TaskVariant::l2l_restyle: {
            std::vector<int> sel = sample_subset(rng, k, 1 + int(rng.below(uint64_t(k))));
            std::map<int, LatentGrid> conds;
            for (int i : sel) {
                const LayerRecord& layer = d.layers[size_t(i)];
                const Region& fg = rl.foregrounds[size_t(i - 1)];
                LayerRecord shifted{restyle_variant(layer.image, rng),
                                    {layer.rect.x - fg.rect.x, layer.rect.y - fg.rect.y,
                                     layer.rect.w, layer.rect.h},
                                    layer.z,
                                    LayerKind::foreground,
                                    layer.caption};
                conds[i] = encode(place(shifted, fg.rect.w, fg.rect.h), rl.patch);
            }
            task = TaskSpec::l2l_restyle(sel, std::move(conds));
            break;
        }
    }
    if (rng.bernoulli(cfg.null_caption_prob)) {
        task.caption.clear();
    }
    return pack(rl, task);
}

namespace {

TaskVariant variant_of(const PackedSequence& seq) {
    // Recover the variant from structural evidence: conditions mark restyle,
    // a composed-only mask marks I2L, any other mask marks addition.
    bool any_cond = false, any_masked_layer = false, composed_masked = false;
    for (const TokenMeta& m : seq.meta) {
        if (m.role == Role::condition) {
            any_cond = true;
        }
        if (m.role == Role::masked_clean) {
            if (m.region_id == 0) {
                composed_masked = true;
            } else {
                any_masked_layer = true;
            }
        }
    }
    if (any_cond) {
        return TaskVariant::l2l_restyle;
    }
    if (any_masked_layer) {
        return TaskVariant::l2l_add;
    }
    if (composed_masked) {
        return TaskVariant::i2l;
    }
    return TaskVariant::t2l;
}

}  // namespace

TrainExample make_training_example(const LayeredDesign& design, const TrainConfig& cfg,
                                   Rng& rng) {
    TrainExample ex;
    ex.seq = make_task_sequence(design, cfg, rng);
    ex.variant = variant_of(ex.seq);
    ex.t = rng.uniform();
    ex.target = Mat<float>::Zero(ex.seq.n_tokens(), ex.seq.channels);
    for (int i = 0; i < ex.seq.n_tokens(); ++i) {
        if (ex.seq.meta[size_t(i)].role != Role::noised) {
            continue;
        }
        float* tok = ex.seq.token(i);
        for (int c = 0; c < ex.seq.channels; ++c) {
            float z0 = tok[c];
            float eps = float(rng.normal());
            ex.target(i, c) = z0 - eps;
            tok[c] = float((1.0 - ex.t) * z0 + ex.t * eps);
        }
    }
    return ex;
}

// ---- optimizer ----

ParamRefs param_refs(Params<float>& params) {
    ParamRefs refs;
    visit_params(params, [&](const std::string& name, Mat<float>& p) {
        refs.emplace_back(name, &p);
    });
    return refs;
}

void AdamW::init_like(const ParamRefs& params) {
    t = 0;
    m.items.clear();
    v.items.clear();
    for (const auto& [name, p] : params) {
        m.items.emplace_back(name, Mat<float>::Zero(p->rows(), p->cols()));
        v.items.emplace_back(name, Mat<float>::Zero(p->rows(), p->cols()));
    }
}

void AdamW::init_like(const Params<float>& params) {
    init_like(param_refs(const_cast<Params<float>&>(params)));
}

void AdamW::step(const ParamRefs& params, const NamedTensors& grads) {
    ++t;
    const float bc1 = float(1.0 - std::pow(beta1, double(t)));
    const float bc2 = float(1.0 - std::pow(beta2, double(t)));
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params[i].first;
        Mat<float>& p = *params[i].second;
        if (i >= grads.items.size() || grads.items[i].first != name) {
            throw Error("adamw: gradient order mismatch at " + name);
        }
        const Mat<float>& g = grads.items[i].second;
        Mat<float>& mi = m.items[i].second;
        Mat<float>& vi = v.items[i].second;
        if (g.rows() != p.rows() || g.cols() != p.cols()) {
            throw Error("adamw: gradient shape mismatch at " + name);
        }
        mi = float(beta1) * mi + float(1.0 - beta1) * g;
        vi = float(beta2) * vi + float(1.0 - beta2) * g.cwiseProduct(g);
        Mat<float> mhat = mi / bc1;
        Mat<float> vhat = vi / bc2;
        p -= float(lr) * (mhat.array() / (vhat.array().sqrt() + float(eps))).matrix();
        if (weight_decay != 0.0) {
            p -= float(lr * weight_decay) * p;
        }
    }
}

void AdamW::step(Params<float>& params, const NamedTensors& grads) {
    step(param_refs(params), grads);
}

// ---- checkpoint IO ----

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) {
        b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    }
    os.write((const char*)b, 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    }
    os.write((const char*)b, 8);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read((char*)b, 4)) {
        throw InputError("checkpoint: truncated");
    }
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= uint32_t(b[i]) << (8 * i);
    }
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read((char*)b, 8)) {
        throw InputError("checkpoint: truncated");
    }
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= uint64_t(b[i]) << (8 * i);
    }
    return v;
}

void put_tensors(std::ostream& os, const std::string& prefix, const NamedTensors& t) {
    for (const auto& [name, mat] : t.items) {
        std::string full = prefix + name;
        put_u32(os, uint32_t(full.size()));
        os.write(full.data(), std::streamsize(full.size()));
        put_u64(os, uint64_t(mat.rows()));
        put_u64(os, uint64_t(mat.cols()));
        os.write((const char*)mat.data(), std::streamsize(sizeof(float)) * mat.size());
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw InputError("checkpoint: cannot open " + path.string() + " for writing");
    }
    os.write(kCheckpointMagic, 8);
    put_u64(os, ckpt.config_json.size());
    os.write(ckpt.config_json.data(), std::streamsize(ckpt.config_json.size()));
    put_u64(os, uint64_t(ckpt.step));
    uint32_t n = uint32_t(ckpt.params.items.size() + ckpt.adam_m.items.size() +
                          ckpt.adam_v.items.size());
    put_u32(os, n);
    put_tensors(os, "p.", ckpt.params);
    put_tensors(os, "m.", ckpt.adam_m);
    put_tensors(os, "v.", ckpt.adam_v);
    put_u64(os, ckpt.rng_state.size());
    os.write((const char*)ckpt.rng_state.data(), std::streamsize(ckpt.rng_state.size()));
    if (!os) {
        throw InputError("checkpoint: write failed for " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw InputError("checkpoint: cannot open " + path.string());
    }
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        throw InputError("checkpoint: bad magic in " + path.string());
    }
    Checkpoint ckpt;
    uint64_t clen = get_u64(is);
    ckpt.config_json.resize(clen);
    if (!is.read(ckpt.config_json.data(), std::streamsize(clen))) {
        throw InputError("checkpoint: truncated config");
    }
    ckpt.step = int64_t(get_u64(is));
    uint32_t n = get_u32(is);
    for (uint32_t i = 0; i < n; ++i) {
        uint32_t nlen = get_u32(is);
        std::string full(nlen, '\0');
        if (!is.read(full.data(), nlen)) {
            throw InputError("checkpoint: truncated tensor name");
        }
        uint64_t rows = get_u64(is);
        uint64_t cols = get_u64(is);
        if (rows > (1u << 28) || cols > (1u << 28)) {
            throw InputError("checkpoint: implausible tensor shape");
        }
        Mat<float> mat(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        if (!is.read((char*)mat.data(), std::streamsize(sizeof(float)) * mat.size())) {
            throw InputError("checkpoint: truncated tensor data");
        }
        if (full.size() < 3 || full[1] != '.') {
            throw InputError("checkpoint: malformed tensor name " + full);
        }
        std::string name = full.substr(2);
        switch (full[0]) {
            case 'p': ckpt.params.items.emplace_back(name, std::move(mat)); break;
            case 'm': ckpt.adam_m.items.emplace_back(name, std::move(mat)); break;
            case 'v': ckpt.adam_v.items.emplace_back(name, std::move(mat)); break;
            default: throw InputError("checkpoint: unknown tensor group in " + full);
        }
    }
    uint64_t rlen = get_u64(is);
    ckpt.rng_state.resize(rlen);
    if (rlen > 0 && !is.read((char*)ckpt.rng_state.data(), std::streamsize(rlen))) {
        throw InputError("checkpoint: truncated rng state");
    }
    char extra;
    if (is.read(&extra, 1)) {
        throw InputError("checkpoint: trailing bytes in " + path.string());
    }
    return ckpt;
}

std::string checkpoint_config_json(const ModelConfig& mc, const TrainConfig& tc, bool distilled) {
    json j;
    j["format"] = "mrt-checkpoint/1";
    j["distilled"] = distilled;
    j["model"] = {{"depth", mc.depth},
                  {"dim", mc.dim},
                  {"heads", mc.heads},
                  {"latent_dim", mc.latent_dim},
                  {"vocab", mc.vocab},
                  {"mlp_ratio", mc.mlp_ratio},
                  {"max_regions", mc.max_regions},
                  {"max_caption_tokens", mc.max_caption_tokens},
                  {"rope_base", mc.rope_base}};
    j["train"] = {{"lr", tc.lr},
                  {"batch_size", tc.batch_size},
                  {"steps", tc.steps},
                  {"mix_t2l", tc.mix_t2l},
                  {"mix_i2l", tc.mix_i2l},
                  {"mix_l2l", tc.mix_l2l},
                  {"group_prob", tc.group_prob},
                  {"null_caption_prob", tc.null_caption_prob},
                  {"seed", tc.seed},
                  {"patch", tc.patch},
                  {"beta1", tc.beta1},
                  {"beta2", tc.beta2},
                  {"adam_eps", tc.adam_eps},
                  {"weight_decay", tc.weight_decay}};
    return j.dump();
}

void parse_checkpoint_config(const std::string& json_text, ModelConfig* mc, TrainConfig* tc,
                             bool* distilled) {
    try {
        json j = json::parse(json_text);
        if (j.at("format").get<std::string>() != "mrt-checkpoint/1") {
            throw InputError("checkpoint: unknown config format");
        }
        if (distilled != nullptr) {
            *distilled = j.at("distilled").get<bool>();
        }
        if (mc != nullptr) {
            const json& m = j.at("model");
            mc->depth = m.at("depth").get<int>();
            mc->dim = m.at("dim").get<int>();
            mc->heads = m.at("heads").get<int>();
            mc->latent_dim = m.at("latent_dim").get<int>();
            mc->vocab = m.at("vocab").get<int>();
            mc->mlp_ratio = m.at("mlp_ratio").get<int>();
            mc->max_regions = m.at("max_regions").get<int>();
            mc->max_caption_tokens = m.at("max_caption_tokens").get<int>();
            mc->rope_base = m.at("rope_base").get<double>();
        }
        if (tc != nullptr) {
            const json& t = j.at("train");
            tc->lr = t.at("lr").get<double>();
            tc->batch_size = t.at("batch_size").get<int>();
            tc->steps = t.at("steps").get<int>();
            tc->mix_t2l = t.at("mix_t2l").get<double>();
            tc->mix_i2l = t.at("mix_i2l").get<double>();
            tc->mix_l2l = t.at("mix_l2l").get<double>();
            tc->group_prob = t.at("group_prob").get<double>();
            tc->null_caption_prob = t.at("null_caption_prob").get<double>();
            tc->seed = t.at("seed").get<uint64_t>();
            tc->patch = t.at("patch").get<int>();
            tc->beta1 = t.at("beta1").get<double>();
            tc->beta2 = t.at("beta2").get<double>();
            tc->adam_eps = t.at("adam_eps").get<double>();
            tc->weight_decay = t.at("weight_decay").get<double>();
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("checkpoint: bad config json: ") + e.what());
    }
}

Checkpoint make_checkpoint(const Model<float>& model, const TrainConfig& tc, const AdamW& opt,
                           int64_t step, const Rng& rng, bool distilled) {
    Checkpoint ckpt;
    ckpt.config_json = checkpoint_config_json(model.cfg, tc, distilled);
    ckpt.step = step;
    visit_params(model.params, [&](const std::string& name, const Mat<float>& p) {
        ckpt.params.items.emplace_back(name, p);
    });
    ckpt.adam_m = opt.m;
    ckpt.adam_v = opt.v;
    ckpt.rng_state = rng.serialize();
    return ckpt;
}

Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
    ModelConfig mc;
    parse_checkpoint_config(ckpt.config_json, &mc, nullptr, nullptr);
    Model<float> model = Model<float>::init(mc, 0);
    size_t i = 0;
    visit_params(model.params, [&](const std::string& name, Mat<float>& p) {
        if (i >= ckpt.params.items.size() || ckpt.params.items[i].first != name) {
            throw InputError("checkpoint: parameter table mismatch at " + name);
        }
        const Mat<float>& src = ckpt.params.items[i].second;
        if (src.rows() != p.rows() || src.cols() != p.cols()) {
            throw InputError("checkpoint: shape mismatch at " + name);
        }
        p = src;
        ++i;
    });
    if (i != ckpt.params.items.size()) {
        throw InputError("checkpoint: extra parameter tensors");
    }
    return model;
}

// ---- training loop ----

const char* task_name(TaskVariant v) {
    switch (v) {
        case TaskVariant::t2l: return "t2l";
        case TaskVariant::i2l: return "i2l";
        case TaskVariant::l2l_add: return "l2l-add";
        case TaskVariant::l2l_restyle: return "l2l-restyle";
    }
    return "?";
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRow>& log) {
    std::ofstream os(path);
    if (!os) {
        throw InputError("loss log: cannot open " + path.string());
    }
    os << "step,task,loss\n";
    char buf[64];
    for (const LossRow& row : log) {
        std::snprintf(buf, sizeof(buf), "%.9g", row.loss);
        os << row.step << ',' << task_name(row.task) << ',' << buf << '\n';
    }
}

TrainResult train(const ModelConfig& mc, const TrainConfig& tc,
                  const std::vector<LayeredDesign>& dataset, const Checkpoint* resume) {
    mc.check();
    tc.check();
    if (dataset.empty()) {
        throw InputError("train: empty dataset");
    }

    Model<float> model =
        resume != nullptr ? model_from_checkpoint(*resume) : Model<float>::init(mc, tc.seed);
    AdamW opt;
    opt.lr = tc.lr;
    opt.beta1 = tc.beta1;
    opt.beta2 = tc.beta2;
    opt.eps = tc.adam_eps;
    opt.weight_decay = tc.weight_decay;
    opt.init_like(model.params);

    Rng rng(hash_mix(tc.seed, fnv1a("mrt-train")));
    int64_t start = 0;
    if (resume != nullptr) {
        start = resume->step;
        opt.t = resume->step;
        opt.m = resume->adam_m;
        opt.v = resume->adam_v;
        rng = Rng::deserialize(resume->rng_state.data(), resume->rng_state.size());
    }

    TrainResult result;
    const int b = tc.batch_size;
    for (int64_t step = start; step < start + tc.steps; ++step) {
        std::vector<TrainExample> batch;
        batch.reserve(size_t(b));
        for (int i = 0; i < b; ++i) {
            size_t idx = size_t(rng.below(dataset.size()));
            batch.push_back(make_training_example(dataset[idx], tc, rng));
        }

        std::vector<NamedTensors> grads(static_cast<size_t>(b));
        std::vector<double> losses(size_t(b), 0.0);
        parallel_for(size_t(b), [&](size_t i) {
            Tape<float> tape;
            ParamHandles handles;
            T pred = model.forward(tape, batch[i].seq, batch[i].t, &handles);
            T loss = masked_flow_loss(tape, pred, batch[i].target, batch[i].seq.meta);
            losses[i] = double(tape.value(loss)(0, 0));
            tape.backward(loss);
            for (const auto& [name, h] : handles.items) {
                grads[i].items.emplace_back(name, tape.grad(h));
            }
        });

        for (int i = 0; i < b; ++i) {
            if (!std::isfinite(losses[size_t(i)])) {
                throw NumericError("train: non-finite loss at step " + std::to_string(step));
            }
            result.log.push_back({step, batch[size_t(i)].variant, losses[size_t(i)]});
        }

        NamedTensors total = std::move(grads[0]);
        for (int i = 1; i < b; ++i) {
            for (size_t j = 0; j < total.items.size(); ++j) {
                total.items[j].second += grads[size_t(i)].items[j].second;
            }
        }
        if (b > 1) {
            for (auto& [name, g] : total.items) {
                g *= 1.0f / float(b);
            }
        }
        opt.step(model.params, total);
    }

    result.ckpt = make_checkpoint(model, tc, opt, start + tc.steps, rng, false);
    return result;
}

}  // namespace mrt
