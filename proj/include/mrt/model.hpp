#ifndef MRT_MODEL_HPP
#define MRT_MODEL_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mrt/region.hpp"
#include "mrt/tensor.hpp"

namespace mrt {

struct ModelConfig {
    int depth = 4;
    int dim = 128;
    int heads = 4;
    int latent_dim = 4 * kDefaultPatchSize * kDefaultPatchSize;
    int vocab = 4096;        // caption hash buckets
    int mlp_ratio = 4;
    int max_regions = 64;    // region-id embedding rows
    int max_caption_tokens = 32;
    double rope_base = 10000.0;

    int head_dim() const { return dim / heads; }

    void check() const {
        if (depth < 0 || dim < 4 || heads < 1 || latent_dim < 1 || vocab < 1 ||
            mlp_ratio < 1 || max_regions < 4 || max_caption_tokens < 0) {
            throw ConfigError("model: non-positive dimension");
        }
        if (dim % heads != 0) {
            throw ConfigError("model: dim must divide by heads");
        }
        if (head_dim() % 4 != 0) {
            throw ConfigError("model: head dim must divide by 4 (2D rotary pairs)");
        }
    }
};

// Whitespace tokens -> hash buckets in [0, vocab). Deterministic; empty text
// gives an empty sequence (null condition).
std::vector<int> caption_token_ids(const std::string& text, int vocab, int max_tokens);

// Role embedding rows; the condition row realizes the learnable
// condition-token embedding.
enum : int { kRoleNoised = 0, kRoleMasked = 1, kRoleCondition = 2, kRoleCaption = 3 };

template <typename S>
struct BlockParams {
    Mat<S> mod_w, mod_b;  // d x 6d, 1 x 6d: shift/scale/gate for attn and mlp
    Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
    Mat<S> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

template <typename S>
struct Params {
    Mat<S> in_proj_w, in_proj_b;  // C x d, 1 x d
    Mat<S> cap_emb;               // V x d
    Mat<S> region_emb;            // R x d
    Mat<S> role_emb;              // 4 x d
    Mat<S> t_mlp_w, t_mlp_b;      // d x d, 1 x d
    std::vector<BlockParams<S>> blocks;
    Mat<S> final_mod_w, final_mod_b;  // d x 2d, 1 x 2d
    Mat<S> head_w, head_b;            // d x C, 1 x C
};

// Calls f(name, mat) for every parameter tensor in a fixed order; the order
// defines gradient accumulation and the checkpoint layout.
template <typename S, typename F>
void visit_params(Params<S>& p, F&& f) {
    f("in_proj_w", p.in_proj_w);
    f("in_proj_b", p.in_proj_b);
    f("cap_emb", p.cap_emb);
    f("region_emb", p.region_emb);
    f("role_emb", p.role_emb);
    f("t_mlp_w", p.t_mlp_w);
    f("t_mlp_b", p.t_mlp_b);
    for (size_t i = 0; i < p.blocks.size(); ++i) {
        std::string pre = "block" + std::to_string(i) + ".";
        BlockParams<S>& b = p.blocks[i];
        f(pre + "mod_w", b.mod_w);
        f(pre + "mod_b", b.mod_b);
        f(pre + "wq", b.wq);
        f(pre + "bq", b.bq);
        f(pre + "wk", b.wk);
        f(pre + "bk", b.bk);
        f(pre + "wv", b.wv);
        f(pre + "bv", b.bv);
        f(pre + "wo", b.wo);
        f(pre + "bo", b.bo);
        f(pre + "mlp_w1", b.mlp_w1);
        f(pre + "mlp_b1", b.mlp_b1);
        f(pre + "mlp_w2", b.mlp_w2);
        f(pre + "mlp_b2", b.mlp_b2);
    }
    f("final_mod_w", p.final_mod_w);
    f("final_mod_b", p.final_mod_b);
    f("head_w", p.head_w);
    f("head_b", p.head_b);
}

template <typename S, typename F>
void visit_params(const Params<S>& p, F&& f) {
    visit_params(const_cast<Params<S>&>(p), [&](const std::string& n, Mat<S>& m) {
        f(n, static_cast<const Mat<S>&>(m));
    });
}

// Handles of parameters loaded onto a tape, in visit order.
struct ParamHandles {
    std::vector<std::pair<std::string, T>> items;
    T at(const std::string& name) const {
        for (const auto& [n, h] : items) {
            if (n == name) {
                return h;
            }
        }
        throw Error("no parameter handle: " + name);
    }
};

template <typename S>
struct Model {
    ModelConfig cfg;
    Params<S> params;

    static Model init(const ModelConfig& cfg, uint64_t seed);

    // Builds the forward graph on `tape`. Returns the velocity node covering
    // the image tokens only (caption rows dropped). When `handles` is given,
    // parameters are loaded as tape inputs recorded there (for training); a
    // pre-populated handle set is reused instead of reloading, so several
    // forwards on one tape share parameter nodes. `attn_out` receives
    // per-block, per-head attention maps when non-null. `latents_in`
    // substitutes an existing tape node for the image latents, which chains
    // rollout steps differentiably; seq token values are then ignored.
    T forward(Tape<S>& tape, const PackedSequence& seq, double t,
              ParamHandles* handles = nullptr,
              std::vector<std::vector<Mat<S>>>* attn_out = nullptr,
              const T* latents_in = nullptr) const;

    // Convenience: values only.
    Mat<S> velocity(const PackedSequence& seq, double t) const {
        Tape<S> tape;
        return tape.value(forward(tape, seq, t));
    }

    long long param_count() const;
};

long long param_count_formula(const ModelConfig& cfg);

// ---- implementation ----

template <typename S>
Model<S> Model<S>::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.check();
    Model<S> m;
    m.cfg = cfg;
    Rng rng(hash_mix(seed, fnv1a("mrt-core-init")));
    const int d = cfg.dim;
    const int c = cfg.latent_dim;
    const int md = cfg.mlp_ratio * d;

    auto normal = [&](int r, int cc) {
        Mat<S> w(r, cc);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < cc; ++j) {
                w(i, j) = S(0.02 * rng.normal());
            }
        }
        return w;
    };
    auto zeros = [](int r, int cc) { return Mat<S>::Zero(r, cc); };

    Params<S>& p = m.params;
    p.in_proj_w = normal(c, d);
    p.in_proj_b = zeros(1, d);
    p.cap_emb = normal(cfg.vocab, d);
    p.region_emb = normal(cfg.max_regions, d);
    p.role_emb = normal(4, d);
    p.t_mlp_w = normal(d, d);
    p.t_mlp_b = zeros(1, d);
    p.blocks.resize(size_t(cfg.depth));
    for (auto& b : p.blocks) {
        b.mod_w = zeros(d, 6 * d);  // adaLN-zero: blocks start as identity
        b.mod_b = zeros(1, 6 * d);
        b.wq = normal(d, d);
        b.bq = zeros(1, d);
        b.wk = normal(d, d);
        b.bk = zeros(1, d);
        b.wv = normal(d, d);
        b.bv = zeros(1, d);
        b.wo = normal(d, d);
        b.bo = zeros(1, d);
        b.mlp_w1 = normal(d, md);
        b.mlp_b1 = zeros(1, md);
        b.mlp_w2 = normal(md, d);
        b.mlp_b2 = zeros(1, d);
    }
    p.final_mod_w = zeros(d, 2 * d);
    p.final_mod_b = zeros(1, 2 * d);
    p.head_w = zeros(d, c);  // zero output head: zero velocity at init
    p.head_b = zeros(1, c);
    return m;
}

template <typename S>
long long count_in(const Params<S>& p) {
    long long n = 0;
    visit_params(p, [&](const std::string&, const Mat<S>& m) { n += m.size(); });
    return n;
}

inline long long param_count_formula(const ModelConfig& cfg) {
    long long d = cfg.dim, c = cfg.latent_dim, md = cfg.mlp_ratio * d;
    long long embeds = c * d + d + cfg.vocab * d + cfg.max_regions * d + 4 * d;
    long long tcond = d * d + d;
    long long block = d * 6 * d + 6 * d          // modulation
                      + 4 * (d * d + d)          // q,k,v,o
                      + d * md + md + md * d + d;  // mlp
    long long final_part = d * 2 * d + 2 * d + d * c + c;
    return embeds + tcond + cfg.depth * block + final_part;
}

template <typename S>
long long Model<S>::param_count() const {
    return param_count_formula(cfg);
}

template <typename S>
T Model<S>::forward(Tape<S>& tape, const PackedSequence& seq, double t, ParamHandles* handles,
                    std::vector<std::vector<Mat<S>>>* attn_out, const T* latents_in) const {
    cfg.check();
    if (!(t >= 0.0 && t <= 1.0)) {
        throw InputError("forward: t outside [0,1]");
    }
    if (seq.channels != cfg.latent_dim) {
        throw InputError("forward: sequence channel dim differs from model latent dim");
    }
    const int n_img = seq.n_tokens();
    if (n_img < 1) {
        throw InputError("forward: empty sequence");
    }
    if (latents_in == nullptr) {
        for (float v : seq.tokens) {
            if (!std::isfinite(v)) {
                throw NumericError("forward: non-finite latent input");
            }
        }
    } else {
        const Mat<S>& lv = tape.value(*latents_in);
        if (lv.rows() != n_img || lv.cols() != cfg.latent_dim) {
            throw InputError("forward: latent node shape mismatch");
        }
        if (!lv.allFinite()) {
            throw NumericError("forward: non-finite latent input");
        }
    }

    const int d = cfg.dim;
    const int dh = cfg.head_dim();

    // load parameters onto the tape (visit order fixes gradient determinism);
    // a pre-populated handle set is reused so repeated calls on one tape
    // accumulate gradients into a single set of parameter nodes.
    ParamHandles local;
    ParamHandles& ph = handles ? *handles : local;
    if (ph.items.empty()) {
        visit_params(params, [&](const std::string& name, const Mat<S>& m) {
            ph.items.emplace_back(name, tape.input(m));
        });
    }
    auto P = [&](const char* name) { return ph.at(name); };

    // caption tokens
    std::vector<int> cap_ids = caption_token_ids(seq.caption, cfg.vocab, cfg.max_caption_tokens);
    const int n_cap = int(cap_ids.size());
    const int n = n_cap + n_img;

    // image token embedding: latent projection + region id + role
    std::vector<int> region_ids(static_cast<size_t>(n_img));
    std::vector<int> role_ids(static_cast<size_t>(n_img));
    for (int i = 0; i < n_img; ++i) {
        const TokenMeta& m = seq.meta[size_t(i)];
        if (m.layer_index < 0 || m.layer_index >= cfg.max_regions) {
            throw ConfigError("forward: layer index exceeds max_regions");
        }
        region_ids[size_t(i)] = m.layer_index;
        switch (m.role) {
            case Role::noised: role_ids[size_t(i)] = kRoleNoised; break;
            case Role::masked_clean: role_ids[size_t(i)] = kRoleMasked; break;
            case Role::condition: role_ids[size_t(i)] = kRoleCondition; break;
        }
    }
    T lat_node;
    if (latents_in != nullptr) {
        lat_node = *latents_in;
    } else {
        Mat<S> latents(n_img, cfg.latent_dim);
        for (int i = 0; i < n_img; ++i) {
            for (int j = 0; j < cfg.latent_dim; ++j) {
                latents(i, j) = S(seq.token(i)[j]);
            }
        }
        lat_node = tape.input(std::move(latents));
    }
    T x_img = tape.add_rowvec(tape.matmul(lat_node, P("in_proj_w")), P("in_proj_b"));
    x_img = tape.add(x_img, tape.gather_rows(P("region_emb"), region_ids));
    x_img = tape.add(x_img, tape.gather_rows(P("role_emb"), role_ids));

    T x;
    if (n_cap > 0) {
        T x_cap = tape.add(tape.gather_rows(P("cap_emb"), cap_ids),
                           tape.gather_rows(P("role_emb"),
                                            std::vector<int>(size_t(n_cap), kRoleCaption)));
        x = tape.concat_rows({x_cap, x_img});
    } else {
        x = x_img;
    }

    // rotary tables: per head, first dh/4 pairs encode row, the rest col.
    // caption token j sits at (min_row, min_col + j): anchoring to the image
    // extent keeps outputs invariant under global position translation.
    int min_row = seq.meta[0].row, min_col = seq.meta[0].col;
    for (const auto& m : seq.meta) {
        min_row = std::min(min_row, m.row);
        min_col = std::min(min_col, m.col);
    }
    Mat<S> cosm(n, d / 2), sinm(n, d / 2);
    const int pairs_per_kind = dh / 4;
    for (int i = 0; i < n; ++i) {
        int row, col;
        if (i < n_cap) {
            row = min_row;
            col = min_col + i;
        } else {
            row = seq.meta[size_t(i - n_cap)].row;
            col = seq.meta[size_t(i - n_cap)].col;
        }
        for (int p = 0; p < d / 2; ++p) {
            int q = p % (dh / 2);  // pair index within its head
            bool is_row = q < pairs_per_kind;
            int fi = is_row ? q : q - pairs_per_kind;
            double omega = std::pow(cfg.rope_base, -double(fi) / double(pairs_per_kind));
            double ang = double(is_row ? row : col) * omega;
            cosm(i, p) = S(std::cos(ang));
            sinm(i, p) = S(std::sin(ang));
        }
    }

    // timestep conditioning: sinusoidal embedding -> silu mlp -> hidden
    Mat<S> temb(1, d);
    for (int j = 0; j < d / 2; ++j) {
        double omega = std::pow(10000.0, -double(j) / double(d / 2));
        double ang = 1000.0 * t * omega;
        temb(0, j) = S(std::sin(ang));
        temb(0, d / 2 + j) = S(std::cos(ang));
    }
    T t_hidden = tape.silu(
        tape.add_rowvec(tape.matmul(tape.input(std::move(temb)), P("t_mlp_w")), P("t_mlp_b")));

    auto affine = [&](T in, T w, T b) { return tape.add_rowvec(tape.matmul(in, w), b); };
    auto modulate = [&](T in, T scale_row, T shift_row) {
        return tape.add_rowvec(tape.mul_rowvec(in, tape.add_const(scale_row, S(1))), shift_row);
    };

    if (attn_out) {
        attn_out->clear();
    }
    for (int bi = 0; bi < cfg.depth; ++bi) {
        std::string pre = "block" + std::to_string(bi) + ".";
        auto B = [&](const char* s) { return ph.at(pre + s); };
        T mod = affine(t_hidden, B("mod_w"), B("mod_b"));
        T shift1 = tape.cols(mod, 0, d);
        T scale1 = tape.cols(mod, d, d);
        T gate1 = tape.cols(mod, 2 * d, d);
        T shift2 = tape.cols(mod, 3 * d, d);
        T scale2 = tape.cols(mod, 4 * d, d);
        T gate2 = tape.cols(mod, 5 * d, d);

        T h = modulate(tape.layernorm_rows(x), scale1, shift1);
        T q = tape.rotate_pairs(affine(h, B("wq"), B("bq")), cosm, sinm);
        T k = tape.rotate_pairs(affine(h, B("wk"), B("bk")), cosm, sinm);
        T v = affine(h, B("wv"), B("bv"));
        std::vector<T> head_outs;
        std::vector<Mat<S>> block_attn;
        for (int hd = 0; hd < cfg.heads; ++hd) {
            T qh = tape.cols(q, hd * dh, dh);
            T kh = tape.cols(k, hd * dh, dh);
            T vh = tape.cols(v, hd * dh, dh);
            T att = tape.softmax_rows(
                tape.scale(tape.matmul_nt(qh, kh), S(1.0 / std::sqrt(double(dh)))));
            if (attn_out) {
                block_attn.push_back(tape.value(att));
            }
            head_outs.push_back(tape.matmul(att, vh));
        }
        if (attn_out) {
            attn_out->push_back(std::move(block_attn));
        }
        T o = affine(tape.concat_cols(head_outs), B("wo"), B("bo"));
        x = tape.add(x, tape.mul_rowvec(o, gate1));

        T h2 = modulate(tape.layernorm_rows(x), scale2, shift2);
        T mlp = affine(tape.silu(affine(h2, B("mlp_w1"), B("mlp_b1"))), B("mlp_w2"),
                       B("mlp_b2"));
        x = tape.add(x, tape.mul_rowvec(mlp, gate2));
    }

    T fmod = affine(t_hidden, P("final_mod_w"), P("final_mod_b"));
    T h = modulate(tape.layernorm_rows(x), tape.cols(fmod, d, d), tape.cols(fmod, 0, d));
    T out_all = affine(h, P("head_w"), P("head_b"));
    return n_cap > 0 ? tape.rows(out_all, n_cap, n_img) : out_all;
}

}  // namespace mrt

#endif
