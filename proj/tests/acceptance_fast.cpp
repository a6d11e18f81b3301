// Acceptance gate, fast half: property checks that run in seconds. Each
// criterion prints exactly one PASS/FAIL line with its measured numbers; the
// process exits with the number of failed criteria. The slow empirical
// criteria (overfit reconstruction, distillation quality) live in
// acceptance_overfit.
#include <chrono>
#include <cinttypes>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrt/bundle.hpp"
#include "mrt/cli.hpp"
#include "mrt/codec.hpp"
#include "mrt/distill.hpp"
#include "mrt/eval.hpp"
#include "mrt/model.hpp"
#include "mrt/region.hpp"
#include "mrt/sampler.hpp"
#include "mrt/synth.hpp"
#include "mrt/train.hpp"

using namespace mrt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int g_failures = 0;

void report(int num, const char* name, bool pass, const std::string& detail) {
    std::printf("%s  criterion %2d: %s — %s\n", pass ? "PASS" : "FAIL", num, name,
                detail.c_str());
    std::fflush(stdout);
    if (!pass) {
        ++g_failures;
    }
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

double max_diff(const RgbaImage& a, const RgbaImage& b) {
    if (a.width != b.width || a.height != b.height) {
        return 1e9;
    }
    double worst = 0.0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        worst = std::max(worst, double(std::abs(a.px[i] - b.px[i])));
    }
    return worst;
}

RgbaImage random_premult(Rng& rng, int w, int h) {
    RgbaImage img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float* p = img.at(x, y);
            p[3] = float(rng.uniform());
            for (int c = 0; c < 3; ++c) {
                p[c] = p[3] * float(rng.uniform());
            }
        }
    }
    return img;
}

// ---- 1: compositing algebra ----

void criterion_compositing() {
    Rng rng(101);
    double worst = 0.0;
    int cases = 0;

    for (int i = 0; i < 1000; ++i) {
        RgbaImage a = random_premult(rng, 1, 1);
        RgbaImage b = random_premult(rng, 1, 1);
        RgbaImage c = random_premult(rng, 1, 1);
        worst = std::max(worst, max_diff(over(over(a, b), c), over(a, over(b, c))));
        RgbaImage clear(1, 1);
        worst = std::max(worst, max_diff(over(clear, a), a));
        worst = std::max(worst, max_diff(over(a, clear), a));
        RgbaImage o = over(a, b);
        const float* p = o.at(0, 0);
        for (int ch = 0; ch < 3; ++ch) {
            worst = std::max(worst, double(p[ch] - p[3]));  // channel <= alpha
            worst = std::max(worst, double(-p[ch]));
        }
        worst = std::max(worst, double(p[3] - 1.0f));
        cases += 4;
    }

    GenParams gp;
    gp.min_size = 12;
    gp.max_size = 20;
    gp.min_layers = 2;
    gp.max_layers = 5;
    for (int i = 0; i < 500; ++i) {
        LayeredDesign d = gen_design(hash_mix(7, uint64_t(i)), gp);
        int k = d.foreground_count();

        int a = 1 + int(rng.below(uint64_t(k - 1)));
        int b = a + 1 + int(rng.below(uint64_t(k - a)));
        std::vector<int> span;
        for (int idx = a; idx <= b; ++idx) {
            span.push_back(idx);
        }
        worst = std::max(worst, max_diff(compose(d), compose(group_layers(d, span))));

        // cropping the composite == compositing pre-clipped layers
        Rect sub = d.bg_rect;
        LayeredDesign clipped;
        clipped.canvas_w = sub.w;
        clipped.canvas_h = sub.h;
        clipped.bg_rect = {0, 0, sub.w, sub.h};
        for (const auto& layer : d.layers) {
            int x0 = std::max(layer.rect.x, sub.x);
            int y0 = std::max(layer.rect.y, sub.y);
            int x1 = std::min(layer.rect.x1(), sub.x1());
            int y1 = std::min(layer.rect.y1(), sub.y1());
            if (x0 >= x1 || y0 >= y1) {
                continue;
            }
            LayerRecord part = layer;
            part.rect = {x0 - sub.x, y0 - sub.y, x1 - x0, y1 - y0};
            part.image = visible_crop(
                layer.image, {x0 - layer.rect.x, y0 - layer.rect.y, x1 - x0, y1 - y0});
            clipped.layers.push_back(std::move(part));
        }
        worst = std::max(worst, max_diff(visible_crop(compose(d), sub), compose(clipped)));
        cases += 2;
    }

    report(1, "compositing algebra", worst <= 1e-6 && cases >= 1000,
           fmt("%d cases, max deviation %.3g (tol 1e-6)", cases, worst));
}

// ---- 2: codec exactness ----

void criterion_codec() {
    Rng rng(202);
    int cases = 0;
    bool exact = true;
    for (int i = 0; i < 1000 && exact; ++i) {
        int s = (i % 2 == 0) ? 4 : 8;
        int w = s * (1 + int(rng.below(5)));
        int h = s * (1 + int(rng.below(5)));
        RgbaImage x(w, h);
        RgbaImage y(w, h);
        for (size_t j = 0; j < x.px.size(); j += 4) {
            // dyadic alpha and channels keep all the arithmetic below exact
            float ax = float(rng.below(257)) / 256.0f;
            float ay = float(rng.below(257)) / 256.0f;
            x.px[j + 3] = ax;
            y.px[j + 3] = ay;
            for (int c = 0; c < 3; ++c) {
                x.px[j + c] = ax * (float(rng.below(257)) / 256.0f);
                y.px[j + c] = ay * (float(rng.below(257)) / 256.0f);
            }
        }
        RgbaImage rt = decode(encode(x, s), s);
        exact = exact && rt.px == x.px;

        LatentGrid ex = encode(x, s);
        LatentGrid ey = encode(y, s);
        RgbaImage mix(w, h);
        for (size_t j = 0; j < x.px.size(); ++j) {
            mix.px[j] = 0.5f * (x.px[j] + y.px[j]);
        }
        LatentGrid em = encode(mix, s);
        for (size_t j = 0; j < em.data.size() && exact; ++j) {
            exact = em.data[j] == 0.5f * (ex.data[j] + ey.data[j]);
        }

        RgbaImage half(w, h);
        for (size_t j = 0; j < x.px.size(); ++j) {
            half.px[j] = 0.5f * x.px[j];
        }
        LatentGrid eh = encode(half, s);
        for (size_t j = 0; j < eh.data.size() && exact; ++j) {
            exact = eh.data[j] == 0.5f * ex.data[j];
        }
        cases += 3;
    }
    report(2, "codec exactness", exact && cases >= 1000,
           fmt("%d cases, round trip and linearity bit-exact: %s", cases, exact ? "yes" : "NO"));
}

// ---- 3: mask-plan conformance ----

void criterion_mask_plan() {
    int cases = 0;
    std::string bad;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok && bad.empty()) {
            bad = what;
        }
        ++cases;
    };

    for (int k = 1; k <= 8; ++k) {
        MaskPlan t2l = mask_plan(TaskSpec::t2l("x"), k);
        bool all_noised = int(t2l.roles.size()) == k + 2 && t2l.condition_regions == 0;
        for (Role r : t2l.roles) {
            all_noised = all_noised && r == Role::noised;
        }
        expect(all_noised, fmt("t2l k=%d", k));

        MaskPlan i2l = mask_plan(TaskSpec::i2l(""), k);
        bool ok = i2l.roles[0] == Role::masked_clean && i2l.condition_regions == 0;
        for (int r = 1; r <= k + 1; ++r) {
            ok = ok && i2l.roles[size_t(r)] == Role::noised;
        }
        expect(ok, fmt("i2l k=%d", k));

        for (unsigned mask = 1; mask < (1u << k); ++mask) {
            std::vector<int> targets;
            for (int i = 1; i <= k; ++i) {
                if (mask & (1u << (i - 1))) {
                    targets.push_back(i);
                }
            }
            MaskPlan add = mask_plan(TaskSpec::l2l_add(targets, "p"), k);
            bool aok = add.roles[0] == Role::masked_clean &&
                       add.roles[1] == Role::masked_clean && add.condition_regions == 0;
            for (int i = 1; i <= k; ++i) {
                Role want = (mask & (1u << (i - 1))) ? Role::noised : Role::masked_clean;
                aok = aok && add.roles[size_t(i + 1)] == want;
            }
            expect(aok, fmt("l2l-add k=%d mask=%u", k, mask));

            std::map<int, LatentGrid> conds;
            for (int t : targets) {
                conds[t] = LatentGrid();
            }
            MaskPlan res = mask_plan(TaskSpec::l2l_restyle(targets, conds), k);
            bool rok = res.roles[0] == Role::masked_clean &&
                       res.roles[1] == Role::masked_clean &&
                       res.condition_regions == int(targets.size());
            for (int i = 1; i <= k; ++i) {
                Role want = (mask & (1u << (i - 1))) ? Role::noised : Role::masked_clean;
                rok = rok && res.roles[size_t(i + 1)] == want;
            }
            expect(rok, fmt("l2l-restyle k=%d mask=%u", k, mask));
        }

        // restyle conditions copy their target's token positions exactly
        GenParams gp;
        gp.min_size = 12;
        gp.max_size = 20;
        gp.min_layers = k;
        gp.max_layers = k;
        LayeredDesign d = gen_design(hash_mix(31, uint64_t(k)), gp);
        RegionLatents rl = build_region_latents(d, TaskVariant::l2l_restyle, 4);
        std::vector<int> all;
        std::map<int, LatentGrid> conds;
        for (int i = 1; i <= k; ++i) {
            all.push_back(i);
            conds[i] = rl.foregrounds[size_t(i - 1)].z;
        }
        PackedSequence seq = pack(rl, TaskSpec::l2l_restyle(all, conds));
        std::map<int, std::multiset<std::pair<int, int>>> target_pos;
        std::map<int, std::multiset<std::pair<int, int>>> cond_pos;
        for (const TokenMeta& m : seq.meta) {
            if (m.region_id >= 2 && m.region_id <= k + 1) {
                target_pos[m.layer_index].insert({m.row, m.col});
            } else if (m.region_id > k + 1) {
                cond_pos[m.layer_index].insert({m.row, m.col});
            }
        }
        expect(cond_pos.size() == size_t(k) && cond_pos == target_pos,
               fmt("position copy k=%d", k));
    }
    report(3, "mask-plan conformance", bad.empty(),
           bad.empty() ? fmt("%d cases across all variants, K = 1..8", cases)
                       : fmt("first mismatch: %s", bad.c_str()));
}

// ---- 4: gradient fidelity at fp64 ----

void criterion_gradients() {
    ModelConfig cfg;
    cfg.depth = 1;
    cfg.dim = 32;
    cfg.heads = 2;
    cfg.latent_dim = 64;
    cfg.vocab = 64;
    cfg.mlp_ratio = 2;
    auto model = Model<double>::init(cfg, 10);
    Rng init(17);
    visit_params(model.params, [&](const std::string&, Mat<double>& w) {
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w.data()[i] = 0.05 * init.normal();
        }
    });

    GenParams gp;
    gp.min_size = 12;
    gp.max_size = 16;
    gp.min_layers = 2;
    gp.max_layers = 2;
    LayeredDesign d = gen_design(12, gp);
    RegionLatents rl = build_region_latents(d, TaskVariant::i2l, 4);
    PackedSequence seq = pack(rl, TaskSpec::i2l("check"));

    Tape<double> tape;
    ParamHandles ph;
    T vel = model.forward(tape, seq, 0.37, &ph);
    Mat<double> target(seq.n_tokens(), seq.channels);
    Rng tr(40);
    for (Eigen::Index i = 0; i < target.size(); ++i) {
        target.data()[i] = tr.normal();
    }
    T loss = tape.mean_sq(tape.sub(vel, tape.input(target)));
    tape.backward(loss);

    auto eval = [&]() {
        Tape<double> t2;
        T v2 = model.forward(t2, seq, 0.37);
        return t2.value(t2.mean_sq(t2.sub(v2, t2.input(target))))(0, 0);
    };

    std::vector<std::string> names;
    visit_params(model.params,
                 [&](const std::string& n, const Mat<double>&) { names.push_back(n); });
    Rng rng(23);
    double worst = 0.0;
    for (int checked = 0; checked < 64; ++checked) {
        const std::string& name = names[rng.below(names.size())];
        Mat<double>* w = nullptr;
        visit_params(model.params, [&](const std::string& n, Mat<double>& m) {
            if (n == name) {
                w = &m;
            }
        });
        Eigen::Index i = Eigen::Index(rng.below(uint64_t(w->rows())));
        Eigen::Index j = Eigen::Index(rng.below(uint64_t(w->cols())));
        double an = tape.grad(ph.at(name))(i, j);
        const double eps = 1e-5;
        double orig = (*w)(i, j);
        (*w)(i, j) = orig + eps;
        double lp = eval();
        (*w)(i, j) = orig - eps;
        double lm = eval();
        (*w)(i, j) = orig;
        double fd = (lp - lm) / (2 * eps);
        double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        worst = std::max(worst, std::abs(fd - an) / denom);
    }
    report(4, "gradient fidelity", worst <= 1e-3,
           fmt("64 parameters, max relative error %.3g (tol 1e-3)", worst));
}

// ---- 5: masked-loss isolation ----

void criterion_loss_isolation() {
    TrainConfig tc;
    tc.patch = 4;
    GenParams gp;
    gp.min_size = 12;
    gp.max_size = 20;
    gp.min_layers = 2;
    gp.max_layers = 4;
    bool exact = true;
    int trials = 0;
    int perturbed_rows = 0;
    for (int i = 0; i < 100; ++i) {
        LayeredDesign d = gen_design(hash_mix(51, uint64_t(i)), gp);
        Rng rng(hash_mix(52, uint64_t(i)));
        TrainExample ex = make_training_example(d, tc, rng);
        Mat<float> pred(ex.seq.n_tokens(), ex.seq.channels);
        for (Eigen::Index j = 0; j < pred.size(); ++j) {
            pred.data()[j] = float(rng.normal());
        }
        double base = masked_flow_loss_value(pred, ex.target, ex.seq.meta);
        Mat<float> pert = pred;
        for (int r = 0; r < int(ex.seq.meta.size()); ++r) {
            if (ex.seq.meta[size_t(r)].role != Role::noised) {
                for (int c = 0; c < pert.cols(); ++c) {
                    pert(r, c) += float(1.0 + rng.normal());
                }
                ++perturbed_rows;
            }
        }
        double after = masked_flow_loss_value(pert, ex.target, ex.seq.meta);
        exact = exact && after == base;
        ++trials;
    }
    report(5, "masked-loss isolation", exact && perturbed_rows > 0,
           fmt("%d trials, %d pinned rows perturbed, loss change exactly 0: %s", trials,
               perturbed_rows, exact ? "yes" : "NO"));
}

// ---- 6: sampler and student pinning ----

void criterion_pinning() {
    ModelConfig mc;
    mc.depth = 1;
    mc.dim = 32;
    mc.heads = 2;
    mc.latent_dim = 64;
    mc.vocab = 64;
    mc.mlp_ratio = 2;
    GenParams gp;
    gp.min_size = 12;
    gp.max_size = 16;
    gp.min_layers = 2;
    gp.max_layers = 3;
    bool exact = true;
    int trials = 0;
    int pinned_rows = 0;
    for (int trial = 0; trial < 100 && exact; ++trial) {
        auto model = Model<float>::init(mc, hash_mix(61, uint64_t(trial)));
        Rng init(hash_mix(62, uint64_t(trial)));
        visit_params(model.params, [&](const std::string&, Mat<float>& w) {
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                w.data()[i] = float(0.05 * init.normal());
            }
        });
        LayeredDesign d = gen_design(hash_mix(63, uint64_t(trial)), gp);
        TaskVariant variant = TaskVariant(trial % 4);
        RegionLatents rl = build_region_latents(d, variant, 4);
        TaskSpec task;
        switch (variant) {
            case TaskVariant::t2l: task = TaskSpec::t2l("a"); break;
            case TaskVariant::i2l: task = TaskSpec::i2l(""); break;
            case TaskVariant::l2l_add: task = TaskSpec::l2l_add({1}, "b"); break;
            default:
                task = TaskSpec::l2l_restyle({1}, {{1, rl.foregrounds[0].z}});
                break;
        }
        PackedSequence clean = pack(rl, task);
        SampleConfig sc;
        sc.steps = 2;
        sc.seed = hash_mix(64, uint64_t(trial));
        PackedSequence out = euler_sample(model_velocity_fn(model, 1.0), clean, sc);
        PackedSequence stu = student_generate(model, clean, 3, hash_mix(65, uint64_t(trial)));
        for (size_t r = 0; r < clean.meta.size(); ++r) {
            if (clean.meta[r].role == Role::noised) {
                continue;
            }
            ++pinned_rows;
            for (int c = 0; c < clean.channels; ++c) {
                size_t at = r * size_t(clean.channels) + size_t(c);
                exact = exact && out.tokens[at] == clean.tokens[at] &&
                        stu.tokens[at] == clean.tokens[at];
            }
        }
        ++trials;
    }
    report(6, "masked-region pinning", exact && trials >= 100,
           fmt("%d trials over all tasks, %d pinned rows bit-identical: %s", trials,
               pinned_rows, exact ? "yes" : "NO"));
}

// ---- 8: oracle one-step recovery ----

void criterion_one_step() {
    const double x0 = 1.375;
    Field1d field = [x0](double z, double t) { return (x0 - z) / t; };
    std::vector<double> out = rollout_1d(field, 1, 1000, 99);
    double worst = 0.0;
    for (double v : out) {
        worst = std::max(worst, std::abs(v - x0));
    }
    report(8, "oracle one-step recovery", worst <= 1e-13,
           fmt("1000 rollouts, max |z - x0| = %.3g (tol 1e-13)", worst));
}

// ---- 10: efficiency model ----

void criterion_efficiency() {
    GenParams gp;  // the generator's stock area distribution
    gp.min_layers = 20;
    gp.max_layers = 20;
    std::vector<LayeredDesign> designs;
    for (int i = 0; i < 16; ++i) {
        designs.push_back(gen_design(hash_mix(hash_mix(0, 20), uint64_t(i)), gp));
    }
    CostReport r = cost_model(designs, ModelConfig{}, 8);
    report(10, "regional efficiency",
           r.quad_flop_ratio >= 10.0 && r.token_ratio >= 5.0,
           fmt("20 layers, 16 designs: quadratic-FLOP ratio %.2fx (need >= 10), token ratio "
               "%.2fx (need >= 5)",
               r.quad_flop_ratio, r.token_ratio));
}

// ---- 11: CLI determinism ----

int run_cli_args(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("mrt");
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return cli_main(int(argv.size()), argv.data());
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) {
            continue;
        }
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        out[fs::relative(e.path(), root).generic_string()] = buf.str();
    }
    return out;
}

// Trees must match byte for byte; the resolved config may differ only in its
// recorded --out path.
bool same_run(const fs::path& a, const fs::path& b) {
    auto ta = read_tree(a);
    auto tb = read_tree(b);
    if (ta.size() != tb.size()) {
        return false;
    }
    for (auto& [rel, bytes] : ta) {
        auto it = tb.find(rel);
        if (it == tb.end()) {
            return false;
        }
        if (fs::path(rel).filename() == "config.resolved.json") {
            json ja = json::parse(bytes);
            json jb = json::parse(it->second);
            ja["run"]["out"] = "";
            jb["run"]["out"] = "";
            if (ja != jb) {
                return false;
            }
        } else if (bytes != it->second) {
            return false;
        }
    }
    return true;
}

void criterion_cli_determinism() {
    fs::path root = fs::temp_directory_path() / "mrt_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    fs::path cfg_path = root / "run.json";
    json cfg{{"model",
              {{"depth", 1}, {"dim", 32}, {"heads", 2}, {"latent_dim", 64}, {"vocab", 128},
               {"max_caption_tokens", 8}}},
             {"train", {{"steps", 2}, {"batch_size", 1}, {"seed", 3}, {"patch", 4}}},
             {"sample", {{"steps", 2}}},
             {"data",
              {{"min_size", 16}, {"max_size", 24}, {"min_layers", 1}, {"max_layers", 2},
               {"count", 2}, {"seed", 11}}}};
    std::ofstream(cfg_path) << cfg.dump(2);
    std::string c = cfg_path.string();

    auto pair_run = [&](const std::string& name, std::vector<std::string> args) {
        fs::path a = root / (name + "_a");
        fs::path b = root / (name + "_b");
        std::vector<std::string> aa = args;
        aa.insert(aa.end(), {"--out", a.string()});
        std::vector<std::string> bb = args;
        bb.insert(bb.end(), {"--out", b.string()});
        if (run_cli_args(aa) != 0 || run_cli_args(bb) != 0) {
            return false;
        }
        return same_run(a, b);
    };

    std::string ds = (root / "gen_a").string();
    std::string ckpt = (root / "train_a" / "model.ckpt").string();
    std::string layout = ds + "/design_0000/layout.json";
    std::string image = ds + "/design_0000/composed.png";
    int commands = 0;
    bool ok = true;
    auto step = [&](const std::string& name, const std::vector<std::string>& args) {
        if (ok) {
            ok = pair_run(name, args);
            ++commands;
            if (!ok) {
                std::fprintf(stderr, "determinism: %s differs between runs\n", name.c_str());
            }
        }
    };
    step("gen", {"gen-data", "--config", c});
    step("train", {"train", "--config", c, "--data", ds});
    step("t2l", {"sample-t2l", "--config", c, "--ckpt", ckpt, "--layout", layout});
    step("i2l", {"decompose-i2l", "--config", c, "--ckpt", ckpt, "--image", image, "--layout",
                 layout});
    step("l2l", {"edit-l2l", "--config", c, "--ckpt", ckpt, "--design", ds + "/design_0000",
                 "--task", "l2l-restyle", "--targets", "1"});
    step("distill", {"distill", "--config", c, "--ckpt", ckpt, "--data", ds, "--steps", "1"});
    step("eval", {"eval", "--config", c, "--ckpt", ckpt, "--data", ds});
    step("bench", {"bench-efficiency", "--config", c, "--layers", "2..4"});

    fs::remove_all(root);
    report(11, "CLI determinism", ok && commands == 8,
           fmt("%d commands run twice, artifact trees byte-identical: %s", commands,
               ok ? "yes" : "NO"));
}

}  // namespace

int main() {
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    criterion_compositing();
    criterion_codec();
    criterion_mask_plan();
    criterion_gradients();
    criterion_loss_isolation();
    criterion_pinning();
    criterion_one_step();
    criterion_efficiency();
    criterion_cli_determinism();
    double secs = std::chrono::duration<double>(clock::now() - t0).count();
    std::printf("%d of 9 fast criteria failed (%.1fs)\n", g_failures, secs);
    return g_failures;
}
