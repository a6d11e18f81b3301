#include "mrt/eval.hpp"

#include <cmath>

#include "json.hpp"
#include "mrt/codec.hpp"

namespace mrt {

namespace {

constexpr int kWindow = 8;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_dims(const RgbaImage& a, const RgbaImage& b) {
    if (a.width != b.width || a.height != b.height) {
        throw InputError("metrics: image dimensions differ");
    }
    if (a.width < 1 || a.height < 1) {
        throw InputError("metrics: empty image");
    }
}

double mse_to_db(double mse) {
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(1.0 / mse);
}

// SSIM over one channel; `masked` selects visible-reference statistics.
double ssim_channel(const RgbaImage& a, const RgbaImage& b, int ch, bool masked,
                    double& total, int& windows) {
    for (int wy = 0; wy + kWindow <= a.height; ++wy) {
        for (int wx = 0; wx + kWindow <= a.width; ++wx) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            int m = 0;
            for (int y = wy; y < wy + kWindow; ++y) {
                for (int x = wx; x < wx + kWindow; ++x) {
                    if (masked && b.at(x, y)[3] <= 0.0f) {
                        continue;
                    }
                    double va = a.at(x, y)[ch];
                    double vb = b.at(x, y)[ch];
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                    ++m;
                }
            }
            if (m == 0) {
                continue;
            }
            double ma = sa / m, mb = sb / m;
            // explicit fma + two-term sums keep the numerator and denominator
            // structurally identical, so identical windows score exactly 1
            double va = std::fma(-ma, ma, saa / m);
            double vb = std::fma(-mb, mb, sbb / m);
            double cov = std::fma(-ma, mb, sab / m);
            total += (ma * mb + ma * mb + kC1) * (cov + cov + kC2) /
                     ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
            ++windows;
        }
    }
    return total;
}

double ssim_impl(const RgbaImage& a, const RgbaImage& b, bool masked) {
    check_dims(a, b);
    if (a.width < kWindow || a.height < kWindow) {
        throw InputError("ssim: image smaller than the 8x8 window");
    }
    double total = 0.0;
    int windows = 0;
    const int channels = masked ? 3 : 4;
    for (int ch = 0; ch < channels; ++ch) {
        ssim_channel(a, b, ch, masked, total, windows);
    }
    if (windows == 0) {
        throw InputError("ssim: mask selects no window");
    }
    return total / windows;
}

}  // namespace

double psnr(const RgbaImage& a, const RgbaImage& b) {
    check_dims(a, b);
    double acc = 0.0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        double d = double(a.px[i]) - double(b.px[i]);
        acc += d * d;
    }
    return mse_to_db(acc / double(a.px.size()));
}

double psnr_masked(const RgbaImage& a, const RgbaImage& ref) {
    check_dims(a, ref);
    double acc = 0.0;
    int64_t n = 0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            if (ref.at(x, y)[3] <= 0.0f) {
                continue;
            }
            for (int c = 0; c < 3; ++c) {
                double d = double(a.at(x, y)[c]) - double(ref.at(x, y)[c]);
                acc += d * d;
            }
            n += 3;
        }
    }
    if (n == 0) {
        throw InputError("psnr: reference is fully transparent");
    }
    return mse_to_db(acc / double(n));
}

double ssim(const RgbaImage& a, const RgbaImage& b) { return ssim_impl(a, b, false); }

double ssim_masked(const RgbaImage& a, const RgbaImage& ref) {
    return ssim_impl(a, ref, true);
}

namespace {

struct DesignScores {
    double psnr_merged, ssim_merged, psnr_layer, ssim_layer;
};

DesignScores score_pair(const LayeredDesign& pred, const LayeredDesign& gt) {
    if (pred.layers.size() != gt.layers.size()) {
        throw InputError("evaluate: predicted and ground-truth layer counts differ");
    }
    RgbaImage pm = compose(pred);
    RgbaImage gm = compose(gt);
    DesignScores s{};
    s.psnr_merged = psnr(pm, gm);
    s.ssim_merged = ssim(pm, gm);
    double pl = 0.0, sl = 0.0;
    int n = 0;
    for (size_t i = 0; i < gt.layers.size(); ++i) {
        RgbaImage gi = place(gt.layers[i], gt.canvas_w, gt.canvas_h);
        bool visible = false;
        for (size_t p = 3; p < gi.px.size(); p += 4) {
            if (gi.px[p] > 0.0f) {
                visible = true;
                break;
            }
        }
        if (!visible) {
            continue;
        }
        RgbaImage pi = place(pred.layers[i], gt.canvas_w, gt.canvas_h);
        pl += psnr_masked(pi, gi);
        sl += ssim_masked(pi, gi);
        ++n;
    }
    if (n == 0) {
        throw InputError("evaluate: design has no visible layer");
    }
    s.psnr_layer = pl / n;
    s.ssim_layer = sl / n;
    return s;
}

int bin_index(size_t layer_count) {
    for (size_t i = 0; i < MetricReport::kBins.size(); ++i) {
        if (int(layer_count) >= MetricReport::kBins[i].first &&
            int(layer_count) < MetricReport::kBins[i].second) {
            return int(i);
        }
    }
    return -1;
}

void accumulate(BinStats& b, const DesignScores& s) {
    ++b.count;
    b.psnr_merged += s.psnr_merged;
    b.ssim_merged += s.ssim_merged;
    b.psnr_layer += s.psnr_layer;
    b.ssim_layer += s.ssim_layer;
}

void finish(BinStats& b) {
    if (b.count == 0) {
        return;
    }
    b.psnr_merged /= b.count;
    b.ssim_merged /= b.count;
    b.psnr_layer /= b.count;
    b.ssim_layer /= b.count;
}

}  // namespace

MetricReport evaluate_designs(const std::vector<LayeredDesign>& pred,
                              const std::vector<LayeredDesign>& gt) {
    if (gt.empty() || pred.size() != gt.size()) {
        throw InputError("evaluate: dataset sizes differ or are empty");
    }
    std::vector<DesignScores> scores(gt.size());
    parallel_for(gt.size(), [&](size_t i) { scores[i] = score_pair(pred[i], gt[i]); });

    MetricReport r;
    for (size_t i = 0; i < gt.size(); ++i) {
        accumulate(r.overall, scores[i]);
        int b = bin_index(gt[i].layers.size());
        if (b >= 0) {
            accumulate(r.bins[size_t(b)], scores[i]);
        }
    }
    for (BinStats& b : r.bins) {
        finish(b);
    }
    finish(r.overall);
    return r;
}

MetricReport evaluate_i2l(const Model<float>& model,
                          const std::vector<LayeredDesign>& dataset,
                          const SampleConfig& cfg) {
    if (dataset.empty()) {
        throw InputError("evaluate: empty dataset");
    }
    cfg.check();
    std::vector<LayeredDesign> pred(dataset.size());
    parallel_for(dataset.size(), [&](size_t i) {
        SampleConfig sc = cfg;
        sc.seed = hash_mix(cfg.seed, uint64_t(i));
        SampleInputs inputs;
        inputs.design = dataset[i];
        pred[i] = run_task(model, TaskSpec::i2l(dataset[i].global_caption), inputs, sc);
    });
    return evaluate_designs(pred, dataset);
}

namespace {

using json = nlohmann::json;

std::string bin_label(size_t i) {
    const auto& b = MetricReport::kBins[i];
    return "[" + std::to_string(b.first) + "," + std::to_string(b.second) + ")";
}

json stats_json(const BinStats& b) {
    return json{{"count", b.count},
                {"psnr_merged", b.psnr_merged},
                {"ssim_merged", b.ssim_merged},
                {"psnr_layer", b.psnr_layer},
                {"ssim_layer", b.ssim_layer}};
}

std::string stats_csv(const std::string& key, const BinStats& b) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,%.9g,%.9g,%.9g\n", key.c_str(), b.count,
                  b.psnr_merged, b.ssim_merged, b.psnr_layer, b.ssim_layer);
    return buf;
}

}  // namespace

std::string report_json(const MetricReport& report) {
    json bins = json::object();
    for (size_t i = 0; i < report.bins.size(); ++i) {
        bins[bin_label(i)] = stats_json(report.bins[i]);
    }
    json out{{"bins", bins}, {"overall", stats_json(report.overall)}};
    return out.dump(2) + "\n";
}

std::string report_csv(const MetricReport& report) {
    std::string out = "bin,count,psnr_merged,ssim_merged,psnr_layer,ssim_layer\n";
    for (size_t i = 0; i < report.bins.size(); ++i) {
        out += stats_csv(bin_label(i), report.bins[i]);
    }
    out += stats_csv("overall", report.overall);
    return out;
}

CostReport cost_model(const std::vector<LayeredDesign>& designs, const ModelConfig& mc,
                      int s) {
    if (s < 1) {
        throw ConfigError("cost model: patch size must be >= 1");
    }
    if (designs.empty()) {
        throw InputError("cost model: empty design list");
    }
    const double d = mc.dim;
    const double blocks = mc.depth;
    const double quad_c = 4.0 * d;
    const double lin_c = (8.0 + 4.0 * mc.mlp_ratio) * d * d;
    auto flops = [&](double n) { return blocks * (quad_c * n * n + lin_c * n); };
    auto memory = [&](double n) {
        return 4.0 * (n * d * blocks + double(mc.heads) * n * n);
    };

    CostReport r;
    for (const LayeredDesign& dsg : designs) {
        auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
        double canvas_tokens =
            double(ceil_div(dsg.canvas_w, s)) * double(ceil_div(dsg.canvas_h, s));
        double regional = 2.0 * canvas_tokens;  // composed + background
        int k = 0;
        for (const LayerRecord& l : dsg.layers) {
            if (l.kind != LayerKind::foreground) {
                continue;
            }
            Rect sr = snap_rect(l.rect, s);
            regional += double(sr.w / s) * double(sr.h / s);
            ++k;
        }
        double fullres = double(k + 2) * canvas_tokens;
        r.tokens_regional += regional;
        r.tokens_fullres += fullres;
        r.token_ratio += fullres / regional;
        r.flops_regional += flops(regional);
        r.flops_fullres += flops(fullres);
        r.flop_ratio += flops(fullres) / flops(regional);
        r.quad_flop_ratio += (fullres * fullres) / (regional * regional);
        r.memory_regional += memory(regional);
        r.memory_fullres += memory(fullres);
        r.memory_ratio += memory(fullres) / memory(regional);
    }
    const double n = double(designs.size());
    r.tokens_regional /= n;
    r.tokens_fullres /= n;
    r.token_ratio /= n;
    r.flops_regional /= n;
    r.flops_fullres /= n;
    r.flop_ratio /= n;
    r.quad_flop_ratio /= n;
    r.memory_regional /= n;
    r.memory_fullres /= n;
    r.memory_ratio /= n;
    return r;
}

std::string cost_json(const CostReport& report) {
    json out{{"tokens_regional", report.tokens_regional},
             {"tokens_fullres", report.tokens_fullres},
             {"token_ratio", report.token_ratio},
             {"flops_regional", report.flops_regional},
             {"flops_fullres", report.flops_fullres},
             {"flop_ratio", report.flop_ratio},
             {"quad_flop_ratio", report.quad_flop_ratio},
             {"memory_regional", report.memory_regional},
             {"memory_fullres", report.memory_fullres},
             {"memory_ratio", report.memory_ratio}};
    return out.dump(2) + "\n";
}

}  // namespace mrt
