#include "mrt/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mrt/bundle.hpp"
#include "mrt/codec.hpp"
#include "mrt/eval.hpp"

namespace mrt {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config document ----

const char* caption_mode_name(CaptionMode m) {
    switch (m) {
        case CaptionMode::short_form: return "short";
        case CaptionMode::long_form: return "long";
        default: return "mixed";
    }
}

json rc_to_json(const RunConfig& c) {
    return json{
        {"model",
         {{"depth", c.model.depth},
          {"dim", c.model.dim},
          {"heads", c.model.heads},
          {"latent_dim", c.model.latent_dim},
          {"vocab", c.model.vocab},
          {"mlp_ratio", c.model.mlp_ratio},
          {"max_regions", c.model.max_regions},
          {"max_caption_tokens", c.model.max_caption_tokens},
          {"rope_base", c.model.rope_base}}},
        {"train",
         {{"lr", c.train.lr},
          {"batch_size", c.train.batch_size},
          {"steps", c.train.steps},
          {"mix_t2l", c.train.mix_t2l},
          {"mix_i2l", c.train.mix_i2l},
          {"mix_l2l", c.train.mix_l2l},
          {"group_prob", c.train.group_prob},
          {"null_caption_prob", c.train.null_caption_prob},
          {"seed", c.train.seed},
          {"patch", c.train.patch},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"adam_eps", c.train.adam_eps},
          {"weight_decay", c.train.weight_decay}}},
        {"sample",
         {{"steps", c.sample.steps}, {"guidance", c.sample.guidance}, {"seed", c.sample.seed}}},
        {"distill",
         {{"student_steps", c.distill.student_steps},
          {"critic_ratio", c.distill.critic_ratio},
          {"student_lr", c.distill.student_lr},
          {"critic_lr", c.distill.critic_lr},
          {"iterations", c.distill.iterations},
          {"seed", c.distill.seed}}},
        {"data",
         {{"min_size", c.data.min_size},
          {"max_size", c.data.max_size},
          {"min_layers", c.data.min_layers},
          {"max_layers", c.data.max_layers},
          {"overflow_prob", c.data.overflow_prob},
          {"caption_mode", caption_mode_name(c.data.caption_mode)},
          {"count", c.data_count},
          {"seed", c.data_seed}}},
        {"run",
         {{"command", c.run.command},
          {"out", c.run.out},
          {"data", c.run.data},
          {"ckpt", c.run.ckpt},
          {"image", c.run.image},
          {"layout", c.run.layout},
          {"design", c.run.design},
          {"pred", c.run.pred},
          {"gt", c.run.gt},
          {"task", c.run.task},
          {"caption", c.run.caption},
          {"targets", c.run.targets},
          {"rect", c.run.rect},
          {"layers", c.run.layers},
          {"area_dist", c.run.area_dist}}},
    };
}

// Setters return false on a type mismatch so the caller can name the key.
using Setter = std::function<bool(const json&)>;
using KeyMap = std::map<std::string, Setter>;

Setter set_int(int& f) {
    return [&f](const json& v) {
        if (!v.is_number_integer()) {
            return false;
        }
        f = v.get<int>();
        return true;
    };
}

Setter set_double(double& f) {
    return [&f](const json& v) {
        if (!v.is_number()) {
            return false;
        }
        f = v.get<double>();
        return true;
    };
}

Setter set_u64(uint64_t& f) {
    return [&f](const json& v) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<int64_t>() < 0)) {
            return false;
        }
        f = v.get<uint64_t>();
        return true;
    };
}

Setter set_string(std::string& f) {
    return [&f](const json& v) {
        if (!v.is_string()) {
            return false;
        }
        f = v.get<std::string>();
        return true;
    };
}

Setter set_caption_mode(CaptionMode& f) {
    return [&f](const json& v) {
        if (!v.is_string()) {
            return false;
        }
        std::string s = v.get<std::string>();
        if (s == "short") {
            f = CaptionMode::short_form;
        } else if (s == "long") {
            f = CaptionMode::long_form;
        } else if (s == "mixed") {
            f = CaptionMode::mixed;
        } else {
            return false;
        }
        return true;
    };
}

void apply_section(const json& j, const std::string& name, const KeyMap& keys) {
    if (!j.is_object()) {
        throw ConfigError("config: section '" + name + "' must be an object");
    }
    for (const auto& [k, v] : j.items()) {
        auto it = keys.find(k);
        if (it == keys.end()) {
            throw ConfigError("config: unknown key '" + name + "." + k + "'");
        }
        if (!it->second(v)) {
            throw ConfigError("config: bad value for '" + name + "." + k + "'");
        }
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ConfigError("config: document must be a JSON object");
    }
    RunConfig c;
    const KeyMap model_keys{
        {"depth", set_int(c.model.depth)},
        {"dim", set_int(c.model.dim)},
        {"heads", set_int(c.model.heads)},
        {"latent_dim", set_int(c.model.latent_dim)},
        {"vocab", set_int(c.model.vocab)},
        {"mlp_ratio", set_int(c.model.mlp_ratio)},
        {"max_regions", set_int(c.model.max_regions)},
        {"max_caption_tokens", set_int(c.model.max_caption_tokens)},
        {"rope_base", set_double(c.model.rope_base)},
    };
    const KeyMap train_keys{
        {"lr", set_double(c.train.lr)},
        {"batch_size", set_int(c.train.batch_size)},
        {"steps", set_int(c.train.steps)},
        {"mix_t2l", set_double(c.train.mix_t2l)},
        {"mix_i2l", set_double(c.train.mix_i2l)},
        {"mix_l2l", set_double(c.train.mix_l2l)},
        {"group_prob", set_double(c.train.group_prob)},
        {"null_caption_prob", set_double(c.train.null_caption_prob)},
        {"seed", set_u64(c.train.seed)},
        {"patch", set_int(c.train.patch)},
        {"beta1", set_double(c.train.beta1)},
        {"beta2", set_double(c.train.beta2)},
        {"adam_eps", set_double(c.train.adam_eps)},
        {"weight_decay", set_double(c.train.weight_decay)},
    };
    const KeyMap sample_keys{
        {"steps", set_int(c.sample.steps)},
        {"guidance", set_double(c.sample.guidance)},
        {"seed", set_u64(c.sample.seed)},
    };
    const KeyMap distill_keys{
        {"student_steps", set_int(c.distill.student_steps)},
        {"critic_ratio", set_int(c.distill.critic_ratio)},
        {"student_lr", set_double(c.distill.student_lr)},
        {"critic_lr", set_double(c.distill.critic_lr)},
        {"iterations", set_int(c.distill.iterations)},
        {"seed", set_u64(c.distill.seed)},
    };
    const KeyMap data_keys{
        {"min_size", set_int(c.data.min_size)},
        {"max_size", set_int(c.data.max_size)},
        {"min_layers", set_int(c.data.min_layers)},
        {"max_layers", set_int(c.data.max_layers)},
        {"overflow_prob", set_double(c.data.overflow_prob)},
        {"caption_mode", set_caption_mode(c.data.caption_mode)},
        {"count", set_int(c.data_count)},
        {"seed", set_u64(c.data_seed)},
    };
    const KeyMap run_keys{
        {"command", set_string(c.run.command)},
        {"out", set_string(c.run.out)},
        {"data", set_string(c.run.data)},
        {"ckpt", set_string(c.run.ckpt)},
        {"image", set_string(c.run.image)},
        {"layout", set_string(c.run.layout)},
        {"design", set_string(c.run.design)},
        {"pred", set_string(c.run.pred)},
        {"gt", set_string(c.run.gt)},
        {"task", set_string(c.run.task)},
        {"caption", set_string(c.run.caption)},
        {"targets", set_string(c.run.targets)},
        {"rect", set_string(c.run.rect)},
        {"layers", set_string(c.run.layers)},
        {"area_dist", set_string(c.run.area_dist)},
    };
    for (const auto& [k, v] : j.items()) {
        if (k == "model") {
            apply_section(v, k, model_keys);
        } else if (k == "train") {
            apply_section(v, k, train_keys);
        } else if (k == "sample") {
            apply_section(v, k, sample_keys);
        } else if (k == "distill") {
            apply_section(v, k, distill_keys);
        } else if (k == "data") {
            apply_section(v, k, data_keys);
        } else if (k == "run") {
            apply_section(v, k, run_keys);
        } else {
            throw ConfigError("config: unknown key '" + k + "'");
        }
    }
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open config: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string run_config_json(const RunConfig& cfg) {
    return rc_to_json(cfg).dump(2);
}

namespace {

// ---- shared command plumbing ----

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw InputError("cannot write: " + path.string());
    }
}

void write_resolved(const fs::path& dir, const RunConfig& cfg) {
    fs::create_directories(dir);
    write_text(dir / "config.resolved.json", run_config_json(cfg) + "\n");
}

fs::path need_out(const RunConfig& cfg) {
    if (cfg.run.out.empty()) {
        throw ConfigError(cfg.run.command + ": --out is required");
    }
    return fs::path(cfg.run.out);
}

std::string design_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "design_%04d", i);
    return buf;
}

std::vector<LayeredDesign> load_dataset(const std::string& dir_arg, const std::string& cmd) {
    if (dir_arg.empty()) {
        throw ConfigError(cmd + ": --data is required");
    }
    fs::path dir(dir_arg);
    if (!fs::is_directory(dir)) {
        throw InputError(cmd + ": not a directory: " + dir.string());
    }
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory() && e.path().filename().string().rfind("design_", 0) == 0) {
            found.push_back(e.path());
        }
    }
    std::sort(found.begin(), found.end());
    if (found.empty()) {
        throw InputError(cmd + ": no design_* bundles under " + dir.string());
    }
    std::vector<LayeredDesign> out;
    out.reserve(found.size());
    for (const auto& d : found) {
        out.push_back(load_bundle(d));
    }
    return out;
}

struct LoadedModel {
    ModelConfig mc;
    TrainConfig tc;
    bool distilled = false;
    Model<float> model;
};

// Architecture comes from the checkpoint itself, never from the CLI config:
// a checkpoint knows what it was trained as.
LoadedModel load_model(const std::string& path, const std::string& cmd) {
    if (path.empty()) {
        throw ConfigError(cmd + ": --ckpt is required");
    }
    Checkpoint ck = load_checkpoint(path);
    LoadedModel lm{{}, {}, false, model_from_checkpoint(ck)};
    parse_checkpoint_config(ck.config_json, &lm.mc, &lm.tc, &lm.distilled);
    return lm;
}

LayeredDesign skeleton_design(const Layout& lay) {
    validate_layout(lay);
    LayeredDesign d;
    d.canvas_w = lay.canvas_w;
    d.canvas_h = lay.canvas_h;
    d.bg_rect = lay.bg_rect;
    d.layers.reserve(lay.entries.size());
    for (const auto& e : lay.entries) {
        LayerRecord l;
        l.image = RgbaImage(e.rect.w, e.rect.h);
        l.rect = e.rect;
        l.z = e.z;
        l.kind = e.kind;
        l.caption = e.caption;
        d.layers.push_back(std::move(l));
    }
    return d;
}

std::vector<int> parse_targets(const std::string& s, const std::string& cmd) {
    std::vector<int> out;
    if (s.empty()) {
        return out;
    }
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        size_t pos = 0;
        int v = 0;
        try {
            v = std::stoi(tok, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != tok.size() || tok.empty()) {
            throw ConfigError(cmd + ": bad --targets '" + s + "'");
        }
        out.push_back(v);
    }
    return out;
}

Rect parse_rect(const std::string& s, const std::string& cmd) {
    int v[4];
    char trailing;
    if (std::sscanf(s.c_str(), "%d,%d,%d,%d%c", &v[0], &v[1], &v[2], &v[3], &trailing) != 4) {
        throw ConfigError(cmd + ": bad --rect '" + s + "' (want x,y,w,h)");
    }
    Rect r{v[0], v[1], v[2], v[3]};
    if (!r.valid()) {
        throw ConfigError(cmd + ": --rect needs positive width and height");
    }
    return r;
}

void check_target_range(const std::vector<int>& targets, const LayeredDesign& d,
                        const std::string& cmd) {
    int k = d.foreground_count();
    for (int t : targets) {
        if (t < 1 || t > k) {
            throw InputError(cmd + ": target " + std::to_string(t) + " outside 1.." +
                             std::to_string(k));
        }
    }
}

std::string with_newline(std::string s) {
    if (s.empty() || s.back() != '\n') {
        s += '\n';
    }
    return s;
}

// composed.png is always the visible composite (the bg_rect crop), the same
// frame decompose-i2l consumes.
void save_sample_outputs(const fs::path& out, const LayeredDesign& result, double oor) {
    save_bundle(out / "design", result);
    save_raster(out / "composed.png", visible_crop(compose(result), result.bg_rect));
    write_text(out / "result.json", json{{"out_of_range", oor}}.dump(2) + "\n");
}

// ---- subcommands ----

int cmd_gen_data(RunConfig& cfg) {
    cfg.data.check();
    if (cfg.data_count < 1) {
        throw ConfigError("gen-data: data.count must be >= 1");
    }
    fs::path out = need_out(cfg);
    write_resolved(out, cfg);
    for (int i = 0; i < cfg.data_count; ++i) {
        LayeredDesign d = gen_design(hash_mix(cfg.data_seed, uint64_t(i)), cfg.data);
        fs::path dir = out / design_name(i);
        save_bundle(dir, d);
        save_layout(dir / "layout.json", derive_layout(d));
        save_raster(dir / "composed.png", visible_crop(compose(d), d.bg_rect));
    }
    return 0;
}

int cmd_train(RunConfig& cfg) {
    cfg.model.check();
    cfg.train.check();
    int implied = 4 * cfg.train.patch * cfg.train.patch;
    if (implied != cfg.model.latent_dim) {
        throw ConfigError("train: train.patch " + std::to_string(cfg.train.patch) +
                          " implies model.latent_dim " + std::to_string(implied) +
                          " but config says " + std::to_string(cfg.model.latent_dim));
    }
    auto dataset = load_dataset(cfg.run.data, "train");
    fs::path out = need_out(cfg);
    write_resolved(out, cfg);
    TrainResult r = train(cfg.model, cfg.train, dataset);
    save_checkpoint(out / "model.ckpt", r.ckpt);
    write_loss_csv(out / "loss.csv", r.log);
    return 0;
}

int cmd_sample_t2l(RunConfig& cfg) {
    cfg.sample.check();
    if (cfg.run.layout.empty()) {
        throw ConfigError("sample-t2l: --layout is required");
    }
    Layout lay = load_layout(cfg.run.layout);
    LayeredDesign skel = skeleton_design(lay);
    LoadedModel lm = load_model(cfg.run.ckpt, "sample-t2l");
    std::string cap = cfg.run.caption;
    if (cap.empty()) {
        CaptionMode m = cfg.data.caption_mode == CaptionMode::long_form ? CaptionMode::long_form
                                                                        : CaptionMode::short_form;
        cap = global_caption(skel, m);
    }
    fs::path out = need_out(cfg);
    write_resolved(out, cfg);
    double oor = 0.0;
    LayeredDesign res =
        run_task(lm.model, TaskSpec::t2l(cap), SampleInputs{std::move(skel)}, cfg.sample, &oor);
    save_sample_outputs(out, res, oor);
    return 0;
}

int cmd_decompose_i2l(RunConfig& cfg) {
    cfg.sample.check();
    if (cfg.run.image.empty() || cfg.run.layout.empty()) {
        throw ConfigError("decompose-i2l: --image and --layout are required");
    }
    RgbaImage raster = load_raster(cfg.run.image);
    Layout lay = load_layout(cfg.run.layout);
    if (raster.width != lay.bg_rect.w || raster.height != lay.bg_rect.h) {
        throw InputError("decompose-i2l: image is " + std::to_string(raster.width) + "x" +
                         std::to_string(raster.height) + " but the layout's visible region is " +
                         std::to_string(lay.bg_rect.w) + "x" + std::to_string(lay.bg_rect.h));
    }
    LayeredDesign skel = skeleton_design(lay);
    LoadedModel lm = load_model(cfg.run.ckpt, "decompose-i2l");
    fs::path out = need_out(cfg);
    write_resolved(out, cfg);
    SampleInputs in{std::move(skel)};
    in.i2l_raster = &raster;
    double oor = 0.0;
    LayeredDesign res = run_task(lm.model, TaskSpec::i2l(cfg.run.caption), in, cfg.sample, &oor);
    save_sample_outputs(out, res, oor);
    return 0;
}

int cmd_edit_l2l(RunConfig& cfg) {
    cfg.sample.check();
    if (cfg.run.design.empty()) {
        throw ConfigError("edit-l2l: --design is required");
    }
    if (cfg.run.task != "l2l-add" && cfg.run.task != "l2l-restyle") {
        throw ConfigError("edit-l2l: --task must be l2l-add or l2l-restyle (t2l and i2l have "
                          "dedicated subcommands)");
    }
    LayeredDesign d = load_bundle(cfg.run.design);
    LoadedModel lm = load_model(cfg.run.ckpt, "edit-l2l");
    std::vector<int> targets = parse_targets(cfg.run.targets, "edit-l2l");
    TaskSpec spec;
    if (cfg.run.task == "l2l-add") {
        if (!cfg.run.rect.empty()) {
            Rect r = parse_rect(cfg.run.rect, "edit-l2l");
            LayerRecord l;
            l.image = RgbaImage(r.w, r.h);
            l.rect = r;
            l.z = d.layers.empty() ? 0 : d.layers.back().z + 1;
            l.kind = LayerKind::foreground;
            l.caption = cfg.run.caption;
            d.layers.push_back(std::move(l));
            targets = {d.foreground_count()};
        }
        if (targets.empty()) {
            throw ConfigError("edit-l2l: l2l-add needs --rect (new slot) or --targets");
        }
        check_target_range(targets, d, "edit-l2l");
        validate(d);
        spec = TaskSpec::l2l_add(targets, cfg.run.caption);
    } else {
        if (targets.empty()) {
            throw ConfigError("edit-l2l: l2l-restyle needs --targets");
        }
        check_target_range(targets, d, "edit-l2l");
        int patch = patch_from_latent_dim(lm.mc.latent_dim);
        RegionLatents rl = build_region_latents(d, TaskVariant::l2l_restyle, patch);
        std::map<int, LatentGrid> conds;
        for (int t : targets) {
            const LayerRecord& src = d.layers[size_t(t)];
            Rect frame = rl.foregrounds[size_t(t - 1)].rect;
            Rng rng(hash_mix(cfg.sample.seed, uint64_t(t)));
            LayerRecord styled{restyle_variant(src.image, rng),
                               {src.rect.x - frame.x, src.rect.y - frame.y, src.rect.w,
                                src.rect.h},
                               src.z,
                               LayerKind::foreground,
                               src.caption};
            conds[t] = encode(place(styled, frame.w, frame.h), patch);
        }
        spec = TaskSpec::l2l_restyle(targets, std::move(conds));
    }
    fs::path out = need_out(cfg);
    write_resolved(out, cfg);
    double oor = 0.0;
    LayeredDesign res = run_task(lm.model, spec, SampleInputs{std::move(d)}, cfg.sample, &oor);
    save_sample_outputs(out, res, oor);
    return 0;
}

int cmd_distill(RunConfig& cfg) {
    cfg.distill.check();
    if (cfg.run.ckpt.empty()) {
        throw ConfigError("distill: --ckpt is required");
    }
    Checkpoint teacher = load_checkpoint(cfg.run.ckpt);
    auto dataset = load_dataset(cfg.run.data, "distill");
    fs::path out = need_out(cfg);
    write_resolved(out, cfg);
    DistillResult r = distill(teacher, cfg.distill, dataset);
    save_checkpoint(out / "student.ckpt", r.student);
    std::ostringstream csv;
    csv << "iter,critic_loss,grad_rms\n";
    char buf[64];
    for (const DistillRow& row : r.log) {
        csv << row.iter;
        std::snprintf(buf, sizeof(buf), ",%.9g", row.critic_loss);
        csv << buf;
        std::snprintf(buf, sizeof(buf), ",%.9g", row.grad_rms);
        csv << buf << '\n';
    }
    write_text(out / "distill.csv", csv.str());
    return 0;
}

int cmd_eval(RunConfig& cfg) {
    bool pair_mode = !cfg.run.pred.empty() || !cfg.run.gt.empty();
    MetricReport rep;
    fs::path out = need_out(cfg);
    if (pair_mode) {
        if (cfg.run.pred.empty() || cfg.run.gt.empty()) {
            throw ConfigError("eval: --pred and --gt go together");
        }
        auto pred = load_dataset(cfg.run.pred, "eval");
        auto gt = load_dataset(cfg.run.gt, "eval");
        write_resolved(out, cfg);
        rep = evaluate_designs(pred, gt);
    } else {
        cfg.sample.check();
        LoadedModel lm = load_model(cfg.run.ckpt, "eval");
        auto dataset = load_dataset(cfg.run.data, "eval");
        write_resolved(out, cfg);
        rep = evaluate_i2l(lm.model, dataset, cfg.sample);
    }
    write_text(out / "metrics.json", with_newline(report_json(rep)));
    write_text(out / "metrics.csv", with_newline(report_csv(rep)));
    return 0;
}

void parse_layer_range(const std::string& s, int* lo, int* hi) {
    size_t dots = s.find("..");
    try {
        if (dots == std::string::npos) {
            size_t pos = 0;
            *lo = *hi = std::stoi(s, &pos);
            if (pos != s.size()) {
                throw std::invalid_argument(s);
            }
        } else {
            size_t p1 = 0;
            size_t p2 = 0;
            std::string a = s.substr(0, dots);
            std::string b = s.substr(dots + 2);
            *lo = std::stoi(a, &p1);
            *hi = std::stoi(b, &p2);
            if (p1 != a.size() || p2 != b.size()) {
                throw std::invalid_argument(s);
            }
        }
    } catch (const std::exception&) {
        throw ConfigError("bench-efficiency: bad --layers '" + s + "' (want K or A..B)");
    }
    if (*lo < 1 || *hi < *lo) {
        throw ConfigError("bench-efficiency: --layers range must satisfy 1 <= A <= B");
    }
}

int cmd_bench(RunConfig& cfg) {
    int lo = 0;
    int hi = 0;
    parse_layer_range(cfg.run.layers, &lo, &hi);
    if (cfg.run.area_dist != "synth") {
        throw ConfigError("bench-efficiency: unknown --area-dist '" + cfg.run.area_dist +
                          "' (only 'synth')");
    }
    cfg.data.check();
    if (cfg.data_count < 1) {
        throw ConfigError("bench-efficiency: data.count must be >= 1");
    }
    cfg.model.check();
    int s = patch_from_latent_dim(cfg.model.latent_dim);
    fs::path out = need_out(cfg);
    bool csv_file = out.extension() == ".csv";
    fs::path dir = csv_file ? (out.parent_path().empty() ? fs::path(".") : out.parent_path()) : out;
    write_resolved(dir, cfg);
    std::ostringstream csv;
    csv << "layers,tokens_regional,tokens_fullres,token_ratio,flops_regional,flops_fullres,"
           "flop_ratio,quad_flop_ratio,memory_regional,memory_fullres,memory_ratio\n";
    json rows = json::array();
    char buf[64];
    for (int k = lo; k <= hi; ++k) {
        GenParams p = cfg.data;
        p.min_layers = k;
        p.max_layers = k;
        std::vector<LayeredDesign> designs;
        designs.reserve(size_t(cfg.data_count));
        for (int i = 0; i < cfg.data_count; ++i) {
            designs.push_back(
                gen_design(hash_mix(hash_mix(cfg.data_seed, uint64_t(k)), uint64_t(i)), p));
        }
        CostReport r = cost_model(designs, cfg.model, s);
        csv << k;
        for (double v : {r.tokens_regional, r.tokens_fullres, r.token_ratio, r.flops_regional,
                         r.flops_fullres, r.flop_ratio, r.quad_flop_ratio, r.memory_regional,
                         r.memory_fullres, r.memory_ratio}) {
            std::snprintf(buf, sizeof(buf), ",%.9g", v);
            csv << buf;
        }
        csv << '\n';
        json row = json::parse(cost_json(r));
        row["layers"] = k;
        rows.push_back(std::move(row));
    }
    write_text(csv_file ? out : dir / "report.csv", csv.str());
    write_text(dir / "report.json", rows.dump(2) + "\n");
    return 0;
}

// ---- argument wiring ----

struct CliArgs {
    std::string config;
    std::string out;
    std::string data;
    std::string ckpt;
    std::string image;
    std::string layout;
    std::string design;
    std::string pred;
    std::string gt;
    std::string task;
    std::string caption;
    std::string targets;
    std::string rect;
    std::string layers;
    std::string area_dist;
    uint64_t seed = 0;
    int steps = 0;
    double guidance = 1.0;
    int count = 0;
};

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"masked-region transformer toolkit"};
    app.require_subcommand(1);
    CliArgs a;

    auto common = [&](CLI::App* sc) {
        sc->add_option("--config", a.config, "run configuration JSON; defaults apply when omitted");
        sc->add_option("--out", a.out, "output directory");
    };
    auto sampling = [&](CLI::App* sc) {
        sc->add_option("--ckpt", a.ckpt, "model checkpoint");
        sc->add_option("--seed", a.seed, "sampling seed (sample.seed)");
        sc->add_option("--steps", a.steps, "Euler steps (sample.steps)");
        sc->add_option("--guidance", a.guidance, "guidance scale (sample.guidance)");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic layered-design dataset");
    common(gen);
    gen->add_option("--seed", a.seed, "base dataset seed (data.seed)");
    gen->add_option("--count", a.count, "number of designs (data.count)");

    CLI::App* tr = app.add_subcommand("train", "flow-matching training on a design dataset");
    common(tr);
    tr->add_option("--data", a.data, "dataset directory (from gen-data)");
    tr->add_option("--seed", a.seed, "training seed (train.seed)");
    tr->add_option("--steps", a.steps, "optimizer steps (train.steps)");

    CLI::App* t2l = app.add_subcommand("sample-t2l", "generate every layer from caption + layout");
    common(t2l);
    sampling(t2l);
    t2l->add_option("--layout", a.layout, "layout JSON with slots to fill");
    t2l->add_option("--caption", a.caption, "global caption (derived from layout when omitted)");

    CLI::App* i2l = app.add_subcommand("decompose-i2l", "decompose a composed image into layers");
    common(i2l);
    sampling(i2l);
    i2l->add_option("--image", a.image, "composed RGBA PNG matching the layout canvas");
    i2l->add_option("--layout", a.layout, "layout JSON with slots to fill");
    i2l->add_option("--caption", a.caption, "optional global caption");

    CLI::App* l2l = app.add_subcommand("edit-l2l", "add or restyle layers of an existing design");
    common(l2l);
    sampling(l2l);
    l2l->add_option("--design", a.design, "input design bundle directory");
    l2l->add_option("--task", a.task, "l2l-add | l2l-restyle");
    l2l->add_option("--targets", a.targets, "comma-separated 1-based foreground indices");
    l2l->add_option("--rect", a.rect, "l2l-add: new slot 'x,y,w,h' appended on top");
    l2l->add_option("--caption", a.caption, "layer prompt for l2l-add");

    CLI::App* dis = app.add_subcommand("distill", "distill a teacher into a few-step student");
    common(dis);
    dis->add_option("--ckpt", a.ckpt, "teacher checkpoint");
    dis->add_option("--data", a.data, "dataset directory");
    dis->add_option("--seed", a.seed, "distillation seed (distill.seed)");
    dis->add_option("--steps", a.steps, "student updates (distill.iterations)");

    CLI::App* ev = app.add_subcommand("eval", "score predictions against ground truth");
    common(ev);
    ev->add_option("--pred", a.pred, "predicted design dataset directory");
    ev->add_option("--gt", a.gt, "ground-truth design dataset directory");
    ev->add_option("--ckpt", a.ckpt, "model checkpoint (image-to-layers eval mode)");
    ev->add_option("--data", a.data, "dataset to decompose and score against itself");
    ev->add_option("--seed", a.seed, "sampling seed (sample.seed)");
    ev->add_option("--steps", a.steps, "Euler steps (sample.steps)");

    CLI::App* be = app.add_subcommand("bench-efficiency", "analytic token/FLOP/memory cost sweep");
    common(be);
    be->add_option("--layers", a.layers, "layer-count range 'A..B' or single K (default 1..32)");
    be->add_option("--area-dist", a.area_dist, "area distribution; only 'synth'");
    be->add_option("--count", a.count, "designs per layer-count bucket (data.count)");
    be->add_option("--seed", a.seed, "bucket base seed (data.seed)");

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        throw ConfigError(std::string("cli: ") + e.what());
    }

    CLI::App* sub = app.get_subcommands().front();
    auto given = [&](const std::string& name) {
        const CLI::Option* o = sub->get_option_no_throw(name);
        return o != nullptr && o->count() > 0;
    };

    RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    cfg.run.command = sub->get_name();
    auto take = [](std::string& slot, const std::string& flag) {
        if (!flag.empty()) {
            slot = flag;
        }
    };
    take(cfg.run.out, a.out);
    take(cfg.run.data, a.data);
    take(cfg.run.ckpt, a.ckpt);
    take(cfg.run.image, a.image);
    take(cfg.run.layout, a.layout);
    take(cfg.run.design, a.design);
    take(cfg.run.pred, a.pred);
    take(cfg.run.gt, a.gt);
    take(cfg.run.task, a.task);
    take(cfg.run.caption, a.caption);
    take(cfg.run.targets, a.targets);
    take(cfg.run.rect, a.rect);
    take(cfg.run.layers, a.layers);
    take(cfg.run.area_dist, a.area_dist);

    const std::string& cmd = cfg.run.command;
    if (given("--seed")) {
        if (cmd == "gen-data" || cmd == "bench-efficiency") {
            cfg.data_seed = a.seed;
        } else if (cmd == "train") {
            cfg.train.seed = a.seed;
        } else if (cmd == "distill") {
            cfg.distill.seed = a.seed;
        } else {
            cfg.sample.seed = a.seed;
        }
    }
    if (given("--steps")) {
        if (cmd == "train") {
            cfg.train.steps = a.steps;
        } else if (cmd == "distill") {
            cfg.distill.iterations = a.steps;
        } else {
            cfg.sample.steps = a.steps;
        }
    }
    if (given("--guidance")) {
        cfg.sample.guidance = a.guidance;
    }
    if (given("--count")) {
        cfg.data_count = a.count;
    }

    if (cmd == "gen-data") {
        return cmd_gen_data(cfg);
    }
    if (cmd == "train") {
        return cmd_train(cfg);
    }
    if (cmd == "sample-t2l") {
        return cmd_sample_t2l(cfg);
    }
    if (cmd == "decompose-i2l") {
        return cmd_decompose_i2l(cfg);
    }
    if (cmd == "edit-l2l") {
        return cmd_edit_l2l(cfg);
    }
    if (cmd == "distill") {
        return cmd_distill(cfg);
    }
    if (cmd == "eval") {
        return cmd_eval(cfg);
    }
    return cmd_bench(cfg);
}

int fail(int code, const char* type, const std::string& msg) {
    json err{{"error", {{"exit", code}, {"type", type}, {"message", msg}}}};
    std::cerr << err.dump() << "\n";
    return code;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    try {
        return run_cli(argc, argv);
    } catch (const ConfigError& e) {
        return fail(2, "config", e.what());
    } catch (const InputError& e) {
        return fail(3, "input", e.what());
    } catch (const NumericError& e) {
        return fail(4, "numeric", e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(3, "input", e.what());
    } catch (const std::exception& e) {
        return fail(1, "internal", e.what());
    }
}

}  // namespace mrt
