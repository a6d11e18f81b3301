#include "mrt/region.hpp"

#include <algorithm>

#include "mrt/canvas.hpp"

namespace mrt {

TaskSpec TaskSpec::t2l(std::string caption) {
    TaskSpec t;
    t.variant = TaskVariant::t2l;
    t.caption = std::move(caption);
    return t;
}

TaskSpec TaskSpec::i2l(std::string caption) {
    TaskSpec t;
    t.variant = TaskVariant::i2l;
    t.caption = std::move(caption);
    return t;
}

TaskSpec TaskSpec::l2l_add(std::vector<int> a, std::string layer_prompt) {
    TaskSpec t;
    t.variant = TaskVariant::l2l_add;
    t.targets = std::move(a);
    t.caption = std::move(layer_prompt);
    return t;
}

TaskSpec TaskSpec::l2l_restyle(std::vector<int> i, std::map<int, LatentGrid> conds) {
    TaskSpec t;
    t.variant = TaskVariant::l2l_restyle;
    t.targets = std::move(i);
    t.conds = std::move(conds);
    t.caption = restyle_prompt();
    return t;
}

static void check_targets(const TaskSpec& task, int k) {
    if (task.targets.empty()) {
        throw InputError("task: target set must be non-empty");
    }
    int prev = 0;
    for (int i : task.targets) {
        if (i < 1 || i > k) {
            throw InputError("task: target index " + std::to_string(i) + " outside 1.." +
                             std::to_string(k));
        }
        if (i <= prev) {
            throw InputError("task: targets must be strictly ascending");
        }
        prev = i;
    }
}

MaskPlan mask_plan(const TaskSpec& task, int k) {
    if (k < 0) {
        throw InputError("mask_plan: negative layer count");
    }
    MaskPlan plan;
    plan.roles.assign(size_t(k) + 2, Role::noised);
    switch (task.variant) {
        case TaskVariant::t2l:
            break;  // masked set empty, everything is noised
        case TaskVariant::i2l:
            plan.roles[0] = Role::masked_clean;
            break;
        case TaskVariant::l2l_add:
        case TaskVariant::l2l_restyle: {
            check_targets(task, k);
            plan.roles.assign(size_t(k) + 2, Role::masked_clean);
            for (int i : task.targets) {
                plan.roles[size_t(i) + 1] = Role::noised;
            }
            if (task.variant == TaskVariant::l2l_restyle) {
                if (task.conds.size() != task.targets.size()) {
                    throw InputError("restyle: conds keys must equal the target set");
                }
                for (int i : task.targets) {
                    if (!task.conds.count(i)) {
                        throw InputError("restyle: missing condition for target " +
                                         std::to_string(i));
                    }
                }
                plan.condition_regions = int(task.targets.size());
            }
            break;
        }
    }
    return plan;
}

namespace {

// Copies `src` into a region-rect-sized buffer at src_rect's offset; pixels of
// the region not covered by src_rect stay transparent.
RgbaImage region_content(const RgbaImage& src, const Rect& src_rect, const Rect& region) {
    RgbaImage out(region.w, region.h);
    int x0 = std::max(src_rect.x, region.x);
    int y0 = std::max(src_rect.y, region.y);
    int x1 = std::min(src_rect.x1(), region.x1());
    int y1 = std::min(src_rect.y1(), region.y1());
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const float* s = src.at(x - src_rect.x, y - src_rect.y);
            std::copy(s, s + 4, out.at(x - region.x, y - region.y));
        }
    }
    return out;
}

}  // namespace

RegionLatents build_region_latents(const LayeredDesign& design, TaskVariant variant, int s) {
    validate(design);
    RegionLatents rl;
    rl.canvas_w = design.canvas_w;
    rl.canvas_h = design.canvas_h;
    rl.bg_rect = design.bg_rect;
    rl.patch = s;

    RgbaImage composed = compose(design);
    Rect canvas_rect{0, 0, design.canvas_w, design.canvas_h};
    if (variant == TaskVariant::i2l) {
        // visible pixels only: mask to bg_rect before encoding
        rl.composed.rect = snap_rect(design.bg_rect, s);
        RgbaImage visible = visible_crop(composed, design.bg_rect);
        rl.composed.z = encode(region_content(visible, design.bg_rect, rl.composed.rect), s);
    } else {
        rl.composed.rect = snap_rect(canvas_rect, s);
        rl.composed.z = encode(region_content(composed, canvas_rect, rl.composed.rect), s);
    }

    const LayerRecord& bg = design.background();
    rl.background.rect = snap_rect(bg.rect, s);
    rl.background.z = encode(region_content(bg.image, bg.rect, rl.background.rect), s);

    for (const auto& layer : design.layers) {
        if (layer.kind != LayerKind::foreground) {
            continue;
        }
        Region r;
        r.rect = snap_rect(layer.rect, s);
        r.z = encode(region_content(layer.image, layer.rect, r.rect), s);
        rl.foregrounds.push_back(std::move(r));
    }
    return rl;
}

PackedSequence pack(const RegionLatents& rl, const TaskSpec& task) {
    int k = int(rl.foregrounds.size());
    MaskPlan plan = mask_plan(task, k);
    int s = rl.patch;

    PackedSequence seq;
    seq.caption = task.caption;
    seq.foreground_count = k;
    seq.patch = s;
    seq.channels = rl.composed.z.channels;

    auto append_region = [&](const LatentGrid& z, const Rect& rect, int region_id, Role role,
                             int layer_index) {
        if (z.channels != seq.channels) {
            throw InputError("pack: inconsistent latent channel counts");
        }
        if (rect.x % s || rect.y % s || z.w != rect.w / s || z.h != rect.h / s) {
            throw InputError("pack: region rect does not match its latent grid");
        }
        seq.region_rects.push_back(rect);
        int row0 = rect.y / s;
        int col0 = rect.x / s;
        for (int i = 0; i < z.h; ++i) {
            for (int j = 0; j < z.w; ++j) {
                const float* c = z.cell(i, j);
                seq.tokens.insert(seq.tokens.end(), c, c + z.channels);
                seq.meta.push_back({region_id, row0 + i, col0 + j, role, layer_index});
            }
        }
    };

    append_region(rl.composed.z, rl.composed.rect, 0, plan.roles[0], 0);
    append_region(rl.background.z, rl.background.rect, 1, plan.roles[1], 1);
    for (int i = 0; i < k; ++i) {
        append_region(rl.foregrounds[i].z, rl.foregrounds[i].rect, 2 + i, plan.roles[2 + i],
                      2 + i);
    }
    if (task.variant == TaskVariant::l2l_restyle) {
        int region_id = k + 2;
        for (int i : task.targets) {
            const Region& target = rl.foregrounds[i - 1];
            const LatentGrid& cond = task.conds.at(i);
            if (cond.h != target.z.h || cond.w != target.z.w ||
                cond.channels != target.z.channels) {
                throw InputError("restyle: condition latent shape differs from target layer");
            }
            // pos copied from the target layer's tokens
            append_region(cond, target.rect, region_id, Role::condition, 1 + i);
            ++region_id;
        }
    }
    return seq;
}

std::vector<Region> unpack(const PackedSequence& seq) {
    int n_regions = seq.foreground_count + 2;
    if (int(seq.region_rects.size()) < n_regions) {
        throw InputError("unpack: sequence lacks region rects");
    }
    int s = seq.patch;
    std::vector<Region> out(n_regions);
    for (int r = 0; r < n_regions; ++r) {
        out[r].rect = seq.region_rects[r];
        out[r].z = LatentGrid(out[r].rect.h / s, out[r].rect.w / s, seq.channels);
    }
    std::vector<int> seen(n_regions, 0);
    for (int i = 0; i < seq.n_tokens(); ++i) {
        const TokenMeta& m = seq.meta[i];
        int r = m.region_id;
        if (r >= n_regions) {
            continue;  // condition token, dropped
        }
        LatentGrid& z = out[r].z;
        int row = m.row - out[r].rect.y / s;
        int col = m.col - out[r].rect.x / s;
        if (row < 0 || col < 0 || row >= z.h || col >= z.w) {
            throw InputError("unpack: token position outside its region rect");
        }
        std::copy(seq.token(i), seq.token(i) + seq.channels, z.cell(row, col));
        ++seen[r];
    }
    for (int r = 0; r < n_regions; ++r) {
        if (seen[r] != out[r].z.token_count()) {
            throw InputError("unpack: token count mismatch in region " + std::to_string(r));
        }
    }
    return out;
}

std::string assemble_layer_prompt(const std::vector<std::string>& captions,
                                  const std::vector<int>& a) {
    if (a.empty()) {
        throw InputError("layer prompt: empty selection");
    }
    std::string out;
    int prev = 0;
    for (int i : a) {
        if (i < 1 || i > int(captions.size())) {
            throw InputError("layer prompt: index outside caption list");
        }
        if (i <= prev) {
            throw InputError("layer prompt: indices must be strictly ascending");
        }
        prev = i;
        out += "<layer> " + captions[size_t(i) - 1] + " </layer>";
    }
    return out;
}

std::string restyle_prompt() { return "Harmonize these layers"; }

}  // namespace mrt
