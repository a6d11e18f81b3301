#ifndef MRT_REGION_HPP
#define MRT_REGION_HPP

#include <map>

#include "mrt/codec.hpp"
#include "mrt/synth.hpp"

namespace mrt {

enum class Role { noised, masked_clean, condition };

enum class TaskVariant { t2l, i2l, l2l_add, l2l_restyle };

// Task description. `targets` holds the 1-based foreground indices A (layer
// addition) or I (restylization); `conds` holds the restyle condition latents
// keyed by target index.
struct TaskSpec {
    TaskVariant variant = TaskVariant::t2l;
    std::string caption;
    std::vector<int> targets;
    std::map<int, LatentGrid> conds;

    static TaskSpec t2l(std::string caption);
    static TaskSpec i2l(std::string caption = "");
    static TaskSpec l2l_add(std::vector<int> a, std::string layer_prompt);
    static TaskSpec l2l_restyle(std::vector<int> i, std::map<int, LatentGrid> conds);
};

struct TokenMeta {
    int region_id = 0;    // 0 composed, 1 bg, 2..K+1 fg, K+2.. conditions
    int row = 0;          // global canvas latent coordinates
    int col = 0;
    Role role = Role::noised;
    int layer_index = 0;  // embedding id; conditions reuse their target's id
};

// Per-region role table. roles[r] covers region ids 0..K+1; every appended
// condition region is Role::condition by construction.
struct MaskPlan {
    std::vector<Role> roles;
    int condition_regions = 0;
};

// Returns the role table for `task` with K foreground layers. Throws
// InputError when targets are empty/out of range for the variant.
MaskPlan mask_plan(const TaskSpec& task, int k);

// One cropped region: latents plus its snapped canvas-pixel rect.
struct Region {
    LatentGrid z;
    Rect rect;
};

// All regional latents of one design, rects snapped to the patch grid.
struct RegionLatents {
    int canvas_w = 0;
    int canvas_h = 0;
    Rect bg_rect;
    int patch = kDefaultPatchSize;
    Region composed;
    Region background;
    std::vector<Region> foregrounds;  // ascending z
};

// Crops + zero-pads + encodes every region of a design. The composed region
// spans the snapped full canvas, except under I2L where it covers only the
// visible region (content outside bg_rect zeroed).
RegionLatents build_region_latents(const LayeredDesign& design, TaskVariant variant,
                                   int s = kDefaultPatchSize);

struct PackedSequence {
    int channels = 0;
    std::vector<float> tokens;  // n x channels, row-major
    std::vector<TokenMeta> meta;
    std::string caption;
    int foreground_count = 0;
    int patch = kDefaultPatchSize;
    std::vector<Rect> region_rects;  // indexed by region id, conditions included

    int n_tokens() const { return int(meta.size()); }
    float* token(int i) { return tokens.data() + size_t(i) * channels; }
    const float* token(int i) const { return tokens.data() + size_t(i) * channels; }
};

// Concatenates regions in fixed order (composed, bg, fg ascending z, then
// restyle conditions) with global-canvas positions and the task's role table.
PackedSequence pack(const RegionLatents& rl, const TaskSpec& task);

// Inverse of pack for non-condition regions; condition tokens are dropped.
std::vector<Region> unpack(const PackedSequence& seq);

// "<layer> c_i </layer>" concatenated for i in A, no other separators.
// `captions` is indexed by foreground number (captions[i-1] belongs to fg i).
std::string assemble_layer_prompt(const std::vector<std::string>& captions,
                                  const std::vector<int>& a);

// Fixed instruction prompt for restylization.
std::string restyle_prompt();

}  // namespace mrt

#endif
