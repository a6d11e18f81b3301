#ifndef MRT_TRAIN_HPP
#define MRT_TRAIN_HPP

#include <filesystem>

#include "mrt/model.hpp"

namespace mrt {

struct TrainConfig {
    double lr = 1e-4;  // constant
    int batch_size = 4;
    int steps = 1000;
    double mix_t2l = 0.70;
    double mix_i2l = 0.15;
    double mix_l2l = 0.15;
    double group_prob = 0.3;         // grouping augmentation
    double null_caption_prob = 0.1;  // caption dropout
    uint64_t seed = 0;
    int patch = kDefaultPatchSize;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;

    void check() const {
        if (lr <= 0 || batch_size < 1 || steps < 0 || patch < 1) {
            throw ConfigError("train: non-positive hyperparameter");
        }
        if (std::abs(mix_t2l + mix_i2l + mix_l2l - 1.0) > 1e-9) {
            throw ConfigError("train: task mix ratios must sum to 1");
        }
        for (double p : {mix_t2l, mix_i2l, mix_l2l, group_prob, null_caption_prob}) {
            if (p < 0.0 || p > 1.0) {
                throw ConfigError("train: probability outside [0,1]");
            }
        }
    }
};

// ---- flow primitives (Eq. 1 path) ----

// z_t = (1-t) z0 + t eps
std::vector<float> interpolate(const std::vector<float>& z0, const std::vector<float>& eps,
                               double t);

// v = z0 - eps
std::vector<float> velocity_target(const std::vector<float>& z0, const std::vector<float>& eps);

// In-graph masked flow loss: mean squared error over noised-row entries only.
// Rows with other roles never enter the graph, so their gradient is exactly 0.
T masked_flow_loss(Tape<float>& tape, T pred, const Mat<float>& target,
                   const std::vector<TokenMeta>& meta);

// Value-only counterpart for evaluation paths.
double masked_flow_loss_value(const Mat<float>& pred, const Mat<float>& target,
                              const std::vector<TokenMeta>& meta);

// ---- example construction ----

struct TrainExample {
    PackedSequence seq;   // z_t at noised slots, clean latents elsewhere
    Mat<float> target;    // velocity targets; rows at non-noised slots are zero
    double t = 0.0;
    TaskVariant variant = TaskVariant::t2l;
};

// Draws grouping augmentation, task variant, targets and captions from rng
// and packs the clean (un-noised) sequence.
PackedSequence make_task_sequence(const LayeredDesign& design, const TrainConfig& cfg, Rng& rng);

// Draws task / grouping / timestep / noise from rng and assembles one example.
TrainExample make_training_example(const LayeredDesign& design, const TrainConfig& cfg,
                                   Rng& rng);

// ---- optimizer ----

struct NamedTensors {
    std::vector<std::pair<std::string, Mat<float>>> items;

    Mat<float>& at(const std::string& name) {
        for (auto& [n, m] : items) {
            if (n == name) {
                return m;
            }
        }
        throw Error("no tensor named " + name);
    }
    const Mat<float>& at(const std::string& name) const {
        return const_cast<NamedTensors*>(this)->at(name);
    }
};

// Named views over any parameter collection; AdamW runs on these so models
// and toy networks share one optimizer.
using ParamRefs = std::vector<std::pair<std::string, Mat<float>*>>;

ParamRefs param_refs(Params<float>& params);

struct AdamW {
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;
    int64_t t = 0;
    NamedTensors m, v;

    void init_like(const ParamRefs& params);
    void init_like(const Params<float>& params);
    void step(const ParamRefs& params, const NamedTensors& grads);
    void step(Params<float>& params, const NamedTensors& grads);
};

// ---- checkpointing ----

inline constexpr char kCheckpointMagic[8] = {'M', 'R', 'T', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
    std::string config_json;  // stored verbatim for byte-stable round trips
    int64_t step = 0;
    NamedTensors params;
    NamedTensors adam_m;
    NamedTensors adam_v;
    std::vector<uint8_t> rng_state;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_config_json(const ModelConfig& mc, const TrainConfig& tc, bool distilled);
void parse_checkpoint_config(const std::string& json_text, ModelConfig* mc, TrainConfig* tc,
                             bool* distilled);

Checkpoint make_checkpoint(const Model<float>& model, const TrainConfig& tc, const AdamW& opt,
                           int64_t step, const Rng& rng, bool distilled);
Model<float> model_from_checkpoint(const Checkpoint& ckpt);

// ---- training loop ----

struct LossRow {
    int64_t step = 0;
    TaskVariant task = TaskVariant::t2l;
    double loss = 0.0;
};

struct TrainResult {
    Checkpoint ckpt;
    std::vector<LossRow> log;
};

const char* task_name(TaskVariant v);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRow>& log);

// Flow-matching training. Deterministic in (configs, dataset, seed) at a fixed
// thread count; `resume` continues bit-exactly from a saved checkpoint.
TrainResult train(const ModelConfig& mc, const TrainConfig& tc,
                  const std::vector<LayeredDesign>& dataset,
                  const Checkpoint* resume = nullptr);

}  // namespace mrt

#endif
