#ifndef MRT_DISTILL_HPP
#define MRT_DISTILL_HPP

#include "mrt/sampler.hpp"
#include "mrt/train.hpp"

namespace mrt {

struct DistillConfig {
    int student_steps = 8;    // T_S
    int critic_ratio = 5;     // critic updates per student update
    double student_lr = 1e-4;
    double critic_lr = 1e-4;
    int iterations = 0;
    uint64_t seed = 0;

    void check() const {
        if (student_steps < 1) {
            throw ConfigError("distill: student steps must be >= 1");
        }
        if (critic_ratio < 1) {
            throw ConfigError("distill: critic ratio must be >= 1");
        }
        if (student_lr <= 0.0 || critic_lr <= 0.0 || iterations < 0) {
            throw ConfigError("distill: non-positive hyperparameter");
        }
    }
};

// T_S-step Euler rollout of the student field from seeded noise; identical
// pinning semantics to the sampler.
PackedSequence student_generate(const Model<float>& student, const PackedSequence& clean,
                                int steps, uint64_t seed);

// Distribution-matching gradient w.r.t. the student samples: noise the
// samples along the flow path at a random t and take (v_critic - v_teacher)
// at noised rows, straight-through on the noising. Scaled like a mean-MSE
// gradient (divided by the noised entry count).
Mat<float> dmd_student_gradient(const Model<float>& teacher, const Model<float>& critic,
                                const PackedSequence& samples, Rng& rng);

// One flow-matching step treating the student samples as data. Returns the
// critic loss.
double critic_update(Model<float>& critic, AdamW& opt, const PackedSequence& samples, Rng& rng);

struct DistillRow {
    int64_t iter = 0;
    double critic_loss = 0.0;  // mean over this iteration's critic updates
    double grad_rms = 0.0;     // RMS of the student DMD gradient
};

struct DistillResult {
    Checkpoint student;  // carries distilled=true
    std::vector<DistillRow> log;
};

// Alternating critic/student updates against a frozen teacher; the student
// and critic both start from the teacher weights. Task sampling reuses the
// TrainConfig embedded in the teacher checkpoint.
DistillResult distill(const Checkpoint& teacher_ckpt, const DistillConfig& cfg,
                      const std::vector<LayeredDesign>& dataset);

// ---- 1-D analytic apparatus ----

// Scalar velocity field v(z, t) on the straight flow path.
using Field1d = std::function<double(double, double)>;

// Marginal flow field of an equal-weight Gaussian mixture with the given
// component means and common sigma: v(z, t) = (E[x | z_t = z] - z) / t.
Field1d mixture_field(const std::vector<double>& means, double sigma);

// n Euler rollouts of a 1-D field from seeded standard normal noise.
std::vector<double> rollout_1d(const Field1d& field, int steps, int n, uint64_t seed);

// Energy distance: 2 E|x-y| - E|x-x'| - E|y-y'| (V-statistic estimate).
double energy_distance(const std::vector<double>& a, const std::vector<double>& b);

// Small (z, t) -> v MLP used as the 1-D student and critic.
struct ToyNet {
    Mat<float> w1, b1, w2, b2, w3, b3;

    static ToyNet init(int hidden, uint64_t seed);
    ParamRefs refs();
    // Forward for a batch given as a tape node of shape B x 2 (z, t columns).
    T forward(Tape<float>& tape, T zt, ParamHandles* handles = nullptr) const;
    double eval(double z, double t) const;
    Field1d field() const;
};

struct ToyDistillConfig {
    int student_steps = 4;
    int critic_ratio = 5;
    int pretrain_iters = 800;   // flow-matching warmup on teacher samples
    int iterations = 400;       // DMD rounds
    int batch = 128;
    int hidden = 32;
    int teacher_steps = 100;    // rollout depth for the teacher sample bank
    int bank = 4096;            // teacher sample bank / student reservoir size
    double lr = 2e-3;           // pretrain and critic learning rate
    double dmd_lr = 2e-4;       // student learning rate during DMD rounds
    int grad_samples = 4;       // (t, noise) draws averaged per DMD gradient
    double anchor = 0.0;        // weight of a continued flow-matching term
                                // on teacher samples during DMD rounds
    uint64_t seed = 0;
};

struct ToyDistillResult {
    ToyNet student;
    ToyNet critic;
    std::vector<double> teacher_bank;
};

// DMD on the 1-D toy: flow-matching warmup from teacher rollouts, then
// alternating critic/student DMD updates against the analytic field.
ToyDistillResult toy_distill(const Field1d& teacher, const ToyDistillConfig& cfg);

// 1-D DMD gradient for a batch of student samples (mirrors the layered
// estimator; used by the toy loop and the analytic tests). t is drawn from
// [0.05, 1) because the analytic fields blow up as 1/t near t = 0.
std::vector<double> dmd_gradient_1d(const Field1d& teacher, const Field1d& critic,
                                    const std::vector<double>& samples, Rng& rng);

// Same estimator with the critic evaluated in one batched forward. Consumes
// the rng stream identically, so outputs match the Field1d form.
std::vector<double> dmd_gradient_1d(const Field1d& teacher, const ToyNet& critic,
                                    const std::vector<double>& samples, Rng& rng);

}  // namespace mrt

#endif
