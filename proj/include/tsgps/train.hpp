#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsgps/autodiff.hpp"
#include "tsgps/metrics.hpp"
#include "tsgps/model.hpp"

namespace tsgps {

// ---- losses ----------------------------------------------------------

/// Temperature-softened class probabilities (row softmax at tau).
Tensor soft_targets(const Tensor& teacher_logits, double tau);

enum class KdForm {
    Kl,      // sum_i q_i (ln q_i - p_i) / (n tau^2), the divergence form
    Verbatim // sum_i q_i (q_i - p_i)   / (n tau^2), the printed form
};

std::string to_string(KdForm f);
KdForm kd_form_from_string(const std::string& s);

/// Distillation loss between detached teacher logits and the student's
/// logit node, batch-averaged; n is the class count, p_i the student's
/// temperature-tau log-softmax. Gradient flows to the student only.
NodeRef distill_loss(const Tensor& teacher_logits, const NodeRef& student_logits,
                     double tau, KdForm form);

/// Mean over the batch of -log softmax probability of the true class.
NodeRef cross_entropy(const NodeRef& logits, const std::vector<int>& labels);

/// w_distill * l_distill + w_ce * l_ce (graph scalars).
NodeRef total_loss(const NodeRef& l_distill, const NodeRef& l_ce,
                   double w_distill, double w_ce);

/// Same combination on plain numbers, for reporting.
double total_loss_value(double l_distill, double l_ce, double w_distill,
                        double w_ce);

// ---- optimizer --------------------------------------------------------

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

/// AdamW with bias-corrected moments and decoupled weight decay
/// (w -= lr * wd * w applied separately from the gradient step).
class AdamW {
public:
    AdamW(const std::vector<NodeRef>& params, AdamWConfig cfg);

    void step(const std::vector<NodeRef>& params);
    std::size_t steps_taken() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    std::size_t step_ = 0;
    std::vector<Tensor> m_, v_;
};

// ---- training ----------------------------------------------------------

/// Teacher -> student probability aggregation: student class c receives
/// the sum of the teacher probabilities in groups[c].
struct ClassMap {
    std::vector<std::vector<std::size_t>> groups;

    static ClassMap identity(std::size_t classes);
    /// Default when a 3-class teacher feeds a 2-class student:
    /// negative <- {health}, positive <- {bacterial, viral}.
    static ClassMap infected_vs_health();

    Tensor apply(const Tensor& probs) const;
    void validate(std::size_t teacher_classes, std::size_t student_classes) const;
};

struct DistillConfig {
    double temperature = 5.0;
    double w_distill = 0.2;
    double w_ce = 0.8;
    KdForm kd_form = KdForm::Kl;
    ClassMap class_map; // empty groups = resolve by class counts

    void validate() const;
};

struct TrainHyper {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    AdamWConfig adamw;
};

struct EpochRecord {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double val_auc = 0.0;
};

struct TrainSet {
    Tensor features; // n x k
    std::vector<int> labels;
};

struct TrainRun {
    std::uint64_t seed = 0;
    std::vector<EpochRecord> trace; // one entry per epoch
    ModelInstance model;            // final-epoch weights
    std::size_t best_epoch = 0;     // lowest validation loss, recorded only
    double wall_seconds = 0.0;
};

/// Cross-entropy training with AdamW. Deterministic for a fixed seed:
/// the seed fans out into named init/shuffle/dropout streams. Labels
/// must cover every class in [0, spec.num_classes).
TrainRun train_teacher(const TrainSet& train, const TrainSet& val,
                       const ModelSpec& spec, const TrainHyper& hyper,
                       std::uint64_t seed);

/// Knowledge distillation: the frozen eval-mode teacher scores the
/// student's training features once, its probabilities are collapsed
/// through the class map and re-softened at tau, and the student is
/// trained on w_distill * KD + w_ce * CE. w_distill = 0 reproduces
/// vanilla cross-entropy training exactly (same code path and RNG use).
TrainRun distill_student(const ModelSpec& student_spec, const ModelInstance& teacher,
                         const TrainSet& train, const TrainSet& val,
                         const DistillConfig& cfg, const TrainHyper& hyper,
                         std::uint64_t seed);

} // namespace tsgps
