#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsgps/errors.hpp"
#include "tsgps/tensor.hpp"

namespace tsgps {

struct ConfusionCounts {
    std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::int64_t total() const { return tp + tn + fp + fn; }
};

/// Per-sample scores with binary {0,1} labels.
struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;

    void validate() const;
    std::int64_t positives() const;
    std::int64_t negatives() const;
};

/// Scalar metrics from a confusion table. A zero denominator reports the
/// metric as 0 and sets the matching degenerate flag.
struct ScalarMetrics {
    double acc = 0.0, precision = 0.0, recall = 0.0, fpr = 0.0, f1 = 0.0;
    bool precision_degenerate = false;
    bool recall_degenerate = false;
    bool fpr_degenerate = false;
    bool f1_degenerate = false;
};

struct CurvePoint {
    double threshold = 0.0;
    double x = 0.0; // fpr or recall
    double y = 0.0; // tpr or precision
};

/// Metrics for one evaluation run. ROC curve points are
/// (threshold, fpr, tpr) and anchored at (0,0) and (1,1); PR points are
/// (threshold, recall, precision).
struct EvalReport {
    ScalarMetrics scalar;
    double auc = 0.0;
    double auprc = 0.0;
    std::vector<CurvePoint> roc_curve;
    std::vector<CurvePoint> pr_curve;
    std::size_t n_samples = 0;
    // one-vs-rest breakdown, present for multi-class evaluations
    std::vector<EvalReport> per_class;
    std::vector<std::string> class_names;
};

/// Predicted positive iff score >= threshold.
ConfusionCounts confusion(const ScoredSet& s, double threshold);

ScalarMetrics scalar_metrics(const ConfusionCounts& c);

struct RocResult {
    double auc = 0.0;
    std::vector<CurvePoint> curve;
};

/// Threshold sweep over distinct scores; AUC by the trapezoidal rule,
/// which with tie grouping equals the Mann-Whitney statistic
/// (concordant pairs + half ties) / (P*N). Throws MetricError if a
/// class is missing.
RocResult roc_auc(const ScoredSet& s);

struct PrResult {
    double auprc = 0.0;
    std::vector<CurvePoint> curve;
};

/// Precision-recall sweep; AUPRC by the step-wise (right-continuous)
/// estimator, recall ascending. Throws MetricError without positives.
PrResult pr_auprc(const ScoredSet& s);

/// Scores = softmax probability of `cls`; labels binarized to
/// (label == cls).
ScoredSet one_vs_rest(const Tensor& logits, const std::vector<int>& labels,
                      std::size_t cls);

/// Full report from an n x C score matrix (C == 2 uses the positive
/// class; C > 2 also fills the one-vs-rest breakdown and multi-class
/// accuracy by argmax, ties to the lowest class index). Scalar metrics
/// are taken at probability threshold 0.5.
EvalReport evaluate_scores(const Tensor& probs, const std::vector<int>& labels,
                           const std::vector<std::string>& class_names = {});

// ---- cross validation -----------------------------------------------

/// Stratified deterministic k-fold assignment: per class, indices are
/// seeded-shuffled and dealt round-robin. Returns fold index per sample.
std::vector<std::size_t> kfold_assignments(const std::vector<int>& labels,
                                           std::size_t k, std::uint64_t seed);

struct KfoldResult {
    std::vector<EvalReport> folds;
    // mean / stdev (sample, n-1) over folds of the headline scalars
    double mean_acc = 0.0, stdev_acc = 0.0;
    double mean_auc = 0.0, stdev_auc = 0.0;
    double mean_auprc = 0.0, stdev_auprc = 0.0;
    double mean_f1 = 0.0, stdev_f1 = 0.0;
};

/// Trainer contract: given train/test index sets, return an
/// n_test x C probability matrix for the held-out samples.
using FoldTrainer = std::function<Tensor(const std::vector<std::size_t>& train_idx,
                                         const std::vector<std::size_t>& test_idx,
                                         std::uint64_t fold_seed)>;

/// Runs the trainer once per fold (k-1 folds train, 1 held out) and
/// aggregates. Folds may be evaluated in parallel; results are always
/// ordered by fold index.
KfoldResult kfold_cv(const std::vector<int>& labels, std::size_t k,
                     const FoldTrainer& trainer, std::uint64_t seed,
                     const std::vector<std::string>& class_names = {});

} // namespace tsgps
