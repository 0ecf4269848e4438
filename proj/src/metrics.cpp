#include "tsgps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tsgps/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tsgps {

void ScoredSet::validate() const {
    if (scores.size() != labels.size())
        throw ParamError("scored set: score/label lengths differ");
    if (scores.empty()) throw ParamError("scored set: empty");
    for (int l : labels)
        if (l != 0 && l != 1)
            throw ParamError("scored set: labels must be 0 or 1");
}

std::int64_t ScoredSet::positives() const {
    return std::count(labels.begin(), labels.end(), 1);
}

std::int64_t ScoredSet::negatives() const {
    return std::count(labels.begin(), labels.end(), 0);
}

ConfusionCounts confusion(const ScoredSet& s, double threshold) {
    s.validate();
    ConfusionCounts c;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        const bool pred = s.scores[i] >= threshold;
        if (s.labels[i] == 1)
            (pred ? c.tp : c.fn)++;
        else
            (pred ? c.fp : c.tn)++;
    }
    return c;
}

ScalarMetrics scalar_metrics(const ConfusionCounts& c) {
    if (c.total() <= 0) throw ParamError("scalar_metrics: empty confusion table");
    ScalarMetrics m;
    m.acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0)
        m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    else
        m.precision_degenerate = true;
    if (c.tp + c.fn > 0)
        m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    else
        m.recall_degenerate = true;
    if (c.tn + c.fp > 0)
        m.fpr = static_cast<double>(c.fp) / static_cast<double>(c.tn + c.fp);
    else
        m.fpr_degenerate = true;
    if (m.precision + m.recall > 0.0)
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    else
        m.f1_degenerate = true;
    return m;
}

namespace {

// Indices sorted by score descending; equal scores grouped together.
std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });
    return idx;
}

} // namespace

RocResult roc_auc(const ScoredSet& s) {
    s.validate();
    const double p = static_cast<double>(s.positives());
    const double n = static_cast<double>(s.negatives());
    if (p == 0.0 || n == 0.0)
        throw MetricError("roc_auc: needs both classes present");

    const auto idx = descending_order(s.scores);
    RocResult r;
    r.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    double tp = 0.0, fp = 0.0;
    double auc = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double sc = s.scores[idx[i]];
        // consume the whole tie group at this threshold
        double dtp = 0.0, dfp = 0.0;
        while (i < idx.size() && s.scores[idx[i]] == sc) {
            if (s.labels[idx[i]] == 1)
                dtp += 1.0;
            else
                dfp += 1.0;
            ++i;
        }
        const double tpr0 = tp / p, fpr0 = fp / n;
        tp += dtp;
        fp += dfp;
        const double tpr1 = tp / p, fpr1 = fp / n;
        auc += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0;
        r.curve.push_back({sc, fpr1, tpr1});
    }
    r.auc = auc;
    return r;
}

PrResult pr_auprc(const ScoredSet& s) {
    s.validate();
    const double p = static_cast<double>(s.positives());
    if (p == 0.0) throw MetricError("pr_auprc: needs at least one positive");

    const auto idx = descending_order(s.scores);
    PrResult r;
    double tp = 0.0, fp = 0.0;
    double auprc = 0.0;
    double prev_recall = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double sc = s.scores[idx[i]];
        while (i < idx.size() && s.scores[idx[i]] == sc) {
            if (s.labels[idx[i]] == 1)
                tp += 1.0;
            else
                fp += 1.0;
            ++i;
        }
        const double recall = tp / p;
        const double precision = tp / (tp + fp);
        auprc += (recall - prev_recall) * precision;
        prev_recall = recall;
        r.curve.push_back({sc, recall, precision});
    }
    r.auprc = auprc;
    return r;
}

ScoredSet one_vs_rest(const Tensor& logits, const std::vector<int>& labels,
                      std::size_t cls) {
    if (cls >= logits.cols())
        throw ParamError("one_vs_rest: class index " + std::to_string(cls) +
                         " out of range for " + std::to_string(logits.cols()) +
                         " classes");
    if (labels.size() != logits.rows())
        throw ParamError("one_vs_rest: label count does not match logits rows");
    ScoredSet s;
    s.scores.resize(logits.rows());
    s.labels.resize(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* li = logits.row(i);
        double mx = li[0];
        for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, li[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(li[j] - mx);
        s.scores[i] = std::exp(li[cls] - mx) / sum;
        s.labels[i] = labels[i] == static_cast<int>(cls) ? 1 : 0;
    }
    return s;
}

namespace {

EvalReport evaluate_binary(const ScoredSet& s) {
    EvalReport r;
    r.n_samples = s.scores.size();
    r.scalar = scalar_metrics(confusion(s, 0.5));
    RocResult roc = roc_auc(s);
    r.auc = roc.auc;
    r.roc_curve = std::move(roc.curve);
    PrResult pr = pr_auprc(s);
    r.auprc = pr.auprc;
    r.pr_curve = std::move(pr.curve);
    return r;
}

} // namespace

EvalReport evaluate_scores(const Tensor& probs, const std::vector<int>& labels,
                           const std::vector<std::string>& class_names) {
    if (probs.rows() != labels.size())
        throw ParamError("evaluate_scores: label count does not match rows");
    if (probs.cols() < 2) throw ParamError("evaluate_scores: need >= 2 classes");

    if (probs.cols() == 2) {
        ScoredSet s;
        s.scores.resize(probs.rows());
        s.labels = labels;
        for (std::size_t i = 0; i < probs.rows(); ++i) s.scores[i] = probs(i, 1);
        EvalReport r = evaluate_binary(s);
        r.class_names = class_names;
        return r;
    }

    // Multi-class: argmax accuracy plus a one-vs-rest report per class.
    EvalReport r;
    r.n_samples = probs.rows();
    r.class_names = class_names;
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < probs.cols(); ++j)
            if (probs(i, j) > probs(i, best)) best = j;
        if (static_cast<int>(best) == labels[i]) ++correct;
    }
    r.scalar.acc = static_cast<double>(correct) / static_cast<double>(probs.rows());

    double auc_sum = 0.0, auprc_sum = 0.0, prec_sum = 0.0, rec_sum = 0.0,
           f1_sum = 0.0;
    for (std::size_t c = 0; c < probs.cols(); ++c) {
        ScoredSet s;
        s.scores.resize(probs.rows());
        s.labels.resize(probs.rows());
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            s.scores[i] = probs(i, c);
            s.labels[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
        }
        EvalReport cls = evaluate_binary(s);
        auc_sum += cls.auc;
        auprc_sum += cls.auprc;
        prec_sum += cls.scalar.precision;
        rec_sum += cls.scalar.recall;
        f1_sum += cls.scalar.f1;
        r.per_class.push_back(std::move(cls));
    }
    const double nc = static_cast<double>(probs.cols());
    r.auc = auc_sum / nc; // macro average over one-vs-rest
    r.auprc = auprc_sum / nc;
    r.scalar.precision = prec_sum / nc;
    r.scalar.recall = rec_sum / nc;
    r.scalar.f1 = f1_sum / nc;
    return r;
}

std::vector<std::size_t> kfold_assignments(const std::vector<int>& labels,
                                           std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ParamError("kfold: k must be >= 2");
    std::vector<int> classes = labels;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    std::vector<std::size_t> fold(labels.size(), 0);
    Rng rng = Rng(seed).derive("kfold");
    for (int cls : classes) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) idx.push_back(i);
        if (idx.size() < k)
            throw DataError("kfold: class " + std::to_string(cls) + " has only " +
                            std::to_string(idx.size()) + " samples for k=" +
                            std::to_string(k));
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i) fold[idx[i]] = i % k;
    }
    return fold;
}

KfoldResult kfold_cv(const std::vector<int>& labels, std::size_t k,
                     const FoldTrainer& trainer, std::uint64_t seed,
                     const std::vector<std::string>& class_names) {
    const auto fold_of = kfold_assignments(labels, k, seed);
    KfoldResult result;
    result.folds.resize(k);
    std::exception_ptr failure;

#ifdef _OPENMP
#pragma omp parallel for num_threads(kernels::threads()) schedule(dynamic) \
    if (kernels::threads() > 1)
#endif
    for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(k); ++f) {
        try {
            std::vector<std::size_t> train_idx, test_idx;
            for (std::size_t i = 0; i < labels.size(); ++i)
                (fold_of[i] == static_cast<std::size_t>(f) ? test_idx : train_idx)
                    .push_back(i);
            const std::uint64_t fold_seed =
                Rng::splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (f + 1)));
            Tensor probs = trainer(train_idx, test_idx, fold_seed);
            std::vector<int> test_labels;
            for (std::size_t i : test_idx) test_labels.push_back(labels[i]);
            result.folds[static_cast<std::size_t>(f)] =
                evaluate_scores(probs, test_labels, class_names);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    auto mean_stdev = [&](auto getter, double& mean, double& stdev) {
        double sum = 0.0;
        for (const auto& r : result.folds) sum += getter(r);
        mean = sum / static_cast<double>(k);
        double ss = 0.0;
        for (const auto& r : result.folds) {
            const double d = getter(r) - mean;
            ss += d * d;
        }
        stdev = k > 1 ? std::sqrt(ss / static_cast<double>(k - 1)) : 0.0;
    };
    mean_stdev([](const EvalReport& r) { return r.scalar.acc; }, result.mean_acc,
               result.stdev_acc);
    mean_stdev([](const EvalReport& r) { return r.auc; }, result.mean_auc,
               result.stdev_auc);
    mean_stdev([](const EvalReport& r) { return r.auprc; }, result.mean_auprc,
               result.stdev_auprc);
    mean_stdev([](const EvalReport& r) { return r.scalar.f1; }, result.mean_f1,
               result.stdev_f1);
    return result;
}

} // namespace tsgps
