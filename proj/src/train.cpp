#include "tsgps/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace tsgps {

// ---- losses ----------------------------------------------------------

Tensor soft_targets(const Tensor& teacher_logits, double tau) {
    if (!(tau > 0.0))
        throw ParamError("soft_targets: temperature must be > 0");
    Tensor q(teacher_logits.rows(), teacher_logits.cols());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        const double* li = teacher_logits.row(i);
        double* qi = q.row(i);
        double mx = li[0];
        for (std::size_t j = 1; j < q.cols(); ++j) mx = std::max(mx, li[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < q.cols(); ++j) {
            qi[j] = std::exp((li[j] - mx) / tau);
            sum += qi[j];
        }
        for (std::size_t j = 0; j < q.cols(); ++j) qi[j] /= sum;
    }
    return q;
}

std::string to_string(KdForm f) { return f == KdForm::Kl ? "kl" : "verbatim"; }

KdForm kd_form_from_string(const std::string& s) {
    if (s == "kl") return KdForm::Kl;
    if (s == "verbatim") return KdForm::Verbatim;
    throw ParamError("unknown kd form '" + s + "' (kl|verbatim)");
}

namespace {

/// KD loss against precomputed soft targets q (already class-mapped).
NodeRef distill_loss_from_targets(const Tensor& q, const NodeRef& student_logits,
                                  double tau, KdForm form) {
    require_same_shape(q, student_logits->value, "distill_loss");
    const double n = static_cast<double>(q.cols());
    const double batch = static_cast<double>(q.rows());
    const double norm = 1.0 / (n * tau * tau * batch);

    // Both forms are  (const_term - sum q * p) / (n tau^2), batch-averaged;
    // only the constant differs: sum q ln q for kl, sum q^2 for verbatim.
    double const_term = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double qi = q.data()[i];
        if (form == KdForm::Kl)
            const_term += qi > 0.0 ? qi * std::log(qi) : 0.0;
        else
            const_term += qi * qi;
    }
    NodeRef p = log_softmax_rows(student_logits, tau);
    NodeRef qp = sum_all(mul_const(p, q));
    return add_scalar(scale(qp, -norm), const_term * norm);
}

} // namespace

NodeRef distill_loss(const Tensor& teacher_logits, const NodeRef& student_logits,
                     double tau, KdForm form) {
    return distill_loss_from_targets(soft_targets(teacher_logits, tau),
                                     student_logits, tau, form);
}

NodeRef cross_entropy(const NodeRef& logits, const std::vector<int>& labels) {
    const std::size_t batch = logits->value.rows();
    const std::size_t classes = logits->value.cols();
    if (labels.size() != batch)
        throw ParamError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(batch) + " rows");
    Tensor onehot(batch, classes);
    for (std::size_t i = 0; i < batch; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            throw ParamError("cross_entropy: label " + std::to_string(labels[i]) +
                             " out of range for " + std::to_string(classes) +
                             " classes");
        onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    NodeRef p = log_softmax_rows(logits, 1.0);
    return scale(sum_all(mul_const(p, onehot)), -1.0 / static_cast<double>(batch));
}

NodeRef total_loss(const NodeRef& l_distill, const NodeRef& l_ce, double w_distill,
                   double w_ce) {
    return add(scale(l_distill, w_distill), scale(l_ce, w_ce));
}

double total_loss_value(double l_distill, double l_ce, double w_distill,
                        double w_ce) {
    return w_distill * l_distill + w_ce * l_ce;
}

// ---- optimizer --------------------------------------------------------

AdamW::AdamW(const std::vector<NodeRef>& params, AdamWConfig cfg) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
        m_.emplace_back(p->value.rows(), p->value.cols());
        v_.emplace_back(p->value.rows(), p->value.cols());
    }
}

void AdamW::step(const std::vector<NodeRef>& params) {
    if (params.size() != m_.size())
        throw ParamError("adamw: parameter set changed size");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = params[i]->value;
        const Tensor& g = params[i]->grad;
        require_same_shape(w, g, "adamw");
        double* wd = w.data();
        const double* gd = g.data();
        double* md = m_[i].data();
        double* vd = v_[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            md[j] = cfg_.beta1 * md[j] + (1.0 - cfg_.beta1) * gd[j];
            vd[j] = cfg_.beta2 * vd[j] + (1.0 - cfg_.beta2) * gd[j] * gd[j];
            const double mhat = md[j] / bc1;
            const double vhat = vd[j] / bc2;
            const double prev = wd[j];
            wd[j] = prev - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon) -
                    cfg_.lr * cfg_.weight_decay * prev;
        }
    }
}

// ---- class map ---------------------------------------------------------

ClassMap ClassMap::identity(std::size_t classes) {
    ClassMap m;
    for (std::size_t c = 0; c < classes; ++c) m.groups.push_back({c});
    return m;
}

ClassMap ClassMap::infected_vs_health() {
    ClassMap m;
    m.groups = {{0}, {1, 2}};
    return m;
}

void ClassMap::validate(std::size_t teacher_classes,
                        std::size_t student_classes) const {
    if (groups.size() != student_classes)
        throw ConfigError("class map yields " + std::to_string(groups.size()) +
                          " classes, student expects " +
                          std::to_string(student_classes));
    std::vector<bool> used(teacher_classes, false);
    for (const auto& g : groups)
        for (std::size_t j : g) {
            if (j >= teacher_classes)
                throw ConfigError("class map references teacher class " +
                                  std::to_string(j) + " of " +
                                  std::to_string(teacher_classes));
            if (used[j])
                throw ConfigError("class map uses teacher class " +
                                  std::to_string(j) + " twice");
            used[j] = true;
        }
    for (std::size_t j = 0; j < teacher_classes; ++j)
        if (!used[j])
            throw ConfigError("class map drops teacher class " + std::to_string(j));
}

Tensor ClassMap::apply(const Tensor& probs) const {
    Tensor out(probs.rows(), groups.size());
    for (std::size_t i = 0; i < probs.rows(); ++i)
        for (std::size_t c = 0; c < groups.size(); ++c) {
            double s = 0.0;
            for (std::size_t j : groups[c]) s += probs(i, j);
            out(i, c) = s;
        }
    return out;
}

void DistillConfig::validate() const {
    if (!(temperature > 0.0))
        throw ParamError("distill temperature must be > 0");
    if (w_distill < 0.0 || w_ce < 0.0)
        throw ParamError("distill loss weights must be >= 0");
}

// ---- training ----------------------------------------------------------

namespace {

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& idx) {
    Tensor out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(m.row(idx[i]), m.row(idx[i]) + m.cols(), out.row(i));
    return out;
}

double eval_ce_value(const Tensor& logits, const std::vector<int>& labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* li = logits.row(i);
        double mx = li[0];
        for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, li[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j)
            sum += std::exp(li[j] - mx);
        total -= li[static_cast<std::size_t>(labels[i])] - mx - std::log(sum);
    }
    return total / static_cast<double>(logits.rows());
}

double eval_accuracy(const Tensor& logits, const std::vector<int>& labels) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        if (static_cast<int>(best) == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

/// Macro one-vs-rest AUC (plain positive-class AUC for binary); 0 when a
/// class is absent from the validation labels.
double eval_auc(const Tensor& logits, const std::vector<int>& labels) {
    try {
        if (logits.cols() == 2) {
            return roc_auc(one_vs_rest(logits, labels, 1)).auc;
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c)
            sum += roc_auc(one_vs_rest(logits, labels, c)).auc;
        return sum / static_cast<double>(logits.cols());
    } catch (const MetricError&) {
        return 0.0;
    }
}

void check_train_set(const TrainSet& s, std::size_t num_classes,
                     bool require_all_classes) {
    if (s.features.rows() == 0) throw DataError("training set is empty");
    if (s.features.rows() != s.labels.size())
        throw DataError("feature/label count mismatch");
    std::set<int> seen;
    for (int l : s.labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
            throw DataError("label " + std::to_string(l) + " out of range for " +
                            std::to_string(num_classes) + " classes");
        seen.insert(l);
    }
    if (require_all_classes && seen.size() != num_classes)
        throw DataError("training split covers " + std::to_string(seen.size()) +
                        " of " + std::to_string(num_classes) + " classes");
}

/// Shared batch loop. `batch_loss` builds the scalar loss node for the
/// given batch indices and must not touch the RNG streams itself.
template <typename LossFn>
TrainRun run_training(const TrainSet& train, const TrainSet& val,
                      const ModelSpec& spec, const TrainHyper& hyper,
                      std::uint64_t seed, LossFn batch_loss) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng master(seed);
    Rng init_rng = master.derive("init");
    Rng shuffle_rng = master.derive("shuffle");
    Rng dropout_rng = master.derive("dropout");

    TrainRun run;
    run.seed = seed;
    run.model = build_model(spec, init_rng);
    run.model.set_mode(Mode::Train);

    AdamW opt(run.model.params(), hyper.adamw);
    std::vector<std::size_t> order(train.features.rows());
    std::iota(order.begin(), order.end(), 0);

    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += hyper.batch_size) {
            const std::size_t n = std::min(hyper.batch_size, order.size() - start);
            std::vector<std::size_t> batch(order.begin() + start,
                                           order.begin() + start + n);
            Tensor bf = gather_rows(train.features, batch);
            std::vector<int> bl(n);
            for (std::size_t i = 0; i < n; ++i) bl[i] = train.labels[batch[i]];

            run.model.zero_grads();
            NodeRef logits = run.model.forward(bf, &dropout_rng);
            NodeRef loss = batch_loss(logits, batch, bl);
            backward(loss);
            opt.step(run.model.params());
            loss_sum += loss->value(0, 0) * static_cast<double>(n);
        }

        EpochRecord rec;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        if (val.features.rows() > 0) {
            Tensor vl = run.model.logits(val.features);
            rec.val_loss = eval_ce_value(vl, val.labels);
            rec.val_acc = eval_accuracy(vl, val.labels);
            rec.val_auc = eval_auc(vl, val.labels);
            if (rec.val_loss < best_val) {
                best_val = rec.val_loss;
                run.best_epoch = epoch;
            }
        }
        run.trace.push_back(rec);
    }

    run.model.set_mode(Mode::Eval);
    run.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return run;
}

} // namespace

TrainRun train_teacher(const TrainSet& train, const TrainSet& val,
                       const ModelSpec& spec, const TrainHyper& hyper,
                       std::uint64_t seed) {
    spec.validate();
    check_train_set(train, spec.num_classes, /*require_all_classes=*/true);
    return run_training(train, val, spec, hyper, seed,
                        [](const NodeRef& logits, const std::vector<std::size_t>&,
                           const std::vector<int>& labels) {
                            return cross_entropy(logits, labels);
                        });
}

TrainRun distill_student(const ModelSpec& student_spec, const ModelInstance& teacher,
                         const TrainSet& train, const TrainSet& val,
                         const DistillConfig& cfg, const TrainHyper& hyper,
                         std::uint64_t seed) {
    student_spec.validate();
    cfg.validate();
    check_train_set(train, student_spec.num_classes, /*require_all_classes=*/true);
    if (teacher.mode() != Mode::Eval)
        throw ParamError("distill_student: teacher must be in eval mode");
    if (teacher.spec().num_features != student_spec.num_features)
        throw ConfigError("teacher consumes " +
                          std::to_string(teacher.spec().num_features) +
                          " features, student " +
                          std::to_string(student_spec.num_features));

    ClassMap map = cfg.class_map;
    if (map.groups.empty()) {
        if (teacher.spec().num_classes == student_spec.num_classes)
            map = ClassMap::identity(student_spec.num_classes);
        else if (teacher.spec().num_classes == 3 && student_spec.num_classes == 2)
            map = ClassMap::infected_vs_health();
        else
            throw ConfigError("no class map for teacher " +
                              std::to_string(teacher.spec().num_classes) +
                              " -> student " +
                              std::to_string(student_spec.num_classes));
    }
    map.validate(teacher.spec().num_classes, student_spec.num_classes);

    // The teacher is frozen, so its soft targets are computed once.
    Tensor teacher_logits = teacher.logits(train.features);
    Tensor targets = map.apply(soft_targets(teacher_logits, cfg.temperature));

    return run_training(
        train, val, student_spec, hyper, seed,
        [&](const NodeRef& logits, const std::vector<std::size_t>& batch,
            const std::vector<int>& labels) {
            Tensor q = gather_rows(targets, batch);
            NodeRef kd = distill_loss_from_targets(q, logits, cfg.temperature,
                                                   cfg.kd_form);
            NodeRef ce = cross_entropy(logits, labels);
            return total_loss(kd, ce, cfg.w_distill, cfg.w_ce);
        });
}

} // namespace tsgps
