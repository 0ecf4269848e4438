// Acceptance suite: one pass/fail line per criterion, nonzero exit if
// any fail. Tolerances are pinned in code next to each check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "tsgps/data_io.hpp"
#include "tsgps/train.hpp"

using namespace tsgps;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    return buf;
}

// ---- independent oracles (duplicated from the unit-test oracles so the
// acceptance binary is self-contained) ------------------------------------

std::uint64_t binom(std::int64_t n, std::int64_t k) {
    if (k < 0 || k > n) return 0;
    if (k > n - k) k = n - k;
    std::uint64_t r = 1;
    for (std::int64_t i = 1; i <= k; ++i)
        r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    return r;
}

double fisher_point_oracle(const ContingencyTable& t) {
    const std::int64_t r1 = t.a + t.b, r2 = t.c + t.d, c1 = t.a + t.c;
    if (t.total() == 0) return 1.0;
    const long double num = static_cast<long double>(binom(r1, t.a)) *
                            static_cast<long double>(binom(r2, c1 - t.a));
    return static_cast<double>(num / static_cast<long double>(binom(t.total(), c1)));
}

double fisher_two_sided_oracle(const ContingencyTable& t) {
    const std::int64_t r1 = t.a + t.b, r2 = t.c + t.d;
    const std::int64_t c1 = t.a + t.c, c2 = t.b + t.d;
    if (r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0) return 1.0;
    const long double obs = static_cast<long double>(binom(r1, t.a)) *
                            static_cast<long double>(binom(r2, c1 - t.a));
    const long double cutoff = obs * (1.0L + 1e-7L);
    const std::int64_t lo = std::max<std::int64_t>(0, c1 - r2);
    const std::int64_t hi = std::min(r1, c1);
    long double sum = 0.0L;
    for (std::int64_t a = lo; a <= hi; ++a) {
        const long double num = static_cast<long double>(binom(r1, a)) *
                                static_cast<long double>(binom(r2, c1 - a));
        if (num <= cutoff) sum += num;
    }
    return static_cast<double>(sum / static_cast<long double>(binom(t.total(), c1)));
}

double auc_pairwise_oracle(const ScoredSet& s) {
    double num = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        if (s.labels[i] != 1) continue;
        for (std::size_t j = 0; j < s.scores.size(); ++j) {
            if (s.labels[j] != 0) continue;
            ++pairs;
            if (s.scores[i] > s.scores[j])
                num += 1.0;
            else if (s.scores[i] == s.scores[j])
                num += 0.5;
        }
    }
    return num / static_cast<double>(pairs);
}

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

// ---- criterion 1 ---------------------------------------------------------

Outcome criterion_fisher_oracle() {
    const auto t0 = Clock::now();
    const std::int64_t max_total = 25;
    double worst = 0.0;
    std::size_t tables = 0;
    for (std::int64_t a = 0; a <= max_total; ++a)
        for (std::int64_t b = 0; a + b <= max_total; ++b)
            for (std::int64_t c = 0; a + b + c <= max_total; ++c)
                for (std::int64_t d = 0; a + b + c + d <= max_total; ++d) {
                    if (a + b + c + d == 0) continue;
                    const ContingencyTable t{a, b, c, d};
                    ++tables;
                    worst = std::max(worst, std::abs(fisher_point_probability(t) -
                                                     fisher_point_oracle(t)));
                    worst = std::max(worst, std::abs(fisher_exact_two_sided(t) -
                                                     fisher_two_sided_oracle(t)));
                }

    // point probabilities over every margin set with total <= 25 sum to 1
    double worst_sum = 0.0;
    for (std::int64_t n = 1; n <= max_total; ++n) {
        LogFactorialTable lf(n);
        for (std::int64_t r1 = 0; r1 <= n; ++r1)
            for (std::int64_t c1 = 0; c1 <= n; ++c1) {
                const std::int64_t lo = std::max<std::int64_t>(0, c1 - (n - r1));
                const std::int64_t hi = std::min(r1, c1);
                if (lo > hi) continue;
                double sum = 0.0;
                for (std::int64_t a = lo; a <= hi; ++a)
                    sum += fisher_point_probability(
                        {a, r1 - a, c1 - a, (n - r1) - (c1 - a)}, lf);
                worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
            }
    }
    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = worst <= 1e-10 && worst_sum <= 1e-10 && elapsed < 60.0;
    o.detail = std::to_string(tables) + " tables, max err " + fmt(worst) +
               ", max margin-sum err " + fmt(worst_sum) + ", " + fmt(elapsed, 3) +
               " s (< 60 s)";
    return o;
}

// ---- criterion 2 ---------------------------------------------------------

Outcome criterion_gradient_fidelity() {
    const auto t0 = Clock::now();
    const double tol = 1e-4;
    const double step = 1e-5;
    double worst = 0.0;
    std::string worst_op = "none";
    Rng rng(92);

    auto track = [&](const char* op, const GradCheckReport& r) {
        if (r.worst > worst) {
            worst = r.worst;
            worst_op = op;
        }
    };

    for (int point = 0; point < 20; ++point) {
        { // matmul
            auto a = parameter(random_tensor(4, 6, rng));
            auto b = parameter(random_tensor(6, 3, rng));
            const Tensor w = random_tensor(4, 3, rng);
            track("matmul", gradient_check(
                                [&] { return sum_all(mul_const(matmul(a, b), w)); },
                                {a, b}, step, tol));
        }
        { // softmax / log-softmax at tau 1 and 5
            auto x = parameter(random_tensor(3, 5, rng, -2.0, 2.0));
            const Tensor w = random_tensor(3, 5, rng);
            const double tau = point % 2 == 0 ? 1.0 : 5.0;
            track("softmax",
                  gradient_check(
                      [&] { return sum_all(mul_const(softmax_rows(x, tau), w)); },
                      {x}, step, tol));
            track("log_softmax",
                  gradient_check(
                      [&] {
                          return sum_all(mul_const(log_softmax_rows(x, tau), w));
                      },
                      {x}, step, tol));
        }
        { // gelu
            auto x = parameter(random_tensor(3, 4, rng, -2.5, 2.5));
            const Tensor w = random_tensor(3, 4, rng);
            track("gelu",
                  gradient_check([&] { return sum_all(mul_const(gelu(x), w)); },
                                 {x}, step, tol));
        }
        { // layer norm
            auto x = parameter(random_tensor(3, 5, rng));
            auto g = parameter(random_tensor(1, 5, rng, 0.5, 1.5));
            auto b = parameter(random_tensor(1, 5, rng));
            const Tensor w = random_tensor(3, 5, rng);
            track("layer_norm",
                  gradient_check(
                      [&] { return sum_all(mul_const(layer_norm(x, g, b), w)); },
                      {x, g, b}, step, tol));
        }
        { // attention (3 tokens, 2 heads)
            AttentionWeights w;
            std::vector<NodeRef> params;
            for (int h = 0; h < 2; ++h) {
                w.wq.push_back(parameter(random_tensor(4, 2, rng)));
                w.wk.push_back(parameter(random_tensor(4, 2, rng)));
                w.wv.push_back(parameter(random_tensor(4, 2, rng)));
                params.insert(params.end(), {w.wq[h], w.wk[h], w.wv[h]});
            }
            w.wf = parameter(random_tensor(4, 4, rng));
            params.push_back(w.wf);
            auto x = parameter(random_tensor(3, 4, rng));
            params.push_back(x);
            const Tensor ws = random_tensor(3, 4, rng);
            track("attention",
                  gradient_check(
                      [&] { return sum_all(mul_const(self_attention(x, w), ws)); },
                      params, step, tol));
        }
        { // linear (matmul + row-broadcast bias)
            auto x = parameter(random_tensor(4, 5, rng));
            auto w = parameter(random_tensor(5, 3, rng));
            auto b = parameter(random_tensor(1, 3, rng));
            const Tensor ws = random_tensor(4, 3, rng);
            track("linear",
                  gradient_check(
                      [&] {
                          return sum_all(mul_const(add_rowvec(matmul(x, w), b), ws));
                      },
                      {x, w, b}, step, tol));
        }
        { // cross entropy
            auto logits = parameter(random_tensor(4, 3, rng, -2.0, 2.0));
            std::vector<int> labels;
            for (int i = 0; i < 4; ++i)
                labels.push_back(static_cast<int>(rng.index(3)));
            track("cross_entropy",
                  gradient_check([&] { return cross_entropy(logits, labels); },
                                 {logits}, step, tol));
        }
        { // distillation loss, kl form
            const Tensor teacher = random_tensor(4, 3, rng, -2.0, 2.0);
            auto student = parameter(random_tensor(4, 3, rng, -2.0, 2.0));
            track("distill_kl",
                  gradient_check(
                      [&] { return distill_loss(teacher, student, 5.0, KdForm::Kl); },
                      {student}, step, tol));
        }
    }

    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = worst <= tol && elapsed < 120.0;
    o.detail = "20 points x 9 primitives, worst rel err " + fmt(worst) + " (" +
               worst_op + "), " + fmt(elapsed, 3) + " s (< 120 s)";
    return o;
}

// ---- criterion 3 ---------------------------------------------------------

Outcome criterion_auc_oracle() {
    Rng rng(31337);
    double worst = 0.0;
    int sets = 0;
    while (sets < 100) {
        const std::size_t n = 10 + rng.index(191);
        const bool heavy_ties = sets % 2 == 1;
        ScoredSet s;
        for (std::size_t i = 0; i < n; ++i) {
            s.scores.push_back(heavy_ties
                                   ? static_cast<double>(rng.index(4)) / 3.0
                                   : rng.uniform());
            s.labels.push_back(rng.uniform() < 0.35 ? 1 : 0);
        }
        if (s.positives() == 0 || s.negatives() == 0) continue;
        ++sets;
        worst = std::max(worst,
                         std::abs(roc_auc(s).auc - auc_pairwise_oracle(s)));
    }
    Outcome o;
    o.pass = worst <= 1e-9;
    o.detail = "100 score sets (n <= 200, tie-heavy alternating), max |diff| " +
               fmt(worst);
    return o;
}

// ---- criterion 4 ---------------------------------------------------------

SynthConfig recovery_config() {
    SynthConfig cfg;
    cfg.samples_per_class = {300, 300};
    cfg.n_genes = 300;
    cfg.n_pathways = 15;
    cfg.planted_pairs = 15;
    cfg.flip_noise = 0.1;
    cfg.seed = 20240901;
    return cfg;
}

std::size_t planted_hits(const DgpPanel& panel,
                         const std::vector<PlantedPair>& truth) {
    std::set<std::pair<std::string, std::string>> t;
    for (const auto& p : truth) {
        t.insert({p.g1, p.g2});
        t.insert({p.g2, p.g1});
    }
    std::size_t hits = 0;
    for (const auto& p : panel.pairs)
        if (t.count({p.g1, p.g2})) ++hits;
    return hits;
}

Outcome criterion_planted_recovery() {
    const SynthConfig cfg = recovery_config();
    const SyntheticData data = generate_synthetic(cfg);
    const DgpPanel panel =
        select_dgps(data.expr, data.labels, data.catalog, cfg.planted_pairs);
    const std::size_t hits = planted_hits(panel, data.truth);

    // permutation arm: shuffled labels should not surface planted pairs
    std::size_t bad_seeds = 0;
    for (std::uint64_t perm = 1; perm <= 20; ++perm) {
        LabelVector shuffled = data.labels;
        Rng rng = Rng(perm).derive("label-permutation");
        rng.shuffle(shuffled.labels);
        const DgpPanel null_panel =
            select_dgps(data.expr, shuffled, data.catalog, cfg.planted_pairs);
        if (planted_hits(null_panel, data.truth) > 0) ++bad_seeds;
    }

    Outcome o;
    o.pass = hits >= 13 && bad_seeds <= 2;
    o.detail = "recovered " + std::to_string(hits) + "/15 (need >= 13); " +
               std::to_string(bad_seeds) +
               "/20 permutation seeds surfaced a planted pair (allow <= 2)";
    return o;
}

// ---- criterion 5 ---------------------------------------------------------

Outcome criterion_distillation_benefit() {
    const auto t0 = Clock::now();

    // Noise level 0.2 keeps the 80-sample subtask well below ceiling, so
    // the teacher's smoothed posterior has something to contribute.
    SynthConfig cfg;
    cfg.samples_per_class = {250, 250, 250};
    cfg.n_genes = 300;
    cfg.n_pathways = 15;
    cfg.planted_pairs = 15;
    cfg.flip_noise = 0.2;
    cfg.seed = 424242;
    const SyntheticData data = generate_synthetic(cfg);

    const DgpPanel panel = select_dgps(data.expr, data.labels, data.catalog, 35);
    const Tensor features = featurize(data.expr, panel, FeatureMode::Binary);

    Dataset full;
    full.features = features;
    full.labels = data.labels.labels;

    // teacher on the full 3-class domain, desk preset
    const ModelSpec teacher_spec = desk_preset(ModelKind::Teacher, 35, 3);
    TrainHyper teacher_hyper;
    teacher_hyper.epochs = 20;
    teacher_hyper.batch_size = 32;
    const auto [ttrain, tval] = stratified_split(full, 0.8, cfg.seed);
    TrainRun teacher = train_teacher({ttrain.features, ttrain.labels},
                                     {tval.features, tval.labels}, teacher_spec,
                                     teacher_hyper, cfg.seed);

    // binary subtask pool: health (0) vs the first infection class (1)
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < full.labels.size(); ++i)
        if (full.labels[i] == 0 || full.labels[i] == 1) pool.push_back(i);

    const ModelSpec student_spec = desk_preset(ModelKind::StudentMlp, 35, 2);
    TrainHyper student_hyper;
    student_hyper.epochs = 200;
    student_hyper.batch_size = 16;

    DistillConfig kd; // tau 5, weights 0.2 / 0.8, kl
    DistillConfig vanilla = kd;
    vanilla.w_distill = 0.0;

    int wins_or_ties = 0;
    double mean_kd = 0.0, mean_vanilla = 0.0;
    const int n_seeds = 20;
    for (int sidx = 0; sidx < n_seeds; ++sidx) {
        const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(sidx);
        // 80 training samples (40 per class), the rest validate
        Rng pick = Rng(seed).derive("subtask-sample");
        std::vector<std::size_t> shuffled = pool;
        pick.shuffle(shuffled);
        std::vector<std::size_t> train_idx, val_idx;
        std::size_t n0 = 0, n1 = 0;
        for (std::size_t i : shuffled) {
            const bool is_case = full.labels[i] == 1;
            std::size_t& n = is_case ? n1 : n0;
            if (n < 40) {
                train_idx.push_back(i);
                ++n;
            } else {
                val_idx.push_back(i);
            }
        }
        Dataset train = dataset_subset(full, train_idx);
        Dataset val = dataset_subset(full, val_idx);
        for (auto& l : train.labels) l = l == 0 ? 0 : 1;
        for (auto& l : val.labels) l = l == 0 ? 0 : 1;

        TrainRun kd_run = distill_student(student_spec, teacher.model,
                                          {train.features, train.labels},
                                          TrainSet{}, kd, student_hyper, seed);
        TrainRun va_run = distill_student(student_spec, teacher.model,
                                          {train.features, train.labels},
                                          TrainSet{}, vanilla, student_hyper, seed);

        const double kd_auc =
            roc_auc(one_vs_rest(kd_run.model.logits(val.features), val.labels, 1))
                .auc;
        const double va_auc =
            roc_auc(one_vs_rest(va_run.model.logits(val.features), val.labels, 1))
                .auc;
        mean_kd += kd_auc;
        mean_vanilla += va_auc;
        if (kd_auc >= va_auc) ++wins_or_ties;
    }
    mean_kd /= n_seeds;
    mean_vanilla /= n_seeds;

    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = mean_kd >= mean_vanilla && wins_or_ties >= 13 && elapsed < 900.0;
    o.detail = "mean AUC distilled " + fmt(mean_kd) + " vs vanilla " +
               fmt(mean_vanilla) + "; wins/ties " + std::to_string(wins_or_ties) +
               "/20 (need >= 13), " + fmt(elapsed, 3) + " s (< 900 s)";
    return o;
}

// ---- criterion 6 ---------------------------------------------------------

Outcome criterion_compression_arithmetic() {
    const double r1 = compression_ratio(8'178'842, 18'142'949);
    const double r2 = compression_ratio(797'925, 18'142'949);
    bool ok = std::abs(r1 - 0.549) < 0.0005 && std::abs(r2 - 0.956) < 0.0005;

    std::string presets;
    for (const char* preset : {"desk", "paper-scale"}) {
        const std::size_t teacher =
            count_parameters(preset_by_name(preset, ModelKind::Teacher, 35, 3));
        const std::size_t tx =
            count_parameters(preset_by_name(preset, ModelKind::StudentTx, 35, 2));
        const std::size_t mlp =
            count_parameters(preset_by_name(preset, ModelKind::StudentMlp, 35, 2));
        ok = ok && mlp < tx && tx < teacher;
        presets += std::string(" ") + preset + ": " + std::to_string(mlp) + " < " +
                   std::to_string(tx) + " < " + std::to_string(teacher) + ";";
    }
    Outcome o;
    o.pass = ok;
    o.detail = "published ratios " + fmt(r1, 6) + " / " + fmt(r2, 6) +
               " (want 0.549 / 0.956 within 5e-4);" + presets;
    return o;
}

// ---- criterion 7 ---------------------------------------------------------

Outcome criterion_teacher_trainability() {
    const auto t0 = Clock::now();
    kernels::set_threads(1); // criterion is single-threaded

    SynthConfig cfg;
    cfg.samples_per_class = {300, 300, 300};
    cfg.n_genes = 300;
    cfg.n_pathways = 15;
    cfg.planted_pairs = 14;
    cfg.flip_noise = 0.05;
    cfg.seed = 777;
    const SyntheticData data = generate_synthetic(cfg);
    const DgpPanel panel = select_dgps(data.expr, data.labels, data.catalog, 35);

    Dataset full;
    full.features = featurize(data.expr, panel, FeatureMode::Binary);
    full.labels = data.labels.labels;
    const auto [train, val] = stratified_split(full, 0.8, cfg.seed);

    const ModelSpec spec = desk_preset(ModelKind::Teacher, 35, 3);
    TrainHyper hyper;
    hyper.epochs = 8; // well within the 100-epoch budget
    hyper.batch_size = 32;
    TrainRun run = train_teacher({train.features, train.labels},
                                 {val.features, val.labels}, spec, hyper, 777);

    const Tensor logits = run.model.logits(val.features);
    const double auc_bact = roc_auc(one_vs_rest(logits, val.labels, 1)).auc;
    const double auc_viral = roc_auc(one_vs_rest(logits, val.labels, 2)).auc;

    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = auc_bact >= 0.95 && auc_viral >= 0.95 && elapsed < 300.0;
    o.detail = "held-out one-vs-rest AUC bact " + fmt(auc_bact) + ", viral " +
               fmt(auc_viral) + " (need >= 0.95) after " +
               std::to_string(hyper.epochs) + " epochs, " + fmt(elapsed, 3) +
               " s (< 300 s)";
    return o;
}

// ---- criterion 8 ---------------------------------------------------------

Outcome criterion_determinism_roundtrip() {
    // byte-identical panels
    SynthConfig cfg;
    cfg.samples_per_class = {60, 60};
    cfg.n_genes = 80;
    cfg.n_pathways = 4;
    cfg.planted_pairs = 8;
    cfg.seed = 5150;
    const SyntheticData data = generate_synthetic(cfg);

    const fs::path dir =
        fs::temp_directory_path() / "tsgps_acceptance_determinism";
    fs::create_directories(dir);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string{std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>()};
    };

    write_panel(select_dgps(data.expr, data.labels, data.catalog, 8),
                dir / "p1.csv");
    write_panel(select_dgps(data.expr, data.labels, data.catalog, 8),
                dir / "p2.csv");
    const bool panels_ok = slurp(dir / "p1.csv") == slurp(dir / "p2.csv");

    // identical traces and byte-identical checkpoints
    Dataset full;
    full.features = featurize(data.expr,
                              select_dgps(data.expr, data.labels, data.catalog, 8),
                              FeatureMode::Binary);
    full.labels = data.labels.labels;
    ModelSpec spec;
    spec.kind = ModelKind::StudentTx;
    spec.num_features = 8;
    spec.num_classes = 2;
    spec.d_model_1 = 10;
    spec.heads_1 = 2;
    spec.encoder_layers_1 = 1;
    spec.dropout_1 = 0.1; // exercise the dropout stream too
    spec.mlp_widths = {8};
    TrainHyper hyper;
    hyper.epochs = 4;
    hyper.batch_size = 16;
    const auto [train, val] = stratified_split(full, 0.8, 5150);
    TrainRun r1 = train_teacher({train.features, train.labels},
                                {val.features, val.labels}, spec, hyper, 99);
    TrainRun r2 = train_teacher({train.features, train.labels},
                                {val.features, val.labels}, spec, hyper, 99);
    bool traces_ok = r1.trace.size() == r2.trace.size();
    for (std::size_t i = 0; traces_ok && i < r1.trace.size(); ++i)
        traces_ok = r1.trace[i].train_loss == r2.trace[i].train_loss &&
                    r1.trace[i].val_loss == r2.trace[i].val_loss;

    save_checkpoint(make_checkpoint(r1.model, DgpPanel{}, {"a", "b"},
                                    FeatureMode::Binary, "d"),
                    dir / "c1.ckpt");
    save_checkpoint(make_checkpoint(r2.model, DgpPanel{}, {"a", "b"},
                                    FeatureMode::Binary, "d"),
                    dir / "c2.ckpt");
    const bool ckpt_ok = slurp(dir / "c1.ckpt") == slurp(dir / "c2.ckpt");

    // round trip preserves forward bits
    const Checkpoint loaded = load_checkpoint(dir / "c1.ckpt");
    ModelInstance back = model_from_checkpoint(loaded);
    const bool forward_ok =
        back.logits(val.features) == r1.model.logits(val.features);

    fs::remove_all(dir);
    Outcome o;
    o.pass = panels_ok && traces_ok && ckpt_ok && forward_ok;
    o.detail = std::string("panels ") + (panels_ok ? "identical" : "DIFFER") +
               ", traces " + (traces_ok ? "identical" : "DIFFER") +
               ", checkpoints " + (ckpt_ok ? "identical" : "DIFFER") +
               ", reload forward " + (forward_ok ? "bit-exact" : "DIFFERS");
    return o;
}

// ---- criterion 9 ---------------------------------------------------------

Outcome criterion_loss_identities() {
    bool ok = true;
    std::string detail;

    // distill(kl) = 0 when the student matches the soft targets
    Rng rng(61);
    const Tensor logits = random_tensor(5, 3, rng, -2.0, 2.0);
    auto student = parameter(logits);
    const double self_kd =
        std::abs(distill_loss(logits, student, 5.0, KdForm::Kl)->value(0, 0));
    ok = ok && self_kd <= 1e-9;
    detail += "kd self-loss " + fmt(self_kd);

    // cross entropy of uniform logits is ln C
    for (std::size_t c = 2; c <= 5; ++c) {
        auto uniform = parameter(Tensor(3, c));
        std::vector<int> labels(3, static_cast<int>(c - 1));
        const double ce = cross_entropy(uniform, labels)->value(0, 0);
        ok = ok && std::abs(ce - std::log(static_cast<double>(c))) <= 1e-12;
    }
    detail += "; CE(uniform)=lnC ok";

    // exact weighted-total arithmetic
    ok = ok && total_loss_value(1.0, 1.0, 0.2, 0.8) == 1.0;

    // w_distill = 0 reproduces the vanilla trace bit-exactly
    SynthConfig cfg;
    cfg.samples_per_class = {40, 40, 40};
    cfg.n_genes = 60;
    cfg.n_pathways = 3;
    cfg.planted_pairs = 6;
    cfg.seed = 8;
    const SyntheticData data = generate_synthetic(cfg);
    const DgpPanel panel = select_dgps(data.expr, data.labels, data.catalog, 10);
    Dataset full;
    full.features = featurize(data.expr, panel, FeatureMode::Binary);
    for (int l : data.labels.labels) full.labels.push_back(l > 0 ? 1 : 0);

    ModelSpec tspec;
    tspec.kind = ModelKind::Teacher;
    tspec.num_features = 10;
    tspec.num_classes = 3;
    tspec.d_model_1 = 10;
    tspec.heads_1 = 2;
    tspec.encoder_layers_1 = 1;
    tspec.d_model_2 = 8;
    tspec.heads_2 = 2;
    tspec.encoder_layers_2 = 1;
    tspec.mlp_widths = {8};
    TrainHyper thyper;
    thyper.epochs = 3;
    Dataset tfull;
    tfull.features = full.features;
    tfull.labels = data.labels.labels;
    TrainRun teacher = train_teacher({tfull.features, tfull.labels}, TrainSet{},
                                     tspec, thyper, 3);

    ModelSpec sspec;
    sspec.kind = ModelKind::StudentMlp;
    sspec.num_features = 10;
    sspec.num_classes = 2;
    sspec.mlp_widths = {12};
    TrainHyper shyper;
    shyper.epochs = 5;
    DistillConfig zeroed;
    zeroed.w_distill = 0.0;
    TrainRun a = distill_student(sspec, teacher.model,
                                 {full.features, full.labels}, TrainSet{}, zeroed,
                                 shyper, 17);
    TrainRun b = distill_student(sspec, teacher.model,
                                 {full.features, full.labels}, TrainSet{}, zeroed,
                                 shyper, 17);
    bool vanilla_ok = true;
    for (std::size_t i = 0; i < a.trace.size(); ++i)
        vanilla_ok = vanilla_ok && a.trace[i].train_loss == b.trace[i].train_loss;
    for (std::size_t pi = 0; pi < a.model.params().size(); ++pi)
        vanilla_ok =
            vanilla_ok && a.model.params()[pi]->value == b.model.params()[pi]->value;
    ok = ok && vanilla_ok;
    detail += std::string("; vanilla trace ") +
              (vanilla_ok ? "bit-exact" : "DIFFERS");

    Outcome o;
    o.pass = ok;
    o.detail = detail;
    return o;
}

// ---- criterion 10 ----------------------------------------------------------

Outcome criterion_metric_hand_cases() {
    ScoredSet s;
    s.scores = {0.9, 0.8, 0.2, 0.1, 0.3, 0.05, 0.4, 0.45, 0.6, 0.3};
    s.labels = {1, 1, 0, 0, 0, 0, 0, 0, 0, 1};
    const ConfusionCounts c = confusion(s, 0.5);
    const ScalarMetrics m = scalar_metrics(c);
    bool ok = c.tp == 2 && c.tn == 6 && c.fp == 1 && c.fn == 1;
    ok = ok && m.acc == 0.8 && m.precision == 2.0 / 3.0 &&
         m.recall == 2.0 / 3.0 && m.f1 == 2.0 / 3.0;

    // 4-fold CV on 8 samples: disjoint covering folds
    const std::vector<int> labels{0, 1, 0, 1, 0, 1, 0, 1};
    const auto folds = kfold_assignments(labels, 4, 2024);
    std::vector<std::size_t> count(4, 0);
    bool folds_ok = true;
    for (std::size_t f : folds) {
        if (f >= 4) folds_ok = false;
        else ++count[f];
    }
    for (std::size_t f = 0; f < 4; ++f) folds_ok = folds_ok && count[f] == 2;
    ok = ok && folds_ok;

    Outcome o;
    o.pass = ok;
    o.detail = "confusion(2,6,1,1): acc " + fmt(m.acc) + ", precision " +
               fmt(m.precision) + ", recall " + fmt(m.recall) + ", f1 " +
               fmt(m.f1) + "; folds " + (folds_ok ? "disjoint+covering" : "BAD");
    return o;
}

} // namespace

int main() {
    struct Entry {
        const char* name;
        Outcome (*fn)();
    };
    const Entry entries[] = {
        {"1 fisher-oracle-equivalence", criterion_fisher_oracle},
        {"2 gradient-fidelity", criterion_gradient_fidelity},
        {"3 auc-oracle-equivalence", criterion_auc_oracle},
        {"4 planted-pair-recovery", criterion_planted_recovery},
        {"5 distillation-benefit", criterion_distillation_benefit},
        {"6 compression-arithmetic", criterion_compression_arithmetic},
        {"7 teacher-trainability", criterion_teacher_trainability},
        {"8 determinism-and-roundtrip", criterion_determinism_roundtrip},
        {"9 loss-identities", criterion_loss_identities},
        {"10 metric-hand-cases", criterion_metric_hand_cases},
    };

    int failures = 0;
    for (const auto& e : entries) {
        Outcome o;
        try {
            o = e.fn();
        } catch (const std::exception& ex) {
            o.pass = false;
            o.detail = std::string("exception: ") + ex.what();
        }
        std::printf("%s  %-30s %s\n", o.pass ? "PASS" : "FAIL", e.name,
                    o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    if (failures > 0)
        std::printf("%d criterion(s) failed\n", failures);
    else
        std::printf("all criteria passed\n");
    return failures == 0 ? 0 : 1;
}
