// tsgps: gene-pair screening, teacher training, knowledge distillation
// and evaluation over expression matrices, driven by one top-level seed.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsgps/data_io.hpp"
#include "tsgps/train.hpp"

using namespace tsgps;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

struct GlobalOpts {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::string preset = "desk";
    int parallel = 1;
};

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

fs::path ensure_out_dir(const GlobalOpts& g) {
    fs::create_directories(g.out_dir);
    return g.out_dir;
}

void echo_config(CLI::App& app, const fs::path& out_dir) {
    std::ofstream out(out_dir / "resolved_config.cfg", std::ios::binary);
    out << app.config_to_str(true, true);
}

std::vector<std::string> default_class_names(std::size_t classes) {
    if (classes == 2) return {"health", "infected"};
    if (classes == 3) return {"health", "bacterial", "viral"};
    std::vector<std::string> names;
    for (std::size_t c = 0; c < classes; ++c)
        names.push_back("class" + std::to_string(c));
    return names;
}

std::size_t class_count(const std::vector<int>& labels) {
    int mx = 0;
    for (int l : labels) {
        if (l < 0) throw DataError("negative class label " + std::to_string(l));
        mx = std::max(mx, l);
    }
    return static_cast<std::size_t>(mx) + 1;
}

Dataset load_dataset(const fs::path& expr_path, const fs::path& labels_path,
                     const DgpPanel& panel, FeatureMode mode) {
    const ExpressionMatrix expr = read_expression(expr_path);
    const LabelVector labels = read_labels(labels_path);
    labels.require_aligned(expr);
    Dataset d;
    d.features = featurize(expr, panel, mode);
    d.labels = labels.labels;
    d.sample_ids = labels.sample_ids;
    d.class_names = default_class_names(class_count(labels.labels));
    return d;
}

TrainSet to_train_set(const Dataset& d) { return {d.features, d.labels}; }

json hyper_to_json(const TrainHyper& h) {
    return json{{"epochs", h.epochs},
                {"batch_size", h.batch_size},
                {"lr", h.adamw.lr},
                {"beta1", h.adamw.beta1},
                {"beta2", h.adamw.beta2},
                {"epsilon", h.adamw.epsilon},
                {"weight_decay", h.adamw.weight_decay}};
}

json trace_to_json(const TrainRun& run) {
    json arr = json::array();
    for (const auto& e : run.trace)
        arr.push_back({{"train_loss", e.train_loss},
                       {"val_loss", e.val_loss},
                       {"val_acc", e.val_acc},
                       {"val_auc", e.val_auc}});
    return arr;
}

/// Manifest digest covers everything except the volatile timing fields.
std::string manifest_digest(json manifest) {
    manifest.erase("created_at");
    manifest.erase("wall_seconds");
    return sha256_hex(manifest.dump());
}

void write_eval_outputs(const EvalReport& report, const fs::path& out_dir,
                        const std::string& stem, bool curves) {
    write_json(report_to_json(report, curves), out_dir / (stem + ".json"));
    if (curves) {
        if (!report.roc_curve.empty())
            write_roc_csv(report.roc_curve, out_dir / (stem + "_roc.csv"));
        if (!report.pr_curve.empty())
            write_pr_csv(report.pr_curve, out_dir / (stem + "_pr.csv"));
        for (std::size_t c = 0; c < report.per_class.size(); ++c) {
            const std::string cname = report.class_names.size() > c
                                          ? report.class_names[c]
                                          : "class" + std::to_string(c);
            write_roc_csv(report.per_class[c].roc_curve,
                          out_dir / (stem + "_roc_" + cname + ".csv"));
            write_pr_csv(report.per_class[c].pr_curve,
                         out_dir / (stem + "_pr_" + cname + ".csv"));
        }
    }
}

// ---- subcommand payloads ------------------------------------------------

struct SynthOpts {
    std::vector<std::size_t> samples_per_class = {300, 300};
    std::size_t genes = 300;
    std::size_t pathways = 15;
    std::size_t planted = 15;
    double flip_noise = 0.1;
};

int run_synth(const GlobalOpts& g, const SynthOpts& o) {
    SynthConfig cfg;
    cfg.samples_per_class = o.samples_per_class;
    cfg.n_genes = o.genes;
    cfg.n_pathways = o.pathways;
    cfg.planted_pairs = o.planted;
    cfg.flip_noise = o.flip_noise;
    cfg.seed = g.seed;

    const SyntheticData data = generate_synthetic(cfg);
    const fs::path out = ensure_out_dir(g);
    write_expression(data.expr, out / "expression.csv");
    write_labels(data.labels, out / "labels.csv");
    write_gmt(data.catalog, out / "pathways.gmt");

    json truth = json::array();
    for (const auto& t : data.truth)
        truth.push_back(
            {{"g1", t.g1}, {"g2", t.g2}, {"active_class", t.active_class}});
    write_json(json{{"seed", cfg.seed}, {"planted_pairs", truth}},
               out / "truth.json");

    std::cout << "synth: " << data.expr.n_genes() << " genes x "
              << data.expr.n_samples() << " samples, " << data.truth.size()
              << " planted pairs -> " << out.string() << "\n";
    return kExitOk;
}

struct ScreenOpts {
    std::string expression, labels, gmt;
    std::size_t k = 35;
};

int run_screen(const GlobalOpts& g, const ScreenOpts& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const ExpressionMatrix expr = read_expression(o.expression);
    const LabelVector labels = read_labels(o.labels);
    const PathwayCatalog catalog = read_gmt(o.gmt);

    ScreenReport report;
    const DgpPanel panel = select_dgps(expr, labels, catalog, o.k, &report);

    const fs::path out = ensure_out_dir(g);
    write_panel(panel, out / "panel.csv");
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_json(json{{"candidates", report.candidates},
                    {"degenerate_tables", report.degenerate_tables},
                    {"samples", report.samples},
                    {"genes", report.genes},
                    {"pathways", report.pathways},
                    {"k", o.k},
                    {"elapsed_seconds", elapsed}},
               out / "screen_report.json");

    std::cout << "screen: " << report.candidates << " candidates, kept " << o.k
              << " (top p=" << panel.pairs.front().p_value << ") -> "
              << (out / "panel.csv").string() << "\n";
    return kExitOk;
}

struct SpecOpts {
    // 0 = keep the preset's value
    std::size_t d_model_1 = 0, heads_1 = 0, layers_1 = 0;
    std::size_t d_model_2 = 0, heads_2 = 0, layers_2 = 0;
    double dropout_1 = -1.0;
    std::vector<std::size_t> mlp_widths;

    void apply(ModelSpec& spec) const {
        if (d_model_1) spec.d_model_1 = d_model_1;
        if (heads_1) spec.heads_1 = heads_1;
        if (layers_1) spec.encoder_layers_1 = layers_1;
        if (d_model_2) spec.d_model_2 = d_model_2;
        if (heads_2) spec.heads_2 = heads_2;
        if (layers_2) spec.encoder_layers_2 = layers_2;
        if (dropout_1 >= 0.0) spec.dropout_1 = dropout_1;
        if (!mlp_widths.empty()) spec.mlp_widths = mlp_widths;
        spec.validate();
    }

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--d-model-1", d_model_1, "Block-1 width override");
        cmd->add_option("--heads-1", heads_1, "Block-1 head count override");
        cmd->add_option("--layers-1", layers_1, "Block-1 encoder layers override");
        cmd->add_option("--dropout-1", dropout_1, "Block-1 dropout override");
        cmd->add_option("--d-model-2", d_model_2, "Block-2 width override");
        cmd->add_option("--heads-2", heads_2, "Block-2 head count override");
        cmd->add_option("--layers-2", layers_2, "Block-2 encoder layers override");
        cmd->add_option("--mlp-widths", mlp_widths, "Head widths override")
            ->delimiter(',');
    }
};

struct TrainTeacherOpts {
    std::string expression, labels, panel;
    std::string feature_mode = "binary";
    double train_fraction = 0.8;
    TrainHyper hyper{100, 32, {}};
    SpecOpts spec_opts;
};

int run_train_teacher(const GlobalOpts& g, const TrainTeacherOpts& o) {
    const DgpPanel panel = read_panel(o.panel);
    const FeatureMode mode = feature_mode_from_string(o.feature_mode);
    const Dataset data = load_dataset(o.expression, o.labels, panel, mode);

    ModelSpec spec = preset_by_name(g.preset, ModelKind::Teacher, panel.k(),
                                    class_count(data.labels));
    o.spec_opts.apply(spec);

    const auto [train, val] =
        stratified_split(data, o.train_fraction, g.seed);
    TrainRun run = train_teacher(to_train_set(train), to_train_set(val), spec,
                                 o.hyper, g.seed);

    const fs::path out = ensure_out_dir(g);
    json manifest{{"command", "train-teacher"},
                  {"seed", g.seed},
                  {"preset", g.preset},
                  {"spec", spec_to_json(spec)},
                  {"hyper", hyper_to_json(o.hyper)},
                  {"train_fraction", o.train_fraction},
                  {"feature_mode", o.feature_mode},
                  {"n_train", train.size()},
                  {"n_val", val.size()},
                  {"trace", trace_to_json(run)},
                  {"best_epoch", run.best_epoch},
                  {"checkpoint", "teacher.ckpt"},
                  {"wall_seconds", run.wall_seconds},
                  {"created_at", timestamp()}};
    const std::string digest = manifest_digest(manifest);
    manifest["digest"] = digest;
    write_json(manifest, out / "manifest.json");

    save_checkpoint(make_checkpoint(run.model, panel, data.class_names, mode,
                                    digest),
                    out / "teacher.ckpt");

    const EvalReport report =
        evaluate_scores(run.model.probabilities(val.features), val.labels,
                        data.class_names);
    write_eval_outputs(report, out, "eval", true);

    std::cout << "train-teacher: " << run.trace.size() << " epochs, val acc "
              << report.scalar.acc << ", macro AUC " << report.auc << " ("
              << run.wall_seconds << " s) -> " << (out / "teacher.ckpt").string()
              << "\n";
    return kExitOk;
}

struct DistillOpts {
    std::string teacher, expression, labels, panel_override;
    std::string student = "tx"; // tx | mlp
    std::string feature_mode;   // default: the teacher checkpoint's mode
    double train_fraction = 0.8;
    DistillConfig distill;
    std::string kd_form = "kl";
    bool vanilla = false;
    TrainHyper hyper{200, 32, {}};
    SpecOpts spec_opts;
};

int run_distill(const GlobalOpts& g, const DistillOpts& o) {
    const Checkpoint teacher_ckpt = load_checkpoint(o.teacher);
    const ModelInstance teacher = model_from_checkpoint(teacher_ckpt);

    DgpPanel panel = teacher_ckpt.panel;
    if (!o.panel_override.empty()) panel = read_panel(o.panel_override);
    if (panel.k() != teacher.spec().num_features)
        throw ConfigError("panel has " + std::to_string(panel.k()) +
                          " pairs but the teacher consumes " +
                          std::to_string(teacher.spec().num_features));

    const FeatureMode mode = o.feature_mode.empty()
                                 ? teacher_ckpt.feature_mode
                                 : feature_mode_from_string(o.feature_mode);
    const Dataset data = load_dataset(o.expression, o.labels, panel, mode);

    const ModelKind kind =
        o.student == "mlp" ? ModelKind::StudentMlp : ModelKind::StudentTx;
    if (o.student != "mlp" && o.student != "tx")
        throw ConfigError("unknown student '" + o.student + "' (tx|mlp)");
    ModelSpec spec =
        preset_by_name(g.preset, kind, panel.k(), class_count(data.labels));
    o.spec_opts.apply(spec);

    DistillConfig cfg = o.distill;
    cfg.kd_form = kd_form_from_string(o.kd_form);
    if (o.vanilla) cfg.w_distill = 0.0;

    const auto [train, val] = stratified_split(data, o.train_fraction, g.seed);
    TrainRun run = distill_student(spec, teacher, to_train_set(train),
                                   to_train_set(val), cfg, o.hyper, g.seed);

    const fs::path out = ensure_out_dir(g);
    const std::string ckpt_name =
        std::string("student_") + (kind == ModelKind::StudentMlp ? "mlp" : "tx") +
        ".ckpt";
    json manifest{{"command", "distill"},
                  {"seed", g.seed},
                  {"preset", g.preset},
                  {"teacher", o.teacher},
                  {"student", o.student},
                  {"vanilla", o.vanilla},
                  {"spec", spec_to_json(spec)},
                  {"hyper", hyper_to_json(o.hyper)},
                  {"distill",
                   {{"temperature", cfg.temperature},
                    {"w_distill", cfg.w_distill},
                    {"w_ce", cfg.w_ce},
                    {"kd_form", to_string(cfg.kd_form)}}},
                  {"train_fraction", o.train_fraction},
                  {"feature_mode", to_string(mode)},
                  {"n_train", train.size()},
                  {"n_val", val.size()},
                  {"trace", trace_to_json(run)},
                  {"best_epoch", run.best_epoch},
                  {"checkpoint", ckpt_name},
                  {"wall_seconds", run.wall_seconds},
                  {"created_at", timestamp()}};
    const std::string digest = manifest_digest(manifest);
    manifest["digest"] = digest;
    write_json(manifest, out / "manifest.json");

    save_checkpoint(
        make_checkpoint(run.model, panel, data.class_names, mode, digest),
        out / ckpt_name);

    const EvalReport report = evaluate_scores(
        run.model.probabilities(val.features), val.labels, data.class_names);
    write_eval_outputs(report, out, "eval", true);

    std::cout << "distill(" << (o.vanilla ? "vanilla" : "kd") << "): val AUC "
              << report.auc << ", acc " << report.scalar.acc << " ("
              << run.wall_seconds << " s) -> " << (out / ckpt_name).string()
              << "\n";
    return kExitOk;
}

struct EvaluateOpts {
    std::string checkpoint, expression, labels;
    std::size_t kfold = 0;
    bool curves = false;
    TrainHyper hyper{100, 32, {}};
};

int run_evaluate(const GlobalOpts& g, const EvaluateOpts& o) {
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const Dataset data =
        load_dataset(o.expression, o.labels, ckpt.panel, ckpt.feature_mode);
    const fs::path out = ensure_out_dir(g);

    if (o.kfold == 0) {
        const ModelInstance model = model_from_checkpoint(ckpt);
        const EvalReport report = evaluate_scores(
            model.probabilities(data.features), data.labels,
            ckpt.class_names.empty() ? data.class_names : ckpt.class_names);
        write_eval_outputs(report, out, "eval", o.curves);
        std::cout << "evaluate: acc " << report.scalar.acc << ", AUC "
                  << report.auc << ", AUPRC " << report.auprc << " -> "
                  << (out / "eval.json").string() << "\n";
        return kExitOk;
    }

    // k-fold: retrain the checkpoint's architecture per fold with plain
    // cross-entropy and score the held-out fold.
    FoldTrainer trainer = [&](const std::vector<std::size_t>& train_idx,
                              const std::vector<std::size_t>& test_idx,
                              std::uint64_t fold_seed) {
        const Dataset tr = dataset_subset(data, train_idx);
        const Dataset te = dataset_subset(data, test_idx);
        TrainRun run = train_teacher(to_train_set(tr), TrainSet{}, ckpt.spec,
                                     o.hyper, fold_seed);
        return run.model.probabilities(te.features);
    };
    const KfoldResult res =
        kfold_cv(data.labels, o.kfold, trainer, g.seed, data.class_names);

    json folds = json::array();
    for (const auto& f : res.folds) folds.push_back(report_to_json(f, false));
    write_json(json{{"kfold", o.kfold},
                    {"folds", folds},
                    {"mean", {{"acc", res.mean_acc},
                              {"auc", res.mean_auc},
                              {"auprc", res.mean_auprc},
                              {"f1", res.mean_f1}}},
                    {"stdev", {{"acc", res.stdev_acc},
                               {"auc", res.stdev_auc},
                               {"auprc", res.stdev_auprc},
                               {"f1", res.stdev_f1}}}},
               out / "eval_kfold.json");
    std::cout << "evaluate --kfold " << o.kfold << ": mean AUC " << res.mean_auc
              << " +/- " << res.stdev_auc << " -> "
              << (out / "eval_kfold.json").string() << "\n";
    return kExitOk;
}

struct PredictOpts {
    std::string checkpoint, expression;
};

int run_predict(const GlobalOpts& g, const PredictOpts& o) {
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const ExpressionMatrix expr = read_expression(o.expression);
    const ModelInstance model = model_from_checkpoint(ckpt);
    const Tensor features = featurize(expr, ckpt.panel, ckpt.feature_mode);
    const Tensor probs = model.probabilities(features);

    const std::vector<std::string> names =
        ckpt.class_names.empty() ? default_class_names(probs.cols())
                                 : ckpt.class_names;
    const fs::path out = ensure_out_dir(g);
    std::string body = "sample_id";
    for (const auto& n : names) body += ",p_" + n;
    body += ",label\n";
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        body += expr.sample_ids()[i];
        std::size_t best = 0;
        for (std::size_t c = 0; c < probs.cols(); ++c) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", probs(i, c));
            body += std::string(",") + buf;
            if (probs(i, c) > probs(i, best)) best = c;
        }
        body += "," + names[best] + "\n";
    }
    std::ofstream f(out / "predictions.csv", std::ios::binary);
    f << body;
    std::cout << "predict: " << probs.rows() << " samples -> "
              << (out / "predictions.csv").string() << "\n";
    return kExitOk;
}

struct ReportOpts {
    std::vector<std::string> checkpoints;
    std::vector<std::size_t> counts; // override: teacher first
};

int run_report(const GlobalOpts& g, const ReportOpts& o) {
    const fs::path out = ensure_out_dir(g);
    json rows = json::array();
    std::printf("%-24s %-12s %14s %12s\n", "model", "kind", "parameters",
                "compression");

    if (!o.counts.empty()) {
        const std::size_t teacher = o.counts.front();
        for (std::size_t i = 0; i < o.counts.size(); ++i) {
            const double ratio = compression_ratio(o.counts[i], teacher);
            rows.push_back({{"name", "override" + std::to_string(i)},
                            {"parameters", o.counts[i]},
                            {"compression_ratio", ratio}});
            std::printf("%-24s %-12s %14zu %11.1f%%\n",
                        ("override" + std::to_string(i)).c_str(),
                        i == 0 ? "teacher" : "student", o.counts[i],
                        100.0 * ratio);
        }
    } else {
        if (o.checkpoints.empty())
            throw ConfigError("report needs checkpoints or --counts");
        struct Row {
            std::string name, kind;
            std::size_t params;
            json metrics;
        };
        std::vector<Row> loaded;
        std::size_t teacher_params = 0;
        for (const auto& path : o.checkpoints) {
            const Checkpoint c = load_checkpoint(path);
            Row r;
            r.name = fs::path(path).filename().string();
            r.kind = to_string(c.spec.kind);
            r.params = count_parameters(c.spec);
            const fs::path sibling = fs::path(path).parent_path() / "eval.json";
            if (fs::exists(sibling)) {
                std::ifstream in(sibling);
                r.metrics = json::parse(in, nullptr, false);
            }
            if (c.spec.kind == ModelKind::Teacher) teacher_params = r.params;
            loaded.push_back(std::move(r));
        }
        if (teacher_params == 0 && !loaded.empty())
            teacher_params = loaded.front().params;
        for (const auto& r : loaded) {
            const double ratio = compression_ratio(r.params, teacher_params);
            json row{{"name", r.name},
                     {"kind", r.kind},
                     {"parameters", r.params},
                     {"compression_ratio", ratio}};
            if (!r.metrics.is_null() && !r.metrics.is_discarded()) {
                row["acc"] = r.metrics.value("acc", 0.0);
                row["auc"] = r.metrics.value("auc", 0.0);
                row["auprc"] = r.metrics.value("auprc", 0.0);
            }
            rows.push_back(row);
            std::printf("%-24s %-12s %14zu %11.1f%%\n", r.name.c_str(),
                        r.kind.c_str(), r.params, 100.0 * ratio);
        }
    }
    write_json(json{{"rows", rows}}, out / "report.json");
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gene-pair screening and teacher-student classifiers over "
                 "expression matrices"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a config file");
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--seed", g.seed, "Top-level seed; all streams derive from it")
        ->capture_default_str();
    app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
    app.add_option("--preset", g.preset, "Model preset (desk|paper-scale)")
        ->capture_default_str();
    app.add_option("--parallel", g.parallel,
                   "Worker threads for kernels, screening and k-fold")
        ->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
    SynthOpts synth_opts;
    synth->add_option("--samples-per-class", synth_opts.samples_per_class,
                      "Samples per class, class 0 = health")
        ->delimiter(',')
        ->capture_default_str();
    synth->add_option("--genes", synth_opts.genes, "Gene count")
        ->capture_default_str();
    synth->add_option("--pathways", synth_opts.pathways, "Pathway count")
        ->capture_default_str();
    synth->add_option("--planted", synth_opts.planted, "Planted pair count")
        ->capture_default_str();
    synth->add_option("--flip-noise", synth_opts.flip_noise,
                      "Pattern flip probability, in [0, 0.5)")
        ->capture_default_str();

    // screen
    auto* screen = app.add_subcommand("screen", "Select the top differential "
                                                "gene pairs");
    ScreenOpts screen_opts;
    screen->add_option("--expression", screen_opts.expression, "Expression CSV/TSV")
        ->required();
    screen->add_option("--labels", screen_opts.labels, "Labels CSV")->required();
    screen->add_option("--gmt", screen_opts.gmt, "Pathways GMT")->required();
    screen->add_option("--k", screen_opts.k, "Panel size")->capture_default_str();

    // train-teacher
    auto* tt = app.add_subcommand("train-teacher",
                                  "Train the multi-class teacher on panel features");
    TrainTeacherOpts tt_opts;
    tt->add_option("--expression", tt_opts.expression, "Expression CSV/TSV")
        ->required();
    tt->add_option("--labels", tt_opts.labels, "Labels CSV")->required();
    tt->add_option("--panel", tt_opts.panel, "Panel CSV from `screen`")->required();
    tt->add_option("--feature-mode", tt_opts.feature_mode, "binary|continuous")
        ->capture_default_str();
    tt->add_option("--train-fraction", tt_opts.train_fraction,
                   "Training share of the stratified split")
        ->capture_default_str();
    tt->add_option("--epochs", tt_opts.hyper.epochs, "Training epochs")
        ->capture_default_str();
    tt->add_option("--batch", tt_opts.hyper.batch_size, "Batch size")
        ->capture_default_str();
    tt->add_option("--lr", tt_opts.hyper.adamw.lr, "AdamW learning rate")
        ->capture_default_str();
    tt->add_option("--weight-decay", tt_opts.hyper.adamw.weight_decay,
                   "AdamW decoupled weight decay")
        ->capture_default_str();
    tt_opts.spec_opts.add_flags(tt);

    // distill
    auto* di = app.add_subcommand("distill",
                                  "Distill a student from a trained teacher");
    DistillOpts di_opts;
    di->add_option("--teacher", di_opts.teacher, "Teacher checkpoint")->required();
    di->add_option("--expression", di_opts.expression, "Expression CSV/TSV")
        ->required();
    di->add_option("--labels", di_opts.labels, "Binary labels CSV")->required();
    di->add_option("--student", di_opts.student, "Student architecture (tx|mlp)")
        ->capture_default_str();
    di->add_option("--panel", di_opts.panel_override,
                   "Re-screened panel; both teacher and student consume it");
    di->add_option("--feature-mode", di_opts.feature_mode,
                   "binary|continuous (default: teacher checkpoint's mode)");
    di->add_option("--train-fraction", di_opts.train_fraction,
                   "Training share of the stratified split")
        ->capture_default_str();
    di->add_option("--temperature", di_opts.distill.temperature,
                   "Soft-target temperature")
        ->capture_default_str();
    di->add_option("--w-distill", di_opts.distill.w_distill,
                   "Distillation loss weight")
        ->capture_default_str();
    di->add_option("--w-ce", di_opts.distill.w_ce, "Cross-entropy loss weight")
        ->capture_default_str();
    di->add_option("--kd-form", di_opts.kd_form,
                   "Distillation form (kl|verbatim)")
        ->capture_default_str();
    di->add_flag("--vanilla", di_opts.vanilla,
                 "Baseline arm: force w_distill = 0");
    di->add_option("--epochs", di_opts.hyper.epochs, "Training epochs")
        ->capture_default_str();
    di->add_option("--batch", di_opts.hyper.batch_size, "Batch size")
        ->capture_default_str();
    di->add_option("--lr", di_opts.hyper.adamw.lr, "AdamW learning rate")
        ->capture_default_str();
    di->add_option("--weight-decay", di_opts.hyper.adamw.weight_decay,
                   "AdamW decoupled weight decay")
        ->capture_default_str();
    di_opts.spec_opts.add_flags(di);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on labeled data");
    EvaluateOpts ev_opts;
    ev->add_option("--checkpoint", ev_opts.checkpoint, "Model checkpoint")
        ->required();
    ev->add_option("--expression", ev_opts.expression, "Expression CSV/TSV")
        ->required();
    ev->add_option("--labels", ev_opts.labels, "Labels CSV")->required();
    ev->add_option("--kfold", ev_opts.kfold,
                   "Retrain per fold and cross-validate (0 = off)")
        ->capture_default_str();
    ev->add_flag("--curves", ev_opts.curves, "Export ROC/PR curves as CSV");
    ev->add_option("--epochs", ev_opts.hyper.epochs,
                   "Per-fold training epochs (with --kfold)")
        ->capture_default_str();
    ev->add_option("--batch", ev_opts.hyper.batch_size, "Per-fold batch size")
        ->capture_default_str();
    ev->add_option("--lr", ev_opts.hyper.adamw.lr, "Per-fold learning rate")
        ->capture_default_str();

    // predict
    auto* pr = app.add_subcommand("predict", "Score unlabeled samples");
    PredictOpts pr_opts;
    pr->add_option("--checkpoint", pr_opts.checkpoint, "Model checkpoint")
        ->required();
    pr->add_option("--expression", pr_opts.expression, "Expression CSV/TSV")
        ->required();

    // report
    auto* rp = app.add_subcommand("report",
                                  "Parameter counts and compression ratios");
    ReportOpts rp_opts;
    rp->add_option("checkpoints", rp_opts.checkpoints, "Checkpoints to compare");
    rp->add_option("--counts", rp_opts.counts,
                   "Override parameter counts (teacher first)")
        ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        kernels::set_threads(g.parallel);
        int rc = kExitConfig;
        if (synth->parsed()) rc = run_synth(g, synth_opts);
        else if (screen->parsed()) rc = run_screen(g, screen_opts);
        else if (tt->parsed()) rc = run_train_teacher(g, tt_opts);
        else if (di->parsed()) rc = run_distill(g, di_opts);
        else if (ev->parsed()) rc = run_evaluate(g, ev_opts);
        else if (pr->parsed()) rc = run_predict(g, pr_opts);
        else if (rp->parsed()) rc = run_report(g, rp_opts);
        if (rc == kExitOk) echo_config(app, g.out_dir);
        return rc;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParamError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
