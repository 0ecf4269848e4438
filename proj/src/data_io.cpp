#include "tsgps/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "tsgps/sha256.hpp"

namespace tsgps {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const std::string& ctx) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw DataError(ctx + ": not a number: '" + s + "'");
    return v;
}

long parse_int(const std::string& s, const std::string& ctx) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw DataError(ctx + ": not an integer: '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

/// Reads all lines, stripping CR and a trailing empty line.
std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::string loc(const std::filesystem::path& path, std::size_t line_no) {
    return path.filename().string() + ":" + std::to_string(line_no);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& body) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << body;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string padded_id(const char* prefix, std::size_t i, std::size_t total) {
    std::size_t width = 1;
    for (std::size_t t = total; t >= 10; t /= 10) ++width;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, static_cast<int>(width), i + 1);
    return buf;
}

} // namespace

// ---- datasets ---------------------------------------------------------

Dataset dataset_subset(const Dataset& d, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.class_names = d.class_names;
    out.features = Tensor(idx.size(), d.features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy(d.features.row(idx[i]), d.features.row(idx[i]) + d.features.cols(),
                  out.features.row(i));
        out.labels.push_back(d.labels[idx[i]]);
        if (!d.sample_ids.empty()) out.sample_ids.push_back(d.sample_ids[idx[i]]);
    }
    return out;
}

SplitIndices stratified_split_indices(const std::vector<int>& labels,
                                      double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ParamError("train fraction must be in (0,1)");
    std::vector<int> classes = labels;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    Rng rng = Rng(seed).derive("split");
    SplitIndices out;
    for (int cls : classes) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) idx.push_back(i);
        if (idx.size() < 2)
            throw DataError("class " + std::to_string(cls) +
                            " has fewer than 2 samples, cannot split");
        rng.shuffle(idx);
        std::size_t n_train = static_cast<std::size_t>(
            std::llround(train_fraction * static_cast<double>(idx.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        out.train.insert(out.train.end(), idx.begin(), idx.begin() + n_train);
        out.val.insert(out.val.end(), idx.begin() + n_train, idx.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    return out;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& d, double train_fraction,
                                             std::uint64_t seed) {
    const SplitIndices idx = stratified_split_indices(d.labels, train_fraction, seed);
    return {dataset_subset(d, idx.train), dataset_subset(d, idx.val)};
}

// ---- text formats -------------------------------------------------------

ExpressionMatrix read_expression(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw DataError(loc(path, 1) + ": empty expression file");
    const char delim = lines[0].find('\t') != std::string::npos ? '\t' : ',';
    auto header = split(lines[0], delim);
    if (header.size() < 2 || header[0] != "gene_id")
        throw DataError(loc(path, 1) +
                        ": expression header must start with 'gene_id' followed by "
                        "sample ids");
    std::vector<std::string> sample_ids(header.begin() + 1, header.end());

    std::vector<std::string> gene_ids;
    std::set<std::string> seen;
    std::vector<double> values;
    values.reserve((lines.size() - 1) * sample_ids.size());
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto fields = split(lines[li], delim);
        if (fields.size() != sample_ids.size() + 1)
            throw DataError(loc(path, li + 1) + ": expected " +
                            std::to_string(sample_ids.size() + 1) + " fields, got " +
                            std::to_string(fields.size()));
        if (!seen.insert(fields[0]).second)
            throw DataError(loc(path, li + 1) + ": duplicate gene id '" + fields[0] +
                            "'");
        gene_ids.push_back(fields[0]);
        for (std::size_t j = 1; j < fields.size(); ++j)
            values.push_back(parse_double(fields[j], loc(path, li + 1)));
    }
    if (gene_ids.empty()) throw DataError(loc(path, 1) + ": no gene rows");
    Tensor m(gene_ids.size(), sample_ids.size(), std::move(values));
    return ExpressionMatrix(std::move(gene_ids), std::move(sample_ids), std::move(m));
}

void write_expression(const ExpressionMatrix& expr,
                      const std::filesystem::path& path) {
    std::string body = "gene_id";
    for (const auto& s : expr.sample_ids()) body += "," + s;
    body += "\n";
    for (std::size_t g = 0; g < expr.n_genes(); ++g) {
        body += expr.gene_ids()[g];
        for (std::size_t s = 0; s < expr.n_samples(); ++s)
            body += "," + fmt_double(expr.value(g, s));
        body += "\n";
    }
    write_text_atomic(path, body);
}

LabelVector read_labels(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw DataError(loc(path, 1) + ": empty label file");
    const char delim = lines[0].find('\t') != std::string::npos ? '\t' : ',';
    const auto header = split(lines[0], delim);
    if (header.size() != 2 || header[0] != "sample_id" || header[1] != "label")
        throw DataError(loc(path, 1) + ": label header must be 'sample_id,label'");
    LabelVector out;
    std::set<std::string> seen;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto fields = split(lines[li], delim);
        if (fields.size() != 2)
            throw DataError(loc(path, li + 1) + ": expected 2 fields");
        if (!seen.insert(fields[0]).second)
            throw DataError(loc(path, li + 1) + ": duplicate sample id '" +
                            fields[0] + "'");
        out.sample_ids.push_back(fields[0]);
        out.labels.push_back(
            static_cast<int>(parse_int(fields[1], loc(path, li + 1))));
    }
    if (out.labels.empty()) throw DataError(loc(path, 1) + ": no label rows");
    return out;
}

void write_labels(const LabelVector& labels, const std::filesystem::path& path) {
    std::string body = "sample_id,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i)
        body += labels.sample_ids[i] + "," + std::to_string(labels.labels[i]) + "\n";
    write_text_atomic(path, body);
}

PathwayCatalog read_gmt(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    PathwayCatalog out;
    std::set<std::string> names;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const auto fields = split(lines[li], '\t');
        if (fields.size() < 3)
            throw DataError(loc(path, li + 1) +
                            ": GMT line needs name, description and at least one "
                            "gene (tab-separated)");
        if (!names.insert(fields[0]).second)
            throw DataError(loc(path, li + 1) + ": duplicate pathway name '" +
                            fields[0] + "'");
        Pathway pw;
        pw.name = fields[0];
        pw.description = fields[1];
        for (std::size_t i = 2; i < fields.size(); ++i) {
            if (fields[i].empty())
                throw DataError(loc(path, li + 1) + ": empty gene id");
            pw.genes.push_back(fields[i]);
        }
        out.pathways.push_back(std::move(pw));
    }
    if (out.pathways.empty()) throw DataError(loc(path, 1) + ": no pathways");
    return out;
}

void write_gmt(const PathwayCatalog& catalog, const std::filesystem::path& path) {
    std::string body;
    for (const auto& pw : catalog.pathways) {
        body += pw.name + "\t" + pw.description;
        for (const auto& g : pw.genes) body += "\t" + g;
        body += "\n";
    }
    write_text_atomic(path, body);
}

void write_panel(const DgpPanel& panel, const std::filesystem::path& path) {
    std::string body = "g1,g2,pathway,p_value,page_ratio_case,page_ratio_control,rank\n";
    for (std::size_t i = 0; i < panel.pairs.size(); ++i) {
        const GenePair& p = panel.pairs[i];
        body += p.g1 + "," + p.g2 + "," + p.pathway + "," + fmt_double(p.p_value) +
                "," + fmt_double(p.page_ratio_case) + "," +
                fmt_double(p.page_ratio_control) + "," + std::to_string(i + 1) + "\n";
    }
    write_text_atomic(path, body);
}

DgpPanel read_panel(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw DataError(loc(path, 1) + ": empty panel file");
    if (split(lines[0], ',').size() != 7)
        throw DataError(loc(path, 1) + ": panel header must have 7 columns");
    DgpPanel out;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto f = split(lines[li], ',');
        if (f.size() != 7)
            throw DataError(loc(path, li + 1) + ": expected 7 fields");
        GenePair p;
        p.g1 = f[0];
        p.g2 = f[1];
        p.pathway = f[2];
        p.p_value = parse_double(f[3], loc(path, li + 1));
        p.page_ratio_case = parse_double(f[4], loc(path, li + 1));
        p.page_ratio_control = parse_double(f[5], loc(path, li + 1));
        out.pairs.push_back(std::move(p));
    }
    if (out.pairs.empty()) throw DataError(loc(path, 1) + ": no panel rows");
    return out;
}

void write_roc_csv(const std::vector<CurvePoint>& curve,
                   const std::filesystem::path& path) {
    std::string body = "threshold,fpr,tpr\n";
    for (const auto& p : curve)
        body += fmt_double(p.threshold) + "," + fmt_double(p.x) + "," +
                fmt_double(p.y) + "\n";
    write_text_atomic(path, body);
}

void write_pr_csv(const std::vector<CurvePoint>& curve,
                  const std::filesystem::path& path) {
    std::string body = "threshold,recall,precision\n";
    for (const auto& p : curve)
        body += fmt_double(p.threshold) + "," + fmt_double(p.x) + "," +
                fmt_double(p.y) + "\n";
    write_text_atomic(path, body);
}

// ---- synthetic data -------------------------------------------------------

void SynthConfig::validate() const {
    if (samples_per_class.size() < 2)
        throw ConfigError("synthetic data needs at least 2 classes");
    for (std::size_t n : samples_per_class)
        if (n == 0) throw ConfigError("every class needs at least one sample");
    if (n_genes < 2) throw ConfigError("need at least 2 genes");
    if (n_pathways == 0) throw ConfigError("need at least one pathway");
    if (2 * planted_pairs > n_genes)
        throw ConfigError("cannot plant " + std::to_string(planted_pairs) +
                          " disjoint pairs in " + std::to_string(n_genes) +
                          " genes");
    if (flip_noise < 0.0 || flip_noise >= 0.5)
        throw ConfigError("flip_noise must be in [0, 0.5)");
}

SyntheticData generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t classes = cfg.samples_per_class.size();
    const std::size_t n_samples =
        std::accumulate(cfg.samples_per_class.begin(), cfg.samples_per_class.end(),
                        std::size_t{0});

    std::vector<std::string> gene_ids(cfg.n_genes);
    for (std::size_t g = 0; g < cfg.n_genes; ++g)
        gene_ids[g] = padded_id("G", g, cfg.n_genes);

    LabelVector labels;
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < cfg.samples_per_class[c]; ++i)
            labels.labels.push_back(static_cast<int>(c));
    labels.sample_ids.resize(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s)
        labels.sample_ids[s] = padded_id("S", s, n_samples);

    const Rng master(cfg.seed);
    Rng expr_rng = master.derive("expr");
    Rng pair_rng = master.derive("pairs");
    Rng noise_rng = master.derive("noise");

    Tensor values(cfg.n_genes, n_samples);
    for (std::size_t g = 0; g < cfg.n_genes; ++g)
        for (std::size_t s = 0; s < n_samples; ++s)
            values(g, s) = std::exp(expr_rng.normal());

    // Disjoint planted pairs from a shuffled gene order.
    std::vector<std::size_t> shuffled(cfg.n_genes);
    std::iota(shuffled.begin(), shuffled.end(), 0);
    pair_rng.shuffle(shuffled);
    struct RawPair {
        std::size_t hi, lo, active;
    };
    std::vector<RawPair> planted;
    for (std::size_t i = 0; i < cfg.planted_pairs; ++i) {
        const std::size_t active = classes == 2 ? 1 : 1 + i % (classes - 1);
        planted.push_back({shuffled[2 * i], shuffled[2 * i + 1], active});
    }

    // Enforce the pattern sample by sample; one uniform draw per
    // (sample, pair) keeps the stream layout independent of outcomes.
    for (std::size_t s = 0; s < n_samples; ++s) {
        const std::size_t cls = static_cast<std::size_t>(labels.labels[s]);
        for (const RawPair& p : planted) {
            const double u = noise_rng.uniform();
            const bool want_up =
                cls == p.active ? u >= cfg.flip_noise : u < cfg.flip_noise;
            const bool is_up = values(p.hi, s) > values(p.lo, s);
            if (want_up != is_up) std::swap(values(p.hi, s), values(p.lo, s));
        }
    }

    SyntheticData out;
    out.expr = ExpressionMatrix(gene_ids, labels.sample_ids, std::move(values));
    out.labels = labels;

    for (const RawPair& p : planted)
        out.truth.push_back({gene_ids[p.hi], gene_ids[p.lo], p.active});

    // Pathways: planted pairs spread round-robin, remaining genes as decoys.
    out.catalog.pathways.resize(cfg.n_pathways);
    std::vector<bool> in_pair(cfg.n_genes, false);
    for (std::size_t i = 0; i < cfg.n_pathways; ++i) {
        out.catalog.pathways[i].name = padded_id("PW", i, cfg.n_pathways);
        out.catalog.pathways[i].description = "synthetic pathway";
    }
    for (std::size_t i = 0; i < planted.size(); ++i) {
        auto& pw = out.catalog.pathways[i % cfg.n_pathways];
        pw.genes.push_back(gene_ids[planted[i].hi]);
        pw.genes.push_back(gene_ids[planted[i].lo]);
        in_pair[planted[i].hi] = in_pair[planted[i].lo] = true;
    }
    std::size_t slot = 0;
    for (std::size_t g = 0; g < cfg.n_genes; ++g) {
        if (in_pair[g]) continue;
        out.catalog.pathways[slot % cfg.n_pathways].genes.push_back(gene_ids[g]);
        ++slot;
    }
    for (const auto& pw : out.catalog.pathways)
        if (pw.genes.size() < 2)
            throw ConfigError("pathway " + pw.name +
                              " ended up with fewer than 2 genes; use fewer "
                              "pathways or more genes");
    return out;
}

// ---- JSON adapters ----------------------------------------------------------

nlohmann::json spec_to_json(const ModelSpec& spec) {
    return nlohmann::json{{"kind", to_string(spec.kind)},
                          {"num_features", spec.num_features},
                          {"num_classes", spec.num_classes},
                          {"d_model_1", spec.d_model_1},
                          {"heads_1", spec.heads_1},
                          {"encoder_layers_1", spec.encoder_layers_1},
                          {"dropout_1", spec.dropout_1},
                          {"d_model_2", spec.d_model_2},
                          {"heads_2", spec.heads_2},
                          {"encoder_layers_2", spec.encoder_layers_2},
                          {"mlp_widths", spec.mlp_widths},
                          {"block1_activation", to_string(spec.block1_activation)},
                          {"block2_activation", to_string(spec.block2_activation)},
                          {"head_activation", to_string(spec.head_activation)}};
}

ModelSpec spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.kind = model_kind_from_string(j.at("kind").get<std::string>());
    s.num_features = j.at("num_features").get<std::size_t>();
    s.num_classes = j.at("num_classes").get<std::size_t>();
    s.d_model_1 = j.at("d_model_1").get<std::size_t>();
    s.heads_1 = j.at("heads_1").get<std::size_t>();
    s.encoder_layers_1 = j.at("encoder_layers_1").get<std::size_t>();
    s.dropout_1 = j.at("dropout_1").get<double>();
    s.d_model_2 = j.at("d_model_2").get<std::size_t>();
    s.heads_2 = j.at("heads_2").get<std::size_t>();
    s.encoder_layers_2 = j.at("encoder_layers_2").get<std::size_t>();
    s.mlp_widths = j.at("mlp_widths").get<std::vector<std::size_t>>();
    s.block1_activation =
        activation_from_string(j.at("block1_activation").get<std::string>());
    s.block2_activation =
        activation_from_string(j.at("block2_activation").get<std::string>());
    s.head_activation =
        activation_from_string(j.at("head_activation").get<std::string>());
    s.validate();
    return s;
}

nlohmann::json panel_to_json(const DgpPanel& panel) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : panel.pairs)
        arr.push_back({{"g1", p.g1},
                       {"g2", p.g2},
                       {"pathway", p.pathway},
                       {"p_value", p.p_value},
                       {"page_ratio_case", p.page_ratio_case},
                       {"page_ratio_control", p.page_ratio_control}});
    return arr;
}

DgpPanel panel_from_json(const nlohmann::json& j) {
    DgpPanel panel;
    for (const auto& e : j) {
        GenePair p;
        p.g1 = e.at("g1").get<std::string>();
        p.g2 = e.at("g2").get<std::string>();
        p.pathway = e.at("pathway").get<std::string>();
        p.p_value = e.at("p_value").get<double>();
        p.page_ratio_case = e.at("page_ratio_case").get<double>();
        p.page_ratio_control = e.at("page_ratio_control").get<double>();
        panel.pairs.push_back(std::move(p));
    }
    return panel;
}

namespace {

nlohmann::json scalar_to_json(const ScalarMetrics& m) {
    nlohmann::json j{{"acc", m.acc},
                     {"precision", m.precision},
                     {"recall", m.recall},
                     {"fpr", m.fpr},
                     {"f1", m.f1}};
    nlohmann::json degenerate = nlohmann::json::array();
    if (m.precision_degenerate) degenerate.push_back("precision");
    if (m.recall_degenerate) degenerate.push_back("recall");
    if (m.fpr_degenerate) degenerate.push_back("fpr");
    if (m.f1_degenerate) degenerate.push_back("f1");
    if (!degenerate.empty()) j["degenerate"] = degenerate;
    return j;
}

nlohmann::json curve_to_json(const std::vector<CurvePoint>& c) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : c) {
        const double th = std::isfinite(p.threshold) ? p.threshold : 1e308;
        arr.push_back({th, p.x, p.y});
    }
    return arr;
}

} // namespace

nlohmann::json report_to_json(const EvalReport& report, bool include_curves) {
    nlohmann::json j = scalar_to_json(report.scalar);
    j["auc"] = report.auc;
    j["auprc"] = report.auprc;
    j["n_samples"] = report.n_samples;
    if (!report.class_names.empty()) j["class_names"] = report.class_names;
    if (!report.per_class.empty()) {
        nlohmann::json per = nlohmann::json::array();
        for (const auto& c : report.per_class) per.push_back(report_to_json(c, false));
        j["per_class"] = per;
    }
    if (include_curves) {
        j["roc_curve"] = curve_to_json(report.roc_curve);
        j["pr_curve"] = curve_to_json(report.pr_curve);
    }
    return j;
}

std::string sha256_hex(const std::string& bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return Sha256::hex(h.digest());
}

// ---- checkpoints ----------------------------------------------------------

namespace {

constexpr char kMagic[] = "TSGPS1\n";
constexpr std::size_t kMagicLen = 7;

void append_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
}

std::uint64_t double_bits(double d) {
    std::uint64_t u;
    static_assert(sizeof(u) == sizeof(d));
    std::memcpy(&u, &d, sizeof(u));
    return u;
}

double bits_double(std::uint64_t u) {
    double d;
    std::memcpy(&d, &u, sizeof(d));
    return d;
}

} // namespace

Checkpoint make_checkpoint(const ModelInstance& model, const DgpPanel& panel,
                           std::vector<std::string> class_names,
                           FeatureMode feature_mode,
                           std::string train_manifest_digest) {
    Checkpoint c;
    c.spec = model.spec();
    c.panel = panel;
    c.class_names = std::move(class_names);
    c.feature_mode = feature_mode;
    c.train_manifest_digest = std::move(train_manifest_digest);
    for (std::size_t i = 0; i < model.params().size(); ++i)
        c.parameters.emplace_back(model.param_names()[i], model.params()[i]->value);
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json manifest;
    manifest["format_version"] = ckpt.format_version;
    manifest["spec"] = spec_to_json(ckpt.spec);
    manifest["panel"] = panel_to_json(ckpt.panel);
    manifest["class_names"] = ckpt.class_names;
    manifest["feature_mode"] = to_string(ckpt.feature_mode);
    manifest["train_manifest_digest"] = ckpt.train_manifest_digest;
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& [name, t] : ckpt.parameters)
        shapes.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    manifest["parameters"] = shapes;

    const std::string mbytes = manifest.dump();
    std::string blob;
    for (const auto& [name, t] : ckpt.parameters)
        for (std::size_t i = 0; i < t.size(); ++i)
            append_u64_le(blob, double_bits(t.data()[i]));

    Sha256 h;
    h.update(mbytes.data(), mbytes.size());
    h.update(blob.data(), blob.size());
    const auto digest = h.digest();

    std::string out;
    out.reserve(kMagicLen + 8 + mbytes.size() + blob.size() + 32);
    out.append(kMagic, kMagicLen);
    append_u64_le(out, mbytes.size());
    out += mbytes;
    out += blob;
    out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
    write_text_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());

    if (bytes.size() < kMagicLen + 8 ||
        bytes.compare(0, kMagicLen, kMagic, kMagicLen) != 0)
        throw IoError("not a checkpoint file: " + path.string());
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint64_t msize = read_u64_le(raw + kMagicLen);
    if (kMagicLen + 8 + msize > bytes.size())
        throw IoError("checkpoint manifest truncated: " + path.string());
    const std::string mbytes = bytes.substr(kMagicLen + 8, msize);

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mbytes);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint manifest is not valid JSON: " +
                      std::string(e.what()));
    }

    Checkpoint c;
    c.format_version = manifest.at("format_version").get<int>();
    if (c.format_version != kCheckpointVersion)
        throw IoError("checkpoint format version " +
                      std::to_string(c.format_version) + " not supported (want " +
                      std::to_string(kCheckpointVersion) + ")");
    c.spec = spec_from_json(manifest.at("spec"));
    c.panel = panel_from_json(manifest.at("panel"));
    c.class_names = manifest.at("class_names").get<std::vector<std::string>>();
    c.feature_mode =
        feature_mode_from_string(manifest.at("feature_mode").get<std::string>());
    c.train_manifest_digest =
        manifest.at("train_manifest_digest").get<std::string>();

    // Shape consistency against the spec comes before integrity, so an
    // edited manifest reports the offending tensor by name.
    const auto expected = expected_parameter_shapes(c.spec);
    const auto& shapes = manifest.at("parameters");
    if (shapes.size() != expected.size())
        throw ShapeError("checkpoint lists " + std::to_string(shapes.size()) +
                         " tensors, spec expects " +
                         std::to_string(expected.size()));
    std::size_t total = 0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const std::string name = shapes[i].at("name").get<std::string>();
        const std::size_t rows = shapes[i].at("rows").get<std::size_t>();
        const std::size_t cols = shapes[i].at("cols").get<std::size_t>();
        if (name != expected[i].name)
            throw ShapeError("checkpoint tensor '" + name + "' where '" +
                             expected[i].name + "' was expected");
        if (rows != expected[i].rows || cols != expected[i].cols)
            throw ShapeError("checkpoint tensor '" + name + "' has shape " +
                             std::to_string(rows) + "x" + std::to_string(cols) +
                             ", expected " + std::to_string(expected[i].rows) + "x" +
                             std::to_string(expected[i].cols));
        total += rows * cols;
    }

    const std::size_t blob_off = kMagicLen + 8 + msize;
    const std::size_t blob_size = total * 8;
    if (blob_off + blob_size + 32 != bytes.size())
        throw IoError("checkpoint truncated or padded: cannot verify digest");

    Sha256 h;
    h.update(mbytes.data(), mbytes.size());
    h.update(bytes.data() + blob_off, blob_size);
    const auto digest = h.digest();
    if (std::memcmp(digest.data(), bytes.data() + blob_off + blob_size, 32) != 0)
        throw IoError("checkpoint digest mismatch: file is corrupt");

    const auto* blob = reinterpret_cast<const unsigned char*>(bytes.data()) + blob_off;
    std::size_t off = 0;
    for (const auto& e : expected) {
        Tensor t(e.rows, e.cols);
        for (std::size_t i = 0; i < t.size(); ++i) {
            t.data()[i] = bits_double(read_u64_le(blob + off));
            off += 8;
        }
        c.parameters.emplace_back(e.name, std::move(t));
    }
    return c;
}

ModelInstance model_from_checkpoint(const Checkpoint& ckpt) {
    return rebuild_model(ckpt.spec, ckpt.parameters);
}

} // namespace tsgps
