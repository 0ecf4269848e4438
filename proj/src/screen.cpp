#include "tsgps/screen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tsgps {

namespace {

constexpr double kLogClamp = 1e-8;

struct ScoredPair {
    GenePair pair;
    double tie_margin = 0.0; // |ratio_case - ratio_control|
};

bool rank_less(const ScoredPair& x, const ScoredPair& y) {
    if (x.pair.p_value != y.pair.p_value) return x.pair.p_value < y.pair.p_value;
    if (x.tie_margin != y.tie_margin) return x.tie_margin > y.tie_margin;
    if (x.pair.g1 != y.pair.g1) return x.pair.g1 < y.pair.g1;
    return x.pair.g2 < y.pair.g2;
}

double subset_ratio(const ExpressionMatrix& expr, std::size_t r1, std::size_t r2,
                    const std::vector<std::size_t>& subset) {
    std::size_t hits = 0;
    for (std::size_t s : subset)
        if (expr.value(r1, s) > expr.value(r2, s)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(subset.size());
}

} // namespace

ExpressionMatrix::ExpressionMatrix(std::vector<std::string> gene_ids,
                                   std::vector<std::string> sample_ids,
                                   Tensor values)
    : gene_ids_(std::move(gene_ids)),
      sample_ids_(std::move(sample_ids)),
      values_(std::move(values)) {
    if (values_.rows() != gene_ids_.size() || values_.cols() != sample_ids_.size())
        throw ShapeError("expression matrix " + values_.shape_str() +
                         " does not match " + std::to_string(gene_ids_.size()) +
                         " genes x " + std::to_string(sample_ids_.size()) +
                         " samples");
    for (std::size_t i = 0; i < gene_ids_.size(); ++i)
        if (!gene_index_.emplace(gene_ids_[i], i).second)
            throw DataError("duplicate gene id '" + gene_ids_[i] + "'");
    std::set<std::string> seen;
    for (const auto& s : sample_ids_)
        if (!seen.insert(s).second)
            throw DataError("duplicate sample id '" + s + "'");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const double v = values_.data()[i];
        if (!std::isfinite(v) || v < 0.0)
            throw DataError("expression values must be finite and non-negative");
    }
}

std::size_t ExpressionMatrix::gene_row(const std::string& id) const {
    auto it = gene_index_.find(id);
    if (it == gene_index_.end())
        throw DataError("gene '" + id + "' not present in expression matrix");
    return it->second;
}

void LabelVector::require_aligned(const ExpressionMatrix& expr) const {
    if (sample_ids != expr.sample_ids())
        throw DataError("label sample ids do not align with expression matrix "
                        "sample order");
    if (labels.size() != sample_ids.size())
        throw DataError("label vector length mismatch");
}

std::string to_string(FeatureMode m) {
    return m == FeatureMode::Binary ? "binary" : "continuous";
}

FeatureMode feature_mode_from_string(const std::string& s) {
    if (s == "binary") return FeatureMode::Binary;
    if (s == "continuous") return FeatureMode::Continuous;
    throw ParamError("unknown feature mode '" + s + "' (binary|continuous)");
}

double r_dis(double expr_g1, double expr_g2) {
    if (expr_g1 < 0.0 || expr_g2 < 0.0)
        throw DataError("r_dis: expression values must be non-negative");
    return std::log(std::max(expr_g1, kLogClamp)) -
           std::log(std::max(expr_g2, kLogClamp));
}

ContingencyTable build_contingency(const std::string& g1, const std::string& g2,
                                   const ExpressionMatrix& expr,
                                   const LabelVector& labels) {
    labels.require_aligned(expr);
    const std::size_t r1 = expr.gene_row(g1);
    const std::size_t r2 = expr.gene_row(g2);
    ContingencyTable t;
    for (std::size_t s = 0; s < expr.n_samples(); ++s) {
        const bool up = r_dis(expr.value(r1, s), expr.value(r2, s)) > 0.0;
        const bool infected = labels.labels[s] > 0;
        if (up)
            (infected ? t.b : t.a)++;
        else
            (infected ? t.d : t.c)++;
    }
    return t;
}

double page_ratio(const std::string& g1, const std::string& g2,
                  const ExpressionMatrix& expr,
                  const std::vector<std::size_t>& sample_subset) {
    if (sample_subset.empty())
        throw ParamError("page_ratio: empty sample subset");
    return subset_ratio(expr, expr.gene_row(g1), expr.gene_row(g2), sample_subset);
}

std::vector<CandidatePair> enumerate_pairs(const PathwayCatalog& catalog,
                                           const ExpressionMatrix& expr) {
    std::map<std::pair<std::string, std::string>, std::string> first_pathway;
    for (const auto& pw : catalog.pathways) {
        std::vector<std::string> present;
        for (const auto& g : pw.genes)
            if (expr.has_gene(g)) present.push_back(g);
        std::sort(present.begin(), present.end());
        present.erase(std::unique(present.begin(), present.end()), present.end());
        for (std::size_t i = 0; i < present.size(); ++i)
            for (std::size_t j = i + 1; j < present.size(); ++j)
                first_pathway.try_emplace({present[i], present[j]}, pw.name);
    }
    std::vector<CandidatePair> out;
    out.reserve(first_pathway.size());
    for (const auto& [key, pw] : first_pathway)
        out.push_back({key.first, key.second, pw});
    return out; // std::map iteration is already lexicographic
}

DgpPanel select_dgps(const ExpressionMatrix& expr, const LabelVector& labels,
                     const PathwayCatalog& catalog, std::size_t k,
                     ScreenReport* report) {
    if (k < 1) throw ParamError("select_dgps: k must be >= 1");
    labels.require_aligned(expr);

    const std::vector<CandidatePair> candidates = enumerate_pairs(catalog, expr);
    if (candidates.size() < k)
        throw DataError("select_dgps: requested k=" + std::to_string(k) +
                        " but only " + std::to_string(candidates.size()) +
                        " candidate pairs are available");

    std::vector<std::size_t> cases, controls;
    for (std::size_t s = 0; s < labels.size(); ++s)
        (labels.labels[s] > 0 ? cases : controls).push_back(s);
    if (cases.empty() || controls.empty())
        throw DataError("select_dgps: screening needs both classes present");

    const LogFactorialTable lf(static_cast<std::int64_t>(expr.n_samples()));
    std::vector<ScoredPair> scored(candidates.size());

    // Embarrassingly parallel across pairs; every pair's arithmetic is
    // independent of scheduling, and the ranked merge below restores a
    // deterministic order.
#ifdef _OPENMP
#pragma omp parallel for num_threads(kernels::threads()) schedule(dynamic, 32) \
    if (kernels::threads() > 1)
#endif
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(candidates.size()); ++ci) {
        const CandidatePair& cand = candidates[static_cast<std::size_t>(ci)];
        const std::size_t ra = expr.gene_row(cand.g1);
        const std::size_t rb = expr.gene_row(cand.g2);

        const double case_fwd = subset_ratio(expr, ra, rb, cases);
        const double ctrl_fwd = subset_ratio(expr, ra, rb, controls);

        GenePair gp;
        gp.pathway = cand.pathway;
        if (case_fwd >= ctrl_fwd) {
            gp.g1 = cand.g1;
            gp.g2 = cand.g2;
            gp.page_ratio_case = case_fwd;
            gp.page_ratio_control = ctrl_fwd;
        } else {
            gp.g1 = cand.g2;
            gp.g2 = cand.g1;
            gp.page_ratio_case = subset_ratio(expr, rb, ra, cases);
            gp.page_ratio_control = subset_ratio(expr, rb, ra, controls);
        }

        const ContingencyTable t = build_contingency(gp.g1, gp.g2, expr, labels);
        const FisherResult fr = fisher_exact(t, lf);
        gp.p_value = fr.p;
        gp.degenerate = fr.degenerate;

        ScoredPair& slot = scored[static_cast<std::size_t>(ci)];
        slot.pair = std::move(gp);
        slot.tie_margin =
            std::abs(slot.pair.page_ratio_case - slot.pair.page_ratio_control);
    }

    std::sort(scored.begin(), scored.end(), rank_less);

    if (report) {
        report->candidates = candidates.size();
        report->samples = expr.n_samples();
        report->genes = expr.n_genes();
        report->pathways = catalog.pathways.size();
        report->degenerate_tables = 0;
        for (const auto& sp : scored)
            if (sp.pair.degenerate) ++report->degenerate_tables;
    }

    DgpPanel panel;
    panel.pairs.reserve(k);
    for (std::size_t i = 0; i < k; ++i) panel.pairs.push_back(scored[i].pair);
    return panel;
}

Tensor featurize(const ExpressionMatrix& expr, const DgpPanel& panel,
                 FeatureMode mode) {
    std::vector<std::string> missing;
    for (const auto& gp : panel.pairs) {
        if (!expr.has_gene(gp.g1)) missing.push_back(gp.g1);
        if (!expr.has_gene(gp.g2)) missing.push_back(gp.g2);
    }
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        std::string msg = "featurize: panel genes missing from matrix:";
        for (const auto& g : missing) msg += " " + g;
        throw DataError(msg);
    }

    Tensor f(expr.n_samples(), panel.k());
    for (std::size_t j = 0; j < panel.k(); ++j) {
        const std::size_t r1 = expr.gene_row(panel.pairs[j].g1);
        const std::size_t r2 = expr.gene_row(panel.pairs[j].g2);
        for (std::size_t s = 0; s < expr.n_samples(); ++s) {
            const double v1 = expr.value(r1, s);
            const double v2 = expr.value(r2, s);
            f(s, j) = mode == FeatureMode::Binary ? (v1 > v2 ? 1.0 : 0.0)
                                                  : r_dis(v1, v2);
        }
    }
    return f;
}

} // namespace tsgps
