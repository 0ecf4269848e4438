#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsgps/errors.hpp"
#include "tsgps/fisher.hpp"
#include "tsgps/tensor.hpp"

namespace tsgps {

/// genes x samples matrix of non-negative normalized expression values.
class ExpressionMatrix {
public:
    ExpressionMatrix() = default;
    ExpressionMatrix(std::vector<std::string> gene_ids,
                     std::vector<std::string> sample_ids, Tensor values);

    const std::vector<std::string>& gene_ids() const { return gene_ids_; }
    const std::vector<std::string>& sample_ids() const { return sample_ids_; }
    const Tensor& values() const { return values_; }
    Tensor& values() { return values_; }

    std::size_t n_genes() const { return gene_ids_.size(); }
    std::size_t n_samples() const { return sample_ids_.size(); }

    bool has_gene(const std::string& id) const { return gene_index_.count(id) != 0; }

    /// Row index of a gene; throws DataError naming the gene if absent.
    std::size_t gene_row(const std::string& id) const;

    double value(std::size_t gene_row, std::size_t sample) const {
        return values_(gene_row, sample);
    }

private:
    std::vector<std::string> gene_ids_;
    std::vector<std::string> sample_ids_;
    Tensor values_;
    std::unordered_map<std::string, std::size_t> gene_index_;
};

struct LabelVector {
    std::vector<std::string> sample_ids;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }

    /// Checks 1:1 alignment with a matrix's sample order.
    void require_aligned(const ExpressionMatrix& expr) const;
};

struct Pathway {
    std::string name;
    std::string description;
    std::vector<std::string> genes;
};

struct PathwayCatalog {
    std::vector<Pathway> pathways;
};

/// One screened gene pair, oriented so the G1 > G2 pattern is the one
/// enriched in cases (page_ratio_case >= page_ratio_control).
struct GenePair {
    std::string g1;
    std::string g2;
    std::string pathway;
    double p_value = 1.0;
    double page_ratio_case = 0.0;
    double page_ratio_control = 0.0;
    bool degenerate = false;
};

struct DgpPanel {
    std::vector<GenePair> pairs; // rank order, best first
    std::size_t k() const { return pairs.size(); }
};

struct ScreenReport {
    std::size_t candidates = 0;
    std::size_t degenerate_tables = 0;
    std::size_t samples = 0;
    std::size_t genes = 0;
    std::size_t pathways = 0;
};

enum class FeatureMode { Binary, Continuous };

std::string to_string(FeatureMode m);
FeatureMode feature_mode_from_string(const std::string& s);

/// Log-expression difference ln(max(g1,eps)) - ln(max(g2,eps)), eps = 1e-8.
/// Its sign dichotomizes the contingency table. Negative input is a data
/// error; zeros are clamped to eps.
double r_dis(double expr_g1, double expr_g2);

/// a = #(r_dis > 0, label 0), b = #(r_dis > 0, label 1),
/// c = #(r_dis <= 0, label 0), d = #(r_dis <= 0, label 1).
ContingencyTable build_contingency(const std::string& g1, const std::string& g2,
                                   const ExpressionMatrix& expr,
                                   const LabelVector& labels);

/// Fraction of the subset with expr(g1) > expr(g2), strict inequality.
double page_ratio(const std::string& g1, const std::string& g2,
                  const ExpressionMatrix& expr,
                  const std::vector<std::size_t>& sample_subset);

struct CandidatePair {
    std::string g1; // lexicographically smaller id
    std::string g2;
    std::string pathway; // first contributing pathway, catalog order
};

/// Every unordered gene pair that co-occurs in at least one pathway and
/// whose genes are both present in the matrix; deduplicated globally,
/// returned in lexicographic (g1, g2) order.
std::vector<CandidatePair> enumerate_pairs(const PathwayCatalog& catalog,
                                           const ExpressionMatrix& expr);

/// Full PAGE screen: score every candidate with the two-sided Fisher
/// exact test over its contingency table, orient each pair so the
/// case-enriched pattern is G1 > G2, rank ascending by p-value (ties:
/// descending |ratio_case - ratio_control|, then lexicographic), and
/// keep the top k. Deterministic for fixed inputs regardless of the
/// kernel thread count. Multi-class labels are collapsed to
/// health (0) vs infected (> 0) for screening.
DgpPanel select_dgps(const ExpressionMatrix& expr, const LabelVector& labels,
                     const PathwayCatalog& catalog, std::size_t k,
                     ScreenReport* report = nullptr);

/// samples x k feature matrix over the panel. Binary: 1 if g1 > g2 else 0.
/// Continuous: the r_dis value. Column order is panel order.
Tensor featurize(const ExpressionMatrix& expr, const DgpPanel& panel,
                 FeatureMode mode);

} // namespace tsgps
