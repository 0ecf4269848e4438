#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsgps/metrics.hpp"
#include "tsgps/model.hpp"
#include "tsgps/screen.hpp"

namespace tsgps {

// ---- datasets ---------------------------------------------------------

struct Dataset {
    Tensor features; // samples x k
    std::vector<int> labels;
    std::vector<std::string> sample_ids;
    std::vector<std::string> class_names;

    std::size_t size() const { return labels.size(); }
};

Dataset dataset_subset(const Dataset& d, const std::vector<std::size_t>& idx);

/// Per-class proportional split, deterministic per seed. Every class
/// needs at least 2 samples; both sides receive at least one sample of
/// each class.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

SplitIndices stratified_split_indices(const std::vector<int>& labels,
                                      double train_fraction, std::uint64_t seed);

std::pair<Dataset, Dataset> stratified_split(const Dataset& d,
                                             double train_fraction,
                                             std::uint64_t seed);

// ---- text formats -------------------------------------------------------

/// Expression CSV/TSV: header "gene_id" then sample ids, one row per
/// gene. The delimiter is taken from the header line (tab if present,
/// comma otherwise). Parsers reject malformed input with file/line
/// context; nothing is repaired silently.
ExpressionMatrix read_expression(const std::filesystem::path& path);
void write_expression(const ExpressionMatrix& expr,
                      const std::filesystem::path& path);

/// Two-column CSV "sample_id,label" with integer class labels.
LabelVector read_labels(const std::filesystem::path& path);
void write_labels(const LabelVector& labels, const std::filesystem::path& path);

/// GMT: per line, name TAB description TAB gene TAB gene ...
PathwayCatalog read_gmt(const std::filesystem::path& path);
void write_gmt(const PathwayCatalog& catalog, const std::filesystem::path& path);

/// Panel CSV: g1,g2,pathway,p_value,page_ratio_case,page_ratio_control,rank.
void write_panel(const DgpPanel& panel, const std::filesystem::path& path);
DgpPanel read_panel(const std::filesystem::path& path);

void write_roc_csv(const std::vector<CurvePoint>& curve,
                   const std::filesystem::path& path);
void write_pr_csv(const std::vector<CurvePoint>& curve,
                  const std::filesystem::path& path);

// ---- synthetic data -------------------------------------------------------

/// Desk-scale stand-in for real cohorts. Background expression is
/// i.i.d. log-normal; each planted pair (g1, g2) is given the g1 > g2
/// pattern with probability 1 - flip_noise in its active class and
/// flip_noise elsewhere (controls included), enforced by swapping the
/// two genes' values within the sample. With more than two classes the
/// planted pairs are assigned round-robin to the case classes, so each
/// case class carries its own signature. Pathways group the planted
/// pairs with decoy genes.
struct SynthConfig {
    std::vector<std::size_t> samples_per_class = {300, 300}; // class 0 = health
    std::size_t n_genes = 300;
    std::size_t n_pathways = 15;
    std::size_t planted_pairs = 15;
    double flip_noise = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
};

struct PlantedPair {
    std::string g1; // the high gene of the planted pattern
    std::string g2;
    std::size_t active_class = 1;
};

struct SyntheticData {
    ExpressionMatrix expr;
    LabelVector labels;
    PathwayCatalog catalog;
    std::vector<PlantedPair> truth;
};

SyntheticData generate_synthetic(const SynthConfig& cfg);

// ---- checkpoints ----------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

/// Self-describing model snapshot: JSON manifest (spec, panel, class
/// names, tensor shapes, version) followed by a little-endian float64
/// blob in manifest order and a SHA-256 digest of manifest + blob.
struct Checkpoint {
    int format_version = kCheckpointVersion;
    ModelSpec spec;
    DgpPanel panel;
    std::vector<std::string> class_names;
    FeatureMode feature_mode = FeatureMode::Binary;
    std::vector<std::pair<std::string, Tensor>> parameters;
    std::string train_manifest_digest; // hex sha256 of the run manifest
};

Checkpoint make_checkpoint(const ModelInstance& model, const DgpPanel& panel,
                           std::vector<std::string> class_names,
                           FeatureMode feature_mode,
                           std::string train_manifest_digest = {});

/// Atomic write (temp file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Validates, in order: magic/version, manifest shape consistency
/// against the spec (ShapeError naming the tensor), then blob size and
/// digest (IoError, no partial model).
Checkpoint load_checkpoint(const std::filesystem::path& path);

ModelInstance model_from_checkpoint(const Checkpoint& ckpt);

// ---- JSON adapters ----------------------------------------------------------

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

nlohmann::json panel_to_json(const DgpPanel& panel);
DgpPanel panel_from_json(const nlohmann::json& j);

nlohmann::json report_to_json(const EvalReport& report, bool include_curves = false);

std::string sha256_hex(const std::string& bytes);

} // namespace tsgps
