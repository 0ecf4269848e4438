#pragma once

#include <string>
#include <vector>

#include "tsgps/autodiff.hpp"
#include "tsgps/rng.hpp"
#include "tsgps/tensor.hpp"

namespace tsgps {

enum class ModelKind { Teacher, StudentTx, StudentMlp };
enum class Activation { Gelu, Relu };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Architecture hyperparameters for the teacher and the two students.
///
/// Teacher: token embedding -> transformer block 1 (encoder_layers_1
/// pre-norm layers, heads_1 heads, block1_activation in the feed
/// forward, dropout_1 on the attention and feed-forward outputs) ->
/// token-wise expansion to d_model_2 -> transformer block 2 (ReLU by
/// default, no dropout) -> mean pooling over tokens -> layer-normed MLP
/// head -> num_classes logits.
/// StudentTx: block 1 equivalent plus the MLP head.
/// StudentMlp: plain linear/GELU stack on the raw features.
struct ModelSpec {
    ModelKind kind = ModelKind::Teacher;
    std::size_t num_features = 35;
    std::size_t num_classes = 3;

    std::size_t d_model_1 = 40;
    std::size_t heads_1 = 5;
    std::size_t encoder_layers_1 = 4;
    double dropout_1 = 0.1;

    std::size_t d_model_2 = 80;
    std::size_t heads_2 = 2;
    std::size_t encoder_layers_2 = 2;

    std::vector<std::size_t> mlp_widths = {64};

    Activation block1_activation = Activation::Gelu;
    Activation block2_activation = Activation::Relu;
    Activation head_activation = Activation::Gelu;

    void validate() const; // throws ConfigError

    bool has_block1() const { return kind != ModelKind::StudentMlp; }
    bool has_block2() const { return kind == ModelKind::Teacher; }
};

/// Named presets. `desk` trains in seconds to minutes on a laptop;
/// `paper-scale` sizes the teacher in the tens of millions of
/// parameters for deployment-style accounting.
ModelSpec desk_preset(ModelKind kind, std::size_t num_features, std::size_t num_classes);
ModelSpec paper_scale_preset(ModelKind kind, std::size_t num_features,
                             std::size_t num_classes);
ModelSpec preset_by_name(const std::string& preset, ModelKind kind,
                         std::size_t num_features, std::size_t num_classes);

enum class Mode { Train, Eval };

struct NamedParamShape {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// Parameter names and shapes derived from the spec alone, in creation
/// order. Checkpoints are validated against this list.
std::vector<NamedParamShape> expected_parameter_shapes(const ModelSpec& spec);

/// Closed-form parameter total; matches enumerating the shapes above.
std::size_t count_parameters(const ModelSpec& spec);

/// 1 - student/teacher.
double compression_ratio(std::size_t student_params, std::size_t teacher_params);

/// A built model: the spec plus named parameter leaves.
class ModelInstance {
public:
    ModelInstance() = default;

    const ModelSpec& spec() const { return spec_; }
    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

    const std::vector<std::string>& param_names() const { return names_; }
    const std::vector<NodeRef>& params() const { return params_; }
    std::vector<NodeRef>& params() { return params_; }

    std::size_t parameter_count() const;

    /// Build the computation graph for a batch of feature rows
    /// (batch x num_features). In train mode with dropout_1 > 0 an rng
    /// is required for the dropout masks.
    NodeRef forward(const Tensor& features, Rng* dropout_rng = nullptr) const;

    /// Eval-mode logits without keeping the graph; runs in chunks.
    Tensor logits(const Tensor& features) const;

    /// Row-wise class probabilities (softmax of logits at temperature 1).
    Tensor probabilities(const Tensor& features) const;

    void zero_grads();

    friend ModelInstance build_model(const ModelSpec& spec, Rng& rng);
    friend ModelInstance rebuild_model(const ModelSpec& spec,
                                       const std::vector<std::pair<std::string, Tensor>>& params);

private:
    ModelSpec spec_;
    Mode mode_ = Mode::Eval;
    std::vector<std::string> names_;
    std::vector<NodeRef> params_;
};

/// Fresh instance with the documented initialization: linear maps and
/// attention projections uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)),
/// embeddings normal(0, 0.02), layer-norm gain 1 / bias 0.
ModelInstance build_model(const ModelSpec& spec, Rng& rng);

/// Instance from stored tensors (checkpoint load); names and shapes
/// must match expected_parameter_shapes(spec) exactly.
ModelInstance rebuild_model(const ModelSpec& spec,
                            const std::vector<std::pair<std::string, Tensor>>& params);

/// Plain gradient-descent step, kept for completeness next to AdamW:
/// returns w - lr * grad.
Tensor sgd_update(const Tensor& weight, const Tensor& grad, double lr);

} // namespace tsgps
