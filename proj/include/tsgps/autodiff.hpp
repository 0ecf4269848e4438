#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tsgps/rng.hpp"
#include "tsgps/tensor.hpp"

namespace tsgps {

/// One vertex of a reverse-mode computation graph.
///
/// Graphs are built forward by the op functions below; backward() then
/// pushes d(root)/d(node) through the recorded backward rules in
/// reverse topological order. Children hold shared ownership of their
/// parents, so dropping the root frees the interior of a graph while
/// leaf parameters (held by the model) survive.
///
/// Gradient semantics: backward() zeroes the grads of interior nodes it
/// reaches and then writes exactly d(root)/d(node) into them; leaf
/// nodes (parameters) accumulate across calls until zero_grad().
struct GraphNode {
    Tensor value;
    Tensor grad;
    std::vector<std::shared_ptr<GraphNode>> parents;
    std::function<void(const GraphNode&)> backward_rule;
    bool requires_grad = false;

    explicit GraphNode(Tensor v)
        : value(std::move(v)), grad(value.rows(), value.cols()) {}
};

using NodeRef = std::shared_ptr<GraphNode>;

/// Leaf that never receives gradient.
NodeRef constant(Tensor v);

/// Trainable leaf; grad accumulates across backward() calls.
NodeRef parameter(Tensor v);

/// Raw op constructor, exposed so tests and extensions can register
/// custom backward rules. requires_grad is inherited from the parents.
NodeRef make_op(Tensor value, std::vector<NodeRef> parents,
                std::function<void(const GraphNode&)> backward);

// ---- primitive ops -------------------------------------------------

NodeRef add(const NodeRef& a, const NodeRef& b);
NodeRef sub(const NodeRef& a, const NodeRef& b);
NodeRef hadamard(const NodeRef& a, const NodeRef& b);
NodeRef matmul(const NodeRef& a, const NodeRef& b);
NodeRef transpose(const NodeRef& a);
NodeRef scale(const NodeRef& a, double s);
NodeRef add_scalar(const NodeRef& a, double s);

/// Elementwise product with a constant tensor (no gradient to the constant).
NodeRef mul_const(const NodeRef& a, const Tensor& c);

/// Broadcast-add a 1 x cols row vector to every row of x.
NodeRef add_rowvec(const NodeRef& x, const NodeRef& row);

/// Row-wise softmax at the given temperature, stabilized by row-max
/// subtraction. temperature must be > 0.
NodeRef softmax_rows(const NodeRef& x, double temperature);

/// Row-wise log-softmax, computed in stabilized form (never as the log
/// of a stored softmax).
NodeRef log_softmax_rows(const NodeRef& x, double temperature);

/// tanh-approximation GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
NodeRef gelu(const NodeRef& x);

/// max(0, x); subgradient at 0 is 0.
NodeRef relu(const NodeRef& x);

/// Per-row standardization (variance with 1/cols) followed by an
/// affine gain/bias, both 1 x cols.
NodeRef layer_norm(const NodeRef& x, const NodeRef& gain, const NodeRef& bias,
                   double epsilon = 1e-5);

/// Training mode: zero each element with probability `rate` and scale
/// survivors by 1/(1-rate); the mask is drawn from `rng` row-major.
/// Inference mode: identity (rate ignored, rng not consumed).
NodeRef dropout(const NodeRef& x, double rate, bool training, Rng& rng);

NodeRef sum_all(const NodeRef& x);  // 1x1
NodeRef mean_all(const NodeRef& x); // 1x1

/// Rows [first, first+count) of x.
NodeRef slice_rows(const NodeRef& x, std::size_t first, std::size_t count);

/// Mean over consecutive groups of `group_size` rows; output has
/// rows/group_size rows.
NodeRef mean_rows_grouped(const NodeRef& x, std::size_t group_size);

NodeRef concat_cols(const std::vector<NodeRef>& xs);
NodeRef concat_rows(const std::vector<NodeRef>& xs);

// ---- attention -----------------------------------------------------

/// Multi-head self-attention weights: one d_model x d_head projection
/// per head for query/key/value, plus the d_model x d_model output map.
/// No biases, matching the formulation built from plain weight matrices.
struct AttentionWeights {
    std::vector<NodeRef> wq, wk, wv;
    NodeRef wf;
};

/// Self-attention over one token sequence x (tokens x d_model):
/// per head, softmax(Q K^T / sqrt(d_head)) V; heads concatenated and
/// mapped by wf. Scaling uses the per-head width.
NodeRef self_attention(const NodeRef& x, const AttentionWeights& w);

/// Same computation applied independently to each consecutive block of
/// `tokens` rows of a stacked (batch*tokens) x d_model matrix. Row-wise
/// ops make this bit-identical to running self_attention per sample.
NodeRef self_attention_batched(const NodeRef& x, const AttentionWeights& w,
                               std::size_t tokens);

// ---- backward ------------------------------------------------------

/// Reverse-mode sweep from a 1x1 root. Throws ParamError if the root is
/// not scalar. See GraphNode for the accumulate-on-leaves semantics.
void backward(const NodeRef& root);

/// Zero the grads of the given nodes (typically the parameter set).
void zero_grad(const std::vector<NodeRef>& nodes);

// ---- gradient checking ----------------------------------------------

struct GradCheckReport {
    /// Max relative error per checked parameter, |ad - fd| / max(1,|ad|,|fd|).
    std::vector<double> max_rel_err;
    double worst = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Compare reverse-mode gradients against central finite differences.
/// `fn` must rebuild the scalar graph from the parameters' current
/// values and be deterministic between calls.
GradCheckReport gradient_check(const std::function<NodeRef()>& fn,
                               const std::vector<NodeRef>& params,
                               double step = 1e-5, double tol = 1e-4);

} // namespace tsgps
