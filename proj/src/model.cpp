#include "tsgps/model.hpp"

#include <algorithm>
#include <cmath>

namespace tsgps {

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Teacher: return "teacher";
        case ModelKind::StudentTx: return "student_tx";
        case ModelKind::StudentMlp: return "student_mlp";
    }
    return "teacher";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "teacher") return ModelKind::Teacher;
    if (s == "student_tx") return ModelKind::StudentTx;
    if (s == "student_mlp") return ModelKind::StudentMlp;
    throw ConfigError("unknown model kind '" + s + "'");
}

std::string to_string(Activation a) {
    return a == Activation::Gelu ? "gelu" : "relu";
}

Activation activation_from_string(const std::string& s) {
    if (s == "gelu") return Activation::Gelu;
    if (s == "relu") return Activation::Relu;
    throw ConfigError("unknown activation '" + s + "'");
}

void ModelSpec::validate() const {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (num_features < 1) throw ConfigError("num_features must be >= 1");
    if (dropout_1 < 0.0 || dropout_1 >= 1.0)
        throw ConfigError("dropout_1 must be in [0,1)");
    if (has_block1()) {
        if (heads_1 == 0 || d_model_1 == 0 || encoder_layers_1 == 0)
            throw ConfigError("block 1 dimensions must be positive");
        if (d_model_1 % heads_1 != 0)
            throw ConfigError("d_model_1 " + std::to_string(d_model_1) +
                              " not divisible by heads_1 " + std::to_string(heads_1));
    }
    if (has_block2()) {
        if (heads_2 == 0 || d_model_2 == 0 || encoder_layers_2 == 0)
            throw ConfigError("block 2 dimensions must be positive");
        if (d_model_2 % heads_2 != 0)
            throw ConfigError("d_model_2 " + std::to_string(d_model_2) +
                              " not divisible by heads_2 " + std::to_string(heads_2));
    }
    for (std::size_t w : mlp_widths)
        if (w == 0) throw ConfigError("mlp widths must be positive");
}

ModelSpec desk_preset(ModelKind kind, std::size_t num_features,
                      std::size_t num_classes) {
    ModelSpec s;
    s.kind = kind;
    s.num_features = num_features;
    s.num_classes = num_classes;
    s.d_model_1 = 40;
    s.heads_1 = 5;
    s.encoder_layers_1 = 4;
    s.d_model_2 = 80;
    s.heads_2 = 2;
    s.encoder_layers_2 = 2;
    switch (kind) {
        case ModelKind::Teacher:
            s.dropout_1 = 0.1;
            s.mlp_widths = {64};
            break;
        case ModelKind::StudentTx:
            s.dropout_1 = 0.0;
            s.mlp_widths = {64};
            break;
        case ModelKind::StudentMlp:
            s.dropout_1 = 0.0;
            s.mlp_widths = {64, 32};
            break;
    }
    s.validate();
    return s;
}

ModelSpec paper_scale_preset(ModelKind kind, std::size_t num_features,
                             std::size_t num_classes) {
    ModelSpec s;
    s.kind = kind;
    s.num_features = num_features;
    s.num_classes = num_classes;
    s.d_model_1 = 350;
    s.heads_1 = 5;
    s.encoder_layers_1 = 4;
    s.d_model_2 = 700;
    s.heads_2 = 2;
    s.encoder_layers_2 = 2;
    switch (kind) {
        case ModelKind::Teacher:
            s.dropout_1 = 0.1;
            s.mlp_widths = {350};
            break;
        case ModelKind::StudentTx:
            s.dropout_1 = 0.0;
            s.mlp_widths = {350};
            break;
        case ModelKind::StudentMlp:
            s.dropout_1 = 0.0;
            s.mlp_widths = {1024, 512};
            break;
    }
    s.validate();
    return s;
}

ModelSpec preset_by_name(const std::string& preset, ModelKind kind,
                         std::size_t num_features, std::size_t num_classes) {
    if (preset == "desk") return desk_preset(kind, num_features, num_classes);
    if (preset == "paper-scale")
        return paper_scale_preset(kind, num_features, num_classes);
    throw ConfigError("unknown preset '" + preset + "' (desk|paper-scale)");
}

// ---- parameter layout ----------------------------------------------

namespace {

enum class Init { Uniform, Embedding, One, Zero };

struct ParamDef {
    std::string name;
    std::size_t rows, cols;
    Init init;
    double bound; // uniform half-width for Init::Uniform
};

void add_linear(std::vector<ParamDef>& defs, const std::string& name,
                std::size_t in, std::size_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    defs.push_back({name + ".w", in, out, Init::Uniform, bound});
    defs.push_back({name + ".b", 1, out, Init::Uniform, bound});
}

void add_layer_norm(std::vector<ParamDef>& defs, const std::string& name,
                    std::size_t width) {
    defs.push_back({name + ".g", 1, width, Init::One, 0.0});
    defs.push_back({name + ".b", 1, width, Init::Zero, 0.0});
}

void add_encoder_block(std::vector<ParamDef>& defs, const std::string& prefix,
                       std::size_t layers, std::size_t d, std::size_t heads) {
    const std::size_t dk = d / heads;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        add_layer_norm(defs, lp + ".ln1", d);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::string hp = lp + ".attn.h" + std::to_string(h);
            defs.push_back({hp + ".wq", d, dk, Init::Uniform, bound});
            defs.push_back({hp + ".wk", d, dk, Init::Uniform, bound});
            defs.push_back({hp + ".wv", d, dk, Init::Uniform, bound});
        }
        defs.push_back({lp + ".attn.wf", d, d, Init::Uniform, bound});
        add_layer_norm(defs, lp + ".ln2", d);
        add_linear(defs, lp + ".ff1", d, 4 * d);
        add_linear(defs, lp + ".ff2", 4 * d, d);
    }
}

std::vector<ParamDef> param_defs(const ModelSpec& spec) {
    spec.validate();
    std::vector<ParamDef> defs;
    if (spec.kind == ModelKind::StudentMlp) {
        std::size_t in = spec.num_features;
        for (std::size_t i = 0; i < spec.mlp_widths.size(); ++i) {
            add_linear(defs, "mlp.l" + std::to_string(i), in, spec.mlp_widths[i]);
            in = spec.mlp_widths[i];
        }
        add_linear(defs, "out", in, spec.num_classes);
        return defs;
    }

    defs.push_back({"embed.e", spec.num_features, spec.d_model_1, Init::Embedding, 0.0});
    defs.push_back({"embed.b", spec.num_features, spec.d_model_1, Init::Embedding, 0.0});
    add_encoder_block(defs, "b1", spec.encoder_layers_1, spec.d_model_1, spec.heads_1);

    std::size_t pooled = spec.d_model_1;
    if (spec.has_block2()) {
        add_linear(defs, "expand", spec.d_model_1, spec.d_model_2);
        add_encoder_block(defs, "b2", spec.encoder_layers_2, spec.d_model_2,
                          spec.heads_2);
        pooled = spec.d_model_2;
    }

    add_layer_norm(defs, "head.ln", pooled);
    std::size_t in = pooled;
    for (std::size_t i = 0; i < spec.mlp_widths.size(); ++i) {
        add_linear(defs, "head.l" + std::to_string(i), in, spec.mlp_widths[i]);
        add_layer_norm(defs, "head.ln" + std::to_string(i), spec.mlp_widths[i]);
        in = spec.mlp_widths[i];
    }
    add_linear(defs, "out", in, spec.num_classes);
    return defs;
}

} // namespace

std::vector<NamedParamShape> expected_parameter_shapes(const ModelSpec& spec) {
    std::vector<NamedParamShape> out;
    for (const auto& d : param_defs(spec)) out.push_back({d.name, d.rows, d.cols});
    return out;
}

std::size_t count_parameters(const ModelSpec& spec) {
    spec.validate();
    const std::size_t k = spec.num_features;
    const std::size_t c = spec.num_classes;

    auto encoder_block = [](std::size_t layers, std::size_t d) {
        return layers * (12 * d * d + 9 * d);
    };
    auto head = [&](std::size_t in, bool with_norms) {
        std::size_t n = with_norms ? 2 * in : 0;
        for (std::size_t w : spec.mlp_widths) {
            n += in * w + w;
            if (with_norms) n += 2 * w;
            in = w;
        }
        return n + in * c + c;
    };

    if (spec.kind == ModelKind::StudentMlp) return head(k, false);

    std::size_t n = 2 * k * spec.d_model_1;
    n += encoder_block(spec.encoder_layers_1, spec.d_model_1);
    std::size_t pooled = spec.d_model_1;
    if (spec.has_block2()) {
        n += spec.d_model_1 * spec.d_model_2 + spec.d_model_2;
        n += encoder_block(spec.encoder_layers_2, spec.d_model_2);
        pooled = spec.d_model_2;
    }
    return n + head(pooled, true);
}

double compression_ratio(std::size_t student_params, std::size_t teacher_params) {
    if (teacher_params == 0)
        throw ParamError("compression_ratio: teacher parameter count is zero");
    return 1.0 - static_cast<double>(student_params) /
                     static_cast<double>(teacher_params);
}

// ---- instance ------------------------------------------------------

ModelInstance build_model(const ModelSpec& spec, Rng& rng) {
    ModelInstance m;
    m.spec_ = spec;
    for (const auto& def : param_defs(spec)) {
        Tensor t(def.rows, def.cols);
        switch (def.init) {
            case Init::Uniform:
                for (std::size_t i = 0; i < t.size(); ++i)
                    t.data()[i] = rng.uniform(-def.bound, def.bound);
                break;
            case Init::Embedding:
                for (std::size_t i = 0; i < t.size(); ++i)
                    t.data()[i] = rng.normal(0.0, 0.02);
                break;
            case Init::One:
                t.fill(1.0);
                break;
            case Init::Zero:
                break;
        }
        m.names_.push_back(def.name);
        m.params_.push_back(parameter(std::move(t)));
    }
    return m;
}

ModelInstance rebuild_model(const ModelSpec& spec,
                            const std::vector<std::pair<std::string, Tensor>>& params) {
    const auto defs = param_defs(spec);
    if (params.size() != defs.size())
        throw ShapeError("checkpoint holds " + std::to_string(params.size()) +
                         " tensors, spec expects " + std::to_string(defs.size()));
    ModelInstance m;
    m.spec_ = spec;
    for (std::size_t i = 0; i < defs.size(); ++i) {
        if (params[i].first != defs[i].name)
            throw ShapeError("checkpoint tensor '" + params[i].first +
                             "' where '" + defs[i].name + "' was expected");
        if (params[i].second.rows() != defs[i].rows ||
            params[i].second.cols() != defs[i].cols)
            throw ShapeError("checkpoint tensor '" + defs[i].name + "' has shape " +
                             params[i].second.shape_str() + ", expected " +
                             std::to_string(defs[i].rows) + "x" +
                             std::to_string(defs[i].cols));
        m.names_.push_back(defs[i].name);
        m.params_.push_back(parameter(params[i].second));
    }
    return m;
}

std::size_t ModelInstance::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

void ModelInstance::zero_grads() { zero_grad(params_); }

namespace {

NodeRef activate(const NodeRef& x, Activation a) {
    return a == Activation::Gelu ? gelu(x) : relu(x);
}

/// Stacked token embedding: row (s*k + j) = f(s,j) * E_j + B_j.
NodeRef embed_tokens(const Tensor& features, const NodeRef& e, const NodeRef& b) {
    const std::size_t batch = features.rows();
    const std::size_t k = features.cols();
    const std::size_t d = e->value.cols();
    Tensor v(batch * k, d);
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t j = 0; j < k; ++j) {
            const double f = features(s, j);
            const double* ej = e->value.row(j);
            const double* bj = b->value.row(j);
            double* out = v.row(s * k + j);
            for (std::size_t c = 0; c < d; ++c) out[c] = f * ej[c] + bj[c];
        }
    const Tensor f_copy = features;
    return make_op(std::move(v), {e, b}, [f_copy, batch, k, d](const GraphNode& n) {
        GraphNode& pe = *n.parents[0];
        GraphNode& pb = *n.parents[1];
        for (std::size_t s = 0; s < batch; ++s)
            for (std::size_t j = 0; j < k; ++j) {
                const double f = f_copy(s, j);
                const double* g = n.grad.row(s * k + j);
                if (pe.requires_grad) {
                    double* ge = pe.grad.row(j);
                    for (std::size_t c = 0; c < d; ++c) ge[c] += f * g[c];
                }
                if (pb.requires_grad) {
                    double* gb = pb.grad.row(j);
                    for (std::size_t c = 0; c < d; ++c) gb[c] += g[c];
                }
            }
    });
}

/// Walks the parameter list in the exact order param_defs() created it.
struct ParamCursor {
    const std::vector<NodeRef>& params;
    std::size_t i = 0;
    NodeRef next() { return params.at(i++); }
};

NodeRef linear(const NodeRef& x, ParamCursor& cur) {
    NodeRef w = cur.next();
    NodeRef b = cur.next();
    return add_rowvec(matmul(x, w), b);
}

NodeRef norm(const NodeRef& x, ParamCursor& cur) {
    NodeRef g = cur.next();
    NodeRef b = cur.next();
    return layer_norm(x, g, b);
}

NodeRef encoder_block(NodeRef x, ParamCursor& cur, std::size_t layers,
                      std::size_t heads, Activation act, double drop_rate,
                      bool training, Rng* rng, std::size_t tokens) {
    for (std::size_t l = 0; l < layers; ++l) {
        NodeRef a = norm(x, cur);
        AttentionWeights w;
        for (std::size_t h = 0; h < heads; ++h) {
            w.wq.push_back(cur.next());
            w.wk.push_back(cur.next());
            w.wv.push_back(cur.next());
        }
        w.wf = cur.next();
        NodeRef attn = self_attention_batched(a, w, tokens);
        if (training && drop_rate > 0.0) attn = dropout(attn, drop_rate, true, *rng);
        x = add(x, attn);

        NodeRef f = norm(x, cur);
        f = linear(f, cur);
        f = activate(f, act);
        f = linear(f, cur);
        if (training && drop_rate > 0.0) f = dropout(f, drop_rate, true, *rng);
        x = add(x, f);
    }
    return x;
}

} // namespace

NodeRef ModelInstance::forward(const Tensor& features, Rng* dropout_rng) const {
    if (features.cols() != spec_.num_features)
        throw ShapeError("forward: feature width " + std::to_string(features.cols()) +
                         " does not match spec num_features " +
                         std::to_string(spec_.num_features));
    const bool training = mode_ == Mode::Train;
    const bool needs_dropout = training && spec_.dropout_1 > 0.0 && spec_.has_block1();
    if (needs_dropout && dropout_rng == nullptr)
        throw ParamError("forward: train mode with dropout needs an rng");

    ParamCursor cur{params_};

    if (spec_.kind == ModelKind::StudentMlp) {
        NodeRef h = constant(features);
        for (std::size_t i = 0; i < spec_.mlp_widths.size(); ++i)
            h = activate(linear(h, cur), spec_.head_activation);
        return linear(h, cur);
    }

    const std::size_t k = spec_.num_features;
    NodeRef e = cur.next();
    NodeRef be = cur.next();
    NodeRef x = embed_tokens(features, e, be);
    x = encoder_block(x, cur, spec_.encoder_layers_1, spec_.heads_1,
                      spec_.block1_activation, needs_dropout ? spec_.dropout_1 : 0.0,
                      training, dropout_rng, k);
    if (spec_.has_block2()) {
        x = linear(x, cur);
        x = encoder_block(x, cur, spec_.encoder_layers_2, spec_.heads_2,
                          spec_.block2_activation, 0.0, training, nullptr, k);
    }
    NodeRef pooled = mean_rows_grouped(x, k);
    NodeRef h = norm(pooled, cur);
    for (std::size_t i = 0; i < spec_.mlp_widths.size(); ++i) {
        h = activate(linear(h, cur), spec_.head_activation);
        h = norm(h, cur);
    }
    return linear(h, cur);
}

Tensor ModelInstance::logits(const Tensor& features) const {
    constexpr std::size_t kChunk = 256;
    Tensor out(features.rows(), spec_.num_classes);

    ModelInstance eval_view = *this; // shares parameter nodes
    eval_view.mode_ = Mode::Eval;

    for (std::size_t start = 0; start < features.rows(); start += kChunk) {
        const std::size_t n = std::min(kChunk, features.rows() - start);
        Tensor chunk(n, features.cols());
        std::copy(features.row(start), features.row(start) + n * features.cols(),
                  chunk.data());
        NodeRef res = eval_view.forward(chunk);
        for (std::size_t i = 0; i < n; ++i)
            std::copy(res->value.row(i), res->value.row(i) + spec_.num_classes,
                      out.row(start + i));
    }
    return out;
}

Tensor ModelInstance::probabilities(const Tensor& features) const {
    Tensor l = logits(features);
    Tensor p(l.rows(), l.cols());
    for (std::size_t i = 0; i < l.rows(); ++i) {
        const double* li = l.row(i);
        double* pi = p.row(i);
        double mx = li[0];
        for (std::size_t j = 1; j < l.cols(); ++j) mx = std::max(mx, li[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < l.cols(); ++j) {
            pi[j] = std::exp(li[j] - mx);
            sum += pi[j];
        }
        for (std::size_t j = 0; j < l.cols(); ++j) pi[j] /= sum;
    }
    return p;
}

Tensor sgd_update(const Tensor& weight, const Tensor& grad, double lr) {
    require_same_shape(weight, grad, "sgd_update");
    Tensor out = weight;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] -= lr * grad.data()[i];
    return out;
}

} // namespace tsgps
