#include "tsgps/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace tsgps {

namespace {

constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / 3.14159265358979323846);

void accumulate(GraphNode& node, const Tensor& delta) {
    require_same_shape(node.grad, delta, "grad accumulate");
    double* g = node.grad.data();
    const double* d = delta.data();
    for (std::size_t i = 0; i < delta.size(); ++i) g[i] += d[i];
}

bool any_requires_grad(const std::vector<NodeRef>& parents) {
    for (const auto& p : parents)
        if (p->requires_grad) return true;
    return false;
}

void check_temperature(double t) {
    if (!(t > 0.0))
        throw ParamError("temperature must be > 0, got " + std::to_string(t));
}

// Row softmax into `out`, stabilized by row-max subtraction.
void softmax_rows_value(const Tensor& x, double temperature, Tensor& out) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row(i);
        double* oi = out.row(i);
        double mx = xi[0];
        for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            oi[j] = std::exp((xi[j] - mx) / temperature);
            sum += oi[j];
        }
        for (std::size_t j = 0; j < x.cols(); ++j) oi[j] /= sum;
    }
}

} // namespace

NodeRef constant(Tensor v) { return std::make_shared<GraphNode>(std::move(v)); }

NodeRef parameter(Tensor v) {
    auto n = std::make_shared<GraphNode>(std::move(v));
    n->requires_grad = true;
    return n;
}

NodeRef make_op(Tensor value, std::vector<NodeRef> parents,
                std::function<void(const GraphNode&)> backward) {
    auto n = std::make_shared<GraphNode>(std::move(value));
    n->requires_grad = any_requires_grad(parents);
    n->parents = std::move(parents);
    if (n->requires_grad) n->backward_rule = std::move(backward);
    return n;
}

NodeRef add(const NodeRef& a, const NodeRef& b) {
    return make_op(tsgps::add(a->value, b->value), {a, b}, [](const GraphNode& n) {
        if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) accumulate(*n.parents[1], n.grad);
    });
}

NodeRef sub(const NodeRef& a, const NodeRef& b) {
    return make_op(tsgps::sub(a->value, b->value), {a, b}, [](const GraphNode& n) {
        if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) accumulate(*n.parents[1], scaled(n.grad, -1.0));
    });
}

NodeRef hadamard(const NodeRef& a, const NodeRef& b) {
    return make_op(tsgps::hadamard(a->value, b->value), {a, b}, [](const GraphNode& n) {
        if (n.parents[0]->requires_grad)
            accumulate(*n.parents[0], tsgps::hadamard(n.grad, n.parents[1]->value));
        if (n.parents[1]->requires_grad)
            accumulate(*n.parents[1], tsgps::hadamard(n.grad, n.parents[0]->value));
    });
}

NodeRef matmul(const NodeRef& a, const NodeRef& b) {
    return make_op(kernels::matmul(a->value, b->value), {a, b}, [](const GraphNode& n) {
        if (n.parents[0]->requires_grad)
            accumulate(*n.parents[0], kernels::matmul_nt(n.grad, n.parents[1]->value));
        if (n.parents[1]->requires_grad)
            accumulate(*n.parents[1], kernels::matmul_tn(n.parents[0]->value, n.grad));
    });
}

NodeRef transpose(const NodeRef& a) {
    return make_op(transposed(a->value), {a}, [](const GraphNode& n) {
        if (n.parents[0]->requires_grad)
            accumulate(*n.parents[0], transposed(n.grad));
    });
}

NodeRef scale(const NodeRef& a, double s) {
    return make_op(scaled(a->value, s), {a}, [s](const GraphNode& n) {
        if (n.parents[0]->requires_grad)
            accumulate(*n.parents[0], scaled(n.grad, s));
    });
}

NodeRef add_scalar(const NodeRef& a, double s) {
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] += s;
    return make_op(std::move(v), {a}, [](const GraphNode& n) {
        if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
    });
}

NodeRef mul_const(const NodeRef& a, const Tensor& c) {
    require_same_shape(a->value, c, "mul_const");
    return make_op(tsgps::hadamard(a->value, c), {a}, [c](const GraphNode& n) {
        if (n.parents[0]->requires_grad)
            accumulate(*n.parents[0], tsgps::hadamard(n.grad, c));
    });
}

NodeRef add_rowvec(const NodeRef& x, const NodeRef& row) {
    if (row->value.rows() != 1 || row->value.cols() != x->value.cols())
        throw ShapeError("add_rowvec: row " + row->value.shape_str() +
                         " does not broadcast over " + x->value.shape_str());
    Tensor v = x->value;
    for (std::size_t i = 0; i < v.rows(); ++i) {
        double* vi = v.row(i);
        const double* r = row->value.data();
        for (std::size_t j = 0; j < v.cols(); ++j) vi[j] += r[j];
    }
    return make_op(std::move(v), {x, row}, [](const GraphNode& n) {
        if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor colsum(1, n.grad.cols());
            for (std::size_t i = 0; i < n.grad.rows(); ++i) {
                const double* gi = n.grad.row(i);
                for (std::size_t j = 0; j < n.grad.cols(); ++j)
                    colsum.data()[j] += gi[j];
            }
            accumulate(*n.parents[1], colsum);
        }
    });
}

NodeRef softmax_rows(const NodeRef& x, double temperature) {
    check_temperature(temperature);
    Tensor v(x->value.rows(), x->value.cols());
    softmax_rows_value(x->value, temperature, v);
    return make_op(std::move(v), {x}, [temperature](const GraphNode& n) {
        if (!n.parents[0]->requires_grad) return;
        // dx_j = s_j (dy_j - sum_k dy_k s_k) / tau, per row
        Tensor dx(n.grad.rows(), n.grad.cols());
        for (std::size_t i = 0; i < n.grad.rows(); ++i) {
            const double* s = n.value.row(i);
            const double* dy = n.grad.row(i);
            double inner = 0.0;
            for (std::size_t j = 0; j < n.grad.cols(); ++j) inner += dy[j] * s[j];
            double* d = dx.row(i);
            for (std::size_t j = 0; j < n.grad.cols(); ++j)
                d[j] = s[j] * (dy[j] - inner) / temperature;
        }
        accumulate(*n.parents[0], dx);
    });
}

NodeRef log_softmax_rows(const NodeRef& x, double temperature) {
    check_temperature(temperature);
    const Tensor& in = x->value;
    Tensor v(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.rows(); ++i) {
        const double* xi = in.row(i);
        double* vi = v.row(i);
        double mx = xi[0];
        for (std::size_t j = 1; j < in.cols(); ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < in.cols(); ++j)
            sum += std::exp((xi[j] - mx) / temperature);
        const double lse = std::log(sum);
        for (std::size_t j = 0; j < in.cols(); ++j)
            vi[j] = (xi[j] - mx) / temperature - lse;
    }
    return make_op(std::move(v), {x}, [temperature](const GraphNode& n) {
        if (!n.parents[0]->requires_grad) return;
        // dx_j = (dy_j - softmax_j * sum_k dy_k) / tau
        Tensor dx(n.grad.rows(), n.grad.cols());
        for (std::size_t i = 0; i < n.grad.rows(); ++i) {
            const double* ly = n.value.row(i);
            const double* dy = n.grad.row(i);
            double total = 0.0;
            for (std::size_t j = 0; j < n.grad.cols(); ++j) total += dy[j];
            double* d = dx.row(i);
            for (std::size_t j = 0; j < n.grad.cols(); ++j)
                d[j] = (dy[j] - std::exp(ly[j]) * total) / temperature;
        }
        accumulate(*n.parents[0], dx);
    });
}

NodeRef gelu(const NodeRef& x) {
    const Tensor& in = x->value;
    Tensor v(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double xi = in.data()[i];
        const double u = kSqrt2OverPi * (xi + kGeluCoeff * xi * xi * xi);
        v.data()[i] = 0.5 * xi * (1.0 + std::tanh(u));
    }
    return make_op(std::move(v), {x}, [](const GraphNode& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& in = n.parents[0]->value;
        Tensor dx(in.rows(), in.cols());
        for (std::size_t i = 0; i < in.size(); ++i) {
            const double xi = in.data()[i];
            const double u = kSqrt2OverPi * (xi + kGeluCoeff * xi * xi * xi);
            const double t = std::tanh(u);
            const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * xi * xi);
            dx.data()[i] = n.grad.data()[i] *
                           (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du);
        }
        accumulate(*n.parents[0], dx);
    });
}

NodeRef relu(const NodeRef& x) {
    const Tensor& in = x->value;
    Tensor v(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.size(); ++i)
        v.data()[i] = in.data()[i] > 0.0 ? in.data()[i] : 0.0;
    return make_op(std::move(v), {x}, [](const GraphNode& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& in = n.parents[0]->value;
        Tensor dx(in.rows(), in.cols());
        for (std::size_t i = 0; i < in.size(); ++i)
            dx.data()[i] = in.data()[i] > 0.0 ? n.grad.data()[i] : 0.0;
        accumulate(*n.parents[0], dx);
    });
}

NodeRef layer_norm(const NodeRef& x, const NodeRef& gain, const NodeRef& bias,
                   double epsilon) {
    const Tensor& in = x->value;
    if (gain->value.rows() != 1 || gain->value.cols() != in.cols() ||
        bias->value.rows() != 1 || bias->value.cols() != in.cols())
        throw ShapeError("layer_norm: gain " + gain->value.shape_str() + " / bias " +
                         bias->value.shape_str() + " do not match input " +
                         in.shape_str());
    const std::size_t cols = in.cols();
    Tensor xhat(in.rows(), cols);
    Tensor inv_sigma(in.rows(), 1);
    Tensor v(in.rows(), cols);
    for (std::size_t i = 0; i < in.rows(); ++i) {
        const double* xi = in.row(i);
        double mu = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mu += xi[j];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double d = xi[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + epsilon);
        inv_sigma(i, 0) = inv;
        double* hi = xhat.row(i);
        double* vi = v.row(i);
        const double* g = gain->value.data();
        const double* b = bias->value.data();
        for (std::size_t j = 0; j < cols; ++j) {
            hi[j] = (xi[j] - mu) * inv;
            vi[j] = hi[j] * g[j] + b[j];
        }
    }
    auto xhat_p = std::make_shared<Tensor>(std::move(xhat));
    auto inv_p = std::make_shared<Tensor>(std::move(inv_sigma));
    return make_op(std::move(v), {x, gain, bias},
                   [xhat_p, inv_p](const GraphNode& n) {
        const std::size_t rows = n.grad.rows(), cols = n.grad.cols();
        const double* g = n.parents[1]->value.data();
        if (n.parents[0]->requires_grad) {
            Tensor dx(rows, cols);
            for (std::size_t i = 0; i < rows; ++i) {
                const double* dy = n.grad.row(i);
                const double* h = xhat_p->row(i);
                const double inv = (*inv_p)(i, 0);
                double m1 = 0.0, m2 = 0.0; // mean(dxhat), mean(dxhat*xhat)
                for (std::size_t j = 0; j < cols; ++j) {
                    const double dh = dy[j] * g[j];
                    m1 += dh;
                    m2 += dh * h[j];
                }
                m1 /= static_cast<double>(cols);
                m2 /= static_cast<double>(cols);
                double* d = dx.row(i);
                for (std::size_t j = 0; j < cols; ++j) {
                    const double dh = dy[j] * g[j];
                    d[j] = inv * (dh - m1 - h[j] * m2);
                }
            }
            accumulate(*n.parents[0], dx);
        }
        if (n.parents[1]->requires_grad || n.parents[2]->requires_grad) {
            Tensor dgain(1, cols), dbias(1, cols);
            for (std::size_t i = 0; i < rows; ++i) {
                const double* dy = n.grad.row(i);
                const double* h = xhat_p->row(i);
                for (std::size_t j = 0; j < cols; ++j) {
                    dgain.data()[j] += dy[j] * h[j];
                    dbias.data()[j] += dy[j];
                }
            }
            if (n.parents[1]->requires_grad) accumulate(*n.parents[1], dgain);
            if (n.parents[2]->requires_grad) accumulate(*n.parents[2], dbias);
        }
    });
}

NodeRef dropout(const NodeRef& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ParamError("dropout rate must be in [0,1), got " + std::to_string(rate));
    if (!training || rate == 0.0) {
        // Identity, bit-exact; no randomness consumed at rate 0 either.
        return make_op(x->value, {x}, [](const GraphNode& n) {
            if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
        });
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<Tensor>(x->value.rows(), x->value.cols());
    Tensor v(x->value.rows(), x->value.cols());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double m = rng.uniform() < rate ? 0.0 : keep_scale;
        mask->data()[i] = m;
        v.data()[i] = x->value.data()[i] * m;
    }
    return make_op(std::move(v), {x}, [mask](const GraphNode& n) {
        if (n.parents[0]->requires_grad)
            accumulate(*n.parents[0], tsgps::hadamard(n.grad, *mask));
    });
}

NodeRef sum_all(const NodeRef& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x->value.size(); ++i) s += x->value.data()[i];
    Tensor v(1, 1);
    v(0, 0) = s;
    return make_op(std::move(v), {x}, [](const GraphNode& n) {
        if (!n.parents[0]->requires_grad) return;
        const double g = n.grad(0, 0);
        accumulate(*n.parents[0],
                   Tensor::constant(n.parents[0]->value.rows(),
                                    n.parents[0]->value.cols(), g));
    });
}

NodeRef mean_all(const NodeRef& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x->value.size()));
}

NodeRef slice_rows(const NodeRef& x, std::size_t first, std::size_t count) {
    if (first + count > x->value.rows())
        throw ShapeError("slice_rows: [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") exceeds " +
                         x->value.shape_str());
    const std::size_t cols = x->value.cols();
    Tensor v(count, cols);
    std::copy(x->value.row(first), x->value.row(first) + count * cols, v.data());
    return make_op(std::move(v), {x}, [first, count, cols](const GraphNode& n) {
        if (!n.parents[0]->requires_grad) return;
        // Scatter straight into the parent's grad range.
        double* dst = n.parents[0]->grad.row(first);
        const double* src = n.grad.data();
        for (std::size_t i = 0; i < count * cols; ++i) dst[i] += src[i];
    });
}

NodeRef mean_rows_grouped(const NodeRef& x, std::size_t group_size) {
    if (group_size == 0 || x->value.rows() % group_size != 0)
        throw ShapeError("mean_rows_grouped: " + std::to_string(x->value.rows()) +
                         " rows are not a multiple of group size " +
                         std::to_string(group_size));
    const std::size_t groups = x->value.rows() / group_size;
    const std::size_t cols = x->value.cols();
    Tensor v(groups, cols);
    const double inv = 1.0 / static_cast<double>(group_size);
    for (std::size_t gi = 0; gi < groups; ++gi) {
        double* vi = v.row(gi);
        for (std::size_t r = 0; r < group_size; ++r) {
            const double* xi = x->value.row(gi * group_size + r);
            for (std::size_t j = 0; j < cols; ++j) vi[j] += xi[j] * inv;
        }
    }
    return make_op(std::move(v), {x}, [group_size, inv](const GraphNode& n) {
        if (!n.parents[0]->requires_grad) return;
        const std::size_t cols = n.grad.cols();
        Tensor dx(n.parents[0]->value.rows(), cols);
        for (std::size_t gi = 0; gi < n.grad.rows(); ++gi) {
            const double* gy = n.grad.row(gi);
            for (std::size_t r = 0; r < group_size; ++r) {
                double* d = dx.row(gi * group_size + r);
                for (std::size_t j = 0; j < cols; ++j) d[j] = gy[j] * inv;
            }
        }
        accumulate(*n.parents[0], dx);
    });
}

NodeRef concat_cols(const std::vector<NodeRef>& xs) {
    if (xs.empty()) throw ParamError("concat_cols: empty input list");
    const std::size_t rows = xs[0]->value.rows();
    std::size_t cols = 0;
    for (const auto& x : xs) {
        if (x->value.rows() != rows)
            throw ShapeError("concat_cols: row counts differ (" +
                             xs[0]->value.shape_str() + " vs " +
                             x->value.shape_str() + ")");
        cols += x->value.cols();
    }
    Tensor v(rows, cols);
    std::size_t off = 0;
    for (const auto& x : xs) {
        for (std::size_t i = 0; i < rows; ++i)
            std::copy(x->value.row(i), x->value.row(i) + x->value.cols(),
                      v.row(i) + off);
        off += x->value.cols();
    }
    std::vector<NodeRef> parents = xs;
    return make_op(std::move(v), std::move(parents), [](const GraphNode& n) {
        std::size_t off = 0;
        for (const auto& p : n.parents) {
            const std::size_t pc = p->value.cols();
            if (p->requires_grad) {
                Tensor dp(p->value.rows(), pc);
                for (std::size_t i = 0; i < dp.rows(); ++i)
                    std::copy(n.grad.row(i) + off, n.grad.row(i) + off + pc,
                              dp.row(i));
                accumulate(*p, dp);
            }
            off += pc;
        }
    });
}

NodeRef concat_rows(const std::vector<NodeRef>& xs) {
    if (xs.empty()) throw ParamError("concat_rows: empty input list");
    const std::size_t cols = xs[0]->value.cols();
    std::size_t rows = 0;
    for (const auto& x : xs) {
        if (x->value.cols() != cols)
            throw ShapeError("concat_rows: column counts differ (" +
                             xs[0]->value.shape_str() + " vs " +
                             x->value.shape_str() + ")");
        rows += x->value.rows();
    }
    Tensor v(rows, cols);
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.size(), v.row(off));
        off += x->value.rows();
    }
    std::vector<NodeRef> parents = xs;
    return make_op(std::move(v), std::move(parents), [cols](const GraphNode& n) {
        std::size_t off = 0;
        for (const auto& p : n.parents) {
            if (p->requires_grad) {
                double* dst = p->grad.data();
                const double* src = n.grad.row(off);
                for (std::size_t i = 0; i < p->value.size(); ++i) dst[i] += src[i];
            }
            off += p->value.rows();
        }
        (void)cols;
    });
}

// ---- attention -----------------------------------------------------

namespace {

void check_attention_weights(std::size_t d_model, const AttentionWeights& w) {
    if (w.wq.empty() || w.wq.size() != w.wk.size() || w.wq.size() != w.wv.size())
        throw ConfigError("attention: need one wq/wk/wv per head");
    if (d_model % w.wq.size() != 0)
        throw ConfigError("attention: d_model " + std::to_string(d_model) +
                          " not divisible by " + std::to_string(w.wq.size()) +
                          " heads");
    const std::size_t dk = d_model / w.wq.size();
    for (std::size_t h = 0; h < w.wq.size(); ++h) {
        for (const NodeRef* m : {&w.wq[h], &w.wk[h], &w.wv[h]}) {
            const Tensor& t = (*m)->value;
            if (t.rows() != d_model || t.cols() != dk)
                throw ConfigError("attention: head projection shape " + t.shape_str() +
                                  " (expected " + std::to_string(d_model) + "x" +
                                  std::to_string(dk) + ")");
        }
    }
    if (w.wf->value.rows() != d_model || w.wf->value.cols() != d_model)
        throw ConfigError("attention: wf shape " + w.wf->value.shape_str() +
                          " (expected " + std::to_string(d_model) + "x" +
                          std::to_string(d_model) + ")");
}

} // namespace

NodeRef self_attention_batched(const NodeRef& x, const AttentionWeights& w,
                               std::size_t tokens) {
    const std::size_t d_model = x->value.cols();
    check_attention_weights(d_model, w);
    if (tokens == 0 || x->value.rows() % tokens != 0)
        throw ShapeError("attention: " + std::to_string(x->value.rows()) +
                         " stacked rows are not a multiple of sequence length " +
                         std::to_string(tokens));
    const std::size_t heads = w.wq.size();
    const std::size_t dk = d_model / heads;
    const std::size_t batch = x->value.rows() / tokens;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    std::vector<NodeRef> head_out(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        NodeRef q = matmul(x, w.wq[h]);
        NodeRef k = matmul(x, w.wk[h]);
        NodeRef v = matmul(x, w.wv[h]);
        if (batch == 1) {
            NodeRef scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
            head_out[h] = matmul(softmax_rows(scores, 1.0), v);
        } else {
            std::vector<NodeRef> zs(batch);
            for (std::size_t s = 0; s < batch; ++s) {
                NodeRef qs = slice_rows(q, s * tokens, tokens);
                NodeRef ks = slice_rows(k, s * tokens, tokens);
                NodeRef vs = slice_rows(v, s * tokens, tokens);
                NodeRef scores = scale(matmul(qs, transpose(ks)), inv_sqrt_dk);
                zs[s] = matmul(softmax_rows(scores, 1.0), vs);
            }
            head_out[h] = concat_rows(zs);
        }
    }
    NodeRef z = heads == 1 ? head_out[0] : concat_cols(head_out);
    return matmul(z, w.wf);
}

NodeRef self_attention(const NodeRef& x, const AttentionWeights& w) {
    return self_attention_batched(x, w, x->value.rows());
}

// ---- backward ------------------------------------------------------

void backward(const NodeRef& root) {
    if (root->value.rows() != 1 || root->value.cols() != 1)
        throw ParamError("backward: root must be 1x1, got " +
                         root->value.shape_str());

    // Iterative post-order DFS over parents.
    std::vector<GraphNode*> order;
    std::unordered_set<GraphNode*> seen;
    std::vector<std::pair<GraphNode*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            GraphNode* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior nodes get exactly d(root)/d(node) from this sweep; leaves
    // keep accumulating across sweeps.
    for (GraphNode* n : order)
        if (!n->parents.empty()) n->grad.fill(0.0);
    root->grad(0, 0) += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        GraphNode* n = *it;
        if (n->backward_rule && n->requires_grad) n->backward_rule(*n);
    }
}

void zero_grad(const std::vector<NodeRef>& nodes) {
    for (const auto& n : nodes) n->grad.fill(0.0);
}

// ---- gradient checking ----------------------------------------------

GradCheckReport gradient_check(const std::function<NodeRef()>& fn,
                               const std::vector<NodeRef>& params,
                               double step, double tol) {
    zero_grad(params);
    NodeRef root = fn();
    backward(root);

    GradCheckReport report;
    report.tolerance = tol;
    for (const auto& p : params) {
        double worst = 0.0;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.data()[i];
            p->value.data()[i] = saved + step;
            const double up = fn()->value(0, 0);
            p->value.data()[i] = saved - step;
            const double dn = fn()->value(0, 0);
            p->value.data()[i] = saved;
            const double fd = (up - dn) / (2.0 * step);
            const double ad = p->grad.data()[i];
            const double err = std::abs(ad - fd) /
                               std::max({1.0, std::abs(ad), std::abs(fd)});
            worst = std::max(worst, err);
        }
        report.max_rel_err.push_back(worst);
        report.worst = std::max(report.worst, worst);
    }
    report.passed = report.worst <= tol;
    return report;
}

} // namespace tsgps
