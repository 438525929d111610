#include "okapi/graph.hpp"

#include <cmath>
#include <numbers>

#include "okapi/errors.hpp"

namespace okapi {

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

size_t numel_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

void require(bool ok, const std::string& op, const std::string& what) {
    if (!ok) throw ShapeError(op + ": " + what);
}

void require_same_shape(const std::string& op, const TensorNode* a, const TensorNode* b) {
    if (a->shape != b->shape)
        throw ShapeError(op + ": shape mismatch " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
}

double sigmoid_stable(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_stable(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

constexpr double kLnEps = 1e-5; // layer_norm variance epsilon

} // namespace

TensorNode* Graph::new_node(std::vector<int> shape, const std::string& tag,
                            std::vector<TensorNode*> parents) {
    nodes_.emplace_back();
    TensorNode& n = nodes_.back();
    n.shape = std::move(shape);
    size_t sz = numel_of(n.shape);
    n.data.assign(sz, 0.0);
    n.grad.assign(sz, 0.0);
    n.op_tag = tag;
    n.parents = std::move(parents);
    return &n;
}

TensorNode* Graph::input(std::vector<int> shape, std::vector<double> data,
                         const std::string& tag) {
    size_t sz = numel_of(shape);
    require(data.size() == sz, tag,
            "data size " + std::to_string(data.size()) + " does not match shape " +
                shape_str(shape));
    TensorNode* n = new_node(std::move(shape), tag, {});
    n->data = std::move(data);
    return n;
}

TensorNode* Graph::constant(std::vector<int> shape, std::vector<double> data) {
    TensorNode* n = input(std::move(shape), std::move(data), "const");
    n->is_constant = true;
    return n;
}

TensorNode* Graph::scalar(double v) { return constant({1}, {v}); }

TensorNode* Graph::add(TensorNode* a, TensorNode* b) {
    // bias-add: [r,c] + [c]
    bool bias = a->shape.size() == 2 && b->shape.size() == 1 && b->shape[0] == a->shape[1];
    if (!bias) require_same_shape("add", a, b);
    TensorNode* out = new_node(a->shape, "add", {a, b});
    int r = a->rows(), c = bias ? a->shape[1] : static_cast<int>(a->numel());
    if (bias) {
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) out->data[i * c + j] = a->data[i * c + j] + b->data[j];
    } else {
        for (size_t i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] + b->data[i];
    }
    if (grad_enabled_) {
        out->backward_fn = [out, a, b, bias, r, c]() {
            if (bias) {
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j) {
                        a->grad[i * c + j] += out->grad[i * c + j];
                        b->grad[j] += out->grad[i * c + j];
                    }
            } else {
                for (size_t i = 0; i < out->numel(); ++i) {
                    a->grad[i] += out->grad[i];
                    b->grad[i] += out->grad[i];
                }
            }
        };
    }
    return out;
}

TensorNode* Graph::sub(TensorNode* a, TensorNode* b) {
    require_same_shape("sub", a, b);
    TensorNode* out = new_node(a->shape, "sub", {a, b});
    for (size_t i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] - b->data[i];
    if (grad_enabled_) {
        out->backward_fn = [out, a, b]() {
            for (size_t i = 0; i < out->numel(); ++i) {
                a->grad[i] += out->grad[i];
                b->grad[i] -= out->grad[i];
            }
        };
    }
    return out;
}

TensorNode* Graph::mul(TensorNode* a, TensorNode* b) {
    require_same_shape("mul", a, b);
    TensorNode* out = new_node(a->shape, "mul", {a, b});
    for (size_t i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (grad_enabled_) {
        out->backward_fn = [out, a, b]() {
            for (size_t i = 0; i < out->numel(); ++i) {
                a->grad[i] += out->grad[i] * b->data[i];
                b->grad[i] += out->grad[i] * a->data[i];
            }
        };
    }
    return out;
}

TensorNode* Graph::scale(TensorNode* a, double k) {
    TensorNode* out = new_node(a->shape, "scale", {a});
    for (size_t i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] * k;
    if (grad_enabled_) {
        out->backward_fn = [out, a, k]() {
            for (size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i] * k;
        };
    }
    return out;
}

TensorNode* Graph::unary(TensorNode* a, const std::string& tag, double (*f)(double),
                         double (*df)(double, double)) {
    TensorNode* out = new_node(a->shape, tag, {a});
    for (size_t i = 0; i < a->numel(); ++i) out->data[i] = f(a->data[i]);
    if (grad_enabled_) {
        out->backward_fn = [out, a, df]() {
            for (size_t i = 0; i < out->numel(); ++i)
                a->grad[i] += out->grad[i] * df(a->data[i], out->data[i]);
        };
    }
    return out;
}

TensorNode* Graph::sigmoid(TensorNode* a) {
    return unary(a, "sigmoid", [](double x) { return sigmoid_stable(x); },
                 [](double, double y) { return y * (1.0 - y); });
}

TensorNode* Graph::softplus(TensorNode* a) {
    return unary(a, "softplus", [](double x) { return softplus_stable(x); },
                 [](double x, double) { return sigmoid_stable(x); });
}

TensorNode* Graph::gelu(TensorNode* a) {
    return unary(a, "gelu",
                 [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); },
                 [](double x, double) {
                     double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
                     double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
                     return cdf + x * pdf;
                 });
}

TensorNode* Graph::exp(TensorNode* a) {
    return unary(a, "exp", [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
}

TensorNode* Graph::min_elem(TensorNode* a, TensorNode* b) {
    require_same_shape("min_elem", a, b);
    TensorNode* out = new_node(a->shape, "min_elem", {a, b});
    for (size_t i = 0; i < a->numel(); ++i) out->data[i] = std::min(a->data[i], b->data[i]);
    if (grad_enabled_) {
        out->backward_fn = [out, a, b]() {
            for (size_t i = 0; i < out->numel(); ++i) {
                if (a->data[i] <= b->data[i])
                    a->grad[i] += out->grad[i];
                else
                    b->grad[i] += out->grad[i];
            }
        };
    }
    return out;
}

TensorNode* Graph::clamp(TensorNode* a, double lo, double hi) {
    require(lo <= hi, "clamp", "lo > hi");
    TensorNode* out = new_node(a->shape, "clamp", {a});
    for (size_t i = 0; i < a->numel(); ++i)
        out->data[i] = std::min(std::max(a->data[i], lo), hi);
    if (grad_enabled_) {
        out->backward_fn = [out, a, lo, hi]() {
            for (size_t i = 0; i < out->numel(); ++i)
                if (a->data[i] > lo && a->data[i] < hi) a->grad[i] += out->grad[i];
        };
    }
    return out;
}

TensorNode* Graph::matmul(TensorNode* a, TensorNode* b) {
    require(a->shape.size() == 2 && b->shape.size() == 2, "matmul", "operands must be 2-D");
    if (a->shape[1] != b->shape[0])
        throw ShapeError("matmul: inner dimensions disagree " + shape_str(a->shape) + " x " +
                         shape_str(b->shape));
    int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    TensorNode* out = new_node({m, n}, "matmul", {a, b});
    const double* A = a->data.data();
    const double* B = b->data.data();
    double* C = out->data.data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* brow = B + p * n;
            double* crow = C + i * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    if (grad_enabled_) {
        out->backward_fn = [out, a, b, m, k, n]() {
            const double* G = out->grad.data();
            const double* A = a->data.data();
            const double* B = b->data.data();
            double* dA = a->grad.data();
            double* dB = b->grad.data();
            // dA = G * B^T
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    double g = G[i * n + j];
                    if (g == 0.0) continue;
                    const double* bcol = B + j; // stride n
                    for (int p = 0; p < k; ++p) dA[i * k + p] += g * bcol[p * n];
                }
            // dB = A^T * G
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double av = A[i * k + p];
                    if (av == 0.0) continue;
                    const double* grow = G + i * n;
                    double* drow = dB + p * n;
                    for (int j = 0; j < n; ++j) drow[j] += av * grow[j];
                }
        };
    }
    return out;
}

TensorNode* Graph::transpose(TensorNode* a) {
    require(a->shape.size() == 2, "transpose", "operand must be 2-D");
    int m = a->shape[0], n = a->shape[1];
    TensorNode* out = new_node({n, m}, "transpose", {a});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->data[j * m + i] = a->data[i * n + j];
    if (grad_enabled_) {
        out->backward_fn = [out, a, m, n]() {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) a->grad[i * n + j] += out->grad[j * m + i];
        };
    }
    return out;
}

TensorNode* Graph::softmax(TensorNode* a) {
    require(a->shape.size() <= 2, "softmax", "operand must be 1-D or 2-D");
    int r = a->rows(), c = a->shape.size() == 2 ? a->shape[1] : a->shape[0];
    if (a->shape.size() == 1) r = 1;
    TensorNode* out = new_node(a->shape, "softmax", {a});
    for (int i = 0; i < r; ++i) {
        const double* x = a->data.data() + i * c;
        double* y = out->data.data() + i * c;
        double m = x[0];
        for (int j = 1; j < c; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - m);
            s += y[j];
        }
        for (int j = 0; j < c; ++j) y[j] /= s;
    }
    if (grad_enabled_) {
        out->backward_fn = [out, a, r, c]() {
            for (int i = 0; i < r; ++i) {
                const double* y = out->data.data() + i * c;
                const double* dy = out->grad.data() + i * c;
                double dot = 0.0;
                for (int j = 0; j < c; ++j) dot += dy[j] * y[j];
                double* dx = a->grad.data() + i * c;
                for (int j = 0; j < c; ++j) dx[j] += y[j] * (dy[j] - dot);
            }
        };
    }
    return out;
}

TensorNode* Graph::log_softmax(TensorNode* a) {
    require(a->shape.size() <= 2, "log_softmax", "operand must be 1-D or 2-D");
    int r = a->rows(), c = a->shape.size() == 2 ? a->shape[1] : a->shape[0];
    if (a->shape.size() == 1) r = 1;
    TensorNode* out = new_node(a->shape, "log_softmax", {a});
    for (int i = 0; i < r; ++i) {
        const double* x = a->data.data() + i * c;
        double* y = out->data.data() + i * c;
        double m = x[0];
        for (int j = 1; j < c; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += std::exp(x[j] - m);
        double lse = m + std::log(s);
        for (int j = 0; j < c; ++j) y[j] = x[j] - lse;
    }
    if (grad_enabled_) {
        out->backward_fn = [out, a, r, c]() {
            for (int i = 0; i < r; ++i) {
                const double* y = out->data.data() + i * c;
                const double* dy = out->grad.data() + i * c;
                double gsum = 0.0;
                for (int j = 0; j < c; ++j) gsum += dy[j];
                double* dx = a->grad.data() + i * c;
                for (int j = 0; j < c; ++j) dx[j] += dy[j] - std::exp(y[j]) * gsum;
            }
        };
    }
    return out;
}

TensorNode* Graph::layer_norm(TensorNode* a, TensorNode* gain, TensorNode* bias) {
    require(a->shape.size() <= 2, "layer_norm", "operand must be 1-D or 2-D");
    int r = a->shape.size() == 2 ? a->shape[0] : 1;
    int c = a->shape.size() == 2 ? a->shape[1] : a->shape[0];
    require(gain->shape.size() == 1 && gain->shape[0] == c, "layer_norm",
            "gain must be [" + std::to_string(c) + "], got " + shape_str(gain->shape));
    require(bias->shape.size() == 1 && bias->shape[0] == c, "layer_norm",
            "bias must be [" + std::to_string(c) + "], got " + shape_str(bias->shape));
    TensorNode* out = new_node(a->shape, "layer_norm", {a, gain, bias});
    std::vector<double> xhat(static_cast<size_t>(r) * c);
    std::vector<double> inv_std(r);
    for (int i = 0; i < r; ++i) {
        const double* x = a->data.data() + i * c;
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += x[j];
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= c;
        double is = 1.0 / std::sqrt(var + kLnEps);
        inv_std[i] = is;
        for (int j = 0; j < c; ++j) {
            double xh = (x[j] - mu) * is;
            xhat[i * c + j] = xh;
            out->data[i * c + j] = xh * gain->data[j] + bias->data[j];
        }
    }
    if (grad_enabled_) {
        out->backward_fn = [out, a, gain, bias, r, c, xhat = std::move(xhat),
                            inv_std = std::move(inv_std)]() {
            for (int i = 0; i < r; ++i) {
                const double* dy = out->grad.data() + i * c;
                const double* xh = xhat.data() + i * c;
                double mq = 0.0, mqx = 0.0;
                for (int j = 0; j < c; ++j) {
                    double q = gain->data[j] * dy[j];
                    mq += q;
                    mqx += q * xh[j];
                }
                mq /= c;
                mqx /= c;
                double* dx = a->grad.data() + i * c;
                for (int j = 0; j < c; ++j) {
                    double q = gain->data[j] * dy[j];
                    dx[j] += (q - mq - xh[j] * mqx) * inv_std[i];
                    gain->grad[j] += dy[j] * xh[j];
                    bias->grad[j] += dy[j];
                }
            }
        };
    }
    return out;
}

TensorNode* Graph::concat(TensorNode* a, TensorNode* b, int axis) {
    require(a->shape.size() == 2 && b->shape.size() == 2, "concat", "operands must be 2-D");
    require(axis == 0 || axis == 1, "concat", "axis must be 0 or 1");
    int ar = a->shape[0], ac = a->shape[1], br = b->shape[0], bc = b->shape[1];
    if (axis == 0) {
        require(ac == bc, "concat",
                "column counts disagree " + shape_str(a->shape) + " vs " + shape_str(b->shape));
        TensorNode* out = new_node({ar + br, ac}, "concat", {a, b});
        std::copy(a->data.begin(), a->data.end(), out->data.begin());
        std::copy(b->data.begin(), b->data.end(), out->data.begin() + a->numel());
        if (grad_enabled_) {
            out->backward_fn = [out, a, b]() {
                for (size_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[i];
                for (size_t i = 0; i < b->numel(); ++i) b->grad[i] += out->grad[a->numel() + i];
            };
        }
        return out;
    }
    require(ar == br, "concat",
            "row counts disagree " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    TensorNode* out = new_node({ar, ac + bc}, "concat", {a, b});
    for (int i = 0; i < ar; ++i) {
        std::copy(a->data.begin() + i * ac, a->data.begin() + (i + 1) * ac,
                  out->data.begin() + i * (ac + bc));
        std::copy(b->data.begin() + i * bc, b->data.begin() + (i + 1) * bc,
                  out->data.begin() + i * (ac + bc) + ac);
    }
    if (grad_enabled_) {
        out->backward_fn = [out, a, b, ar, ac, bc]() {
            for (int i = 0; i < ar; ++i)
                for (int j = 0; j < ac + bc; ++j) {
                    double g = out->grad[i * (ac + bc) + j];
                    if (j < ac)
                        a->grad[i * ac + j] += g;
                    else
                        b->grad[i * bc + (j - ac)] += g;
                }
        };
    }
    return out;
}

TensorNode* Graph::slice(TensorNode* a, int axis, int begin, int end) {
    require(a->shape.size() == 2, "slice", "operand must be 2-D");
    require(axis == 0 || axis == 1, "slice", "axis must be 0 or 1");
    int limit = a->shape[axis];
    require(0 <= begin && begin < end && end <= limit, "slice",
            "range [" + std::to_string(begin) + "," + std::to_string(end) + ") out of bounds for " +
                shape_str(a->shape));
    int r = a->shape[0], c = a->shape[1];
    if (axis == 0) {
        TensorNode* out = new_node({end - begin, c}, "slice", {a});
        std::copy(a->data.begin() + begin * c, a->data.begin() + end * c, out->data.begin());
        if (grad_enabled_) {
            out->backward_fn = [out, a, begin, c]() {
                for (size_t i = 0; i < out->numel(); ++i) a->grad[begin * c + i] += out->grad[i];
            };
        }
        return out;
    }
    int w = end - begin;
    TensorNode* out = new_node({r, w}, "slice", {a});
    for (int i = 0; i < r; ++i)
        std::copy(a->data.begin() + i * c + begin, a->data.begin() + i * c + end,
                  out->data.begin() + i * w);
    if (grad_enabled_) {
        out->backward_fn = [out, a, begin, r, c, w]() {
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < w; ++j) a->grad[i * c + begin + j] += out->grad[i * w + j];
        };
    }
    return out;
}

TensorNode* Graph::embedding_lookup(TensorNode* table, const std::vector<int>& ids) {
    require(table->shape.size() == 2, "embedding_lookup", "table must be 2-D");
    require(!ids.empty(), "embedding_lookup", "empty id list");
    int v = table->shape[0], d = table->shape[1];
    for (int id : ids)
        require(0 <= id && id < v, "embedding_lookup",
                "id " + std::to_string(id) + " outside table of " + std::to_string(v) + " rows");
    int t = static_cast<int>(ids.size());
    TensorNode* out = new_node({t, d}, "embedding_lookup", {table});
    for (int i = 0; i < t; ++i)
        std::copy(table->data.begin() + ids[i] * d, table->data.begin() + (ids[i] + 1) * d,
                  out->data.begin() + i * d);
    if (grad_enabled_) {
        out->backward_fn = [out, table, ids, t, d]() {
            for (int i = 0; i < t; ++i)
                for (int j = 0; j < d; ++j) table->grad[ids[i] * d + j] += out->grad[i * d + j];
        };
    }
    return out;
}

TensorNode* Graph::gather_rows(TensorNode* a, const std::vector<int>& ids) {
    require(a->shape.size() == 2, "gather_rows", "operand must be 2-D");
    require(static_cast<int>(ids.size()) == a->shape[0], "gather_rows",
            "need one column index per row");
    int c = a->shape[1];
    for (int id : ids)
        require(0 <= id && id < c, "gather_rows",
                "column " + std::to_string(id) + " outside " + shape_str(a->shape));
    int t = static_cast<int>(ids.size());
    TensorNode* out = new_node({t}, "gather_rows", {a});
    for (int i = 0; i < t; ++i) out->data[i] = a->data[i * c + ids[i]];
    if (grad_enabled_) {
        out->backward_fn = [out, a, ids, t, c]() {
            for (int i = 0; i < t; ++i) a->grad[i * c + ids[i]] += out->grad[i];
        };
    }
    return out;
}

TensorNode* Graph::sum(TensorNode* a) {
    TensorNode* out = new_node({1}, "sum", {a});
    double s = 0.0;
    for (double v : a->data) s += v;
    out->data[0] = s;
    if (grad_enabled_) {
        out->backward_fn = [out, a]() {
            for (size_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[0];
        };
    }
    return out;
}

TensorNode* Graph::mean(TensorNode* a) {
    require(a->numel() > 0, "mean", "empty operand");
    TensorNode* out = new_node({1}, "mean", {a});
    double s = 0.0;
    for (double v : a->data) s += v;
    double inv = 1.0 / static_cast<double>(a->numel());
    out->data[0] = s * inv;
    if (grad_enabled_) {
        out->backward_fn = [out, a, inv]() {
            for (size_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[0] * inv;
        };
    }
    return out;
}

void Graph::backward(TensorNode* loss) {
    if (!grad_enabled_) throw Error("backward: graph was built with gradients disabled");
    if (!loss->is_scalar())
        throw ShapeError("backward: loss must be a scalar node, got shape " +
                         shape_str(loss->shape));
    // Accumulation contract: each call adds one full d loss / d node sweep.
    // Stash prior grads, propagate on clean buffers, then add them back.
    std::vector<std::vector<double>> saved;
    saved.reserve(nodes_.size());
    for (auto& n : nodes_) {
        saved.push_back(std::move(n.grad));
        n.grad.assign(n.data.size(), 0.0);
    }
    loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
        if (it->backward_fn) it->backward_fn();
    for (auto& n : nodes_)
        if (n.is_constant) std::fill(n.grad.begin(), n.grad.end(), 0.0);
    size_t k = 0;
    for (auto& n : nodes_) {
        const auto& prev = saved[k++];
        for (size_t i = 0; i < prev.size(); ++i) n.grad[i] += prev[i];
    }
}

void Graph::zero_grad() {
    for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

} // namespace okapi
