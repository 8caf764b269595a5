#include "dicos/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>

namespace dicos::ops {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const MatR>;
using MutMap = Eigen::Map<MatR>;

Tape* tracking_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* tape = Tape::current();
    if (!tape) return nullptr;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return tape;
    }
    return nullptr;
}

Tape* tracking_tape(const std::vector<Tensor>& inputs) {
    Tape* tape = Tape::current();
    if (!tape) return nullptr;
    for (const auto& t : inputs) {
        if (t.requires_grad()) return tape;
    }
    return nullptr;
}

void check_finite(const std::vector<double>& v, const char* op) {
    if (!Eigen::Map<const Eigen::ArrayXd>(v.data(), static_cast<Eigen::Index>(v.size())).allFinite()) {
        throw NumericError(std::string(op) + ": non-finite output");
    }
}

// Output tensor; grad buffer is allocated lazily by the backward pass.
Tensor make_output(Shape shape, std::vector<double> data, Tape* tape, const char* op) {
    check_finite(data, op);
    Tensor out(std::move(shape), std::move(data), false);
    if (tape) out.impl()->requires_grad = true;
    return out;
}

bool has_incoming(const std::shared_ptr<TensorImpl>& o) {
    return o->grad.size() == o->data.size();
}

std::vector<double>* grad_of(const std::shared_ptr<TensorImpl>& t) {
    if (!t->requires_grad) return nullptr;
    t->ensure_grad();
    return &t->grad;
}

struct Dims {
    std::size_t rows;
    std::size_t cols;
};

Dims as_matrix(const Tensor& t, const char* op) {
    if (t.dim() == 1) return {1, t.shape()[0]};
    if (t.dim() == 2) return {t.shape()[0], t.shape()[1]};
    throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
    }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
    Tape* tape = tracking_tape({&x});
    std::vector<double> out(x.numel());
    auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
    Tensor result = make_output(x.shape(), std::move(out), tape, op);
    if (tape) {
        tape->record([o = result.impl(), px = x.impl(), deriv]() {
            if (!has_incoming(o)) return;
            auto* gx = grad_of(px);
            if (!gx) return;
            for (std::size_t i = 0; i < o->data.size(); ++i) {
                (*gx)[i] += o->grad[i] * deriv(px->data[i], o->data[i]);
            }
        });
    }
    return result;
}

struct AxisLayout {
    std::size_t outer;
    std::size_t length;
    std::size_t inner;
};

AxisLayout axis_layout(const Tensor& x, int axis, const char* op) {
    const auto& s = x.shape();
    int rank = static_cast<int>(s.size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw DimensionError(std::string(op) + ": axis out of range");
    AxisLayout l{1, s[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) l.outer *= s[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < rank; ++i) l.inner *= s[static_cast<std::size_t>(i)];
    if (l.length == 0) throw DimensionError(std::string(op) + ": empty axis");
    return l;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    auto [m, k] = as_matrix(a, "matmul");
    auto [k2, n] = as_matrix(b, "matmul");
    if (k != k2) {
        throw DimensionError("matmul: inner extents differ, " + shape_to_string(a.shape()) + " x " +
                             shape_to_string(b.shape()));
    }
    Tape* tape = tracking_tape({&a, &b});
    std::vector<double> out(m * n);
    MutMap(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
    Tensor result = make_output({m, n}, std::move(out), tape, "matmul");
    if (tape) {
        tape->record([o = result.impl(), pa = a.impl(), pb = b.impl(), m, k, n]() {
            if (!has_incoming(o)) return;
            ConstMap go(o->grad.data(), m, n);
            if (auto* ga = grad_of(pa)) {
                MutMap(ga->data(), m, k).noalias() += go * ConstMap(pb->data.data(), k, n).transpose();
            }
            if (auto* gb = grad_of(pb)) {
                MutMap(gb->data(), k, n).noalias() += ConstMap(pa->data.data(), m, k).transpose() * go;
            }
        });
    }
    return result;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    auto [m, k] = as_matrix(a, "matmul_nt");
    auto [n, k2] = as_matrix(b, "matmul_nt");
    if (k != k2) {
        throw DimensionError("matmul_nt: inner extents differ, " + shape_to_string(a.shape()) + " x " +
                             shape_to_string(b.shape()) + "^T");
    }
    Tape* tape = tracking_tape({&a, &b});
    std::vector<double> out(m * n);
    MutMap(out.data(), m, n).noalias() =
        ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), n, k).transpose();
    Tensor result = make_output({m, n}, std::move(out), tape, "matmul_nt");
    if (tape) {
        tape->record([o = result.impl(), pa = a.impl(), pb = b.impl(), m, k, n]() {
            if (!has_incoming(o)) return;
            ConstMap go(o->grad.data(), m, n);
            if (auto* ga = grad_of(pa)) {
                MutMap(ga->data(), m, k).noalias() += go * ConstMap(pb->data.data(), n, k);
            }
            if (auto* gb = grad_of(pb)) {
                MutMap(gb->data(), n, k).noalias() += go.transpose() * ConstMap(pa->data.data(), m, k);
            }
        });
    }
    return result;
}

Tensor transpose(const Tensor& a) {
    auto [m, n] = as_matrix(a, "transpose");
    Tape* tape = tracking_tape({&a});
    std::vector<double> out(m * n);
    MutMap(out.data(), n, m) = ConstMap(a.data().data(), m, n).transpose();
    Tensor result = make_output({n, m}, std::move(out), tape, "transpose");
    if (tape) {
        tape->record([o = result.impl(), pa = a.impl(), m, n]() {
            if (!has_incoming(o)) return;
            if (auto* ga = grad_of(pa)) {
                MutMap(ga->data(), m, n) += ConstMap(o->grad.data(), n, m).transpose();
            }
        });
    }
    return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tape* tape = tracking_tape({&a, &b});
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    Tensor result = make_output(a.shape(), std::move(out), tape, "add");
    if (tape) {
        tape->record([o = result.impl(), pa = a.impl(), pb = b.impl()]() {
            if (!has_incoming(o)) return;
            for (const auto& p : {pa, pb}) {
                if (auto* g = grad_of(p)) {
                    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o->grad[i];
                }
            }
        });
    }
    return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tape* tape = tracking_tape({&a, &b});
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    Tensor result = make_output(a.shape(), std::move(out), tape, "sub");
    if (tape) {
        tape->record([o = result.impl(), pa = a.impl(), pb = b.impl()]() {
            if (!has_incoming(o)) return;
            if (auto* g = grad_of(pa)) {
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o->grad[i];
            }
            if (auto* g = grad_of(pb)) {
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= o->grad[i];
            }
        });
    }
    return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tape* tape = tracking_tape({&a, &b});
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    Tensor result = make_output(a.shape(), std::move(out), tape, "mul");
    if (tape) {
        tape->record([o = result.impl(), pa = a.impl(), pb = b.impl()]() {
            if (!has_incoming(o)) return;
            if (auto* g = grad_of(pa)) {
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o->grad[i] * pb->data[i];
            }
            if (auto* g = grad_of(pb)) {
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o->grad[i] * pa->data[i];
            }
        });
    }
    return result;
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, "scale", [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary(
        a, "add_scalar", [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    auto [n, d] = as_matrix(x, "add_bias");
    if (bias.numel() != d) {
        throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match trailing extent of " +
                             shape_to_string(x.shape()));
    }
    Tape* tape = tracking_tape({&x, &bias});
    std::vector<double> out(x.data().begin(), x.data().end());
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) out[r * d + c] += bias.at(c);
    }
    Tensor result = make_output(x.shape(), std::move(out), tape, "add_bias");
    if (tape) {
        tape->record([o = result.impl(), px = x.impl(), pb = bias.impl(), n, d]() {
            if (!has_incoming(o)) return;
            if (auto* g = grad_of(px)) {
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o->grad[i];
            }
            if (auto* g = grad_of(pb)) {
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t c = 0; c < d; ++c) (*g)[c] += o->grad[r * d + c];
                }
            }
        });
    }
    return result;
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
    auto [n, d] = as_matrix(x, "scale_rows");
    if (s.numel() != n) {
        throw DimensionError("scale_rows: " + std::to_string(s.numel()) + " factors for " + std::to_string(n) +
                             " rows");
    }
    Tape* tape = tracking_tape({&x, &s});
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) out[r * d + c] = x.at(r * d + c) * s.at(r);
    }
    Tensor result = make_output(x.shape(), std::move(out), tape, "scale_rows");
    if (tape) {
        tape->record([o = result.impl(), px = x.impl(), ps = s.impl(), n, d]() {
            if (!has_incoming(o)) return;
            if (auto* g = grad_of(px)) {
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t c = 0; c < d; ++c) (*g)[r * d + c] += o->grad[r * d + c] * ps->data[r];
                }
            }
            if (auto* g = grad_of(ps)) {
                for (std::size_t r = 0; r < n; ++r) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < d; ++c) acc += o->grad[r * d + c] * px->data[r * d + c];
                    (*g)[r] += acc;
                }
            }
        });
    }
    return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
    Tensor probe = Tensor::zeros(shape);  // validates extents
    if (probe.numel() != x.numel()) {
        throw DimensionError("reshape: " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
    }
    Tape* tape = tracking_tape({&x});
    Tensor result = make_output(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), tape,
                                "reshape");
    if (tape) {
        tape->record([o = result.impl(), px = x.impl()]() {
            if (!has_incoming(o)) return;
            if (auto* g = grad_of(px)) {
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o->grad[i];
            }
        });
    }
    return result;
}

Tensor tanh(const Tensor& x) {
    return unary(
        x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, "sigmoid",
        [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
    return unary(
        x, "relu", [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& x) {
    return unary(
        x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor log_sigmoid(const Tensor& x) {
    // log(sigmoid(v)) = -softplus(-v)
    return unary(
        x, "log_sigmoid",
        [](double v) { return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v)); },
        [](double v, double) {
            return v >= 0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
        });
}

Tensor softmax(const Tensor& x, int axis) {
    AxisLayout l = axis_layout(x, axis, "softmax");
    Tape* tape = tracking_tape({&x});
    std::vector<double> out(x.numel());
    auto in = x.data();
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t i = 0; i < l.inner; ++i) {
            std::size_t base = o * l.length * l.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < l.length; ++k) mx = std::max(mx, in[base + k * l.inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < l.length; ++k) {
                double e = std::exp(in[base + k * l.inner] - mx);
                out[base + k * l.inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < l.length; ++k) out[base + k * l.inner] /= z;
        }
    }
    Tensor result = make_output(x.shape(), std::move(out), tape, "softmax");
    if (tape) {
        tape->record([o = result.impl(), px = x.impl(), l]() {
            if (!has_incoming(o)) return;
            auto* g = grad_of(px);
            if (!g) return;
            for (std::size_t ou = 0; ou < l.outer; ++ou) {
                for (std::size_t i = 0; i < l.inner; ++i) {
                    std::size_t base = ou * l.length * l.inner + i;
                    double dot = 0.0;
                    for (std::size_t k = 0; k < l.length; ++k) {
                        std::size_t idx = base + k * l.inner;
                        dot += o->grad[idx] * o->data[idx];
                    }
                    for (std::size_t k = 0; k < l.length; ++k) {
                        std::size_t idx = base + k * l.inner;
                        (*g)[idx] += o->data[idx] * (o->grad[idx] - dot);
                    }
                }
            }
        });
    }
    return result;
}

Tensor log_softmax(const Tensor& x, int axis) {
    AxisLayout l = axis_layout(x, axis, "log_softmax");
    Tape* tape = tracking_tape({&x});
    std::vector<double> out(x.numel());
    auto in = x.data();
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t i = 0; i < l.inner; ++i) {
            std::size_t base = o * l.length * l.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < l.length; ++k) mx = std::max(mx, in[base + k * l.inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < l.length; ++k) z += std::exp(in[base + k * l.inner] - mx);
            double lz = mx + std::log(z);
            for (std::size_t k = 0; k < l.length; ++k) out[base + k * l.inner] = in[base + k * l.inner] - lz;
        }
    }
    Tensor result = make_output(x.shape(), std::move(out), tape, "log_softmax");
    if (tape) {
        tape->record([o = result.impl(), px = x.impl(), l]() {
            if (!has_incoming(o)) return;
            auto* g = grad_of(px);
            if (!g) return;
            for (std::size_t ou = 0; ou < l.outer; ++ou) {
                for (std::size_t i = 0; i < l.inner; ++i) {
                    std::size_t base = ou * l.length * l.inner + i;
                    double gsum = 0.0;
                    for (std::size_t k = 0; k < l.length; ++k) gsum += o->grad[base + k * l.inner];
                    for (std::size_t k = 0; k < l.length; ++k) {
                        std::size_t idx = base + k * l.inner;
                        (*g)[idx] += o->grad[idx] - std::exp(o->data[idx]) * gsum;
                    }
                }
            }
        });
    }
    return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    auto [n, d] = as_matrix(x, "layer_norm");
    if (gamma.numel() != d || beta.numel() != d) throw DimensionError("layer_norm: gain/bias extent mismatch");
    Tape* tape = tracking_tape({&x, &gamma, &beta});
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(n);
    auto in = x.data();
    for (std::size_t r = 0; r < n; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c) mu += in[r * d + c];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double t = in[r * d + c] - mu;
            var += t * t;
        }
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) {
            xhat[r * d + c] = (in[r * d + c] - mu) * inv_std[r];
            out[r * d + c] = xhat[r * d + c] * gamma.at(c) + beta.at(c);
        }
    }
    Tensor result = make_output(x.shape(), std::move(out), tape, "layer_norm");
    if (tape) {
        tape->record([o = result.impl(), px = x.impl(), pg = gamma.impl(), pb = beta.impl(), xhat = std::move(xhat),
                      inv_std = std::move(inv_std), n, d]() {
            if (!has_incoming(o)) return;
            if (auto* gg = grad_of(pg)) {
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t c = 0; c < d; ++c) (*gg)[c] += o->grad[r * d + c] * xhat[r * d + c];
                }
            }
            if (auto* gb = grad_of(pb)) {
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t c = 0; c < d; ++c) (*gb)[c] += o->grad[r * d + c];
                }
            }
            if (auto* gx = grad_of(px)) {
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t r = 0; r < n; ++r) {
                    double sum_dy = 0.0;
                    double sum_dy_xhat = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        double dy = o->grad[r * d + c] * pg->data[c];
                        sum_dy += dy;
                        sum_dy_xhat += dy * xhat[r * d + c];
                    }
                    for (std::size_t c = 0; c < d; ++c) {
                        double dy = o->grad[r * d + c] * pg->data[c];
                        (*gx)[r * d + c] +=
                            inv_std[r] * (dy - inv_d * sum_dy - xhat[r * d + c] * inv_d * sum_dy_xhat);
                    }
                }
            }
        });
    }
    return result;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    std::size_t d = as_matrix(parts.front(), "concat_rows").cols;
    std::size_t total = 0;
    for (const auto& p : parts) {
        auto dims = as_matrix(p, "concat_rows");
        if (dims.cols != d) {
            throw DimensionError("concat_rows: column mismatch " + shape_to_string(parts.front().shape()) + " vs " +
                                 shape_to_string(p.shape()));
        }
        total += dims.rows;
    }
    Tape* tape = tracking_tape(parts);
    std::vector<double> out;
    out.reserve(total * d);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    Tensor result = make_output({total, d}, std::move(out), tape, "concat_rows");
    if (tape) {
        std::vector<std::shared_ptr<TensorImpl>> impls;
        for (const auto& p : parts) impls.push_back(p.impl());
        tape->record([o = result.impl(), impls = std::move(impls)]() {
            if (!has_incoming(o)) return;
            std::size_t offset = 0;
            for (const auto& p : impls) {
                if (auto* g = grad_of(p)) {
                    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o->grad[offset + i];
                }
                offset += p->data.size();
            }
        });
    }
    return result;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    std::size_t n = as_matrix(parts.front(), "concat_cols").rows;
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        auto dims = as_matrix(p, "concat_cols");
        if (dims.rows != n) {
            throw DimensionError("concat_cols: row mismatch " + shape_to_string(parts.front().shape()) + " vs " +
                                 shape_to_string(p.shape()));
        }
        widths.push_back(dims.cols);
        total += dims.cols;
    }
    Tape* tape = tracking_tape(parts);
    std::vector<double> out(n * total);
    std::size_t col = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + col + c] = parts[k].at(r * widths[k] + c);
        }
        col += widths[k];
    }
    Tensor result = make_output({n, total}, std::move(out), tape, "concat_cols");
    if (tape) {
        std::vector<std::shared_ptr<TensorImpl>> impls;
        for (const auto& p : parts) impls.push_back(p.impl());
        tape->record([o = result.impl(), impls = std::move(impls), widths = std::move(widths), n, total]() {
            if (!has_incoming(o)) return;
            std::size_t col0 = 0;
            for (std::size_t k = 0; k < impls.size(); ++k) {
                if (auto* g = grad_of(impls[k])) {
                    for (std::size_t r = 0; r < n; ++r) {
                        for (std::size_t c = 0; c < widths[k]; ++c) {
                            (*g)[r * widths[k] + c] += o->grad[r * total + col0 + c];
                        }
                    }
                }
                col0 += widths[k];
            }
        });
    }
    return result;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    auto [n, d] = as_matrix(x, "slice_rows");
    if (begin >= end || end > n) {
        throw DimensionError("slice_rows: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") of " + shape_to_string(x.shape()));
    }
    Tape* tape = tracking_tape({&x});
    std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * d),
                            x.data().begin() + static_cast<std::ptrdiff_t>(end * d));
    Tensor result = make_output({end - begin, d}, std::move(out), tape, "slice_rows");
    if (tape) {
        tape->record([o = result.impl(), px = x.impl(), begin, d]() {
            if (!has_incoming(o)) return;
            if (auto* g = grad_of(px)) {
                for (std::size_t i = 0; i < o->grad.size(); ++i) (*g)[begin * d + i] += o->grad[i];
            }
        });
    }
    return result;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    auto [n, d] = as_matrix(x, "slice_cols");
    if (begin >= end || end > d) {
        throw DimensionError("slice_cols: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") of " + shape_to_string(x.shape()));
    }
    std::size_t w = end - begin;
    Tape* tape = tracking_tape({&x});
    std::vector<double> out(n * w);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < w; ++c) out[r * w + c] = x.at(r * d + begin + c);
    }
    Tensor result = make_output({n, w}, std::move(out), tape, "slice_cols");
    if (tape) {
        tape->record([o = result.impl(), px = x.impl(), begin, n, d, w]() {
            if (!has_incoming(o)) return;
            if (auto* g = grad_of(px)) {
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t c = 0; c < w; ++c) (*g)[r * d + begin + c] += o->grad[r * w + c];
                }
            }
        });
    }
    return result;
}

Tensor row(const Tensor& x, std::size_t i) {
    return slice_rows(x, i, i + 1);
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
    auto [n, d] = as_matrix(table, "gather_rows");
    if (ids.empty()) throw DimensionError("gather_rows: no ids");
    for (auto id : ids) {
        if (id >= n) throw DimensionError("gather_rows: id " + std::to_string(id) + " out of " + std::to_string(n));
    }
    Tape* tape = tracking_tape({&table});
    std::vector<double> out(ids.size() * d);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(ids[r] * d), d,
                    out.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    Tensor result = make_output({ids.size(), d}, std::move(out), tape, "gather_rows");
    if (tape) {
        tape->record([o = result.impl(), pt = table.impl(), ids, d]() {
            if (!has_incoming(o)) return;
            if (auto* g = grad_of(pt)) {
                for (std::size_t r = 0; r < ids.size(); ++r) {
                    for (std::size_t c = 0; c < d; ++c) (*g)[ids[r] * d + c] += o->grad[r * d + c];
                }
            }
        });
    }
    return result;
}

Tensor element(const Tensor& x, std::size_t flat_index) {
    if (flat_index >= x.numel()) throw DimensionError("element: index out of range");
    Tape* tape = tracking_tape({&x});
    Tensor result = make_output({1}, {x.at(flat_index)}, tape, "element");
    if (tape) {
        tape->record([o = result.impl(), px = x.impl(), flat_index]() {
            if (!has_incoming(o)) return;
            if (auto* g = grad_of(px)) (*g)[flat_index] += o->grad[0];
        });
    }
    return result;
}

Tensor sum(const Tensor& x) {
    Tape* tape = tracking_tape({&x});
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor result = make_output({1}, {s}, tape, "sum");
    if (tape) {
        tape->record([o = result.impl(), px = x.impl()]() {
            if (!has_incoming(o)) return;
            if (auto* g = grad_of(px)) {
                for (auto& v : *g) v += o->grad[0];
            }
        });
    }
    return result;
}

Tensor mean(const Tensor& x) {
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng, bool train) {
    if (!train || rate <= 0.0) return x;
    if (rate >= 1.0) throw DimensionError("dropout: rate must be < 1");
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<double> mask(x.numel());
    const double inv = 1.0 / (1.0 - rate);
    for (auto& m : mask) m = keep(rng) ? inv : 0.0;
    Tensor mask_t(x.shape(), std::move(mask));
    return mul(x, mask_t);
}

Tensor grad_gate(const Tensor& x, std::shared_ptr<const bool> open) {
    Tape* tape = tracking_tape({&x});
    if (!tape) return x;
    Tensor result = make_output(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), tape, "grad_gate");
    tape->record([o = result.impl(), px = x.impl(), open = std::move(open)]() {
        if (!has_incoming(o) || !*open) return;
        if (auto* g = grad_of(px)) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o->grad[i];
        }
    });
    return result;
}

Tensor scaled_dot_attention(const Tensor& queries, const Tensor& keys, const Tensor& values) {
    auto q = as_matrix(queries, "attention");
    auto k = as_matrix(keys, "attention");
    auto v = as_matrix(values, "attention");
    if (q.cols == 0) throw DimensionError("attention: zero feature dimension");
    if (q.cols != k.cols) {
        throw DimensionError("attention: query/key width mismatch " + shape_to_string(queries.shape()) + " vs " +
                             shape_to_string(keys.shape()));
    }
    if (k.rows != v.rows) {
        throw DimensionError("attention: key/value count mismatch " + shape_to_string(keys.shape()) + " vs " +
                             shape_to_string(values.shape()));
    }
    Tensor logits = scale(matmul_nt(queries, keys), 1.0 / std::sqrt(static_cast<double>(q.cols)));
    return matmul(softmax(logits, 1), values);
}

}  // namespace dicos::ops
