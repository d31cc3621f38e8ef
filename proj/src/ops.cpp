#include "evolm/ops.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "evolm/error.hpp"
#include "evolm/kernels.hpp"

namespace evolm::ops {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_2d(const Tensor& t, const char* what) {
    if (t.ndim() != 2) {
        throw DimensionError(std::string(what) + " expects a 2-D tensor, got " +
                             shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + " shape mismatch: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

// Marks the output as gradient-bearing and reports whether a backward node
// is needed at all.
bool wants_grad(Graph& g, Tensor& out, std::initializer_list<const Tensor*> inputs) {
    if (!g.recording()) {
        return false;
    }
    bool any = false;
    for (const Tensor* t : inputs) {
        any = any || (*t).requires_grad();
    }
    out.set_requires_grad(any);
    return any;
}

std::pair<std::int64_t, std::int64_t> row_split(const Tensor& t) {
    if (t.ndim() < 1) {
        throw DimensionError("expected at least one axis");
    }
    const std::int64_t cols = t.dim(t.ndim() - 1);
    const std::int64_t rows = cols == 0 ? 0 : t.size() / cols;
    return {rows, cols};
}

void transpose_into(const double* src, double* dst, std::int64_t rows, std::int64_t cols) {
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) {
            dst[j * rows + i] = src[i * cols + j];
        }
    }
}

void check_distribution_rows(const Tensor& t, const char* what) {
    const auto [rows, cols] = row_split(t);
    const double* d = t.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
            s += d[r * cols + c];
        }
        if (std::abs(s - 1.0) > 1e-6) {
            throw ContractError(std::string(what) + " row " + std::to_string(r) +
                                " sums to " + std::to_string(s) + ", expected 1");
        }
    }
}

// Shared forward/backward for cross entropy over one or more rows.
Tensor cross_entropy_impl(Graph& g, const Tensor& p, const Tensor& target, const char* name) {
    require_same_shape(p, target, name);
    check_distribution_rows(p, "cross_entropy p");
    check_distribution_rows(target, "cross_entropy target");
    const auto [rows, cols] = row_split(p);
    double total = 0.0;
    const double* pd = p.data();
    const double* td = target.data();
    for (std::int64_t i = 0; i < rows * cols; ++i) {
        total -= td[i] * std::log(std::max(pd[i], kLogClamp));
    }
    Tensor out = Tensor::scalar(total);
    if (wants_grad(g, out, {&p, &target})) {
        g.record(name, [p, target, out](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go) {
                return;
            }
            const double gs = (*go)[0];
            const double* pd2 = p.data();
            const double* td2 = target.data();
            const std::int64_t n = p.size();
            if (p.requires_grad()) {
                auto& ga = adj.of(p);
                for (std::int64_t i = 0; i < n; ++i) {
                    if (pd2[i] > kLogClamp) {
                        ga[static_cast<std::size_t>(i)] -= gs * td2[i] / pd2[i];
                    }
                }
            }
            if (target.requires_grad()) {
                auto& gt = adj.of(target);
                for (std::int64_t i = 0; i < n; ++i) {
                    gt[static_cast<std::size_t>(i)] -= gs * std::log(std::max(pd2[i], kLogClamp));
                }
            }
        });
    }
    return out;
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul lhs");
    require_2d(b, "matmul rhs");
    const std::int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw DimensionError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    kernels::active().matmul(a.data(), b.data(), out.data(), static_cast<std::size_t>(m),
                             static_cast<std::size_t>(k), static_cast<std::size_t>(n));
    if (wants_grad(g, out, {&a, &b})) {
        g.record("matmul", [a, b, out, m, k, n](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go) {
                return;
            }
            const auto& kt = kernels::active();
            if (a.requires_grad()) {
                // dA = dOut * B^T
                std::vector<double> bt(static_cast<std::size_t>(k * n));
                transpose_into(b.data(), bt.data(), k, n);
                std::vector<double> tmp(static_cast<std::size_t>(m * k));
                kt.matmul(go->data(), bt.data(), tmp.data(), static_cast<std::size_t>(m),
                          static_cast<std::size_t>(n), static_cast<std::size_t>(k));
                kt.axpy(1.0, tmp.data(), adj.of(a).data(), tmp.size());
            }
            if (b.requires_grad()) {
                // dB = A^T * dOut
                std::vector<double> at(static_cast<std::size_t>(m * k));
                transpose_into(a.data(), at.data(), m, k);
                std::vector<double> tmp(static_cast<std::size_t>(k * n));
                kt.matmul(at.data(), go->data(), tmp.data(), static_cast<std::size_t>(k),
                          static_cast<std::size_t>(m), static_cast<std::size_t>(n));
                kt.axpy(1.0, tmp.data(), adj.of(b).data(), tmp.size());
            }
        });
    }
    return out;
}

Tensor transpose(Graph& g, const Tensor& a) {
    require_2d(a, "transpose");
    const std::int64_t r = a.dim(0), c = a.dim(1);
    Tensor out = Tensor::zeros({c, r});
    transpose_into(a.data(), out.data(), r, c);
    if (wants_grad(g, out, {&a})) {
        g.record("transpose", [a, out, r, c](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go || !a.requires_grad()) {
                return;
            }
            auto& ga = adj.of(a);
            for (std::int64_t i = 0; i < r; ++i) {
                for (std::int64_t j = 0; j < c; ++j) {
                    ga[static_cast<std::size_t>(i * c + j)] +=
                        (*go)[static_cast<std::size_t>(j * r + i)];
                }
            }
        });
    }
    return out;
}

Tensor reshape(Graph& g, const Tensor& a, std::vector<std::int64_t> shape) {
    Tensor out = Tensor::from(std::move(shape), a.values());
    if (out.size() != a.size()) {
        throw DimensionError("reshape changes element count: " + shape_str(a.shape()) + " -> " +
                             shape_str(out.shape()));
    }
    if (wants_grad(g, out, {&a})) {
        g.record("reshape", [a, out](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go || !a.requires_grad()) {
                return;
            }
            kernels::active().axpy(1.0, go->data(), adj.of(a).data(), go->size());
        });
    }
    return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    kernels::active().add(a.data(), b.data(), out.data(), static_cast<std::size_t>(a.size()));
    if (wants_grad(g, out, {&a, &b})) {
        g.record("add", [a, b, out](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go) {
                return;
            }
            if (a.requires_grad()) {
                kernels::active().axpy(1.0, go->data(), adj.of(a).data(), go->size());
            }
            if (b.requires_grad()) {
                kernels::active().axpy(1.0, go->data(), adj.of(b).data(), go->size());
            }
        });
    }
    return out;
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    kernels::active().sub(a.data(), b.data(), out.data(), static_cast<std::size_t>(a.size()));
    if (wants_grad(g, out, {&a, &b})) {
        g.record("sub", [a, b, out](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go) {
                return;
            }
            if (a.requires_grad()) {
                kernels::active().axpy(1.0, go->data(), adj.of(a).data(), go->size());
            }
            if (b.requires_grad()) {
                kernels::active().axpy(-1.0, go->data(), adj.of(b).data(), go->size());
            }
        });
    }
    return out;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    kernels::active().mul(a.data(), b.data(), out.data(), static_cast<std::size_t>(a.size()));
    if (wants_grad(g, out, {&a, &b})) {
        g.record("mul", [a, b, out](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go) {
                return;
            }
            const std::int64_t n = a.size();
            if (a.requires_grad()) {
                auto& ga = adj.of(a);
                const double* bd = b.data();
                for (std::int64_t i = 0; i < n; ++i) {
                    ga[static_cast<std::size_t>(i)] += (*go)[static_cast<std::size_t>(i)] * bd[i];
                }
            }
            if (b.requires_grad()) {
                auto& gb = adj.of(b);
                const double* ad = a.data();
                for (std::int64_t i = 0; i < n; ++i) {
                    gb[static_cast<std::size_t>(i)] += (*go)[static_cast<std::size_t>(i)] * ad[i];
                }
            }
        });
    }
    return out;
}

Tensor add_row_bias(Graph& g, const Tensor& m, const Tensor& bias) {
    require_2d(m, "add_row_bias");
    if (bias.ndim() != 1 || bias.dim(0) != m.dim(1)) {
        throw DimensionError("add_row_bias bias shape " + shape_str(bias.shape()) +
                             " does not match matrix " + shape_str(m.shape()));
    }
    const std::int64_t rows = m.dim(0), cols = m.dim(1);
    Tensor out = Tensor::zeros(m.shape());
    const double* md = m.data();
    const double* bd = bias.data();
    double* od = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        kernels::active().add(md + r * cols, bd, od + r * cols, static_cast<std::size_t>(cols));
    }
    if (wants_grad(g, out, {&m, &bias})) {
        g.record("add_row_bias", [m, bias, out, rows, cols](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go) {
                return;
            }
            if (m.requires_grad()) {
                kernels::active().axpy(1.0, go->data(), adj.of(m).data(), go->size());
            }
            if (bias.requires_grad()) {
                auto& gb = adj.of(bias);
                for (std::int64_t r = 0; r < rows; ++r) {
                    kernels::active().add(gb.data(), go->data() + r * cols, gb.data(),
                                          static_cast<std::size_t>(cols));
                }
            }
        });
    }
    return out;
}

Tensor scale(Graph& g, const Tensor& a, double c) {
    Tensor out = Tensor::from(a.shape(), a.values());
    kernels::active().scale(c, out.data(), static_cast<std::size_t>(out.size()));
    if (wants_grad(g, out, {&a})) {
        g.record("scale", [a, out, c](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go || !a.requires_grad()) {
                return;
            }
            kernels::active().axpy(c, go->data(), adj.of(a).data(), go->size());
        });
    }
    return out;
}

Tensor add_scalar(Graph& g, const Tensor& a, double c) {
    Tensor out = Tensor::from(a.shape(), a.values());
    for (auto& x : out.values()) {
        x += c;
    }
    if (wants_grad(g, out, {&a})) {
        g.record("add_scalar", [a, out](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go || !a.requires_grad()) {
                return;
            }
            kernels::active().axpy(1.0, go->data(), adj.of(a).data(), go->size());
        });
    }
    return out;
}

Tensor sum_all(Graph& g, const Tensor& a) {
    double s = 0.0;
    for (const double x : a.values()) {
        s += x;
    }
    Tensor out = Tensor::scalar(s);
    if (wants_grad(g, out, {&a})) {
        g.record("sum_all", [a, out](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go || !a.requires_grad()) {
                return;
            }
            const double gs = (*go)[0];
            auto& ga = adj.of(a);
            for (auto& x : ga) {
                x += gs;
            }
        });
    }
    return out;
}

Tensor gelu(Graph& g, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    const double* ad = a.data();
    double* od = out.data();
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) {
        od[i] = 0.5 * ad[i] * (1.0 + std::erf(ad[i] * kInvSqrt2));
    }
    if (wants_grad(g, out, {&a})) {
        g.record("gelu", [a, out](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go || !a.requires_grad()) {
                return;
            }
            const double* ad2 = a.data();
            auto& ga = adj.of(a);
            const std::int64_t n2 = a.size();
            for (std::int64_t i = 0; i < n2; ++i) {
                const double x = ad2[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                ga[static_cast<std::size_t>(i)] +=
                    (*go)[static_cast<std::size_t>(i)] * (cdf + x * pdf);
            }
        });
    }
    return out;
}

Tensor log_clamped(Graph& g, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    const double* ad = a.data();
    double* od = out.data();
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) {
        od[i] = std::log(std::max(ad[i], kLogClamp));
    }
    if (wants_grad(g, out, {&a})) {
        g.record("log", [a, out](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go || !a.requires_grad()) {
                return;
            }
            const double* ad2 = a.data();
            auto& ga = adj.of(a);
            const std::int64_t n2 = a.size();
            for (std::int64_t i = 0; i < n2; ++i) {
                if (ad2[i] > kLogClamp) {
                    ga[static_cast<std::size_t>(i)] +=
                        (*go)[static_cast<std::size_t>(i)] / ad2[i];
                }
            }
        });
    }
    return out;
}

Tensor softmax(Graph& g, const Tensor& a) {
    const auto [rows, cols] = row_split(a);
    Tensor out = Tensor::zeros(a.shape());
    const double* ad = a.data();
    double* od = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = ad + r * cols;
        double m = row[0];
        for (std::int64_t c = 1; c < cols; ++c) {
            m = std::max(m, row[c]);
        }
        double denom = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
            const double e = std::exp(row[c] - m);
            od[r * cols + c] = e;
            denom += e;
        }
        const double inv = 1.0 / denom;
        for (std::int64_t c = 0; c < cols; ++c) {
            od[r * cols + c] *= inv;
        }
    }
    if (wants_grad(g, out, {&a})) {
        g.record("softmax", [a, out, rows = rows, cols = cols](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go || !a.requires_grad()) {
                return;
            }
            const double* pd = out.data();
            auto& ga = adj.of(a);
            for (std::int64_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::int64_t c = 0; c < cols; ++c) {
                    dot += (*go)[static_cast<std::size_t>(r * cols + c)] * pd[r * cols + c];
                }
                for (std::int64_t c = 0; c < cols; ++c) {
                    const std::size_t i = static_cast<std::size_t>(r * cols + c);
                    ga[i] += pd[i] * ((*go)[i] - dot);
                }
            }
        });
    }
    return out;
}

namespace {

// Shared forward for layer_norm/standardize: fills `normed` with the
// pre-affine values and returns per-row inverse standard deviations.
std::vector<double> normalize_rows(const Tensor& x, double* normed) {
    const auto [rows, cols] = row_split(x);
    std::vector<double> rstd(static_cast<std::size_t>(rows));
    const double* xd = x.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = xd + r * cols;
        double mean = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
            mean += row[c];
        }
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
            const double d = row[c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        rstd[static_cast<std::size_t>(r)] = inv;
        for (std::int64_t c = 0; c < cols; ++c) {
            normed[r * cols + c] = (row[c] - mean) * inv;
        }
    }
    return rstd;
}

// dL/dx for a row-normalization given the row's normalized values y and the
// incoming adjoint h (already multiplied by gain where applicable).
void normalize_backward_row(const double* h, const double* y, double inv, std::int64_t cols,
                            double* gx) {
    double mean_h = 0.0;
    double mean_hy = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) {
        mean_h += h[c];
        mean_hy += h[c] * y[c];
    }
    mean_h /= static_cast<double>(cols);
    mean_hy /= static_cast<double>(cols);
    for (std::int64_t c = 0; c < cols; ++c) {
        gx[c] += inv * (h[c] - mean_h - y[c] * mean_hy);
    }
}

}  // namespace

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias) {
    const auto [rows, cols] = row_split(x);
    if (gain.ndim() != 1 || gain.dim(0) != cols || bias.ndim() != 1 || bias.dim(0) != cols) {
        throw DimensionError("layer_norm gain/bias must be length " + std::to_string(cols));
    }
    Tensor normed = Tensor::zeros(x.shape());
    std::vector<double> rstd = normalize_rows(x, normed.data());
    Tensor out = Tensor::zeros(x.shape());
    const double* nd = normed.data();
    const double* gd = gain.data();
    const double* bd = bias.data();
    double* od = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) {
            od[r * cols + c] = nd[r * cols + c] * gd[c] + bd[c];
        }
    }
    if (wants_grad(g, out, {&x, &gain, &bias})) {
        g.record("layer_norm",
                 [x, gain, bias, out, normed, rstd = std::move(rstd), rows = rows,
                  cols = cols](Adjoints& adj) {
                     const auto* go = adj.find(out);
                     if (!go) {
                         return;
                     }
                     const double* nd2 = normed.data();
                     const double* gd2 = gain.data();
                     if (bias.requires_grad()) {
                         auto& gb = adj.of(bias);
                         for (std::int64_t r = 0; r < rows; ++r) {
                             for (std::int64_t c = 0; c < cols; ++c) {
                                 gb[static_cast<std::size_t>(c)] +=
                                     (*go)[static_cast<std::size_t>(r * cols + c)];
                             }
                         }
                     }
                     if (gain.requires_grad()) {
                         auto& gg = adj.of(gain);
                         for (std::int64_t r = 0; r < rows; ++r) {
                             for (std::int64_t c = 0; c < cols; ++c) {
                                 gg[static_cast<std::size_t>(c)] +=
                                     (*go)[static_cast<std::size_t>(r * cols + c)] *
                                     nd2[r * cols + c];
                             }
                         }
                     }
                     if (x.requires_grad()) {
                         auto& gx = adj.of(x);
                         std::vector<double> h(static_cast<std::size_t>(cols));
                         for (std::int64_t r = 0; r < rows; ++r) {
                             for (std::int64_t c = 0; c < cols; ++c) {
                                 h[static_cast<std::size_t>(c)] =
                                     (*go)[static_cast<std::size_t>(r * cols + c)] * gd2[c];
                             }
                             normalize_backward_row(h.data(), nd2 + r * cols,
                                                    rstd[static_cast<std::size_t>(r)], cols,
                                                    gx.data() + r * cols);
                         }
                     }
                 });
    }
    return out;
}

Tensor standardize(Graph& g, const Tensor& x) {
    const auto [rows, cols] = row_split(x);
    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> rstd = normalize_rows(x, out.data());
    if (wants_grad(g, out, {&x})) {
        g.record("standardize",
                 [x, out, rstd = std::move(rstd), rows = rows, cols = cols](Adjoints& adj) {
                     const auto* go = adj.find(out);
                     if (!go || !x.requires_grad()) {
                         return;
                     }
                     const double* nd = out.data();
                     auto& gx = adj.of(x);
                     for (std::int64_t r = 0; r < rows; ++r) {
                         normalize_backward_row(go->data() + r * cols, nd + r * cols,
                                                rstd[static_cast<std::size_t>(r)], cols,
                                                gx.data() + r * cols);
                     }
                 });
    }
    return out;
}

Tensor gather_rows(Graph& g, const Tensor& m, const std::vector<std::int64_t>& ids) {
    require_2d(m, "gather_rows");
    const std::int64_t rows = m.dim(0), cols = m.dim(1);
    for (const auto id : ids) {
        if (id < 0 || id >= rows) {
            throw DimensionError("gather_rows index " + std::to_string(id) +
                                 " out of range [0, " + std::to_string(rows) + ")");
        }
    }
    const std::int64_t n = static_cast<std::int64_t>(ids.size());
    Tensor out = Tensor::zeros({n, cols});
    const double* md = m.data();
    double* od = out.data();
    for (std::int64_t i = 0; i < n; ++i) {
        std::memcpy(od + i * cols, md + ids[static_cast<std::size_t>(i)] * cols,
                    static_cast<std::size_t>(cols) * sizeof(double));
    }
    if (wants_grad(g, out, {&m})) {
        g.record("gather_rows", [m, out, ids, cols](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go || !m.requires_grad()) {
                return;
            }
            auto& gm = adj.of(m);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                kernels::active().add(gm.data() + ids[i] * cols,
                                      go->data() + static_cast<std::int64_t>(i) * cols,
                                      gm.data() + ids[i] * cols, static_cast<std::size_t>(cols));
            }
        });
    }
    return out;
}

Tensor gather_cols_per_row(Graph& g, const Tensor& m, const std::vector<std::int64_t>& idx,
                           std::int64_t out_cols) {
    require_2d(m, "gather_cols_per_row");
    const std::int64_t rows = m.dim(0), buckets = m.dim(1);
    if (static_cast<std::int64_t>(idx.size()) != rows * out_cols) {
        throw DimensionError("gather_cols_per_row index count " + std::to_string(idx.size()) +
                             " does not equal rows*out_cols");
    }
    for (const auto b : idx) {
        if (b < 0 || b >= buckets) {
            throw DimensionError("gather_cols_per_row bucket " + std::to_string(b) +
                                 " out of range [0, " + std::to_string(buckets) + ")");
        }
    }
    Tensor out = Tensor::zeros({rows, out_cols});
    const double* md = m.data();
    double* od = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < out_cols; ++c) {
            od[r * out_cols + c] = md[r * buckets + idx[static_cast<std::size_t>(r * out_cols + c)]];
        }
    }
    if (wants_grad(g, out, {&m})) {
        g.record("gather_cols_per_row", [m, out, idx, rows, buckets, out_cols](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go || !m.requires_grad()) {
                return;
            }
            auto& gm = adj.of(m);
            for (std::int64_t r = 0; r < rows; ++r) {
                for (std::int64_t c = 0; c < out_cols; ++c) {
                    gm[static_cast<std::size_t>(
                        r * buckets + idx[static_cast<std::size_t>(r * out_cols + c)])] +=
                        (*go)[static_cast<std::size_t>(r * out_cols + c)];
                }
            }
        });
    }
    return out;
}

Tensor concat_rows(Graph& g, const Tensor& a, const Tensor& b) {
    require_2d(a, "concat_rows");
    require_2d(b, "concat_rows");
    if (a.dim(1) != b.dim(1)) {
        throw DimensionError("concat_rows column mismatch: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    const std::int64_t ra = a.dim(0), rb = b.dim(0), cols = a.dim(1);
    Tensor out = Tensor::zeros({ra + rb, cols});
    std::memcpy(out.data(), a.data(), static_cast<std::size_t>(ra * cols) * sizeof(double));
    std::memcpy(out.data() + ra * cols, b.data(),
                static_cast<std::size_t>(rb * cols) * sizeof(double));
    if (wants_grad(g, out, {&a, &b})) {
        g.record("concat_rows", [a, b, out, ra, rb, cols](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go) {
                return;
            }
            if (a.requires_grad()) {
                kernels::active().axpy(1.0, go->data(), adj.of(a).data(),
                                       static_cast<std::size_t>(ra * cols));
            }
            if (b.requires_grad()) {
                kernels::active().axpy(1.0, go->data() + ra * cols, adj.of(b).data(),
                                       static_cast<std::size_t>(rb * cols));
            }
        });
    }
    return out;
}

Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols requires at least one part");
    }
    const std::int64_t rows = parts.front().dim(0);
    std::int64_t total = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        if (p.dim(0) != rows) {
            throw DimensionError("concat_cols row mismatch");
        }
        total += p.dim(1);
    }
    Tensor out = Tensor::zeros({rows, total});
    double* od = out.data();
    std::int64_t offset = 0;
    for (const auto& p : parts) {
        const std::int64_t c = p.dim(1);
        for (std::int64_t r = 0; r < rows; ++r) {
            std::memcpy(od + r * total + offset, p.data() + r * c,
                        static_cast<std::size_t>(c) * sizeof(double));
        }
        offset += c;
    }
    bool any = false;
    for (const auto& p : parts) {
        any = any || p.requires_grad();
    }
    if (g.recording()) {
        out.set_requires_grad(any);
    }
    if (g.recording() && any) {
        g.record("concat_cols", [parts, out, rows, total](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go) {
                return;
            }
            std::int64_t off = 0;
            for (const auto& p : parts) {
                const std::int64_t c = p.dim(1);
                if (p.requires_grad()) {
                    auto& gp = adj.of(p);
                    for (std::int64_t r = 0; r < rows; ++r) {
                        kernels::active().add(gp.data() + r * c, go->data() + r * total + off,
                                              gp.data() + r * c, static_cast<std::size_t>(c));
                    }
                }
                off += c;
            }
        });
    }
    return out;
}

Tensor masked_fill(Graph& g, const Tensor& a, const std::vector<std::uint8_t>& keep,
                   double value) {
    if (static_cast<std::int64_t>(keep.size()) != a.size()) {
        throw DimensionError("masked_fill mask length " + std::to_string(keep.size()) +
                             " does not match tensor " + shape_str(a.shape()));
    }
    Tensor out = Tensor::zeros(a.shape());
    const double* ad = a.data();
    double* od = out.data();
    for (std::size_t i = 0; i < keep.size(); ++i) {
        od[i] = keep[i] ? ad[i] : value;
    }
    if (wants_grad(g, out, {&a})) {
        g.record("masked_fill", [a, out, keep](Adjoints& adj) {
            const auto* go = adj.find(out);
            if (!go || !a.requires_grad()) {
                return;
            }
            auto& ga = adj.of(a);
            for (std::size_t i = 0; i < keep.size(); ++i) {
                if (keep[i]) {
                    ga[i] += (*go)[i];
                }
            }
        });
    }
    return out;
}

Tensor cross_entropy(Graph& g, const Tensor& p, const Tensor& target) {
    if (p.ndim() != 1 || target.ndim() != 1) {
        throw DimensionError("cross_entropy expects 1-D distributions");
    }
    if (p.dim(0) != target.dim(0)) {
        throw DimensionError("cross_entropy length mismatch: " + shape_str(p.shape()) + " vs " +
                             shape_str(target.shape()));
    }
    return cross_entropy_impl(g, p, target, "cross_entropy");
}

Tensor cross_entropy_rowsum(Graph& g, const Tensor& p, const Tensor& target) {
    require_2d(p, "cross_entropy_rowsum");
    require_same_shape(p, target, "cross_entropy_rowsum");
    return cross_entropy_impl(g, p, target, "cross_entropy_rowsum");
}

}  // namespace evolm::ops
