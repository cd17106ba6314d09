#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mmm/core/tensor.hpp"

namespace mmm::core {

// Additive-mask sentinel for dropped positions. Kept positions carry 0.
constexpr double kMaskDrop = -std::numeric_limits<double>::infinity();

// Label sentinel excluding a position from cross-entropy. Outside every
// possible vocabulary range by construction.
constexpr int kIgnoreId = -100;

namespace detail {

inline bool any_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->requires_grad()) return true;
    return false;
}

inline void check_2d(const Tensor& t, const char* op, const char* role) {
    if (t.rank() != 2)
        throw DimensionError(std::string(op) + ": " + role + " must be 2-D, got " +
                             shape_str(t.shape()));
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise / structural ops
// ---------------------------------------------------------------------------

inline Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: shapes disagree: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    Tensor y(a.shape(), std::move(out), detail::any_grad({&a, &b}));
    if (y.requires_grad()) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {a, b}, [ai, bi, yi] {
            const std::vector<double>& dy = yi->grad;
            if (ai->requires_grad)
                for (std::size_t i = 0; i < dy.size(); ++i) ai->grad[i] += dy[i];
            if (bi->requires_grad)
                for (std::size_t i = 0; i < dy.size(); ++i) bi->grad[i] += dy[i];
        });
    }
    return y;
}

// a[R x C] + row vector b[C], broadcast over rows.
inline Tensor add_rowvec(Graph& g, const Tensor& a, const Tensor& b) {
    detail::check_2d(a, "add_rowvec", "matrix");
    if (b.rank() != 1 || b.dim(0) != a.dim(1))
        throw DimensionError("add_rowvec: row vector " + shape_str(b.shape()) +
                             " does not match matrix " + shape_str(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[i * c + j] + b.data()[j];
    Tensor y(a.shape(), std::move(out), detail::any_grad({&a, &b}));
    if (y.requires_grad()) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {a, b}, [ai, bi, yi, r, c] {
            const std::vector<double>& dy = yi->grad;
            if (ai->requires_grad)
                for (std::size_t i = 0; i < dy.size(); ++i) ai->grad[i] += dy[i];
            if (bi->requires_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) bi->grad[j] += dy[i * c + j];
        });
    }
    return y;
}

inline Tensor scale(Graph& g, const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.data()[i];
    Tensor y(a.shape(), std::move(out), a.requires_grad());
    if (y.requires_grad()) {
        auto ai = a.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {a}, [ai, yi, c] {
            for (std::size_t i = 0; i < yi->grad.size(); ++i) ai->grad[i] += c * yi->grad[i];
        });
    }
    return y;
}

inline Tensor sum(Graph& g, const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    Tensor y = Tensor::scalar(s, a.requires_grad());
    if (y.requires_grad()) {
        auto ai = a.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {a}, [ai, yi] {
            const double dy = yi->grad[0];
            for (double& dv : ai->grad) dv += dy;
        });
    }
    return y;
}

inline Tensor transpose(Graph& g, const Tensor& a) {
    detail::check_2d(a, "transpose", "input");
    const std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
    Tensor y(Shape{c, r}, std::move(out), a.requires_grad());
    if (y.requires_grad()) {
        auto ai = a.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {a}, [ai, yi, r, c] {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ai->grad[i * c + j] += yi->grad[j * r + i];
        });
    }
    return y;
}

// Stacks 2-D blocks with equal column counts on top of each other.
inline Tensor concat_rows(Graph& g, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty part list");
    detail::check_2d(parts[0], "concat_rows", "part");
    const std::size_t c = parts[0].dim(1);
    std::size_t rows = 0;
    for (const Tensor& p : parts) {
        detail::check_2d(p, "concat_rows", "part");
        if (p.dim(1) != c)
            throw DimensionError("concat_rows: column mismatch: " + shape_str(p.shape()) +
                                 " vs expected " + std::to_string(c) + " columns");
        rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(rows * c);
    bool rg = false;
    for (const Tensor& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
        rg = rg || p.requires_grad();
    }
    Tensor y(Shape{rows, c}, std::move(out), rg);
    if (rg) {
        auto yi = y.impl_ptr();
        std::vector<std::shared_ptr<TensorImpl>> impls;
        for (const Tensor& p : parts) impls.push_back(p.impl_ptr());
        g.record(y, parts, [impls, yi] {
            std::size_t off = 0;
            for (auto& pi : impls) {
                const std::size_t n = pi->data.size();
                if (pi->requires_grad)
                    for (std::size_t i = 0; i < n; ++i) pi->grad[i] += yi->grad[off + i];
                off += n;
            }
        });
    }
    return y;
}

inline Tensor slice_rows(Graph& g, const Tensor& a, std::size_t r0, std::size_t r1) {
    detail::check_2d(a, "slice_rows", "input");
    if (r0 > r1 || r1 > a.dim(0))
        throw IndexError("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                         ") out of bounds for " + shape_str(a.shape()));
    const std::size_t c = a.dim(1);
    std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(r0 * c),
                            a.data().begin() + static_cast<std::ptrdiff_t>(r1 * c));
    Tensor y(Shape{r1 - r0, c}, std::move(out), a.requires_grad());
    if (y.requires_grad()) {
        auto ai = a.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {a}, [ai, yi, r0, c] {
            for (std::size_t i = 0; i < yi->grad.size(); ++i) ai->grad[r0 * c + i] += yi->grad[i];
        });
    }
    return y;
}

inline Tensor slice_cols(Graph& g, const Tensor& a, std::size_t c0, std::size_t c1) {
    detail::check_2d(a, "slice_cols", "input");
    if (c0 > c1 || c1 > a.dim(1))
        throw IndexError("slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                         ") out of bounds for " + shape_str(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1), w = c1 - c0;
    std::vector<double> out(r * w);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.data()[i * c + c0 + j];
    Tensor y(Shape{r, w}, std::move(out), a.requires_grad());
    if (y.requires_grad()) {
        auto ai = a.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {a}, [ai, yi, r, c, c0, w] {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    ai->grad[i * c + c0 + j] += yi->grad[i * w + j];
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

inline Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
    detail::check_2d(a, "matmul", "lhs");
    detail::check_2d(b, "matmul", "rhs");
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.data()[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b.data()[p * n + j];
        }
    Tensor y(Shape{m, n}, std::move(out), detail::any_grad({&a, &b}));
    if (y.requires_grad()) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {a, b}, [ai, bi, yi, m, k, n] {
            const std::vector<double>& dy = yi->grad;
            if (ai->requires_grad) { // dA = dY . B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                            s += dy[i * n + j] * bi->data[p * n + j];
                        ai->grad[i * k + p] += s;
                    }
            }
            if (bi->requires_grad) { // dB = A^T . dY
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t i = 0; i < m; ++i) {
                        const double av = ai->data[i * k + p];
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j)
                            bi->grad[p * n + j] += av * dy[i * n + j];
                    }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

// x: [C_in x L], w: [C_out x C_in x K], bias: [C_out]. Zero padding.
// Output length L' = floor((L + pad_left + pad_right - K) / stride) + 1.
inline Tensor conv1d(Graph& g, const Tensor& x, const Tensor& w, const Tensor& bias,
                     std::size_t stride, std::size_t pad_left, std::size_t pad_right) {
    detail::check_2d(x, "conv1d", "input");
    if (w.rank() != 3)
        throw DimensionError("conv1d: weight must be 3-D [C_out x C_in x K], got " +
                             shape_str(w.shape()));
    if (bias.rank() != 1 || bias.dim(0) != w.dim(0))
        throw DimensionError("conv1d: bias " + shape_str(bias.shape()) +
                             " does not match weight " + shape_str(w.shape()));
    if (w.dim(1) != x.dim(0))
        throw DimensionError("conv1d: input channels disagree: input " + shape_str(x.shape()) +
                             " vs weight " + shape_str(w.shape()));
    if (stride == 0) throw ContractError("conv1d: stride must be positive");
    const std::size_t c_in = x.dim(0), len = x.dim(1);
    const std::size_t c_out = w.dim(0), k = w.dim(2);
    const std::size_t padded = len + pad_left + pad_right;
    if (k > padded)
        throw DimensionError("conv1d: window " + std::to_string(k) +
                             " larger than padded input length " + std::to_string(padded));
    const std::size_t out_len = (padded - k) / stride + 1;

    std::vector<double> out(c_out * out_len);
    for (std::size_t co = 0; co < c_out; ++co)
        for (std::size_t t = 0; t < out_len; ++t) {
            double s = bias.data()[co];
            for (std::size_t ci = 0; ci < c_in; ++ci)
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(t * stride + kk) -
                                             static_cast<std::ptrdiff_t>(pad_left);
                    if (j < 0 || j >= static_cast<std::ptrdiff_t>(len)) continue;
                    s += x.data()[ci * len + static_cast<std::size_t>(j)] *
                         w.data()[(co * c_in + ci) * k + kk];
                }
            out[co * out_len + t] = s;
        }
    Tensor y(Shape{c_out, out_len}, std::move(out), detail::any_grad({&x, &w, &bias}));
    if (y.requires_grad()) {
        auto xi = x.impl_ptr(), wi = w.impl_ptr(), bi = bias.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {x, w, bias}, [xi, wi, bi, yi, c_in, len, c_out, k, out_len, stride, pad_left] {
            const std::vector<double>& dy = yi->grad;
            for (std::size_t co = 0; co < c_out; ++co)
                for (std::size_t t = 0; t < out_len; ++t) {
                    const double d = dy[co * out_len + t];
                    if (d == 0.0) continue;
                    if (bi->requires_grad) bi->grad[co] += d;
                    for (std::size_t ci = 0; ci < c_in; ++ci)
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            const std::ptrdiff_t j =
                                static_cast<std::ptrdiff_t>(t * stride + kk) -
                                static_cast<std::ptrdiff_t>(pad_left);
                            if (j < 0 || j >= static_cast<std::ptrdiff_t>(len)) continue;
                            const std::size_t xj = ci * len + static_cast<std::size_t>(j);
                            const std::size_t wj = (co * c_in + ci) * k + kk;
                            if (xi->requires_grad) xi->grad[xj] += d * wi->data[wj];
                            if (wi->requires_grad) wi->grad[wj] += d * xi->data[xj];
                        }
                }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// gelu (exact, erf-based)
// ---------------------------------------------------------------------------

inline double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_derivative(double x) {
    constexpr double inv_sqrt_2pi = 0.3989422804014326779; // 1/sqrt(2*pi)
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

inline Tensor gelu(Graph& g, const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(a.data()[i]);
    Tensor y(a.shape(), std::move(out), a.requires_grad());
    if (y.requires_grad()) {
        auto ai = a.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {a}, [ai, yi] {
            for (std::size_t i = 0; i < yi->grad.size(); ++i)
                ai->grad[i] += gelu_derivative(ai->data[i]) * yi->grad[i];
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// masked softmax
// ---------------------------------------------------------------------------

// Softmax over the last dimension. The additive mask holds 0 for kept
// positions and kMaskDrop for dropped ones; dropped positions end up with
// exactly zero probability and contribute no gradient. The mask is a
// constant: it must not require gradient.
inline Tensor masked_softmax(Graph& g, const Tensor& logits, const Tensor& mask) {
    if (logits.shape() != mask.shape())
        throw DimensionError("masked_softmax: logits " + shape_str(logits.shape()) +
                             " and mask " + shape_str(mask.shape()) + " differ");
    if (logits.rank() < 1)
        throw DimensionError("masked_softmax: scalar input not supported");
    if (mask.requires_grad())
        throw ContractError("masked_softmax: mask must not require gradient");
    const std::size_t t = logits.shape().back();
    const std::size_t rows = logits.numel() / t;
    for (double mv : mask.data())
        if (mv != 0.0 && mv != kMaskDrop)
            throw ContractError("masked_softmax: mask entries must be 0 or the drop sentinel");

    std::vector<double> out(logits.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = logits.data().data() + r * t;
        const double* m = mask.data().data() + r * t;
        double mx = kMaskDrop;
        for (std::size_t j = 0; j < t; ++j)
            if (m[j] == 0.0) mx = std::max(mx, z[j]);
        if (mx == kMaskDrop)
            throw DegenerateRowError("masked_softmax: row " + std::to_string(r) +
                                     " has every position masked out");
        double s = 0.0;
        for (std::size_t j = 0; j < t; ++j) {
            const double e = (m[j] == 0.0) ? std::exp(z[j] - mx) : 0.0;
            out[r * t + j] = e;
            s += e;
        }
        for (std::size_t j = 0; j < t; ++j) out[r * t + j] /= s;
    }
    Tensor y(logits.shape(), std::move(out), logits.requires_grad());
    if (y.requires_grad()) {
        auto zi = logits.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {logits}, [zi, yi, rows, t] {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* p = yi->data.data() + r * t;
                const double* dy = yi->grad.data() + r * t;
                double dot = 0.0;
                for (std::size_t j = 0; j < t; ++j) dot += p[j] * dy[j];
                for (std::size_t j = 0; j < t; ++j)
                    zi->grad[r * t + j] += p[j] * (dy[j] - dot);
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// embedding lookup
// ---------------------------------------------------------------------------

inline Tensor embedding_lookup(Graph& g, const Tensor& table, const std::vector<int>& ids) {
    detail::check_2d(table, "embedding_lookup", "table");
    const std::size_t v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= v)
            throw IndexError("embedding_lookup: id " + std::to_string(id) +
                             " outside vocabulary of size " + std::to_string(v));
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data().begin() + static_cast<std::size_t>(ids[i]) * d, d,
                    out.begin() + i * d);
    Tensor y(Shape{ids.size(), d}, std::move(out), table.requires_grad());
    if (y.requires_grad()) {
        auto ti = table.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {table}, [ti, yi, ids, d] {
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const std::size_t row = static_cast<std::size_t>(ids[i]) * d;
                for (std::size_t j = 0; j < d; ++j) ti->grad[row + j] += yi->grad[i * d + j];
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// cross entropy with ignore id
// ---------------------------------------------------------------------------

// Mean negative log-likelihood over positions whose label is not ignore_id.
// When every position is ignored, the result is exactly 0 with no gradient.
inline Tensor cross_entropy_ignore(Graph& g, const Tensor& logits, const std::vector<int>& labels,
                                   int ignore_id) {
    detail::check_2d(logits, "cross_entropy_ignore", "logits");
    const std::size_t t = logits.dim(0), v = logits.dim(1);
    if (labels.size() != t)
        throw DimensionError("cross_entropy_ignore: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(t) + " logit rows");
    std::vector<std::size_t> sup;
    for (std::size_t i = 0; i < t; ++i) {
        if (labels[i] == ignore_id) continue;
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= v)
            throw IndexError("cross_entropy_ignore: label " + std::to_string(labels[i]) +
                             " outside vocabulary of size " + std::to_string(v));
        sup.push_back(i);
    }
    if (sup.empty()) return Tensor::scalar(0.0);

    // Stable log-softmax per supervised row; keep probabilities for backward.
    std::vector<double> probs(sup.size() * v);
    double loss = 0.0;
    for (std::size_t s = 0; s < sup.size(); ++s) {
        const double* z = logits.data().data() + sup[s] * v;
        double mx = z[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, z[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < v; ++j) {
            const double e = std::exp(z[j] - mx);
            probs[s * v + j] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < v; ++j) probs[s * v + j] /= sum;
        const double lse = mx + std::log(sum);
        loss += lse - z[static_cast<std::size_t>(labels[sup[s]])];
    }
    loss /= static_cast<double>(sup.size());

    Tensor y = Tensor::scalar(loss, logits.requires_grad());
    if (y.requires_grad()) {
        auto zi = logits.impl_ptr(), yi = y.impl_ptr();
        const std::vector<int> lab = labels;
        g.record(y, {logits}, [zi, yi, probs = std::move(probs), sup = std::move(sup), lab, v] {
            const double d = yi->grad[0] / static_cast<double>(sup.size());
            for (std::size_t s = 0; s < sup.size(); ++s) {
                double* dz = zi->grad.data() + sup[s] * v;
                const double* p = probs.data() + s * v;
                for (std::size_t j = 0; j < v; ++j) dz[j] += d * p[j];
                dz[static_cast<std::size_t>(lab[sup[s]])] -= d;
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// layer norm
// ---------------------------------------------------------------------------

// Standardizes each length-D row (biased variance) then applies gain/shift.
inline Tensor layernorm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& shift,
                        double eps) {
    if (x.rank() < 1) throw DimensionError("layernorm: scalar input not supported");
    const std::size_t d = x.shape().back();
    if (gain.rank() != 1 || gain.dim(0) != d || shift.rank() != 1 || shift.dim(0) != d)
        throw DimensionError("layernorm: gain " + shape_str(gain.shape()) + " / shift " +
                             shape_str(shift.shape()) + " do not match last dim of " +
                             shape_str(x.shape()));
    const std::size_t rows = x.numel() / d;
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(rows);
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (xr[j] - mean) * is;
            xhat[r * d + j] = xh;
            out[r * d + j] = gain.data()[j] * xh + shift.data()[j];
        }
    }
    Tensor y(x.shape(), std::move(out), detail::any_grad({&x, &gain, &shift}));
    if (y.requires_grad()) {
        auto xi = x.impl_ptr(), gi = gain.impl_ptr(), si = shift.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {x, gain, shift},
                 [xi, gi, si, yi, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d] {
                     for (std::size_t r = 0; r < rows; ++r) {
                         const double* dy = yi->grad.data() + r * d;
                         const double* xh = xhat.data() + r * d;
                         if (gi->requires_grad)
                             for (std::size_t j = 0; j < d; ++j) gi->grad[j] += dy[j] * xh[j];
                         if (si->requires_grad)
                             for (std::size_t j = 0; j < d; ++j) si->grad[j] += dy[j];
                         if (xi->requires_grad) {
                             double mean_dg = 0.0, mean_dgx = 0.0;
                             for (std::size_t j = 0; j < d; ++j) {
                                 const double dg = dy[j] * gi->data[j];
                                 mean_dg += dg;
                                 mean_dgx += dg * xh[j];
                             }
                             mean_dg /= static_cast<double>(d);
                             mean_dgx /= static_cast<double>(d);
                             for (std::size_t j = 0; j < d; ++j) {
                                 const double dg = dy[j] * gi->data[j];
                                 xi->grad[r * d + j] +=
                                     inv_std[r] * (dg - mean_dg - xh[j] * mean_dgx);
                             }
                         }
                     }
                 });
    }
    return y;
}

} // namespace mmm::core
