#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mmm/core/ops.hpp"
#include "mmm/core/tensor.hpp"

namespace mmm::core {

// Elementwise product. Mostly used to build non-uniform scalar objectives for
// gradient checking; cheap enough to keep in the main op set.
inline Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("mul: shapes disagree: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    Tensor y(a.shape(), std::move(out), detail::any_grad({&a, &b}));
    if (y.requires_grad()) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), yi = y.impl_ptr();
        g.record(y, {a, b}, [ai, bi, yi] {
            for (std::size_t i = 0; i < yi->grad.size(); ++i) {
                if (ai->requires_grad) ai->grad[i] += bi->data[i] * yi->grad[i];
                if (bi->requires_grad) bi->grad[i] += ai->data[i] * yi->grad[i];
            }
        });
    }
    return y;
}

// A scalar-valued function of several tensors, evaluated on a fresh graph.
using ScalarFn = std::function<Tensor(Graph&, const std::vector<Tensor>&)>;

struct GradCheckInputRow {
    std::string name;
    std::size_t coords = 0;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::vector<GradCheckInputRow> inputs;
    // Worst offending coordinate, for diagnostics.
    std::size_t worst_input = 0;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool pass(double tol) const { return max_rel_err <= tol; }
};

// Central finite differences (f(x+h) - f(x-h)) / 2h per coordinate, compared
// against the reverse-mode gradient. Failures are reported, never thrown.
// Input gradients are cleared as a side effect. Tensors are shared handles,
// so the by-value vector still perturbs the caller's storage in place.
inline GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-4,
                                  const std::vector<std::string>& names = {}) {
    for (Tensor& in : inputs)
        if (!in.requires_grad())
            throw ContractError("grad_check: every checked input must require gradient");

    for (Tensor& in : inputs) in.clear_grad();
    Graph g;
    Tensor out = f(g, inputs);
    if (!out.valid() || out.numel() != 1)
        throw ContractError("grad_check: objective must return a scalar");
    g.backward(out);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (Tensor& in : inputs)
        analytic.push_back(in.has_grad() ? in.grad() : std::vector<double>(in.numel(), 0.0));

    GradCheckReport rep;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        GradCheckInputRow row;
        row.name = i < names.size() ? names[i] : ("input" + std::to_string(i));
        row.coords = inputs[i].numel();
        std::vector<double>& x = inputs[i].data();
        for (std::size_t c = 0; c < x.size(); ++c) {
            const double keep = x[c];
            x[c] = keep + h;
            Graph gp;
            const double fp = f(gp, inputs).value();
            x[c] = keep - h;
            Graph gm;
            const double fm = f(gm, inputs).value();
            x[c] = keep;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[i][c];
            const double rel =
                std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
            if (rel > row.max_rel_err) row.max_rel_err = rel;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_input = i;
                rep.worst_coord = c;
                rep.worst_analytic = a;
                rep.worst_numeric = numeric;
            }
        }
        rep.inputs.push_back(std::move(row));
    }
    for (Tensor& in : inputs) in.clear_grad();
    return rep;
}

} // namespace mmm::core
