#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "mmm/core/gradcheck.hpp"
#include "mmm/core/ops.hpp"
#include "mmm/core/rng.hpp"

namespace mmm::core {

struct SuiteOpResult {
    std::string op;
    std::size_t cases = 0;
    double max_rel_err = 0.0;
};

struct SuiteResult {
    std::vector<SuiteOpResult> ops;
    double max_rel_err = 0.0;
    bool pass(double tol) const { return max_rel_err <= tol; }
};

namespace suite_detail {

inline Tensor rand_t(Rng& rng, Shape shape, bool rg = true) {
    return Tensor::uniform(rng, std::move(shape), 1.0, rg);
}

// Non-uniform scalar objective: sum(y * weights) with fixed random weights.
inline Tensor weighted(Graph& g, const Tensor& y, const Tensor& w) {
    return sum(g, mul(g, y, w));
}

inline GradCheckReport case_matmul(Rng& rng, double h) {
    const std::size_t m = 1 + rng.uniform_int(1, 5), k = 1 + rng.uniform_int(0, 4),
                      n = 1 + rng.uniform_int(0, 4);
    Tensor a = rand_t(rng, {m, k}), b = rand_t(rng, {k, n});
    Tensor w = rand_t(rng, {m, n}, false);
    return grad_check(
        [w](Graph& g, const std::vector<Tensor>& in) {
            return weighted(g, matmul(g, in[0], in[1]), w);
        },
        {a, b}, h, {"a", "b"});
}

inline GradCheckReport case_conv1d(Rng& rng, double h) {
    const std::size_t c_in = 1 + rng.uniform_int(0, 2), c_out = 1 + rng.uniform_int(0, 2);
    const std::size_t k = 2 + rng.uniform_int(0, 3), len = k + rng.uniform_int(0, 9);
    const std::size_t stride = 1 + rng.uniform_int(0, 2);
    const std::size_t pl = rng.uniform_int(0, 2), pr = rng.uniform_int(0, 2);
    Tensor x = rand_t(rng, {c_in, len});
    Tensor wt = rand_t(rng, {c_out, c_in, k});
    Tensor b = rand_t(rng, {c_out});
    const std::size_t out_len = (len + pl + pr - k) / stride + 1;
    Tensor w = rand_t(rng, {c_out, out_len}, false);
    return grad_check(
        [w, stride, pl, pr](Graph& g, const std::vector<Tensor>& in) {
            return weighted(g, conv1d(g, in[0], in[1], in[2], stride, pl, pr), w);
        },
        {x, wt, b}, h, {"x", "w", "bias"});
}

inline GradCheckReport case_gelu(Rng& rng, double h) {
    const std::size_t n = 1 + rng.uniform_int(0, 19);
    Tensor x = Tensor::uniform(rng, {n}, 3.0, true);
    Tensor w = rand_t(rng, {n}, false);
    return grad_check(
        [w](Graph& g, const std::vector<Tensor>& in) { return weighted(g, gelu(g, in[0]), w); },
        {x}, h, {"x"});
}

inline GradCheckReport case_masked_softmax(Rng& rng, double h) {
    const std::size_t r = 1 + rng.uniform_int(0, 3), t = 2 + rng.uniform_int(0, 5);
    Tensor z = rand_t(rng, {r, t});
    Tensor m = Tensor::zeros({r, t});
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t keep = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(t) - 1));
        for (std::size_t j = 0; j < t; ++j)
            if (j != keep && rng.next_double() < 0.3) m.at(i, j) = kMaskDrop;
    }
    Tensor w = rand_t(rng, {r, t}, false);
    return grad_check(
        [w, m](Graph& g, const std::vector<Tensor>& in) {
            return weighted(g, masked_softmax(g, in[0], m), w);
        },
        {z}, h, {"logits"});
}

inline GradCheckReport case_embedding(Rng& rng, double h) {
    const std::size_t v = 3 + rng.uniform_int(0, 5), d = 1 + rng.uniform_int(0, 4);
    const std::size_t t = 1 + rng.uniform_int(0, 7);
    Tensor table = rand_t(rng, {v, d});
    std::vector<int> ids(t);
    for (int& id : ids) id = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(v) - 1));
    Tensor w = rand_t(rng, {t, d}, false);
    return grad_check(
        [w, ids](Graph& g, const std::vector<Tensor>& in) {
            return weighted(g, embedding_lookup(g, in[0], ids), w);
        },
        {table}, h, {"table"});
}

inline GradCheckReport case_cross_entropy(Rng& rng, double h) {
    const std::size_t t = 2 + rng.uniform_int(0, 5), v = 3 + rng.uniform_int(0, 6);
    Tensor z = rand_t(rng, {t, v});
    std::vector<int> labels(t);
    bool any = false;
    for (std::size_t i = 0; i < t; ++i) {
        if (rng.next_double() < 0.25 && !(i + 1 == t && !any)) {
            labels[i] = kIgnoreId;
        } else {
            labels[i] = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(v) - 1));
            any = true;
        }
    }
    return grad_check(
        [labels](Graph& g, const std::vector<Tensor>& in) {
            return cross_entropy_ignore(g, in[0], labels, kIgnoreId);
        },
        {z}, h, {"logits"});
}

inline GradCheckReport case_layernorm(Rng& rng, double h) {
    const std::size_t r = 1 + rng.uniform_int(0, 3), d = 2 + rng.uniform_int(0, 6);
    Tensor x = rand_t(rng, {r, d});
    Tensor gain = rand_t(rng, {d});
    Tensor shift = rand_t(rng, {d});
    Tensor w = rand_t(rng, {r, d}, false);
    return grad_check(
        [w](Graph& g, const std::vector<Tensor>& in) {
            return weighted(g, layernorm(g, in[0], in[1], in[2], 1e-5), w);
        },
        {x, gain, shift}, h, {"x", "gain", "shift"});
}

// linear -> gelu -> linear, the vision projector composition.
inline GradCheckReport case_mlp_gelu_chain(Rng& rng, double h) {
    const std::size_t p = 1 + rng.uniform_int(0, 3), din = 1 + rng.uniform_int(0, 3),
                      hid = 1 + rng.uniform_int(0, 3), dout = 1 + rng.uniform_int(0, 3);
    Tensor x = rand_t(rng, {p, din}, false);
    Tensor w1 = rand_t(rng, {din, hid}), b1 = rand_t(rng, {hid});
    Tensor w2 = rand_t(rng, {hid, dout}), b2 = rand_t(rng, {dout});
    Tensor w = rand_t(rng, {p, dout}, false);
    return grad_check(
        [x, w](Graph& g, const std::vector<Tensor>& in) {
            Tensor hmid = gelu(g, add_rowvec(g, matmul(g, x, in[0]), in[1]));
            Tensor y = add_rowvec(g, matmul(g, hmid, in[2]), in[3]);
            return weighted(g, y, w);
        },
        {w1, b1, w2, b2}, h, {"w1", "b1", "w2", "b2"});
}

// conv -> gelu -> transpose -> linear, the audio projector composition.
inline GradCheckReport case_conv_linear_chain(Rng& rng, double h) {
    const std::size_t c_in = 1 + rng.uniform_int(0, 1), c_out = 1 + rng.uniform_int(0, 2);
    const std::size_t k = 2 + rng.uniform_int(0, 2), len = k + rng.uniform_int(2, 8);
    const std::size_t stride = 1 + rng.uniform_int(0, 1);
    const std::size_t dout = 1 + rng.uniform_int(0, 2);
    const std::size_t out_len = (len - k) / stride + 1;
    Tensor x = rand_t(rng, {c_in, len}, false);
    Tensor cw = rand_t(rng, {c_out, c_in, k}), cb = rand_t(rng, {c_out});
    Tensor lw = rand_t(rng, {c_out, dout}), lb = rand_t(rng, {dout});
    Tensor w = rand_t(rng, {out_len, dout}, false);
    return grad_check(
        [x, w, stride](Graph& g, const std::vector<Tensor>& in) {
            Tensor c = gelu(g, conv1d(g, x, in[0], in[1], stride, 0, 0));
            Tensor y = add_rowvec(g, matmul(g, transpose(g, c), in[2]), in[3]);
            return weighted(g, y, w);
        },
        {cw, cb, lw, lb}, h, {"conv_w", "conv_b", "lin_w", "lin_b"});
}

// scaled dot-product attention with a random keep mask.
inline GradCheckReport case_attention_chain(Rng& rng, double h) {
    const std::size_t t = 2 + rng.uniform_int(0, 3), d = 2 + rng.uniform_int(0, 2);
    Tensor q = rand_t(rng, {t, d}), k = rand_t(rng, {t, d}), v = rand_t(rng, {t, d});
    Tensor m = Tensor::zeros({t, t});
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < t; ++j)
            if (j > i) m.at(i, j) = kMaskDrop;
    Tensor w = rand_t(rng, {t, d}, false);
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));
    return grad_check(
        [m, w, inv](Graph& g, const std::vector<Tensor>& in) {
            Tensor scores = scale(g, matmul(g, in[0], transpose(g, in[1])), inv);
            Tensor probs = masked_softmax(g, scores, m);
            return weighted(g, matmul(g, probs, in[2]), w);
        },
        {q, k, v}, h, {"q", "k", "v"});
}

// Test fixture: a gelu whose backward is off by 1%, to prove the suite
// actually catches broken gradients.
inline GradCheckReport case_faulty_gelu(Rng& rng, double h) {
    const std::size_t n = 4;
    Tensor x = rand_t(rng, {n});
    Tensor w = rand_t(rng, {n}, false);
    return grad_check(
        [w](Graph& g, const std::vector<Tensor>& in) {
            const Tensor& a = in[0];
            std::vector<double> out(a.numel());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(a.data()[i]);
            Tensor y(a.shape(), std::move(out), true);
            auto ai = a.impl_ptr(), yi = y.impl_ptr();
            g.record(y, {a}, [ai, yi] {
                for (std::size_t i = 0; i < yi->grad.size(); ++i)
                    ai->grad[i] += 1.01 * gelu_derivative(ai->data[i]) * yi->grad[i];
            });
            return weighted(g, y, w);
        },
        {x}, h, {"x"});
}

} // namespace suite_detail

inline std::vector<std::string> gradcheck_suite_ops() {
    return {"matmul",   "conv1d",         "gelu",
            "masked_softmax", "embedding_lookup", "cross_entropy_ignore",
            "layernorm", "mlp_gelu_chain", "conv_linear_chain",
            "attention_chain"};
}

// Runs `cases` seeded random gradient checks per selected op. `inject_fault`
// appends a deliberately broken op so callers can verify failure detection.
inline SuiteResult run_gradcheck_suite(const std::vector<std::string>& ops, std::size_t cases,
                                       std::uint64_t seed, double h = 1e-4,
                                       bool inject_fault = false) {
    using Case = GradCheckReport (*)(Rng&, double);
    struct Entry {
        const char* name;
        Case fn;
    };
    const std::vector<Entry> all = {
        {"matmul", suite_detail::case_matmul},
        {"conv1d", suite_detail::case_conv1d},
        {"gelu", suite_detail::case_gelu},
        {"masked_softmax", suite_detail::case_masked_softmax},
        {"embedding_lookup", suite_detail::case_embedding},
        {"cross_entropy_ignore", suite_detail::case_cross_entropy},
        {"layernorm", suite_detail::case_layernorm},
        {"mlp_gelu_chain", suite_detail::case_mlp_gelu_chain},
        {"conv_linear_chain", suite_detail::case_conv_linear_chain},
        {"attention_chain", suite_detail::case_attention_chain},
    };

    SuiteResult res;
    std::uint64_t op_index = 0;
    for (const Entry& e : all) {
        ++op_index;
        if (!ops.empty() && std::find(ops.begin(), ops.end(), e.name) == ops.end()) continue;
        SuiteOpResult r;
        r.op = e.name;
        Rng rng(mix64(seed ^ (op_index * 0x100000001B3ull)));
        for (std::size_t c = 0; c < cases; ++c) {
            const GradCheckReport rep = e.fn(rng, h);
            r.max_rel_err = std::max(r.max_rel_err, rep.max_rel_err);
            ++r.cases;
        }
        res.max_rel_err = std::max(res.max_rel_err, r.max_rel_err);
        res.ops.push_back(std::move(r));
    }
    if (inject_fault) {
        SuiteOpResult r;
        r.op = "faulty_gelu(fixture)";
        Rng rng(mix64(seed ^ 0xFA117ull));
        for (std::size_t c = 0; c < std::max<std::size_t>(cases, 1); ++c) {
            const GradCheckReport rep = suite_detail::case_faulty_gelu(rng, h);
            r.max_rel_err = std::max(r.max_rel_err, rep.max_rel_err);
            ++r.cases;
        }
        res.max_rel_err = std::max(res.max_rel_err, r.max_rel_err);
        res.ops.push_back(std::move(r));
    }
    return res;
}

} // namespace mmm::core
