#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <thread>
#include <utility>
#include <vector>

#include "mmm/core/gradcheck.hpp"
#include "mmm/core/gradcheck_suite.hpp"
#include "mmm/core/ops.hpp"
#include "mmm/core/optim.hpp"
#include "mmm/core/rng.hpp"
#include "mmm/core/tensor.hpp"

#include "support.hpp"

using namespace mmm;
using namespace mmm::core;

namespace {

Tensor identity(std::size_t n) {
    Tensor t = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

} // namespace

TEST_CASE("matmul identity cases") {
    Graph g;
    Rng rng(1);
    Tensor b = Tensor::uniform(rng, {3, 2}, 1.0);
    Tensor lhs = matmul(g, identity(3), b);
    REQUIRE(lhs.data() == b.data());

    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor rhs = matmul(g, a, identity(2));
    REQUIRE(rhs.data() == a.data());
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Graph g;
    Tensor a = Tensor::zeros({4, 5});
    Tensor b = Tensor::zeros({6, 3});
    REQUIRE_THROWS_MATCHES(matmul(g, a, b), DimensionError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("[4x5]") &&
                               Catch::Matchers::ContainsSubstring("[6x3]")));
}

TEST_CASE("matmul gradient matches central finite differences") {
    Rng rng(42);
    Tensor a = Tensor::uniform(rng, {4, 5}, 1.0, true);
    Tensor b = Tensor::uniform(rng, {5, 3}, 1.0, true);
    Tensor w = Tensor::uniform(rng, {4, 3}, 1.0);
    auto rep = grad_check(
        [w](Graph& g, const std::vector<Tensor>& in) {
            return sum(g, mul(g, matmul(g, in[0], in[1]), w));
        },
        {a, b}, 1e-4);
    REQUIRE(rep.max_rel_err <= 1e-5);
}

TEST_CASE("conv1d output length 487 for the 1500/40/3 configuration") {
    // Enumerate valid window start positions 0, 3, ..., 1458.
    std::size_t count = 0, last = 0;
    for (std::size_t s = 0; s + 40 <= 1500; s += 3) {
        last = s;
        ++count;
    }
    REQUIRE(count == 487);
    REQUIRE(last == 1458);

    Graph g;
    Tensor x = Tensor::zeros({1, 1500});
    Tensor w = Tensor::zeros({1, 1, 40});
    Tensor b = Tensor::zeros({1});
    Tensor y = conv1d(g, x, w, b, 3, 0, 0);
    REQUIRE(y.shape() == Shape{1, 487});
}

TEST_CASE("conv1d identity kernel passes the input through") {
    Graph g;
    Rng rng(7);
    Tensor x = Tensor::uniform(rng, {2, 9}, 1.0);
    Tensor w = Tensor::zeros({2, 2, 1});
    w.data()[0 * 2 + 0] = 1.0; // w[0][0][0]
    w.data()[1 * 2 + 1] = 1.0; // w[1][1][0]
    Tensor b = Tensor::zeros({2});
    Tensor y = conv1d(g, x, w, b, 1, 0, 0);
    REQUIRE(y.shape() == x.shape());
    REQUIRE(y.data() == x.data());
}

TEST_CASE("conv1d equals the naive sliding-window oracle exactly") {
    Rng rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t c_in = 1 + rng.uniform_int(0, 2);
        const std::size_t c_out = 1 + rng.uniform_int(0, 2);
        const std::size_t k = 1 + rng.uniform_int(0, 5);
        const std::size_t len = k + rng.uniform_int(0, 20);
        const std::size_t stride = 1 + rng.uniform_int(0, 3);
        const std::size_t pl = rng.uniform_int(0, 3), pr = rng.uniform_int(0, 3);
        Tensor x = Tensor::uniform(rng, {c_in, len}, 1.0);
        Tensor w = Tensor::uniform(rng, {c_out, c_in, k}, 1.0);
        Tensor b = Tensor::uniform(rng, {c_out}, 1.0);

        Graph g;
        Tensor y = conv1d(g, x, w, b, stride, pl, pr);
        std::size_t oracle_len = 0;
        auto expect = testsupport::naive_conv1d(x.data(), c_in, len, w.data(), c_out, k, b.data(),
                                                stride, pl, pr, &oracle_len);
        REQUIRE(y.dim(1) == oracle_len);
        REQUIRE(y.data() == expect); // exact equality, same arithmetic order not required
    }
}

TEST_CASE("conv1d specific 2x30 case matches oracle and finite differences") {
    Rng rng(2024);
    Tensor x = Tensor::uniform(rng, {2, 30}, 1.0, true);
    Tensor w = Tensor::uniform(rng, {3, 2, 5}, 1.0, true);
    Tensor b = Tensor::uniform(rng, {3}, 1.0, true);

    Graph g;
    Tensor y = conv1d(g, x, w, b, 3, 0, 0);
    auto expect =
        testsupport::naive_conv1d(x.data(), 2, 30, w.data(), 3, 5, b.data(), 3, 0, 0);
    REQUIRE(testsupport::max_abs_diff(y.data(), expect) == 0.0);

    Rng wr(55);
    Tensor wt = Tensor::uniform(wr, y.shape(), 1.0);
    auto rep = grad_check(
        [wt](Graph& gg, const std::vector<Tensor>& in) {
            return sum(gg, mul(gg, conv1d(gg, in[0], in[1], in[2], 3, 0, 0), wt));
        },
        {x, w, b}, 1e-4);
    REQUIRE(rep.max_rel_err <= 1e-5);
}

TEST_CASE("conv1d rejects windows larger than the padded input") {
    Graph g;
    Tensor x = Tensor::zeros({1, 5});
    Tensor w = Tensor::zeros({1, 1, 8});
    Tensor b = Tensor::zeros({1});
    REQUIRE_THROWS_AS(conv1d(g, x, w, b, 1, 1, 1), DimensionError);
}

TEST_CASE("gelu matches the exact erf definition") {
    Graph g;
    Tensor x({5}, {0.0, -3.0, -1.0, 1.0, 3.0});
    Tensor y = gelu(g, x);
    REQUIRE(y.data()[0] == 0.0);
    // References evaluated with 40-digit arithmetic from x * Phi(x).
    REQUIRE(std::fabs(y.data()[1] - -0.004049694094890284) < 1e-12);
    REQUIRE(std::fabs(y.data()[2] - -0.15865525393145705) < 1e-12);
    REQUIRE(std::fabs(y.data()[3] - 0.8413447460685429) < 1e-12);
    REQUIRE(std::fabs(y.data()[4] - 2.9959503059051097) < 1e-12);
}

TEST_CASE("gelu derivative at zero is one half") {
    Tensor x = Tensor::scalar(0.0, true);
    Graph g;
    Tensor y = sum(g, gelu(g, x));
    g.backward(y);
    REQUIRE(x.grad()[0] == 0.5);
}

TEST_CASE("masked softmax forces one-hot rows when one position is kept") {
    Graph g;
    Rng rng(5);
    Tensor z = Tensor::uniform(rng, {3, 4}, 2.0);
    Tensor m = Tensor::full({3, 4}, kMaskDrop);
    m.at(0, 2) = 0.0;
    m.at(1, 0) = 0.0;
    m.at(2, 3) = 0.0;
    Tensor p = masked_softmax(g, z, m);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            const double expect = (r == 0 && c == 2) || (r == 1 && c == 0) || (r == 2 && c == 3)
                                      ? 1.0
                                      : 0.0;
            REQUIRE(p.at(r, c) == expect);
        }
}

TEST_CASE("masked softmax with all-zero mask is plain softmax") {
    Graph g;
    Rng rng(6);
    Tensor z = Tensor::uniform(rng, {2, 5}, 2.0);
    Tensor m = Tensor::zeros({2, 5});
    Tensor p = masked_softmax(g, z, m);
    for (std::size_t r = 0; r < 2; ++r) {
        std::vector<double> row(z.data().begin() + r * 5, z.data().begin() + (r + 1) * 5);
        auto expect = testsupport::softmax_subset(row, {0, 1, 2, 3, 4});
        for (std::size_t c = 0; c < 5; ++c)
            REQUIRE(std::fabs(p.at(r, c) - expect[c]) < 1e-15);
    }
}

TEST_CASE("masked softmax ignores appended masked columns") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = 3 + rng.uniform_int(0, 4), extra = 1 + rng.uniform_int(0, 3);
        Tensor z = Tensor::uniform(rng, {2, t}, 2.0);
        Tensor m = Tensor::zeros({2, t});
        std::vector<std::vector<std::size_t>> kept(2);
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t c = 0; c < t; ++c) {
                if (c + 1 < t && rng.next_double() < 0.3)
                    m.at(r, c) = kMaskDrop;
                else
                    kept[r].push_back(c);
            }
        }
        Graph g;
        Tensor p = masked_softmax(g, z, m);

        Tensor z2 = Tensor::zeros({2, t + extra});
        Tensor m2 = Tensor::zeros({2, t + extra});
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t c = 0; c < t; ++c) {
                z2.at(r, c) = z.at(r, c);
                m2.at(r, c) = m.at(r, c);
            }
            for (std::size_t c = t; c < t + extra; ++c) {
                z2.at(r, c) = rng.uniform(-5, 5);
                m2.at(r, c) = kMaskDrop;
            }
        }
        Tensor p2 = masked_softmax(g, z2, m2);
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t c = 0; c < t; ++c)
                REQUIRE(std::fabs(p.at(r, c) - p2.at(r, c)) <= 1e-12);
            for (std::size_t c = t; c < t + extra; ++c) REQUIRE(p2.at(r, c) == 0.0);
            // Also compare against the softmax-over-kept-subset oracle.
            std::vector<double> row(z.data().begin() + r * t, z.data().begin() + (r + 1) * t);
            auto expect = testsupport::softmax_subset(row, kept[r]);
            for (std::size_t c = 0; c < t; ++c)
                REQUIRE(std::fabs(p.at(r, c) - expect[c]) <= 1e-12);
        }
    }
}

TEST_CASE("masked softmax rejects fully masked rows") {
    Graph g;
    Tensor z = Tensor::zeros({2, 3});
    Tensor m = Tensor::zeros({2, 3});
    for (std::size_t c = 0; c < 3; ++c) m.at(1, c) = kMaskDrop;
    REQUIRE_THROWS_AS(masked_softmax(g, z, m), DegenerateRowError);
}

TEST_CASE("masked softmax sends no gradient to dropped positions") {
    Rng rng(13);
    Tensor z = Tensor::uniform(rng, {2, 4}, 1.0, true);
    Tensor m = Tensor::zeros({2, 4});
    m.at(0, 1) = kMaskDrop;
    m.at(1, 3) = kMaskDrop;
    Graph g;
    Tensor p = masked_softmax(g, z, m);
    Tensor w = Tensor::uniform(rng, {2, 4}, 1.0);
    Tensor loss = sum(g, mul(g, p, w));
    g.backward(loss);
    REQUIRE(z.grad()[0 * 4 + 1] == 0.0);
    REQUIRE(z.grad()[1 * 4 + 3] == 0.0);
}

TEST_CASE("embedding lookup gathers rows") {
    Graph g;
    Tensor table = identity(4);
    Tensor y = embedding_lookup(g, table, {0});
    REQUIRE(y.shape() == Shape{1, 4});
    REQUIRE(y.data() == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("embedding lookup accumulates gradient for repeated ids") {
    Rng rng(3);
    Tensor table = Tensor::uniform(rng, {5, 3}, 1.0, true);
    Graph g;
    Tensor y = embedding_lookup(g, table, {2, 2, 2});
    Tensor loss = sum(g, y);
    g.backward(loss);
    for (std::size_t j = 0; j < 3; ++j) REQUIRE(table.grad()[2 * 3 + j] == 3.0);
    for (std::size_t j = 0; j < 3; ++j) REQUIRE(table.grad()[0 * 3 + j] == 0.0);
}

TEST_CASE("embedding lookup gradient matches finite differences") {
    Rng rng(44);
    Tensor table = Tensor::uniform(rng, {6, 4}, 1.0, true);
    std::vector<int> ids = {1, 4, 1, 0, 5};
    Tensor w = Tensor::uniform(rng, {ids.size(), 4}, 1.0);
    auto rep = grad_check(
        [w, ids](Graph& g, const std::vector<Tensor>& in) {
            return sum(g, mul(g, embedding_lookup(g, in[0], ids), w));
        },
        {table}, 1e-4);
    REQUIRE(rep.max_rel_err <= 1e-5);
}

TEST_CASE("embedding lookup names the offending id") {
    Graph g;
    Tensor table = Tensor::zeros({4, 2});
    REQUIRE_THROWS_MATCHES(embedding_lookup(g, table, {7}), IndexError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("7") &&
                               Catch::Matchers::ContainsSubstring("4")));
}

TEST_CASE("cross entropy returns exactly zero when everything is ignored") {
    Graph g;
    Rng rng(8);
    Tensor z = Tensor::uniform(rng, {3, 5}, 1.0, true);
    Tensor loss = cross_entropy_ignore(g, z, {kIgnoreId, kIgnoreId, kIgnoreId}, kIgnoreId);
    REQUIRE(loss.value() == 0.0);
    REQUIRE_FALSE(loss.requires_grad());
    g.backward(loss);
    REQUIRE_FALSE(z.has_grad());
}

TEST_CASE("cross entropy of uniform logits is ln V") {
    Graph g;
    Tensor z = Tensor::zeros({1, 4});
    Tensor loss = cross_entropy_ignore(g, z, {2}, kIgnoreId);
    REQUIRE(std::fabs(loss.value() - 1.3862943611198906) < 1e-14);
}

TEST_CASE("cross entropy matches the per-position oracle") {
    Rng rng(21);
    Tensor z = Tensor::uniform(rng, {6, 10}, 2.0, true);
    std::vector<int> labels = {3, kIgnoreId, 9, 0, kIgnoreId, 7};
    Graph g;
    Tensor loss = cross_entropy_ignore(g, z, labels, kIgnoreId);
    const double expect = testsupport::ce_oracle(z.data(), 6, 10, labels, kIgnoreId);
    REQUIRE(std::fabs(loss.value() - expect) <= 1e-10);

    auto rep = grad_check(
        [labels](Graph& gg, const std::vector<Tensor>& in) {
            return cross_entropy_ignore(gg, in[0], labels, kIgnoreId);
        },
        {z}, 1e-4);
    REQUIRE(rep.max_rel_err <= 1e-5);
}

TEST_CASE("cross entropy is invariant to ignored positions' logits") {
    Rng rng(31);
    Tensor z = Tensor::uniform(rng, {5, 6}, 2.0);
    std::vector<int> labels = {1, kIgnoreId, 3, kIgnoreId, 5};
    Graph g;
    const double before = cross_entropy_ignore(g, z, labels, kIgnoreId).value();
    // Scramble the ignored rows.
    for (std::size_t r : {std::size_t{1}, std::size_t{3}})
        for (std::size_t c = 0; c < 6; ++c) z.at(r, c) = rng.uniform(-50, 50);
    const double after = cross_entropy_ignore(g, z, labels, kIgnoreId).value();
    REQUIRE(before == after);
}

TEST_CASE("cross entropy rejects out-of-range labels") {
    Graph g;
    Tensor z = Tensor::zeros({2, 4});
    REQUIRE_THROWS_AS(cross_entropy_ignore(g, z, {1, 4}, kIgnoreId), IndexError);
}

TEST_CASE("layernorm maps constant rows to the shift") {
    Graph g;
    Tensor x = Tensor::full({2, 6}, 3.25);
    Tensor gain = Tensor::full({6}, 1.0);
    Tensor shift = Tensor::zeros({6});
    Tensor y = layernorm(g, x, gain, shift, 1e-5);
    for (double v : y.data()) REQUIRE(v == 0.0);

    Tensor gain0 = Tensor::zeros({6});
    Tensor shift2({6}, {1, 2, 3, 4, 5, 6});
    Rng rng(9);
    Tensor xr = Tensor::uniform(rng, {2, 6}, 1.0);
    Tensor y2 = layernorm(g, xr, gain0, shift2, 1e-5);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 6; ++c) REQUIRE(y2.at(r, c) == shift2.data()[c]);
}

TEST_CASE("layernorm gradient matches finite differences") {
    Rng rng(10);
    Tensor x = Tensor::uniform(rng, {3, 7}, 1.0, true);
    Tensor gain = Tensor::uniform(rng, {7}, 1.0, true);
    Tensor shift = Tensor::uniform(rng, {7}, 1.0, true);
    Tensor w = Tensor::uniform(rng, {3, 7}, 1.0);
    auto rep = grad_check(
        [w](Graph& g, const std::vector<Tensor>& in) {
            return sum(g, mul(g, layernorm(g, in[0], in[1], in[2], 1e-5), w));
        },
        {x, gain, shift}, 1e-4);
    REQUIRE(rep.max_rel_err <= 1e-5);
}

TEST_CASE("backward fills ones for a plain sum") {
    Rng rng(11);
    Tensor x = Tensor::uniform(rng, {4, 3}, 1.0, true);
    Graph g;
    Tensor loss = sum(g, x);
    g.backward(loss);
    for (double v : x.grad()) REQUIRE(v == 1.0);
}

TEST_CASE("backward reports parameters missing from the graph") {
    Rng rng(12);
    ParamRegistry reg;
    Tensor used = Tensor::uniform(rng, {2, 2}, 1.0, true);
    Tensor unused = Tensor::uniform(rng, {2, 2}, 1.0, true);
    reg.add("used", used);
    reg.add("unused", unused);

    Graph g;
    Tensor loss = sum(g, used);
    auto rep = g.backward(loss, reg);
    REQUIRE(rep.unused == std::vector<std::string>{"unused"});
    REQUIRE(used.has_grad());
    REQUIRE_FALSE(unused.has_grad());

    // Once both reach the loss the report is empty.
    Graph g2;
    used.clear_grad();
    Tensor loss2 = add(g2, sum(g2, used), sum(g2, unused));
    auto rep2 = g2.backward(loss2, reg);
    REQUIRE(rep2.all_used());
}

TEST_CASE("backward rejects non-scalar losses") {
    Rng rng(14);
    Tensor x = Tensor::uniform(rng, {2, 2}, 1.0, true);
    Graph g;
    Tensor y = gelu(g, x);
    REQUIRE_THROWS_AS(g.backward(y), ContractError);
}

TEST_CASE("registry rejects frozen tensors and duplicate names") {
    ParamRegistry reg;
    Tensor frozen = Tensor::zeros({2});
    REQUIRE_THROWS_AS(reg.add("f", frozen), ContractError);
    Tensor p = Tensor::zeros({2}, true);
    reg.add("p", p);
    REQUIRE_THROWS_AS(reg.add("p", p), ContractError);
}

TEST_CASE("sgd step and zero learning rate") {
    Tensor p = Tensor::scalar(1.0, true);
    p.set_name("p");
    p.impl()->grad = {1.0};
    OptimizerConfig cfg;
    cfg.kind = OptKind::sgd;
    cfg.lr = 0.1;
    OptimizerState st;
    optimizer_step({p}, cfg, st);
    REQUIRE(std::fabs(p.value() - 0.9) < 1e-15);

    cfg.lr = 0.0;
    p.impl()->grad = {123.0};
    optimizer_step({p}, cfg, st);
    REQUIRE(std::fabs(p.value() - 0.9) < 1e-15);
}

TEST_CASE("adam first step matches the closed form") {
    // From zero state: update = lr * g / (|g| + eps).
    Rng rng(15);
    Tensor p = Tensor::uniform(rng, {4}, 1.0, true);
    p.set_name("p");
    const std::vector<double> start = p.data();
    std::vector<double> grad = {0.5, -0.25, 1.75, -0.001};
    p.impl()->grad = grad;
    OptimizerConfig cfg;
    cfg.kind = OptKind::adam;
    cfg.lr = 1e-3;
    OptimizerState st;
    optimizer_step({p}, cfg, st);
    for (std::size_t i = 0; i < 4; ++i) {
        const double expect = start[i] - cfg.lr * grad[i] / (std::fabs(grad[i]) + cfg.eps);
        REQUIRE(std::fabs(p.data()[i] - expect) <= 1e-12);
    }
    REQUIRE(st.step == 1);
}

TEST_CASE("optimizer rejects parameters without gradients") {
    Tensor p = Tensor::scalar(1.0, true);
    p.set_name("p");
    OptimizerConfig cfg;
    OptimizerState st;
    REQUIRE_THROWS_AS(optimizer_step({p}, cfg, st), ContractError);
}

TEST_CASE("grad_check on a linear function is exact to machine noise") {
    Rng rng(16);
    Tensor x = Tensor::uniform(rng, {5}, 1.0, true);
    Tensor w = Tensor::uniform(rng, {5}, 1.0);
    auto rep = grad_check(
        [w](Graph& g, const std::vector<Tensor>& in) { return sum(g, mul(g, in[0], w)); }, {x},
        1e-4);
    REQUIRE(rep.max_rel_err <= 1e-9);
}

TEST_CASE("grad_check suite passes and the fault fixture fails") {
    auto res = run_gradcheck_suite({}, 5, 1234);
    REQUIRE(res.ops.size() == 10);
    REQUIRE(res.pass(1e-5));

    auto bad = run_gradcheck_suite({"gelu"}, 2, 1234, 1e-4, true);
    REQUIRE_FALSE(bad.pass(1e-5));
}

TEST_CASE("independent graphs on separate threads match sequential results") {
    // One graph per simulated device, each with its own parameter copies.
    auto run = [](std::uint64_t seed) {
        Rng r(seed);
        Tensor x = Tensor::uniform(r, {4, 4}, 1.0, true);
        Tensor w = Tensor::uniform(r, {4, 4}, 1.0);
        Graph g;
        Tensor loss = sum(g, mul(g, gelu(g, matmul(g, x, x)), w));
        g.backward(loss);
        return std::make_pair(loss.value(), x.grad());
    };
    const auto seq1 = run(1), seq2 = run(2);

    std::pair<double, std::vector<double>> thr1, thr2;
    std::thread t1([&] { thr1 = run(1); });
    std::thread t2([&] { thr2 = run(2); });
    t1.join();
    t2.join();
    REQUIRE(thr1.first == seq1.first);
    REQUIRE(thr2.first == seq2.first);
    REQUIRE(thr1.second == seq1.second);
    REQUIRE(thr2.second == seq2.second);
}
