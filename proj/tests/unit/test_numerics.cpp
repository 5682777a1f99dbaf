#include <cmath>
#include <limits>

#include "doctest.h"
#include "fd_check.hpp"
#include "flowedge/adamw.hpp"
#include "flowedge/autograd.hpp"
#include "flowedge/errors.hpp"
#include "flowedge/rng.hpp"

using namespace flowedge;
using flowedge::testing::check_gradients;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double stddev = 1.0) {
    Tensor t = randn(rng, shape);
    for (double& v : t.data()) v *= stddev;
    return t;
}

}  // namespace

TEST_CASE("quadratic gradient") {
    ParamStore ps;
    ps.add("w", Tensor({3}, {1.0, 2.0, 3.0}));
    Graph g(&ps);
    Var w = g.param("w");
    const GradResult r = g.backward(sum(mul(w, w)));
    CHECK(r.disconnected.empty());
    const Tensor& dw = r.grads.at("w");
    CHECK(dw[0] == 2.0);
    CHECK(dw[1] == 4.0);
    CHECK(dw[2] == 6.0);
}

TEST_CASE("constant loss leaves every parameter disconnected with zero gradient") {
    ParamStore ps;
    ps.add("w", Tensor({2}, {1.0, -1.0}));
    ps.add("u", Tensor({2, 2}, 0.5));
    Graph g(&ps);
    g.param("w");  // on the tape but not on the loss path
    const GradResult r = g.backward(sum(g.constant(Tensor({2}, {3.0, 4.0}))));
    CHECK(r.disconnected.size() == 2);
    for (const auto& [name, grad] : r.grads)
        for (double v : grad.data()) CHECK(v == 0.0);
}

TEST_CASE("non-scalar loss is rejected") {
    ParamStore ps;
    ps.add("w", Tensor({2}, 1.0));
    Graph g(&ps);
    CHECK_THROWS_AS(g.backward(g.param("w")), std::invalid_argument);
}

TEST_CASE("frozen parameters never receive gradient") {
    ParamStore ps;
    ps.add("w", Tensor({2}, {1.0, 2.0}), true);
    ps.add("frozen", Tensor({2}, {3.0, 4.0}), false);
    Graph g(&ps);
    const GradResult r = g.backward(sum(mul(g.param("w"), g.param("frozen"))));
    CHECK(r.grads.count("frozen") == 0);
    CHECK(r.grads.at("w")[0] == 3.0);
    CHECK(r.grads.at("w")[1] == 4.0);
}

TEST_CASE("every differentiable op matches central differences") {
    Rng rng(11);
    ParamStore ps;
    ps.add("a", random_tensor(rng, {5, 4}));
    ps.add("b", random_tensor(rng, {4, 3}));
    ps.add("c", random_tensor(rng, {6, 4}));
    ps.add("bias", random_tensor(rng, {3}));
    ps.add("gain", random_tensor(rng, {4}));
    ps.add("shift", random_tensor(rng, {4}));
    const Tensor target = random_tensor(rng, {5, 3});

    SUBCASE("matmul + add_row + mse") {
        auto r = check_gradients(ps, [&](Graph& g) {
            return mse(add_row(matmul(g.param("a"), g.param("b")), g.param("bias")), target);
        });
        INFO(r.worst_name);
        CHECK(r.worst < 1e-6);
    }
    SUBCASE("matmul_nt + softmax") {
        auto r = check_gradients(ps, [&](Graph& g) {
            Var s = softmax_rows(matmul_nt(g.param("a"), g.param("c")));
            return sum(mul(s, s));
        });
        INFO(r.worst_name);
        CHECK(r.worst < 1e-6);
    }
    SUBCASE("layer_norm + gelu") {
        auto r = check_gradients(ps, [&](Graph& g) {
            Var y = gelu(layer_norm(g.param("a"), g.param("gain"), g.param("shift")));
            return mean(mul(y, y));
        });
        INFO(r.worst_name);
        CHECK(r.worst < 1e-6);
    }
    SUBCASE("concat, slice, add_rows_at, reshape") {
        auto r = check_gradients(ps, [&](Graph& g) {
            Var all = concat_rows({g.param("a"), g.param("c")});
            Var mid = slice_rows(all, 3, 8);
            Var bumped = add_rows_at(all, mul(mid, mid), 2);
            return sum(mul(reshape(bumped, {44}), reshape(bumped, {44})));
        });
        INFO(r.worst_name);
        CHECK(r.worst < 1e-6);
    }
    SUBCASE("attention") {
        ParamStore att;
        att.add("q", random_tensor(rng, {7, 8}));
        att.add("k", random_tensor(rng, {7, 8}));
        att.add("v", random_tensor(rng, {7, 8}));
        const Tensor t2 = random_tensor(rng, {7, 8});
        auto r = check_gradients(att, [&](Graph& g) {
            return mse(attention(g.param("q"), g.param("k"), g.param("v"), 2), t2);
        });
        INFO(r.worst_name);
        CHECK(r.worst < 1e-6);
    }
}

TEST_CASE("attention equals explicit per-head softmax(QK^T/sqrt(dh)) V") {
    Rng rng(3);
    ParamStore ps;
    ps.add("q", random_tensor(rng, {5, 4}));
    ps.add("k", random_tensor(rng, {5, 4}));
    ps.add("v", random_tensor(rng, {5, 4}));
    Graph g(&ps, false);
    const Tensor fused = attention(g.param("q"), g.param("k"), g.param("v"), 2).value();
    const Tensor& q = ps.value("q");
    const Tensor& k = ps.value("k");
    const Tensor& v = ps.value("v");
    for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t i = 0; i < 5; ++i) {
            double s[5], z = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                s[j] = 0.0;
                for (std::size_t c = 0; c < 2; ++c) s[j] += q.at(i, 2 * h + c) * k.at(j, 2 * h + c);
                s[j] = std::exp(s[j] / std::sqrt(2.0));
                z += s[j];
            }
            for (std::size_t c = 0; c < 2; ++c) {
                double o = 0.0;
                for (std::size_t j = 0; j < 5; ++j) o += s[j] / z * v.at(j, 2 * h + c);
                CHECK(fused.at(i, 2 * h + c) == doctest::Approx(o).epsilon(1e-12));
            }
        }
}

TEST_CASE("random three-layer network gradient matches finite differences") {
    Rng rng(2024);
    ParamStore ps;
    ps.add("w1", random_tensor(rng, {6, 8}, 0.5));
    ps.add("b1", random_tensor(rng, {8}, 0.1));
    ps.add("w2", random_tensor(rng, {8, 8}, 0.4));
    ps.add("g2", random_tensor(rng, {8}, 1.0));
    ps.add("s2", random_tensor(rng, {8}, 0.1));
    ps.add("w3", random_tensor(rng, {8, 3}, 0.4));
    const Tensor x = random_tensor(rng, {4, 6});
    const Tensor y = random_tensor(rng, {4, 3});
    auto r = check_gradients(ps, [&](Graph& g) {
        Var h1 = gelu(add_row(matmul(g.constant(x), g.param("w1")), g.param("b1")));
        Var h2 = gelu(layer_norm(matmul(h1, g.param("w2")), g.param("g2"), g.param("s2")));
        return mse(matmul(h2, g.param("w3")), y);
    });
    CHECK(r.worst < 1e-6);
}

TEST_CASE("chain rule on a two-op pipeline matches the hand formula") {
    // L = sum(gelu(a * w)) => dL/dw_i = gelu'(a_i w_i) a_i
    const Tensor a({4}, {0.3, -1.2, 2.0, 0.7});
    ParamStore ps;
    ps.add("w", Tensor({4}, {1.5, 0.4, -0.8, 2.2}));
    Graph g(&ps);
    const GradResult r = g.backward(sum(gelu(mul(g.constant(a), g.param("w")))));
    const double k = std::sqrt(2.0 / M_PI);
    for (std::size_t i = 0; i < 4; ++i) {
        const double u = a[i] * ps.value("w")[i];
        const double th = std::tanh(k * (u + 0.044715 * u * u * u));
        const double dgelu = 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * k * (1.0 + 3.0 * 0.044715 * u * u);
        CHECK(r.grads.at("w")[i] == doctest::Approx(dgelu * a[i]).epsilon(1e-14));
    }
}

TEST_CASE("adamw") {
    SUBCASE("zero gradient and zero decay leaves parameters unchanged") {
        ParamStore ps;
        ps.add("p", Tensor({3}, {1.0, -2.0, 0.5}));
        ps.zero_grad();
        adamw_step(ps, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
        CHECK(ps.value("p") == Tensor({3}, {1.0, -2.0, 0.5}));
    }
    SUBCASE("first step moves by lr * sign(g)") {
        ParamStore ps;
        ps.add("p", Tensor({1}, {1.0}));
        ps.get("p").grad = Tensor({1}, {1.0});
        adamw_step(ps, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
        // m_hat = v_hat = 1, so p = 1 - 0.1 / (1 + 1e-8)
        CHECK(ps.value("p")[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
        CHECK(ps.value("p")[0] == doctest::Approx(0.9).epsilon(1e-7));
    }
    SUBCASE("decoupled decay on a fresh state") {
        ParamStore ps;
        ps.add("p", Tensor({2}, {2.0, -4.0}));
        ps.zero_grad();
        adamw_step(ps, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.5});
        CHECK(ps.value("p")[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-15));
        CHECK(ps.value("p")[1] == doctest::Approx(-4.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-15));
    }
    SUBCASE("frozen parameters are not updated") {
        ParamStore ps;
        ps.add("p", Tensor({1}, {1.0}), false);
        ps.get("p").grad = Tensor({1}, {1.0});
        adamw_step(ps, AdamWConfig{});
        CHECK(ps.value("p")[0] == 1.0);
    }
    SUBCASE("NaN gradient aborts the step and names the parameter") {
        ParamStore ps;
        ps.add("good", Tensor({1}, {1.0}));
        ps.add("bad", Tensor({1}, {1.0}));
        ps.get("good").grad = Tensor({1}, {1.0});
        ps.get("bad").grad = Tensor({1}, {std::numeric_limits<double>::quiet_NaN()});
        try {
            adamw_step(ps, AdamWConfig{});
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("bad") != std::string::npos);
        }
        CHECK(ps.value("good")[0] == 1.0);
    }
}

TEST_CASE("rng") {
    SUBCASE("same seed, same tensor") {
        Rng a(99), b(99);
        CHECK(randn(a, {4, 5}) == randn(b, {4, 5}));
    }
    SUBCASE("gaussian moments over 1e6 draws") {
        Rng rng(5);
        const int n = 1000000;
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = rng.normal();
            s += x;
            s2 += x * x;
        }
        const double m = s / n;
        CHECK(std::abs(m) < 0.01);
        CHECK(std::abs(s2 / n - m * m - 1.0) < 0.02);
    }
    SUBCASE("uniform stays in [0, 1)") {
        Rng rng(6);
        for (int i = 0; i < 100000; ++i) {
            const double u = rand_uniform(rng, 0.0, 1.0);
            CHECK_UNARY(u >= 0.0);
            CHECK_UNARY(u < 1.0);
        }
    }
    SUBCASE("forked streams differ from the parent and are reproducible") {
        Rng root(1);
        Rng f1 = root.fork(3), f2 = root.fork(3), f3 = root.fork(4);
        const auto x = f1.next_u64();
        CHECK(x == f2.next_u64());
        CHECK(x != f3.next_u64());
    }
}
