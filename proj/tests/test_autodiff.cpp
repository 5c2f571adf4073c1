#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "vtol/autodiff.hpp"

using namespace vtol::ad;

TEST_SUITE("autodiff") {

TEST_CASE("product records value and operand partials") {
    Tape t;
    Var a = t.variable(3.0);
    Var b = t.variable(4.0);
    Var c = a * b;
    CHECK(c.value() == 12.0);
    CHECK(t.partials(c.id(), 0)[0] == 4.0);
    CHECK(t.partials(c.id(), 1)[0] == 3.0);
}

TEST_CASE("tanh at zero") {
    Tape t;
    Var y = tanh(t.variable(0.0));
    CHECK(y.value() == 0.0);
    CHECK(t.partials(y.id(), 0)[0] == 1.0);
}

TEST_CASE("quotient partials") {
    Tape t;
    Var q = t.variable(1.0) / t.variable(2.0);
    CHECK(q.value() == 0.5);
    CHECK(t.partials(q.id(), 0)[0] == 0.5);
    CHECK(t.partials(q.id(), 1)[0] == -0.25);
}

TEST_CASE("square gradient") {
    Tape t;
    Var x = t.variable(3.0);
    Var y = x * x;
    const Var in[] = {x};
    CHECK(gradient(t, y, in)[0] == 6.0);
}

TEST_CASE("sin(x) * y at (0, 2)") {
    Tape t;
    Var x = t.variable(0.0);
    Var y = t.variable(2.0);
    const Var in[] = {x, y};
    const auto g = gradient(t, sin(x) * y, in);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 0.0);
}

TEST_CASE("domain errors name the primitive and node") {
    Tape t;
    Var x = t.variable(-1.0);
    CHECK_THROWS_AS(log(x), DomainError);
    CHECK_THROWS_AS(sqrt(x), DomainError);
    try {
        (void)log(t.variable(0.0));
        FAIL("expected throw");
    } catch (const DomainError& e) {
        CHECK(e.op() == "log");
        CHECK(e.node() == t.size());
    }
}

TEST_CASE("tape records reference earlier nodes only") {
    Tape t;
    Var x = t.variable(0.7);
    Var y = t.variable(1.3);
    Var z = exp(x * y) + atan2(y, x) - softplus(x / y);
    (void)z;
    for (NodeId id = 0; id < t.size(); ++id) {
        for (int k = 0; k < t.arg_count(id); ++k) {
            CHECK(t.arg(id, k) < id);
        }
    }
}

namespace {

Var composite(Tape&, std::span<const Var> x) {
    Var acc = sin(x[0]) * x[1] + cos(x[2]) / (x[3] * x[3] + 1.0);
    acc += tan(x[4] * 0.3) + sqrt(x[5] * x[5] + 2.0) * exp(x[6] * 0.2);
    acc += log(x[7] * x[7] + 1.5) - tanh(x[8]) * abs(x[9]);
    acc += max(x[0], x[9] * 2.0) + dot(stack(x.subspan(0, 3)), stack(x.subspan(3, 3)));
    const Var c = cross(stack(x.subspan(4, 3)), stack(x.subspan(7, 3)));
    acc += sum(c * c);
    return acc;
}

}  // namespace

TEST_CASE("random 10-input composite matches central differences") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> x(10);
        for (auto& v : x) v = u(rng);
        const auto r = gradcheck(composite, x, 1e-6);
        CHECK(r.max_rel_error < 1e-6);
    }
}

TEST_CASE("gradcheck on a polynomial") {
    auto poly = [](Tape&, std::span<const Var> x) { return x[0] * x[0] * x[1] - 3.0 * x[1] * x[1] + x[0] * 2.0; };
    const double x0[] = {1.3, -0.4};
    CHECK(gradcheck(poly, x0, 1e-5).max_rel_error <= 1e-8);
}

TEST_CASE("gradcheck of a constant function is zero") {
    auto c = [](Tape& t, std::span<const Var>) { return t.variable(4.0); };
    const double x0[] = {1.0, 2.0};
    const auto r = gradcheck(c, x0, 1e-6);
    CHECK(r.max_rel_error == 0.0);
    CHECK(r.analytic[0] == 0.0);
    CHECK(r.numeric[1] == 0.0);
}

TEST_CASE("gradcheck reports the worst component") {
    // Wrong derivative on purpose: a custom node claiming d/dx = 0 for the
    // second input.
    auto f = [](Tape& t, std::span<const Var> x) {
        const Var x1 = x[1];
        Var broken = t.record_custom("broken", {x1.value() * x1.value()}, Shape{1, 1}, [](Tape&, NodeId) {});
        return x[0] * 2.0 + broken;
    };
    const double x0[] = {1.0, 3.0};
    const auto r = gradcheck(f, x0, 1e-6);
    CHECK(r.worst_index == 1);
    CHECK(r.max_rel_error == doctest::Approx(1.0));
}

TEST_CASE("unrelated inputs receive zero gradient") {
    Tape t;
    Var x = t.variable(2.0);
    Var y = t.variable(5.0);
    Var f = x * x;
    const Var in[] = {x, y};
    const auto g = gradient(t, f, in);
    CHECK(g[1] == 0.0);
}

TEST_CASE("repeated backward passes are bit-identical") {
    Tape t;
    std::vector<Var> x;
    for (double v : {0.3, -0.8, 1.1}) x.push_back(t.variable(v));
    Var f = exp(x[0] * x[1]) * sin(x[2]) + x[0] / (x[2] + 3.0);
    const auto g1 = gradient(t, f, x);
    const auto g2 = gradient(t, f, x);
    CHECK(g1 == g2);
}

TEST_CASE("adjoints are linear in the output") {
    Tape t;
    Var x = t.variable(0.4);
    Var y = t.variable(-1.2);
    Var f = sin(x) * y;
    Var g = exp(x + y);
    const Var in[] = {x, y};
    const auto gf = gradient(t, f, in);
    const auto gg = gradient(t, g, in);
    const auto gh = gradient(t, f * 2.5 - g * 0.75, in);
    for (int k = 0; k < 2; ++k) {
        CHECK(gh[k] == doctest::Approx(2.5 * gf[k] - 0.75 * gg[k]).epsilon(1e-12));
    }
}

TEST_CASE("chain rule: backward of g(f) equals g' seeded into f") {
    Tape t;
    Var x = t.variable(0.9);
    Var f = x * x + sin(x);
    Var gof = tanh(f);
    const Var in[] = {x};
    const double full = gradient(t, gof, in)[0];
    const double outer = 1.0 - std::tanh(f.value()) * std::tanh(f.value());
    const double seed[] = {outer};
    t.backward(f, seed);
    CHECK(t.adjoint(x)[0] == doctest::Approx(full).epsilon(1e-12));
}

TEST_CASE("affine and matvec gradients") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x0(2 * 3 + 4 * 3 + 4 + 3);
    for (auto& v : x0) v = u(rng);
    auto f = [](Tape&, std::span<const Var> x) {
        Var X = concat(x.subspan(0, 6));
        Var W = concat(x.subspan(6, 12));
        Var B = concat(x.subspan(18, 4));
        Var v = concat(x.subspan(22, 3));
        X = reshape(X, Shape{2, 3});
        W = reshape(W, Shape{4, 3});
        Var y = tanh(affine(X, W, B));
        Var z = matvec(W, v);
        return sum(y * y) + dot(z, z);
    };
    CHECK(gradcheck(f, x0, 1e-6).max_rel_error < 1e-7);
}

TEST_CASE("linear_solve_adjoint with identity") {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
    const LuFactor lu(a);
    Eigen::VectorXd x(3), gx(3);
    x << 1.0, -2.0, 0.5;
    gx << 0.3, 0.1, -1.0;
    const auto adj = linear_solve_adjoint(lu, x, gx);
    CHECK((adj.adjoint_b - gx).norm() == 0.0);
    CHECK((adj.adjoint_a + gx * x.transpose()).norm() == 0.0);
}

TEST_CASE("linear_solve_adjoint on diag(2, 4)") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
    a(0, 0) = 2.0;
    a(1, 1) = 4.0;
    const LuFactor lu(a);
    Eigen::VectorXd b(2);
    b << 2.0, 8.0;
    const Eigen::VectorXd x = lu.solve(b);
    CHECK(x(0) == 1.0);
    CHECK(x(1) == 2.0);
    const auto adj = linear_solve_adjoint(lu, x, Eigen::VectorXd::Ones(2));
    CHECK(adj.adjoint_b(0) == 0.5);
    CHECK(adj.adjoint_b(1) == 0.25);
    CHECK(adj.adjoint_a(0, 0) == -0.5);
    CHECK(adj.adjoint_a(0, 1) == -1.0);
    CHECK(adj.adjoint_a(1, 0) == -0.25);
    CHECK(adj.adjoint_a(1, 1) == -0.5);
}

TEST_CASE("solve primitive on a random 15x15 system matches finite differences") {
    const int n = 15;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x0(static_cast<std::size_t>(n * n + n));
    for (auto& v : x0) v = u(rng);
    for (int i = 0; i < n; ++i) x0[static_cast<std::size_t>(i * n + i)] += 6.0;
    std::vector<double> w(static_cast<std::size_t>(n));
    for (auto& v : w) v = u(rng);
    auto f = [n, w](Tape& t, std::span<const Var> x) {
        Var a = concat(x.subspan(0, static_cast<std::size_t>(n * n)));
        a = reshape(a, Shape{n, n});
        Var b = concat(x.subspan(static_cast<std::size_t>(n * n)));
        Var g = solve(a, b);
        Var wv = t.variable(w, Shape{n, 1});
        return dot(g, wv);
    };
    CHECK(gradcheck(f, x0, 1e-6).max_rel_error < 1e-5);
}

TEST_CASE("solve rejects a singular matrix") {
    Tape t;
    Var a = t.variable(Eigen::MatrixXd::Zero(2, 2));
    Var b = t.variable(Eigen::MatrixXd::Ones(2, 1));
    CHECK_THROWS(solve(a, b));
}

}  // TEST_SUITE
