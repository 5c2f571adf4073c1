#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "vtol/nn.hpp"

using namespace vtol;
using namespace vtol::nn;

TEST_SUITE("nn") {

TEST_CASE("init is deterministic per seed") {
    const std::vector<int> sizes = {7, 200, 200, 200, 200, 200, 200, 9};
    const MlpParams a = init_mlp(sizes, 42);
    const MlpParams b = init_mlp(sizes, 42);
    CHECK(a.flatten() == b.flatten());
    CHECK(init_mlp(sizes, 43).flatten() != a.flatten());
    a.validate();
}

TEST_CASE("pure ANN layout") {
    const MlpParams p = init_mlp({7, 150, 150, 150, 150, 4}, 1);
    CHECK(p.layers() == 5);
    CHECK(p.parameter_count() == 7u * 150 + 150 + 3 * (150u * 150 + 150) + 150u * 4 + 4);
    for (int k = 0; k < 4; ++k) CHECK(p.activations[static_cast<std::size_t>(k)] == Activation::Tanh);
    CHECK(p.activations.back() == Activation::Identity);
    // Xavier bounds and zero biases.
    const double lim = std::sqrt(6.0 / (7 + 150));
    CHECK(p.weights[0].cwiseAbs().maxCoeff() <= lim);
    CHECK(p.biases[0].isZero(0.0));
}

TEST_CASE("init rejects degenerate layouts") {
    CHECK_THROWS_AS(init_mlp({7, 4}, 1), std::invalid_argument);
    CHECK_THROWS_AS(init_mlp({7, 0, 4}, 1), std::invalid_argument);
}

TEST_CASE("zero-initialized head outputs zero") {
    const MlpParams p = init_mlp({7, 30, 30, 5}, 3, InitScheme{true});
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int t = 0; t < 10; ++t) {
        Eigen::VectorXd x(7);
        for (int i = 0; i < 7; ++i) x(i) = n(rng);
        CHECK(forward(p, Scaler::identity(7), x).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("single identity layer passes the input through") {
    MlpParams p = init_mlp({3, 2, 3}, 0);
    // Collapse to a linear identity by dropping the hidden layer.
    p.sizes = {3, 3};
    p.weights = {Eigen::MatrixXd::Identity(3, 3)};
    p.biases = {Eigen::VectorXd::Zero(3)};
    p.activations = {Activation::Identity};
    Eigen::VectorXd x(3);
    x << 0.5, -2.0, 7.0;
    CHECK((forward(p, Scaler::identity(3), x) - x).norm() == 0.0);
}

TEST_CASE("2-2-1 net matches hand evaluation") {
    MlpParams p = init_mlp({2, 2, 1}, 0);
    p.weights[0] << 0.5, -0.3, 0.8, 0.2;
    p.biases[0] << 0.1, -0.2;
    p.weights[1] << 1.5, -0.7;
    p.biases[1] << 0.05;
    Eigen::VectorXd x(2);
    x << 0.4, -1.1;
    const double h0 = std::tanh(0.5 * 0.4 - 0.3 * -1.1 + 0.1);
    const double h1 = std::tanh(0.8 * 0.4 + 0.2 * -1.1 - 0.2);
    const double expect = 1.5 * h0 - 0.7 * h1 + 0.05;
    CHECK(std::abs(forward(p, Scaler::identity(2), x)(0) - expect) <= 1e-12);
}

TEST_CASE("forward rejects wrong input width") {
    const MlpParams p = init_mlp({3, 4, 1}, 0);
    CHECK_THROWS_AS(forward(p, Scaler::identity(3), Eigen::VectorXd::Zero(4)), std::invalid_argument);
}

TEST_CASE("scaler round-trips and floors the deviation") {
    Eigen::MatrixXd rows(4, 3);
    rows << 1, 5, 2, 2, 5, 4, 3, 5, 6, 4, 5, 9;
    const Scaler s = Scaler::fit(rows);
    CHECK(s.stdev[1] == Scaler::kStdFloor);
    CHECK(s.mean[0] == 2.5);
    const Eigen::MatrixXd back = s.inverse_rows(s.transform_rows(rows));
    CHECK((back - rows).cwiseAbs().maxCoeff() <= 1e-12);
    const Eigen::MatrixXd z = s.transform_rows(rows);
    CHECK(std::abs(z.col(0).mean()) <= 1e-15);
}

TEST_CASE("scaler statistics come from the rows it is fitted on") {
    Eigen::MatrixXd train(3, 1);
    train << 1.0, 2.0, 3.0;
    Eigen::MatrixXd both(5, 1);
    both << 1.0, 2.0, 3.0, 10.0, 12.0;
    const Scaler a = Scaler::fit(train);
    const Scaler b = Scaler::fit(both);
    CHECK(a.mean[0] == 2.0);
    CHECK(b.mean[0] != a.mean[0]);
}

TEST_CASE("tape forward agrees with the double forward") {
    const MlpParams p = init_mlp({4, 9, 9, 3}, 5);
    Eigen::MatrixXd z = Eigen::MatrixXd::Random(6, 4);
    ad::Tape t;
    const auto tp = record_params(t, p);
    const ad::Var out = forward(p, tp, t.variable(z));
    const Eigen::MatrixXd ref = forward_scaled(p, z);
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 3; ++c) {
            CHECK(std::abs(out.values()[static_cast<std::size_t>(r * 3 + c)] - ref(r, c)) <= 1e-14);
        }
    }
}

TEST_CASE("parameter gradients match finite differences") {
    const MlpParams p0 = init_mlp({3, 5, 4, 2}, 8);
    const Eigen::MatrixXd z = Eigen::MatrixXd::Random(4, 3);
    const Eigen::MatrixXd y = Eigen::MatrixXd::Random(4, 2);
    const std::vector<double> x0 = p0.flatten();
    auto loss = [&](ad::Tape& t, std::span<const ad::Var> x) {
        // Rebuild the weights as tape expressions of the flat inputs.
        MlpParams p = p0;
        TapeParams tp;
        std::size_t i = 0;
        for (int k = 0; k < p.layers(); ++k) {
            const auto& w = p.weights[static_cast<std::size_t>(k)];
            const auto nw = static_cast<std::size_t>(w.size());
            tp.weights.push_back(ad::reshape(ad::concat(x.subspan(i, nw)),
                                             ad::Shape{static_cast<int>(w.rows()), static_cast<int>(w.cols())}));
            i += nw;
            const auto nb = static_cast<std::size_t>(p.biases[static_cast<std::size_t>(k)].size());
            tp.biases.push_back(ad::concat(x.subspan(i, nb)));
            i += nb;
        }
        const ad::Var d = forward(p, tp, t.variable(z)) - t.variable(y);
        return ad::sum(d * d);
    };
    CHECK(ad::gradcheck(loss, x0, 1e-6).max_rel_error <= 1e-6);

    // gathered_gradient reads the same numbers straight off the tape.
    ad::Tape t;
    const auto tp = record_params(t, p0);
    const ad::Var d = forward(p0, tp, t.variable(z)) - t.variable(y);
    t.backward(ad::sum(d * d));
    const auto g = gathered_gradient(t, tp);
    const auto ref = ad::gradcheck(loss, x0, 1e-6).analytic;
    REQUIRE(g.size() == ref.size());
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(std::abs(g[k] - ref[k]) <= 1e-12 * (1.0 + std::abs(ref[k])));
}

TEST_CASE("first Adam step moves each parameter by the learning rate") {
    std::vector<double> w = {0.5, -1.0, 2.0};
    const std::vector<double> g = {3.0, -0.01, 1e-3};
    AdamState st(3);
    const AdamConfig cfg;
    adam_step(w, g, st, cfg, 1e-3);
    CHECK(std::abs(w[0] - (0.5 - 1e-3)) <= 1e-6);
    CHECK(std::abs(w[1] - (-1.0 + 1e-3)) <= 1e-6);
    CHECK(std::abs(w[2] - (2.0 - 1e-3)) <= 1e-6);
    CHECK(st.step == 1);
}

TEST_CASE("zero gradients leave parameters unchanged") {
    std::vector<double> w = {0.5, -1.0};
    const std::vector<double> g = {0.0, 0.0};
    AdamState st(2);
    for (int k = 0; k < 10; ++k) adam_step(w, g, st, AdamConfig{}, 1e-2);
    CHECK(w[0] == 0.5);
    CHECK(w[1] == -1.0);
    CHECK(st.step == 10);
}

TEST_CASE("Adam minimizes a quadratic") {
    std::vector<double> w = {1.0};
    AdamState st(1);
    for (int k = 0; k < 200; ++k) {
        const std::vector<double> g = {2.0 * w[0]};
        adam_step(w, g, st, AdamConfig{}, 0.05);
    }
    CHECK(std::abs(w[0]) < 0.05);
}

TEST_CASE("non-finite gradient aborts the step") {
    std::vector<double> w = {1.0, 2.0};
    const std::vector<double> g = {0.1, std::nan("")};
    AdamState st(2);
    CHECK_THROWS_AS(adam_step(w, g, st, AdamConfig{}, 1e-3), NonFiniteGradient);
    CHECK(w[0] == 1.0);
    CHECK(st.step == 0);
}

TEST_CASE("learning rate halves every 2000 epochs") {
    const AdamConfig c;
    CHECK(c.rate_at(0) == 1e-3);
    CHECK(c.rate_at(1999) == 1e-3);
    CHECK(c.rate_at(2000) == 5e-4);
    CHECK(c.rate_at(4500) == 2.5e-4);
}

TEST_CASE("parameters round-trip through text exactly") {
    const MlpParams p = init_mlp({7, 12, 12, 4}, 77);
    const Scaler s = Scaler::fit(Eigen::MatrixXd::Random(10, 7));
    std::stringstream ss;
    write_mlp(ss, "net", p);
    write_scaler(ss, "in", s);
    const MlpParams q = read_mlp(ss, "net");
    const Scaler r = read_scaler(ss, "in");
    CHECK(q.flatten() == p.flatten());
    CHECK(q.sizes == p.sizes);
    CHECK(r.mean == s.mean);
    CHECK(r.stdev == s.stdev);
    std::stringstream bad("other.sizes 1 2\n");
    CHECK_THROWS_AS(read_mlp(bad, "net"), std::runtime_error);
}

}  // TEST_SUITE
