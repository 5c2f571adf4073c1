#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "vtol/piml.hpp"

using namespace vtol;
using namespace vtol::piml;

namespace {

const Physics& physics() {
    static const Physics ph(geometry::AircraftConfig::nominal());
    return ph;
}

FlightState cruise() { return FlightState{20.0, 5.0, 6000.0, 6000.0, 10.0, 10.0, 0.0}; }

// Small random batch inside the study bounds with targets from a distorted
// low-fidelity run.
Batch toy_batch(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Bounds b = Bounds::study();
    Batch out;
    out.x.resize(n, FlightState::kInputs);
    out.y.resize(n, AeroCoefficients::kOutputs);
    for (int i = 0; i < n; ++i) {
        std::array<double, FlightState::kInputs> a{};
        for (int c = 0; c < FlightState::kInputs; ++c) {
            const auto k = static_cast<std::size_t>(c);
            a[k] = std::uniform_real_distribution<double>(b.lower[k], b.upper[k])(rng);
        }
        a[0] = 8.0 + a[0] * 0.5;
        for (int c = 0; c < FlightState::kInputs; ++c) out.x(i, c) = a[static_cast<std::size_t>(c)];
        const auto y = lf_forward(physics(), FlightState::from_array(a)).coefficients.as_array();
        out.y(i, 0) = 1.1 * y[0];
        out.y(i, 1) = y[1] + 0.02;
        out.y(i, 2) = 0.9 * y[2];
        out.y(i, 3) = y[3] - 0.01;
    }
    return out;
}

Architecture tiny(bool zero_heads) {
    Architecture a;
    a.piml_a_transfer_hidden = {8, 8};
    a.piml_a_correction_hidden = {8, 8};
    a.piml_b_hidden = {8, 8};
    a.ann_hidden = {8, 8};
    a.zero_heads = zero_heads;
    return a;
}

Model tiny_model(ModelKind kind, const Batch& b, bool zero_heads, std::uint64_t seed = 7) {
    return make_model(kind, nn::Scaler::fit(b.x), nn::Scaler::fit(b.y), seed, tiny(zero_heads));
}

// Largest relative error between the analytic gradient and central
// differences over a sample of parameter indices, floored at 1e-3 of the
// largest gradient entry.
double objective_gradcheck(const Objective& obj, std::vector<double> w, int probes, double step) {
    std::vector<double> g;
    obj.loss_and_gradient(w, g);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> pick(0, w.size() - 1);
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    double worst = 0.0;
    for (int k = 0; k < probes; ++k) {
        const std::size_t i = pick(rng);
        const double w0 = w[i];
        w[i] = w0 + step;
        const double up = obj.loss(w);
        w[i] = w0 - step;
        const double dn = obj.loss(w);
        w[i] = w0;
        const double fd = (up - dn) / (2.0 * step);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max(1e-3 * gmax, std::max(std::abs(fd), std::abs(g[i]))));
    }
    return worst;
}

}  // namespace

TEST_SUITE("piml") {

TEST_CASE("model kinds round-trip through their names") {
    for (auto k : {ModelKind::LowFidelity, ModelKind::PimlA, ModelKind::PimlB, ModelKind::PureAnn}) {
        CHECK(kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(kind_from_string("gp"), std::invalid_argument);
}

TEST_CASE("idle rotors leave the low-fidelity wash at zero") {
    PhysicsOptions opt;
    opt.hover_rpm = 0.0;
    const Physics ph(geometry::AircraftConfig::nominal(), opt);
    FlightState f = cruise();
    f.omega_star = 0.0;
    f.omega_port = 0.0;
    const RotorState rs = ph.rotors(f);
    const auto w = rs.stencil.apply(rs.v_a, rs.v_t);
    double m = 0.0;
    for (const auto& v : w.at_control) m = std::max(m, norm(v));
    for (const auto& v : w.at_bound) m = std::max(m, norm(v));
    CHECK(m == 0.0);
    const auto clean = ph.solve(f.v, f.alpha, f.theta_elev, vlm::OnsetFlow::zeros(ph.panels()));
    const auto lf = lf_forward(ph, f).coefficients;
    CHECK(lf.CL == clean.CL);
    CHECK(lf.CD == clean.CD);
}

TEST_CASE("symmetric blowing gives no rolling moment") {
    for (double theta : {0.0, 30.0, 90.0}) {
        FlightState f = cruise();
        f.theta_star = f.theta_port = theta;
        CHECK(std::abs(lf_forward(physics(), f).coefficients.Cl) <= 1e-6);
    }
}

TEST_CASE("asymmetric blowing rolls the aircraft") {
    FlightState f = cruise();
    f.omega_star = 9000.0;
    f.omega_port = 4000.0;
    CHECK(std::abs(lf_forward(physics(), f).coefficients.Cl) > 1e-4);
}

TEST_CASE("low-fidelity prediction is deterministic") {
    const auto a = lf_forward(physics(), cruise()).coefficients.as_array();
    const auto b = lf_forward(physics(), cruise()).coefficients.as_array();
    CHECK(a == b);
}

TEST_CASE("taped low-fidelity forward agrees with the double path") {
    const auto xs = cruise().as_array();
    ad::Tape t;
    std::vector<ad::Var> in;
    for (double x : xs) in.push_back(t.variable(x));
    const auto out = lf_forward(physics(), in);
    const auto ref = lf_forward(physics(), cruise()).coefficients.as_array();
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(out[k].value() - ref[k]) <= 1e-10 * (1.0 + std::abs(ref[k])));
}

TEST_CASE("low-fidelity gradient in all inputs matches finite differences") {
    const auto xs = cruise().as_array();
    auto f = [](ad::Tape&, std::span<const ad::Var> x) {
        const auto c = lf_forward(physics(), x);
        return c[0] + c[1] * 3.0 + c[2] * 5.0 - c[3] * 2.0;
    };
    const auto r = ad::gradcheck(f, std::vector<double>(xs.begin(), xs.end()), 1e-4);
    CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("PIML-B with a zero head reproduces the low-fidelity model") {
    const Batch b = toy_batch(3, 1);
    const Model m = tiny_model(ModelKind::PimlB, b, true);
    for (int i = 0; i < b.size(); ++i) {
        std::array<double, 7> a{};
        for (int c = 0; c < 7; ++c) a[static_cast<std::size_t>(c)] = b.x(i, c);
        const FlightState f = FlightState::from_array(a);
        const auto p = predict(physics(), m, f).coefficients.as_array();
        const auto lf = lf_forward(physics(), f).coefficients.as_array();
        for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(p[k] - lf[k]) <= 1e-12);
    }
}

TEST_CASE("PIML-B induced correction on the starboard rotor rolls the aircraft") {
    FlightState f = cruise();
    const RotorState rs = physics().rotors(f);
    std::vector<double> va = rs.v_a;
    const int ns = physics().stations();
    for (int d = 0; d < static_cast<int>(rs.discs.size()); ++d) {
        if (physics().group(d) != RotorGroup::Starboard) continue;
        for (int s = 0; s < ns; ++s) va[static_cast<std::size_t>(d * ns + s)] += 1.0;
    }
    const auto c = physics().solve(f.v, f.alpha, f.theta_elev, rs.stencil.apply(va, rs.v_t));
    CHECK(std::abs(c.Cl) > 1e-5);
}

TEST_CASE("PIML-A with zero heads is the uniform-wash physics") {
    const Batch b = toy_batch(2, 2);
    const Model m = tiny_model(ModelKind::PimlA, b, true);
    const FlightState f = cruise();
    const Prediction p = predict(physics(), m, f);
    std::array<double, 6> induced{};
    induced.fill(std::log(2.0) * m.scaling.v_scale);
    const auto ref =
        physics().solve(f.v, f.alpha, f.theta_elev, uniform_wash(physics(), f, f.theta_star, f.theta_port, induced));
    const auto got = p.coefficients.as_array();
    const auto want = ref.as_array();
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(std::abs(got[k] - want[k]) <= 1e-12 * (1.0 + std::abs(want[k])));
        CHECK(std::abs(p.output_correction[k]) <= 1e-12);
    }
    CHECK(p.transfer.v == f.v);
}

TEST_CASE("PIML-A induced prior sets the starting magnitudes") {
    const Batch b = toy_batch(4, 15);
    Architecture arch = tiny(true);
    arch.induced_prior = bem_induced_prior(physics(), b);
    REQUIRE(arch.induced_prior.size() == 6);
    for (double v : arch.induced_prior) CHECK(v > 0.0);
    const Model m = make_model(ModelKind::PimlA, nn::Scaler::fit(b.x), nn::Scaler::fit(b.y), 3, arch);
    const FlightState f = cruise();
    const Prediction p = predict(physics(), m, f);
    std::array<double, 6> induced{};
    for (std::size_t j = 0; j < 6; ++j) {
        induced[j] = arch.induced_prior[j];
        CHECK(std::abs(p.transfer.induced[j] - induced[j]) <= 1e-12 * induced[j]);
    }
    const auto want =
        physics().solve(f.v, f.alpha, f.theta_elev, uniform_wash(physics(), f, f.theta_star, f.theta_port, p.transfer.induced))
            .as_array();
    const auto got = p.coefficients.as_array();
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(got[k] - want[k]) <= 1e-12 * (1.0 + std::abs(want[k])));
    arch.induced_prior = {1.0, 2.0};
    CHECK_THROWS_AS(make_model(ModelKind::PimlA, nn::Scaler::fit(b.x), nn::Scaler::fit(b.y), 3, arch),
                    std::invalid_argument);
}

TEST_CASE("pure ANN with a zero head predicts the target mean") {
    const Batch b = toy_batch(4, 3);
    const Model m = tiny_model(ModelKind::PureAnn, b, true);
    const auto p = predict(physics(), m, cruise()).coefficients.as_array();
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(p[k] - m.target_scaler.mean[k]) <= 1e-14);
}

TEST_CASE("out-of-bounds inputs are flagged") {
    FlightState f = cruise();
    f.v = 60.0;
    const Batch b = toy_batch(2, 4);
    CHECK(predict(physics(), tiny_model(ModelKind::PureAnn, b, true), f).out_of_bounds);
    CHECK_FALSE(predict(physics(), tiny_model(ModelKind::PureAnn, b, true), cruise()).out_of_bounds);
}

TEST_CASE("scaled loss on hand examples") {
    const nn::Scaler s = nn::Scaler::identity(4);
    Eigen::MatrixXd p(1, 4), y(1, 4);
    p << 1, 0, 0, 0;
    y << 0, 0, 0, 0;
    CHECK(mse_loss(p, y, s) == doctest::Approx(0.25));
    Eigen::MatrixXd p2(2, 4), y2 = Eigen::MatrixXd::Zero(2, 4);
    p2 << 1, 1, 0, 0, 0, 0, 0, 3;
    CHECK(mse_loss(p2, y2, s) == doctest::Approx((2.0 + 9.0) / 8.0));
    CHECK_THROWS_AS(mse_loss(Eigen::MatrixXd(0, 4), Eigen::MatrixXd(0, 4), s), std::invalid_argument);
}

TEST_CASE("objective loss agrees with evaluating predictions") {
    const Batch b = toy_batch(4, 5);
    for (auto kind : {ModelKind::PimlA, ModelKind::PimlB, ModelKind::PureAnn}) {
        const Model m = tiny_model(kind, b, false);
        const Objective obj(physics(), m, b);
        const Evaluation ev = evaluate(physics(), m, b, m.target_scaler);
        CHECK(obj.loss(m.flatten()) == doctest::Approx(mse_loss(ev.predictions, b.y, m.target_scaler)).epsilon(1e-10));
    }
}

TEST_CASE("loss gradients match finite differences") {
    const Batch b = toy_batch(3, 6);
    SUBCASE("ANN") {
        const Model m = tiny_model(ModelKind::PureAnn, b, false);
        CHECK(objective_gradcheck(Objective(physics(), m, b), m.flatten(), 25, 1e-6) <= 1e-6);
    }
    SUBCASE("PIML-B") {
        const Model m = tiny_model(ModelKind::PimlB, b, false);
        CHECK(objective_gradcheck(Objective(physics(), m, b), m.flatten(), 25, 1e-5) <= 1e-4);
    }
    SUBCASE("PIML-A") {
        const Model m = tiny_model(ModelKind::PimlA, b, false);
        CHECK(objective_gradcheck(Objective(physics(), m, b), m.flatten(), 25, 1e-5) <= 1e-4);
    }
}

TEST_CASE("training is deterministic and improves the loss") {
    const Batch tr = toy_batch(6, 7);
    const Batch va = toy_batch(3, 8);
    TrainConfig cfg;
    cfg.max_epochs = 15;
    cfg.adam.learning_rate = 1e-2;
    const TrainResult a = train(physics(), ModelKind::PimlB, tr, va, cfg, tiny(true));
    const TrainResult b = train(physics(), ModelKind::PimlB, tr, va, cfg, tiny(true));
    REQUIRE(a.history.size() == 15);
    CHECK(a.model.flatten() == b.model.flatten());
    CHECK(a.history.back().train_loss < a.history.front().train_loss);
    CHECK_FALSE(a.aborted);
}

TEST_CASE("overlapping splits are rejected") {
    const Batch tr = toy_batch(4, 9);
    Batch va = toy_batch(2, 10);
    va.x.row(1) = tr.x.row(2);
    CHECK_THROWS_AS(train(physics(), ModelKind::PureAnn, tr, va, TrainConfig{}, tiny(true)), std::invalid_argument);
    CHECK_THROWS_AS(train(physics(), ModelKind::LowFidelity, tr, toy_batch(2, 10), TrainConfig{}),
                    std::invalid_argument);
}

TEST_CASE("a non-finite loss aborts and keeps the last good checkpoint") {
    const Batch tr = toy_batch(5, 11);
    const Batch va = toy_batch(2, 12);
    const std::string path = (std::filesystem::temp_directory_path() / "vtol_nan_test.model").string();
    std::filesystem::remove(path);
    TrainConfig cfg;
    cfg.max_epochs = 20;
    cfg.adam.learning_rate = 1e-2;
    cfg.checkpoint_path = path;
    cfg.checkpoint_every = 1;
    cfg.inject_nonfinite_at = 6;
    const TrainResult r = train(physics(), ModelKind::PureAnn, tr, va, cfg, tiny(true));
    CHECK(r.aborted);
    CHECK(r.abort_reason.find("non-finite") != std::string::npos);
    CHECK(r.history.size() == 6);
    REQUIRE(std::filesystem::exists(path));
    const Model back = load_model(path);
    CHECK(back.flatten() == r.model.flatten());
    for (double w : back.flatten()) CHECK(std::isfinite(w));
    std::filesystem::remove(path);
}

TEST_CASE("checkpoints round-trip bit for bit") {
    const Batch b = toy_batch(4, 13);
    for (auto kind : {ModelKind::PimlA, ModelKind::PimlB, ModelKind::PureAnn}) {
        const Model m = tiny_model(kind, b, false);
        std::stringstream ss;
        write_model(ss, m, "{\"k\":1}");
        const Model r = read_model(ss);
        CHECK(r.kind == kind);
        CHECK(r.flatten() == m.flatten());
        CHECK(r.input_scaler.mean == m.input_scaler.mean);
        CHECK(r.target_scaler.stdev == m.target_scaler.stdev);
        const auto p = predict(physics(), m, cruise()).coefficients.as_array();
        const auto q = predict(physics(), r, cruise()).coefficients.as_array();
        CHECK(p == q);
    }
    std::stringstream bad("vtol-model 1\nkind piml_a\nconfig {}\nscaling 1 2 3\n");
    CHECK_THROWS_AS(read_model(bad), std::runtime_error);
}

TEST_CASE("correction report needs a hybrid model") {
    const Batch b = toy_batch(3, 14);
    CHECK(correction_report(physics(), tiny_model(ModelKind::PimlA, b, false), b).cols() == 4);
    CHECK(correction_report(physics(), tiny_model(ModelKind::PimlB, b, false), b).cols() == 6);
    CHECK_THROWS_AS(correction_report(physics(), tiny_model(ModelKind::PureAnn, b, false), b), std::invalid_argument);
}

}  // TEST_SUITE
