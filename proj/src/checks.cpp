#include "vtol/checks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace vtol::checks {

using piml::Architecture;
using piml::Batch;
using piml::ModelKind;

namespace {

std::string hyphenated(std::string s) {
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
}

const std::array<FlightState, 3>& pipeline_states() {
    static const std::array<FlightState, 3> s = {
        FlightState{20.0, 5.0, 6000.0, 7000.0, 10.0, 20.0, 3.0},
        FlightState{9.0, -4.0, 8000.0, 5000.0, 60.0, 45.0, -5.0},
        FlightState{35.0, 8.0, 4500.0, 9000.0, 3.0, 8.0, 10.0},
    };
    return s;
}

std::array<double, 4> taped_values(const piml::Physics& ph, const std::array<double, 7>& x) {
    ad::Tape t;
    std::vector<ad::Var> in;
    for (double v : x) in.push_back(t.variable(v));
    const auto c = piml::lf_forward(ph, in);
    return {c[0].value(), c[1].value(), c[2].value(), c[3].value()};
}

CheckResult pipeline_check(const piml::Physics& ph, int input, CheckResult r) {
    const auto k = static_cast<std::size_t>(input);
    int si = 0;
    for (const FlightState& f : pipeline_states()) {
        const auto x0 = f.as_array();
        ad::Tape t;
        std::vector<ad::Var> in;
        for (double v : x0) in.push_back(t.variable(v));
        const auto c = piml::lf_forward(ph, in);

        const double h = 1e-4 * std::max(1.0, std::abs(x0[k]));
        auto xp = x0;
        auto xm = x0;
        xp[k] += h;
        xm[k] -= h;
        const auto up = taped_values(ph, xp);
        const auto dn = taped_values(ph, xm);

        for (std::size_t o = 0; o < 4; ++o) {
            const ad::Gradient g = ad::gradient(t, c[o], in);
            double scale = 0.0;
            for (double a : g) scale = std::max(scale, std::abs(a));
            const double floor = 1e-6 * scale + 1e-300;
            const double a = g[k];
            const double n = (up[o] - dn[o]) / (2.0 * h);
            const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
            if (err >= r.max_rel_error) {
                r.max_rel_error = err;
                r.worst = fmt::format("state {} d{}: autodiff {:.9g} fd {:.9g}", si, kOutputNames[o], a, n);
            }
        }
        ++si;
    }
    return r;
}

Batch check_batch(const piml::Physics& ph) {
    Batch b;
    b.x.resize(2, FlightState::kInputs);
    b.y.resize(2, AeroCoefficients::kOutputs);
    for (int i = 0; i < 2; ++i) {
        const FlightState& f = pipeline_states()[static_cast<std::size_t>(i)];
        const auto x = f.as_array();
        const auto y = piml::lf_forward(ph, f).coefficients.as_array();
        for (int c = 0; c < FlightState::kInputs; ++c) b.x(i, c) = x[static_cast<std::size_t>(c)];
        b.y(i, 0) = 1.1 * y[0];
        b.y(i, 1) = y[1] + 0.02;
        b.y(i, 2) = 0.9 * y[2] + 0.001;
        b.y(i, 3) = y[3] - 0.01;
    }
    return b;
}

CheckResult loss_check(const piml::Physics& ph, ModelKind kind, CheckResult r) {
    const Batch b = check_batch(ph);
    Architecture arch;
    arch.piml_a_transfer_hidden = {8, 8};
    arch.piml_a_correction_hidden = {8, 8};
    arch.piml_b_hidden = {8, 8};
    arch.ann_hidden = {8, 8};
    arch.zero_heads = false;
    arch.induced_prior = piml::bem_induced_prior(ph, b);
    const piml::Model m = piml::make_model(kind, nn::Scaler::fit(b.x), nn::Scaler::fit(b.y), 11, arch);
    const piml::Objective obj(ph, m, b);

    std::vector<double> w = m.flatten();
    std::vector<double> g;
    obj.loss_and_gradient(w, g);
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    const double step = kind == ModelKind::PureAnn ? 1e-6 : 1e-5;
    const double floor = 1e-3 * gmax + 1e-300;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double w0 = w[i];
        w[i] = w0 + step;
        const double up = obj.loss(w);
        w[i] = w0 - step;
        const double dn = obj.loss(w);
        w[i] = w0;
        const double n = (up - dn) / (2.0 * step);
        const double err = std::abs(n - g[i]) / std::max({std::abs(n), std::abs(g[i]), floor});
        if (err >= r.max_rel_error) {
            r.max_rel_error = err;
            r.worst = fmt::format("weight {} of {}: autodiff {:.9g} fd {:.9g}", i, w.size(), g[i], n);
        }
    }
    return r;
}

}  // namespace

std::vector<std::string> gradcheck_names() {
    std::vector<std::string> out;
    for (const char* n : kInputNames) out.push_back("pipeline-" + hyphenated(n));
    out.insert(out.end(), {"loss-ann", "loss-piml-a", "loss-piml-b"});
    return out;
}

double default_threshold(const std::string& name) { return name == "loss-ann" ? 1e-6 : 1e-4; }

CheckResult run_gradcheck(const piml::Physics& ph, const std::string& name, double threshold) {
    CheckResult r;
    r.name = name;
    r.threshold = threshold < 0.0 ? default_threshold(name) : threshold;
    for (int i = 0; i < FlightState::kInputs; ++i) {
        if (name == "pipeline-" + hyphenated(kInputNames[static_cast<std::size_t>(i)])) {
            return pipeline_check(ph, i, r);
        }
    }
    if (name == "loss-ann") return loss_check(ph, ModelKind::PureAnn, r);
    if (name == "loss-piml-a") return loss_check(ph, ModelKind::PimlA, r);
    if (name == "loss-piml-b") return loss_check(ph, ModelKind::PimlB, r);
    throw std::invalid_argument("unknown gradient check '" + name + "'");
}

}  // namespace vtol::checks
