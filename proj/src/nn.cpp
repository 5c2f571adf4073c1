#include "vtol/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace vtol::nn {

using ad::Var;

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (int k = 0; k < layers(); ++k) {
        n += static_cast<std::size_t>(weights[static_cast<std::size_t>(k)].size() +
                                      biases[static_cast<std::size_t>(k)].size());
    }
    return n;
}

void MlpParams::validate() const {
    if (sizes.size() < 2) {
        throw std::invalid_argument("mlp: need input and output sizes");
    }
    const std::size_t L = sizes.size() - 1;
    if (weights.size() != L || biases.size() != L || activations.size() != L) {
        throw std::invalid_argument("mlp: layer count mismatch");
    }
    for (std::size_t k = 0; k < L; ++k) {
        const auto& w = weights[k];
        if (w.rows() != sizes[k + 1] || w.cols() != sizes[k] || biases[k].size() != sizes[k + 1]) {
            throw std::invalid_argument(fmt::format("mlp: layer {} has the wrong shape", k));
        }
        if (!w.allFinite() || !biases[k].allFinite()) {
            throw std::invalid_argument(fmt::format("mlp: layer {} has non-finite entries", k));
        }
    }
}

std::vector<double> MlpParams::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (int k = 0; k < layers(); ++k) {
        const auto& w = weights[static_cast<std::size_t>(k)];
        for (int r = 0; r < w.rows(); ++r) {
            for (int c = 0; c < w.cols(); ++c) {
                out.push_back(w(r, c));
            }
        }
        const auto& b = biases[static_cast<std::size_t>(k)];
        out.insert(out.end(), b.data(), b.data() + b.size());
    }
    return out;
}

void MlpParams::assign(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
        throw std::invalid_argument("mlp: flat parameter size mismatch");
    }
    std::size_t i = 0;
    for (int k = 0; k < layers(); ++k) {
        auto& w = weights[static_cast<std::size_t>(k)];
        for (int r = 0; r < w.rows(); ++r) {
            for (int c = 0; c < w.cols(); ++c) {
                w(r, c) = flat[i++];
            }
        }
        auto& b = biases[static_cast<std::size_t>(k)];
        for (int r = 0; r < b.size(); ++r) {
            b(r) = flat[i++];
        }
    }
}

MlpParams init_mlp(const std::vector<int>& sizes, std::uint64_t seed, InitScheme scheme) {
    if (sizes.size() < 3) {
        throw std::invalid_argument("init_mlp: at least one hidden layer required");
    }
    for (int s : sizes) {
        if (s <= 0) {
            throw std::invalid_argument("init_mlp: zero-width layer");
        }
    }
    MlpParams p;
    p.sizes = sizes;
    p.seed = seed;
    std::mt19937_64 rng(seed);
    const std::size_t L = sizes.size() - 1;
    for (std::size_t k = 0; k < L; ++k) {
        const int in = sizes[k];
        const int out = sizes[k + 1];
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(out, in);
        const bool last = k + 1 == L;
        if (!(last && scheme.zero_final_layer)) {
            const double limit = std::sqrt(6.0 / (in + out));
            std::uniform_real_distribution<double> u(-limit, limit);
            for (int r = 0; r < out; ++r) {
                for (int c = 0; c < in; ++c) {
                    w(r, c) = u(rng);
                }
            }
        }
        p.weights.push_back(std::move(w));
        p.biases.push_back(Eigen::VectorXd::Zero(out));
        p.activations.push_back(last ? Activation::Identity : Activation::Tanh);
    }
    return p;
}

// ---- scaler -----------------------------------------------------------------

Scaler Scaler::fit(const Eigen::MatrixXd& rows) {
    if (rows.rows() == 0) {
        throw std::invalid_argument("Scaler::fit: no rows");
    }
    Scaler s;
    const double n = static_cast<double>(rows.rows());
    for (int c = 0; c < rows.cols(); ++c) {
        const double mu = rows.col(c).sum() / n;
        const double var = (rows.col(c).array() - mu).square().sum() / n;
        s.mean.push_back(mu);
        s.stdev.push_back(std::max(std::sqrt(var), kStdFloor));
    }
    return s;
}

Scaler Scaler::identity(int features) {
    Scaler s;
    s.mean.assign(static_cast<std::size_t>(features), 0.0);
    s.stdev.assign(static_cast<std::size_t>(features), 1.0);
    return s;
}

Eigen::VectorXd Scaler::transform(const Eigen::VectorXd& x) const {
    if (x.size() != features()) {
        throw std::invalid_argument("Scaler: feature count mismatch");
    }
    Eigen::VectorXd z(x.size());
    for (int i = 0; i < x.size(); ++i) {
        z(i) = (x(i) - mean[static_cast<std::size_t>(i)]) / stdev[static_cast<std::size_t>(i)];
    }
    return z;
}

Eigen::VectorXd Scaler::inverse(const Eigen::VectorXd& z) const {
    if (z.size() != features()) {
        throw std::invalid_argument("Scaler: feature count mismatch");
    }
    Eigen::VectorXd x(z.size());
    for (int i = 0; i < z.size(); ++i) {
        x(i) = z(i) * stdev[static_cast<std::size_t>(i)] + mean[static_cast<std::size_t>(i)];
    }
    return x;
}

Eigen::MatrixXd Scaler::transform_rows(const Eigen::MatrixXd& rows) const {
    Eigen::MatrixXd out(rows.rows(), rows.cols());
    for (int r = 0; r < rows.rows(); ++r) {
        out.row(r) = transform(rows.row(r).transpose()).transpose();
    }
    return out;
}

Eigen::MatrixXd Scaler::inverse_rows(const Eigen::MatrixXd& rows) const {
    Eigen::MatrixXd out(rows.rows(), rows.cols());
    for (int r = 0; r < rows.rows(); ++r) {
        out.row(r) = inverse(rows.row(r).transpose()).transpose();
    }
    return out;
}

// ---- forward ----------------------------------------------------------------

Eigen::MatrixXd forward_scaled(const MlpParams& p, const Eigen::MatrixXd& z) {
    if (z.cols() != p.inputs()) {
        throw std::invalid_argument(fmt::format("mlp forward: expected {} inputs, got {}", p.inputs(), z.cols()));
    }
    Eigen::MatrixXd h = z;
    for (int k = 0; k < p.layers(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        Eigen::MatrixXd a = h * p.weights[ku].transpose();
        a.rowwise() += p.biases[ku].transpose();
        if (p.activations[ku] == Activation::Tanh) {
            a = a.array().tanh().matrix();
        }
        h = std::move(a);
    }
    return h;
}

Eigen::VectorXd forward(const MlpParams& p, const Scaler& input_scaler, const Eigen::VectorXd& x) {
    if (x.size() != p.inputs()) {
        throw std::invalid_argument(fmt::format("mlp forward: expected {} inputs, got {}", p.inputs(), x.size()));
    }
    const Eigen::MatrixXd z = input_scaler.transform(x).transpose();
    return forward_scaled(p, z).row(0).transpose();
}

TapeParams record_params(ad::Tape& tape, const MlpParams& p) {
    TapeParams tp;
    for (int k = 0; k < p.layers(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        tp.weights.push_back(tape.variable(p.weights[ku]));
        tp.biases.push_back(tape.variable(Eigen::MatrixXd(p.biases[ku])));
    }
    return tp;
}

Var forward(const MlpParams& p, const TapeParams& tp, Var z) {
    if (z.shape().cols != p.inputs()) {
        throw std::invalid_argument("mlp forward: input width mismatch");
    }
    Var h = z;
    for (int k = 0; k < p.layers(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        h = ad::affine(h, tp.weights[ku], tp.biases[ku]);
        if (p.activations[ku] == Activation::Tanh) {
            h = ad::tanh(h);
        }
    }
    return h;
}

std::vector<double> gathered_gradient(const ad::Tape& tape, const TapeParams& tp) {
    std::vector<double> g;
    for (std::size_t k = 0; k < tp.weights.size(); ++k) {
        // Weights are stored row-major on the tape, matching flatten().
        const auto gw = tape.adjoint(tp.weights[k]);
        g.insert(g.end(), gw.begin(), gw.end());
        const auto gb = tape.adjoint(tp.biases[k]);
        g.insert(g.end(), gb.begin(), gb.end());
    }
    return g;
}

// ---- Adam -------------------------------------------------------------------

double AdamConfig::rate_at(int epoch) const {
    if (decay_every <= 0) {
        return learning_rate;
    }
    return learning_rate * std::pow(decay_factor, epoch / decay_every);
}

NonFiniteGradient::NonFiniteGradient(std::size_t index, double value)
    : std::runtime_error(fmt::format("non-finite gradient {} at parameter {}", value, index)), index_(index) {}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st, const AdamConfig& cfg,
               double lr) {
    if (params.size() != grads.size() || st.m.size() != params.size() || st.v.size() != params.size()) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw NonFiniteGradient(i, grads[i]);
        }
    }
    ++st.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grads[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double mh = st.m[i] / c1;
        const double vh = st.v[i] / c2;
        params[i] -= lr * mh / (std::sqrt(vh) + cfg.epsilon);
    }
}

// ---- text format ------------------------------------------------------------

namespace {

void write_values(std::ostream& os, const std::string& key, std::span<const double> v) {
    os << key;
    for (double x : v) {
        os << ' ' << fmt::format("{:.17g}", x);
    }
    os << '\n';
}

}  // namespace

std::vector<double> read_tagged(std::istream& is, const std::string& key) {
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty()) {
            break;
        }
    }
    std::istringstream ls(line);
    std::string got;
    ls >> got;
    if (got != key) {
        throw std::runtime_error(fmt::format("checkpoint: expected '{}', found '{}'", key, got));
    }
    std::vector<double> out;
    std::string tok;
    while (ls >> tok) {
        out.push_back(std::stod(tok));
    }
    return out;
}

void write_mlp(std::ostream& os, const std::string& name, const MlpParams& p) {
    std::vector<double> sizes(p.sizes.begin(), p.sizes.end());
    write_values(os, name + ".sizes", sizes);
    const double seed[] = {static_cast<double>(p.seed)};
    write_values(os, name + ".seed", seed);
    write_values(os, name + ".params", p.flatten());
}

MlpParams read_mlp(std::istream& is, const std::string& name) {
    const auto sz = read_tagged(is, name + ".sizes");
    const auto seed = read_tagged(is, name + ".seed");
    const auto flat = read_tagged(is, name + ".params");
    std::vector<int> sizes;
    for (double s : sz) {
        sizes.push_back(static_cast<int>(s));
    }
    MlpParams p = init_mlp(sizes, seed.empty() ? 0 : static_cast<std::uint64_t>(seed[0]));
    p.assign(flat);
    p.validate();
    return p;
}

void write_scaler(std::ostream& os, const std::string& name, const Scaler& s) {
    write_values(os, name + ".mean", s.mean);
    write_values(os, name + ".std", s.stdev);
}

Scaler read_scaler(std::istream& is, const std::string& name) {
    Scaler s;
    s.mean = read_tagged(is, name + ".mean");
    s.stdev = read_tagged(is, name + ".std");
    if (s.mean.size() != s.stdev.size()) {
        throw std::runtime_error("checkpoint: scaler size mismatch");
    }
    return s;
}

}  // namespace vtol::nn
