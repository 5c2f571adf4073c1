#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "vtol/log.hpp"
#include "vtol/piml.hpp"

namespace vtol::piml {

namespace {

std::vector<int> layout(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> s = {in};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return s;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Eigen::MatrixXd row(const Eigen::VectorXd& v) { return v.transpose(); }

}  // namespace

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& net : nets) n += net.parameter_count();
    return n;
}

std::vector<double> Model::flatten() const {
    std::vector<double> out;
    for (const auto& net : nets) {
        const auto f = net.flatten();
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

void Model::assign(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
        throw std::invalid_argument("model: flat parameter size mismatch");
    }
    std::size_t off = 0;
    for (auto& net : nets) {
        const std::size_t n = net.parameter_count();
        net.assign(flat.subspan(off, n));
        off += n;
    }
}

Model make_model(ModelKind kind, const nn::Scaler& inputs, const nn::Scaler& targets, std::uint64_t seed,
                 const Architecture& arch, const TransferScaling& scaling) {
    Model m;
    m.kind = kind;
    m.input_scaler = inputs;
    m.target_scaler = targets;
    m.scaling = scaling;
    const nn::InitScheme head{arch.zero_heads};
    constexpr int nin = FlightState::kInputs;
    constexpr int nout = AeroCoefficients::kOutputs;
    switch (kind) {
        case ModelKind::LowFidelity:
            break;
        case ModelKind::PimlA:
            m.nets.push_back(nn::init_mlp(layout(nin, arch.piml_a_transfer_hidden, kTransferOutputs), seed, head));
            m.nets.push_back(
                nn::init_mlp(layout(kCorrectionInputs, arch.piml_a_correction_hidden, nout), seed + 1, head));
            if (!arch.induced_prior.empty()) {
                if (arch.induced_prior.size() != kInducedCorrections) {
                    throw std::invalid_argument("induced prior needs 6 magnitudes");
                }
                for (int j = 0; j < kInducedCorrections; ++j) {
                    const double u = arch.induced_prior[static_cast<std::size_t>(j)] / scaling.v_scale;
                    if (!(u > 0.0)) {
                        throw std::invalid_argument("induced prior magnitudes must be positive");
                    }
                    // Inverse softplus.
                    m.nets[0].biases.back()(3 + j) = u + std::log(-std::expm1(-u));
                }
            }
            break;
        case ModelKind::PimlB:
            m.nets.push_back(nn::init_mlp(layout(nin, arch.piml_b_hidden, kInducedCorrections), seed, head));
            break;
        case ModelKind::PureAnn:
            m.nets.push_back(nn::init_mlp(layout(nin, arch.ann_hidden, nout), seed, head));
            break;
    }
    return m;
}

bem::WashStencil uniform_stencil(const Physics& ph, const FlightState& shifted, double theta_star,
                                 double theta_port, const std::array<double, 6>& induced) {
    FlightState tilt = shifted;
    tilt.theta_star = theta_star;
    tilt.theta_port = theta_port;
    const auto discs = ph.discs(tilt);
    const double alpha = deg2rad(shifted.alpha);
    std::vector<bem::WashSource<double>> sources;
    for (std::size_t i = 0; i < discs.size(); ++i) {
        const auto& d = discs[i];
        const auto g = static_cast<std::size_t>(ph.group(static_cast<int>(i)));
        bem::WashSource<double> s;
        s.disc = &d;
        s.axis = d.axis;
        s.inflow = bem::axial_inflow(shifted.v, alpha, d.axis);
        s.fraction = {0.5};
        s.radius = {0.5 * d.radius};
        s.v_a = {induced[2 * g]};
        s.v_t = {induced[2 * g + 1]};
        sources.push_back(std::move(s));
    }
    return bem::build_wash_stencil(ph.lattice().mesh(), sources, ph.options().wash_scale);
}

vlm::OnsetFlow uniform_wash(const Physics& ph, const FlightState& shifted, double theta_star, double theta_port,
                            const std::array<double, 6>& induced) {
    std::vector<double> va;
    std::vector<double> vt;
    for (int i = 0; i < static_cast<int>(ph.aircraft().props.size()); ++i) {
        const auto g = static_cast<std::size_t>(ph.group(i));
        va.push_back(induced[2 * g]);
        vt.push_back(induced[2 * g + 1]);
    }
    return uniform_stencil(ph, shifted, theta_star, theta_port, induced).apply(va, vt);
}

Prediction predict(const Physics& ph, const Model& m, const FlightState& f) {
    Prediction p;
    p.out_of_bounds = !Bounds::study().contains(f);
    if (p.out_of_bounds) {
        warn(fmt::format("input outside the sampled bounds (v={}, alpha={}, theta_elev={})", f.v, f.alpha,
                         f.theta_elev));
    }
    const auto xa = f.as_array();
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(xa.data(), FlightState::kInputs);
    switch (m.kind) {
        case ModelKind::LowFidelity: {
            const LfResult r = lf_forward(ph, f);
            p.coefficients = r.coefficients;
            p.physics = r.coefficients;
            p.converged = r.converged;
            break;
        }
        case ModelKind::PureAnn: {
            const Eigen::VectorXd z = m.input_scaler.transform(x);
            const Eigen::VectorXd y = m.target_scaler.inverse(nn::forward_scaled(m.nets[0], row(z)).row(0).transpose());
            p.coefficients = AeroCoefficients{y(0), y(1), y(2), y(3)};
            break;
        }
        case ModelKind::PimlB: {
            const RotorState rs = ph.rotors(f);
            const Eigen::VectorXd o = nn::forward_scaled(m.nets[0], row(m.input_scaler.transform(x))).row(0).transpose();
            for (int j = 0; j < kInducedCorrections; ++j) {
                p.induced_correction[static_cast<std::size_t>(j)] = m.scaling.b_bound * std::tanh(o(j));
            }
            std::vector<double> va = rs.v_a;
            std::vector<double> vt = rs.v_t;
            const int ns = ph.stations();
            for (std::size_t d = 0; d < rs.discs.size(); ++d) {
                const auto g = static_cast<std::size_t>(ph.group(static_cast<int>(d)));
                for (int s = 0; s < ns; ++s) {
                    const std::size_t k = d * static_cast<std::size_t>(ns) + static_cast<std::size_t>(s);
                    va[k] = va[k] + p.induced_correction[2 * g];
                    vt[k] = vt[k] + p.induced_correction[2 * g + 1];
                }
            }
            p.coefficients = ph.solve(f.v, f.alpha, f.theta_elev, rs.stencil.apply(va, vt));
            p.physics = p.coefficients;
            p.converged = rs.converged;
            break;
        }
        case ModelKind::PimlA: {
            const Eigen::VectorXd z = m.input_scaler.transform(x);
            const Eigen::VectorXd o = nn::forward_scaled(m.nets[0], row(z)).row(0).transpose();
            const TransferScaling& k = m.scaling;
            TransferParameters& tp = p.transfer;
            tp.v = f.v + o(0) * k.v_shift;
            tp.alpha = f.alpha + o(1) * k.alpha_shift;
            tp.theta_elev = f.theta_elev + o(2) * k.elev_shift;
            for (int j = 0; j < 6; ++j) {
                tp.induced[static_cast<std::size_t>(j)] = softplus(o(3 + j)) * k.v_scale;
            }
            FlightState shifted = f;
            shifted.v = tp.v;
            shifted.alpha = tp.alpha;
            shifted.theta_elev = tp.theta_elev;
            p.physics = ph.solve(tp.v, tp.alpha, tp.theta_elev,
                                 uniform_wash(ph, shifted, f.theta_star, f.theta_port, tp.induced));
            const auto ya = p.physics.as_array();
            const Eigen::VectorXd ys =
                m.target_scaler.transform(Eigen::Map<const Eigen::VectorXd>(ya.data(), AeroCoefficients::kOutputs));
            Eigen::VectorXd zc(kCorrectionInputs);
            zc << z, ys;
            const Eigen::VectorXd c = nn::forward_scaled(m.nets[1], row(zc)).row(0).transpose();
            const Eigen::VectorXd y = m.target_scaler.inverse(ys + c);
            for (int j = 0; j < 4; ++j) {
                p.output_correction[static_cast<std::size_t>(j)] = y(j) - ya[static_cast<std::size_t>(j)];
            }
            p.coefficients = AeroCoefficients{y(0), y(1), y(2), y(3)};
            break;
        }
    }
    return p;
}

// ---- checkpoints ------------------------------------------------------------

void write_model(std::ostream& os, const Model& m, const std::string& config_echo) {
    os << "vtol-model 1\n";
    os << "kind " << to_string(m.kind) << '\n';
    os << "config " << config_echo << '\n';
    const auto& k = m.scaling;
    os << fmt::format("scaling {:.17g} {:.17g} {:.17g} {:.17g} {:.17g}\n", k.v_shift, k.alpha_shift, k.elev_shift,
                      k.v_scale, k.b_bound);
    nn::write_scaler(os, "input", m.input_scaler);
    nn::write_scaler(os, "target", m.target_scaler);
    os << "nets " << m.nets.size() << '\n';
    for (std::size_t i = 0; i < m.nets.size(); ++i) {
        nn::write_mlp(os, fmt::format("net{}", i), m.nets[i]);
    }
}

namespace {

std::string keyed_line(std::istream& is, const std::string& key) {
    std::string line;
    if (!std::getline(is, line) || line.rfind(key + " ", 0) != 0) {
        throw std::runtime_error(fmt::format("checkpoint: expected '{}'", key));
    }
    return line.substr(key.size() + 1);
}

}  // namespace

Model read_model(std::istream& is) {
    std::string header;
    std::getline(is, header);
    if (header != "vtol-model 1") {
        throw std::runtime_error("checkpoint: not a model file");
    }
    Model m;
    m.kind = kind_from_string(keyed_line(is, "kind"));
    keyed_line(is, "config");
    const auto sc = nn::read_tagged(is, "scaling");
    if (sc.size() != 5) {
        throw std::runtime_error("checkpoint: scaling needs 5 values");
    }
    m.scaling = TransferScaling{sc[0], sc[1], sc[2], sc[3], sc[4]};
    m.input_scaler = nn::read_scaler(is, "input");
    m.target_scaler = nn::read_scaler(is, "target");
    const auto count = nn::read_tagged(is, "nets");
    const std::size_t expected = m.kind == ModelKind::PimlA ? 2 : (m.kind == ModelKind::LowFidelity ? 0 : 1);
    if (count.size() != 1 || static_cast<std::size_t>(count[0]) != expected) {
        throw std::runtime_error(fmt::format("checkpoint: kind {} needs {} nets", to_string(m.kind), expected));
    }
    for (std::size_t i = 0; i < expected; ++i) {
        m.nets.push_back(nn::read_mlp(is, fmt::format("net{}", i)));
    }
    return m;
}

void save_model(const Model& m, const std::string& path, const std::string& config_echo) {
    // Write-then-rename so an interrupted save never clobbers the previous file.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) {
            throw std::runtime_error("cannot write checkpoint " + tmp);
        }
        write_model(os, m, config_echo);
        if (!os) {
            throw std::runtime_error("failed writing checkpoint " + tmp);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("cannot move checkpoint into place: " + path);
    }
}

Model load_model(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open checkpoint " + path);
    }
    return read_model(is);
}

}  // namespace vtol::piml
