#include <stdexcept>

#include "vtol/piml.hpp"

namespace vtol::piml {

using ad::Var;
using geometry::PropellerDisc;
using geometry::PropGroup;

const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::LowFidelity:
            return "lf";
        case ModelKind::PimlA:
            return "piml_a";
        case ModelKind::PimlB:
            return "piml_b";
        case ModelKind::PureAnn:
            return "ann";
    }
    return "?";
}

ModelKind kind_from_string(const std::string& s) {
    if (s == "lf") return ModelKind::LowFidelity;
    if (s == "piml_a") return ModelKind::PimlA;
    if (s == "piml_b") return ModelKind::PimlB;
    if (s == "ann") return ModelKind::PureAnn;
    throw std::invalid_argument("unknown model kind '" + s + "' (expected lf, piml_a, piml_b or ann)");
}

Physics::Physics(geometry::AircraftConfig aircraft, PhysicsOptions options, vlm::Parallelism par)
    : aircraft_(std::move(aircraft)), options_(options) {
    aircraft_.validate();
    for (const auto& p : aircraft_.props) {
        if (p.stations != aircraft_.props.front().stations) {
            throw std::invalid_argument("all rotors must use the same number of blade stations");
        }
    }
    lattice_ = std::make_shared<const vlm::VortexLattice>(geometry::build_mesh(aircraft_),
                                                          vlm::ReferenceGeometry::from(aircraft_), par);
}

int Physics::stations() const { return aircraft_.props.front().stations; }

RotorGroup Physics::group(int disc) const {
    switch (aircraft_.props[static_cast<std::size_t>(disc)].group) {
        case PropGroup::Starboard:
            return RotorGroup::Starboard;
        case PropGroup::Port:
            return RotorGroup::Port;
        case PropGroup::Hover:
            break;
    }
    return RotorGroup::Hover;
}

std::vector<PropellerDisc> Physics::discs(const FlightState& f) const {
    std::vector<PropellerDisc> out;
    for (const auto& p : aircraft_.props) {
        if (p.group == PropGroup::Starboard) {
            out.push_back(geometry::tilt_propeller(p, f.theta_star));
        } else if (p.group == PropGroup::Port) {
            out.push_back(geometry::tilt_propeller(p, f.theta_port));
        } else {
            out.push_back(p);
        }
    }
    return out;
}

std::array<double, 6> Physics::rpms(const FlightState& f) const {
    std::array<double, 6> r{};
    for (int i = 0; i < 6; ++i) {
        switch (group(i)) {
            case RotorGroup::Starboard:
                r[static_cast<std::size_t>(i)] = f.omega_star;
                break;
            case RotorGroup::Port:
                r[static_cast<std::size_t>(i)] = f.omega_port;
                break;
            case RotorGroup::Hover:
                r[static_cast<std::size_t>(i)] = options_.hover_rpm;
                break;
        }
    }
    return r;
}

RotorState Physics::rotors(const FlightState& f) const {
    RotorState rs;
    rs.discs = discs(f);
    const auto rpm = rpms(f);
    const double alpha = deg2rad(f.alpha);
    std::vector<bem::WashSource<double>> sources;
    rs.bem.reserve(rs.discs.size());
    for (std::size_t i = 0; i < rs.discs.size(); ++i) {
        const auto& d = rs.discs[i];
        const double v0 = bem::axial_inflow(f.v, alpha, d.axis);
        rs.bem.push_back(bem::solve_bem(d, v0, rpm[i], aircraft_.rho, options_.polar));
        const auto& s = rs.bem.back();
        rs.converged = rs.converged && s.converged;
        rs.max_iterations = std::max(rs.max_iterations, s.iterations);
        rs.v_a.insert(rs.v_a.end(), s.v_a.begin(), s.v_a.end());
        rs.v_t.insert(rs.v_t.end(), s.v_t.begin(), s.v_t.end());
        sources.push_back(bem::wash_source(d, d.axis, s));
    }
    rs.stencil = bem::build_wash_stencil(lattice_->mesh(), sources, options_.wash_scale);
    return rs;
}

AeroCoefficients Physics::solve(double v, double alpha_deg, double theta_elev_deg, const vlm::OnsetFlow& wash) const {
    const Vec3 vinf = vlm::freestream_direction(deg2rad(alpha_deg)) * v;
    vlm::OnsetFlow onset = vlm::OnsetFlow::uniform(panels(), vinf);
    onset += wash;
    return lattice_->solve(v, alpha_deg, theta_elev_deg, onset).coefficients;
}

LfResult lf_forward(const Physics& ph, const FlightState& f) {
    const RotorState rs = ph.rotors(f);
    LfResult r;
    r.coefficients = ph.solve(f.v, f.alpha, f.theta_elev, rs.stencil.apply(rs.v_a, rs.v_t));
    r.converged = rs.converged;
    return r;
}

namespace {

Var field_node(const std::vector<Vec3T<Var>>& field) {
    std::vector<Var> parts;
    parts.reserve(3 * field.size());
    for (const auto& v : field) {
        parts.push_back(v.x);
        parts.push_back(v.y);
        parts.push_back(v.z);
    }
    return ad::reshape(ad::concat(parts), ad::Shape{static_cast<int>(field.size()), 3});
}

}  // namespace

std::array<Var, 4> lf_forward(const Physics& ph, std::span<const Var> in) {
    if (in.size() != FlightState::kInputs) {
        throw std::invalid_argument("lf_forward: seven inputs required");
    }
    ad::Tape& t = *in[0].tape();
    FlightState f;
    f.v = in[0].value();
    f.alpha = in[1].value();
    f.theta_star = in[4].value();
    f.theta_port = in[5].value();
    const auto discs = ph.discs(f);
    const Var alpha = in[1] * (kPi / 180.0);
    std::vector<bem::BemSolutionT<Var>> sols;
    sols.reserve(discs.size());
    std::vector<bem::WashSource<Var>> sources;
    for (std::size_t i = 0; i < discs.size(); ++i) {
        const auto g = ph.group(static_cast<int>(i));
        Vec3T<Var> axis;
        Var rpm;
        if (g == RotorGroup::Starboard || g == RotorGroup::Port) {
            axis = geometry::tilted_axis(g == RotorGroup::Starboard ? in[4] : in[5]);
            rpm = g == RotorGroup::Starboard ? in[2] : in[3];
        } else {
            const Vec3& a = discs[i].axis;
            axis = Vec3T<Var>{t.variable(a.x), t.variable(a.y), t.variable(a.z)};
            rpm = t.variable(ph.options().hover_rpm);
        }
        const Var v0 = bem::axial_inflow(in[0], alpha, axis);
        sols.push_back(bem::solve_bem(discs[i], v0, rpm, ph.aircraft().rho, ph.options().polar));
        sources.push_back(bem::wash_source(discs[i], axis, sols.back()));
    }
    const auto wash = bem::propwash_field<Var>(ph.lattice().mesh(), sources, ph.options().wash_scale);
    return vlm::solve_on_tape(ph.lattice(), in[0], in[1], in[6], field_node(wash.at_control),
                              field_node(wash.at_bound));
}

}  // namespace vtol::piml
