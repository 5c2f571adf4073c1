#include "vtol/vlm.hpp"

#include <cfloat>
#include <cmath>
#include <sstream>

#include "vtol/log.hpp"

namespace vtol::vlm {

using geometry::Panel;
using geometry::PanelMesh;

Vec3 segment_velocity(const Vec3& a, const Vec3& b, const Vec3& p, double gamma, double core) {
    const Vec3 r1 = p - a;
    const Vec3 r2 = p - b;
    const Vec3 r0 = b - a;
    const double n1 = norm(r1);
    const double n2 = norm(r2);
    if (n1 < 1e-14 || n2 < 1e-14) {
        return {};
    }
    const Vec3 c = cross(r1, r2);
    const double den = dot(c, c) + core * core * dot(r0, r0);
    if (den < 1e-300) {
        return {};
    }
    const double k = gamma * kInv4Pi * (dot(r0, r1) / n1 - dot(r0, r2) / n2) / den;
    return c * k;
}

Vec3 semi_infinite_velocity(const Vec3& a, const Vec3& d, const Vec3& p, double gamma, double core) {
    const Vec3 r = p - a;
    const double nr = norm(r);
    if (nr < 1e-14) {
        return {};
    }
    const Vec3 c = cross(d, r);
    const double den = dot(c, c) + core * core;
    if (den < 1e-300) {
        return {};
    }
    return c * (gamma * kInv4Pi * (1.0 + dot(d, r) / nr) / den);
}

Vec3 semi_infinite_velocity_ddir(const Vec3& a, const Vec3& d, const Vec3& dd, const Vec3& p,
                                 double gamma, double core) {
    const Vec3 r = p - a;
    const double nr = norm(r);
    if (nr < 1e-14) {
        return {};
    }
    const Vec3 c = cross(d, r);
    const Vec3 dc = cross(dd, r);
    const double den = dot(c, c) + core * core;
    if (den < 1e-300) {
        return {};
    }
    const double f = 1.0 + dot(d, r) / nr;
    const double df = dot(dd, r) / nr;
    const double dden = 2.0 * dot(c, dc);
    const double k = gamma * kInv4Pi;
    return dc * (k * f / den) + c * (k * df / den) - c * (k * f * dden / (den * den));
}

Vec3 ring_induced_velocity(const std::array<Vec3, 4>& ring, double gamma, const Vec3& p, double core) {
    Vec3 v;
    for (int s = 0; s < 4; ++s) {
        v += segment_velocity(ring[s], ring[(s + 1) % 4], p, gamma, core);
    }
    return v;
}

namespace {

// Segments of the ring that stay on the surface: all four for interior
// rings, three for trailing rings (the aft segment is replaced by the wake).
Vec3 bound_part(const Panel& pj, const Vec3& p, double core) {
    const auto& r = pj.ring;
    Vec3 v = segment_velocity(r[0], r[1], p, 1.0, core);
    v += segment_velocity(r[1], r[2], p, 1.0, core);
    if (!pj.trailing) {
        v += segment_velocity(r[2], r[3], p, 1.0, core);
    }
    v += segment_velocity(r[3], r[0], p, 1.0, core);
    return v;
}

Vec3 wake_part(const Panel& pj, const Vec3& p, const Vec3& d, double core) {
    return semi_infinite_velocity(pj.ring[2], d, p, 1.0, core) -
           semi_infinite_velocity(pj.ring[3], d, p, 1.0, core);
}

Vec3 wake_part_ddir(const Panel& pj, const Vec3& p, const Vec3& d, const Vec3& dd, double core) {
    return semi_infinite_velocity_ddir(pj.ring[2], d, dd, p, 1.0, core) -
           semi_infinite_velocity_ddir(pj.ring[3], d, dd, p, 1.0, core);
}

bool finite(const Vec3& v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

void check_onset(const PanelMesh& mesh, const OnsetFlow& onset) {
    if (static_cast<int>(onset.at_control.size()) != mesh.size() ||
        static_cast<int>(onset.at_bound.size()) != mesh.size()) {
        throw std::invalid_argument("onset flow does not match the mesh size");
    }
}

}  // namespace

Vec3 panel_influence(const Panel& pj, const Vec3& p, const Vec3& wake_dir, double core) {
    Vec3 v = bound_part(pj, p, core);
    if (pj.trailing) {
        v += wake_part(pj, p, wake_dir, core);
    }
    return v;
}

ReferenceGeometry ReferenceGeometry::from(const geometry::AircraftConfig& c) {
    ReferenceGeometry r;
    r.area = c.ref_area;
    r.span = c.ref_span;
    r.chord = c.ref_chord;
    r.moment_point = c.moment_reference;
    r.rho = c.rho;
    return r;
}

OnsetFlow OnsetFlow::uniform(int n, const Vec3& v) {
    OnsetFlow f;
    f.at_control.assign(static_cast<std::size_t>(n), v);
    f.at_bound.assign(static_cast<std::size_t>(n), v);
    return f;
}

OnsetFlow& OnsetFlow::operator+=(const OnsetFlow& o) {
    if (o.at_control.size() != at_control.size() || o.at_bound.size() != at_bound.size()) {
        throw std::invalid_argument("onset flow size mismatch");
    }
    for (std::size_t i = 0; i < at_control.size(); ++i) {
        at_control[i] += o.at_control[i];
    }
    for (std::size_t i = 0; i < at_bound.size(); ++i) {
        at_bound[i] += o.at_bound[i];
    }
    return *this;
}

bool OnsetFlow::all_finite() const {
    for (const auto& v : at_control) {
        if (!finite(v)) return false;
    }
    for (const auto& v : at_bound) {
        if (!finite(v)) return false;
    }
    return true;
}

Eigen::MatrixXd assemble_aic(const PanelMesh& mesh, const Vec3& wake_dir, double core, Parallelism par) {
    const int n = mesh.size();
    Eigen::MatrixXd a(n, n);
    auto row = [&](int i) {
        const Panel& pi = mesh.panels[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) {
            a(i, j) = dot(pi.normal, panel_influence(mesh.panels[static_cast<std::size_t>(j)],
                                                     pi.control_point, wake_dir, core));
        }
    };
    if (par == Parallelism::OpenMP) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            row(i);
        }
    } else {
        for (int i = 0; i < n; ++i) {
            row(i);
        }
    }
    return a;
}

Eigen::VectorXd assemble_rhs(const PanelMesh& mesh, const OnsetFlow& onset) {
    if (static_cast<int>(onset.at_control.size()) != mesh.size()) {
        throw std::invalid_argument("onset flow does not match the mesh size");
    }
    Eigen::VectorXd b(mesh.size());
    for (int i = 0; i < mesh.size(); ++i) {
        b(i) = -dot(onset.at_control[static_cast<std::size_t>(i)], mesh.panels[static_cast<std::size_t>(i)].normal);
    }
    return b;
}

CirculationSolution solve_circulations(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    if (a.rows() != a.cols() || a.rows() != b.size()) {
        throw std::invalid_argument("solve_circulations: dimension mismatch");
    }
    if (a.rows() == 0) {
        return {Eigen::VectorXd(), 0.0};
    }
    if (!a.allFinite() || !b.allFinite()) {
        throw SolverError("influence system has non-finite entries", 0.0);
    }
    const ad::LuFactor lu(a);
    if (!(lu.rcond() > 1e-14)) {
        std::ostringstream os;
        os << "influence matrix is singular or ill-conditioned (rcond estimate " << lu.rcond() << ")";
        throw SolverError(os.str(), lu.rcond());
    }
    CirculationSolution s;
    s.gamma = lu.solve(b);
    const double scale = std::max(b.norm(), DBL_MIN);
    s.residual_norm = (a * s.gamma - b).norm() / scale;
    if (s.residual_norm > 1e-10) {
        s.gamma += lu.solve(b - a * s.gamma);
        s.residual_norm = (a * s.gamma - b).norm() / scale;
    }
    if (!(s.residual_norm <= 1e-10)) {
        std::ostringstream os;
        os << "circulation residual " << s.residual_norm << " exceeds 1e-10 (rcond estimate " << lu.rcond()
           << ")";
        throw SolverError(os.str(), lu.rcond());
    }
    return s;
}

ForcesMoments compute_forces(const PanelMesh& mesh, const CirculationSolution& sol, const OnsetFlow& onset,
                             double rho, const Vec3& wake_dir, const Vec3& moment_point, double core) {
    check_onset(mesh, onset);
    const int n = mesh.size();
    if (sol.gamma.size() != n) {
        throw std::invalid_argument("compute_forces: circulation size mismatch");
    }
    ForcesMoments fm;
    for (int k = 0; k < n; ++k) {
        const Panel& pk = mesh.panels[static_cast<std::size_t>(k)];
        Vec3 v = onset.at_bound[static_cast<std::size_t>(k)];
        for (int j = 0; j < n; ++j) {
            v += panel_influence(mesh.panels[static_cast<std::size_t>(j)], pk.bound_mid, wake_dir, core) *
                 sol.gamma(j);
        }
        const double g = sol.gamma(k) - (pk.upstream >= 0 ? sol.gamma(pk.upstream) : 0.0);
        const Vec3 df = cross(v, pk.bound_vec) * (rho * g);
        fm.force += df;
        fm.moment += cross(pk.bound_mid - moment_point, df);
    }
    return fm;
}

AeroCoefficients coefficients(const ForcesMoments& fm, const FlightState& flight, const ReferenceGeometry& ref) {
    const auto c = coefficients<double>({fm.force.x, fm.force.y, fm.force.z},
                                        {fm.moment.x, fm.moment.y, fm.moment.z}, deg2rad(flight.alpha), flight.v,
                                        ref);
    return AeroCoefficients::from_array(c);
}

// ---- cached lattice --------------------------------------------------------

VortexLattice::VortexLattice(PanelMesh mesh, ReferenceGeometry ref, Parallelism par)
    : mesh_(std::move(mesh)), ref_(ref), par_(par), n_(mesh_.size()) {
    for (int j = 0; j < n_; ++j) {
        if (mesh_.panels[static_cast<std::size_t>(j)].trailing) {
            trailing_.push_back(j);
        }
    }
    const auto nn = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
    wc_.resize(nn);
    wm_.resize(nn);
    const double core = ref_.core_radius();
    auto row = [&](int i) {
        const Panel& pi = mesh_.panels[static_cast<std::size_t>(i)];
        for (int j = 0; j < n_; ++j) {
            const Panel& pj = mesh_.panels[static_cast<std::size_t>(j)];
            const auto idx = static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j);
            wc_[idx] = bound_part(pj, pi.control_point, core);
            wm_[idx] = bound_part(pj, pi.bound_mid, core);
        }
    };
    if (par_ == Parallelism::OpenMP) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n_; ++i) {
            row(i);
        }
    } else {
        for (int i = 0; i < n_; ++i) {
            row(i);
        }
    }
}

Vec3 VortexLattice::normal(int i, double theta_elev_deg) const {
    const Panel& p = mesh_.panels[static_cast<std::size_t>(i)];
    if (p.tag != geometry::SurfaceTag::Elevator || theta_elev_deg == 0.0) {
        return p.normal;
    }
    return geometry::deflect_normal(p.normal, theta_elev_deg);
}

Vec3 VortexLattice::normal_ddeg(int i, double theta_elev_deg) const {
    const Panel& p = mesh_.panels[static_cast<std::size_t>(i)];
    if (p.tag != geometry::SurfaceTag::Elevator) {
        return {};
    }
    const double th = deg2rad(theta_elev_deg);
    const double c = std::cos(th);
    const double s = std::sin(th);
    const double k = kPi / 180.0;
    const Vec3& b = p.normal;
    return Vec3{(-s * b.x - c * b.z) * k, 0.0, (c * b.x - s * b.z) * k};
}

void VortexLattice::wake_influence(double alpha_rad, WakeInfluence& value, WakeInfluence* d_alpha) const {
    const Vec3 d = freestream_direction(alpha_rad);
    const Vec3 dd{std::sin(alpha_rad), 0.0, std::cos(alpha_rad)};
    const double core = ref_.core_radius();
    const auto nt = trailing_.size();
    const auto total = static_cast<std::size_t>(n_) * nt;
    value.at_control.resize(total);
    value.at_bound.resize(total);
    if (d_alpha != nullptr) {
        d_alpha->at_control.resize(total);
        d_alpha->at_bound.resize(total);
    }
    for (int i = 0; i < n_; ++i) {
        const Panel& pi = mesh_.panels[static_cast<std::size_t>(i)];
        for (std::size_t t = 0; t < nt; ++t) {
            const Panel& pj = mesh_.panels[static_cast<std::size_t>(trailing_[t])];
            const std::size_t idx = static_cast<std::size_t>(i) * nt + t;
            value.at_control[idx] = wake_part(pj, pi.control_point, d, core);
            value.at_bound[idx] = wake_part(pj, pi.bound_mid, d, core);
            if (d_alpha != nullptr) {
                d_alpha->at_control[idx] = wake_part_ddir(pj, pi.control_point, d, dd, core);
                d_alpha->at_bound[idx] = wake_part_ddir(pj, pi.bound_mid, d, dd, core);
            }
        }
    }
}

Eigen::MatrixXd VortexLattice::assemble_aic(double alpha_rad, double theta_elev_deg,
                                            const WakeInfluence& wake) const {
    (void)alpha_rad;
    const auto nt = trailing_.size();
    Eigen::MatrixXd a(n_, n_);
    for (int i = 0; i < n_; ++i) {
        const Vec3 ni = normal(i, theta_elev_deg);
        const std::size_t base = static_cast<std::size_t>(i) * static_cast<std::size_t>(n_);
        for (int j = 0; j < n_; ++j) {
            a(i, j) = dot(ni, wc_[base + static_cast<std::size_t>(j)]);
        }
        for (std::size_t t = 0; t < nt; ++t) {
            a(i, trailing_[t]) += dot(ni, wake.at_control[static_cast<std::size_t>(i) * nt + t]);
        }
    }
    return a;
}

Eigen::MatrixXd VortexLattice::aic_dalpha(double theta_elev_deg, const WakeInfluence& d_wake) const {
    const auto nt = trailing_.size();
    Eigen::MatrixXd da = Eigen::MatrixXd::Zero(n_, n_);
    for (int i = 0; i < n_; ++i) {
        const Vec3 ni = normal(i, theta_elev_deg);
        for (std::size_t t = 0; t < nt; ++t) {
            da(i, trailing_[t]) = dot(ni, d_wake.at_control[static_cast<std::size_t>(i) * nt + t]);
        }
    }
    return da;
}

Eigen::MatrixXd VortexLattice::aic_dtheta(double theta_elev_deg, const WakeInfluence& wake) const {
    const auto nt = trailing_.size();
    Eigen::MatrixXd da = Eigen::MatrixXd::Zero(n_, n_);
    for (int i = 0; i < n_; ++i) {
        if (mesh_.panels[static_cast<std::size_t>(i)].tag != geometry::SurfaceTag::Elevator) {
            continue;
        }
        const Vec3 dn = normal_ddeg(i, theta_elev_deg);
        const std::size_t base = static_cast<std::size_t>(i) * static_cast<std::size_t>(n_);
        for (int j = 0; j < n_; ++j) {
            da(i, j) = dot(dn, wc_[base + static_cast<std::size_t>(j)]);
        }
        for (std::size_t t = 0; t < nt; ++t) {
            da(i, trailing_[t]) += dot(dn, wake.at_control[static_cast<std::size_t>(i) * nt + t]);
        }
    }
    return da;
}

Eigen::VectorXd VortexLattice::assemble_rhs(const std::vector<Vec3>& onset_control, double theta_elev_deg) const {
    if (static_cast<int>(onset_control.size()) != n_) {
        throw std::invalid_argument("onset flow does not match the mesh size");
    }
    Eigen::VectorXd b(n_);
    for (int i = 0; i < n_; ++i) {
        b(i) = -dot(onset_control[static_cast<std::size_t>(i)], normal(i, theta_elev_deg));
    }
    return b;
}

std::vector<Vec3> VortexLattice::bound_velocity(const Eigen::VectorXd& gamma, const std::vector<Vec3>& onset_bound,
                                                const WakeInfluence& wake) const {
    const auto nt = trailing_.size();
    std::vector<Vec3> v(onset_bound);
    for (int k = 0; k < n_; ++k) {
        const std::size_t base = static_cast<std::size_t>(k) * static_cast<std::size_t>(n_);
        Vec3 acc = v[static_cast<std::size_t>(k)];
        for (int j = 0; j < n_; ++j) {
            acc += wm_[base + static_cast<std::size_t>(j)] * gamma(j);
        }
        for (std::size_t t = 0; t < nt; ++t) {
            acc += wake.at_bound[static_cast<std::size_t>(k) * nt + t] * gamma(trailing_[t]);
        }
        v[static_cast<std::size_t>(k)] = acc;
    }
    return v;
}

ForcesMoments VortexLattice::forces(const Eigen::VectorXd& gamma, const std::vector<Vec3>& onset_bound,
                                    const WakeInfluence& wake) const {
    const std::vector<Vec3> v = bound_velocity(gamma, onset_bound, wake);
    ForcesMoments fm;
    for (int k = 0; k < n_; ++k) {
        const Panel& pk = mesh_.panels[static_cast<std::size_t>(k)];
        const double g = gamma(k) - (pk.upstream >= 0 ? gamma(pk.upstream) : 0.0);
        const Vec3 df = cross(v[static_cast<std::size_t>(k)], pk.bound_vec) * (ref_.rho * g);
        fm.force += df;
        fm.moment += cross(pk.bound_mid - ref_.moment_point, df);
    }
    return fm;
}

VortexLattice::Result VortexLattice::solve(double v, double alpha_deg, double theta_elev_deg,
                                           const OnsetFlow& onset) const {
    check_onset(mesh_, onset);
    const double alpha = deg2rad(alpha_deg);
    WakeInfluence wake;
    wake_influence(alpha, wake, nullptr);
    Result r;
    r.circulation = solve_circulations(assemble_aic(alpha, theta_elev_deg, wake),
                                       assemble_rhs(onset.at_control, theta_elev_deg));
    r.loads = forces(r.circulation.gamma, onset.at_bound, wake);
    FlightState f;
    f.v = v;
    f.alpha = alpha_deg;
    f.theta_elev = theta_elev_deg;
    r.coefficients = vlm::coefficients(r.loads, f, ref_);
    return r;
}

AeroCoefficients vlm_solve(const PanelMesh& mesh, const FlightState& flight, const OnsetFlow& induced,
                           const ReferenceGeometry& ref) {
    check_onset(mesh, induced);
    const PanelMesh deflected = geometry::apply_elevator_deflection(mesh, flight.theta_elev);
    const double alpha = deg2rad(flight.alpha);
    const Vec3 d = freestream_direction(alpha);
    OnsetFlow onset = OnsetFlow::uniform(mesh.size(), d * flight.v);
    onset += induced;
    const double core = ref.core_radius();
    const auto sol = solve_circulations(assemble_aic(deflected, d, core), assemble_rhs(deflected, onset));
    const auto fm = compute_forces(deflected, sol, onset, ref.rho, d, ref.moment_point, core);
    return coefficients(fm, flight, ref);
}

}  // namespace vtol::vlm
