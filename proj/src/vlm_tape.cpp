#include <memory>

#include "vtol/vlm.hpp"

namespace vtol::vlm {

using ad::NodeId;
using ad::Shape;
using ad::Tape;
using ad::Var;

namespace {

Tape& tape_of(std::initializer_list<Var> vars) {
    Tape* t = nullptr;
    for (const Var& v : vars) {
        if (!v.valid()) {
            throw std::invalid_argument("vlm: invalid tape variable");
        }
        if (t != nullptr && v.tape() != t) {
            throw std::invalid_argument("vlm: variables from different tapes");
        }
        t = v.tape();
    }
    return *t;
}

void require_field(Var f, int n, const char* what) {
    if (f.size() != 3 * n) {
        throw std::invalid_argument(std::string("vlm: ") + what + " must be (n x 3)");
    }
}

Vec3 row3(std::span<const double> f, int i) {
    const auto k = static_cast<std::size_t>(3 * i);
    return {f[k], f[k + 1], f[k + 2]};
}

}  // namespace

namespace {

std::shared_ptr<const WakeCache> make_wake(const VortexLattice& vl, double alpha_rad) {
    auto w = std::make_shared<WakeCache>();
    vl.wake_influence(alpha_rad, w->value, &w->d_alpha);
    return w;
}

Var aic_node(const VortexLattice& vl, Var alpha_rad, Var theta_elev_deg, const WakeCache& wake) {
    Tape& t = tape_of({alpha_rad, theta_elev_deg});
    const double alpha = alpha_rad.value();
    const double theta = theta_elev_deg.value();
    const Eigen::MatrixXd a = vl.assemble_aic(alpha, theta, wake.value);
    const int n = vl.size();
    // Only the trailing columns depend on alpha and only elevator rows on theta.
    const auto& trailing = vl.trailing();
    const auto nt = static_cast<int>(trailing.size());
    auto da = std::make_shared<Eigen::MatrixXd>(n, nt);
    for (int i = 0; i < n; ++i) {
        const Vec3 ni = vl.normal(i, theta);
        for (int k = 0; k < nt; ++k) {
            (*da)(i, k) = dot(ni, wake.d_alpha.at_control[static_cast<std::size_t>(i * nt + k)]);
        }
    }
    const Eigen::MatrixXd dt_full = vl.aic_dtheta(theta, wake.value);
    auto rows = std::make_shared<std::vector<int>>();
    for (int i = 0; i < n; ++i) {
        if (vl.mesh().panels[static_cast<std::size_t>(i)].tag == geometry::SurfaceTag::Elevator) rows->push_back(i);
    }
    auto dt = std::make_shared<Eigen::MatrixXd>(static_cast<int>(rows->size()), n);
    for (int r = 0; r < static_cast<int>(rows->size()); ++r) dt->row(r) = dt_full.row((*rows)[static_cast<std::size_t>(r)]);
    std::vector<double> value(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(value.data(), n, n) = a;
    const NodeId ia = alpha_rad.id();
    const NodeId it = theta_elev_deg.id();
    return t.record_custom("vlm_aic", std::move(value), Shape{n, n},
                           [ia, it, da, dt, rows, &trailing, n, nt](Tape& tp, NodeId self) {
                               Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                                   g(tp.adjoint(self).data(), n, n);
                               double ga = 0.0;
                               for (int i = 0; i < n; ++i) {
                                   for (int k = 0; k < nt; ++k) ga += g(i, trailing[static_cast<std::size_t>(k)]) * (*da)(i, k);
                               }
                               double gt = 0.0;
                               for (int r = 0; r < static_cast<int>(rows->size()); ++r) {
                                   gt += g.row((*rows)[static_cast<std::size_t>(r)]).dot(dt->row(r));
                               }
                               tp.adjoint_mut(ia)[0] += ga;
                               tp.adjoint_mut(it)[0] += gt;
                           });
}

}  // namespace

Var aic_node(const VortexLattice& vl, Var alpha_rad, Var theta_elev_deg) {
    return aic_node(vl, alpha_rad, theta_elev_deg, *make_wake(vl, alpha_rad.value()));
}

Var rhs_node(const VortexLattice& vl, Var onset_control, Var theta_elev_deg) {
    Tape& t = tape_of({onset_control, theta_elev_deg});
    const int n = vl.size();
    require_field(onset_control, n, "onset at control points");
    const double theta = theta_elev_deg.value();
    auto o = onset_control.values();
    std::vector<double> b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        b[static_cast<std::size_t>(i)] = -dot(row3(o, i), vl.normal(i, theta));
    }
    const NodeId io = onset_control.id();
    const NodeId it = theta_elev_deg.id();
    return t.record_custom("vlm_rhs", std::move(b), Shape{n, 1}, [&vl, io, it, n, theta](Tape& tp, NodeId self) {
        auto g = tp.adjoint(self);
        auto o = tp.value(io);
        auto go = tp.adjoint_mut(io);
        double gt = 0.0;
        for (int i = 0; i < n; ++i) {
            const double gi = g[static_cast<std::size_t>(i)];
            if (gi == 0.0) {
                continue;
            }
            const Vec3 ni = vl.normal(i, theta);
            const auto k = static_cast<std::size_t>(3 * i);
            go[k] -= gi * ni.x;
            go[k + 1] -= gi * ni.y;
            go[k + 2] -= gi * ni.z;
            gt -= gi * dot(row3(o, i), vl.normal_ddeg(i, theta));
        }
        tp.adjoint_mut(it)[0] += gt;
    });
}

namespace {

Var forces_node(const VortexLattice& vl, Var gamma, Var alpha_rad, Var onset_bound,
                std::shared_ptr<const WakeCache> shared) {
    Tape& t = tape_of({gamma, alpha_rad, onset_bound});
    const int n = vl.size();
    if (gamma.size() != n) {
        throw std::invalid_argument("vlm: circulation size mismatch");
    }
    require_field(onset_bound, n, "onset at bound midpoints");
    const VortexLattice::WakeInfluence* wake = &shared->value;
    const VortexLattice::WakeInfluence* d_wake = &shared->d_alpha;

    Eigen::Map<const Eigen::VectorXd> g(gamma.values().data(), n);
    const Eigen::VectorXd gv = g;
    std::vector<Vec3> onset(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        onset[static_cast<std::size_t>(k)] = row3(onset_bound.values(), k);
    }
    auto vel = std::make_shared<std::vector<Vec3>>(vl.bound_velocity(gv, onset, *wake));

    const auto& panels = vl.mesh().panels;
    const auto& ref = vl.reference();
    Vec3 f;
    Vec3 m;
    for (int k = 0; k < n; ++k) {
        const auto& pk = panels[static_cast<std::size_t>(k)];
        const double gk = gv(k) - (pk.upstream >= 0 ? gv(pk.upstream) : 0.0);
        const Vec3 df = cross((*vel)[static_cast<std::size_t>(k)], pk.bound_vec) * (ref.rho * gk);
        f += df;
        m += cross(pk.bound_mid - ref.moment_point, df);
    }
    const NodeId ig = gamma.id();
    const NodeId ia = alpha_rad.id();
    const NodeId io = onset_bound.id();
    return t.record_custom(
        "vlm_forces", {f.x, f.y, f.z, m.x, m.y, m.z}, Shape{6, 1},
        [&vl, ig, ia, io, n, shared, wake, d_wake, vel](Tape& tp, NodeId self) {
            auto a = tp.adjoint(self);
            const Vec3 fbar{a[0], a[1], a[2]};
            const Vec3 mbar{a[3], a[4], a[5]};
            const auto& panels = vl.mesh().panels;
            const auto& ref = vl.reference();
            const auto& trailing = vl.trailing();
            const auto nt = trailing.size();
            auto gval = tp.value(ig);
            auto ggam = tp.adjoint_mut(ig);
            auto gon = tp.adjoint_mut(io);
            const auto& wm = vl.bound_influence_bound();
            double galpha = 0.0;
            for (int k = 0; k < n; ++k) {
                const auto& pk = panels[static_cast<std::size_t>(k)];
                const auto ks = static_cast<std::size_t>(k);
                const double gk = gval[ks] - (pk.upstream >= 0 ? gval[static_cast<std::size_t>(pk.upstream)] : 0.0);
                const Vec3 gbar = fbar + cross(mbar, pk.bound_mid - ref.moment_point);
                const Vec3& v = (*vel)[ks];
                // dF = rho * G * (V x l)
                const double gnet_bar = ref.rho * dot(gbar, cross(v, pk.bound_vec));
                const Vec3 vbar = cross(pk.bound_vec, gbar) * (ref.rho * gk);
                ggam[ks] += gnet_bar;
                if (pk.upstream >= 0) {
                    ggam[static_cast<std::size_t>(pk.upstream)] -= gnet_bar;
                }
                gon[3 * ks] += vbar.x;
                gon[3 * ks + 1] += vbar.y;
                gon[3 * ks + 2] += vbar.z;
                const std::size_t base = ks * static_cast<std::size_t>(n);
                for (int j = 0; j < n; ++j) {
                    ggam[static_cast<std::size_t>(j)] += dot(vbar, wm[base + static_cast<std::size_t>(j)]);
                }
                for (std::size_t tt = 0; tt < nt; ++tt) {
                    const auto j = static_cast<std::size_t>(trailing[tt]);
                    ggam[j] += dot(vbar, wake->at_bound[ks * nt + tt]);
                    galpha += gval[j] * dot(vbar, d_wake->at_bound[ks * nt + tt]);
                }
            }
            tp.adjoint_mut(ia)[0] += galpha;
        });
}

}  // namespace

Var forces_node(const VortexLattice& vl, Var gamma, Var alpha_rad, Var onset_bound) {
    return forces_node(vl, gamma, alpha_rad, onset_bound, make_wake(vl, alpha_rad.value()));
}

std::array<Var, 4> solve_on_tape(const VortexLattice& vl, Var v, Var alpha_deg, Var theta_elev_deg,
                                 Var induced_control, Var induced_bound) {
    const Var alpha = alpha_deg * (kPi / 180.0);
    const Vec3T<Var> dir = freestream_direction(alpha);
    const Var vinf_parts[3] = {dir.x * v, dir.y * v, dir.z * v};
    const Var vinf = ad::stack(vinf_parts);
    const Var onset_c = ad::add_row(induced_control, vinf);
    const Var onset_b = ad::add_row(induced_bound, vinf);
    const auto wake = make_wake(vl, alpha.value());
    const Var a = aic_node(vl, alpha, theta_elev_deg, *wake);
    const Var b = rhs_node(vl, onset_c, theta_elev_deg);
    const Var gamma = ad::solve(a, b);
    const Var fm = forces_node(vl, gamma, alpha, onset_b, wake);
    const std::array<Var, 3> force = {ad::slice(fm, 0, 1), ad::slice(fm, 1, 1), ad::slice(fm, 2, 1)};
    const std::array<Var, 3> moment = {ad::slice(fm, 3, 1), ad::slice(fm, 4, 1), ad::slice(fm, 5, 1)};
    return coefficients<Var>(force, moment, alpha, v, vl.reference());
}

FixedSystem prepare_fixed(const VortexLattice& vl, double v, double alpha_deg, double theta_elev_deg) {
    FixedSystem fs;
    fs.v = v;
    fs.alpha_rad = deg2rad(alpha_deg);
    fs.theta_elev_deg = theta_elev_deg;
    fs.wake = make_wake(vl, fs.alpha_rad);
    auto lu = std::make_shared<ad::LuFactor>(vl.assemble_aic(fs.alpha_rad, theta_elev_deg, fs.wake->value));
    if (!(lu->rcond() > 1e-14)) {
        throw SolverError("influence matrix is singular", lu->rcond());
    }
    fs.lu = std::move(lu);
    return fs;
}

std::array<Var, 4> solve_on_tape(const VortexLattice& vl, const FixedSystem& fs, Var induced_control,
                                 Var induced_bound) {
    Tape& t = *induced_control.tape();
    const Var v = t.variable(fs.v);
    const Var alpha = t.variable(fs.alpha_rad);
    const Var theta = t.variable(fs.theta_elev_deg);
    const Vec3 dir = freestream_direction(fs.alpha_rad) * fs.v;
    const double vinf_values[3] = {dir.x, dir.y, dir.z};
    const Var vinf = t.variable(vinf_values, ad::Shape{3, 1});
    const Var onset_c = ad::add_row(induced_control, vinf);
    const Var onset_b = ad::add_row(induced_bound, vinf);
    const Var b = rhs_node(vl, onset_c, theta);
    const Var gamma = ad::solve(fs.lu, b);
    const Var fm = forces_node(vl, gamma, alpha, onset_b, fs.wake);
    const std::array<Var, 3> force = {ad::slice(fm, 0, 1), ad::slice(fm, 1, 1), ad::slice(fm, 2, 1)};
    const std::array<Var, 3> moment = {ad::slice(fm, 3, 1), ad::slice(fm, 4, 1), ad::slice(fm, 5, 1)};
    return coefficients<Var>(force, moment, alpha, v, vl.reference());
}

}  // namespace vtol::vlm
