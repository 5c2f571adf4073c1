#include "vtol/bem.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace vtol::bem {

using ad::Var;
using geometry::PanelMesh;
using geometry::PropellerDisc;

namespace {

template <class T>
T zero_like(const T& x) {
    return x * 0.0;
}

template <class T>
T clamp_abs(const T& x, double limit) {
    using std::max;
    using std::min;
    return min(max(x, -limit), limit);
}

template <class T>
struct Section {
    T phi;
    T w2;
    T cn;
    T ct;
};

template <class T>
Section<T> section(const T& v0, const T& omega, const T& va, const T& vt, double r, double twist_rad,
                   const BladePolar& polar) {
    using std::atan2;
    using std::cos;
    using std::sin;
    const T w_ax = v0 + va;
    const T w_t = omega * r - vt;
    const T w2 = w_ax * w_ax + w_t * w_t;
    const T phi = atan2(w_ax, w_t);
    const T cl = clamp_abs(sin(twist_rad - phi) * (polar.slope_factor * 2.0 * kPi), polar.cl_max);
    const T cp = cos(phi);
    const T sp = sin(phi);
    return {phi, w2, cl * cp - sp * polar.cd, cl * sp + cp * polar.cd};
}

int nearest_station(std::span<const double> fraction, double f) {
    int best = 0;
    double err = std::abs(fraction[0] - f);
    for (std::size_t k = 1; k < fraction.size(); ++k) {
        const double e = std::abs(fraction[k] - f);
        if (e < err) {
            err = e;
            best = static_cast<int>(k);
        }
    }
    return best;
}

}  // namespace

template <class T>
BemSolutionT<T> solve_bem(const PropellerDisc& disc, const T& axial_inflow, const T& rpm, double rho,
                          const BladePolar& polar, const BemOptions& opt) {
    using std::max;
    using std::sqrt;
    if (value_of(rpm) < 0.0) {
        throw std::invalid_argument("solve_bem: negative rpm for '" + disc.name + "'");
    }
    const int n = disc.stations;
    const double big_r = disc.radius;
    const double hf = disc.hub_fraction;
    BemSolutionT<T> s;
    s.dr = (1.0 - hf) * big_r / n;
    const T zero = zero_like(rpm);
    for (int k = 0; k < n; ++k) {
        const double f = hf + (k + 0.5) * (1.0 - hf) / n;
        s.fraction.push_back(f);
        s.radius.push_back(f * big_r);
    }
    T v0 = max(axial_inflow, 0.0);
    if (value_of(v0) < opt.static_threshold) {
        v0 = zero_like(v0);
    }
    s.axial_inflow = v0;
    const auto ns = static_cast<std::size_t>(n);
    s.a.assign(ns, zero);
    s.a_prime.assign(ns, zero);
    s.phi.assign(ns, zero);
    s.v_a.assign(ns, zero);
    s.v_t.assign(ns, zero);
    s.thrust = zero;
    s.torque = zero;
    if (value_of(rpm) == 0.0) {
        s.converged = true;
        s.iterations = 0;
        return s;
    }

    const T omega = rpm * (2.0 * kPi / 60.0);
    const double v0v = value_of(v0);
    const double scale = std::max(v0v, 1.0);
    std::vector<double> twist(ns);
    std::vector<double> chord(ns);
    for (std::size_t k = 0; k < ns; ++k) {
        twist[k] = deg2rad(disc.twist(s.fraction[k]));
        chord[k] = disc.chord(s.fraction[k]) * big_r;
    }
    const double blades = disc.blade_count;

    bool converged = false;
    int it = 0;
    while (it < opt.max_iter) {
        ++it;
        double delta = 0.0;
        for (std::size_t k = 0; k < ns; ++k) {
            const double r = s.radius[k];
            const Section<T> sec = section(v0, omega, s.v_a[k], s.v_t[k], r, twist[k], polar);
            const double sigma = blades * chord[k] / (8.0 * kPi * r);
            const T load = sec.w2 * sec.cn * sigma;
            const T disc_term = v0 * v0 + max(load, 0.0) * 4.0;
            T va_new = zero;
            if (value_of(disc_term) > 1e-300) {
                va_new = (sqrt(disc_term) - v0) * 0.5;
            }
            const T through = v0 + va_new;
            T vt_new = zero;
            if (value_of(through) > 1e-12) {
                vt_new = sec.w2 * sec.ct * sigma / through;
            }
            delta = std::max(delta, std::abs(value_of(va_new) - value_of(s.v_a[k])) / scale);
            delta = std::max(delta, std::abs(value_of(vt_new) - value_of(s.v_t[k])) / scale);
            s.v_a[k] = s.v_a[k] + (va_new - s.v_a[k]) * opt.relaxation;
            s.v_t[k] = s.v_t[k] + (vt_new - s.v_t[k]) * opt.relaxation;
        }
        if (delta <= opt.tolerance) {
            converged = true;
        }
        if (delta <= opt.polish_tolerance) {
            break;
        }
    }
    s.converged = converged;
    s.iterations = it;

    T thrust = zero;
    T torque = zero;
    for (std::size_t k = 0; k < ns; ++k) {
        const double r = s.radius[k];
        const Section<T> sec = section(v0, omega, s.v_a[k], s.v_t[k], r, twist[k], polar);
        const double q = 0.5 * rho * blades * chord[k] * s.dr;
        thrust = thrust + sec.w2 * sec.cn * q;
        torque = torque + sec.w2 * sec.ct * (q * r);
        s.phi[k] = sec.phi;
        s.a[k] = v0v > 0.0 ? s.v_a[k] / v0 : zero;
        s.a_prime[k] = s.v_t[k] / (omega * r);
    }
    s.thrust = thrust;
    s.torque = torque;
    return s;
}

template BemSolutionT<double> solve_bem(const PropellerDisc&, const double&, const double&, double,
                                        const BladePolar&, const BemOptions&);
template BemSolutionT<Var> solve_bem(const PropellerDisc&, const Var&, const Var&, double, const BladePolar&,
                                     const BemOptions&);

double slipstream_radius(const PropellerDisc& disc, double a_mean, double x) {
    const double k = contraction_kernel(x, disc.radius);
    return disc.radius * std::sqrt((1.0 + a_mean) / (1.0 + a_mean * k));
}

double tube_radius(double radius, double inflow, double v_mean, double x) {
    const double k = contraction_kernel(x, radius);
    const double num = inflow + v_mean;
    const double den = inflow + v_mean * k;
    if (!(num > 0.0) || !(den > 0.0)) {
        return radius;
    }
    return radius * std::sqrt(num / den);
}

double SlipstreamTube::radius(double x) const { return tube_radius(disc->radius, inflow, v_mean, x); }

SlipstreamTube make_tube(const PropellerDisc& disc, const BemSolution& s) {
    SlipstreamTube t;
    t.disc = &disc;
    t.inflow = s.axial_inflow;
    t.v_mean = mean_axial(s);
    t.a_mean = t.inflow > 0.0 ? t.v_mean / t.inflow : 0.0;
    return t;
}

namespace {

// Frozen geometry of one point inside one tube.
struct Hit {
    int station = 0;
    double k = 0.0;
    bool on_axis = false;
};

template <class T>
bool tube_hit(const WashSource<T>& src, double v_mean, const Vec3& p, Hit& hit) {
    const PropellerDisc& d = *src.disc;
    const Vec3 ax = src.axis.values();
    const Vec3 rel = p - d.hub;
    const double x = -dot(rel, ax);
    if (x < 0.0) {
        return false;
    }
    const double rs = tube_radius(d.radius, value_of(src.inflow), v_mean, x);
    const Vec3 perp = rel + ax * x;
    const double rho = norm(perp);
    if (rho > rs) {
        return false;
    }
    hit.station = nearest_station(src.fraction, rho / rs);
    hit.k = contraction_kernel(x, d.radius);
    hit.on_axis = rho <= 1e-9 * d.radius;
    return true;
}

template <class T>
bool active(const WashSource<T>& src) {
    for (std::size_t k = 0; k < src.v_a.size(); ++k) {
        if (value_of(src.v_a[k]) != 0.0 || value_of(src.v_t[k]) != 0.0) {
            return true;
        }
    }
    return false;
}

template <class T>
double mean_value(const WashSource<T>& src) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < src.v_a.size(); ++k) {
        num += value_of(src.v_a[k]) * src.radius[k];
        den += src.radius[k];
    }
    return den > 0.0 ? num / den : 0.0;
}

const Vec3& point_of(const PanelMesh& mesh, int idx) {
    const int n = mesh.size();
    const auto& p = mesh.panels[static_cast<std::size_t>(idx % n)];
    return idx < n ? p.control_point : p.bound_mid;
}

}  // namespace

template <class T>
WashField<T> propwash_field(const PanelMesh& mesh, std::span<const WashSource<T>> sources, double wash_scale) {
    using std::sqrt;
    const int n = mesh.size();
    WashField<T> out;
    if (sources.empty()) {
        out.at_control.assign(static_cast<std::size_t>(n), Vec3T<T>{});
        out.at_bound.assign(static_cast<std::size_t>(n), Vec3T<T>{});
        return out;
    }
    const T zero = zero_like(sources.front().inflow);
    out.at_control.assign(static_cast<std::size_t>(n), Vec3T<T>{zero, zero, zero});
    out.at_bound.assign(static_cast<std::size_t>(n), Vec3T<T>{zero, zero, zero});
    for (const auto& src : sources) {
        if (!active(src)) {
            continue;
        }
        const double vm = mean_value(src);
        const PropellerDisc& d = *src.disc;
        const Vec3T<T>& ax = src.axis;
        for (int idx = 0; idx < 2 * n; ++idx) {
            const Vec3& p = point_of(mesh, idx);
            Hit hit;
            if (!tube_hit(src, vm, p, hit)) {
                continue;
            }
            const Vec3 rel = p - d.hub;
            const T x = -(ax.x * rel.x + ax.y * rel.y + ax.z * rel.z);
            const T k = contraction_kernel(x, d.radius);
            const auto st = static_cast<std::size_t>(hit.station);
            const T axial = k * src.v_a[st] * wash_scale;
            Vec3T<T> inc{-(ax.x * axial), -(ax.y * axial), -(ax.z * axial)};
            if (!hit.on_axis) {
                const T px = ax.x * x + rel.x;
                const T py = ax.y * x + rel.y;
                const T pz = ax.z * x + rel.z;
                const T inv = 1.0 / sqrt(px * px + py * py + pz * pz);
                const T swirl = k * src.v_t[st] * (static_cast<double>(d.spin_direction));
                // axis x e_perp
                const T tx = (ax.y * pz - ax.z * py) * inv;
                const T ty = (ax.z * px - ax.x * pz) * inv;
                const T tz = (ax.x * py - ax.y * px) * inv;
                inc = Vec3T<T>{inc.x + tx * swirl, inc.y + ty * swirl, inc.z + tz * swirl};
            }
            auto& slot = idx < n ? out.at_control[static_cast<std::size_t>(idx)]
                                 : out.at_bound[static_cast<std::size_t>(idx - n)];
            slot += inc;
        }
    }
    return out;
}

template WashField<double> propwash_field(const PanelMesh&, std::span<const WashSource<double>>, double);
template WashField<Var> propwash_field(const PanelMesh&, std::span<const WashSource<Var>>, double);

vlm::OnsetFlow propwash_field(const PanelMesh& mesh, std::span<const PropellerDisc> discs, const FlightState& flight,
                              std::span<const double> rpms, double rho, const BladePolar& polar, double wash_scale) {
    if (rpms.size() != discs.size()) {
        throw std::invalid_argument("propwash_field: one rpm per disc required");
    }
    const double alpha = deg2rad(flight.alpha);
    std::vector<BemSolution> sols;
    sols.reserve(discs.size());
    std::vector<WashSource<double>> sources;
    for (std::size_t i = 0; i < discs.size(); ++i) {
        const double v0 = axial_inflow(flight.v, alpha, discs[i].axis);
        sols.push_back(solve_bem(discs[i], v0, rpms[i], rho, polar));
        sources.push_back(wash_source(discs[i], discs[i].axis, sols.back()));
    }
    const auto f = propwash_field<double>(mesh, sources, wash_scale);
    return {f.at_control, f.at_bound};
}

// ---- stencil ---------------------------------------------------------------

WashStencil build_wash_stencil(const PanelMesh& mesh, std::span<const WashSource<double>> sources,
                               double wash_scale) {
    const int n = mesh.size();
    WashStencil st;
    st.points = 2 * n;
    st.sources = static_cast<int>(sources.size());
    st.stations = sources.empty() ? 0 : static_cast<int>(sources.front().fraction.size());
    for (int s = 0; s < st.sources; ++s) {
        const auto& src = sources[static_cast<std::size_t>(s)];
        if (static_cast<int>(src.fraction.size()) != st.stations) {
            throw std::invalid_argument("build_wash_stencil: sources must share a station count");
        }
        const double vm = mean_value(src);
        const PropellerDisc& d = *src.disc;
        const Vec3& ax = src.axis;
        for (int idx = 0; idx < 2 * n; ++idx) {
            const Vec3& p = point_of(mesh, idx);
            Hit hit;
            if (!tube_hit(src, vm, p, hit)) {
                continue;
            }
            WashTerm term;
            term.point = idx;
            term.source = s;
            term.station = hit.station;
            term.axial_coef = -ax * (hit.k * wash_scale);
            if (!hit.on_axis) {
                const Vec3 rel = p - d.hub;
                const double x = -dot(rel, ax);
                const Vec3 e = normalized(rel + ax * x);
                term.swirl_coef = cross(ax, e) * (hit.k * d.spin_direction);
            }
            st.terms.push_back(term);
        }
    }
    return st;
}

vlm::OnsetFlow WashStencil::apply(std::span<const double> v_a, std::span<const double> v_t) const {
    const int n = points / 2;
    vlm::OnsetFlow f = vlm::OnsetFlow::zeros(n);
    for (const auto& t : terms) {
        const auto j = static_cast<std::size_t>(t.source * stations + t.station);
        const Vec3 inc = t.axial_coef * v_a[j] + t.swirl_coef * v_t[j];
        auto& slot = t.point < n ? f.at_control[static_cast<std::size_t>(t.point)]
                                 : f.at_bound[static_cast<std::size_t>(t.point - n)];
        slot += inc;
    }
    return f;
}

std::pair<Var, Var> apply_stencil(const WashStencil& stencil, Var v_a, Var v_t) {
    const int len = stencil.sources * stencil.stations;
    if (v_a.size() != len || v_t.size() != len || v_a.tape() != v_t.tape()) {
        throw std::invalid_argument("apply_stencil: station vectors have the wrong size");
    }
    auto st = std::make_shared<const WashStencil>(stencil);
    const vlm::OnsetFlow f = st->apply(v_a.values(), v_t.values());
    const int n = stencil.points / 2;
    auto flatten = [](const std::vector<Vec3>& v) {
        std::vector<double> out;
        out.reserve(3 * v.size());
        for (const auto& x : v) {
            out.insert(out.end(), {x.x, x.y, x.z});
        }
        return out;
    };
    const ad::NodeId ia = v_a.id();
    const ad::NodeId it = v_t.id();
    auto make = [&](int lo, std::vector<double> value) {
        return v_a.tape()->record_custom(
            "wash_stencil", std::move(value), ad::Shape{n, 3}, [st, ia, it, lo, n](ad::Tape& tp, ad::NodeId self) {
                auto g = tp.adjoint(self);
                auto ga = tp.adjoint_mut(ia);
                auto gt = tp.adjoint_mut(it);
                for (const auto& t : st->terms) {
                    if (t.point < lo || t.point >= lo + n) {
                        continue;
                    }
                    const auto r = static_cast<std::size_t>(3 * (t.point - lo));
                    const Vec3 gv{g[r], g[r + 1], g[r + 2]};
                    const auto j = static_cast<std::size_t>(t.source * st->stations + t.station);
                    ga[j] += dot(gv, t.axial_coef);
                    gt[j] += dot(gv, t.swirl_coef);
                }
            });
    };
    Var c = make(0, flatten(f.at_control));
    Var b = make(n, flatten(f.at_bound));
    return {c, b};
}

}  // namespace vtol::bem
