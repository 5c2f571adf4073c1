#pragma once

// Blade-element momentum propeller model and the mapping of its induced
// velocities onto lifting-surface points through a contracting slipstream.

#include <span>
#include <vector>

#include "vtol/geometry.hpp"
#include "vtol/vec3.hpp"
#include "vtol/vlm.hpp"

namespace vtol::bem {

/// Thin-airfoil blade section: cl = slope_factor * 2 pi sin(alpha), clamped
/// to +-cl_max, constant cd.
struct BladePolar {
    double slope_factor = 1.0;
    double cl_max = 1.2;
    double cd = 0.02;
};

struct BemOptions {
    double tolerance = 1e-6;         ///< on max |dv_a| / max(V0, 1 m/s)
    double polish_tolerance = 1e-12; ///< iteration continues to here when possible
    int max_iter = 200;
    double relaxation = 0.5;
    double static_threshold = 0.1;   ///< inflow below this [m/s] is treated as static
};

template <class T>
struct BemSolutionT {
    std::vector<double> fraction;  ///< r/R at each station
    std::vector<double> radius;    ///< m
    double dr = 0.0;               ///< annulus width, m
    std::vector<T> a;              ///< axial induction v_a / V0 (0 in the static case)
    std::vector<T> a_prime;        ///< swirl induction v_t / (Omega r)
    std::vector<T> phi;            ///< inflow angle, rad
    std::vector<T> v_a;            ///< axial induced velocity at the disc, m/s
    std::vector<T> v_t;            ///< tangential induced velocity at the disc, m/s
    T thrust{};
    T torque{};
    T axial_inflow{};              ///< inflow actually used (floored, static-snapped)
    bool converged = true;
    int iterations = 0;

    [[nodiscard]] int stations() const { return static_cast<int>(fraction.size()); }
};

using BemSolution = BemSolutionT<double>;

/// Solves one rotor. `axial_inflow` is the freestream component entering the
/// disc along its axis; negative values are floored at 0. Throws
/// std::invalid_argument for negative rpm.
template <class T>
BemSolutionT<T> solve_bem(const geometry::PropellerDisc& disc, const T& axial_inflow, const T& rpm, double rho,
                          const BladePolar& polar = {}, const BemOptions& options = {});

/// Freestream component along `axis` entering the disc, floored at 0.
template <class T>
T axial_inflow(const T& v, const T& alpha_rad, const Vec3T<T>& axis) {
    using std::cos;
    using std::max;
    using std::sin;
    return max(v * (cos(alpha_rad) * axis.x - sin(alpha_rad) * axis.z), 0.0);
}

/// Actuator-disc contraction law R_s(x) = R sqrt((1 + a) / (1 + a k(x))) with
/// k(x) = 1 + x / sqrt(x^2 + R^2).
double slipstream_radius(const geometry::PropellerDisc& disc, double a_mean, double x);

/// Contraction factor k(x) in [1, 2): 1 at the disc, 2 in the far wake.
template <class T>
T contraction_kernel(const T& x, double radius) {
    using std::sqrt;
    return 1.0 + x / sqrt(x * x + radius * radius);
}

/// Velocity form of the contraction law, valid for the static case: with
/// inflow V0 and area-weighted mean induced velocity v_mean,
/// R_s = R sqrt((V0 + v_mean) / (V0 + k v_mean)).
double tube_radius(double radius, double inflow, double v_mean, double x);

struct SlipstreamTube {
    const geometry::PropellerDisc* disc = nullptr;
    double inflow = 0.0;
    double v_mean = 0.0;
    double a_mean = 0.0;

    [[nodiscard]] double radius(double x) const;
};

/// Area-weighted mean of v_a over the blade annulus.
template <class T>
T mean_axial(const BemSolutionT<T>& s) {
    T num = s.v_a.front() * s.radius.front();
    double den = s.radius.front();
    for (std::size_t k = 1; k < s.v_a.size(); ++k) {
        num = num + s.v_a[k] * s.radius[k];
        den += s.radius[k];
    }
    return num * (1.0 / den);
}

SlipstreamTube make_tube(const geometry::PropellerDisc& disc, const BemSolution& s);

/// One rotor as seen by the wash model: tilted axis, inflow and station
/// velocities. Station fractions/radii come from the matching BEM solution.
template <class T>
struct WashSource {
    const geometry::PropellerDisc* disc = nullptr;
    Vec3T<T> axis;
    T inflow{};
    std::vector<double> fraction;
    std::vector<double> radius;
    std::vector<T> v_a;
    std::vector<T> v_t;
};

template <class T>
WashSource<T> wash_source(const geometry::PropellerDisc& disc, const Vec3T<T>& axis, const BemSolutionT<T>& s) {
    return {&disc, axis, s.axial_inflow, s.fraction, s.radius, s.v_a, s.v_t};
}

/// Velocity increments at control points and bound midpoints. A point
/// receives wash from a rotor when it lies downstream of the disc (x >= 0
/// along -axis) within the contracted tube radius. The axial part is
/// wash_scale * k(x) * v_a along -axis, the swirl part spin * k(x) * v_t
/// around the axis, both from the station nearest the point's fraction of
/// the local tube radius. Contributions from several tubes add.
template <class T>
struct WashField {
    std::vector<Vec3T<T>> at_control;
    std::vector<Vec3T<T>> at_bound;
};

template <class T>
WashField<T> propwash_field(const geometry::PanelMesh& mesh, std::span<const WashSource<T>> sources,
                            double wash_scale = 1.0);

/// Solves every rotor (discs already tilted, one rpm per disc) at the flight
/// condition and returns the wash on the base mesh.
vlm::OnsetFlow propwash_field(const geometry::PanelMesh& mesh, std::span<const geometry::PropellerDisc> discs,
                              const FlightState& flight, std::span<const double> rpms, double rho,
                              const BladePolar& polar = {}, double wash_scale = 1.0);

// ---- linear stencil --------------------------------------------------------

/// With geometry and tube membership frozen the wash is linear in the
/// station velocities: every (point, rotor, station) pair contributes
/// axial_coef * v_a + swirl_coef * v_t.
struct WashTerm {
    int point = 0;    ///< [0, n) control points, [n, 2n) bound midpoints
    int source = 0;
    int station = 0;
    Vec3 axial_coef;
    Vec3 swirl_coef;
};

struct WashStencil {
    int points = 0;   ///< 2 n
    int sources = 0;
    int stations = 0; ///< per source
    std::vector<WashTerm> terms;

    /// v_a and v_t are (sources x stations), row-major.
    [[nodiscard]] vlm::OnsetFlow apply(std::span<const double> v_a, std::span<const double> v_t) const;
};

WashStencil build_wash_stencil(const geometry::PanelMesh& mesh, std::span<const WashSource<double>> sources,
                               double wash_scale = 1.0);

/// Tape primitive: v_a and v_t nodes of size sources*stations mapped through
/// the stencil to two (n x 3) fields (control points, bound midpoints).
std::pair<ad::Var, ad::Var> apply_stencil(const WashStencil& stencil, ad::Var v_a, ad::Var v_t);

}  // namespace vtol::bem
