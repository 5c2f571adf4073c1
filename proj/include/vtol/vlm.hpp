#pragma once

// Steady vortex-lattice solver with vortex rings on flat lifting surfaces and
// straight semi-infinite trailing legs aligned with the freestream.
//
// Sign conventions: body frame x forward, y port, z up. The freestream seen
// by the aircraft at speed v and angle of attack alpha is
// v * (-cos(alpha), 0, sin(alpha)); lift is positive along (sin a, 0, cos a),
// drag along the freestream direction, C_l positive right wing down and C_m
// positive nose up.

#include <array>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "vtol/autodiff.hpp"
#include "vtol/geometry.hpp"
#include "vtol/types.hpp"
#include "vtol/vec3.hpp"

namespace vtol::vlm {

inline constexpr double kInv4Pi = 1.0 / (4.0 * kPi);

/// Straight filament a -> b with circulation gamma evaluated at p. `core` is a
/// regularization length added in quadrature to the perpendicular distance.
Vec3 segment_velocity(const Vec3& a, const Vec3& b, const Vec3& p, double gamma, double core);

/// Semi-infinite filament starting at a and running along unit direction d.
Vec3 semi_infinite_velocity(const Vec3& a, const Vec3& d, const Vec3& p, double gamma, double core);

/// Derivative of semi_infinite_velocity with respect to d, contracted with dd.
Vec3 semi_infinite_velocity_ddir(const Vec3& a, const Vec3& d, const Vec3& dd, const Vec3& p,
                                 double gamma, double core);

/// Closed four-segment ring (corners in traversal order).
Vec3 ring_induced_velocity(const std::array<Vec3, 4>& ring, double gamma, const Vec3& p,
                           double core = 0.0);

/// Unit-circulation velocity at p induced by panel ring j including, for
/// trailing rings, the two semi-infinite legs along `wake_dir`.
Vec3 panel_influence(const geometry::Panel& ring_panel, const Vec3& p, const Vec3& wake_dir, double core);

/// Freestream direction (unit) for an angle of attack in radians.
template <class T>
Vec3T<T> freestream_direction(const T& alpha_rad) {
    using std::cos;
    using std::sin;
    return Vec3T<T>{-cos(alpha_rad), alpha_rad * 0.0, sin(alpha_rad)};
}

struct ReferenceGeometry {
    double area = 2.0;
    double span = 4.0;
    double chord = 0.5;
    Vec3 moment_point{0.0, 0.0, 0.0};
    double rho = 1.225;
    double v_floor = 1.0;  ///< q_ref uses max(v, v_floor)

    static ReferenceGeometry from(const geometry::AircraftConfig& c);
    [[nodiscard]] double core_radius() const { return 1e-6 * chord; }
};

/// Velocity sample at every control point and every bound-segment midpoint.
struct OnsetFlow {
    std::vector<Vec3> at_control;
    std::vector<Vec3> at_bound;

    static OnsetFlow uniform(int n, const Vec3& v);
    static OnsetFlow zeros(int n) { return uniform(n, Vec3{}); }
    OnsetFlow& operator+=(const OnsetFlow& o);
    [[nodiscard]] bool all_finite() const;
};

struct CirculationSolution {
    Eigen::VectorXd gamma;
    double residual_norm = 0.0;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double rcond) : std::runtime_error(what), rcond_(rcond) {}
    [[nodiscard]] double rcond() const { return rcond_; }

private:
    double rcond_;
};

struct ForcesMoments {
    Vec3 force;
    Vec3 moment;
};

enum class Parallelism { Serial, OpenMP };

/// A[i][j] = n_i . (velocity at control point i from unit ring j).
Eigen::MatrixXd assemble_aic(const geometry::PanelMesh& mesh, const Vec3& wake_dir, double core,
                             Parallelism par = Parallelism::OpenMP);

/// b[i] = -onset(cp_i) . n_i
Eigen::VectorXd assemble_rhs(const geometry::PanelMesh& mesh, const OnsetFlow& onset);

/// Direct LU solve; throws SolverError on a singular matrix or when the
/// relative residual exceeds 1e-10.
CirculationSolution solve_circulations(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

/// Kutta-Joukowski on every spanwise bound segment with the full local
/// velocity (onset plus all ring and wake induced velocity).
ForcesMoments compute_forces(const geometry::PanelMesh& mesh, const CirculationSolution& sol,
                             const OnsetFlow& onset, double rho, const Vec3& wake_dir,
                             const Vec3& moment_point, double core);

/// Wind-frame coefficients. alpha in radians.
template <class T>
std::array<T, 4> coefficients(const std::array<T, 3>& force, const std::array<T, 3>& moment,
                              const T& alpha_rad, const T& v, const ReferenceGeometry& ref) {
    using std::cos;
    using std::max;
    using std::sin;
    const T ca = cos(alpha_rad);
    const T sa = sin(alpha_rad);
    const T vr = max(v, ref.v_floor);
    const T q = vr * vr * (0.5 * ref.rho);
    const T qs = q * ref.area;
    const T lift = force[0] * sa + force[2] * ca;
    const T drag = force[2] * sa - force[0] * ca;
    return {lift / qs, drag / qs, moment[0] / (qs * ref.span), -moment[1] / (qs * ref.chord)};
}

AeroCoefficients coefficients(const ForcesMoments& fm, const FlightState& flight,
                              const ReferenceGeometry& ref);

/// Cached solver for one mesh: geometry-only influences are computed once;
/// the wake legs are re-evaluated per angle of attack and the elevator rows
/// per deflection.
class VortexLattice {
public:
    VortexLattice(geometry::PanelMesh mesh, ReferenceGeometry ref,
                  Parallelism par = Parallelism::OpenMP);

    [[nodiscard]] int size() const { return n_; }
    [[nodiscard]] const geometry::PanelMesh& mesh() const { return mesh_; }
    [[nodiscard]] const ReferenceGeometry& reference() const { return ref_; }
    [[nodiscard]] const std::vector<int>& trailing() const { return trailing_; }

    /// Normal of panel i for an elevator deflection in degrees and its
    /// derivative per degree.
    [[nodiscard]] Vec3 normal(int i, double theta_elev_deg) const;
    [[nodiscard]] Vec3 normal_ddeg(int i, double theta_elev_deg) const;

    struct WakeInfluence {
        // (point, trailing ring) 3-vectors, row-major over points.
        std::vector<Vec3> at_control;
        std::vector<Vec3> at_bound;
    };
    /// Trailing-leg influences for alpha (rad); derivative w.r.t. alpha when
    /// `d_alpha` is non-null.
    void wake_influence(double alpha_rad, WakeInfluence& value, WakeInfluence* d_alpha) const;

    [[nodiscard]] Eigen::MatrixXd assemble_aic(double alpha_rad, double theta_elev_deg,
                                               const WakeInfluence& wake) const;
    [[nodiscard]] Eigen::MatrixXd aic_dalpha(double theta_elev_deg, const WakeInfluence& d_wake) const;
    [[nodiscard]] Eigen::MatrixXd aic_dtheta(double theta_elev_deg, const WakeInfluence& wake) const;

    [[nodiscard]] Eigen::VectorXd assemble_rhs(const std::vector<Vec3>& onset_control,
                                               double theta_elev_deg) const;

    /// Total velocity at every bound midpoint.
    [[nodiscard]] std::vector<Vec3> bound_velocity(const Eigen::VectorXd& gamma,
                                                   const std::vector<Vec3>& onset_bound,
                                                   const WakeInfluence& wake) const;

    [[nodiscard]] ForcesMoments forces(const Eigen::VectorXd& gamma, const std::vector<Vec3>& onset_bound,
                                       const WakeInfluence& wake) const;

    struct Result {
        AeroCoefficients coefficients;
        ForcesMoments loads;
        CirculationSolution circulation;
    };

    /// Full solve for a flight condition and onset flow (freestream already
    /// included in `onset`). alpha/theta in degrees, v in m/s.
    [[nodiscard]] Result solve(double v, double alpha_deg, double theta_elev_deg, const OnsetFlow& onset) const;

    /// Unit-ring influence at control points (no wake), row-major (i, j).
    [[nodiscard]] const std::vector<Vec3>& bound_influence_control() const { return wc_; }
    [[nodiscard]] const std::vector<Vec3>& bound_influence_bound() const { return wm_; }

private:
    geometry::PanelMesh mesh_;
    ReferenceGeometry ref_;
    Parallelism par_;
    int n_ = 0;
    std::vector<int> trailing_;
    std::vector<Vec3> wc_;  // bound-ring influence at control points
    std::vector<Vec3> wm_;  // bound-ring influence at bound midpoints
};

/// Composition assemble_rhs -> solve_circulations -> compute_forces ->
/// coefficients on the base mesh (elevator applied from flight.theta_elev).
AeroCoefficients vlm_solve(const geometry::PanelMesh& mesh, const FlightState& flight,
                           const OnsetFlow& induced, const ReferenceGeometry& ref);

// ---- tape primitives -------------------------------------------------------

/// A(alpha, theta_elev) as an (n x n) node.
ad::Var aic_node(const VortexLattice& vl, ad::Var alpha_rad, ad::Var theta_elev_deg);
/// b(onset, theta_elev); onset is an (n x 3) node.
ad::Var rhs_node(const VortexLattice& vl, ad::Var onset_control, ad::Var theta_elev_deg);
/// Forces and moments (6-vector: F then M) from gamma, alpha and the onset
/// flow at the bound midpoints (n x 3).
ad::Var forces_node(const VortexLattice& vl, ad::Var gamma, ad::Var alpha_rad, ad::Var onset_bound);

/// Full VLM on the tape: freestream from (v, alpha) plus `induced_control`
/// and `induced_bound` (n x 3 nodes). Angles in degrees. Returns C_L, C_D,
/// C_l, C_m as scalar nodes.
std::array<ad::Var, 4> solve_on_tape(const VortexLattice& vl, ad::Var v, ad::Var alpha_deg,
                                     ad::Var theta_elev_deg, ad::Var induced_control,
                                     ad::Var induced_bound);

/// Wake influence at one alpha and its alpha derivative.
struct WakeCache {
    VortexLattice::WakeInfluence value;
    VortexLattice::WakeInfluence d_alpha;
};

/// Factorized system for a frozen (v, alpha, theta_elev); only the onset
/// flow stays differentiable.
struct FixedSystem {
    double v = 0.0;
    double alpha_rad = 0.0;
    double theta_elev_deg = 0.0;
    std::shared_ptr<const ad::LuFactor> lu;
    std::shared_ptr<const WakeCache> wake;
};

/// Throws SolverError when the influence matrix is singular.
FixedSystem prepare_fixed(const VortexLattice& vl, double v, double alpha_deg, double theta_elev_deg);

std::array<ad::Var, 4> solve_on_tape(const VortexLattice& vl, const FixedSystem& fs, ad::Var induced_control,
                                     ad::Var induced_bound);

}  // namespace vtol::vlm
