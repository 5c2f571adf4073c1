#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <random>

#include "vtol/vlm.hpp"

using namespace vtol;
using namespace vtol::vlm;
using geometry::PanelMesh;

namespace {

PanelMesh flat_wing(double span, double chord, int ns, int nc) {
    PanelMesh m;
    geometry::SurfaceSpec s;
    s.span = span;
    s.chord = chord;
    s.panels_spanwise = ns;
    s.panels_chordwise = nc;
    geometry::add_surface(m, s);
    return m;
}

ReferenceGeometry wing_reference(double span, double chord) {
    ReferenceGeometry r;
    r.area = span * chord;
    r.span = span;
    r.chord = chord;
    return r;
}

FlightState flight(double v, double alpha_deg, double theta_elev = 0.0) {
    FlightState f;
    f.v = v;
    f.alpha = alpha_deg;
    f.theta_elev = theta_elev;
    return f;
}

// Textbook Gaussian elimination with partial pivoting, written out here as an
// independent reference for the LU-based solve.
Eigen::VectorXd gauss_solve(Eigen::MatrixXd a, Eigen::VectorXd b) {
    const int n = static_cast<int>(a.rows());
    for (int k = 0; k < n; ++k) {
        int p = k;
        for (int i = k + 1; i < n; ++i) {
            if (std::abs(a(i, k)) > std::abs(a(p, k))) p = i;
        }
        a.row(k).swap(a.row(p));
        std::swap(b(k), b(p));
        for (int i = k + 1; i < n; ++i) {
            const double f = a(i, k) / a(k, k);
            for (int j = k; j < n; ++j) a(i, j) -= f * a(k, j);
            b(i) -= f * b(k);
        }
    }
    Eigen::VectorXd x(n);
    for (int i = n - 1; i >= 0; --i) {
        double s = b(i);
        for (int j = i + 1; j < n; ++j) s -= a(i, j) * x(j);
        x(i) = s / a(i, i);
    }
    return x;
}

const geometry::PanelMesh& nominal_mesh() {
    static const PanelMesh m = geometry::build_mesh(geometry::AircraftConfig::nominal());
    return m;
}

}  // namespace

TEST_SUITE("vlm_core") {

TEST_CASE("ring velocity is linear in circulation") {
    const std::array<Vec3, 4> ring = {Vec3{0.5, 0.5, 0}, Vec3{0.5, -0.5, 0}, Vec3{-0.5, -0.5, 0},
                                      Vec3{-0.5, 0.5, 0}};
    const Vec3 p{0.3, 0.1, 0.2};
    const Vec3 z = ring_induced_velocity(ring, 0.0, p);
    CHECK(z.x == 0.0);
    CHECK(z.y == 0.0);
    CHECK(z.z == 0.0);
    const Vec3 v1 = ring_induced_velocity(ring, 1.0, p);
    const Vec3 v3 = ring_induced_velocity(ring, 3.0, p);
    CHECK(norm(v3 - v1 * 3.0) <= 1e-15);
}

TEST_CASE("square ring centre velocity") {
    for (double s : {1.0, 0.37}) {
        const double h = 0.5 * s;
        const std::array<Vec3, 4> ring = {Vec3{h, h, 0}, Vec3{h, -h, 0}, Vec3{-h, -h, 0}, Vec3{-h, h, 0}};
        const Vec3 v = ring_induced_velocity(ring, 1.0, Vec3{0, 0, 0});
        const double expected = 2.0 * std::sqrt(2.0) / (kPi * s);
        CHECK(std::abs(norm(v) - expected) / expected <= 1e-8);
        const Vec3 n = normalized(cross(ring[1] - ring[0], ring[2] - ring[1]));
        CHECK(std::abs(dot(normalized(v), n) - 1.0) <= 1e-12);
    }
}

TEST_CASE("ring far field decays like a doublet") {
    const std::array<Vec3, 4> ring = {Vec3{0.5, 0.5, 0}, Vec3{0.5, -0.5, 0}, Vec3{-0.5, -0.5, 0},
                                      Vec3{-0.5, 0.5, 0}};
    const double diameter = std::sqrt(2.0);
    for (const Vec3& dir : {Vec3{0, 0, 1}, normalized(Vec3{1, 0.5, 0.3})}) {
        const double r = 100.0 * diameter;
        const double v1 = norm(ring_induced_velocity(ring, 1.0, dir * r));
        const double v2 = norm(ring_induced_velocity(ring, 1.0, dir * (2.0 * r)));
        CHECK(std::abs(v1 / v2 - 8.0) / 8.0 <= 0.05);
    }
}

TEST_CASE("semi-infinite leg is the limit of a long segment") {
    const Vec3 a{0.1, 0.2, 0.0};
    const Vec3 d = normalized(Vec3{-1.0, 0.0, 0.1});
    const Vec3 p{0.4, -0.3, 0.2};
    const Vec3 semi = semi_infinite_velocity(a, d, p, 1.0, 0.0);
    const Vec3 seg = segment_velocity(a, a + d * 1e7, p, 1.0, 0.0);
    CHECK(norm(semi - seg) <= 1e-9 * norm(semi));
}

TEST_CASE("semi-infinite direction derivative matches finite differences") {
    const Vec3 a{0.1, 0.2, 0.0};
    const Vec3 p{-0.7, 0.25, 0.05};
    const double alpha = 0.2;
    const Vec3 dd{std::sin(alpha), 0.0, std::cos(alpha)};
    const Vec3 an = semi_infinite_velocity_ddir(a, freestream_direction(alpha), dd, p, 1.0, 1e-7);
    const double h = 1e-6;
    const Vec3 num = (semi_infinite_velocity(a, freestream_direction(alpha + h), p, 1.0, 1e-7) -
                      semi_infinite_velocity(a, freestream_direction(alpha - h), p, 1.0, 1e-7)) *
                     (0.5 / h);
    CHECK(norm(an - num) <= 1e-7 * norm(an));
}

TEST_CASE("single-panel influence matrix") {
    const PanelMesh m = flat_wing(1.0, 1.0, 1, 1);
    const Vec3 d = freestream_direction(0.0);
    const Eigen::MatrixXd a = assemble_aic(m, d, 0.0);
    REQUIRE(a.rows() == 1);
    const auto& p = m.panels[0];
    CHECK(a(0, 0) == dot(p.normal, panel_influence(p, p.control_point, d, 0.0)));
    CHECK(a(0, 0) != 0.0);
}

TEST_CASE("influence matrix commutes with the mirror permutation") {
    const PanelMesh& m = nominal_mesh();
    const int n = m.size();
    const Eigen::MatrixXd a = assemble_aic(m, freestream_direction(deg2rad(6.0)), 5e-7);
    Eigen::MatrixXd pap(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            pap(i, j) = a(m.mirror_index(i), m.mirror_index(j));
        }
    }
    CHECK((a - pap).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(a.allFinite());
    for (int i = 0; i < n; ++i) {
        CHECK(std::abs(a(i, i)) > 0.0);
    }
}

TEST_CASE("parallel and serial assembly are bit-identical") {
    const PanelMesh& m = nominal_mesh();
    const Vec3 d = freestream_direction(deg2rad(-4.0));
    const int saved = omp_get_max_threads();
    omp_set_num_threads(4);
    const Eigen::MatrixXd par = assemble_aic(m, d, 5e-7, Parallelism::OpenMP);
    omp_set_num_threads(saved);
    const Eigen::MatrixXd ser = assemble_aic(m, d, 5e-7, Parallelism::Serial);
    CHECK(par == ser);
}

TEST_CASE("cached lattice matches direct assembly") {
    const PanelMesh& m = nominal_mesh();
    const ReferenceGeometry ref;
    const VortexLattice vl(m, ref);
    for (double theta : {0.0, 9.0}) {
        const double alpha = deg2rad(7.0);
        VortexLattice::WakeInfluence w;
        vl.wake_influence(alpha, w, nullptr);
        const Eigen::MatrixXd cached = vl.assemble_aic(alpha, theta, w);
        const Eigen::MatrixXd direct =
            assemble_aic(geometry::apply_elevator_deflection(m, theta), freestream_direction(alpha), ref.core_radius());
        CHECK((cached - direct).cwiseAbs().maxCoeff() <= 1e-12 * direct.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("right-hand side") {
    const PanelMesh& m = nominal_mesh();
    const int n = m.size();
    CHECK(assemble_rhs(m, OnsetFlow::zeros(n)).norm() == 0.0);
    CHECK(assemble_rhs(m, OnsetFlow::uniform(n, freestream_direction(0.0) * 30.0)).norm() == 0.0);
    const Eigen::VectorXd b = assemble_rhs(m, OnsetFlow::uniform(n, freestream_direction(deg2rad(5.0)) * 30.0));
    for (int i = 0; i < n; ++i) {
        CHECK(b(i) == doctest::Approx(-30.0 * std::sin(deg2rad(5.0)) * m.panels[static_cast<std::size_t>(i)].normal.z)
                          .epsilon(1e-14));
    }
}

TEST_CASE("circulation solve") {
    SUBCASE("identity") {
        Eigen::VectorXd b(3);
        b << 1.0, -2.0, 3.5;
        const auto s = solve_circulations(Eigen::MatrixXd::Identity(3, 3), b);
        CHECK(s.gamma == b);
        CHECK(s.residual_norm == 0.0);
    }
    SUBCASE("diagonal 2x2") {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
        a(0, 0) = 2.0;
        a(1, 1) = 4.0;
        Eigen::VectorXd b(2);
        b << 2.0, 8.0;
        const auto s = solve_circulations(a, b);
        CHECK(s.gamma(0) == 1.0);
        CHECK(s.gamma(1) == 2.0);
    }
    SUBCASE("random 20x20 against Gaussian elimination") {
        std::mt19937_64 rng(20);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Eigen::MatrixXd a(20, 20);
        Eigen::VectorXd b(20);
        for (int i = 0; i < 20; ++i) {
            for (int j = 0; j < 20; ++j) a(i, j) = u(rng);
            a(i, i) += 5.0;
            b(i) = u(rng);
        }
        const auto s = solve_circulations(a, b);
        CHECK(s.residual_norm <= 1e-10);
        const Eigen::VectorXd ref = gauss_solve(a, b);
        CHECK((s.gamma - ref).cwiseAbs().maxCoeff() <= 1e-8);
    }
    SUBCASE("singular system reports a condition estimate") {
        Eigen::MatrixXd a(2, 2);
        a << 1.0, 2.0, 2.0, 4.0;
        try {
            (void)solve_circulations(a, Eigen::VectorXd::Ones(2));
            FAIL("expected SolverError");
        } catch (const SolverError& e) {
            CHECK(e.rcond() <= 1e-14);
            CHECK(std::string(e.what()).find("rcond") != std::string::npos);
        }
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(solve_circulations(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Ones(2)),
                        std::invalid_argument);
    }
}

TEST_CASE("forces") {
    SUBCASE("zero circulation gives zero loads") {
        const PanelMesh& m = nominal_mesh();
        CirculationSolution s{Eigen::VectorXd::Zero(m.size()), 0.0};
        const auto fm = compute_forces(m, s, OnsetFlow::uniform(m.size(), Vec3{-20, 0, 1}), 1.225,
                                       freestream_direction(0.05), Vec3{}, 5e-7);
        CHECK(norm(fm.force) == 0.0);
        CHECK(norm(fm.moment) == 0.0);
    }
    SUBCASE("single panel Kutta-Joukowski by hand") {
        const PanelMesh m = flat_wing(2.0, 0.5, 1, 1);
        const auto& p = m.panels[0];
        const Vec3 onset{-10.0, 0.0, 0.5};
        const Vec3 d = freestream_direction(0.0);
        CirculationSolution s{Eigen::VectorXd::Ones(1), 0.0};
        const auto fm = compute_forces(m, s, OnsetFlow::uniform(1, onset), 1.2, d, Vec3{}, 0.0);
        // Velocity at the bound midpoint: onset plus the two side segments
        // and wake legs of the same horseshoe (bound segment self-term is 0).
        const Vec3 r = p.ring[0];
        const Vec3 l = p.ring[1] - p.ring[0];
        const Vec3 w = segment_velocity(p.ring[1], p.ring[2], p.bound_mid, 1.0, 0.0) +
                       segment_velocity(p.ring[3], p.ring[0], p.bound_mid, 1.0, 0.0) +
                       semi_infinite_velocity(p.ring[2], d, p.bound_mid, 1.0, 0.0) -
                       semi_infinite_velocity(p.ring[3], d, p.bound_mid, 1.0, 0.0);
        const Vec3 v = onset + w;
        const Vec3 df{1.2 * (v.y * l.z - v.z * l.y), 1.2 * (v.z * l.x - v.x * l.z), 1.2 * (v.x * l.y - v.y * l.x)};
        CHECK(norm(fm.force - df) <= 1e-13);
        // Downwash on the bound line is finite and negative.
        CHECK(w.z < 0.0);
        CHECK(df.z > 0.0);
        const Vec3 arm = p.bound_mid;
        CHECK(norm(fm.moment - cross(arm, df)) <= 1e-13);
        (void)r;
    }
}

TEST_CASE("coefficient normalization") {
    ReferenceGeometry ref;
    const FlightState f = flight(30.0, 0.0);
    const double q = 0.5 * ref.rho * 30.0 * 30.0;
    CHECK(coefficients(ForcesMoments{}, f, ref) == AeroCoefficients{});
    ForcesMoments fm;
    fm.force = Vec3{0.0, 0.0, q * ref.area};
    const auto c = coefficients(fm, f, ref);
    CHECK(c.CL == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(c.CD == 0.0);
    SUBCASE("lift and drag are rotated into the wind frame") {
        const FlightState g = flight(30.0, 90.0);
        ForcesMoments h;
        h.force = Vec3{q * ref.area, 0.0, 0.0};
        const auto k = coefficients(h, g, ref);
        CHECK(k.CL == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(std::abs(k.CD) <= 1e-14);
    }
    SUBCASE("moment signs") {
        ForcesMoments h;
        h.moment = Vec3{q * ref.area * ref.span, -q * ref.area * ref.chord, 0.0};
        const auto k = coefficients(h, f, ref);
        CHECK(k.Cl == doctest::Approx(1.0));
        CHECK(k.Cm == doctest::Approx(1.0));
    }
    SUBCASE("speed below the floor uses the floor") {
        ForcesMoments h;
        h.force = Vec3{0.0, 0.0, 0.5 * ref.rho * ref.area};
        const auto k = coefficients(h, flight(0.0, 0.0), ref);
        CHECK(k.CL == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(k.finite());
    }
}

TEST_CASE("flat plate AR 8 lift against lifting-line theory") {
    const double ar = 8.0;
    const PanelMesh m = flat_wing(8.0, 1.0, 32, 4);
    const ReferenceGeometry ref = wing_reference(8.0, 1.0);
    const double alpha = 5.0;
    const auto c = vlm_solve(m, flight(30.0, alpha), OnsetFlow::zeros(m.size()), ref);
    const double ll = 2.0 * kPi * deg2rad(alpha) / (1.0 + 2.0 / ar);
    CHECK(std::abs(c.CL - ll) / ll <= 0.10);
    const auto c2 = vlm_solve(m, flight(30.0, alpha + 1.0), OnsetFlow::zeros(m.size()), ref);
    const double slope = (c2.CL - c.CL) / deg2rad(1.0);
    const double target = 2.0 * kPi * ar / (ar + 2.0);
    CHECK(std::abs(slope - target) / target <= 0.10);
    // Induced drag is positive and close to CL^2/(pi AR) for a near-elliptic load.
    CHECK(c.CD > 0.0);
    CHECK(c.CD == doctest::Approx(c.CL * c.CL / (kPi * ar)).epsilon(0.15));
}

TEST_CASE("zero incidence gives zero lift and moments") {
    const PanelMesh& m = nominal_mesh();
    const auto c = vlm_solve(m, flight(30.0, 0.0), OnsetFlow::zeros(m.size()), ReferenceGeometry{});
    CHECK(std::abs(c.CL) <= 1e-10);
    CHECK(std::abs(c.Cl) <= 1e-10);
    CHECK(std::abs(c.Cm) <= 1e-10);
}

TEST_CASE("vlm_solve is deterministic and matches the cached lattice") {
    const PanelMesh& m = nominal_mesh();
    const ReferenceGeometry ref;
    const VortexLattice vl(m, ref);
    const FlightState f = flight(25.0, 4.0, -6.0);
    OnsetFlow induced = OnsetFlow::zeros(m.size());
    for (int i = 0; i < 20; ++i) {
        induced.at_control[static_cast<std::size_t>(i)] = Vec3{-3.0, 0.2, 0.1};
        induced.at_bound[static_cast<std::size_t>(i)] = Vec3{-3.0, 0.2, 0.1};
    }
    const auto a = vlm_solve(m, f, induced, ref);
    const auto b = vlm_solve(m, f, induced, ref);
    CHECK(a == b);
    OnsetFlow onset = OnsetFlow::uniform(m.size(), freestream_direction(deg2rad(f.alpha)) * f.v);
    onset += induced;
    const auto r = vl.solve(f.v, f.alpha, f.theta_elev, onset);
    const auto x = a.as_array();
    const auto y = r.coefficients.as_array();
    for (int k = 0; k < 4; ++k) {
        CHECK(std::abs(x[static_cast<std::size_t>(k)] - y[static_cast<std::size_t>(k)]) <=
              1e-12 * std::max(1.0, std::abs(x[static_cast<std::size_t>(k)])));
    }
    CHECK(r.circulation.residual_norm <= 1e-10);
}

TEST_CASE("circulation is linear in the onset flow") {
    const PanelMesh& m = nominal_mesh();
    const VortexLattice vl(m, ReferenceGeometry{});
    OnsetFlow onset = OnsetFlow::uniform(m.size(), freestream_direction(deg2rad(3.0)) * 20.0);
    for (int i = 0; i < m.size(); i += 3) onset.at_control[static_cast<std::size_t>(i)].z += 0.7;
    OnsetFlow twice = onset;
    for (auto& v : twice.at_control) v = v * 2.0;
    for (auto& v : twice.at_bound) v = v * 2.0;
    const auto g1 = vl.solve(20.0, 3.0, 0.0, onset).circulation.gamma;
    const auto g2 = vl.solve(20.0, 3.0, 0.0, twice).circulation.gamma;
    CHECK((g2 - 2.0 * g1).cwiseAbs().maxCoeff() <= 1e-10 * g1.cwiseAbs().maxCoeff());
}

TEST_CASE("mirror-symmetric inputs give zero roll and symmetric circulation") {
    const PanelMesh& m = nominal_mesh();
    const ReferenceGeometry ref;
    const VortexLattice vl(m, ref);
    OnsetFlow onset = OnsetFlow::uniform(m.size(), freestream_direction(deg2rad(8.0)) * 15.0);
    // Symmetric blowing with opposite swirl on either side.
    for (int i = 0; i < m.size(); ++i) {
        const auto& p = m.panels[static_cast<std::size_t>(i)];
        const double s = p.control_point.y > 0 ? 1.0 : -1.0;
        const double w = std::exp(-std::pow(std::abs(p.control_point.y) - 1.2, 2));
        onset.at_control[static_cast<std::size_t>(i)] += Vec3{-4.0 * w, s * 1.5 * w, 0.6 * w};
        onset.at_bound[static_cast<std::size_t>(i)] += Vec3{-4.0 * w, s * 1.5 * w, 0.6 * w};
    }
    const auto r = vl.solve(15.0, 8.0, 5.0, onset);
    CHECK(std::abs(r.coefficients.Cl) <= 1e-6);
    const auto& g = r.circulation.gamma;
    for (int i = 0; i < m.size(); ++i) {
        CHECK(std::abs(g(i) - g(m.mirror_index(i))) <= 1e-8);
    }
}

TEST_CASE("tape path matches the double path and finite differences") {
    const PanelMesh& m = nominal_mesh();
    const ReferenceGeometry ref;
    const VortexLattice vl(m, ref);
    const int n = m.size();
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<double> induced(static_cast<std::size_t>(3 * n));
    for (auto& x : induced) x = u(rng);

    auto run = [&](ad::Tape& t, std::span<const ad::Var> x, int which) {
        const ad::Var ic = t.variable(induced, ad::Shape{n, 3});
        const ad::Var ib = t.variable(induced, ad::Shape{n, 3});
        const auto c = solve_on_tape(vl, x[0], x[1], x[2], ic, ib);
        return c[static_cast<std::size_t>(which)];
    };
    const double x0[] = {22.0, 6.0, 4.0};

    OnsetFlow onset = OnsetFlow::uniform(n, freestream_direction(deg2rad(x0[1])) * x0[0]);
    for (int i = 0; i < n; ++i) {
        const Vec3 d{induced[static_cast<std::size_t>(3 * i)], induced[static_cast<std::size_t>(3 * i + 1)],
                     induced[static_cast<std::size_t>(3 * i + 2)]};
        onset.at_control[static_cast<std::size_t>(i)] += d;
        onset.at_bound[static_cast<std::size_t>(i)] += d;
    }
    const auto ref_c = vl.solve(x0[0], x0[1], x0[2], onset).coefficients.as_array();
    for (int k = 0; k < 4; ++k) {
        ad::Tape t;
        std::vector<ad::Var> xs = {t.variable(x0[0]), t.variable(x0[1]), t.variable(x0[2])};
        const double tv = run(t, xs, k).value();
        CHECK(std::abs(tv - ref_c[static_cast<std::size_t>(k)]) <=
              1e-12 * std::max(1.0, std::abs(ref_c[static_cast<std::size_t>(k)])));
        const auto r = ad::gradcheck([&](ad::Tape& tp, std::span<const ad::Var> x) { return run(tp, x, k); }, x0,
                                     1e-5);
        INFO("coefficient ", k, " worst component ", r.worst_index);
        CHECK(r.max_rel_error <= 1e-5);
    }
}

TEST_CASE("dCL/dalpha from the tape matches a 1e-4 rad central difference") {
    const PanelMesh m = flat_wing(8.0, 1.0, 16, 4);
    const ReferenceGeometry ref = wing_reference(8.0, 1.0);
    const VortexLattice vl(m, ref);
    const int n = m.size();
    const double alpha = 4.0;
    ad::Tape t;
    const ad::Var v = t.variable(30.0);
    const ad::Var a = t.variable(alpha);
    const ad::Var th = t.variable(0.0);
    const ad::Var z = t.variable(std::vector<double>(static_cast<std::size_t>(3 * n), 0.0), ad::Shape{n, 3});
    const auto c = solve_on_tape(vl, v, a, th, z, z);
    const ad::Var in[] = {a};
    const double per_rad = ad::gradient(t, c[0], in)[0] * (180.0 / kPi);
    const double h = 1e-4;
    auto cl = [&](double rad) {
        return vlm_solve(m, flight(30.0, rad2deg(rad)), OnsetFlow::zeros(n), ref).CL;
    };
    const double fd = (cl(deg2rad(alpha) + h) - cl(deg2rad(alpha) - h)) / (2.0 * h);
    CHECK(std::abs(per_rad - fd) / std::abs(fd) <= 1e-4);
}

TEST_CASE("mismatched onset is rejected") {
    const PanelMesh& m = nominal_mesh();
    CHECK_THROWS_AS(vlm_solve(m, flight(10, 2), OnsetFlow::zeros(3), ReferenceGeometry{}), std::invalid_argument);
}

}  // TEST_SUITE
