#pragma once

// Flat-plate lifting-surface mesh of the six-rotor aircraft and the control
// kinematics applied to it (elevator deflection, tip-rotor tilt).
//
// Body frame: x forward, y to port, z up. Lengths in meters, angles in
// degrees at the public interface.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "vtol/types.hpp"
#include "vtol/vec3.hpp"

namespace vtol::geometry {

enum class SurfaceTag { Wing, Tail, Elevator };
enum class PropGroup { Starboard, Port, Hover };

const char* to_string(PropGroup g);
PropGroup prop_group_from_string(const std::string& s);

/// Piecewise-linear function of radial fraction r/R, clamped at the ends.
class RadialDistribution {
public:
    RadialDistribution() = default;
    explicit RadialDistribution(std::vector<std::pair<double, double>> knots);
    static RadialDistribution linear(double root_fraction, double root_value, double tip_value);

    [[nodiscard]] double operator()(double r_over_R) const;
    [[nodiscard]] const std::vector<std::pair<double, double>>& knots() const { return knots_; }

private:
    std::vector<std::pair<double, double>> knots_;
};

struct PropellerDisc {
    std::string name;
    Vec3 hub;
    Vec3 axis{1.0, 0.0, 0.0};   ///< thrust direction; slipstream runs along -axis
    double radius = 0.3;
    int blade_count = 2;
    RadialDistribution chord;   ///< blade chord / R
    RadialDistribution twist;   ///< degrees
    int spin_direction = 1;     ///< +1 right-handed about axis, -1 opposite
    bool tiltable = false;
    PropGroup group = PropGroup::Hover;
    double hub_fraction = 0.15; ///< innermost r/R carrying blade sections
    int stations = 12;

    void validate() const;
};

struct AircraftConfig {
    double wing_span = 4.0;
    double wing_chord = 0.5;
    int wing_panels_spanwise = 20;
    int wing_panels_chordwise = 4;

    double tail_span = 1.6;
    double tail_chord = 0.35;
    double tail_arm = 2.0;     ///< wing quarter chord to tail quarter chord, aft
    double tail_height = 0.3;  ///< tail plane above the wing plane
    double elevator_chord_fraction = 0.5;
    int tail_panels_spanwise = 8;
    int tail_panels_chordwise = 2;

    double ref_area = 2.0;
    double ref_span = 4.0;
    double ref_chord = 0.5;
    Vec3 moment_reference{0.0, 0.0, 0.0};
    double rho = 1.225;

    std::vector<PropellerDisc> props;

    /// Nominal six-rotor configuration used throughout the study.
    static AircraftConfig nominal();

    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;

    /// Mirror image about the x-z plane (port and starboard swap, spins flip).
    [[nodiscard]] AircraftConfig mirrored() const;
};

struct Panel {
    std::array<Vec3, 4> corners;  ///< LE-port, LE-starboard, TE-starboard, TE-port
    std::array<Vec3, 4> ring;     ///< vortex ring, same ordering, shifted aft by chord/4
    Vec3 control_point;
    Vec3 normal;
    Vec3 bound_mid;
    Vec3 bound_vec;               ///< leading ring segment, port to starboard
    double area = 0.0;
    SurfaceTag tag = SurfaceTag::Wing;
    int surface = 0;
    int span_index = 0;
    int chord_index = 0;
    int upstream = -1;            ///< panel sharing this ring's leading segment
    bool trailing = false;        ///< ring sheds the semi-infinite wake legs
};

struct SurfaceInfo {
    int first = 0;  ///< first panel index; panels are stored span-major
    int spanwise = 1;
    int chordwise = 1;
};

struct PanelMesh {
    std::vector<Panel> panels;
    std::vector<SurfaceInfo> surfaces;
    double planform_area = 0.0;

    [[nodiscard]] int size() const { return static_cast<int>(panels.size()); }
    [[nodiscard]] double total_panel_area() const;
    /// Index of the left/right mirror partner of panel i.
    [[nodiscard]] int mirror_index(int i) const;
};

struct SurfaceSpec {
    double span = 1.0;
    double chord = 1.0;
    Vec3 quarter_chord_center;
    int panels_spanwise = 1;
    int panels_chordwise = 1;
    SurfaceTag tag = SurfaceTag::Wing;
    double elevator_chord_fraction = 0.0;
};

/// Appends one flat rectangular surface to `mesh`.
void add_surface(PanelMesh& mesh, const SurfaceSpec& spec);

/// Wing plus tail. Deterministic for equal configs.
PanelMesh build_mesh(const AircraftConfig& config);

/// Rotated normal of an elevator panel for a deflection in degrees,
/// positive trailing edge down.
template <class T>
Vec3T<T> deflect_normal(const Vec3& base, const T& theta_deg) {
    using std::cos;
    using std::sin;
    const T th = theta_deg * (kPi / 180.0);
    const T c = cos(th);
    const T s = sin(th);
    // Rotation about +y by -theta.
    return Vec3T<T>{c * base.x - s * base.z, T(s * 0.0 + base.y), s * base.x + c * base.z};
}

/// Elevator-tagged normals rotated by theta_elev; other panels untouched.
/// Inputs outside [-15, 15] deg are accepted with a warning.
PanelMesh apply_elevator_deflection(const PanelMesh& mesh, double theta_elev_deg);

/// Tilt about the body y axis: 0 deg thrusts along +x, 90 deg along +z.
/// Throws std::invalid_argument for a non-tiltable disc.
PropellerDisc tilt_propeller(const PropellerDisc& disc, double theta_tilt_deg);

template <class T>
Vec3T<T> tilted_axis(const T& theta_deg) {
    using std::cos;
    using std::sin;
    const T th = theta_deg * (kPi / 180.0);
    return Vec3T<T>{cos(th), th * 0.0, sin(th)};
}

/// YAML aircraft description; missing keys fall back to nominal().
AircraftConfig load_aircraft_config(const std::string& path);
void save_aircraft_config(const AircraftConfig& config, const std::string& path);

}  // namespace vtol::geometry
