#include "vtol/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "vtol/log.hpp"

namespace vtol::geometry {

const char* to_string(PropGroup g) {
    switch (g) {
        case PropGroup::Starboard: return "starboard";
        case PropGroup::Port: return "port";
        case PropGroup::Hover: return "hover";
    }
    return "hover";
}

PropGroup prop_group_from_string(const std::string& s) {
    if (s == "starboard") return PropGroup::Starboard;
    if (s == "port") return PropGroup::Port;
    if (s == "hover") return PropGroup::Hover;
    throw std::invalid_argument("unknown propeller group '" + s + "'");
}

RadialDistribution::RadialDistribution(std::vector<std::pair<double, double>> knots)
    : knots_(std::move(knots)) {
    if (knots_.empty()) {
        throw std::invalid_argument("radial distribution needs at least one knot");
    }
    std::sort(knots_.begin(), knots_.end());
}

RadialDistribution RadialDistribution::linear(double root_fraction, double root_value, double tip_value) {
    return RadialDistribution({{root_fraction, root_value}, {1.0, tip_value}});
}

double RadialDistribution::operator()(double r) const {
    if (knots_.empty()) {
        return 0.0;
    }
    if (r <= knots_.front().first) return knots_.front().second;
    if (r >= knots_.back().first) return knots_.back().second;
    auto hi = std::upper_bound(knots_.begin(), knots_.end(), r,
                               [](double x, const auto& k) { return x < k.first; });
    auto lo = hi - 1;
    const double t = (r - lo->first) / (hi->first - lo->first);
    return lo->second + t * (hi->second - lo->second);
}

void PropellerDisc::validate() const {
    const double n = norm(axis);
    if (std::abs(n - 1.0) > 1e-12) {
        throw std::invalid_argument("propeller '" + name + "': axis is not unit length");
    }
    if (!(radius > 0.0)) {
        throw std::invalid_argument("propeller '" + name + "': radius must be positive");
    }
    if (blade_count < 2) {
        throw std::invalid_argument("propeller '" + name + "': needs at least two blades");
    }
    if (spin_direction != 1 && spin_direction != -1) {
        throw std::invalid_argument("propeller '" + name + "': spin_direction must be +1 or -1");
    }
    if (!(hub_fraction >= 0.0 && hub_fraction < 1.0) || stations < 1) {
        throw std::invalid_argument("propeller '" + name + "': bad radial discretization");
    }
}

namespace {

PropellerDisc make_prop(std::string name, Vec3 hub, Vec3 axis, double radius, int spin, bool tiltable,
                        PropGroup group) {
    PropellerDisc p;
    p.name = std::move(name);
    p.hub = hub;
    p.axis = axis;
    p.radius = radius;
    p.blade_count = 2;
    p.chord = RadialDistribution::linear(p.hub_fraction, 0.12, 0.12);
    p.twist = RadialDistribution::linear(p.hub_fraction, 30.0, 12.0);
    p.spin_direction = spin;
    p.tiltable = tiltable;
    p.group = group;
    return p;
}

}  // namespace

AircraftConfig AircraftConfig::nominal() {
    AircraftConfig c;
    const Vec3 fwd{1.0, 0.0, 0.0};
    const Vec3 up{0.0, 0.0, 1.0};
    const double tip = c.wing_span / 2.0;
    c.props = {
        make_prop("star_tip", {0.35, -tip, 0.0}, fwd, 0.3, 1, true, PropGroup::Starboard),
        make_prop("port_tip", {0.35, tip, 0.0}, fwd, 0.3, -1, true, PropGroup::Port),
        make_prop("hover_front_star", {0.2, -1.0, 0.15}, up, 0.25, -1, false, PropGroup::Hover),
        make_prop("hover_front_port", {0.2, 1.0, 0.15}, up, 0.25, 1, false, PropGroup::Hover),
        make_prop("hover_rear_star", {-1.95, -0.6, 0.45}, up, 0.25, 1, false, PropGroup::Hover),
        make_prop("hover_rear_port", {-1.95, 0.6, 0.45}, up, 0.25, -1, false, PropGroup::Hover),
    };
    return c;
}

void AircraftConfig::validate() const {
    auto positive = [](double x, const char* what) {
        if (!(x > 0.0)) {
            throw std::invalid_argument(std::string(what) + " must be positive");
        }
    };
    positive(wing_span, "wing span");
    positive(wing_chord, "wing chord");
    positive(tail_span, "tail span");
    positive(tail_chord, "tail chord");
    positive(ref_area, "reference area");
    positive(ref_span, "reference span");
    positive(ref_chord, "reference chord");
    positive(rho, "air density");
    if (!(elevator_chord_fraction > 0.0 && elevator_chord_fraction < 1.0)) {
        throw std::invalid_argument("elevator chord fraction must lie in (0, 1)");
    }
    if (wing_panels_spanwise < 1 || wing_panels_chordwise < 1 || tail_panels_spanwise < 1 ||
        tail_panels_chordwise < 1) {
        throw std::invalid_argument("panel counts must be at least 1");
    }
    if (props.size() != 6) {
        throw std::invalid_argument("aircraft needs exactly 6 propellers");
    }
    int tiltable = 0;
    int hover = 0;
    for (const auto& p : props) {
        p.validate();
        if (p.tiltable) {
            ++tiltable;
            if (std::abs(std::abs(p.hub.y) - wing_span / 2.0) > 1e-9) {
                throw std::invalid_argument("tiltable propeller '" + p.name + "' is not at a wing tip");
            }
        }
        if (p.group == PropGroup::Hover) {
            ++hover;
        }
    }
    if (tiltable != 2) {
        throw std::invalid_argument("aircraft needs exactly 2 tiltable propellers");
    }
    if (hover != 4) {
        throw std::invalid_argument("hover group needs exactly 4 propellers");
    }
}

AircraftConfig AircraftConfig::mirrored() const {
    AircraftConfig m = *this;
    m.moment_reference.y = -moment_reference.y;
    for (auto& p : m.props) {
        p.hub.y = -p.hub.y;
        p.axis.y = -p.axis.y;
        p.spin_direction = -p.spin_direction;
        if (p.group == PropGroup::Starboard) {
            p.group = PropGroup::Port;
        } else if (p.group == PropGroup::Port) {
            p.group = PropGroup::Starboard;
        }
    }
    return m;
}

double PanelMesh::total_panel_area() const {
    double a = 0.0;
    for (const auto& p : panels) {
        a += p.area;
    }
    return a;
}

int PanelMesh::mirror_index(int i) const {
    const Panel& p = panels[static_cast<std::size_t>(i)];
    const SurfaceInfo& s = surfaces[static_cast<std::size_t>(p.surface)];
    return s.first + (s.spanwise - 1 - p.span_index) * s.chordwise + p.chord_index;
}

void add_surface(PanelMesh& mesh, const SurfaceSpec& s) {
    if (!(s.span > 0.0) || !(s.chord > 0.0)) {
        throw std::invalid_argument("surface dimensions must be positive");
    }
    if (s.panels_spanwise < 1 || s.panels_chordwise < 1) {
        throw std::invalid_argument("surface panel counts must be at least 1");
    }
    const int surface = static_cast<int>(mesh.surfaces.size());
    const int first = mesh.size();
    const int ns = s.panels_spanwise;
    const int nc = s.panels_chordwise;
    const double x_le = s.quarter_chord_center.x + 0.25 * s.chord;
    const double dx = s.chord / nc;
    const double dy = s.span / ns;
    const double yc = s.quarter_chord_center.y;
    const double z = s.quarter_chord_center.z;
    // Edge k sits at yc + span*(ns-2k)/(2 ns); the integer numerator keeps
    // mirrored edges exact negatives of each other.
    auto edge = [&](int k) { return yc + (s.span * static_cast<double>(ns - 2 * k)) / (2.0 * ns); };

    for (int i = 0; i < ns; ++i) {
        const double ya = edge(i);
        const double yb = edge(i + 1);
        for (int j = 0; j < nc; ++j) {
            Panel p;
            const double xf = x_le - j * dx;
            const double xa = x_le - (j + 1) * dx;
            p.corners = {Vec3{xf, ya, z}, Vec3{xf, yb, z}, Vec3{xa, yb, z}, Vec3{xa, ya, z}};
            const double rf = xf - 0.25 * dx;
            const double ra = xa - 0.25 * dx;
            p.ring = {Vec3{rf, ya, z}, Vec3{rf, yb, z}, Vec3{ra, yb, z}, Vec3{ra, ya, z}};
            p.control_point = Vec3{xf - 0.75 * dx, 0.5 * (ya + yb), z};
            p.normal = Vec3{0.0, 0.0, 1.0};
            p.bound_mid = Vec3{rf, 0.5 * (ya + yb), z};
            p.bound_vec = p.ring[1] - p.ring[0];
            p.area = dx * dy;
            p.surface = surface;
            p.span_index = i;
            p.chord_index = j;
            p.upstream = j > 0 ? first + i * nc + (j - 1) : -1;
            p.trailing = (j == nc - 1);
            p.tag = s.tag;
            if (s.elevator_chord_fraction > 0.0) {
                const double station = (j + 0.5) / nc;
                if (station >= 1.0 - s.elevator_chord_fraction) {
                    p.tag = SurfaceTag::Elevator;
                }
            }
            mesh.panels.push_back(p);
        }
    }
    mesh.surfaces.push_back({first, ns, nc});
    mesh.planform_area += s.span * s.chord;
}

PanelMesh build_mesh(const AircraftConfig& config) {
    config.validate();
    PanelMesh mesh;
    SurfaceSpec wing;
    wing.span = config.wing_span;
    wing.chord = config.wing_chord;
    wing.quarter_chord_center = Vec3{0.0, 0.0, 0.0};
    wing.panels_spanwise = config.wing_panels_spanwise;
    wing.panels_chordwise = config.wing_panels_chordwise;
    wing.tag = SurfaceTag::Wing;
    add_surface(mesh, wing);

    SurfaceSpec tail;
    tail.span = config.tail_span;
    tail.chord = config.tail_chord;
    tail.quarter_chord_center = Vec3{-config.tail_arm, 0.0, config.tail_height};
    tail.panels_spanwise = config.tail_panels_spanwise;
    tail.panels_chordwise = config.tail_panels_chordwise;
    tail.tag = SurfaceTag::Tail;
    tail.elevator_chord_fraction = config.elevator_chord_fraction;
    add_surface(mesh, tail);
    return mesh;
}

PanelMesh apply_elevator_deflection(const PanelMesh& mesh, double theta_elev_deg) {
    if (theta_elev_deg < -15.0 || theta_elev_deg > 15.0) {
        std::ostringstream os;
        os << "elevator deflection " << theta_elev_deg << " deg outside [-15, 15]";
        warn(os.str());
    }
    PanelMesh out = mesh;
    if (theta_elev_deg == 0.0) {
        return out;
    }
    for (auto& p : out.panels) {
        if (p.tag == SurfaceTag::Elevator) {
            p.normal = deflect_normal(p.normal, theta_elev_deg);
        }
    }
    return out;
}

PropellerDisc tilt_propeller(const PropellerDisc& disc, double theta_tilt_deg) {
    if (!disc.tiltable) {
        throw std::invalid_argument("propeller '" + disc.name + "' is not tiltable");
    }
    if (theta_tilt_deg < 0.0 || theta_tilt_deg > 110.0) {
        std::ostringstream os;
        os << "tilt " << theta_tilt_deg << " deg outside [0, 110]";
        warn(os.str());
    }
    PropellerDisc out = disc;
    out.axis = tilted_axis(theta_tilt_deg);
    return out;
}

}  // namespace vtol::geometry
