#include <fstream>
#include <stdexcept>

#include <yaml-cpp/yaml.h>

#include "vtol/geometry.hpp"

namespace vtol::geometry {

namespace {

template <class T>
void read(const YAML::Node& node, const char* key, T& out) {
    if (node && node[key]) {
        out = node[key].as<T>();
    }
}

Vec3 read_vec3(const YAML::Node& node) {
    if (!node.IsSequence() || node.size() != 3) {
        throw std::invalid_argument("expected a 3-element sequence");
    }
    return {node[0].as<double>(), node[1].as<double>(), node[2].as<double>()};
}

RadialDistribution read_distribution(const YAML::Node& node) {
    std::vector<std::pair<double, double>> knots;
    for (const auto& k : node) {
        knots.emplace_back(k[0].as<double>(), k[1].as<double>());
    }
    return RadialDistribution(std::move(knots));
}

YAML::Node write_vec3(const Vec3& v) {
    YAML::Node n(YAML::NodeType::Sequence);
    n.push_back(v.x);
    n.push_back(v.y);
    n.push_back(v.z);
    n.SetStyle(YAML::EmitterStyle::Flow);
    return n;
}

YAML::Node write_distribution(const RadialDistribution& d) {
    YAML::Node n(YAML::NodeType::Sequence);
    for (const auto& [r, v] : d.knots()) {
        YAML::Node k(YAML::NodeType::Sequence);
        k.push_back(r);
        k.push_back(v);
        k.SetStyle(YAML::EmitterStyle::Flow);
        n.push_back(k);
    }
    return n;
}

}  // namespace

AircraftConfig load_aircraft_config(const std::string& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path);
    } catch (const YAML::Exception& e) {
        throw std::runtime_error("cannot read aircraft config '" + path + "': " + e.what());
    }
    AircraftConfig c = AircraftConfig::nominal();
    try {
        const auto wing = root["wing"];
        read(wing, "span", c.wing_span);
        read(wing, "chord", c.wing_chord);
        read(wing, "panels_spanwise", c.wing_panels_spanwise);
        read(wing, "panels_chordwise", c.wing_panels_chordwise);

        const auto tail = root["tail"];
        read(tail, "span", c.tail_span);
        read(tail, "chord", c.tail_chord);
        read(tail, "arm", c.tail_arm);
        read(tail, "height", c.tail_height);
        read(tail, "elevator_chord_fraction", c.elevator_chord_fraction);
        read(tail, "panels_spanwise", c.tail_panels_spanwise);
        read(tail, "panels_chordwise", c.tail_panels_chordwise);

        const auto ref = root["reference"];
        read(ref, "area", c.ref_area);
        read(ref, "span", c.ref_span);
        read(ref, "chord", c.ref_chord);
        if (ref && ref["moment_point"]) {
            c.moment_reference = read_vec3(ref["moment_point"]);
        }
        read(root["air"], "density", c.rho);

        if (const auto props = root["props"]) {
            c.props.clear();
            for (const auto& p : props) {
                PropellerDisc d;
                d.name = p["name"].as<std::string>();
                d.group = prop_group_from_string(p["group"].as<std::string>());
                d.hub = read_vec3(p["hub"]);
                if (p["axis"]) {
                    d.axis = read_vec3(p["axis"]);
                }
                read(p, "radius", d.radius);
                read(p, "blades", d.blade_count);
                read(p, "spin", d.spin_direction);
                read(p, "tiltable", d.tiltable);
                read(p, "hub_fraction", d.hub_fraction);
                read(p, "stations", d.stations);
                d.chord = p["chord"] ? read_distribution(p["chord"])
                                     : RadialDistribution::linear(d.hub_fraction, 0.12, 0.12);
                d.twist = p["twist"] ? read_distribution(p["twist"])
                                     : RadialDistribution::linear(d.hub_fraction, 30.0, 12.0);
                c.props.push_back(std::move(d));
            }
        }
    } catch (const YAML::Exception& e) {
        throw std::runtime_error("malformed aircraft config '" + path + "': " + e.what());
    }
    c.validate();
    return c;
}

void save_aircraft_config(const AircraftConfig& c, const std::string& path) {
    YAML::Node root;
    root["wing"]["span"] = c.wing_span;
    root["wing"]["chord"] = c.wing_chord;
    root["wing"]["panels_spanwise"] = c.wing_panels_spanwise;
    root["wing"]["panels_chordwise"] = c.wing_panels_chordwise;
    root["tail"]["span"] = c.tail_span;
    root["tail"]["chord"] = c.tail_chord;
    root["tail"]["arm"] = c.tail_arm;
    root["tail"]["height"] = c.tail_height;
    root["tail"]["elevator_chord_fraction"] = c.elevator_chord_fraction;
    root["tail"]["panels_spanwise"] = c.tail_panels_spanwise;
    root["tail"]["panels_chordwise"] = c.tail_panels_chordwise;
    root["reference"]["area"] = c.ref_area;
    root["reference"]["span"] = c.ref_span;
    root["reference"]["chord"] = c.ref_chord;
    root["reference"]["moment_point"] = write_vec3(c.moment_reference);
    root["air"]["density"] = c.rho;
    for (const auto& d : c.props) {
        YAML::Node p;
        p["name"] = d.name;
        p["group"] = to_string(d.group);
        p["hub"] = write_vec3(d.hub);
        p["axis"] = write_vec3(d.axis);
        p["radius"] = d.radius;
        p["blades"] = d.blade_count;
        p["spin"] = d.spin_direction;
        p["tiltable"] = d.tiltable;
        p["hub_fraction"] = d.hub_fraction;
        p["stations"] = d.stations;
        p["chord"] = write_distribution(d.chord);
        p["twist"] = write_distribution(d.twist);
        root["props"].push_back(p);
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write aircraft config '" + path + "'");
    }
    YAML::Emitter em;
    em.SetDoublePrecision(17);
    em << root;
    out << em.c_str() << '\n';
}

}  // namespace vtol::geometry
