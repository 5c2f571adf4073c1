#pragma once

#include <array>
#include <cmath>
#include <string>

namespace vtol {

inline constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Flight condition and control inputs. Angles in degrees, speeds in m/s,
/// rotor speeds in rev/min. Sideslip is carried but fixed at zero in the study.
struct FlightState {
    double v = 0.0;
    double alpha = 0.0;
    double omega_star = 0.0;
    double omega_port = 0.0;
    double theta_star = 0.0;
    double theta_port = 0.0;
    double theta_elev = 0.0;
    double beta = 0.0;

    static constexpr int kInputs = 7;
    [[nodiscard]] std::array<double, kInputs> as_array() const {
        return {v, alpha, omega_star, omega_port, theta_star, theta_port, theta_elev};
    }
    static FlightState from_array(const std::array<double, kInputs>& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], 0.0};
    }
    friend bool operator==(const FlightState&, const FlightState&) = default;
};

/// Closed per-input sampling intervals.
struct Bounds {
    std::array<double, FlightState::kInputs> lower{};
    std::array<double, FlightState::kInputs> upper{};

    static Bounds study() {
        return {{0.0, -15.0, 4000.0, 4000.0, 0.0, 0.0, -15.0}, {45.0, 15.0, 10000.0, 10000.0, 110.0, 110.0, 15.0}};
    }
    [[nodiscard]] bool contains(const FlightState& f) const {
        const auto x = f.as_array();
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!(x[i] >= lower[i] && x[i] <= upper[i])) {
                return false;
            }
        }
        return true;
    }
};

inline constexpr std::array<const char*, FlightState::kInputs> kInputNames = {
    "v", "alpha", "omega_star", "omega_port", "theta_star", "theta_port", "theta_elev"};

struct AeroCoefficients {
    double CL = 0.0;
    double CD = 0.0;
    double Cl = 0.0;
    double Cm = 0.0;

    static constexpr int kOutputs = 4;
    [[nodiscard]] std::array<double, kOutputs> as_array() const { return {CL, CD, Cl, Cm}; }
    static AeroCoefficients from_array(const std::array<double, kOutputs>& a) {
        return {a[0], a[1], a[2], a[3]};
    }
    [[nodiscard]] bool finite() const {
        return std::isfinite(CL) && std::isfinite(CD) && std::isfinite(Cl) && std::isfinite(Cm);
    }
    friend bool operator==(const AeroCoefficients&, const AeroCoefficients&) = default;
};

inline constexpr std::array<const char*, AeroCoefficients::kOutputs> kOutputNames = {"CL", "CD",
                                                                                     "Cl", "Cm"};

}  // namespace vtol
