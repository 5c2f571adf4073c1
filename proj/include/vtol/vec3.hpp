#pragma once

#include <cmath>

#include "vtol/autodiff.hpp"

namespace vtol {

// Scalar helpers shared by the double and tape instantiations of the
// generic physics code.
inline double value_of(double x) { return x; }
inline double value_of(const ad::Var& x) { return x.value(); }

template <class T>
struct Vec3T {
    T x{};
    T y{};
    T z{};

    Vec3T() = default;
    Vec3T(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

    Vec3T operator+(const Vec3T& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3T operator-(const Vec3T& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3T& operator+=(const Vec3T& o) {
        x = x + o.x;
        y = y + o.y;
        z = z + o.z;
        return *this;
    }
    template <class S>
    Vec3T operator*(const S& s) const {
        return {x * s, y * s, z * s};
    }
    [[nodiscard]] Vec3T<double> values() const { return {value_of(x), value_of(y), value_of(z)}; }
};

using Vec3 = Vec3T<double>;

template <class T>
Vec3T<T> operator-(const Vec3T<T>& a) {
    return {-a.x, -a.y, -a.z};
}

template <class T, class U>
auto dot(const Vec3T<T>& a, const Vec3T<U>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 normalized(const Vec3& a) { return a * (1.0 / norm(a)); }

}  // namespace vtol
