// Core geometric types: 3-vectors, rotation matrices, rigid transforms and
// point clouds. Everything here is an immutable value type.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

namespace instaloc {

constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    static Vec3 zero() { return {0.0, 0.0, 0.0}; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }
    Vec3 normalized() const {
        const double n = norm();
        return n > 0.0 ? *this / n : Vec3::zero();
    }
    double distance_to(const Vec3& o) const { return (*this - o).norm(); }

    bool is_finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }

    bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

using Point3 = Vec3;

/// Row-major 3x3 matrix. Only what rotations and covariances need.
struct Mat3 {
    std::array<double, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return r;
    }

    double& operator()(int r, int c) { return m[static_cast<size_t>(3 * r + c)]; }
    double operator()(int r, int c) const { return m[static_cast<size_t>(3 * r + c)]; }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }

    double trace() const { return m[0] + m[4] + m[8]; }

    double determinant() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    bool operator==(const Mat3& o) const { return m == o.m; }
};

/// Proper rotation (member of SO(3)), stored as a row-major matrix.
class Rotation {
  public:
    Rotation() : mat_(Mat3::identity()) {}

    static Rotation identity() { return Rotation(); }

    /// Wraps a matrix that is already orthonormal with det +1.
    /// Throws if the input violates the SO(3) invariants beyond `tol`.
    static Rotation from_matrix(const Mat3& m, double tol = 1e-6) {
        Rotation r;
        r.mat_ = m;
        if (!r.is_valid(tol)) throw std::invalid_argument("Rotation: matrix is not in SO(3)");
        return r;
    }

    static Rotation from_axis_angle(const Vec3& axis, double angle_rad) {
        const Vec3 u = axis.normalized();
        const double c = std::cos(angle_rad), s = std::sin(angle_rad), t = 1.0 - c;
        Rotation r;
        r.mat_.m = {t * u.x * u.x + c,       t * u.x * u.y - s * u.z, t * u.x * u.z + s * u.y,
                    t * u.x * u.y + s * u.z, t * u.y * u.y + c,       t * u.y * u.z - s * u.x,
                    t * u.x * u.z - s * u.y, t * u.y * u.z + s * u.x, t * u.z * u.z + c};
        return r;
    }

    static Rotation yaw(double angle_rad) { return from_axis_angle({0, 0, 1}, angle_rad); }
    static Rotation pitch(double angle_rad) { return from_axis_angle({0, 1, 0}, angle_rad); }
    static Rotation roll(double angle_rad) { return from_axis_angle({1, 0, 0}, angle_rad); }

    const Mat3& matrix() const { return mat_; }

    Vec3 apply(const Vec3& v) const { return mat_ * v; }

    Rotation operator*(const Rotation& o) const {
        Rotation r;
        r.mat_ = mat_ * o.mat_;
        return r;
    }

    Rotation inverse() const {
        Rotation r;
        r.mat_ = mat_.transposed();
        return r;
    }

    bool is_valid(double tol = 1e-9) const {
        const Mat3 rtr = mat_.transposed() * mat_;
        const Mat3 id = Mat3::identity();
        for (int i = 0; i < 9; ++i)
            if (std::abs(rtr.m[static_cast<size_t>(i)] - id.m[static_cast<size_t>(i)]) > tol)
                return false;
        return std::abs(mat_.determinant() - 1.0) <= tol;
    }

    bool operator==(const Rotation& o) const { return mat_ == o.mat_; }

  private:
    Mat3 mat_;
};

/// Geodesic angle between two rotations, in degrees.
/// The arccos argument is clamped to [-1, 1] against floating-point drift
/// near 0 and 180 degrees.
inline double rotation_angle_between(const Rotation& a, const Rotation& b) {
    const double tr = (a.matrix().transposed() * b.matrix()).trace();
    const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
    return rad2deg(std::acos(c));
}

/// Rigid transform in SE(3): p -> R*p + t.
struct Pose {
    Rotation rotation;
    Vec3 translation;

    Pose() = default;
    Pose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

    static Pose identity() { return {}; }
    static Pose from_translation(const Vec3& t) { return {Rotation::identity(), t}; }

    Vec3 apply(const Vec3& p) const { return rotation.apply(p) + translation; }

    /// Composition: (a * b)(p) == a(b(p)).
    Pose operator*(const Pose& o) const {
        return {rotation * o.rotation, rotation.apply(o.translation) + translation};
    }

    Pose inverse() const {
        const Rotation rinv = rotation.inverse();
        return {rinv, -rinv.apply(translation)};
    }
};

struct PointCloud {
    std::vector<Point3> points;
    std::optional<Point3> sensor_origin;

    size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

inline PointCloud transform_cloud(const Pose& pose, const PointCloud& cloud) {
    PointCloud out;
    out.points.reserve(cloud.points.size());
    for (const auto& p : cloud.points) out.points.push_back(pose.apply(p));
    if (cloud.sensor_origin) out.sensor_origin = pose.apply(*cloud.sensor_origin);
    return out;
}

inline Point3 centroid_of(const std::vector<Point3>& points) {
    Vec3 sum = Vec3::zero();
    for (const auto& p : points) sum += p;
    return points.empty() ? sum : sum / static_cast<double>(points.size());
}

}  // namespace instaloc
