// Fixed-length instance descriptors, compared by Euclidean distance.
// The handcrafted geometric engine lives here; the trainable point-set
// embedding is in embedding.hpp.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "instaloc/geometry.hpp"
#include "instaloc/instance.hpp"
#include "instaloc/random.hpp"

namespace instaloc {

struct Descriptor {
    std::vector<double> values;

    size_t dim() const { return values.size(); }

    bool is_finite() const {
        for (const double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline double descriptor_distance(const Descriptor& a, const Descriptor& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("descriptor_distance: dimension mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.dim(); ++i) {
        const double d = a.values[i] - b.values[i];
        s += d * d;
    }
    return std::sqrt(s);
}

constexpr size_t kDefaultDescriptorDim = 16;

/// Points translated so their centroid sits at the origin.
inline std::vector<Point3> normalize_instance(const ObjectInstance& inst) {
    if (inst.size() == 0) throw std::invalid_argument("normalize_instance: empty instance");
    const Point3 c = centroid_of(inst.points.points);
    std::vector<Point3> out;
    out.reserve(inst.size());
    for (const auto& p : inst.points.points) out.push_back(p - c);
    return out;
}

/// Train-time variant: centering plus a random yaw rotation.
inline std::vector<Point3> normalize_instance(const ObjectInstance& inst, Rng& rng) {
    std::vector<Point3> out = normalize_instance(inst);
    const Rotation r = Rotation::yaw(rng.uniform(0.0, 2.0 * kPi));
    for (auto& p : out) p = r.apply(p);
    return out;
}

/// Handcrafted baseline descriptor from centered points: normalized
/// covariance eigenvalues, eigenvalue shape ratios, principal-frame extents
/// (sorted), log point count, scaled class index; zero-padded to `dim`.
/// Rotation- and translation-invariant.
inline Descriptor geometric_descriptor(const ObjectInstance& inst,
                                       size_t dim = kDefaultDescriptorDim) {
    if (inst.size() == 0) throw std::invalid_argument("geometric_descriptor: empty instance");
    if (dim < 11) throw std::invalid_argument("geometric_descriptor: dim must be >= 11");
    const std::vector<Point3> centered = normalize_instance(inst);

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : centered) {
        const Eigen::Vector3d v(p.x, p.y, p.z);
        cov += v * v.transpose();
    }
    cov /= static_cast<double>(centered.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    // ascending from Eigen; flip to lambda1 >= lambda2 >= lambda3
    Eigen::Vector3d lambda = eig.eigenvalues().reverse();
    Eigen::Matrix3d axes = eig.eigenvectors().rowwise().reverse();
    for (int i = 0; i < 3; ++i) lambda[i] = std::max(lambda[i], 0.0);

    Descriptor d;
    d.values.assign(dim, 0.0);
    const double sum = lambda.sum();
    if (sum > 1e-12) {
        d.values[0] = lambda[0] / sum;
        d.values[1] = lambda[1] / sum;
        d.values[2] = lambda[2] / sum;
    }
    if (lambda[0] > 1e-12) {
        d.values[3] = (lambda[0] - lambda[1]) / lambda[0];  // linearity
        d.values[4] = (lambda[1] - lambda[2]) / lambda[0];  // planarity
        d.values[5] = lambda[2] / lambda[0];                // sphericity
    }

    // extents along the principal axes, sorted descending
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
    Eigen::Vector3d hi = Eigen::Vector3d::Constant(std::numeric_limits<double>::lowest());
    for (const auto& p : centered) {
        const Eigen::Vector3d proj = axes.transpose() * Eigen::Vector3d(p.x, p.y, p.z);
        lo = lo.cwiseMin(proj);
        hi = hi.cwiseMax(proj);
    }
    Eigen::Vector3d ext = hi - lo;
    std::sort(ext.data(), ext.data() + 3, std::greater<double>());
    d.values[6] = ext[0];
    d.values[7] = ext[1];
    d.values[8] = ext[2];

    d.values[9] = std::log1p(static_cast<double>(inst.size()));
    d.values[10] = static_cast<double>(inst.cls) / (kSemanticClassCount - 1);
    return d;
}

}  // namespace instaloc
