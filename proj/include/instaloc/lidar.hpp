// Simulated spinning lidar: one ray per (beam, azimuth step), range noise
// along the ray, per-point semantic class and object id from the hit object.
//
// Scan points live in the sensor frame; `sensor_pose` maps them into the
// world frame and doubles as the ground-truth pose for evaluation.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "instaloc/geometry.hpp"
#include "instaloc/ply_io.hpp"
#include "instaloc/random.hpp"
#include "instaloc/scene.hpp"
#include "instaloc/semantics.hpp"

namespace instaloc {

struct LidarConfig {
    int beam_count = 128;
    double vertical_fov = deg2rad(90.0);
    int azimuth_steps = 512;          // rays per revolution
    double max_range = 50.0;
    double range_noise_sigma = 0.01;  // meters, Gaussian along the ray

    void validate() const {
        if (beam_count < 2) throw std::invalid_argument("LidarConfig: beam_count must be >= 2");
        if (!(vertical_fov > 0.0 && vertical_fov < kPi))
            throw std::invalid_argument("LidarConfig: vertical_fov must be in (0, pi)");
        if (azimuth_steps < 1) throw std::invalid_argument("LidarConfig: azimuth_steps must be >= 1");
        if (max_range <= 0.0) throw std::invalid_argument("LidarConfig: max_range must be > 0");
        if (range_noise_sigma < 0.0)
            throw std::invalid_argument("LidarConfig: range_noise_sigma must be >= 0");
    }
};

struct LabeledScan {
    PointCloud cloud;  // sensor frame, sensor at the origin
    std::vector<SemanticClass> semantic;
    std::vector<int32_t> instance;  // scene object ids
    Pose sensor_pose;               // sensor frame -> world frame
    LidarConfig config;

    size_t size() const { return cloud.size(); }
};

/// Ray direction in the sensor frame for (elevation, azimuth).
inline Vec3 lidar_ray_direction(double elevation, double azimuth) {
    const double ce = std::cos(elevation);
    return {ce * std::cos(azimuth), ce * std::sin(azimuth), std::sin(elevation)};
}

inline LabeledScan raycast_scan(const Scene& scene, const Pose& sensor_pose,
                                const LidarConfig& config, uint64_t seed) {
    config.validate();
    if (!scene.bounds.contains(sensor_pose.translation))
        throw std::invalid_argument("raycast_scan: sensor outside world bounds");

    LabeledScan scan;
    scan.sensor_pose = sensor_pose;
    scan.config = config;
    scan.cloud.sensor_origin = Point3{0, 0, 0};

    const Vec3 origin = sensor_pose.translation;
    // Rays are emitted beam-major then azimuth so the output ordering is
    // fixed regardless of how the loop is executed.
    for (int b = 0; b < config.beam_count; ++b) {
        const double elevation =
            -config.vertical_fov / 2.0 +
            config.vertical_fov * static_cast<double>(b) / static_cast<double>(config.beam_count - 1);
        for (int a = 0; a < config.azimuth_steps; ++a) {
            const double azimuth =
                2.0 * kPi * static_cast<double>(a) / static_cast<double>(config.azimuth_steps);
            const Vec3 dir_sensor = lidar_ray_direction(elevation, azimuth);
            const Vec3 dir_world = sensor_pose.rotation.apply(dir_sensor);

            double best_t = config.max_range;
            const SceneObject* hit = nullptr;
            for (const auto& obj : scene.objects) {
                const auto t = ray_object_intersect(origin, dir_world, obj);
                if (t && *t <= best_t) {
                    best_t = *t;
                    hit = &obj;
                }
            }
            if (!hit) continue;

            double range = best_t;
            if (config.range_noise_sigma > 0.0) {
                const uint64_t ray_index =
                    static_cast<uint64_t>(b) * static_cast<uint64_t>(config.azimuth_steps) +
                    static_cast<uint64_t>(a);
                range += config.range_noise_sigma * hashed_gaussian(seed, ray_index);
                if (range <= 0.0 || range > config.max_range) continue;
            }
            scan.cloud.points.push_back(dir_sensor * range);
            scan.semantic.push_back(hit->cls);
            scan.instance.push_back(hit->id);
        }
    }
    return scan;
}

/// Replaces each point's semantic label with a uniformly random class with
/// probability `flip_rate`. Instance ids are untouched.
inline LabeledScan perturb_labels(const LabeledScan& scan, double flip_rate, uint64_t seed) {
    if (flip_rate < 0.0 || flip_rate > 1.0)
        throw std::invalid_argument("perturb_labels: flip_rate must be in [0, 1]");
    LabeledScan out = scan;
    if (flip_rate == 0.0) return out;
    Rng rng(hash_combine(0xf11b5ULL, seed));
    for (auto& s : out.semantic) {
        if (rng.uniform() < flip_rate)
            s = static_cast<SemanticClass>(rng.uniform_index(kSemanticClassCount));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scan I/O (labeled ASCII PLY)
// ---------------------------------------------------------------------------

inline std::string scan_to_ply_string(const LabeledScan& scan) {
    std::vector<int32_t> sem(scan.semantic.size());
    for (size_t i = 0; i < sem.size(); ++i) sem[i] = static_cast<int32_t>(scan.semantic[i]);
    return ply_to_string(scan.cloud.points, &sem, &scan.instance);
}

inline void save_scan(const LabeledScan& scan, const std::string& path) {
    std::vector<int32_t> sem(scan.semantic.size());
    for (size_t i = 0; i < sem.size(); ++i) sem[i] = static_cast<int32_t>(scan.semantic[i]);
    write_ply_file(path, scan.cloud.points, &sem, &scan.instance);
}

/// Loads a labeled PLY as a scan. The file does not carry the sensor pose or
/// lidar metadata; callers supply them (poses come from poses.csv).
inline LabeledScan load_scan(const std::string& path, const Pose& sensor_pose = Pose(),
                             const LidarConfig& config = LidarConfig()) {
    const PlyCloud ply = read_ply_file(path);
    if (!ply.has_labels())
        throw std::runtime_error("load_scan: " + path + " lacks semantic/instance properties");
    LabeledScan scan;
    scan.cloud.points = ply.points;
    scan.cloud.sensor_origin = Point3{0, 0, 0};
    scan.semantic.reserve(ply.semantic.size());
    for (const int32_t s : ply.semantic) scan.semantic.push_back(semantic_class_from_index(s));
    scan.instance = ply.instance;
    scan.sensor_pose = sensor_pose;
    scan.config = config;
    return scan;
}

}  // namespace instaloc
