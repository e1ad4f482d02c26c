// Instance segmentation: voxel downsampling plus per-class single-linkage
// clustering under the range-adaptive radius rule. Works on ground-truth or
// perturbed semantic labels; instance ids in the input are ignored.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "instaloc/geometry.hpp"
#include "instaloc/instance.hpp"
#include "instaloc/kdtree.hpp"
#include "instaloc/lidar.hpp"

namespace instaloc {

struct SegmentationParams {
    double voxel_size = 0.02;
    double alpha = 4.0;  // scale factor on the adaptive radius
    size_t min_instance_points = 50;
    int beam_count = 128;
    double vertical_fov = deg2rad(90.0);

    static SegmentationParams from_lidar(const LidarConfig& cfg) {
        SegmentationParams p;
        p.beam_count = cfg.beam_count;
        p.vertical_fov = cfg.vertical_fov;
        return p;
    }

    void validate() const {
        if (voxel_size <= 0.0) throw std::invalid_argument("SegmentationParams: voxel_size <= 0");
        if (alpha <= 0.0) throw std::invalid_argument("SegmentationParams: alpha <= 0");
        if (min_instance_points < 1)
            throw std::invalid_argument("SegmentationParams: min_instance_points < 1");
        if (beam_count < 2) throw std::invalid_argument("SegmentationParams: beam_count < 2");
        if (!(vertical_fov > 0.0 && vertical_fov < kPi))
            throw std::invalid_argument("SegmentationParams: vertical_fov out of range");
    }
};

/// Clustering radius for a point: alpha * d(p, origin) * tan(fov / beams).
/// Grows with range to track the widening gap between adjacent beams.
inline double adaptive_radius(const Point3& p, const Point3& origin,
                              const SegmentationParams& params) {
    return params.alpha * (p - origin).norm() * std::tan(params.vertical_fov / params.beam_count);
}

// ---------------------------------------------------------------------------
// Voxel downsampling
// ---------------------------------------------------------------------------

/// One representative point per occupied voxel: the centroid of its members,
/// labels by majority vote (ties to the lowest class index / lowest id).
/// Output voxels appear in first-occurrence order of the input.
inline LabeledScan voxel_downsample(const LabeledScan& scan, double voxel_size) {
    if (voxel_size <= 0.0) throw std::invalid_argument("voxel_downsample: voxel_size <= 0");

    struct VoxelAccum {
        Vec3 sum = Vec3::zero();
        size_t count = 0;
        std::map<int32_t, int> semantic_votes;
        std::map<int32_t, int> instance_votes;
    };

    auto voxel_key = [voxel_size](const Point3& p) {
        const auto qx = static_cast<int64_t>(std::floor(p.x / voxel_size));
        const auto qy = static_cast<int64_t>(std::floor(p.y / voxel_size));
        const auto qz = static_cast<int64_t>(std::floor(p.z / voxel_size));
        // pack into one key; 21 bits per axis covers +-10^6 voxels
        const uint64_t ux = static_cast<uint64_t>(qx + (1LL << 20));
        const uint64_t uy = static_cast<uint64_t>(qy + (1LL << 20));
        const uint64_t uz = static_cast<uint64_t>(qz + (1LL << 20));
        return (ux << 42) | (uy << 21) | uz;
    };

    std::unordered_map<uint64_t, size_t> slot_of;
    std::vector<VoxelAccum> voxels;
    slot_of.reserve(scan.size());
    for (size_t i = 0; i < scan.size(); ++i) {
        const uint64_t key = voxel_key(scan.cloud.points[i]);
        auto [it, inserted] = slot_of.try_emplace(key, voxels.size());
        if (inserted) voxels.emplace_back();
        VoxelAccum& v = voxels[it->second];
        v.sum += scan.cloud.points[i];
        v.count++;
        v.semantic_votes[static_cast<int32_t>(scan.semantic[i])]++;
        v.instance_votes[scan.instance[i]]++;
    }

    auto majority = [](const std::map<int32_t, int>& votes) {
        int32_t best_key = 0;
        int best_count = -1;
        for (const auto& [key, count] : votes) {  // map order = ascending key, so ties go low
            if (count > best_count) {
                best_count = count;
                best_key = key;
            }
        }
        return best_key;
    };

    LabeledScan out;
    out.cloud.sensor_origin = scan.cloud.sensor_origin;
    out.sensor_pose = scan.sensor_pose;
    out.config = scan.config;
    out.cloud.points.reserve(voxels.size());
    for (const auto& v : voxels) {
        out.cloud.points.push_back(v.sum / static_cast<double>(v.count));
        out.semantic.push_back(semantic_class_from_index(majority(v.semantic_votes)));
        out.instance.push_back(majority(v.instance_votes));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

namespace detail {

struct UnionFind {
    std::vector<size_t> parent;
    explicit UnionFind(size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    size_t find(size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(size_t a, size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace detail

/// Single-linkage clustering within each semantic class: points i, j connect
/// iff |p_i - p_j| <= max(rho_i, rho_j). Clusters below the size threshold
/// are dropped. Output is ordered by (class index, smallest contained point
/// index) with sequential instance ids; `point_indices` index into `scan`.
inline std::vector<ObjectInstance> segment_instances(const LabeledScan& scan,
                                                     const SegmentationParams& params,
                                                     int32_t source_scan_id = 0) {
    params.validate();
    if (scan.size() == 0) throw std::invalid_argument("segment_instances: empty scan");
    const Point3 origin = scan.cloud.sensor_origin.value_or(Point3{0, 0, 0});

    std::vector<ObjectInstance> result;
    for (int32_t cls = 0; cls < kSemanticClassCount; ++cls) {
        std::vector<int32_t> members;  // indices into the scan
        for (size_t i = 0; i < scan.size(); ++i)
            if (static_cast<int32_t>(scan.semantic[i]) == cls)
                members.push_back(static_cast<int32_t>(i));
        if (members.empty()) continue;

        std::vector<Point3> pts;
        std::vector<double> radius;
        pts.reserve(members.size());
        for (const int32_t m : members) {
            pts.push_back(scan.cloud.points[static_cast<size_t>(m)]);
            radius.push_back(adaptive_radius(pts.back(), origin, params));
        }

        // Searching each point with its own radius and linking everything it
        // finds realizes the max(rho_i, rho_j) rule over the two passes.
        KdTree3 tree(pts);
        detail::UnionFind uf(pts.size());
        for (size_t i = 0; i < pts.size(); ++i) {
            for (const size_t j : tree.radius_search(pts[i], radius[i]))
                if (j != i) uf.unite(i, j);
        }

        std::map<size_t, std::vector<int32_t>> clusters;  // root -> scan indices
        for (size_t i = 0; i < pts.size(); ++i) clusters[uf.find(i)].push_back(members[i]);
        // map keyed by root = smallest member local index, so iteration order
        // is already "smallest contained point index" within the class
        for (auto& [root, indices] : clusters) {
            if (indices.size() < params.min_instance_points) continue;
            std::vector<Point3> cluster_pts;
            cluster_pts.reserve(indices.size());
            for (const int32_t idx : indices)
                cluster_pts.push_back(scan.cloud.points[static_cast<size_t>(idx)]);
            ObjectInstance inst =
                make_instance(std::move(cluster_pts), static_cast<SemanticClass>(cls),
                              static_cast<int32_t>(result.size()), source_scan_id, indices);
            result.push_back(std::move(inst));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Quality against ground truth
// ---------------------------------------------------------------------------

struct SegmentationQuality {
    std::array<double, kSemanticClassCount> per_class_ap;  // NaN = class absent from truth
    double mean_ap = 0.0;                                  // over defined classes
};

/// Average precision per class with greedy IoU matching. Predictions are
/// ranked by point count (descending); a prediction is a true positive when
/// its best-IoU unmatched ground-truth instance of the same class reaches the
/// threshold. Instances must carry point_indices into the same scan.
inline SegmentationQuality segmentation_quality(const std::vector<ObjectInstance>& predicted,
                                                const LabeledScan& truth,
                                                double iou_threshold = 0.5) {
    const std::vector<ObjectInstance> truth_instances = instances_from_labels(truth, 1);

    auto iou = [](const std::vector<int32_t>& a, const std::vector<int32_t>& b) {
        size_t inter = 0, ia = 0, ib = 0;  // both sorted ascending
        while (ia < a.size() && ib < b.size()) {
            if (a[ia] == b[ib]) {
                ++inter;
                ++ia;
                ++ib;
            } else if (a[ia] < b[ib]) {
                ++ia;
            } else {
                ++ib;
            }
        }
        const size_t uni = a.size() + b.size() - inter;
        return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    };

    SegmentationQuality q;
    double ap_sum = 0.0;
    int defined = 0;
    for (int cls = 0; cls < kSemanticClassCount; ++cls) {
        std::vector<const ObjectInstance*> preds;
        for (const auto& p : predicted)
            if (static_cast<int>(p.cls) == cls) preds.push_back(&p);
        std::vector<const ObjectInstance*> truths;
        for (const auto& t : truth_instances)
            if (static_cast<int>(t.cls) == cls) truths.push_back(&t);

        if (truths.empty()) {
            q.per_class_ap[static_cast<size_t>(cls)] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        std::sort(preds.begin(), preds.end(), [](const ObjectInstance* a, const ObjectInstance* b) {
            if (a->size() != b->size()) return a->size() > b->size();
            return a->instance_id < b->instance_id;
        });

        std::vector<bool> truth_used(truths.size(), false);
        double ap = 0.0;
        int tp = 0;
        for (size_t rank = 0; rank < preds.size(); ++rank) {
            double best_iou = 0.0;
            size_t best_t = truths.size();
            for (size_t t = 0; t < truths.size(); ++t) {
                if (truth_used[t]) continue;
                const double v = iou(preds[rank]->point_indices, truths[t]->point_indices);
                if (v > best_iou) {
                    best_iou = v;
                    best_t = t;
                }
            }
            if (best_t < truths.size() && best_iou >= iou_threshold) {
                truth_used[best_t] = true;
                ++tp;
                ap += static_cast<double>(tp) / static_cast<double>(rank + 1);
            }
        }
        ap /= static_cast<double>(truths.size());
        q.per_class_ap[static_cast<size_t>(cls)] = ap;
        ap_sum += ap;
        ++defined;
    }
    q.mean_ap = defined > 0 ? ap_sum / defined : std::numeric_limits<double>::quiet_NaN();
    return q;
}

// ---------------------------------------------------------------------------
// Instance directory output (PLY per instance + JSON manifest)
// ---------------------------------------------------------------------------

inline void save_instances(const std::vector<ObjectInstance>& instances, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& inst : instances) {
        char name[64];
        std::snprintf(name, sizeof(name), "instance_%04d.ply", inst.instance_id);
        const std::vector<int32_t> sem(inst.size(), static_cast<int32_t>(inst.cls));
        const std::vector<int32_t> ids(inst.size(), inst.instance_id);
        write_ply_file((std::filesystem::path(dir) / name).string(), inst.points.points, &sem, &ids);
        manifest.push_back({{"instance_id", inst.instance_id},
                            {"class", to_string(inst.cls)},
                            {"centroid", {inst.centroid.x, inst.centroid.y, inst.centroid.z}},
                            {"point_count", inst.size()},
                            {"source_scan_id", inst.source_scan_id},
                            {"file", name}});
    }
    std::ofstream f(std::filesystem::path(dir) / "instances.json");
    if (!f) throw std::runtime_error("save_instances: cannot write manifest in " + dir);
    f << manifest.dump(2) << '\n';
}

}  // namespace instaloc
