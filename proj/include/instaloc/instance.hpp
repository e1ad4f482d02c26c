#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "instaloc/geometry.hpp"
#include "instaloc/lidar.hpp"
#include "instaloc/semantics.hpp"

namespace instaloc {

/// A segmented object instance: one physical object's points from one scan.
struct ObjectInstance {
    PointCloud points;
    SemanticClass cls = SemanticClass::clutter;
    Point3 centroid;
    int32_t source_scan_id = 0;
    int32_t instance_id = 0;
    std::vector<int32_t> point_indices;  // indices into the source scan, when known

    size_t size() const { return points.size(); }
};

inline ObjectInstance make_instance(std::vector<Point3> pts, SemanticClass cls,
                                    int32_t instance_id = 0, int32_t source_scan_id = 0,
                                    std::vector<int32_t> indices = {}) {
    ObjectInstance inst;
    inst.points.points = std::move(pts);
    inst.cls = cls;
    inst.centroid = centroid_of(inst.points.points);
    inst.instance_id = instance_id;
    inst.source_scan_id = source_scan_id;
    inst.point_indices = std::move(indices);
    return inst;
}

/// Ground-truth instances: group scan points by their object id. The class of
/// each instance is the majority semantic label among its points (they agree
/// exactly when labels are unperturbed). Groups below `min_points` are
/// dropped. Ordered by object id.
inline std::vector<ObjectInstance> instances_from_labels(const LabeledScan& scan,
                                                         size_t min_points = 1,
                                                         int32_t source_scan_id = 0) {
    std::map<int32_t, std::vector<int32_t>> by_id;
    for (size_t i = 0; i < scan.size(); ++i)
        by_id[scan.instance[i]].push_back(static_cast<int32_t>(i));

    std::vector<ObjectInstance> out;
    for (const auto& [object_id, indices] : by_id) {
        if (indices.size() < min_points) continue;
        std::vector<int> votes(kSemanticClassCount, 0);
        std::vector<Point3> pts;
        pts.reserve(indices.size());
        for (const int32_t i : indices) {
            pts.push_back(scan.cloud.points[static_cast<size_t>(i)]);
            votes[static_cast<size_t>(scan.semantic[static_cast<size_t>(i)])]++;
        }
        int best = 0;
        for (int c = 1; c < kSemanticClassCount; ++c)
            if (votes[static_cast<size_t>(c)] > votes[static_cast<size_t>(best)]) best = c;
        out.push_back(make_instance(std::move(pts), static_cast<SemanticClass>(best), object_id,
                                    source_scan_id, indices));
    }
    return out;
}

}  // namespace instaloc
