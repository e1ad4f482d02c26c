// Correspondence matching and 6-DoF pose recovery: descriptor kNN proposals,
// pairwise geometric-consistency grouping, and RANSAC over grouped instance
// centroids with closed-form rigid alignment.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "instaloc/engine.hpp"
#include "instaloc/map_database.hpp"
#include "instaloc/random.hpp"
#include "instaloc/segmentation.hpp"

namespace instaloc {

struct Correspondence {
    size_t query_index = 0;  // into the query instance list
    size_t map_index = 0;    // into map.entries
    double descriptor_distance = 0.0;
    Point3 query_centroid;  // query sensor frame
    Point3 map_centroid;    // map frame
};

struct MatchParams {
    size_t knn = 3;                    // candidate map entries per query instance
    double epsilon = 0.3;              // pairwise consistency slack, meters
    size_t tau = 4;                    // minimum consensus group size
    int ransac_iterations = 500;
    double ransac_inlier_radius = 0.3;  // meters
    bool class_filter = true;           // drop candidates with mismatched classes
    uint64_t seed = 0;

    void validate() const {
        if (knn < 1) throw std::invalid_argument("MatchParams: knn < 1");
        if (epsilon <= 0.0) throw std::invalid_argument("MatchParams: epsilon <= 0");
        if (tau < 3) throw std::invalid_argument("MatchParams: tau < 3");
        if (ransac_iterations < 1) throw std::invalid_argument("MatchParams: iterations < 1");
        if (ransac_inlier_radius <= 0.0)
            throw std::invalid_argument("MatchParams: inlier radius <= 0");
    }
};

/// Each query instance contributes its N nearest map entries; with the class
/// filter on, candidates whose semantic class differs are then dropped.
inline std::vector<Correspondence> propose_correspondences(
    const std::vector<ObjectInstance>& query, const std::vector<Descriptor>& query_descriptors,
    const InstanceMap& map, size_t n, bool class_filter = true) {
    if (query.size() != query_descriptors.size())
        throw std::invalid_argument("propose_correspondences: instance/descriptor count mismatch");
    if (map.empty()) throw std::invalid_argument("propose_correspondences: empty map");
    std::vector<Correspondence> out;
    for (size_t qi = 0; qi < query.size(); ++qi) {
        for (const KnnResult& r : knn_query(map, query_descriptors[qi], n)) {
            const MapEntry& e = map.entries[r.entry_index];
            if (class_filter && e.instance.cls != query[qi].cls) continue;
            Correspondence c;
            c.query_index = qi;
            c.map_index = r.entry_index;
            c.descriptor_distance = r.distance;
            c.query_centroid = query[qi].centroid;
            c.map_centroid = e.instance.centroid;
            out.push_back(c);
        }
    }
    return out;
}

/// Pairwise consistency against each seed correspondence: candidate c_m joins
/// c_n's group when | |q_n - q_m| - |m_n - m_m| | < epsilon (absolute-value
/// reading of the slack), with at most one correspondence per query instance
/// per group. Groups below tau are dropped; result sorted by size descending.
inline std::vector<std::vector<size_t>> consistency_group(const std::vector<Correspondence>& cands,
                                                          double epsilon, size_t tau) {
    if (epsilon <= 0.0) throw std::invalid_argument("consistency_group: epsilon <= 0");
    if (tau < 3) throw std::invalid_argument("consistency_group: tau < 3");

    std::vector<std::vector<size_t>> groups;
    std::set<std::vector<size_t>> seen;
    for (size_t s = 0; s < cands.size(); ++s) {
        std::vector<size_t> group{s};
        std::set<size_t> used_query{cands[s].query_index};
        for (size_t m = 0; m < cands.size(); ++m) {
            if (m == s || used_query.count(cands[m].query_index)) continue;
            const double dq = (cands[s].query_centroid - cands[m].query_centroid).norm();
            const double dm = (cands[s].map_centroid - cands[m].map_centroid).norm();
            if (std::abs(dq - dm) < epsilon) {
                group.push_back(m);
                used_query.insert(cands[m].query_index);
            }
        }
        if (group.size() < tau) continue;
        std::vector<size_t> key = group;
        std::sort(key.begin(), key.end());
        if (seen.insert(key).second) groups.push_back(std::move(group));
    }
    std::stable_sort(groups.begin(), groups.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    return groups;
}

/// Least-squares rigid transform mapping the first element of each pair onto
/// the second, via SVD of the cross-covariance with determinant correction.
/// Degenerate (fewer than 3 pairs, or collinear) -> nullopt.
inline std::optional<Pose> kabsch_align(const std::vector<std::pair<Point3, Point3>>& pairs) {
    if (pairs.size() < 3) return std::nullopt;
    Eigen::Vector3d qc = Eigen::Vector3d::Zero(), mc = Eigen::Vector3d::Zero();
    for (const auto& [q, m] : pairs) {
        qc += Eigen::Vector3d(q.x, q.y, q.z);
        mc += Eigen::Vector3d(m.x, m.y, m.z);
    }
    qc /= static_cast<double>(pairs.size());
    mc /= static_cast<double>(pairs.size());

    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    double scale = 0.0;
    for (const auto& [q, m] : pairs) {
        const Eigen::Vector3d dq = Eigen::Vector3d(q.x, q.y, q.z) - qc;
        const Eigen::Vector3d dm = Eigen::Vector3d(m.x, m.y, m.z) - mc;
        h += dq * dm.transpose();
        scale += dq.squaredNorm();
    }
    if (scale <= 1e-24) return std::nullopt;  // all query points coincide

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sv = svd.singularValues();
    // rank < 2 leaves a rotation about the common line unconstrained
    if (sv(1) <= 1e-9 * std::max(sv(0), 1e-300)) return std::nullopt;

    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
    const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
    const Eigen::Vector3d t = mc - r * qc;

    Mat3 rm;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rm(i, j) = r(i, j);
    return Pose(Rotation::from_matrix(rm), {t.x(), t.y(), t.z()});
}

enum class LocalizationStatus { localized, no_consensus, degenerate };

inline const char* to_string(LocalizationStatus s) {
    switch (s) {
        case LocalizationStatus::localized: return "localized";
        case LocalizationStatus::no_consensus: return "no-consensus";
        case LocalizationStatus::degenerate: return "degenerate";
    }
    return "unknown";
}

struct StageTimings {
    double segment_ms = 0.0;
    double describe_ms = 0.0;
    double match_ms = 0.0;
    double ransac_ms = 0.0;
    double total_ms = 0.0;
};

struct LocalizationResult {
    LocalizationStatus status = LocalizationStatus::no_consensus;
    Pose pose;  // query sensor frame -> map frame; valid iff localized
    std::vector<Correspondence> inliers;
    size_t consensus_group_size = 0;
    StageTimings timings;
};

/// RANSAC over one consensus group: minimal samples of 3 correspondences,
/// Kabsch fit, inlier count by centroid distance; the best model is refit on
/// its inliers. Deterministic for a fixed seed.
inline LocalizationResult ransac_pose(const std::vector<Correspondence>& cands,
                                      const std::vector<size_t>& group,
                                      const MatchParams& params) {
    params.validate();
    if (group.size() < params.tau)
        throw std::invalid_argument("ransac_pose: group smaller than tau");

    Rng rng(hash_combine(0xa45acULL, params.seed));
    LocalizationResult result;
    result.consensus_group_size = group.size();

    size_t best_count = 0;
    double best_residual = std::numeric_limits<double>::max();
    std::vector<size_t> best_inliers;
    std::optional<Pose> best_pose;
    bool any_valid_sample = false;

    for (int it = 0; it < params.ransac_iterations; ++it) {
        size_t a = rng.uniform_index(group.size());
        size_t b = rng.uniform_index(group.size());
        size_t c = rng.uniform_index(group.size());
        if (a == b || b == c || a == c) continue;
        const auto fit = kabsch_align({{cands[group[a]].query_centroid, cands[group[a]].map_centroid},
                                       {cands[group[b]].query_centroid, cands[group[b]].map_centroid},
                                       {cands[group[c]].query_centroid, cands[group[c]].map_centroid}});
        if (!fit) continue;
        any_valid_sample = true;

        std::vector<size_t> inliers;
        double residual2 = 0.0;
        for (const size_t gi : group) {
            const double err =
                (fit->apply(cands[gi].query_centroid) - cands[gi].map_centroid).norm();
            if (err <= params.ransac_inlier_radius) {
                inliers.push_back(gi);
                residual2 += err * err;
            }
        }
        const double residual =
            inliers.empty() ? std::numeric_limits<double>::max()
                            : std::sqrt(residual2 / static_cast<double>(inliers.size()));
        if (inliers.size() > best_count ||
            (inliers.size() == best_count && residual < best_residual)) {
            best_count = inliers.size();
            best_residual = residual;
            best_inliers = std::move(inliers);
            best_pose = fit;
        }
    }

    if (!any_valid_sample) {
        result.status = LocalizationStatus::degenerate;
        return result;
    }
    if (best_count < params.tau) {
        result.status = LocalizationStatus::no_consensus;
        return result;
    }

    std::vector<std::pair<Point3, Point3>> pairs;
    for (const size_t gi : best_inliers)
        pairs.emplace_back(cands[gi].query_centroid, cands[gi].map_centroid);
    if (const auto refit = kabsch_align(pairs)) best_pose = refit;

    result.status = LocalizationStatus::localized;
    result.pose = *best_pose;
    for (const size_t gi : best_inliers) result.inliers.push_back(cands[gi]);
    return result;
}

/// Full pipeline on one scan: downsample, segment, describe, propose, group,
/// then RANSAC over the groups in size order; the first localized result
/// wins. No point-cloud refinement afterwards.
inline LocalizationResult localize(const LabeledScan& scan, const InstanceMap& map,
                                   const SegmentationParams& seg_params,
                                   const DescriptorEngine& engine, const MatchParams& params) {
    params.validate();
    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };
    LocalizationResult result;
    const auto t_start = clock::now();

    auto t0 = clock::now();
    std::vector<ObjectInstance> instances;
    if (scan.size() > 0) {
        const LabeledScan down = voxel_downsample(scan, seg_params.voxel_size);
        instances = segment_instances(down, seg_params);
    }
    result.timings.segment_ms = ms_since(t0);

    t0 = clock::now();
    std::vector<Descriptor> descriptors;
    descriptors.reserve(instances.size());
    for (const auto& inst : instances) descriptors.push_back(engine.describe(inst));
    result.timings.describe_ms = ms_since(t0);

    t0 = clock::now();
    std::vector<std::vector<size_t>> groups;
    std::vector<Correspondence> cands;
    if (!instances.empty() && !map.empty()) {
        cands = propose_correspondences(instances, descriptors, map, params.knn,
                                        params.class_filter);
        groups = consistency_group(cands, params.epsilon, params.tau);
    }
    result.timings.match_ms = ms_since(t0);

    t0 = clock::now();
    bool all_degenerate = !groups.empty();
    for (const auto& group : groups) {
        LocalizationResult attempt = ransac_pose(cands, group, params);
        if (attempt.status != LocalizationStatus::degenerate) all_degenerate = false;
        if (attempt.status == LocalizationStatus::localized) {
            attempt.timings = result.timings;
            attempt.timings.ransac_ms = ms_since(t0);
            attempt.timings.total_ms = ms_since(t_start);
            return attempt;
        }
    }
    result.timings.ransac_ms = ms_since(t0);
    result.timings.total_ms = ms_since(t_start);
    result.status =
        all_degenerate ? LocalizationStatus::degenerate : LocalizationStatus::no_consensus;
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation against ground truth
// ---------------------------------------------------------------------------

struct QueryRecord {
    size_t query_id = 0;
    LocalizationStatus status = LocalizationStatus::no_consensus;
    double translation_error = std::numeric_limits<double>::quiet_NaN();  // meters
    double rotation_error = std::numeric_limits<double>::quiet_NaN();     // degrees
    bool correct = false;
    size_t inliers = 0;
    size_t consensus_group_size = 0;
    StageTimings timings;
};

struct EvaluationReport {
    double recall = 0.0;
    double precision = 1.0;
    size_t detections = 0;
    size_t correct_detections = 0;
    bool no_detections = false;  // precision undefined, reported as 1.0
    std::vector<QueryRecord> records;
};

/// A detection counts as correct within `max_translation_error` meters and
/// `max_rotation_error_deg` degrees of the ground-truth pose.
inline EvaluationReport evaluate(const InstanceMap& map, const std::vector<LabeledScan>& queries,
                                 const SegmentationParams& seg_params,
                                 const DescriptorEngine& engine, const MatchParams& params,
                                 double max_translation_error = 0.2,
                                 double max_rotation_error_deg = 10.0) {
    EvaluationReport report;
    for (size_t qi = 0; qi < queries.size(); ++qi) {
        const LocalizationResult r = localize(queries[qi], map, seg_params, engine, params);
        QueryRecord rec;
        rec.query_id = qi;
        rec.status = r.status;
        rec.inliers = r.inliers.size();
        rec.consensus_group_size = r.consensus_group_size;
        rec.timings = r.timings;
        if (r.status == LocalizationStatus::localized) {
            const Pose& truth = queries[qi].sensor_pose;
            rec.translation_error = (r.pose.translation - truth.translation).norm();
            rec.rotation_error = rotation_angle_between(r.pose.rotation, truth.rotation);
            rec.correct = rec.translation_error <= max_translation_error &&
                          rec.rotation_error <= max_rotation_error_deg;
            ++report.detections;
            if (rec.correct) ++report.correct_detections;
        }
        report.records.push_back(rec);
    }
    report.recall = queries.empty() ? 0.0
                                    : static_cast<double>(report.correct_detections) /
                                          static_cast<double>(queries.size());
    if (report.detections == 0) {
        report.no_detections = true;
        report.precision = 1.0;
    } else {
        report.precision = static_cast<double>(report.correct_detections) /
                           static_cast<double>(report.detections);
    }
    return report;
}

}  // namespace instaloc
