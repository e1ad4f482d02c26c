// Experiment orchestration: procedural scene, a jittered piecewise-linear
// trajectory through the rooms, map building at one spacing and queries at
// another, evaluation, and the map-density ablation. Fully deterministic for
// fixed seeds; wall-clock timings are kept out of the primary outputs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "instaloc/lidar.hpp"
#include "instaloc/map_database.hpp"
#include "instaloc/matching.hpp"
#include "instaloc/scene_generator.hpp"
#include "instaloc/segmentation.hpp"

namespace instaloc {

enum class QueryMode { offset, map, all };

inline const char* to_string(QueryMode m) {
    switch (m) {
        case QueryMode::offset: return "offset";
        case QueryMode::map: return "map";
        case QueryMode::all: return "all";
    }
    return "unknown";
}

inline QueryMode query_mode_from_string(const std::string& s) {
    if (s == "offset") return QueryMode::offset;
    if (s == "map") return QueryMode::map;
    if (s == "all") return QueryMode::all;
    throw std::invalid_argument("query_mode must be offset|map|all, got '" + s + "'");
}

struct ExperimentConfig {
    uint64_t scene_seed = 42;
    SceneSpec scene_spec;
    LidarConfig lidar;
    SegmentationParams segmentation;  // beam_count / vertical_fov synced from lidar
    MatchParams match;
    std::string model_path;  // empty -> geometric descriptor engine
    double map_spacing = 2.1;
    double query_spacing = 0.7;
    QueryMode query_mode = QueryMode::offset;
    double query_label_flip = 0.0;  // semantic label noise on query scans
    uint64_t scan_seed = 1;

    void validate() const {
        scene_spec.validate();
        lidar.validate();
        segmentation.validate();
        match.validate();
        if (map_spacing < 0.0) throw std::invalid_argument("ExperimentConfig: map_spacing < 0");
        if (query_spacing <= 0.0)
            throw std::invalid_argument("ExperimentConfig: query_spacing <= 0");
        if (query_label_flip < 0.0 || query_label_flip > 1.0)
            throw std::invalid_argument("ExperimentConfig: query_label_flip out of [0, 1]");
    }
};

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
    return {{"scene_seed", c.scene_seed},
            {"rooms", c.scene_spec.rooms},
            {"furniture_per_room", c.scene_spec.furniture_per_room},
            {"lidar",
             {{"beam_count", c.lidar.beam_count},
              {"vertical_fov_deg", rad2deg(c.lidar.vertical_fov)},
              {"azimuth_steps", c.lidar.azimuth_steps},
              {"max_range", c.lidar.max_range},
              {"range_noise_sigma", c.lidar.range_noise_sigma}}},
            {"segmentation",
             {{"voxel_size", c.segmentation.voxel_size},
              {"alpha", c.segmentation.alpha},
              {"min_instance_points", c.segmentation.min_instance_points}}},
            {"match",
             {{"knn", c.match.knn},
              {"epsilon", c.match.epsilon},
              {"tau", c.match.tau},
              {"ransac_iterations", c.match.ransac_iterations},
              {"ransac_inlier_radius", c.match.ransac_inlier_radius},
              {"class_filter", c.match.class_filter},
              {"seed", c.match.seed}}},
            {"model_path", c.model_path},
            {"map_spacing", c.map_spacing},
            {"query_spacing", c.query_spacing},
            {"query_mode", to_string(c.query_mode)},
            {"query_label_flip", c.query_label_flip},
            {"scan_seed", c.scan_seed}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.scene_seed = j.at("scene_seed").get<uint64_t>();
    c.scene_spec.rooms = j.at("rooms").get<int>();
    c.scene_spec.furniture_per_room = j.at("furniture_per_room").get<int>();
    const auto& jl = j.at("lidar");
    c.lidar.beam_count = jl.at("beam_count").get<int>();
    c.lidar.vertical_fov = deg2rad(jl.at("vertical_fov_deg").get<double>());
    c.lidar.azimuth_steps = jl.at("azimuth_steps").get<int>();
    c.lidar.max_range = jl.at("max_range").get<double>();
    c.lidar.range_noise_sigma = jl.at("range_noise_sigma").get<double>();
    const auto& js = j.at("segmentation");
    c.segmentation.voxel_size = js.at("voxel_size").get<double>();
    c.segmentation.alpha = js.at("alpha").get<double>();
    c.segmentation.min_instance_points = js.at("min_instance_points").get<size_t>();
    c.segmentation.beam_count = c.lidar.beam_count;
    c.segmentation.vertical_fov = c.lidar.vertical_fov;
    const auto& jm = j.at("match");
    c.match.knn = jm.at("knn").get<size_t>();
    c.match.epsilon = jm.at("epsilon").get<double>();
    c.match.tau = jm.at("tau").get<size_t>();
    c.match.ransac_iterations = jm.at("ransac_iterations").get<int>();
    c.match.ransac_inlier_radius = jm.at("ransac_inlier_radius").get<double>();
    c.match.class_filter = jm.at("class_filter").get<bool>();
    c.match.seed = jm.at("seed").get<uint64_t>();
    c.model_path = j.at("model_path").get<std::string>();
    c.map_spacing = j.at("map_spacing").get<double>();
    c.query_spacing = j.at("query_spacing").get<double>();
    c.query_mode = query_mode_from_string(j.at("query_mode").get<std::string>());
    c.query_label_flip = j.at("query_label_flip").get<double>();
    c.scan_seed = j.at("scan_seed").get<uint64_t>();
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

/// Scan poses every `step` meters along a piecewise-linear route through the
/// room centers and the door openings on the corridor line, with seeded
/// lateral waypoint jitter, longitudinal phase jitter, and yaw wobble. The
/// route stays inside the furniture-free corridor strip the generator keeps
/// clear. Sensor height is fixed at 1.2 m.
inline std::vector<Pose> generate_trajectory(const Scene& scene, double step, uint64_t seed) {
    if (step <= 0.0) throw std::invalid_argument("generate_trajectory: step <= 0");
    const std::vector<Box3> rooms = room_interiors(scene);
    if (rooms.empty()) throw std::invalid_argument("generate_trajectory: scene has no rooms");
    Rng rng(hash_combine(0x7a17ULL, seed));

    const double corridor_y = (rooms.front().min.y + rooms.front().max.y) / 2.0;
    const double z = 1.2;
    std::vector<Vec3> waypoints;
    for (size_t i = 0; i < rooms.size(); ++i) {
        const Box3& r = rooms[i];
        const double quarter = (r.max.x - r.min.x) / 4.0;
        waypoints.push_back({r.min.x + quarter + rng.uniform(-0.3, 0.3),
                             corridor_y + rng.uniform(-0.15, 0.15), z});
        waypoints.push_back({r.max.x - quarter + rng.uniform(-0.3, 0.3),
                             corridor_y + rng.uniform(-0.15, 0.15), z});
        if (i + 1 < rooms.size()) {
            const double door_x = (r.max.x + rooms[i + 1].min.x) / 2.0;
            waypoints.push_back({door_x, corridor_y, z});
        }
    }

    // arc-length positions with per-pose longitudinal jitter
    std::vector<double> cum{0.0};
    for (size_t i = 1; i < waypoints.size(); ++i)
        cum.push_back(cum.back() + (waypoints[i] - waypoints[i - 1]).norm());
    const double total = cum.back();

    auto at_arc = [&](double s) {
        s = std::clamp(s, 0.0, total);
        size_t seg = 1;
        while (seg + 1 < cum.size() && cum[seg] < s) ++seg;
        const double seg_len = cum[seg] - cum[seg - 1];
        const double u = seg_len > 0.0 ? (s - cum[seg - 1]) / seg_len : 0.0;
        const Vec3 p = waypoints[seg - 1] + (waypoints[seg] - waypoints[seg - 1]) * u;
        const Vec3 dir = (waypoints[seg] - waypoints[seg - 1]) / std::max(seg_len, 1e-12);
        return std::make_pair(p, dir);
    };

    std::vector<Pose> poses;
    for (double s = 0.0; s <= total; s += step) {
        const double s_jittered = std::clamp(s + rng.uniform(-0.06, 0.06), 0.0, total);
        const auto [p, dir] = at_arc(s_jittered);
        const double heading = std::atan2(dir.y, dir.x) + rng.uniform(deg2rad(-15.0), deg2rad(15.0));
        poses.emplace_back(Rotation::yaw(heading), p);
    }
    return poses;
}

// ---------------------------------------------------------------------------
// Experiment run
// ---------------------------------------------------------------------------

struct ExperimentResult {
    Scene scene;
    std::vector<Pose> trajectory;
    std::vector<size_t> map_scan_indices;  // into trajectory
    std::vector<size_t> query_indices;     // into trajectory
    InstanceMap map;
    EvaluationReport report;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg_in) {
    ExperimentConfig cfg = cfg_in;
    cfg.segmentation.beam_count = cfg.lidar.beam_count;
    cfg.segmentation.vertical_fov = cfg.lidar.vertical_fov;
    cfg.validate();

    ExperimentResult result;
    result.scene = generate_scene(cfg.scene_seed, cfg.scene_spec);
    result.trajectory =
        generate_trajectory(result.scene, cfg.query_spacing, hash_combine(cfg.scan_seed, 0x17a7));

    std::vector<Pose> poses = result.trajectory;
    result.map_scan_indices = subsample_by_spacing(poses, cfg.map_spacing);

    std::vector<bool> is_map_scan(poses.size(), false);
    for (const size_t i : result.map_scan_indices) is_map_scan[i] = true;
    for (size_t i = 0; i < poses.size(); ++i) {
        const bool wanted = cfg.query_mode == QueryMode::all ||
                            (cfg.query_mode == QueryMode::map && is_map_scan[i]) ||
                            (cfg.query_mode == QueryMode::offset && !is_map_scan[i]);
        if (wanted) result.query_indices.push_back(i);
    }

    // raycast each needed trajectory pose once; the scan for a pose is the
    // same whether it serves the map or a query
    std::vector<std::optional<LabeledScan>> scans(poses.size());
    auto scan_at = [&](size_t i) -> const LabeledScan& {
        if (!scans[i])
            scans[i] = raycast_scan(result.scene, poses[i], cfg.lidar,
                                    hash_combine(cfg.scan_seed, i));
        return *scans[i];
    };

    std::vector<LabeledScan> map_scans;
    for (const size_t i : result.map_scan_indices) map_scans.push_back(scan_at(i));

    DescriptorEngine engine = cfg.model_path.empty()
                                  ? DescriptorEngine::geometric()
                                  : DescriptorEngine::learned(load_model(cfg.model_path));
    result.map = build_map(map_scans, cfg.segmentation, engine, cfg.map_spacing);
    result.map.scene_id = "scene-" + std::to_string(cfg.scene_seed);
    result.map.creation_params = experiment_config_to_json(cfg).dump();

    std::vector<LabeledScan> queries;
    for (const size_t i : result.query_indices) {
        LabeledScan q = scan_at(i);
        if (cfg.query_label_flip > 0.0)
            q = perturb_labels(q, cfg.query_label_flip, hash_combine(cfg.scan_seed, 0xf11b00 + i));
        queries.push_back(std::move(q));
    }

    result.report = evaluate(result.map, queries, cfg.segmentation, engine, cfg.match);
    return result;
}

// ---------------------------------------------------------------------------
// Density ablation
// ---------------------------------------------------------------------------

struct AblationRow {
    double spacing = 0.0;
    size_t map_scan_count = 0;
    double recall = 0.0;
    double precision = 1.0;
};

/// run_experiment per spacing with the same scene, trajectory and query set.
inline std::vector<AblationRow> density_ablation(const ExperimentConfig& cfg,
                                                 const std::vector<double>& spacings) {
    if (spacings.size() < 2) throw std::invalid_argument("density_ablation: need >= 2 spacings");
    std::vector<AblationRow> rows;
    for (const double spacing : spacings) {
        ExperimentConfig c = cfg;
        c.map_spacing = spacing;
        const ExperimentResult r = run_experiment(c);
        AblationRow row;
        row.spacing = spacing;
        row.map_scan_count = r.map_scan_indices.size();
        row.recall = r.report.recall;
        row.precision = r.report.precision;
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_metric(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace detail

/// Deterministic per-query CSV. Timings go to a sibling file (see
/// write_timings_csv) so re-running a config reproduces this byte-for-byte.
inline void write_report_csv(const EvaluationReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_report_csv: cannot open " + path);
    f << "query_id,status,translation_error,rotation_error,correct,inliers,group_size\n";
    for (const auto& r : report.records) {
        f << r.query_id << ',' << to_string(r.status) << ','
          << detail::format_metric(r.translation_error) << ','
          << detail::format_metric(r.rotation_error) << ',' << (r.correct ? 1 : 0) << ','
          << r.inliers << ',' << r.consensus_group_size << '\n';
    }
}

inline void write_timings_csv(const EvaluationReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_timings_csv: cannot open " + path);
    f << "query_id,segment_ms,describe_ms,match_ms,ransac_ms,total_ms\n";
    for (const auto& r : report.records) {
        f << r.query_id << ',' << detail::format_metric(r.timings.segment_ms) << ','
          << detail::format_metric(r.timings.describe_ms) << ','
          << detail::format_metric(r.timings.match_ms) << ','
          << detail::format_metric(r.timings.ransac_ms) << ','
          << detail::format_metric(r.timings.total_ms) << '\n';
    }
}

inline nlohmann::json report_summary_json(const ExperimentConfig& cfg,
                                          const ExperimentResult& result) {
    return {{"recall", result.report.recall},
            {"precision", result.report.precision},
            {"queries", result.query_indices.size()},
            {"detections", result.report.detections},
            {"correct_detections", result.report.correct_detections},
            {"no_detections", result.report.no_detections},
            {"map_scans", result.map_scan_indices.size()},
            {"map_entries", result.map.size()},
            {"config", experiment_config_to_json(cfg)}};
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_ablation_csv: cannot open " + path);
    f << "spacing,map_scan_count,recall,precision\n";
    for (const auto& r : rows)
        f << detail::format_metric(r.spacing) << ',' << r.map_scan_count << ','
          << detail::format_metric(r.recall) << ',' << detail::format_metric(r.precision) << '\n';
}

}  // namespace instaloc
