// Instance database built from registered prior-map scans: greedy spacing
// subsampling, segmentation + description per kept scan, exact descriptor
// kNN, and a versioned JSON file format.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "instaloc/engine.hpp"
#include "instaloc/instance.hpp"
#include "instaloc/scene.hpp"
#include "instaloc/segmentation.hpp"

namespace instaloc {

struct MapEntry {
    ObjectInstance instance;  // points and centroid in the map frame
    Descriptor descriptor;    // computed in the source scan's sensor frame
    Pose source_scan_pose;
    int32_t scan_index = 0;
};

struct InstanceMap {
    std::vector<MapEntry> entries;
    int descriptor_dim = static_cast<int>(kDefaultDescriptorDim);
    std::string scene_id;
    std::string creation_params;

    size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
};

/// Greedy subsampling: keep the first scan, then every scan at least
/// `spacing` meters (translation) from the last kept one.
inline std::vector<size_t> subsample_by_spacing(const std::vector<Pose>& poses, double spacing) {
    if (spacing < 0.0) throw std::invalid_argument("subsample_by_spacing: spacing < 0");
    std::vector<size_t> kept;
    for (size_t i = 0; i < poses.size(); ++i) {
        if (kept.empty() ||
            (poses[i].translation - poses[kept.back()].translation).norm() >= spacing)
            kept.push_back(i);
    }
    return kept;
}

inline InstanceMap build_map(const std::vector<LabeledScan>& scans,
                             const SegmentationParams& seg_params, const DescriptorEngine& engine,
                             double spacing) {
    seg_params.validate();
    std::vector<Pose> poses;
    poses.reserve(scans.size());
    for (const auto& s : scans) poses.push_back(s.sensor_pose);
    const std::vector<size_t> kept = subsample_by_spacing(poses, spacing);

    InstanceMap map;
    map.descriptor_dim = static_cast<int>(engine.dim());
    for (size_t ki = 0; ki < kept.size(); ++ki) {
        const LabeledScan& scan = scans[kept[ki]];
        const LabeledScan down = voxel_downsample(scan, seg_params.voxel_size);
        if (down.size() == 0) continue;
        const auto instances =
            segment_instances(down, seg_params, static_cast<int32_t>(ki));
        for (const auto& inst : instances) {
            MapEntry e;
            e.descriptor = engine.describe(inst);
            e.source_scan_pose = scan.sensor_pose;
            e.scan_index = static_cast<int32_t>(ki);
            ObjectInstance world = inst;
            world.points = transform_cloud(scan.sensor_pose, inst.points);
            world.centroid = centroid_of(world.points.points);
            e.instance = std::move(world);
            map.entries.push_back(std::move(e));
        }
    }
    return map;
}

// ---------------------------------------------------------------------------
// Nearest-neighbor query (exact)
// ---------------------------------------------------------------------------

struct KnnResult {
    size_t entry_index = 0;
    double distance = 0.0;
};

/// N nearest entries by Euclidean descriptor distance; exact linear scan.
/// Ties broken by scan index then entry order (= storage order).
inline std::vector<KnnResult> knn_query(const InstanceMap& map, const Descriptor& query,
                                        size_t n) {
    if (map.empty()) throw std::invalid_argument("knn_query: empty map");
    if (n < 1) throw std::invalid_argument("knn_query: n must be >= 1");
    std::vector<KnnResult> all;
    all.reserve(map.size());
    for (size_t i = 0; i < map.size(); ++i)
        all.push_back({i, descriptor_distance(query, map.entries[i].descriptor)});
    std::sort(all.begin(), all.end(), [](const KnnResult& a, const KnnResult& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.entry_index < b.entry_index;
    });
    if (all.size() > n) all.resize(n);
    return all;
}

// ---------------------------------------------------------------------------
// Map file format (*.imap.json, optionally with a sibling points PLY)
// ---------------------------------------------------------------------------

inline constexpr int kMapFormatVersion = 1;

/// Writes the map as one JSON document. When the total point count exceeds
/// `external_points_threshold`, point data moves to a sibling
/// `<stem>.points.ply` file referenced from the JSON.
inline void save_map(const InstanceMap& map, const std::string& path,
                     size_t external_points_threshold = 100000) {
    size_t total_points = 0;
    for (const auto& e : map.entries) total_points += e.instance.size();
    const bool external = total_points > external_points_threshold;

    nlohmann::json j;
    j["format_version"] = kMapFormatVersion;
    j["descriptor_dim"] = map.descriptor_dim;
    j["metadata"] = {{"scene_id", map.scene_id}, {"creation_params", map.creation_params}};

    std::string points_file;
    if (external) {
        std::filesystem::path p(path);
        std::string stem = p.filename().string();
        const std::string suffix = ".imap.json";
        if (stem.size() > suffix.size() && stem.substr(stem.size() - suffix.size()) == suffix)
            stem = stem.substr(0, stem.size() - suffix.size());
        points_file = stem + ".points.ply";
        j["points_file"] = points_file;
        std::vector<Point3> all;
        all.reserve(total_points);
        for (const auto& e : map.entries)
            all.insert(all.end(), e.instance.points.points.begin(),
                       e.instance.points.points.end());
        write_ply_file((p.parent_path() / points_file).string(), all);
    }

    nlohmann::json entries = nlohmann::json::array();
    size_t offset = 0;
    for (const auto& e : map.entries) {
        nlohmann::json je;
        je["scan_index"] = e.scan_index;
        je["source_scan_pose"] = detail::pose_to_json(e.source_scan_pose);
        je["class"] = to_string(e.instance.cls);
        je["instance_id"] = e.instance.instance_id;
        je["centroid"] = detail::vec3_to_json(e.instance.centroid);
        je["descriptor"] = e.descriptor.values;
        if (external) {
            je["points_offset"] = offset;
            je["points_count"] = e.instance.size();
        } else {
            nlohmann::json pts = nlohmann::json::array();
            for (const auto& p : e.instance.points.points) pts.push_back(detail::vec3_to_json(p));
            je["points"] = pts;
        }
        offset += e.instance.size();
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_map: cannot open " + path);
    f << j.dump() << '\n';
    if (!f) throw std::runtime_error("save_map: write failed for " + path);
}

inline InstanceMap load_map(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_map: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_map: " + path + ": parse failed (truncated or corrupt): " +
                                 e.what());
    }
    if (!j.contains("format_version"))
        throw std::runtime_error("load_map: " + path + ": missing format_version");
    const int version = j.at("format_version").get<int>();
    if (version != kMapFormatVersion)
        throw std::runtime_error("load_map: " + path + ": unsupported format_version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(kMapFormatVersion) + ")");

    InstanceMap map;
    map.descriptor_dim = j.at("descriptor_dim").get<int>();
    map.scene_id = j.at("metadata").at("scene_id").get<std::string>();
    map.creation_params = j.at("metadata").at("creation_params").get<std::string>();

    std::vector<Point3> external_points;
    if (j.contains("points_file")) {
        const auto ply_path =
            std::filesystem::path(path).parent_path() / j.at("points_file").get<std::string>();
        external_points = read_ply_file(ply_path.string()).points;
    }

    for (const auto& je : j.at("entries")) {
        MapEntry e;
        e.scan_index = je.at("scan_index").get<int32_t>();
        e.source_scan_pose = detail::pose_from_json(je.at("source_scan_pose"));
        e.instance.cls = semantic_class_from_name(je.at("class").get<std::string>());
        e.instance.instance_id = je.at("instance_id").get<int32_t>();
        e.instance.source_scan_id = e.scan_index;
        e.instance.centroid = detail::vec3_from_json(je.at("centroid"));
        e.descriptor.values = je.at("descriptor").get<std::vector<double>>();
        if (static_cast<int>(e.descriptor.dim()) != map.descriptor_dim)
            throw std::runtime_error("load_map: " + path + ": descriptor dimension mismatch");
        if (je.contains("points")) {
            for (const auto& p : je.at("points"))
                e.instance.points.points.push_back(detail::vec3_from_json(p));
        } else {
            const size_t off = je.at("points_offset").get<size_t>();
            const size_t cnt = je.at("points_count").get<size_t>();
            if (off + cnt > external_points.size())
                throw std::runtime_error("load_map: " + path + ": points file too short");
            e.instance.points.points.assign(external_points.begin() + static_cast<ptrdiff_t>(off),
                                            external_points.begin() +
                                                static_cast<ptrdiff_t>(off + cnt));
        }
        map.entries.push_back(std::move(e));
    }
    return map;
}

// ---------------------------------------------------------------------------
// poses.csv (scan_id, tx, ty, tz, r00..r22 row-major)
// ---------------------------------------------------------------------------

inline void save_poses_csv(const std::vector<Pose>& poses, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_poses_csv: cannot open " + path);
    f << "scan_id,tx,ty,tz,r00,r01,r02,r10,r11,r12,r20,r21,r22\n";
    for (size_t i = 0; i < poses.size(); ++i) {
        f << i;
        const Vec3& t = poses[i].translation;
        f << ',' << detail::format_double(t.x) << ',' << detail::format_double(t.y) << ','
          << detail::format_double(t.z);
        for (const double v : poses[i].rotation.matrix().m) f << ',' << detail::format_double(v);
        f << '\n';
    }
}

/// Poses indexed by scan_id. Rows may appear in any order; ids must be
/// contiguous from 0.
inline std::vector<Pose> load_poses_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_poses_csv: cannot open " + path);
    std::vector<std::pair<size_t, Pose>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!cells.empty() && cells[0] == "scan_id") continue;  // header
        if (cells.size() != 13)
            throw std::runtime_error("load_poses_csv: " + path + ": expected 13 columns, got " +
                                     std::to_string(cells.size()));
        const size_t id = std::stoul(cells[0]);
        Mat3 m;
        for (size_t i = 0; i < 9; ++i) m.m[i] = std::stod(cells[4 + i]);
        rows.emplace_back(id, Pose(Rotation::from_matrix(m),
                                   {std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3])}));
    }
    std::vector<Pose> poses(rows.size());
    std::vector<bool> seen(rows.size(), false);
    for (const auto& [id, pose] : rows) {
        if (id >= poses.size() || seen[id])
            throw std::runtime_error("load_poses_csv: " + path + ": scan ids not contiguous from 0");
        poses[id] = pose;
        seen[id] = true;
    }
    return poses;
}

}  // namespace instaloc
