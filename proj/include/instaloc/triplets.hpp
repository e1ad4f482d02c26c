// Training triplets: pairs of scans raycast 2 m and 10 deg apart; objects
// visible in both become anchor/positive, a random other object the negative.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "instaloc/instance.hpp"
#include "instaloc/lidar.hpp"
#include "instaloc/random.hpp"
#include "instaloc/scene_generator.hpp"

namespace instaloc {

struct TripletSample {
    ObjectInstance anchor;
    ObjectInstance positive;  // same object id as anchor, from the offset scan
    ObjectInstance negative;  // different object id
    Pose anchor_sensor_pose;  // viewpoints the pair was raycast from
    Pose positive_sensor_pose;
};

constexpr double kTripletTranslationOffset = 2.0;      // meters
constexpr double kTripletYawOffset = deg2rad(10.0);

inline std::vector<TripletSample> generate_triplets(const Scene& scene, const LidarConfig& config,
                                                    size_t count, uint64_t seed,
                                                    size_t min_instance_points = 50) {
    const std::vector<Box3> rooms = room_interiors(scene);
    if (rooms.empty()) throw std::invalid_argument("generate_triplets: scene has no rooms");
    Rng rng(hash_combine(0x7619137ULL, seed));

    std::vector<TripletSample> out;
    out.reserve(count);
    const size_t pair_budget = 32 + count;  // scan pairs, not triplets
    for (size_t pair = 0; pair < pair_budget && out.size() < count; ++pair) {
        // viewpoint A in free space, B offset by exactly 2 m and +10 deg yaw
        Pose pose_a, pose_b;
        bool found = false;
        for (int attempt = 0; attempt < 64 && !found; ++attempt) {
            const Box3& room = rooms[rng.uniform_index(rooms.size())];
            const Vec3 pa{rng.uniform(room.min.x + 0.6, room.max.x - 0.6),
                          rng.uniform(room.min.y + 0.6, room.max.y - 0.6),
                          rng.uniform(0.9, 1.6)};
            const double yaw_a = rng.uniform(0.0, 2.0 * kPi);
            const double heading = rng.uniform(0.0, 2.0 * kPi);
            const Vec3 pb = pa + Vec3{std::cos(heading), std::sin(heading), 0.0} *
                                     kTripletTranslationOffset;
            if (!position_clear(scene, rooms, pa, 0.3)) continue;
            if (!position_clear(scene, rooms, pb, 0.3)) continue;
            pose_a = Pose(Rotation::yaw(yaw_a), pa);
            pose_b = Pose(Rotation::yaw(yaw_a + kTripletYawOffset), pb);
            found = true;
        }
        if (!found) continue;

        const LabeledScan scan_a = raycast_scan(scene, pose_a, config, rng.next());
        const LabeledScan scan_b = raycast_scan(scene, pose_b, config, rng.next());
        const auto inst_a = instances_from_labels(scan_a, min_instance_points, 0);
        const auto inst_b = instances_from_labels(scan_b, min_instance_points, 1);

        std::map<int32_t, const ObjectInstance*> by_id_b;
        for (const auto& inst : inst_b) by_id_b[inst.instance_id] = &inst;

        // negatives come from either scan
        std::vector<const ObjectInstance*> pool;
        for (const auto& inst : inst_a) pool.push_back(&inst);
        for (const auto& inst : inst_b) pool.push_back(&inst);

        for (const auto& anchor : inst_a) {
            if (out.size() >= count) break;
            const auto it = by_id_b.find(anchor.instance_id);
            if (it == by_id_b.end()) continue;
            std::vector<const ObjectInstance*> negatives;
            for (const auto* cand : pool)
                if (cand->instance_id != anchor.instance_id) negatives.push_back(cand);
            if (negatives.empty()) continue;
            TripletSample s;
            s.anchor = anchor;
            s.positive = *it->second;
            s.negative = *negatives[rng.uniform_index(negatives.size())];
            s.anchor_sensor_pose = pose_a;
            s.positive_sensor_pose = pose_b;
            out.push_back(std::move(s));
        }
    }
    if (out.size() < count)
        throw std::runtime_error("generate_triplets: only " + std::to_string(out.size()) + " of " +
                                 std::to_string(count) + " triplets found within the viewpoint budget");
    return out;
}

// ---------------------------------------------------------------------------
// Triplet directory I/O
// ---------------------------------------------------------------------------

namespace detail {

inline void write_instance_ply(const ObjectInstance& inst, const std::string& path) {
    const std::vector<int32_t> sem(inst.size(), static_cast<int32_t>(inst.cls));
    const std::vector<int32_t> ids(inst.size(), inst.instance_id);
    write_ply_file(path, inst.points.points, &sem, &ids);
}

inline ObjectInstance read_instance_ply(const std::string& path) {
    const PlyCloud ply = read_ply_file(path);
    if (!ply.has_labels() || ply.points.empty())
        throw std::runtime_error("read_instance_ply: " + path + " is not a labeled instance");
    return make_instance(ply.points, semantic_class_from_index(ply.semantic.front()),
                         ply.instance.front());
}

}  // namespace detail

inline void save_triplets(const std::vector<TripletSample>& triplets, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = nlohmann::json::array();
    for (size_t i = 0; i < triplets.size(); ++i) {
        char stem[64];
        std::snprintf(stem, sizeof(stem), "triplet_%05zu", i);
        const std::string a = std::string(stem) + "_anchor.ply";
        const std::string p = std::string(stem) + "_positive.ply";
        const std::string n = std::string(stem) + "_negative.ply";
        const auto base = std::filesystem::path(dir);
        detail::write_instance_ply(triplets[i].anchor, (base / a).string());
        detail::write_instance_ply(triplets[i].positive, (base / p).string());
        detail::write_instance_ply(triplets[i].negative, (base / n).string());
        manifest.push_back({{"anchor", a}, {"positive", p}, {"negative", n}});
    }
    std::ofstream f(std::filesystem::path(dir) / "triplets.json");
    if (!f) throw std::runtime_error("save_triplets: cannot write manifest in " + dir);
    f << manifest.dump(2) << '\n';
}

inline std::vector<TripletSample> load_triplets(const std::string& dir) {
    const auto manifest_path = std::filesystem::path(dir) / "triplets.json";
    std::ifstream f(manifest_path);
    if (!f) throw std::runtime_error("load_triplets: cannot open " + manifest_path.string());
    nlohmann::json manifest;
    f >> manifest;
    std::vector<TripletSample> out;
    for (const auto& entry : manifest) {
        TripletSample s;
        const auto base = std::filesystem::path(dir);
        s.anchor = detail::read_instance_ply((base / entry.at("anchor").get<std::string>()).string());
        s.positive =
            detail::read_instance_ply((base / entry.at("positive").get<std::string>()).string());
        s.negative =
            detail::read_instance_ply((base / entry.at("negative").get<std::string>()).string());
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace instaloc
