// Procedural indoor scenes: a row of rooms with shared dividing walls, door
// openings on a common corridor line, and furniture drawn from the 13-class
// palette. Deterministic for a fixed seed.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "instaloc/geometry.hpp"
#include "instaloc/random.hpp"
#include "instaloc/scene.hpp"

namespace instaloc {

struct SceneSpec {
    int rooms = 3;
    int furniture_per_room = 6;

    void validate() const {
        if (rooms < 1) throw std::invalid_argument("SceneSpec: rooms must be >= 1");
        if (furniture_per_room < 0)
            throw std::invalid_argument("SceneSpec: furniture_per_room must be >= 0");
    }
};

namespace scene_limits {
constexpr double kWallThickness = 0.2;
constexpr double kDoorWidth = 1.0;
constexpr double kDoorHeight = 2.1;
constexpr double kCorridorHalfWidth = 0.55;   // strip kept free of furniture
constexpr double kCorridorHeight = 2.2;
constexpr double kFurnitureClearance = 0.35;  // min gap between furniture pieces
constexpr int kPlacementAttempts = 100;
}  // namespace scene_limits

namespace detail {

inline Box3 yawed_box_aabb(const Vec3& center, const Vec3& dims, double yaw) {
    const double c = std::abs(std::cos(yaw)), s = std::abs(std::sin(yaw));
    const double hx = 0.5 * (dims.x * c + dims.y * s);
    const double hy = 0.5 * (dims.x * s + dims.y * c);
    return {{center.x - hx, center.y - hy, center.z},
            {center.x + hx, center.y + hy, center.z + dims.z}};
}

}  // namespace detail

/// Interior volume of each room, derived from floor/ceiling objects.
/// Ordered by increasing x.
inline std::vector<Box3> room_interiors(const Scene& scene) {
    std::vector<Box3> rooms;
    for (const auto& floor_obj : scene.objects) {
        if (floor_obj.cls != SemanticClass::floor) continue;
        const Box3 fb = floor_obj.world_aabb();
        double top = scene.bounds.max.z;
        for (const auto& ceil_obj : scene.objects) {
            if (ceil_obj.cls != SemanticClass::ceiling) continue;
            const Box3 cb = ceil_obj.world_aabb();
            const Vec3 fc = fb.center();
            if (fc.x >= cb.min.x && fc.x <= cb.max.x && fc.y >= cb.min.y && fc.y <= cb.max.y)
                top = std::min(top, cb.min.z);
        }
        rooms.push_back({{fb.min.x, fb.min.y, fb.max.z}, {fb.max.x, fb.max.y, top}});
    }
    std::sort(rooms.begin(), rooms.end(),
              [](const Box3& a, const Box3& b) { return a.min.x < b.min.x; });
    return rooms;
}

/// True when `p` lies inside a room interior with `clearance` to walls and to
/// every non-structural object's bounding box.
inline bool position_clear(const Scene& scene, const std::vector<Box3>& rooms, const Vec3& p,
                           double clearance) {
    bool in_room = false;
    for (const auto& r : rooms) {
        if (p.x >= r.min.x + clearance && p.x <= r.max.x - clearance && p.y >= r.min.y + clearance &&
            p.y <= r.max.y - clearance && p.z >= r.min.z && p.z <= r.max.z - clearance) {
            in_room = true;
            break;
        }
    }
    // Positions in a doorway are not inside any interior box; accept them when
    // they sit on the corridor line between two rooms.
    if (!in_room) return false;
    for (const auto& o : scene.objects) {
        if (o.cls == SemanticClass::floor || o.cls == SemanticClass::ceiling ||
            o.cls == SemanticClass::wall)
            continue;
        if (o.world_aabb().distance(p) < clearance) return false;
    }
    return true;
}

inline Scene generate_scene(uint64_t seed, const SceneSpec& spec) {
    spec.validate();
    using namespace scene_limits;
    Rng rng(hash_combine(0x5ce9e5eedULL, seed));

    Scene scene;
    int32_t next_id = 0;
    auto add_box_object = [&](SemanticClass cls, const Box3& box, const Pose& pose = Pose()) {
        SceneObject o;
        o.id = next_id++;
        o.cls = cls;
        o.geometry = box;
        o.pose = pose;
        scene.objects.push_back(std::move(o));
    };

    const double depth = rng.uniform(7.0, 8.5);        // shared y extent
    const double height = rng.uniform(2.6, 3.2);       // shared interior height
    const double corridor_y = depth / 2.0;
    std::vector<double> widths;
    for (int i = 0; i < spec.rooms; ++i) widths.push_back(rng.uniform(5.5, 9.0));

    const double t = kWallThickness;
    std::vector<double> x0(static_cast<size_t>(spec.rooms));  // interior start of each room
    double cursor = 0.0;
    for (int i = 0; i < spec.rooms; ++i) {
        x0[static_cast<size_t>(i)] = cursor;
        cursor += widths[static_cast<size_t>(i)] + t;
    }
    const double total_x = cursor - t;

    scene.bounds = {{-t, -t, -t}, {total_x + t, depth + t, height + t}};

    // Structure: floor, ceiling, exterior walls per room.
    for (int i = 0; i < spec.rooms; ++i) {
        const double xa = x0[static_cast<size_t>(i)];
        const double xb = xa + widths[static_cast<size_t>(i)];
        add_box_object(SemanticClass::floor, {{xa, 0, -t}, {xb, depth, 0}});
        add_box_object(SemanticClass::ceiling, {{xa, 0, height}, {xb, depth, height + t}});
        add_box_object(SemanticClass::wall, {{xa, -t, 0}, {xb, 0, height}});          // south
        add_box_object(SemanticClass::wall, {{xa, depth, 0}, {xb, depth + t, height}});  // north
    }
    add_box_object(SemanticClass::wall, {{-t, -t, 0}, {0, depth + t, height}});  // west cap
    add_box_object(SemanticClass::wall, {{total_x, -t, 0}, {total_x + t, depth + t, height}});

    // Dividing walls with a door opening on the corridor line; one mesh object
    // per divider so each pierced wall stays a single instance.
    for (int i = 0; i + 1 < spec.rooms; ++i) {
        const double xd = x0[static_cast<size_t>(i)] + widths[static_cast<size_t>(i)];
        const double ya = corridor_y - kDoorWidth / 2.0;
        const double yb = corridor_y + kDoorWidth / 2.0;
        TriMesh mesh;
        mesh.add_box({{xd, -t, 0}, {xd + t, ya, height}});
        mesh.add_box({{xd, yb, 0}, {xd + t, depth + t, height}});
        mesh.add_box({{xd, ya, kDoorHeight}, {xd + t, yb, height}});
        SceneObject divider;
        divider.id = next_id++;
        divider.cls = SemanticClass::wall;
        divider.geometry = std::move(mesh);
        scene.objects.push_back(std::move(divider));

        // Ajar door panel hinged at the south edge of the opening, swung into
        // the next room and folded back along the divider, away from the
        // corridor line.
        const double open_angle = rng.uniform(deg2rad(15.0), deg2rad(70.0));
        const Pose door_pose(Rotation::yaw(open_angle - kPi / 2.0),
                             {xd + t / 2.0, ya, 0.0});
        add_box_object(SemanticClass::door,
                       {{0.0, -0.025, 0.0}, {kDoorWidth - 0.05, 0.025, kDoorHeight - 0.05}},
                       door_pose);
    }

    // Furniture.
    const Box3 corridor{{-t, corridor_y - kCorridorHalfWidth, 0},
                        {total_x + t, corridor_y + kCorridorHalfWidth, kCorridorHeight}};
    std::vector<Box3> placed;  // world AABBs of furniture placed so far

    struct PaletteEntry {
        SemanticClass cls;
        double weight;
    };
    static const std::vector<PaletteEntry> palette = {
        {SemanticClass::table, 0.18},  {SemanticClass::chair, 0.26},
        {SemanticClass::bookcase, 0.12}, {SemanticClass::sofa, 0.12},
        {SemanticClass::column, 0.06}, {SemanticClass::beam, 0.05},
        {SemanticClass::window, 0.08}, {SemanticClass::board, 0.08},
        {SemanticClass::clutter, 0.05}};

    auto draw_class = [&]() {
        double u = rng.uniform();
        for (const auto& e : palette) {
            if (u < e.weight) return e.cls;
            u -= e.weight;
        }
        return palette.back().cls;
    };

    for (int i = 0; i < spec.rooms; ++i) {
        const double xa = x0[static_cast<size_t>(i)];
        const double xb = xa + widths[static_cast<size_t>(i)];
        for (int k = 0; k < spec.furniture_per_room; ++k) {
            const SemanticClass cls = draw_class();
            bool ok = false;
            for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
                if (cls == SemanticClass::window || cls == SemanticClass::board) {
                    const bool north = rng.uniform() < 0.5;
                    const double w = cls == SemanticClass::window ? rng.uniform(1.0, 1.8)
                                                                  : rng.uniform(0.9, 1.6);
                    const double z0 = cls == SemanticClass::window ? 0.9 : rng.uniform(0.9, 1.2);
                    const double z1 = cls == SemanticClass::window ? 2.1 : z0 + rng.uniform(0.6, 1.0);
                    const double x = rng.uniform(xa + 0.3, xb - 0.3 - w);
                    const Box3 box = north ? Box3{{x, depth - 0.04, z0}, {x + w, depth, z1}}
                                           : Box3{{x, 0, z0}, {x + w, 0.04, z1}};
                    bool clash = false;
                    for (const auto& b : placed)
                        if (box.expanded(0.1).overlaps(b)) clash = true;
                    if (clash) continue;
                    add_box_object(cls, box);
                    placed.push_back(box);
                    ok = true;
                } else if (cls == SemanticClass::beam) {
                    const double w = rng.uniform(0.2, 0.4);
                    const double y = rng.uniform(0.5, depth - 0.5 - w);
                    const Box3 box{{xa, y, height - 0.35}, {xb, y + w, height - 0.05}};
                    bool clash = false;
                    for (const auto& b : placed)
                        if (box.expanded(0.1).overlaps(b)) clash = true;
                    if (clash) continue;
                    add_box_object(cls, box);
                    placed.push_back(box);
                    ok = true;
                } else {
                    Vec3 dims;
                    switch (cls) {
                        case SemanticClass::table:
                            dims = {rng.uniform(1.0, 1.7), rng.uniform(0.6, 0.9), rng.uniform(0.68, 0.8)};
                            break;
                        case SemanticClass::chair:
                            dims = {rng.uniform(0.4, 0.6), rng.uniform(0.4, 0.6), rng.uniform(0.75, 1.0)};
                            break;
                        case SemanticClass::bookcase:
                            dims = {rng.uniform(0.7, 1.2), rng.uniform(0.25, 0.4), rng.uniform(1.5, 2.2)};
                            break;
                        case SemanticClass::sofa:
                            dims = {rng.uniform(1.5, 2.2), rng.uniform(0.7, 1.0), rng.uniform(0.65, 0.9)};
                            break;
                        case SemanticClass::column:
                            dims = {rng.uniform(0.25, 0.4), rng.uniform(0.25, 0.4), height};
                            break;
                        default:  // clutter
                            dims = {rng.uniform(0.2, 0.7), rng.uniform(0.2, 0.7), rng.uniform(0.2, 0.7)};
                            break;
                    }
                    const double yaw = cls == SemanticClass::column ? 0.0 : rng.uniform(0.0, 2.0 * kPi);
                    const double margin = 0.5 * std::max(dims.x, dims.y) + 0.15;
                    if (xb - xa < 2 * margin || depth < 2 * margin) continue;
                    const Vec3 center{rng.uniform(xa + margin, xb - margin),
                                      rng.uniform(margin, depth - margin), 0.0};
                    const Box3 aabb = detail::yawed_box_aabb(center, dims, yaw);
                    // the corridor strip already carries its own margin
                    if (aabb.expanded(0.1).overlaps(corridor)) continue;
                    bool clash = false;
                    for (const auto& b : placed)
                        if (aabb.expanded(kFurnitureClearance).overlaps(b)) clash = true;
                    if (clash) continue;
                    const Pose pose(Rotation::yaw(yaw), center);
                    add_box_object(cls, {{-dims.x / 2, -dims.y / 2, 0}, {dims.x / 2, dims.y / 2, dims.z}},
                                   pose);
                    placed.push_back(aabb);
                    ok = true;
                }
            }
            if (!ok)
                throw std::runtime_error(
                    "generate_scene: could not place a '" + std::string(to_string(cls)) +
                    "' in room " + std::to_string(i) + " after " +
                    std::to_string(kPlacementAttempts) + " attempts; reduce furniture_per_room");
        }
    }
    return scene;
}

}  // namespace instaloc
