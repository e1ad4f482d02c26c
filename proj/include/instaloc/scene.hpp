// Scene model for the simulator: objects are axis-aligned boxes or triangle
// meshes posed in the world frame, each with a semantic class and a unique id.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "instaloc/geometry.hpp"
#include "instaloc/semantics.hpp"

namespace instaloc {

struct Box3 {
    Vec3 min;
    Vec3 max;

    Vec3 center() const { return (min + max) * 0.5; }
    Vec3 extents() const { return max - min; }
    double volume() const {
        const Vec3 e = extents();
        return e.x * e.y * e.z;
    }
    bool contains(const Vec3& p, double tol = 0.0) const {
        return p.x >= min.x - tol && p.x <= max.x + tol && p.y >= min.y - tol &&
               p.y <= max.y + tol && p.z >= min.z - tol && p.z <= max.z + tol;
    }
    bool overlaps(const Box3& o) const {
        return min.x < o.max.x && max.x > o.min.x && min.y < o.max.y && max.y > o.min.y &&
               min.z < o.max.z && max.z > o.min.z;
    }
    Box3 expanded(double margin) const {
        return {min - Vec3(margin, margin, margin), max + Vec3(margin, margin, margin)};
    }
    /// Euclidean distance from p to the box; 0 when inside.
    double distance(const Vec3& p) const {
        const double dx = std::max({min.x - p.x, 0.0, p.x - max.x});
        const double dy = std::max({min.y - p.y, 0.0, p.y - max.y});
        const double dz = std::max({min.z - p.z, 0.0, p.z - max.z});
        return std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    static Box3 merge(const Box3& a, const Box3& b) {
        return {{std::min(a.min.x, b.min.x), std::min(a.min.y, b.min.y), std::min(a.min.z, b.min.z)},
                {std::max(a.max.x, b.max.x), std::max(a.max.y, b.max.y), std::max(a.max.z, b.max.z)}};
    }
};

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    /// Appends the 12 triangles of an axis-aligned box.
    void add_box(const Box3& b) {
        const int base = static_cast<int>(vertices.size());
        const Vec3& mn = b.min;
        const Vec3& mx = b.max;
        vertices.push_back({mn.x, mn.y, mn.z});
        vertices.push_back({mx.x, mn.y, mn.z});
        vertices.push_back({mx.x, mx.y, mn.z});
        vertices.push_back({mn.x, mx.y, mn.z});
        vertices.push_back({mn.x, mn.y, mx.z});
        vertices.push_back({mx.x, mn.y, mx.z});
        vertices.push_back({mx.x, mx.y, mx.z});
        vertices.push_back({mn.x, mx.y, mx.z});
        static const int quads[6][4] = {{0, 1, 2, 3}, {4, 7, 6, 5}, {0, 4, 5, 1},
                                        {1, 5, 6, 2}, {2, 6, 7, 3}, {3, 7, 4, 0}};
        for (const auto& q : quads) {
            faces.push_back({base + q[0], base + q[1], base + q[2]});
            faces.push_back({base + q[0], base + q[2], base + q[3]});
        }
    }

    Box3 aabb() const {
        Box3 b{{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
                std::numeric_limits<double>::max()},
               {std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest(),
                std::numeric_limits<double>::lowest()}};
        for (const auto& v : vertices) {
            b.min.x = std::min(b.min.x, v.x);
            b.min.y = std::min(b.min.y, v.y);
            b.min.z = std::min(b.min.z, v.z);
            b.max.x = std::max(b.max.x, v.x);
            b.max.y = std::max(b.max.y, v.y);
            b.max.z = std::max(b.max.z, v.z);
        }
        return b;
    }
};

using ObjectGeometry = std::variant<Box3, TriMesh>;

struct SceneObject {
    int32_t id = 0;
    SemanticClass cls = SemanticClass::clutter;
    ObjectGeometry geometry;  // in the object's local frame
    Pose pose;                // local -> world

    Box3 world_aabb() const {
        if (const Box3* b = std::get_if<Box3>(&geometry)) {
            Box3 out{pose.apply(b->min), pose.apply(b->min)};
            for (int corner = 1; corner < 8; ++corner) {
                const Vec3 c{(corner & 1) ? b->max.x : b->min.x,
                             (corner & 2) ? b->max.y : b->min.y,
                             (corner & 4) ? b->max.z : b->min.z};
                out = Box3::merge(out, Box3{pose.apply(c), pose.apply(c)});
            }
            return out;
        }
        const TriMesh& m = std::get<TriMesh>(geometry);
        Box3 out{pose.apply(m.vertices.at(0)), pose.apply(m.vertices.at(0))};
        for (const auto& v : m.vertices) {
            const Vec3 w = pose.apply(v);
            out = Box3::merge(out, Box3{w, w});
        }
        return out;
    }

    bool degenerate() const {
        if (const Box3* b = std::get_if<Box3>(&geometry)) return b->volume() <= 0.0;
        return std::get<TriMesh>(geometry).faces.empty();
    }
};

struct Scene {
    std::vector<SceneObject> objects;
    Box3 bounds{};

    const SceneObject* find_object(int32_t id) const {
        for (const auto& o : objects)
            if (o.id == id) return &o;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Ray intersection
// ---------------------------------------------------------------------------

/// Slab test. Returns the entry distance along the unit direction `d`, or the
/// exit distance when the origin lies inside the box. No hit -> nullopt.
inline std::optional<double> ray_box_intersect(const Vec3& o, const Vec3& d, const Box3& box,
                                               double t_eps = 1e-12) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    const double od[3] = {o.x, o.y, o.z};
    const double dd[3] = {d.x, d.y, d.z};
    const double mn[3] = {box.min.x, box.min.y, box.min.z};
    const double mx[3] = {box.max.x, box.max.y, box.max.z};
    for (int a = 0; a < 3; ++a) {
        if (dd[a] == 0.0) {
            if (od[a] < mn[a] || od[a] > mx[a]) return std::nullopt;
            continue;
        }
        double ta = (mn[a] - od[a]) / dd[a];
        double tb = (mx[a] - od[a]) / dd[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return std::nullopt;
    }
    if (t0 > t_eps) return t0;
    if (t1 > t_eps) return t1;  // origin inside the box
    return std::nullopt;
}

/// Moller-Trumbore, no backface culling.
inline std::optional<double> ray_triangle_intersect(const Vec3& o, const Vec3& d, const Vec3& v0,
                                                    const Vec3& v1, const Vec3& v2,
                                                    double t_eps = 1e-12) {
    const Vec3 e1 = v1 - v0;
    const Vec3 e2 = v2 - v0;
    const Vec3 pvec = d.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < 1e-14) return std::nullopt;
    const double inv_det = 1.0 / det;
    const Vec3 tvec = o - v0;
    const double u = tvec.dot(pvec) * inv_det;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 qvec = tvec.cross(e1);
    const double v = d.dot(qvec) * inv_det;
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    const double t = e2.dot(qvec) * inv_det;
    if (t <= t_eps) return std::nullopt;
    return t;
}

/// Nearest intersection of a world-frame ray with a posed object.
inline std::optional<double> ray_object_intersect(const Vec3& origin, const Vec3& dir,
                                                  const SceneObject& obj) {
    const Pose inv = obj.pose.inverse();
    const Vec3 lo = inv.apply(origin);
    const Vec3 ld = inv.rotation.apply(dir);
    if (const Box3* b = std::get_if<Box3>(&obj.geometry)) return ray_box_intersect(lo, ld, *b);
    const TriMesh& m = std::get<TriMesh>(obj.geometry);
    std::optional<double> best;
    for (const auto& f : m.faces) {
        const auto t = ray_triangle_intersect(lo, ld, m.vertices[static_cast<size_t>(f[0])],
                                              m.vertices[static_cast<size_t>(f[1])],
                                              m.vertices[static_cast<size_t>(f[2])]);
        if (t && (!best || *t < *best)) best = t;
    }
    return best;
}

/// Distance from a world point to the object's surface-or-interior (0 inside
/// boxes). Used by tests to check label soundness.
inline double point_object_distance(const Vec3& p, const SceneObject& obj) {
    const Vec3 lp = obj.pose.inverse().apply(p);
    if (const Box3* b = std::get_if<Box3>(&obj.geometry)) return b->distance(lp);
    const TriMesh& m = obj.geometry.index() == 1 ? std::get<TriMesh>(obj.geometry) : TriMesh{};
    double best = std::numeric_limits<double>::max();
    for (const auto& f : m.faces) {
        const Vec3& a = m.vertices[static_cast<size_t>(f[0])];
        const Vec3& b2 = m.vertices[static_cast<size_t>(f[1])];
        const Vec3& c = m.vertices[static_cast<size_t>(f[2])];
        // project onto the triangle plane, clamp into the triangle
        const Vec3 ab = b2 - a, ac = c - a, ap = lp - a;
        const double d1 = ab.dot(ap), d2 = ac.dot(ap);
        Vec3 q;
        if (d1 <= 0 && d2 <= 0) {
            q = a;
        } else {
            const Vec3 bp = lp - b2;
            const double d3 = ab.dot(bp), d4 = ac.dot(bp);
            if (d3 >= 0 && d4 <= d3) {
                q = b2;
            } else {
                const Vec3 cp = lp - c;
                const double d5 = ab.dot(cp), d6 = ac.dot(cp);
                if (d6 >= 0 && d5 <= d6) {
                    q = c;
                } else {
                    const double vc = d1 * d4 - d3 * d2;
                    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
                        q = a + ab * (d1 / (d1 - d3));
                    } else {
                        const double vb = d5 * d2 - d1 * d6;
                        if (vb <= 0 && d2 >= 0 && d6 <= 0) {
                            q = a + ac * (d2 / (d2 - d6));
                        } else {
                            const double va = d3 * d6 - d5 * d4;
                            if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
                                q = b2 + (c - b2) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
                            } else {
                                const double denom = 1.0 / (va + vb + vc);
                                q = a + ab * (vb * denom) + ac * (vc * denom);
                            }
                        }
                    }
                }
            }
        }
        best = std::min(best, (lp - q).norm());
    }
    return best;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json vec3_to_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected [x,y,z] array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json pose_to_json(const Pose& p) {
    nlohmann::json j;
    j["translation"] = vec3_to_json(p.translation);
    j["rotation"] = p.rotation.matrix().m;  // row-major
    return j;
}

inline Pose pose_from_json(const nlohmann::json& j) {
    Mat3 m;
    const auto arr = j.at("rotation");
    if (!arr.is_array() || arr.size() != 9) throw std::runtime_error("expected 9-entry rotation");
    for (size_t i = 0; i < 9; ++i) m.m[i] = arr[i].get<double>();
    return {Rotation::from_matrix(m), vec3_from_json(j.at("translation"))};
}

}  // namespace detail

inline constexpr int kSceneFormatVersion = 1;

inline nlohmann::json scene_to_json(const Scene& scene) {
    nlohmann::json j;
    j["format_version"] = kSceneFormatVersion;
    j["bounds"] = {{"min", detail::vec3_to_json(scene.bounds.min)},
                   {"max", detail::vec3_to_json(scene.bounds.max)}};
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : scene.objects) {
        nlohmann::json jo;
        jo["id"] = o.id;
        jo["class"] = to_string(o.cls);
        if (const Box3* b = std::get_if<Box3>(&o.geometry)) {
            jo["geometry"] = {{"type", "box"},
                              {"min", detail::vec3_to_json(b->min)},
                              {"max", detail::vec3_to_json(b->max)}};
        } else {
            const TriMesh& m = std::get<TriMesh>(o.geometry);
            nlohmann::json verts = nlohmann::json::array();
            for (const auto& v : m.vertices) verts.push_back(detail::vec3_to_json(v));
            nlohmann::json faces = nlohmann::json::array();
            for (const auto& f : m.faces) faces.push_back(nlohmann::json::array({f[0], f[1], f[2]}));
            jo["geometry"] = {{"type", "mesh"}, {"vertices", verts}, {"faces", faces}};
        }
        jo["pose"] = detail::pose_to_json(o.pose);
        objs.push_back(jo);
    }
    j["objects"] = objs;
    return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
    const int version = j.at("format_version").get<int>();
    if (version != kSceneFormatVersion)
        throw std::runtime_error("scene_from_json: unsupported format_version " +
                                 std::to_string(version));
    Scene scene;
    scene.bounds.min = detail::vec3_from_json(j.at("bounds").at("min"));
    scene.bounds.max = detail::vec3_from_json(j.at("bounds").at("max"));
    for (const auto& jo : j.at("objects")) {
        SceneObject o;
        o.id = jo.at("id").get<int32_t>();
        o.cls = semantic_class_from_name(jo.at("class").get<std::string>());
        const auto& g = jo.at("geometry");
        const std::string type = g.at("type").get<std::string>();
        if (type == "box") {
            o.geometry = Box3{detail::vec3_from_json(g.at("min")), detail::vec3_from_json(g.at("max"))};
        } else if (type == "mesh") {
            TriMesh m;
            for (const auto& v : g.at("vertices")) m.vertices.push_back(detail::vec3_from_json(v));
            for (const auto& f : g.at("faces"))
                m.faces.push_back({f[0].get<int>(), f[1].get<int>(), f[2].get<int>()});
            o.geometry = std::move(m);
        } else {
            throw std::runtime_error("scene_from_json: unknown geometry type '" + type + "'");
        }
        o.pose = detail::pose_from_json(jo.at("pose"));
        scene.objects.push_back(std::move(o));
    }
    return scene;
}

inline void save_scene(const Scene& scene, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_scene: cannot open " + path);
    f << scene_to_json(scene).dump(2) << '\n';
}

inline Scene load_scene(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_scene: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_scene: " + path + ": " + e.what());
    }
    return scene_from_json(j);
}

}  // namespace instaloc
