#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "instaloc/ply_io.hpp"
#include "instaloc/scene.hpp"
#include "instaloc/scene_generator.hpp"
#include "test_helpers.hpp"

using namespace instaloc;
namespace fs = std::filesystem;

namespace {
fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "instaloc_test_io";
    fs::create_directories(dir);
    return dir / name;
}
}  // namespace

TEST_CASE("labeled ply round trip is exact", "[ply]") {
    Rng rng(21);
    std::vector<Point3> pts = instaloc::testing::random_points(rng, 200, 20.0);
    pts.push_back({0.1, -1e-17, 12345.6789012345678});  // awkward values
    std::vector<int32_t> sem(pts.size()), inst(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        sem[i] = static_cast<int32_t>(rng.uniform_index(13));
        inst[i] = static_cast<int32_t>(rng.uniform_index(50));
    }

    const std::string text = ply_to_string(pts, &sem, &inst);
    std::istringstream is(text);
    const PlyCloud back = read_ply(is);
    REQUIRE(back.points.size() == pts.size());
    REQUIRE(back.has_labels());
    for (size_t i = 0; i < pts.size(); ++i) {
        CHECK(back.points[i] == pts[i]);  // bit-exact via %.17g
        CHECK(back.semantic[i] == sem[i]);
        CHECK(back.instance[i] == inst[i]);
    }
}

TEST_CASE("unlabeled ply round trip", "[ply]") {
    const std::vector<Point3> pts = {{0, 0, 0}, {1.5, -2.25, 3.125}};
    std::istringstream is(ply_to_string(pts));
    const PlyCloud back = read_ply(is);
    REQUIRE(back.points.size() == 2);
    CHECK_FALSE(back.has_labels());
    CHECK(back.points[1] == pts[1]);
}

TEST_CASE("ply reader rejects malformed input", "[ply]") {
    SECTION("missing magic") {
        std::istringstream is("png\nwhatever\n");
        CHECK_THROWS_AS(read_ply(is), std::runtime_error);
    }
    SECTION("truncated body") {
        const std::vector<Point3> pts = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
        std::string text = ply_to_string(pts);
        text = text.substr(0, text.rfind("2 2 2"));
        std::istringstream is(text);
        CHECK_THROWS_WITH(read_ply(is), Catch::Matchers::ContainsSubstring("truncated"));
    }
    SECTION("missing coordinates") {
        std::istringstream is(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty double a\nend_header\n0.5\n");
        CHECK_THROWS_WITH(read_ply(is), Catch::Matchers::ContainsSubstring("x/y/z"));
    }
    SECTION("binary format refused") {
        std::istringstream is("ply\nformat binary_little_endian 1.0\nend_header\n");
        CHECK_THROWS_AS(read_ply(is), std::runtime_error);
    }
}

TEST_CASE("scene json round trip", "[scene]") {
    const Scene scene = generate_scene(7, SceneSpec{2, 4});
    const auto path = temp_file("scene_roundtrip.json");
    save_scene(scene, path.string());
    const Scene back = load_scene(path.string());

    REQUIRE(back.objects.size() == scene.objects.size());
    CHECK(scene_to_json(back).dump() == scene_to_json(scene).dump());
    // mesh objects must survive (dividing wall between the two rooms)
    bool has_mesh = false;
    for (const auto& o : back.objects)
        if (std::holds_alternative<TriMesh>(o.geometry)) has_mesh = true;
    CHECK(has_mesh);
}

TEST_CASE("scene load rejects future versions", "[scene]") {
    const Scene scene = generate_scene(3, SceneSpec{1, 0});
    nlohmann::json j = scene_to_json(scene);
    j["format_version"] = 999;
    const auto path = temp_file("scene_future.json");
    std::ofstream(path) << j.dump();
    CHECK_THROWS_WITH(load_scene(path.string()),
                      Catch::Matchers::ContainsSubstring("format_version"));
}

TEST_CASE("ray-box and ray-triangle intersections", "[scene]") {
    const Box3 box{{-1, -1, -1}, {1, 1, 1}};
    SECTION("entry from outside") {
        const auto t = ray_box_intersect({-5, 0, 0}, {1, 0, 0}, box);
        REQUIRE(t.has_value());
        CHECK(*t == Catch::Approx(4.0));
    }
    SECTION("from inside returns the exit") {
        const auto t = ray_box_intersect({0, 0, 0}, {0, 1, 0}, box);
        REQUIRE(t.has_value());
        CHECK(*t == Catch::Approx(1.0));
    }
    SECTION("miss") {
        CHECK_FALSE(ray_box_intersect({-5, 5, 0}, {1, 0, 0}, box).has_value());
    }
    SECTION("triangle hit and miss") {
        const Vec3 v0{0, -1, -1}, v1{0, 1, -1}, v2{0, 0, 1};
        const auto t = ray_triangle_intersect({-3, 0, 0}, {1, 0, 0}, v0, v1, v2);
        REQUIRE(t.has_value());
        CHECK(*t == Catch::Approx(3.0));
        CHECK_FALSE(ray_triangle_intersect({-3, 5, 0}, {1, 0, 0}, v0, v1, v2).has_value());
    }
    SECTION("posed object: rotation moves the hit") {
        SceneObject obj;
        obj.id = 1;
        obj.cls = SemanticClass::table;
        obj.geometry = Box3{{-0.5, -2, -0.5}, {0.5, 2, 0.5}};
        obj.pose = Pose(Rotation::yaw(kPi / 2.0), {0, 0, 0});  // long axis now along x
        const auto t = ray_object_intersect({-5, 0, 0}, {1, 0, 0}, obj);
        REQUIRE(t.has_value());
        CHECK(*t == Catch::Approx(3.0));
    }
}
