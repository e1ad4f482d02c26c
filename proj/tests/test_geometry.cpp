#include <catch2/catch_amalgamated.hpp>

#include "instaloc/geometry.hpp"
#include "test_helpers.hpp"

using namespace instaloc;
using instaloc::testing::max_abs_diff;
using instaloc::testing::random_pose;
using instaloc::testing::random_rotation;

TEST_CASE("pose composition basics", "[geometry]") {
    const Pose id = Pose::identity();
    CHECK(max_abs_diff((id * id).rotation.matrix(), Mat3::identity()) == 0.0);
    CHECK((id * id).translation.norm() == 0.0);

    const Pose a = Pose::from_translation({1, 0, 0});
    const Pose b = Pose::from_translation({0, 2, 0});
    const Pose ab = a * b;
    CHECK(ab.translation.x == Catch::Approx(1.0));
    CHECK(ab.translation.y == Catch::Approx(2.0));
    CHECK(ab.translation.z == Catch::Approx(0.0));
}

TEST_CASE("pose inverse gives identity", "[geometry]") {
    Rng rng(11);
    for (int i = 0; i < 50; ++i) {
        const Pose p = random_pose(rng);
        const Pose r = p * p.inverse();
        CHECK(max_abs_diff(r.rotation.matrix(), Mat3::identity()) < 1e-9);
        CHECK(r.translation.norm() < 1e-9);
    }
}

TEST_CASE("composition acts as a(b(p))", "[geometry]") {
    Rng rng(12);
    for (int i = 0; i < 30; ++i) {
        const Pose a = random_pose(rng);
        const Pose b = random_pose(rng);
        const Point3 p{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        const Point3 lhs = (a * b).apply(p);
        const Point3 rhs = a.apply(b.apply(p));
        CHECK((lhs - rhs).norm() < 1e-9);
    }
}

TEST_CASE("composition is associative", "[geometry]") {
    Rng rng(13);
    for (int i = 0; i < 50; ++i) {
        const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
        const Pose lhs = (a * b) * c;
        const Pose rhs = a * (b * c);
        CHECK(max_abs_diff(lhs.rotation.matrix(), rhs.rotation.matrix()) < 1e-9);
        CHECK((lhs.translation - rhs.translation).norm() < 1e-9);
    }
}

TEST_CASE("transform_cloud", "[geometry]") {
    PointCloud cloud;
    cloud.points = {{1, 1, 1}, {1, 0, 0}, {-2, 3, 0.5}};

    SECTION("identity leaves the cloud unchanged") {
        const PointCloud out = transform_cloud(Pose::identity(), cloud);
        REQUIRE(out.size() == cloud.size());
        for (size_t i = 0; i < cloud.size(); ++i)
            CHECK((out.points[i] - cloud.points[i]).norm() == 0.0);
    }
    SECTION("pure translation") {
        const PointCloud out = transform_cloud(Pose::from_translation({0, 0, 1}), cloud);
        CHECK(out.points[0].x == Catch::Approx(1.0));
        CHECK(out.points[0].y == Catch::Approx(1.0));
        CHECK(out.points[0].z == Catch::Approx(2.0));
    }
    SECTION("90 degree yaw maps (1,0,0) to (0,1,0)") {
        const Pose yaw(Rotation::yaw(kPi / 2.0), Vec3::zero());
        const PointCloud out = transform_cloud(yaw, cloud);
        CHECK(std::abs(out.points[1].x - 0.0) < 1e-12);
        CHECK(std::abs(out.points[1].y - 1.0) < 1e-12);
        CHECK(std::abs(out.points[1].z - 0.0) < 1e-12);
    }
    SECTION("ordering preserved and rigidity holds for random poses") {
        Rng rng(14);
        for (int i = 0; i < 20; ++i) {
            const Pose p = random_pose(rng);
            const PointCloud out = transform_cloud(p, cloud);
            REQUIRE(out.size() == cloud.size());
            for (size_t a = 0; a < cloud.size(); ++a)
                for (size_t b = a + 1; b < cloud.size(); ++b) {
                    const double before = (cloud.points[a] - cloud.points[b]).norm();
                    const double after = (out.points[a] - out.points[b]).norm();
                    CHECK(std::abs(before - after) < 1e-9);
                }
        }
    }
}

TEST_CASE("rotation_angle_between", "[geometry]") {
    const Rotation id = Rotation::identity();
    CHECK(rotation_angle_between(id, id) == Catch::Approx(0.0));

    const Rotation yaw10 = Rotation::yaw(deg2rad(10.0));
    CHECK(std::abs(rotation_angle_between(id, yaw10) - 10.0) < 1e-9);

    const Rotation roll180 = Rotation::roll(kPi);
    CHECK(rotation_angle_between(id, roll180) == Catch::Approx(180.0));

    Rng rng(15);
    for (int i = 0; i < 100; ++i) {
        const Rotation a = random_rotation(rng), b = random_rotation(rng), c = random_rotation(rng);
        const double ab = rotation_angle_between(a, b);
        const double ba = rotation_angle_between(b, a);
        CHECK(std::abs(ab - ba) < 1e-9);
        CHECK(ab >= 0.0);
        CHECK(ab <= 180.0);
        // triangle inequality on the geodesic metric
        CHECK(ab <= rotation_angle_between(a, c) + rotation_angle_between(c, b) + 1e-6);
    }
}

TEST_CASE("rotations satisfy SO(3) invariants", "[geometry]") {
    Rng rng(16);
    for (int i = 0; i < 100; ++i) {
        const Rotation r = random_rotation(rng);
        CHECK(r.is_valid(1e-9));
        CHECK((r * r.inverse()).is_valid(1e-9));
    }
    Mat3 bad = Mat3::identity();
    bad(0, 0) = 2.0;
    CHECK_THROWS_AS(Rotation::from_matrix(bad), std::invalid_argument);
}
