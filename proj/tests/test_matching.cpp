#include <catch2/catch_amalgamated.hpp>

#include "instaloc/matching.hpp"
#include "instaloc/scene_generator.hpp"
#include "instaloc/experiment.hpp"
#include "test_helpers.hpp"

using namespace instaloc;
using instaloc::testing::max_abs_diff;
using instaloc::testing::random_points;
using instaloc::testing::random_pose;
using instaloc::testing::random_rotation;

namespace {

InstanceMap map_from_descriptors(const std::vector<Descriptor>& descs,
                                 const std::vector<SemanticClass>& classes) {
    InstanceMap map;
    map.descriptor_dim = static_cast<int>(descs.front().dim());
    for (size_t i = 0; i < descs.size(); ++i) {
        MapEntry e;
        e.descriptor = descs[i];
        e.instance = make_instance({{0, 0, 0}}, classes[i], static_cast<int32_t>(i));
        e.scan_index = 0;
        map.entries.push_back(std::move(e));
    }
    return map;
}

Descriptor unit_desc(double v) {
    Descriptor d;
    d.values.assign(16, v);
    return d;
}

std::vector<Correspondence> congruent_correspondences(const Pose& truth,
                                                      const std::vector<Point3>& query_centroids) {
    std::vector<Correspondence> cands;
    for (size_t i = 0; i < query_centroids.size(); ++i) {
        Correspondence c;
        c.query_index = i;
        c.map_index = i;
        c.query_centroid = query_centroids[i];
        c.map_centroid = truth.apply(query_centroids[i]);
        cands.push_back(c);
    }
    return cands;
}

}  // namespace

TEST_CASE("correspondence proposals", "[matching]") {
    std::vector<Descriptor> descs;
    std::vector<SemanticClass> classes;
    for (int i = 0; i < 10; ++i) {
        descs.push_back(unit_desc(0.1 * i));
        classes.push_back(SemanticClass::chair);
    }
    const InstanceMap map = map_from_descriptors(descs, classes);

    std::vector<ObjectInstance> query = {make_instance({{1, 1, 1}}, SemanticClass::chair, 0)};
    std::vector<Descriptor> qd = {unit_desc(0.32)};

    SECTION("exactly N candidates") {
        const auto cands = propose_correspondences(query, qd, map, 3, false);
        REQUIRE(cands.size() == 3);
        CHECK(cands[0].map_index == 3);  // 0.30 is nearest to 0.32
    }
    SECTION("identical descriptor ranks first at distance zero") {
        qd[0] = descs[7];
        const auto cands = propose_correspondences(query, qd, map, 3, false);
        CHECK(cands[0].map_index == 7);
        CHECK(cands[0].descriptor_distance == 0.0);
    }
    SECTION("class filter removes cross-class pairs") {
        std::vector<SemanticClass> mixed = classes;
        for (size_t i = 0; i < mixed.size(); i += 2) mixed[i] = SemanticClass::wall;
        const InstanceMap mixed_map = map_from_descriptors(descs, mixed);
        const auto cands = propose_correspondences(query, qd, mixed_map, 10, true);
        for (const auto& c : cands)
            CHECK(mixed_map.entries[c.map_index].instance.cls == SemanticClass::chair);
    }
}

TEST_CASE("consistency grouping follows the pairwise slack", "[matching]") {
    const Pose truth(Rotation::yaw(0.7), {3, -1, 0.5});
    std::vector<Point3> centroids = {{0, 0, 0}, {4, 0, 1}, {0, 5, 2}};
    auto cands = congruent_correspondences(truth, centroids);

    SECTION("congruent triangle groups fully") {
        const auto groups = consistency_group(cands, 0.1, 3);
        REQUIRE(groups.size() == 1);
        CHECK(groups[0].size() == 3);
    }
    SECTION("a displaced map centroid is excluded from the seed's group") {
        cands[2].map_centroid += Vec3{1.0, 0, 0};
        const auto groups = consistency_group(cands, 0.1, 2);
        REQUIRE_FALSE(groups.empty());
        // seed 0's group contains 0 and 1 but not the displaced 2
        bool found = false;
        for (const auto& g : groups) {
            if (g.front() == 0) {
                found = true;
                CHECK(std::find(g.begin(), g.end(), size_t{2}) == g.end());
            }
        }
        CHECK(found);
    }
    SECTION("tau above the consistent count yields nothing") {
        CHECK(consistency_group(cands, 0.1, 4).empty());
    }
    SECTION("one correspondence per query instance per group") {
        // a second candidate for query 0 pointing elsewhere but still consistent
        Correspondence dup = cands[0];
        dup.map_index = 99;
        cands.push_back(dup);
        const auto groups = consistency_group(cands, 0.1, 3);
        for (const auto& g : groups) {
            std::set<size_t> queries;
            for (const size_t i : g) CHECK(queries.insert(cands[i].query_index).second);
        }
    }
    SECTION("membership is invariant under a rigid transform of either side") {
        const auto base_groups = consistency_group(cands, 0.25, 3);
        Rng rng(81);
        const Pose rigid = random_pose(rng);
        auto moved = cands;
        for (auto& c : moved) c.map_centroid = rigid.apply(c.map_centroid);
        CHECK(consistency_group(moved, 0.25, 3) == base_groups);
        auto moved_q = cands;
        for (auto& c : moved_q) c.query_centroid = rigid.apply(c.query_centroid);
        CHECK(consistency_group(moved_q, 0.25, 3) == base_groups);
    }
}

TEST_CASE("kabsch alignment", "[matching]") {
    Rng rng(82);

    SECTION("identity when both sides coincide") {
        std::vector<std::pair<Point3, Point3>> pairs;
        for (const auto& p : random_points(rng, 6, 3.0)) pairs.emplace_back(p, p);
        const auto pose = kabsch_align(pairs);
        REQUIRE(pose.has_value());
        CHECK(max_abs_diff(pose->rotation.matrix(), Mat3::identity()) < 1e-9);
        CHECK(pose->translation.norm() < 1e-9);
    }
    SECTION("recovers a 90-degree yaw plus shift exactly") {
        const Pose truth(Rotation::yaw(kPi / 2), {1, 2, 0});
        std::vector<std::pair<Point3, Point3>> pairs;
        for (const auto& p : random_points(rng, 5, 2.0)) pairs.emplace_back(p, truth.apply(p));
        const auto pose = kabsch_align(pairs);
        REQUIRE(pose.has_value());
        CHECK(max_abs_diff(pose->rotation.matrix(), truth.rotation.matrix()) < 1e-9);
        CHECK((pose->translation - truth.translation).norm() < 1e-9);
    }
    SECTION("random noise-free poses recovered with det +1") {
        for (int trial = 0; trial < 100; ++trial) {
            const Pose truth = random_pose(rng);
            std::vector<std::pair<Point3, Point3>> pairs;
            for (const auto& p : random_points(rng, 4 + rng.uniform_index(8), 4.0))
                pairs.emplace_back(p, truth.apply(p));
            const auto pose = kabsch_align(pairs);
            REQUIRE(pose.has_value());
            CHECK(pose->rotation.matrix().determinant() == Catch::Approx(1.0).margin(1e-9));
            CHECK((pose->translation - truth.translation).norm() < 1e-9);
            CHECK(rotation_angle_between(pose->rotation, truth.rotation) < 1e-7);
        }
    }
    SECTION("noisy pairs keep the residual near the noise floor") {
        const double sigma = 0.01;
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const Pose truth = random_pose(rng);
            std::vector<std::pair<Point3, Point3>> pairs;
            for (const auto& p : random_points(rng, 10, 4.0))
                pairs.emplace_back(p, truth.apply(p) + rng.gaussian_vec3(sigma));
            const auto pose = kabsch_align(pairs);
            REQUIRE(pose.has_value());
            double rms = 0.0;
            for (const auto& [q, m] : pairs) rms += (pose->apply(q) - m).squared_norm();
            rms = std::sqrt(rms / static_cast<double>(pairs.size()));
            worst = std::max(worst, rms);
        }
        CHECK(worst <= 3 * sigma);
    }
    SECTION("degenerate inputs are rejected") {
        CHECK_FALSE(kabsch_align({{{0, 0, 0}, {1, 1, 1}}}).has_value());
        std::vector<std::pair<Point3, Point3>> collinear;
        for (int i = 0; i < 5; ++i)
            collinear.emplace_back(Point3{1.0 * i, 0, 0}, Point3{0, 1.0 * i, 0});
        CHECK_FALSE(kabsch_align(collinear).has_value());
    }
}

TEST_CASE("ransac pose estimation", "[matching]") {
    Rng rng(83);
    MatchParams params;
    params.tau = 4;
    params.ransac_inlier_radius = 0.1;
    params.seed = 17;

    SECTION("outlier-free group localizes exactly with all inliers") {
        const Pose truth(Rotation::yaw(1.1), {2, 3, 0.2});
        const auto cands = congruent_correspondences(
            truth, {{0, 0, 0}, {4, 0, 1}, {0, 5, 2}, {3, 3, 0}, {-2, 1, 1}});
        std::vector<size_t> group = {0, 1, 2, 3, 4};
        const LocalizationResult r = ransac_pose(cands, group, params);
        REQUIRE(r.status == LocalizationStatus::localized);
        CHECK(r.inliers.size() == 5);
        CHECK((r.pose.translation - truth.translation).norm() < 1e-9);
        CHECK(rotation_angle_between(r.pose.rotation, truth.rotation) < 1e-7);
    }
    SECTION("half outliers are rejected in most seeded trials") {
        int good = 0;
        for (int trial = 0; trial < 20; ++trial) {
            const Pose truth = random_pose(rng, 5.0);
            auto cands = congruent_correspondences(
                truth, {{0, 0, 0}, {4, 0, 1}, {0, 5, 2}, {3, 3, 0}});
            for (int o = 0; o < 4; ++o) {
                Correspondence junk;
                junk.query_index = 4 + static_cast<size_t>(o);
                junk.map_index = 100 + static_cast<size_t>(o);
                junk.query_centroid = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 2)};
                junk.map_centroid = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 2)};
                cands.push_back(junk);
            }
            std::vector<size_t> group(cands.size());
            std::iota(group.begin(), group.end(), 0);
            MatchParams p2 = params;
            p2.ransac_inlier_radius = 0.3;
            p2.seed = static_cast<uint64_t>(trial);
            const LocalizationResult r = ransac_pose(cands, group, p2);
            if (r.status == LocalizationStatus::localized &&
                (r.pose.translation - truth.translation).norm() < 0.05 &&
                rotation_angle_between(r.pose.rotation, truth.rotation) < 1.0)
                ++good;
        }
        CHECK(good >= 18);
    }
    SECTION("collinear centroids are degenerate") {
        std::vector<Correspondence> cands;
        for (int i = 0; i < 3; ++i) {
            Correspondence c;
            c.query_index = static_cast<size_t>(i);
            c.query_centroid = {1.0 * i, 0, 0};
            c.map_centroid = {1.0 * i, 1, 0};
            cands.push_back(c);
        }
        MatchParams p3 = params;
        p3.tau = 3;
        const LocalizationResult r = ransac_pose(cands, {0, 1, 2}, p3);
        CHECK(r.status == LocalizationStatus::degenerate);
    }
    SECTION("determinism for a fixed seed") {
        const Pose truth = random_pose(rng, 4.0);
        const auto cands = congruent_correspondences(
            truth, {{0, 0, 0}, {4, 0, 1}, {0, 5, 2}, {3, 3, 0}, {1, -4, 0.5}});
        std::vector<size_t> group = {0, 1, 2, 3, 4};
        const LocalizationResult a = ransac_pose(cands, group, params);
        const LocalizationResult b = ransac_pose(cands, group, params);
        CHECK(a.status == b.status);
        CHECK((a.pose.translation - b.pose.translation).norm() == 0.0);
        CHECK(a.inliers.size() == b.inliers.size());
    }
}

TEST_CASE("end-to-end localization on a simulated scene", "[matching][slow]") {
    const Scene scene = generate_scene(91, SceneSpec{2, 5});
    LidarConfig lidar;
    lidar.beam_count = 64;
    lidar.azimuth_steps = 256;
    lidar.range_noise_sigma = 0.0;
    SegmentationParams seg = SegmentationParams::from_lidar(lidar);
    MatchParams match;
    match.seed = 5;

    const auto traj = generate_trajectory(scene, 0.7, 3);
    const auto kept = subsample_by_spacing(traj, 2.1);
    std::vector<LabeledScan> scans;
    for (const size_t i : kept)
        scans.push_back(raycast_scan(scene, traj[i], lidar, 1000 + i));
    const DescriptorEngine engine = DescriptorEngine::geometric();
    const InstanceMap map = build_map(scans, seg, engine, 2.1);
    REQUIRE(map.size() > 10);

    SECTION("a map scan re-queried recovers its own pose near-exactly") {
        for (size_t k = 0; k < scans.size(); k += 2) {
            const LocalizationResult r = localize(scans[k], map, seg, engine, match);
            REQUIRE(r.status == LocalizationStatus::localized);
            CHECK((r.pose.translation - scans[k].sensor_pose.translation).norm() < 1e-6);
            CHECK(rotation_angle_between(r.pose.rotation, scans[k].sensor_pose.rotation) < 1e-5);
        }
    }
    SECTION("a disjoint scene yields no consensus") {
        const Scene other = generate_scene(555, SceneSpec{1, 3});
        const Pose sensor(Rotation::identity(), room_interiors(other)[0].center());
        const LabeledScan q = raycast_scan(other, sensor, lidar, 7);
        const LocalizationResult r = localize(q, map, seg, engine, match);
        CHECK(r.status != LocalizationStatus::localized);
    }
    SECTION("localize is deterministic") {
        const LocalizationResult a = localize(scans[0], map, seg, engine, match);
        const LocalizationResult b = localize(scans[0], map, seg, engine, match);
        CHECK(a.status == b.status);
        CHECK((a.pose.translation - b.pose.translation).norm() == 0.0);
        CHECK(a.inliers.size() == b.inliers.size());
    }
}

TEST_CASE("evaluation counting conventions", "[matching]") {
    // checked through the public evaluate() on a tiny scene: queries equal to
    // map scans must be perfect, foreign queries must not detect at all
    const Scene scene = generate_scene(92, SceneSpec{1, 3});
    LidarConfig lidar;
    lidar.beam_count = 48;
    lidar.azimuth_steps = 192;
    lidar.range_noise_sigma = 0.0;
    SegmentationParams seg = SegmentationParams::from_lidar(lidar);
    MatchParams match;

    const Pose sensor(Rotation::yaw(0.4), room_interiors(scene)[0].center() + Vec3{0, 0, -0.3});
    const LabeledScan scan = raycast_scan(scene, sensor, lidar, 1);
    const InstanceMap map = build_map({scan}, seg, DescriptorEngine::geometric(), 0.0);

    const EvaluationReport good =
        evaluate(map, {scan}, seg, DescriptorEngine::geometric(), match);
    CHECK(good.recall == Catch::Approx(1.0));
    CHECK(good.precision == Catch::Approx(1.0));
    CHECK_FALSE(good.no_detections);

    // unmatched scene: nothing localizes, precision reported 1.0 but flagged
    const Scene other = generate_scene(93, SceneSpec{1, 5});
    const Pose sensor2(Rotation::identity(), room_interiors(other)[0].center());
    const LabeledScan q2 = raycast_scan(other, sensor2, lidar, 2);
    const EvaluationReport none =
        evaluate(map, {q2}, seg, DescriptorEngine::geometric(), match);
    CHECK(none.recall == 0.0);
    CHECK(none.precision == 1.0);
    CHECK(none.no_detections);
    REQUIRE(none.records.size() == 1);
    CHECK(std::isnan(none.records[0].translation_error));
}
