#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "instaloc/experiment.hpp"
#include "test_helpers.hpp"

using namespace instaloc;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.scene_seed = 19;
    cfg.scene_spec = SceneSpec{2, 4};
    cfg.lidar.beam_count = 64;
    cfg.lidar.azimuth_steps = 256;
    cfg.lidar.range_noise_sigma = 0.0;
    cfg.segmentation = SegmentationParams::from_lidar(cfg.lidar);
    cfg.match.seed = 4;
    cfg.query_mode = QueryMode::map;
    cfg.scan_seed = 77;
    return cfg;
}

std::string report_csv_string(const EvaluationReport& report) {
    const auto path = fs::temp_directory_path() / "instaloc_test_report.csv";
    write_report_csv(report, path.string());
    std::ifstream f(path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("experiment config json round trip", "[experiment]") {
    ExperimentConfig cfg = small_config();
    cfg.query_label_flip = 0.12;
    cfg.model_path = "model.json";
    cfg.query_mode = QueryMode::all;
    const nlohmann::json j = experiment_config_to_json(cfg);
    const ExperimentConfig back = experiment_config_from_json(j);
    CHECK(experiment_config_to_json(back).dump() == j.dump());
    CHECK(back.segmentation.beam_count == cfg.lidar.beam_count);
}

TEST_CASE("trajectory stays in free space and is deterministic", "[experiment]") {
    const Scene scene = generate_scene(23, SceneSpec{3, 6});
    const auto a = generate_trajectory(scene, 0.7, 5);
    const auto b = generate_trajectory(scene, 0.7, 5);
    REQUIRE(a.size() == b.size());
    REQUIRE(a.size() >= 15);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK((a[i].translation - b[i].translation).norm() == 0.0);
        CHECK(scene.bounds.contains(a[i].translation));
        // no trajectory pose may sit inside (or graze) furniture
        for (const auto& obj : scene.objects) {
            if (obj.cls == SemanticClass::floor || obj.cls == SemanticClass::ceiling ||
                obj.cls == SemanticClass::wall)
                continue;
            CHECK(obj.world_aabb().distance(a[i].translation) > 0.1);
        }
    }
    // consecutive poses are about one step apart
    for (size_t i = 1; i < a.size(); ++i) {
        const double d = (a[i].translation - a[i - 1].translation).norm();
        CHECK(d > 0.4);
        CHECK(d < 1.0);
    }
    const auto c = generate_trajectory(scene, 0.7, 6);
    CHECK((a[1].translation - c[1].translation).norm() > 0.0);
}

TEST_CASE("self-localization experiment is perfect and deterministic",
          "[experiment][slow]") {
    const ExperimentConfig cfg = small_config();
    const ExperimentResult r1 = run_experiment(cfg);
    CHECK(r1.report.recall == Catch::Approx(1.0));
    CHECK(r1.report.precision == Catch::Approx(1.0));
    CHECK(r1.query_indices.size() == r1.map_scan_indices.size());

    const ExperimentResult r2 = run_experiment(cfg);
    CHECK(report_csv_string(r1.report) == report_csv_string(r2.report));

    SECTION("timing fields cover the per-query wall clock") {
        for (const auto& rec : r1.report.records) {
            CHECK(rec.timings.segment_ms >= 0.0);
            CHECK(rec.timings.describe_ms >= 0.0);
            CHECK(rec.timings.match_ms >= 0.0);
            CHECK(rec.timings.ransac_ms >= 0.0);
            const double sum = rec.timings.segment_ms + rec.timings.describe_ms +
                               rec.timings.match_ms + rec.timings.ransac_ms;
            CHECK(sum <= rec.timings.total_ms + 1.0);
            CHECK(sum >= 0.9 * rec.timings.total_ms - 1.0);
        }
    }
}

TEST_CASE("offset queries still localize on a small scene", "[experiment][slow]") {
    ExperimentConfig cfg = small_config();
    cfg.query_mode = QueryMode::offset;
    const ExperimentResult r = run_experiment(cfg);
    REQUIRE(r.query_indices.size() > 0);
    CHECK(r.report.recall > 0.5);
    CHECK(r.report.precision > 0.8);
}

TEST_CASE("density ablation rows are ordered and deterministic", "[experiment][slow]") {
    ExperimentConfig cfg = small_config();
    cfg.query_mode = QueryMode::all;
    const std::vector<double> spacings = {1.5, 2.1, 3.0, 2.1};
    const auto rows = density_ablation(cfg, spacings);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].map_scan_count > rows[1].map_scan_count);
    CHECK(rows[1].map_scan_count > rows[2].map_scan_count);
    // duplicate spacing reproduces the identical row
    CHECK(rows[1].map_scan_count == rows[3].map_scan_count);
    CHECK(rows[1].recall == rows[3].recall);
    CHECK(rows[1].precision == rows[3].precision);

    const auto path = fs::temp_directory_path() / "instaloc_test_ablation.csv";
    write_ablation_csv(rows, path.string());
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "spacing,map_scan_count,recall,precision");
}

TEST_CASE("ablation requires at least two spacings", "[experiment]") {
    CHECK_THROWS_AS(density_ablation(small_config(), {2.1}), std::invalid_argument);
}
