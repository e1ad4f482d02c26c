// instaloc command-line front end: simulation, segmentation, descriptor
// training/evaluation, map building, localization, evaluation, experiments
// and the map-density ablation. Exit code 0 on success; errors go to stderr
// with the failing stage in brackets.

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "instaloc/instaloc.hpp"

namespace fs = std::filesystem;
using namespace instaloc;

namespace {

struct StageError : std::runtime_error {
    StageError(const std::string& stage, const std::string& msg)
        : std::runtime_error("[" + stage + "] " + msg) {}
};

void ensure_out_dir(const std::string& dir) {
    if (!dir.empty()) fs::create_directories(dir);
}

std::string metric(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    uint64_t seed = 0;
    int rooms = 3;
    int furniture = 6;
    int scans = 0;
    int triplets = 0;
    int beams = 128;
    int azimuth_steps = 512;
    double noise = 0.01;
    std::string out;
};

int run_simulate(const SimulateArgs& a) {
    ensure_out_dir(a.out);
    SceneSpec spec;
    spec.rooms = a.rooms;
    spec.furniture_per_room = a.furniture;
    Scene scene;
    try {
        scene = generate_scene(a.seed, spec);
    } catch (const std::exception& e) {
        throw StageError("simulate/scene", e.what());
    }
    save_scene(scene, (fs::path(a.out) / "scene.json").string());
    std::cout << "scene.json: " << scene.objects.size() << " objects\n";

    LidarConfig lidar;
    lidar.beam_count = a.beams;
    lidar.azimuth_steps = a.azimuth_steps;
    lidar.range_noise_sigma = a.noise;

    if (a.scans > 0) {
        const auto scans_dir = fs::path(a.out) / "scans";
        fs::create_directories(scans_dir);
        std::vector<Pose> traj;
        try {
            traj = generate_trajectory(scene, 0.7, hash_combine(a.seed, 0x17a7));
        } catch (const std::exception& e) {
            throw StageError("simulate/trajectory", e.what());
        }
        if (static_cast<size_t>(a.scans) < traj.size()) traj.resize(static_cast<size_t>(a.scans));
        std::vector<Pose> poses;
        for (size_t i = 0; i < traj.size(); ++i) {
            const LabeledScan scan = raycast_scan(scene, traj[i], lidar, hash_combine(a.seed, i));
            char name[32];
            std::snprintf(name, sizeof(name), "scan_%04zu.ply", i);
            save_scan(scan, (scans_dir / name).string());
            poses.push_back(traj[i]);
        }
        save_poses_csv(poses, (fs::path(a.out) / "poses.csv").string());
        std::cout << "scans/: " << poses.size() << " labeled scans, poses.csv\n";
    }

    if (a.triplets > 0) {
        std::vector<TripletSample> samples;
        try {
            samples = generate_triplets(scene, lidar, static_cast<size_t>(a.triplets),
                                        hash_combine(a.seed, 0x731));
        } catch (const std::exception& e) {
            throw StageError("simulate/triplets", e.what());
        }
        save_triplets(samples, (fs::path(a.out) / "triplets").string());
        std::cout << "triplets/: " << samples.size() << " samples\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// segment
// ---------------------------------------------------------------------------

struct SegmentArgs {
    std::string scan;
    double alpha = 4.0;
    double voxel = 0.02;
    size_t min_points = 50;
    int beams = 128;
    double vfov_deg = 90.0;
    std::string out;
};

int run_segment(const SegmentArgs& a) {
    ensure_out_dir(a.out);
    LabeledScan scan;
    try {
        scan = load_scan(a.scan);
    } catch (const std::exception& e) {
        throw StageError("segment/load", e.what());
    }
    SegmentationParams params;
    params.voxel_size = a.voxel;
    params.alpha = a.alpha;
    params.min_instance_points = a.min_points;
    params.beam_count = a.beams;
    params.vertical_fov = deg2rad(a.vfov_deg);
    try {
        const LabeledScan down = voxel_downsample(scan, params.voxel_size);
        const auto instances = segment_instances(down, params);
        save_instances(instances, a.out);
        std::cout << instances.size() << " instances -> " << a.out << "\n";
    } catch (const std::exception& e) {
        throw StageError("segment", e.what());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train-descriptor / eval-descriptor
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string triplets_dir;
    int epochs = 30;
    double lr = 0.001;
    int batch = 32;
    int dim = 16;
    uint64_t seed = 0;
    std::string out;
};

int run_train(const TrainArgs& a) {
    std::vector<TripletSample> triplets;
    try {
        triplets = load_triplets(a.triplets_dir);
    } catch (const std::exception& e) {
        throw StageError("train-descriptor/load", e.what());
    }
    EmbeddingModel model = make_embedding_model(a.dim, a.seed);
    TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch;
    cfg.seed = a.seed;
    try {
        const TrainResult r = train(model, triplets, cfg);
        save_model(model, a.out);
        std::cout << "trained on " << triplets.size() << " triplets, loss "
                  << metric(r.epoch_loss.front()) << " -> " << metric(r.epoch_loss.back())
                  << ", model: " << a.out << "\n";
    } catch (const std::exception& e) {
        throw StageError("train-descriptor", e.what());
    }
    return 0;
}

struct EvalArgs {
    std::string model;
    std::string triplets_dir;
    std::string pr_out;
};

int run_eval(const EvalArgs& a) {
    try {
        const std::vector<TripletSample> triplets = load_triplets(a.triplets_dir);
        const DescriptorEngine engine =
            a.model.empty() ? DescriptorEngine::geometric()
                            : DescriptorEngine::learned(load_model(a.model));
        const auto curve = descriptor_pr_curve(
            [&](const ObjectInstance& inst) { return engine.describe(inst); }, triplets);
        std::ofstream f(a.pr_out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + a.pr_out);
        f << "threshold,precision,recall\n";
        for (const auto& pt : curve)
            f << metric(pt.threshold) << ',' << metric(pt.precision) << ',' << metric(pt.recall)
              << '\n';
        const auto best = best_threshold_by_f1(curve);
        std::cout << "pr curve: " << curve.size() << " points -> " << a.pr_out
                  << " (best F1 " << metric(best.f1) << " at threshold "
                  << metric(best.threshold) << ")\n";
    } catch (const std::exception& e) {
        throw StageError("eval-descriptor", e.what());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// build-map
// ---------------------------------------------------------------------------

struct BuildMapArgs {
    std::string scans_dir;
    std::string poses;
    double spacing = 2.1;
    std::string model;
    double alpha = 4.0;
    double voxel = 0.02;
    size_t min_points = 50;
    int beams = 128;
    double vfov_deg = 90.0;
    std::string out;
};

std::vector<LabeledScan> load_scan_dir(const std::string& dir, const std::string& poses_csv) {
    const std::vector<Pose> poses = load_poses_csv(poses_csv);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".ply") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.size() != poses.size())
        throw std::runtime_error("scan count (" + std::to_string(files.size()) +
                                 ") != pose count (" + std::to_string(poses.size()) + ")");
    std::vector<LabeledScan> scans;
    for (size_t i = 0; i < files.size(); ++i) scans.push_back(load_scan(files[i], poses[i]));
    return scans;
}

int run_build_map(const BuildMapArgs& a) {
    try {
        const auto scans = load_scan_dir(a.scans_dir, a.poses);
        SegmentationParams params;
        params.voxel_size = a.voxel;
        params.alpha = a.alpha;
        params.min_instance_points = a.min_points;
        params.beam_count = a.beams;
        params.vertical_fov = deg2rad(a.vfov_deg);
        const DescriptorEngine engine =
            a.model.empty() ? DescriptorEngine::geometric()
                            : DescriptorEngine::learned(load_model(a.model));
        InstanceMap map = build_map(scans, params, engine, a.spacing);
        map.scene_id = a.scans_dir;
        map.creation_params = "spacing=" + metric(a.spacing) + " alpha=" + metric(a.alpha);
        save_map(map, a.out);
        std::cout << "map: " << map.size() << " entries -> " << a.out << "\n";
    } catch (const std::exception& e) {
        throw StageError("build-map", e.what());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// localize
// ---------------------------------------------------------------------------

struct LocalizeArgs {
    std::string map;
    std::string scan;
    std::string model;
    std::string params;  // optional JSON file with match/segmentation params
    std::string out;
};

void apply_params_file(const std::string& path, SegmentationParams& seg, MatchParams& match) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open params file " + path);
    nlohmann::json j;
    f >> j;
    if (j.contains("segmentation")) {
        const auto& js = j["segmentation"];
        if (js.contains("voxel_size")) seg.voxel_size = js["voxel_size"].get<double>();
        if (js.contains("alpha")) seg.alpha = js["alpha"].get<double>();
        if (js.contains("min_instance_points"))
            seg.min_instance_points = js["min_instance_points"].get<size_t>();
        if (js.contains("beam_count")) seg.beam_count = js["beam_count"].get<int>();
        if (js.contains("vertical_fov_deg"))
            seg.vertical_fov = deg2rad(js["vertical_fov_deg"].get<double>());
    }
    if (j.contains("match")) {
        const auto& jm = j["match"];
        if (jm.contains("knn")) match.knn = jm["knn"].get<size_t>();
        if (jm.contains("epsilon")) match.epsilon = jm["epsilon"].get<double>();
        if (jm.contains("tau")) match.tau = jm["tau"].get<size_t>();
        if (jm.contains("ransac_iterations"))
            match.ransac_iterations = jm["ransac_iterations"].get<int>();
        if (jm.contains("ransac_inlier_radius"))
            match.ransac_inlier_radius = jm["ransac_inlier_radius"].get<double>();
        if (jm.contains("class_filter")) match.class_filter = jm["class_filter"].get<bool>();
        if (jm.contains("seed")) match.seed = jm["seed"].get<uint64_t>();
    }
}

int run_localize(const LocalizeArgs& a) {
    try {
        const InstanceMap map = load_map(a.map);
        const LabeledScan scan = load_scan(a.scan);
        SegmentationParams seg;
        MatchParams match;
        if (!a.params.empty()) apply_params_file(a.params, seg, match);
        const DescriptorEngine engine =
            a.model.empty() ? DescriptorEngine::geometric()
                            : DescriptorEngine::learned(load_model(a.model));
        const LocalizationResult r = localize(scan, map, seg, engine, match);

        nlohmann::json j;
        j["status"] = to_string(r.status);
        if (r.status == LocalizationStatus::localized) {
            j["pose"] = {{"translation",
                          {r.pose.translation.x, r.pose.translation.y, r.pose.translation.z}},
                         {"rotation", r.pose.rotation.matrix().m}};
        }
        nlohmann::json inliers = nlohmann::json::array();
        for (const auto& c : r.inliers)
            inliers.push_back({{"query_index", c.query_index},
                               {"map_index", c.map_index},
                               {"descriptor_distance", c.descriptor_distance}});
        j["inliers"] = inliers;
        j["consensus_group_size"] = r.consensus_group_size;
        std::ofstream f(a.out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + a.out);
        f << j.dump(2) << '\n';

        // wall-clock timings are volatile; they go to a sibling file so the
        // primary result stays byte-stable across identical runs
        nlohmann::json jt;
        jt["timings_ms"] = {{"segment", r.timings.segment_ms},
                            {"describe", r.timings.describe_ms},
                            {"match", r.timings.match_ms},
                            {"ransac", r.timings.ransac_ms},
                            {"total", r.timings.total_ms}};
        std::ofstream ft(a.out + ".timings.json", std::ios::binary);
        ft << jt.dump(2) << '\n';

        std::cout << to_string(r.status) << " (" << r.inliers.size() << " inliers, "
                  << metric(r.timings.total_ms) << " ms)\n";
    } catch (const std::exception& e) {
        throw StageError("localize", e.what());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string map;
    std::string queries_dir;
    std::string truth;
    std::string model;
    std::string params;
    std::string report;
};

int run_evaluate(const EvaluateArgs& a) {
    try {
        const InstanceMap map = load_map(a.map);
        const auto queries = load_scan_dir(a.queries_dir, a.truth);
        SegmentationParams seg;
        MatchParams match;
        if (!a.params.empty()) apply_params_file(a.params, seg, match);
        const DescriptorEngine engine =
            a.model.empty() ? DescriptorEngine::geometric()
                            : DescriptorEngine::learned(load_model(a.model));
        const EvaluationReport report = evaluate(map, queries, seg, engine, match);
        write_report_csv(report, a.report);
        write_timings_csv(report, a.report + ".timings.csv");
        std::cout << "recall " << metric(report.recall) << ", precision "
                  << metric(report.precision)
                  << (report.no_detections ? " (no detections)" : "") << " -> " << a.report
                  << "\n";
    } catch (const std::exception& e) {
        throw StageError("evaluate", e.what());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// experiment / ablate-density
// ---------------------------------------------------------------------------

ExperimentConfig load_experiment_config(const std::string& path, uint64_t* seed_override) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    f >> j;
    ExperimentConfig cfg = experiment_config_from_json(j);
    if (seed_override) {
        cfg.scene_seed = *seed_override;
        cfg.scan_seed = hash_combine(*seed_override, 1);
    }
    return cfg;
}

int run_experiment_cmd(const std::string& config_path, std::optional<uint64_t> seed,
                       const std::string& out) {
    try {
        ensure_out_dir(out);
        const ExperimentConfig cfg =
            load_experiment_config(config_path, seed ? &*seed : nullptr);
        const ExperimentResult result = run_experiment(cfg);
        save_scene(result.scene, (fs::path(out) / "scene.json").string());
        save_map(result.map, (fs::path(out) / "map.imap.json").string());
        write_report_csv(result.report, (fs::path(out) / "report.csv").string());
        write_timings_csv(result.report, (fs::path(out) / "timings.csv").string());
        std::ofstream f(fs::path(out) / "report.json", std::ios::binary);
        f << report_summary_json(cfg, result).dump(2) << '\n';
        std::cout << "recall " << metric(result.report.recall) << ", precision "
                  << metric(result.report.precision) << ", map scans "
                  << result.map_scan_indices.size() << ", queries "
                  << result.query_indices.size() << " -> " << out << "\n";
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("experiment", e.what());
    }
    return 0;
}

int run_ablate(const std::string& config_path, std::optional<uint64_t> seed,
               const std::string& spacings_arg, const std::string& out) {
    try {
        ensure_out_dir(out);
        const ExperimentConfig cfg =
            load_experiment_config(config_path, seed ? &*seed : nullptr);
        std::vector<double> spacings;
        std::stringstream ss(spacings_arg);
        std::string tok;
        while (std::getline(ss, tok, ',')) spacings.push_back(std::stod(tok));
        const auto rows = density_ablation(cfg, spacings);
        write_ablation_csv(rows, (fs::path(out) / "ablation.csv").string());
        for (const auto& r : rows)
            std::cout << "spacing " << metric(r.spacing) << ": " << r.map_scan_count
                      << " map scans, recall " << metric(r.recall) << ", precision "
                      << metric(r.precision) << "\n";
    } catch (const std::exception& e) {
        throw StageError("ablate-density", e.what());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"instaloc: instance-based global lidar localization toolkit"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Generate a scene, labeled scans and triplets");
    c_sim->add_option("--seed", sim.seed, "Scene seed");
    c_sim->add_option("--rooms", sim.rooms, "Room count")->check(CLI::PositiveNumber);
    c_sim->add_option("--furniture", sim.furniture, "Furniture objects per room");
    c_sim->add_option("--scans", sim.scans, "Also raycast up to N trajectory scans");
    c_sim->add_option("--triplets", sim.triplets, "Also generate N training triplets");
    c_sim->add_option("--beams", sim.beams, "Lidar beam count");
    c_sim->add_option("--azimuth-steps", sim.azimuth_steps, "Rays per revolution");
    c_sim->add_option("--noise", sim.noise, "Range noise sigma (m)");
    c_sim->add_option("--out", sim.out, "Output directory")->required();

    SegmentArgs seg;
    auto* c_seg = app.add_subcommand("segment", "Segment a labeled scan into instances");
    c_seg->add_option("--scan", seg.scan, "Labeled PLY scan")->required();
    c_seg->add_option("--alpha", seg.alpha, "Adaptive radius scale factor");
    c_seg->add_option("--voxel", seg.voxel, "Voxel size (m)");
    c_seg->add_option("--min-points", seg.min_points, "Minimum points per instance");
    c_seg->add_option("--beams", seg.beams, "Lidar beam count");
    c_seg->add_option("--vfov", seg.vfov_deg, "Vertical field of view (deg)");
    c_seg->add_option("--out", seg.out, "Output directory")->required();

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train-descriptor", "Train the embedding on triplets");
    c_tr->add_option("--triplets", tr.triplets_dir, "Triplet directory")->required();
    c_tr->add_option("--epochs", tr.epochs, "Training epochs");
    c_tr->add_option("--lr", tr.lr, "Learning rate");
    c_tr->add_option("--batch", tr.batch, "Batch size");
    c_tr->add_option("--dim", tr.dim, "Descriptor length D");
    c_tr->add_option("--seed", tr.seed, "Training seed");
    c_tr->add_option("--out", tr.out, "Output model JSON")->required();

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval-descriptor", "Precision/recall sweep on triplets");
    c_ev->add_option("--model", ev.model, "Model JSON (omit for the geometric engine)");
    c_ev->add_option("--triplets", ev.triplets_dir, "Triplet directory")->required();
    c_ev->add_option("--pr-out", ev.pr_out, "Output CSV (threshold,precision,recall)")->required();

    BuildMapArgs bm;
    auto* c_bm = app.add_subcommand("build-map", "Build an instance map from scans + poses");
    c_bm->add_option("--scans", bm.scans_dir, "Directory of labeled PLY scans")->required();
    c_bm->add_option("--poses", bm.poses, "poses.csv (scan_id,tx..r22)")->required();
    c_bm->add_option("--spacing", bm.spacing, "Map scan spacing (m)");
    c_bm->add_option("--model", bm.model, "Model JSON (omit for the geometric engine)");
    c_bm->add_option("--alpha", bm.alpha, "Adaptive radius scale factor");
    c_bm->add_option("--voxel", bm.voxel, "Voxel size (m)");
    c_bm->add_option("--min-points", bm.min_points, "Minimum points per instance");
    c_bm->add_option("--beams", bm.beams, "Lidar beam count");
    c_bm->add_option("--vfov", bm.vfov_deg, "Vertical field of view (deg)");
    c_bm->add_option("--out", bm.out, "Output .imap.json")->required();

    LocalizeArgs loc;
    auto* c_loc = app.add_subcommand("localize", "Localize one scan against a map");
    c_loc->add_option("--map", loc.map, "Map .imap.json")->required();
    c_loc->add_option("--scan", loc.scan, "Query labeled PLY scan")->required();
    c_loc->add_option("--model", loc.model, "Model JSON (omit for the geometric engine)");
    c_loc->add_option("--params", loc.params, "JSON with segmentation/match params");
    c_loc->add_option("--out", loc.out, "Output result JSON")->required();

    EvaluateArgs eva;
    auto* c_eva = app.add_subcommand("evaluate", "Evaluate queries against ground truth");
    c_eva->add_option("--map", eva.map, "Map .imap.json")->required();
    c_eva->add_option("--queries", eva.queries_dir, "Directory of query PLY scans")->required();
    c_eva->add_option("--truth", eva.truth, "Ground-truth poses.csv")->required();
    c_eva->add_option("--model", eva.model, "Model JSON (omit for the geometric engine)");
    c_eva->add_option("--params", eva.params, "JSON with segmentation/match params");
    c_eva->add_option("--report", eva.report, "Output report CSV")->required();

    std::string exp_config, exp_out = "experiment_out";
    std::optional<uint64_t> exp_seed;
    auto* c_exp = app.add_subcommand("experiment", "Run a full experiment from a config JSON");
    c_exp->add_option("--config", exp_config, "Experiment config JSON")->required();
    c_exp->add_option("--seed", exp_seed, "Override scene/scan seeds");
    c_exp->add_option("--out", exp_out, "Output directory");

    std::string abl_config, abl_spacings = "1.5,2.1,3.0", abl_out = "ablation_out";
    std::optional<uint64_t> abl_seed;
    auto* c_abl = app.add_subcommand("ablate-density", "Sweep prior-map scan spacing");
    c_abl->add_option("--config", abl_config, "Experiment config JSON")->required();
    c_abl->add_option("--spacings", abl_spacings, "Comma-separated spacings (m)");
    c_abl->add_option("--seed", abl_seed, "Override scene/scan seeds");
    c_abl->add_option("--out", abl_out, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_sim->parsed()) return run_simulate(sim);
        if (c_seg->parsed()) return run_segment(seg);
        if (c_tr->parsed()) return run_train(tr);
        if (c_ev->parsed()) return run_eval(ev);
        if (c_bm->parsed()) return run_build_map(bm);
        if (c_loc->parsed()) return run_localize(loc);
        if (c_eva->parsed()) return run_evaluate(eva);
        if (c_exp->parsed()) return run_experiment_cmd(exp_config, exp_seed, exp_out);
        if (c_abl->parsed()) return run_ablate(abl_config, abl_seed, abl_spacings, abl_out);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
