#include "calica/cli.hpp"

#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "calica/gate.hpp"
#include "calica/nn/suite.hpp"
#include "calica/overlay.hpp"
#include "calica/pipeline.hpp"

namespace fs = std::filesystem;

namespace calica::cli {

namespace {

std::string read_text(const fs::path& path) {
    auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

/// Flag > config file > default. Each subcommand registers its mergeable
/// keys here; unknown keys in the config file are rejected.
class ConfigMerge {
public:
    ConfigMerge(CLI::App* cmd, const std::string& config_path) : cmd_(cmd) {
        if (config_path.empty()) return;
        try {
            json_ = nlohmann::json::parse(read_text(config_path));
        } catch (const nlohmann::json::exception& e) {
            throw UserError("config file " + config_path + ": " + e.what());
        }
        if (!json_.is_object()) throw UserError("config file must hold a JSON object");
        active_ = true;
    }

    template <class T>
    void merge(const std::string& key, T& var) {
        known_.push_back(key);
        if (!active_ || !json_.contains(key)) return;
        CLI::Option* opt = cmd_->get_option_no_throw("--" + key);
        if (opt != nullptr && opt->count() > 0) return;  // explicit flag wins
        try {
            var = json_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw UserError("config key '" + key + "' has the wrong type");
        }
    }

    void merge_model(net::CalicaConfig& model) {
        known_.push_back("model");
        if (active_ && json_.contains("model"))
            model = net::CalicaConfig::from_json(json_.at("model").dump());
    }

    void finish() const {
        if (!active_) return;
        for (const auto& item : json_.items()) {
            bool ok = false;
            for (const std::string& k : known_)
                if (k == item.key()) ok = true;
            if (!ok) throw UserError("unknown config key '" + item.key() + "'");
        }
    }

private:
    CLI::App* cmd_;
    nlohmann::json json_;
    bool active_ = false;
    std::vector<std::string> known_;
};

DeviationRanges parse_ranges(const std::string& spec) {
    DeviationRanges r;
    if (spec.empty()) return r;
    double v[4];
    if (std::sscanf(spec.c_str(), "%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3]) != 4)
        throw UserError("--ranges expects df,dxi,drot,dt (got '" + spec + "')");
    r.df_max = v[0];
    r.dxi_max = v[1];
    r.drot_max = v[2];
    r.dt_max = v[3];
    if (!r.valid()) throw UserError("--ranges values must be non-negative");
    return r;
}

struct SubArgs {
    std::string kitti_root, drive, camera = "02";
    std::string index, manifest, config, checkpoint, report, overlays, out;
    std::string image, cloud, calib, scene, split = "val", exp, ranges;
    int count = 100;
    std::uint64_t seed = 0;
    int min_keypoints = 200;
    double min_iou = 0.5;
    int frames = 12, width = 192, height = 64;
    double max_range = 80.0;
};

int cmd_ingest(CLI::App* cmd, SubArgs& a) {
    ConfigMerge merge(cmd, a.config);
    merge.merge("kitti-root", a.kitti_root);
    merge.merge("drive", a.drive);
    merge.merge("camera", a.camera);
    merge.merge("out", a.out);
    merge.finish();
    DriveIndex index = build_drive_index(a.kitti_root, a.drive, a.camera);
    info("indexed " + std::to_string(index.frames.size()) + " frames of " + a.drive);
    if (a.out.empty())
        std::cout << drive_index_to_json(index);
    else
        save_drive_index(index, a.out);
    return 0;
}

int cmd_gate(CLI::App* cmd, SubArgs& a) {
    ConfigMerge merge(cmd, a.config);
    merge.merge("index", a.index);
    merge.merge("min-keypoints", a.min_keypoints);
    merge.merge("min-iou", a.min_iou);
    merge.merge("out", a.out);
    merge.finish();
    DriveIndex index = load_drive_index(a.index);
    GateThresholds thresholds{a.min_keypoints, a.min_iou};
    DriveIndex filtered = index;
    filtered.frames.clear();
    for (const FrameRecord& frame : index.frames) {
        Image img = load_image(frame.image_path);
        PointCloud cloud = load_velodyne_bin(frame.cloud_path);
        DepthImage depth = render_depth_image(cloud, index.theta0.intr,
                                              index.theta0.velo_to_cam, img.width,
                                              img.height);
        GateReport report = gate_frame(img, depth, thresholds);
        nlohmann::json j{{"frame", frame.frame_number},
                         {"keypoints", report.keypoint_count},
                         {"iou", report.iou},
                         {"accepted", report.accepted},
                         {"reasons", report.reasons}};
        std::cout << j.dump() << "\n";
        if (report.accepted) filtered.frames.push_back(frame);
    }
    if (filtered.frames.empty()) throw UserError("gate rejected every frame");
    info("gate kept " + std::to_string(filtered.frames.size()) + "/" +
         std::to_string(index.frames.size()) + " frames");
    if (!a.out.empty()) save_drive_index(filtered, a.out);
    return 0;
}

int cmd_genlabels(CLI::App* cmd, SubArgs& a) {
    ConfigMerge merge(cmd, a.config);
    merge.merge("index", a.index);
    merge.merge("count", a.count);
    merge.merge("seed", a.seed);
    merge.merge("ranges", a.ranges);
    merge.merge("out", a.out);
    merge.finish();
    if (a.out.empty()) throw UserError("genlabels requires --out <dataset dir>");
    DriveIndex index = load_drive_index(a.index);
    DeviationRanges ranges = parse_ranges(a.ranges);
    auto result = generate_dataset(index, a.count, ranges, a.seed, a.out);
    info("wrote " + std::to_string(result.labels.size()) + " labels to " + a.out);
    std::cout << result.manifest_path.string() << "\n";
    return 0;
}

pipeline::TrainConfig merged_train_config(CLI::App* cmd, SubArgs& a) {
    pipeline::TrainConfig cfg;
    ConfigMerge merge(cmd, a.config);
    merge.merge("manifest", a.manifest);
    merge.merge("seed", a.seed);
    merge.merge("exp", a.exp);
    merge.merge("out", a.out);
    merge.merge("lr", cfg.lr);
    merge.merge("lr_decay", cfg.lr_decay);
    merge.merge("batch_size", cfg.batch_size);
    merge.merge("epochs", cfg.epochs);
    merge.merge("input_width", cfg.input_width);
    merge.merge("input_height", cfg.input_height);
    merge.merge("early_stop_rel", cfg.early_stop_rel);
    merge.merge_model(cfg.model);
    merge.finish();
    cfg.seed = a.seed;
    cfg.experiment = pipeline::ablation_from_string(a.exp.empty() ? "none" : a.exp);
    cfg.out_dir = a.out;
    return cfg;
}

int cmd_train(CLI::App* cmd, SubArgs& a) {
    pipeline::TrainConfig cfg = merged_train_config(cmd, a);
    if (a.manifest.empty()) throw UserError("train requires --manifest <dataset dir>");
    if (cfg.out_dir.empty()) throw UserError("train requires --out <run dir>");
    Dataset dataset = load_dataset(a.manifest);
    pipeline::TrainResult result = pipeline::train(dataset, cfg);
    info("best validation loss " + std::to_string(result.best_val) + " at epoch " +
         std::to_string(result.best_epoch));
    std::cout << (fs::path(cfg.out_dir) / "checkpoint.bin").string() << "\n";
    return 0;
}

int cmd_eval(CLI::App* cmd, SubArgs& a) {
    ConfigMerge merge(cmd, a.config);
    merge.merge("checkpoint", a.checkpoint);
    merge.merge("manifest", a.manifest);
    merge.merge("scene", a.scene);
    merge.merge("split", a.split);
    merge.merge("report", a.report);
    merge.merge("overlays", a.overlays);
    merge.finish();
    if (a.checkpoint.empty()) throw UserError("eval requires --checkpoint");
    if (a.manifest.empty()) throw UserError("eval requires --manifest <dataset dir>");
    if (a.scene.empty()) throw UserError("eval requires --scene <scene.json>");
    Dataset dataset = load_dataset(a.manifest);
    auto checkpoint = nn::load_checkpoint(a.checkpoint);
    pipeline::CheckerboardScene scene = pipeline::load_scene(a.scene);
    pipeline::EvalReport report =
        pipeline::evaluate(checkpoint, dataset, scene, a.split,
                           a.overlays.empty() ? fs::path() : fs::path(a.overlays));
    std::string json = report.to_json();
    if (a.report.empty())
        std::cout << json;
    else
        write_text(a.report, json);
    return 0;
}

int cmd_ablate(CLI::App* cmd, SubArgs& a) {
    pipeline::TrainConfig cfg = merged_train_config(cmd, a);
    if (a.manifest.empty()) throw UserError("ablate requires --manifest <dataset dir>");
    Dataset dataset = load_dataset(a.manifest);
    pipeline::AblationTable table = pipeline::ablate(dataset, cfg);
    std::string csv = table.to_csv();
    std::cout << csv;
    if (!cfg.out_dir.empty())
        write_text(fs::path(cfg.out_dir) / "ablation.csv", csv);
    return 0;
}

int cmd_project(CLI::App* cmd, SubArgs& a) {
    ConfigMerge merge(cmd, a.config);
    merge.merge("image", a.image);
    merge.merge("cloud", a.cloud);
    merge.merge("calib", a.calib);
    merge.merge("max-range", a.max_range);
    merge.merge("out", a.out);
    merge.finish();
    if (a.image.empty() || a.cloud.empty() || a.calib.empty() || a.out.empty())
        throw UserError("project requires --image, --cloud, --calib and --out");
    Image img = load_image(a.image);
    PointCloud cloud = load_velodyne_bin(a.cloud);
    Calibration calib = calibration_from_json(read_text(a.calib));
    Image overlay = render_overlay(img, cloud, calib.intr, calib.velo_to_cam, a.max_range);
    save_ppm(overlay, a.out);
    return 0;
}

int cmd_gradcheck(CLI::App*, SubArgs&) {
    auto results = nn::gradcheck_suite();
    bool pass = true;
    for (const auto& r : results) {
        std::printf("%-28s max_rel_err %.3e\n", r.op.c_str(), r.max_rel_err);
        if (!(r.max_rel_err < 1e-4)) pass = false;
    }
    if (!pass) {
        warn("gradient check failed (threshold 1e-4)");
        return 1;
    }
    return 0;
}

int cmd_synth(CLI::App* cmd, SubArgs& a) {
    ConfigMerge merge(cmd, a.config);
    merge.merge("out", a.out);
    merge.merge("frames", a.frames);
    merge.merge("width", a.width);
    merge.merge("height", a.height);
    merge.merge("seed", a.seed);
    merge.merge("camera", a.camera);
    merge.finish();
    if (a.out.empty()) throw UserError("synth requires --out <kitti root dir>");

    CameraIntrinsics intr;
    intr.f = 0.72 * a.width;
    intr.cx = a.width / 2.0;
    intr.cy = a.height / 2.0;
    intr.xi = 0.6;
    // Automotive Lidar frame (x forward, z up) to camera frame (z forward,
    // y down), plus a small lever arm.
    Mat3 r;
    r.m = {0, -1, 0, 0, 0, -1, 1, 0, 0};
    RigidTransform velo_to_cam{to_quat(r), {0.05, -0.08, -0.12}};
    pipeline::BoardSpec board;
    std::string drive = pipeline::write_synthetic_drive(
        a.out, intr, velo_to_cam, board, a.frames, a.width, a.height, a.seed, a.camera);
    std::cout << drive << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"calica - Lidar-camera self-calibration toolkit"};
    app.require_subcommand(1);

    SubArgs a;

    CLI::App* ingest = app.add_subcommand("ingest", "build a drive index from a KITTI-raw tree");
    ingest->add_option("--kitti-root", a.kitti_root, "dataset root directory")->required();
    ingest->add_option("--drive", a.drive, "drive id (<date>_drive_NNNN_sync)")->required();
    ingest->add_option("--camera", a.camera, "camera id (default 02)");
    ingest->add_option("--config", a.config, "JSON config file");
    ingest->add_option("--out", a.out, "index JSON output path (default stdout)");

    CLI::App* gate = app.add_subcommand("gate", "filter an index by keypoint count and IoU");
    gate->add_option("--index", a.index, "drive index JSON")->required();
    gate->add_option("--min-keypoints", a.min_keypoints, "minimum interest point count");
    gate->add_option("--min-iou", a.min_iou, "minimum image/Lidar overlap");
    gate->add_option("--config", a.config, "JSON config file");
    gate->add_option("--out", a.out, "filtered index output path");

    CLI::App* genlabels = app.add_subcommand("genlabels", "generate miscalibrated training labels");
    genlabels->add_option("--index", a.index, "drive index JSON")->required();
    genlabels->add_option("--count", a.count, "number of labels");
    genlabels->add_option("--seed", a.seed, "master seed");
    genlabels->add_option("--ranges", a.ranges, "deviation ranges df,dxi,drot,dt");
    genlabels->add_option("--config", a.config, "JSON config file");
    genlabels->add_option("--out", a.out, "dataset output directory");

    CLI::App* train = app.add_subcommand("train", "train the network on a dataset");
    train->add_option("--manifest", a.manifest, "dataset directory");
    train->add_option("--seed", a.seed, "training seed");
    train->add_option("--exp", a.exp, "ablation experiment (I, II, III, IV)");
    train->add_option("--config", a.config, "JSON config file (hyperparameters, model)");
    train->add_option("--out", a.out, "run output directory");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", a.checkpoint, "checkpoint file");
    eval->add_option("--manifest", a.manifest, "dataset directory");
    eval->add_option("--scene", a.scene, "checkerboard scene JSON");
    eval->add_option("--split", a.split, "label split: train, val or all");
    eval->add_option("--report", a.report, "report JSON output path (default stdout)");
    eval->add_option("--overlays", a.overlays, "directory for overlay images");
    eval->add_option("--config", a.config, "JSON config file");

    CLI::App* ablate = app.add_subcommand("ablate", "run ablation experiments I-IV");
    ablate->add_option("--manifest", a.manifest, "dataset directory");
    ablate->add_option("--seed", a.seed, "training seed");
    ablate->add_option("--config", a.config, "JSON config file (hyperparameters, model)");
    ablate->add_option("--out", a.out, "output directory for runs and ablation.csv");

    CLI::App* project = app.add_subcommand("project", "overlay a projected cloud on an image");
    project->add_option("--image", a.image, "RGB image (PPM)");
    project->add_option("--cloud", a.cloud, "velodyne binary scan");
    project->add_option("--calib", a.calib, "calibration JSON");
    project->add_option("--max-range", a.max_range, "far end of the color ramp, meters");
    project->add_option("--config", a.config, "JSON config file");
    project->add_option("--out", a.out, "overlay output path (PPM)");

    app.add_subcommand("gradcheck", "verify gradients against finite differences");

    CLI::App* synth = app.add_subcommand("synth", "write a synthetic checkerboard drive");
    synth->add_option("--out", a.out, "KITTI-layout root to create");
    synth->add_option("--frames", a.frames, "number of frames");
    synth->add_option("--width", a.width, "image width");
    synth->add_option("--height", a.height, "image height");
    synth->add_option("--seed", a.seed, "scene seed");
    synth->add_option("--camera", a.camera, "camera id (default 02)");
    synth->add_option("--config", a.config, "JSON config file");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand("ingest")) return cmd_ingest(app.get_subcommand("ingest"), a);
        if (app.got_subcommand("gate")) return cmd_gate(app.get_subcommand("gate"), a);
        if (app.got_subcommand("genlabels"))
            return cmd_genlabels(app.get_subcommand("genlabels"), a);
        if (app.got_subcommand("train")) return cmd_train(app.get_subcommand("train"), a);
        if (app.got_subcommand("eval")) return cmd_eval(app.get_subcommand("eval"), a);
        if (app.got_subcommand("ablate")) return cmd_ablate(app.get_subcommand("ablate"), a);
        if (app.got_subcommand("project"))
            return cmd_project(app.get_subcommand("project"), a);
        if (app.got_subcommand("gradcheck"))
            return cmd_gradcheck(app.get_subcommand("gradcheck"), a);
        if (app.got_subcommand("synth")) return cmd_synth(app.get_subcommand("synth"), a);
        throw UserError("no subcommand given");
    } catch (const UserError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace calica::cli
