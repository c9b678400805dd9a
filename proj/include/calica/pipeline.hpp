#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "calica/calicanet.hpp"
#include "calica/cloud.hpp"
#include "calica/gate.hpp"
#include "calica/labelgen.hpp"

namespace calica::pipeline {

// --- checkerboard oracle ---------------------------------------------------

/// rows x cols grid of checkerboard corners, spaced square meters apart,
/// centered on the board frame origin (z = 0).
struct BoardSpec {
    int rows = 6;
    int cols = 8;
    double square = 0.08;  // meters
};

struct CheckerboardScene {
    BoardSpec board;
    std::vector<RigidTransform> poses;            // board -> camera
    std::vector<std::vector<Pixel>> observed;     // rows*cols corners per pose

    std::vector<Vec3> corner_points() const;      // board frame
};

/// Reprojection RMSE in pixels over all observed corners. Poses whose
/// corners fall behind the model are excluded with a warning.
double reprojection_rmse(const CameraIntrinsics& intr, const CheckerboardScene& scene);

/// Mean absolute per-axis rotation (degrees, Euler X-Y-Z of the relative
/// rotation) and translation (meters) between two extrinsics.
struct ExtrinsicErrors {
    double rotation_deg = 0.0;
    double translation_m = 0.0;
};
ExtrinsicErrors extrinsic_errors(const RigidTransform& pred, const RigidTransform& theta0);

// --- synthetic desk-scale scenes -------------------------------------------

/// A rendered checkerboard-against-textured-wall world: per pose an RGB
/// view, a Lidar cloud (wall + board samples, Lidar frame) and the exact
/// corner observations with optional noise of RMS sigma (Gaussian magnitude
/// along an isotropic direction, so the expected reprojection RMSE is
/// sigma).
struct SyntheticScene {
    CheckerboardScene scene;
    std::vector<Image> images;
    std::vector<PointCloud> clouds;
};

SyntheticScene make_synthetic_scene(const CameraIntrinsics& intr,
                                    const RigidTransform& velo_to_cam,
                                    const BoardSpec& board, int n_poses, int width,
                                    int height, double noise_sigma, std::uint64_t seed);

/// Write a synthetic scene as a KITTI-raw style drive (PPM images, velodyne
/// binaries, calib text files, plus scene.json with the checkerboard poses
/// and corner observations). Returns the drive id usable with
/// build_drive_index.
std::string write_synthetic_drive(const std::filesystem::path& root,
                                  const CameraIntrinsics& intr,
                                  const RigidTransform& velo_to_cam,
                                  const BoardSpec& board, int n_frames, int width,
                                  int height, std::uint64_t seed,
                                  const std::string& camera_id = "02");

std::string scene_to_json(const CheckerboardScene& scene);
CheckerboardScene scene_from_json(const std::string& text);
void save_scene(const CheckerboardScene& scene, const std::filesystem::path& path);
CheckerboardScene load_scene(const std::filesystem::path& path);

// --- training ---------------------------------------------------------------

enum class AblationExp { none, I, II, III, IV };

AblationExp ablation_from_string(const std::string& s);
std::string ablation_to_string(AblationExp e);

struct TrainConfig {
    double lr = 3e-3;
    double lr_decay = 1.0;        // per-epoch multiplier
    int batch_size = 8;
    int epochs = 100;
    std::uint64_t seed = 0;
    AblationExp experiment = AblationExp::none;
    net::CalicaConfig model;
    int input_width = 192;
    int input_height = 64;
    double early_stop_rel = 0.0;  // stop when train_total <= rel * first epoch (0 = off)
    std::string out_dir;          // checkpoint/history destination; empty = in-memory only

    void validate() const;
};

struct EpochStats {
    int epoch = 0;                // 1-based
    double train_total = 0.0;
    double val_total = 0.0;
    std::optional<double> val_f, val_xi, val_q, val_t;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::vector<nn::CheckpointEntry> best_state;
    double best_val = 0.0;
    int best_epoch = 0;
};

std::string history_to_csv(const std::vector<EpochStats>& history);

TrainResult train(const Dataset& dataset, const TrainConfig& config);

// --- evaluation --------------------------------------------------------------

struct FrameEval {
    int ordinal = 0;
    double rot_err_deg = 0.0;
    double trans_err_m = 0.0;
    double df_err_px = 0.0;
    double dxi_err = 0.0;
};

struct EvalReport {
    double intrinsic_px = 0.0;       // reprojection RMSE of the mean predicted intrinsics
    double baseline_px = 0.0;        // reprojection RMSE of theta0 on the same scene
    double extrinsic_t_m = 0.0;      // mean translation error
    double extrinsic_r_deg = 0.0;    // mean rotation error
    double mean_f_pred = 0.0;
    double mean_xi_pred = 0.0;
    int frames = 0;
    long forward_passes = 0;
    std::vector<FrameEval> per_frame;

    std::string to_json() const;
};

/// Single-pass evaluation of a checkpoint over a dataset split ("train",
/// "val" or "all"). Reprojection errors are computed against the given
/// checkerboard scene. When overlays_dir is non-empty, a projected-cloud
/// overlay is written per frame.
EvalReport evaluate(const std::vector<nn::CheckpointEntry>& checkpoint,
                    const Dataset& dataset, const CheckerboardScene& scene,
                    const std::string& split = "val",
                    const std::filesystem::path& overlays_dir = {});

// --- ablation ----------------------------------------------------------------

struct AblationRow {
    std::string exp;
    bool rgb_train = true;
    bool depth_train = true;
    bool siamese = false;
    std::optional<double> f_loss, xi_loss, r_loss, t_loss;  // terminal validation losses
};

struct AblationTable {
    std::vector<AblationRow> rows;
    std::string to_csv() const;
};

/// Run the four training experiments (I: RGB frozen / extrinsic-only loss,
/// II: depth frozen / intrinsic-only loss, III: no sharing, IV: Siamese
/// sharing) with identical seed and data.
AblationTable ablate(const Dataset& dataset, const TrainConfig& base);

// --- input preparation (shared by train/evaluate) ----------------------------

/// Per-label network inputs: CHW RGB in [0, 1] plus the range image rendered
/// with the label-deviated extrinsic, normalized by depth_max_range.
struct PreparedItem {
    std::vector<float> rgb;    // 3 x H x W
    std::vector<float> depth;  // 1 x H x W
};

class InputPreparer {
public:
    InputPreparer(const Dataset& dataset, int input_w, int input_h,
                  double depth_max_range);

    PreparedItem prepare(const CalibrationLabel& label) const;
    const Calibration& theta0_scaled() const { return theta0_scaled_; }
    double scale() const { return scale_; }

private:
    const Dataset& dataset_;
    int input_w_, input_h_;
    double depth_max_range_;
    double scale_ = 1.0;
    Calibration theta0_scaled_;
    mutable std::vector<std::pair<int, PointCloud>> cloud_cache_;

    const PointCloud& cloud_for_frame(int frame_number) const;
    const FrameRecord& frame_record(int frame_number) const;
};

}  // namespace calica::pipeline
