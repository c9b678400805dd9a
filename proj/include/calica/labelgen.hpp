#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "calica/geometry.hpp"
#include "calica/image.hpp"
#include "calica/kitti_io.hpp"

namespace calica {

/// Half-widths of the uniform miscalibration sampling box.
struct DeviationRanges {
    double df_max = 100.0;    // pixels
    double dxi_max = 0.48;    // dimensionless
    double drot_max = 2.0;    // degrees, per axis
    double dt_max = 0.2;      // meters, per axis

    bool valid() const {
        return df_max >= 0.0 && dxi_max >= 0.0 && drot_max >= 0.0 && dt_max >= 0.0;
    }
};

/// A sampled miscalibration relative to theta0.
struct Deviation {
    double df = 0.0;
    double dxi = 0.0;
    Quat dq;          // identity when no rotation deviation
    Vec3 dt;

    static Deviation identity() { return {}; }
};

struct CalibrationLabel {
    int ordinal = 0;
    int frame_number = 0;
    std::string split;        // "train" or "val"
    Deviation deviation;
    std::string image_path;   // synthesized (distorted) image, relative to dataset dir
    std::uint64_t seed = 0;
};

/// Draw df, dxi, per-axis Euler rotation and per-axis translation uniformly
/// within the ranges. Sampling order is fixed: df, dxi, rx, ry, rz, tx, ty, tz.
Deviation sample_deviation(const DeviationRanges& ranges, Rng& rng);

/// Inverse warping: each output pixel is lifted with the deviated model,
/// reprojected with the nominal model and bilinearly sampled from the
/// source. Out-of-bounds or out-of-domain samples are black.
Image synthesize_distorted_image(const Image& image, const CameraIntrinsics& nominal,
                                 const CameraIntrinsics& deviated);

/// One manifest line per label, JSON lines format.
std::string label_to_json_line(const CalibrationLabel& label);
CalibrationLabel label_from_json_line(const std::string& line);

struct GeneratedDataset {
    std::vector<CalibrationLabel> labels;
    std::filesystem::path manifest_path;
};

/// Cycle frames of a (gated) index, synthesize one distorted image per
/// label and write dataset/{manifest.jsonl, index.json, images/}. Cloud
/// misalignment is not baked into files: depth is rendered at training time
/// with extrinsic compose(deviation, theta0). Labels split 80:20
/// (ordinal % 5 == 4 -> validation).
GeneratedDataset generate_dataset(const DriveIndex& index, int count,
                                  const DeviationRanges& ranges,
                                  std::uint64_t master_seed,
                                  const std::filesystem::path& output_dir);

/// Dataset directory loader (manifest + the index it was generated from).
struct Dataset {
    DriveIndex index;
    std::vector<CalibrationLabel> labels;
    std::filesystem::path dir;
};
Dataset load_dataset(const std::filesystem::path& dataset_dir);

/// The label's full extrinsic: compose(deviation, theta0 extrinsic).
RigidTransform deviated_extrinsic(const Deviation& d, const RigidTransform& theta0_ext);

/// The label's deviated intrinsics (f0 + df, xi0 + dxi). May step outside
/// the strict xi range when xi0 is small; the USM math tolerates it.
CameraIntrinsics deviated_intrinsics(const Deviation& d, const CameraIntrinsics& nominal);

}  // namespace calica
