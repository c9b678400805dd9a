#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "calica/geometry.hpp"
#include "calica/image.hpp"

namespace calica {

/// Ground-truth calibration: camera intrinsics plus the Lidar -> camera
/// extrinsic transform.
struct Calibration {
    CameraIntrinsics intr;
    RigidTransform velo_to_cam;
};

struct FrameRecord {
    int frame_number = 0;
    std::string image_path;
    std::string cloud_path;
};

struct DriveIndex {
    std::string drive_id;
    Calibration theta0;
    std::vector<FrameRecord> frames;
};

/// Extract single-f intrinsics from a KITTI calib_cam_to_cam text for the
/// given camera id ("02" etc.): f is the mean of the fx/fy entries of the
/// K_<id> line, cx/cy read directly. xi defaults to 0; a sidecar USM file
/// may override it. Duplicate keys: last wins, with a warning.
CameraIntrinsics parse_cam_calib(const std::string& text, const std::string& camera_id);

/// Optional sidecar providing a USM xi value: "xi_<id>: <value>" or a bare
/// "xi: <value>" fallback line.
std::optional<double> parse_usm_sidecar(const std::string& text,
                                        const std::string& camera_id);

/// Parse calib_velo_to_cam ("R:" 9 row-major values, "T:" 3 values).
/// Orthonormality drift up to 1e-3 is corrected (with a warning); beyond
/// that the rotation is rejected.
RigidTransform parse_velo_calib(const std::string& text);

/// Scan a KITTI-raw layout (root/<date>/<drive>/{image_<id>/data,
/// velodyne_points/data}) and pair frames by number. Frames missing either
/// file are skipped with a warning; missing calib files or an empty pairing
/// are fatal.
DriveIndex build_drive_index(const std::filesystem::path& root,
                             const std::string& drive_id,
                             const std::string& camera_id);

/// Load an RGB image; 8-bit binary PPM is the supported interchange format.
/// Other formats fail with an error naming the magic bytes.
Image load_image(const std::filesystem::path& path);

std::string drive_index_to_json(const DriveIndex& index);
DriveIndex drive_index_from_json(const std::string& json_text);

/// Standalone calibration document ({f, cx, cy, xi, q[4], t[3]}); the same
/// schema as the theta0 object inside an index.
std::string calibration_to_json(const Calibration& calib);
Calibration calibration_from_json(const std::string& json_text);

void save_drive_index(const DriveIndex& index, const std::filesystem::path& path);
DriveIndex load_drive_index(const std::filesystem::path& path);

}  // namespace calica
