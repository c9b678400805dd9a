#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "calica/geometry.hpp"

namespace calica {

/// N x 3 metric points with optional per-point intensity in [0, 1]
/// (intensity is empty or sized N).
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<float> intensity;

    size_t size() const { return points.size(); }
    bool has_intensity() const { return !intensity.empty(); }
};

/// Per-pixel metric range image; 0 means no return. Range is the
/// camera-frame Euclidean distance, not z.
struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<float> depth;

    static DepthImage zeros(int w, int h) {
        DepthImage d;
        d.width = w;
        d.height = h;
        d.depth.assign(static_cast<size_t>(w) * h, 0.0f);
        return d;
    }

    float& at(int y, int x) { return depth[static_cast<size_t>(y) * width + x]; }
    float at(int y, int x) const { return depth[static_cast<size_t>(y) * width + x]; }
};

PointCloud transform_cloud(const PointCloud& c, const RigidTransform& ext);

/// Z-buffered projection of a cloud into a depth image. Nearest camera-frame
/// range wins per pixel; exact ties keep the earlier point. Points behind
/// the USM hemisphere or outside the frame are dropped.
DepthImage render_depth_image(const PointCloud& c, const CameraIntrinsics& intr,
                              const RigidTransform& ext, int width, int height);

/// KITTI velodyne scan: little-endian float32 (x, y, z, intensity) records.
PointCloud decode_velodyne(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_velodyne(const PointCloud& cloud);

PointCloud load_velodyne_bin(const std::filesystem::path& path);
void save_velodyne_bin(const PointCloud& cloud, const std::filesystem::path& path);

}  // namespace calica
