#include "calica/cloud.hpp"

#include <bit>
#include <cmath>

#include "calica/image.hpp"

namespace calica {

PointCloud transform_cloud(const PointCloud& c, const RigidTransform& ext) {
    PointCloud out;
    out.points.reserve(c.points.size());
    for (const Vec3& p : c.points) out.points.push_back(apply(ext, p));
    out.intensity = c.intensity;
    return out;
}

DepthImage render_depth_image(const PointCloud& c, const CameraIntrinsics& intr,
                              const RigidTransform& ext, int width, int height) {
    if (width <= 0 || height <= 0)
        throw UserError("render_depth_image: non-positive dimensions");
    DepthImage img = DepthImage::zeros(width, height);
    for (const Vec3& p : c.points) {
        Vec3 pc = apply(ext, p);
        auto px = project_ray(intr, pc);
        if (!px) continue;
        int ix = static_cast<int>(std::floor(px->u));
        int iy = static_cast<int>(std::floor(px->v));
        if (ix < 0 || iy < 0 || ix >= width || iy >= height) continue;
        float range = static_cast<float>(pc.norm());
        float& cell = img.at(iy, ix);
        if (cell == 0.0f || range < cell) cell = range;
    }
    return img;
}

namespace {

float read_f32_le(const std::uint8_t* p) {
    std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                      (static_cast<std::uint32_t>(p[1]) << 8) |
                      (static_cast<std::uint32_t>(p[2]) << 16) |
                      (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(u);
}

void write_f32_le(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(v);
    out.push_back(static_cast<std::uint8_t>(u & 0xFF));
    out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((u >> 24) & 0xFF));
}

}  // namespace

PointCloud decode_velodyne(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() % 16 != 0)
        throw ParseError("malformed velodyne scan: " + std::to_string(bytes.size()) +
                         " bytes is not a multiple of 16 (stray data at byte offset " +
                         std::to_string(bytes.size() - bytes.size() % 16) + ")");
    PointCloud cloud;
    size_t n = bytes.size() / 16;
    cloud.points.reserve(n);
    cloud.intensity.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + i * 16;
        float x = read_f32_le(rec);
        float y = read_f32_le(rec + 4);
        float z = read_f32_le(rec + 8);
        float inten = read_f32_le(rec + 12);
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
            !std::isfinite(inten))
            throw ParseError("malformed velodyne scan: non-finite value at byte offset " +
                             std::to_string(i * 16));
        cloud.points.push_back({x, y, z});
        cloud.intensity.push_back(inten);
    }
    return cloud;
}

std::vector<std::uint8_t> encode_velodyne(const PointCloud& cloud) {
    std::vector<std::uint8_t> out;
    out.reserve(cloud.points.size() * 16);
    for (size_t i = 0; i < cloud.points.size(); ++i) {
        const Vec3& p = cloud.points[i];
        write_f32_le(out, static_cast<float>(p.x));
        write_f32_le(out, static_cast<float>(p.y));
        write_f32_le(out, static_cast<float>(p.z));
        write_f32_le(out, cloud.has_intensity() ? cloud.intensity[i] : 0.0f);
    }
    return out;
}

PointCloud load_velodyne_bin(const std::filesystem::path& path) {
    try {
        return decode_velodyne(read_file_bytes(path));
    } catch (const ParseError& e) {
        throw ParseError(std::string(e.what()) + " [" + path.string() + "]");
    }
}

void save_velodyne_bin(const PointCloud& cloud, const std::filesystem::path& path) {
    write_file_bytes(path, encode_velodyne(cloud));
}

}  // namespace calica
