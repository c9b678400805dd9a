#include "calica/overlay.hpp"

#include <algorithm>
#include <cmath>

namespace calica {

Image render_overlay(const Image& image, const PointCloud& cloud,
                     const CameraIntrinsics& intr, const RigidTransform& ext,
                     double max_range) {
    if (image.channels != 3) throw UserError("render_overlay expects an RGB image");
    if (max_range <= 0.0) throw UserError("render_overlay: max_range must be positive");
    Image out = image;
    for (const Vec3& p : cloud.points) {
        Vec3 pc = apply(ext, p);
        auto px = project_ray(intr, pc);
        if (!px) continue;
        int x = static_cast<int>(std::floor(px->u));
        int y = static_cast<int>(std::floor(px->v));
        if (x < 0 || y < 0 || x >= out.width || y >= out.height) continue;
        float s = static_cast<float>(std::clamp(pc.norm() / max_range, 0.0, 1.0));
        out.at(y, x, 0) = 1.0f - s;
        out.at(y, x, 1) = 0.0f;
        out.at(y, x, 2) = s;
    }
    return out;
}

}  // namespace calica
