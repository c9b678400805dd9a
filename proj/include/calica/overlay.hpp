#pragma once

#include "calica/cloud.hpp"
#include "calica/image.hpp"

namespace calica {

/// Source image with the projected cloud drawn on top, one pixel per point,
/// colored near = red to far = blue over [0, max_range] by camera-frame range.
Image render_overlay(const Image& image, const PointCloud& cloud,
                     const CameraIntrinsics& intr, const RigidTransform& ext,
                     double max_range = 80.0);

}  // namespace calica
