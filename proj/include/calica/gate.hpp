#pragma once

#include <string>
#include <vector>

#include "calica/cloud.hpp"
#include "calica/image.hpp"

namespace calica {

/// Binary pixel mask.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> on;

    static Mask zeros(int w, int h) {
        Mask m;
        m.width = w;
        m.height = h;
        m.on.assign(static_cast<size_t>(w) * h, 0);
        return m;
    }
    static Mask ones(int w, int h) {
        Mask m = zeros(w, h);
        std::fill(m.on.begin(), m.on.end(), 1);
        return m;
    }
    std::uint8_t& at(int y, int x) { return on[static_cast<size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return on[static_cast<size_t>(y) * width + x]; }
};

struct GateThresholds {
    int min_keypoints = 200;
    double min_iou = 0.5;
};

struct GateReport {
    int keypoint_count = 0;
    double iou = 0.0;
    bool accepted = false;
    std::vector<std::string> reasons;
};

/// Count interest points: local maxima of the Harris response (k = 0.04,
/// 3x3 Sobel gradients, Gaussian window sigma = 1) above 0.01 x the maximum
/// response, with 3x3 non-max suppression. Borders clamp to edge. Images
/// smaller than 7x7 are rejected.
int count_keypoints(const Image& image);

/// |A n B| / |A u B|; 0 when both masks are empty.
double projection_iou(const Mask& a, const Mask& b);

/// Coverage mask of a sparse depth image: occupied pixels dilated by a 5x5
/// box, then filled as the bounding box of the dilated occupancy.
Mask depth_coverage_mask(const DepthImage& depth);

/// Accept or reject a frame on keypoint count and image/Lidar overlap.
GateReport gate_frame(const Image& image, const DepthImage& depth,
                      const GateThresholds& thresholds);

}  // namespace calica
