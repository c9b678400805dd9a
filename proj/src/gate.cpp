#include "calica/gate.hpp"

#include <algorithm>
#include <cmath>

namespace calica {

namespace {

using Grid = std::vector<double>;

double grid_at(const Grid& g, int w, int h, int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return g[static_cast<size_t>(y) * w + x];
}

// Separable Gaussian, sigma = 1, radius 3, clamp-to-edge.
Grid gauss_blur(const Grid& in, int w, int h) {
    constexpr int radius = 3;
    double kernel[2 * radius + 1];
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i);
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    Grid tmp(in.size()), out(in.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += kernel[i + radius] * grid_at(in, w, h, y, x + i);
            tmp[static_cast<size_t>(y) * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += kernel[i + radius] * grid_at(tmp, w, h, y + i, x);
            out[static_cast<size_t>(y) * w + x] = s;
        }
    return out;
}

}  // namespace

int count_keypoints(const Image& image) {
    if (image.width < 7 || image.height < 7)
        throw UserError("count_keypoints: image smaller than 7x7");
    Image gray = grayscale(image);
    int w = gray.width, h = gray.height;
    Grid g(static_cast<size_t>(w) * h);
    for (size_t i = 0; i < g.size(); ++i) g[i] = gray.data[i];

    Grid ixx(g.size()), iyy(g.size()), ixy(g.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto v = [&](int dy, int dx) { return grid_at(g, w, h, y + dy, x + dx); };
            double gx = -v(-1, -1) + v(-1, 1) - 2.0 * v(0, -1) + 2.0 * v(0, 1) -
                        v(1, -1) + v(1, 1);
            double gy = -v(-1, -1) - 2.0 * v(-1, 0) - v(-1, 1) + v(1, -1) +
                        2.0 * v(1, 0) + v(1, 1);
            size_t i = static_cast<size_t>(y) * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    ixx = gauss_blur(ixx, w, h);
    iyy = gauss_blur(iyy, w, h);
    ixy = gauss_blur(ixy, w, h);

    constexpr double k = 0.04;
    Grid resp(g.size());
    double max_resp = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
        double trace = ixx[i] + iyy[i];
        resp[i] = ixx[i] * iyy[i] - ixy[i] * ixy[i] - k * trace * trace;
        max_resp = std::max(max_resp, resp[i]);
    }
    if (max_resp <= 0.0) return 0;
    double threshold = 0.01 * max_resp;

    int count = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double r = resp[static_cast<size_t>(y) * w + x];
            if (r <= threshold) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    int ny = y + dy, nx = x + dx;
                    if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                    if (resp[static_cast<size_t>(ny) * w + nx] >= r) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) ++count;
        }
    return count;
}

double projection_iou(const Mask& a, const Mask& b) {
    if (a.width != b.width || a.height != b.height)
        throw UserError("projection_iou: mask dimensions differ");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.on.size(); ++i) {
        bool va = a.on[i] != 0, vb = b.on[i] != 0;
        inter += (va && vb) ? 1 : 0;
        uni += (va || vb) ? 1 : 0;
    }
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Mask depth_coverage_mask(const DepthImage& depth) {
    int w = depth.width, h = depth.height;
    Mask occupied = Mask::zeros(w, h);
    bool any = false;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (depth.at(y, x) > 0.0f) {
                occupied.at(y, x) = 1;
                any = true;
            }
    if (!any) return occupied;

    // 5x5 box dilation, then bounding-box fill of the dilated occupancy.
    int min_x = w, max_x = -1, min_y = h, max_y = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!occupied.at(y, x)) continue;
            min_x = std::min(min_x, std::max(0, x - 2));
            max_x = std::max(max_x, std::min(w - 1, x + 2));
            min_y = std::min(min_y, std::max(0, y - 2));
            max_y = std::max(max_y, std::min(h - 1, y + 2));
        }
    Mask box = Mask::zeros(w, h);
    for (int y = min_y; y <= max_y; ++y)
        for (int x = min_x; x <= max_x; ++x) box.at(y, x) = 1;
    return box;
}

GateReport gate_frame(const Image& image, const DepthImage& depth,
                      const GateThresholds& thresholds) {
    if (image.width != depth.width || image.height != depth.height)
        throw UserError("gate_frame: image and depth dimensions differ");
    GateReport report;
    report.keypoint_count = count_keypoints(image);
    Mask image_mask = Mask::ones(image.width, image.height);
    report.iou = projection_iou(image_mask, depth_coverage_mask(depth));
    if (report.keypoint_count < thresholds.min_keypoints) report.reasons.push_back("keypoints");
    if (report.iou < thresholds.min_iou) report.reasons.push_back("iou");
    report.accepted = report.reasons.empty();
    return report;
}

}  // namespace calica
