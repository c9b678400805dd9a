#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "calica/gate.hpp"

using namespace calica;

namespace {

Image gray_image(int w, int h, float value) {
    Image img = Image::zeros(w, h, 3);
    std::fill(img.data.begin(), img.data.end(), value);
    return img;
}

Image square_image() {
    Image img = Image::zeros(32, 32, 3);
    for (int y = 12; y < 20; ++y)
        for (int x = 12; x < 20; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = 1.0f;
    return img;
}

Image checkerboard_image(int w, int h, int cell) {
    Image img = Image::zeros(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float v = ((x / cell + y / cell) % 2 == 0) ? 1.0f : 0.0f;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
        }
    return img;
}

// Speckle texture: isolated bright dots contribute ~4 corners each.
Image dots_image(int w, int h, int n_dots) {
    Image img = gray_image(w, h, 0.2f);
    Rng rng(314);
    for (int i = 0; i < n_dots; ++i) {
        int x = 1 + static_cast<int>(rng.below(w - 3));
        int y = 1 + static_cast<int>(rng.below(h - 3));
        float v = 0.6f + 0.4f * static_cast<float>(rng.uniform());
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
                for (int c = 0; c < 3; ++c) img.at(y + dy, x + dx, c) = v;
    }
    return img;
}

// Wide separable Gaussian blur, test-local (sigma 8 needs a large kernel).
Image blur(const Image& img, double sigma) {
    int radius = static_cast<int>(std::ceil(3 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    Image tmp = img, out = img;
    auto clamp = [](int v, int hi) { return std::min(std::max(v, 0), hi - 1); };
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double s = 0;
                for (int i = -radius; i <= radius; ++i)
                    s += k[i + radius] * img.at(y, clamp(x + i, img.width), c);
                tmp.at(y, x, c) = static_cast<float>(s);
            }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double s = 0;
                for (int i = -radius; i <= radius; ++i)
                    s += k[i + radius] * tmp.at(clamp(y + i, img.height), x, c);
                out.at(y, x, c) = static_cast<float>(s);
            }
    return out;
}

Mask row_band(int w, int h, int first_row, int last_row) {
    Mask m = Mask::zeros(w, h);
    for (int y = first_row; y <= last_row; ++y)
        for (int x = 0; x < w; ++x) m.at(y, x) = 1;
    return m;
}

}  // namespace

TEST_CASE("count_keypoints: uniform image has none") {
    CHECK(count_keypoints(gray_image(32, 32, 0.5f)) == 0);
    CHECK(count_keypoints(gray_image(32, 32, 0.0f)) == 0);
}

TEST_CASE("count_keypoints: white square has exactly its four corners") {
    // Expected value computed by an independent reference implementation of
    // the same response definition (tests/oracles/harris_square.py).
    CHECK(count_keypoints(square_image()) == 4);
}

TEST_CASE("count_keypoints: blurring a checkerboard reduces the count") {
    Image sharp = checkerboard_image(64, 64, 8);
    Image soft = blur(sharp, 8.0);
    CHECK(count_keypoints(sharp) > count_keypoints(soft));
}

TEST_CASE("count_keypoints rejects tiny images") {
    CHECK_THROWS_AS(count_keypoints(gray_image(6, 32, 0.5f)), UserError);
    CHECK_THROWS_AS(count_keypoints(gray_image(32, 5, 0.5f)), UserError);
}

TEST_CASE("projection_iou exact values") {
    Mask a = row_band(20, 20, 0, 9);
    CHECK(projection_iou(a, a) == doctest::Approx(1.0));

    Mask b = row_band(20, 20, 10, 19);
    CHECK(projection_iou(a, b) == doctest::Approx(0.0));

    Mask c = row_band(20, 20, 5, 14);
    CHECK(projection_iou(a, c) == doctest::Approx(5.0 / 15.0).epsilon(1e-12));

    Mask empty = Mask::zeros(20, 20);
    CHECK(projection_iou(empty, empty) == 0.0);

    CHECK(projection_iou(c, a) == doctest::Approx(projection_iou(a, c)));
    CHECK_THROWS_AS(projection_iou(a, Mask::zeros(10, 10)), UserError);
}

TEST_CASE("depth_coverage_mask dilates and box-fills") {
    DepthImage d = DepthImage::zeros(20, 20);
    d.at(5, 5) = 2.0f;
    d.at(10, 12) = 3.0f;
    Mask m = depth_coverage_mask(d);
    // Bounding box of {5,5} and {10,12} dilated by 2 on each side.
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) {
            bool inside = y >= 3 && y <= 12 && x >= 3 && x <= 14;
            CHECK(m.at(y, x) == (inside ? 1 : 0));
        }
}

TEST_CASE("gate_frame applies both thresholds") {
    GateThresholds thr;  // defaults: 200 keypoints, 0.5 IoU
    Image textured = dots_image(64, 64, 120);
    REQUIRE(count_keypoints(textured) >= 200);

    DepthImage full = DepthImage::zeros(64, 64);
    for (auto& v : full.depth) v = 4.0f;
    GateReport ok = gate_frame(textured, full, thr);
    CHECK(ok.accepted);
    CHECK(ok.reasons.empty());

    GateReport flat = gate_frame(gray_image(64, 64, 0.5f), full, thr);
    CHECK_FALSE(flat.accepted);
    REQUIRE(flat.reasons.size() == 1);
    CHECK(flat.reasons[0] == "keypoints");

    DepthImage empty = DepthImage::zeros(64, 64);
    GateReport no_cloud = gate_frame(textured, empty, thr);
    CHECK_FALSE(no_cloud.accepted);
    REQUIRE(no_cloud.reasons.size() == 1);
    CHECK(no_cloud.reasons[0] == "iou");

    CHECK_THROWS_AS(gate_frame(textured, DepthImage::zeros(32, 32), thr), UserError);
}

TEST_CASE("gate acceptance is monotone in cloud coverage") {
    GateThresholds thr;
    Image textured = dots_image(64, 64, 120);
    DepthImage some = DepthImage::zeros(64, 64);
    double prev = 0.0;
    for (int extent = 8; extent <= 64; extent += 8) {
        for (int y = 0; y < extent; ++y)
            for (int x = 0; x < extent; ++x) some.at(y, x) = 3.0f;
        GateReport r = gate_frame(textured, some, thr);
        CHECK(r.iou >= prev);
        prev = r.iou;
    }
    CHECK(prev == doctest::Approx(1.0));
}
