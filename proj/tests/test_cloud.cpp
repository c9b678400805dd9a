#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "calica/cloud.hpp"

using namespace calica;

TEST_CASE("transform_cloud: identity and translation") {
    PointCloud c;
    c.points = {{0, 0, 0}, {1, 2, 3}};
    c.intensity = {0.5f, 0.25f};

    PointCloud same = transform_cloud(c, RigidTransform::identity());
    CHECK((same.points[1] - c.points[1]).norm() == doctest::Approx(0.0));
    CHECK(same.intensity == c.intensity);

    PointCloud moved = transform_cloud(c, {Quat::identity(), {0, 0, 1}});
    CHECK(moved.points[0].z == doctest::Approx(1.0));
}

TEST_CASE("transform then inverse-transform returns the original") {
    Rng rng(8);
    PointCloud c;
    for (int i = 0; i < 100; ++i)
        c.points.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)});
    RigidTransform ext{Quat::from_raw(0.9, 0.1, -0.2, 0.3), {0.4, -0.5, 0.6}};
    PointCloud back = transform_cloud(transform_cloud(c, ext), inverse(ext));
    for (size_t i = 0; i < c.points.size(); ++i)
        CHECK((back.points[i] - c.points[i]).norm() < 1e-9);
}

TEST_CASE("render_depth_image basics") {
    CameraIntrinsics intr{100.0, 32.0, 24.0, 0.0};

    DepthImage empty = render_depth_image({}, intr, RigidTransform::identity(), 64, 48);
    CHECK(*std::max_element(empty.depth.begin(), empty.depth.end()) == 0.0f);

    PointCloud one;
    one.points = {{0, 0, 5}};
    DepthImage d = render_depth_image(one, intr, RigidTransform::identity(), 64, 48);
    CHECK(d.at(24, 32) == doctest::Approx(5.0));
    int nonzero = 0;
    for (float v : d.depth) nonzero += v > 0 ? 1 : 0;
    CHECK(nonzero == 1);

    PointCloud two;
    two.points = {{0, 0, 9}, {0, 0, 5}};
    DepthImage z = render_depth_image(two, intr, RigidTransform::identity(), 64, 48);
    CHECK(z.at(24, 32) == doctest::Approx(5.0));
}

TEST_CASE("render_depth_image never reports closer than the nearest point") {
    Rng rng(21);
    CameraIntrinsics intr{80.0, 32.0, 24.0, 0.4};
    PointCloud c;
    double min_range = 1e30;
    for (int i = 0; i < 500; ++i) {
        Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 8)};
        c.points.push_back(p);
        min_range = std::min(min_range, p.norm());
    }
    DepthImage d = render_depth_image(c, intr, RigidTransform::identity(), 64, 48);
    for (float v : d.depth)
        if (v > 0.0f) CHECK(v >= doctest::Approx(min_range));
}

TEST_CASE("render_depth_image is permutation invariant") {
    Rng rng(22);
    CameraIntrinsics intr{80.0, 32.0, 24.0, 0.2};
    PointCloud c;
    for (int i = 0; i < 300; ++i)
        c.points.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 8)});
    DepthImage a = render_depth_image(c, intr, RigidTransform::identity(), 64, 48);

    PointCloud shuffled = c;
    for (size_t i = shuffled.points.size(); i > 1; --i)
        std::swap(shuffled.points[i - 1], shuffled.points[rng.below(i)]);
    DepthImage b = render_depth_image(shuffled, intr, RigidTransform::identity(), 64, 48);
    CHECK(a.depth == b.depth);
}

TEST_CASE("velodyne decode: sizes and values") {
    CHECK(decode_velodyne({}).size() == 0);

    // (1.0, 2.0, 3.0, 0.5) written as little-endian IEEE-754 by hand.
    std::vector<std::uint8_t> bytes = {0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40,
                                       0x00, 0x00, 0x40, 0x40, 0x00, 0x00, 0x00, 0x3F};
    PointCloud c = decode_velodyne(bytes);
    REQUIRE(c.size() == 1);
    CHECK(c.points[0].x == doctest::Approx(1.0));
    CHECK(c.points[0].y == doctest::Approx(2.0));
    CHECK(c.points[0].z == doctest::Approx(3.0));
    CHECK(c.intensity[0] == doctest::Approx(0.5));

    std::vector<std::uint8_t> bad(17, 0);
    CHECK_THROWS_AS(decode_velodyne(bad), ParseError);
}

TEST_CASE("velodyne encode/decode round-trips bit-exactly") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        PointCloud c;
        int n = static_cast<int>(rng.below(50));
        for (int i = 0; i < n; ++i) {
            c.points.push_back({rng.uniform(-100, 100), rng.uniform(-100, 100),
                                rng.uniform(-100, 100)});
            c.intensity.push_back(static_cast<float>(rng.uniform()));
        }
        auto bytes = encode_velodyne(c);
        CHECK(encode_velodyne(decode_velodyne(bytes)) == bytes);
    }
}

TEST_CASE("velodyne decode rejects non-finite records with a byte offset") {
    std::vector<std::uint8_t> bytes(32, 0);
    bytes[16 + 3] = 0x7F;
    bytes[16 + 2] = 0x80;  // +inf in the x slot of the second record
    try {
        decode_velodyne(bytes);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("16") != std::string::npos);
    }
}
