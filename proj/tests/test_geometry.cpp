#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "calica/geometry.hpp"

using namespace calica;

namespace {

Quat random_unit_quat(Rng& rng) {
    for (;;) {
        double w = rng.uniform(-1.0, 1.0);
        double x = rng.uniform(-1.0, 1.0);
        double y = rng.uniform(-1.0, 1.0);
        double z = rng.uniform(-1.0, 1.0);
        double n2 = w * w + x * x + y * y + z * z;
        if (n2 > 1e-4 && n2 <= 1.0) return Quat::from_raw(w, x, y, z);
    }
}

RigidTransform random_transform(Rng& rng) {
    return {random_unit_quat(rng),
            {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)}};
}

}  // namespace

TEST_CASE("project_point: optical axis maps to principal point") {
    CameraIntrinsics intr{1.0, 0.0, 0.0, 0.0};
    auto px = project_point(intr, RigidTransform::identity(), {0, 0, 5});
    REQUIRE(px.has_value());
    CHECK(px->u == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(px->v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("project_point: pinhole case") {
    CameraIntrinsics intr{100.0, 320.0, 240.0, 0.0};
    auto px = project_point(intr, RigidTransform::identity(), {1, 2, 10});
    REQUIRE(px.has_value());
    CHECK(px->u == doctest::Approx(330.0).epsilon(1e-12));
    CHECK(px->v == doctest::Approx(260.0).epsilon(1e-12));
}

TEST_CASE("project_point: unit-xi spherical case") {
    CameraIntrinsics intr{90.0, 0.0, 0.0, 1.0};
    auto px = project_point(intr, RigidTransform::identity(), {3, 0, 4});
    REQUIRE(px.has_value());
    CHECK(px->u == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(px->v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("project_point: behind the hemisphere") {
    CameraIntrinsics intr{100.0, 0.0, 0.0, 0.0};
    CHECK_FALSE(project_point(intr, RigidTransform::identity(), {0, 0, -1}).has_value());
    // xi = 0.5 admits directions down to s_z > -0.5.
    CameraIntrinsics usm{100.0, 0.0, 0.0, 0.5};
    CHECK(project_point(usm, RigidTransform::identity(), {1, 0, -0.1}).has_value());
    CHECK_FALSE(project_point(usm, RigidTransform::identity(), {1, 0, -0.9}).has_value());
}

TEST_CASE("project_point rejects non-finite input") {
    CameraIntrinsics intr{100.0, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(
        project_point(intr, RigidTransform::identity(),
                      {std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0}),
        UserError);
}

TEST_CASE("undistort_pixel: principal point lifts to the axis") {
    for (double xi : {0.0, 0.3, 1.0, 1.4}) {
        CameraIntrinsics intr{75.0, 11.0, -3.0, xi};
        Vec3 ray = undistort_pixel(intr, {11.0, -3.0});
        CHECK(ray.x == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(ray.y == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(ray.z == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("undistort_pixel: pinhole inverse") {
    CameraIntrinsics intr{100.0, 0.0, 0.0, 0.0};
    Vec3 ray = undistort_pixel(intr, {100.0, 0.0});
    CHECK(ray.x / ray.z == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ray.y == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("undistort_pixel: unit-xi inverse of the forward example") {
    CameraIntrinsics intr{90.0, 0.0, 0.0, 1.0};
    Vec3 ray = undistort_pixel(intr, {30.0, 0.0});
    CHECK(ray.x == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(ray.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ray.z == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("undistort_pixel rejects out-of-domain radius for xi > 1") {
    CameraIntrinsics intr{10.0, 0.0, 0.0, 1.5};
    // r^2 > 1/(xi^2-1) = 0.8 makes the radicand negative.
    CHECK_THROWS_AS(undistort_pixel(intr, {100.0, 0.0}), UserError);
}

TEST_CASE("projection/unprojection round trip over random in-domain pixels") {
    Rng rng(2024);
    int checked = 0;
    while (checked < 1000) {
        CameraIntrinsics intr{rng.uniform(50.0, 500.0), rng.uniform(-20.0, 20.0),
                              rng.uniform(-20.0, 20.0), rng.uniform(0.0, 1.5)};
        Pixel px{intr.cx + rng.uniform(-150.0, 150.0), intr.cy + rng.uniform(-150.0, 150.0)};
        Vec3 ray;
        try {
            ray = undistort_pixel(intr, px);
        } catch (const UserError&) {
            continue;  // outside the xi > 1 domain; not a round-trip case
        }
        auto back = project_ray(intr, ray);
        REQUIRE(back.has_value());
        CHECK(std::abs(back->u - px.u) < 1e-6);
        CHECK(std::abs(back->v - px.v) < 1e-6);
        ++checked;
    }
}

TEST_CASE("xi = 0 equals the pinhole projection") {
    Rng rng(7);
    CameraIntrinsics usm{140.0, 64.0, 48.0, 0.0};
    for (int i = 0; i < 200; ++i) {
        Vec3 p{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0.5, 10.0)};
        auto px = project_point(usm, RigidTransform::identity(), p);
        REQUIRE(px.has_value());
        double u = usm.f * p.x / p.z + usm.cx;
        double v = usm.f * p.y / p.z + usm.cy;
        CHECK(std::abs(px->u - u) < 1e-12 * std::max(1.0, std::abs(u)));
        CHECK(std::abs(px->v - v) < 1e-12 * std::max(1.0, std::abs(v)));
    }
}

TEST_CASE("rotation_convert: identity round trip") {
    Quat q = Quat::identity();
    Mat3 m = to_matrix(q);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(m(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
    Vec3 euler = to_euler_xyz_deg(q);
    CHECK(euler.x == doctest::Approx(0.0));
    CHECK(euler.y == doctest::Approx(0.0));
    CHECK(euler.z == doctest::Approx(0.0));
}

TEST_CASE("rotation_convert: 90 degree yaw") {
    Quat q = from_euler_xyz_deg({0.0, 0.0, 90.0});
    double s = std::sqrt(2.0) / 2.0;
    CHECK(q.w == doctest::Approx(s).epsilon(1e-12));
    CHECK(q.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(q.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(q.z == doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("rotation_convert: quaternion round trips through matrix and Euler") {
    Rng rng(99);
    for (int i = 0; i < 100; ++i) {
        Quat q = random_unit_quat(rng);
        Quat via_matrix = to_quat(to_matrix(q));
        CHECK(quaternion_distance(q, via_matrix) < 1e-9);

        Vec3 euler = to_euler_xyz_deg(q);
        Quat via_euler = from_euler_xyz_deg(euler);
        CHECK(quaternion_distance(q, via_euler) < 1e-9);
    }
}

TEST_CASE("rotation_convert: matrices stay orthonormal with det +1") {
    Rng rng(123);
    for (int i = 0; i < 100; ++i) {
        Mat3 m = to_matrix(random_unit_quat(rng));
        CHECK(orthonormality_drift(m) < 1e-9);
        CHECK(m.det() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("rotation_convert rejects a non-orthonormal matrix") {
    Mat3 m;
    m(0, 0) = 2.0;
    CHECK_THROWS_AS(to_quat(m), UserError);
}

TEST_CASE("quaternion_distance properties") {
    Rng rng(5);
    Quat q = random_unit_quat(rng);
    CHECK(quaternion_distance(q, q) == doctest::Approx(0.0));
    Quat neg{-q.w, -q.x, -q.y, -q.z};
    CHECK(quaternion_distance(q, neg) == doctest::Approx(0.0));

    Quat rx180{0.0, 1.0, 0.0, 0.0};
    CHECK(quaternion_distance(Quat::identity(), rx180) == doctest::Approx(1.0));

    for (int i = 0; i < 50; ++i) {
        Quat a = random_unit_quat(rng), b = random_unit_quat(rng);
        double d = quaternion_distance(a, b);
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        CHECK(quaternion_distance(b, a) == doctest::Approx(d));
    }
}

TEST_CASE("compose/apply/inverse") {
    Rng rng(42);
    RigidTransform x = random_transform(rng);
    RigidTransform c = compose(RigidTransform::identity(), x);
    CHECK(quaternion_distance(c.q, x.q) < 1e-12);
    CHECK((c.t - x.t).norm() < 1e-12);

    RigidTransform shift{Quat::identity(), {1, 2, 3}};
    Vec3 moved = apply(shift, {0, 0, 0});
    CHECK(moved.x == doctest::Approx(1.0));
    CHECK(moved.y == doctest::Approx(2.0));
    CHECK(moved.z == doctest::Approx(3.0));

    for (int i = 0; i < 50; ++i) {
        RigidTransform a = random_transform(rng), b = random_transform(rng);
        Vec3 p{rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
        Vec3 composed = apply(compose(a, b), p);
        Vec3 nested = apply(a, apply(b, p));
        CHECK((composed - nested).norm() < 1e-9);

        RigidTransform identity_check = compose(a, inverse(a));
        CHECK(quaternion_distance(identity_check.q, Quat::identity()) < 1e-9);
        CHECK(identity_check.t.norm() < 1e-9);

        RigidTransform cc = random_transform(rng);
        RigidTransform left = compose(compose(a, b), cc);
        RigidTransform right = compose(a, compose(b, cc));
        CHECK(quaternion_distance(left.q, right.q) < 1e-9);
        CHECK((left.t - right.t).norm() < 1e-9);
    }
}

TEST_CASE("canonical quaternion sign survives serial paths") {
    Rng rng(77);
    for (int i = 0; i < 50; ++i) {
        Quat q = random_unit_quat(rng);
        CHECK(q.w >= 0.0);
        CHECK(std::abs(q.norm() - 1.0) < 1e-9);
    }
}
