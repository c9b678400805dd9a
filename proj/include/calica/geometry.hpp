#pragma once

#include <array>
#include <optional>

#include "calica/common.hpp"

namespace calica {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const;
    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

/// 3x3 matrix, row-major.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    Mat3 operator*(const Mat3& o) const;
    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 transposed() const;
    double det() const;

    static Mat3 identity() { return {}; }
};

/// Unit quaternion (w, x, y, z). Construction normalizes and canonicalizes
/// the sign (w >= 0) so serialized values are deterministic.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static Quat identity() { return {}; }

    /// Normalized, canonical-sign quaternion from raw components.
    static Quat from_raw(double w, double x, double y, double z);

    double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }

    /// Conjugate (inverse rotation for unit quaternions), canonical sign.
    Quat conj() const;

    /// Hamilton product, renormalized and canonicalized.
    Quat operator*(const Quat& o) const;

    /// Rotate a vector by this quaternion.
    Vec3 rotate(const Vec3& v) const;
};

struct Pixel {
    double u = 0.0, v = 0.0;
    bool finite() const { return std::isfinite(u) && std::isfinite(v); }
};

/// Pinhole camera with unified-spherical-model distortion. A single focal
/// length serves both axes (square-pixel sensor); xi = 0 reduces the model
/// to a plain pinhole.
struct CameraIntrinsics {
    double f = 1.0;    // focal length, pixels
    double cx = 0.0;   // principal point, pixels
    double cy = 0.0;
    double xi = 0.0;   // USM distortion coefficient

    /// Strict validity: f > 0, xi in [0, 1.5]. Label synthesis may evaluate
    /// the model slightly outside this range (see labelgen); parsers and
    /// calibration application enforce it.
    bool valid() const {
        return std::isfinite(f) && f > 0.0 && std::isfinite(xi) && xi >= 0.0 &&
               xi <= 1.5 && std::isfinite(cx) && std::isfinite(cy);
    }

    /// Principal point plausibility against an image of the given size.
    bool principal_point_in_bounds(int width, int height) const {
        return std::abs(cx) <= 4.0 * width && std::abs(cy) <= 4.0 * height;
    }
};

/// Rigid transform q, t applied as p' = R(q) * p + t.
struct RigidTransform {
    Quat q;
    Vec3 t;

    static RigidTransform identity() { return {}; }
};

// --- quaternion / rotation conversions (Euler convention: intrinsic X-Y-Z,
// --- degrees) -----------------------------------------------------------

Mat3 to_matrix(const Quat& q);

/// Nearest-quaternion extraction; throws UserError if the matrix is not
/// orthonormal within 1e-6 (max element of M^T M - I, plus det > 0).
Quat to_quat(const Mat3& m);

Vec3 to_euler_xyz_deg(const Quat& q);
Quat from_euler_xyz_deg(const Vec3& angles_deg);

/// Maximum absolute element of M^T M - I; used as the orthonormality drift
/// measure for parsed rotation matrices.
double orthonormality_drift(const Mat3& m);

/// Nearest rotation matrix by iterative polar correction. Requires the
/// input to be close to a rotation already.
Mat3 orthonormalize(const Mat3& m);

// --- core operations -----------------------------------------------------

/// Project a metric point through extrinsic + USM intrinsics (the forward
/// model of the projection equation). Returns nullopt ("Behind") when the
/// point falls outside the valid USM hemisphere (s_z + xi <= 1e-9).
std::optional<Pixel> project_point(const CameraIntrinsics& intr,
                                   const RigidTransform& ext, const Vec3& p);

/// Project a camera-frame direction (no extrinsic).
std::optional<Pixel> project_ray(const CameraIntrinsics& intr, const Vec3& dir);

/// Closed-form USM inversion: pixel -> unit-norm camera-frame ray. Throws
/// UserError when the pixel lies outside the model domain (negative
/// radicand, only possible for xi > 1).
Vec3 undistort_pixel(const CameraIntrinsics& intr, const Pixel& px);

/// 1 - |<q1, q2>|; symmetric, in [0, 1], invariant under sign flips.
double quaternion_distance(const Quat& q1, const Quat& q2);

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform inverse(const RigidTransform& a);
Vec3 apply(const RigidTransform& a, const Vec3& p);

}  // namespace calica
