#include "calica/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace calica {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
constexpr double kRadToDeg = 180.0 / kPi;
}  // namespace

Vec3 Vec3::normalized() const {
    double n = norm();
    if (n <= 0.0) throw UserError("cannot normalize zero-length vector");
    return {x / n, y / n, z / n};
}

Mat3 Mat3::operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
            r(i, j) = s;
        }
    return r;
}

Mat3 Mat3::transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
}

double Mat3::det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

namespace {

Mat3 inverse3(const Mat3& a) {
    double d = a.det();
    if (std::abs(d) < 1e-300) throw UserError("singular 3x3 matrix");
    Mat3 r;
    r(0, 0) = (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) / d;
    r(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / d;
    r(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / d;
    r(1, 0) = (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) / d;
    r(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / d;
    r(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / d;
    r(2, 0) = (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) / d;
    r(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) / d;
    r(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / d;
    return r;
}

// Canonical sign: w >= 0; on the w == 0 great circle the first nonzero of
// (x, y, z) is made positive so serialization stays deterministic.
Quat canonicalize(Quat q) {
    bool flip = false;
    if (q.w < 0.0) {
        flip = true;
    } else if (q.w == 0.0) {
        if (q.x < 0.0)
            flip = true;
        else if (q.x == 0.0 && q.y < 0.0)
            flip = true;
        else if (q.x == 0.0 && q.y == 0.0 && q.z < 0.0)
            flip = true;
    }
    if (flip) {
        q.w = -q.w;
        q.x = -q.x;
        q.y = -q.y;
        q.z = -q.z;
    }
    return q;
}

}  // namespace

Quat Quat::from_raw(double w, double x, double y, double z) {
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (!(n > 0.0) || !std::isfinite(n)) throw UserError("cannot normalize zero quaternion");
    return canonicalize({w / n, x / n, y / n, z / n});
}

Quat Quat::conj() const { return canonicalize({w, -x, -y, -z}); }

Quat Quat::operator*(const Quat& o) const {
    return Quat::from_raw(w * o.w - x * o.x - y * o.y - z * o.z,
                          w * o.x + x * o.w + y * o.z - z * o.y,
                          w * o.y - x * o.z + y * o.w + z * o.x,
                          w * o.z + x * o.y - y * o.x + z * o.w);
}

Vec3 Quat::rotate(const Vec3& v) const {
    Vec3 qv{x, y, z};
    Vec3 t = qv.cross(v) * 2.0;
    return v + t * w + qv.cross(t);
}

Mat3 to_matrix(const Quat& q) {
    Mat3 r;
    double ww = q.w * q.w, xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
    r(0, 0) = ww + xx - yy - zz;
    r(0, 1) = 2.0 * (q.x * q.y - q.w * q.z);
    r(0, 2) = 2.0 * (q.x * q.z + q.w * q.y);
    r(1, 0) = 2.0 * (q.x * q.y + q.w * q.z);
    r(1, 1) = ww - xx + yy - zz;
    r(1, 2) = 2.0 * (q.y * q.z - q.w * q.x);
    r(2, 0) = 2.0 * (q.x * q.z - q.w * q.y);
    r(2, 1) = 2.0 * (q.y * q.z + q.w * q.x);
    r(2, 2) = ww - xx - yy + zz;
    return r;
}

double orthonormality_drift(const Mat3& m) {
    Mat3 g = m.transposed() * m;
    double drift = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double target = (i == j) ? 1.0 : 0.0;
            drift = std::max(drift, std::abs(g(i, j) - target));
        }
    return drift;
}

Quat to_quat(const Mat3& m) {
    if (orthonormality_drift(m) > 1e-6 || m.det() <= 0.0)
        throw UserError("matrix is not a rotation (orthonormality drift > 1e-6)");
    // Shepperd's method: pick the largest diagonal combination.
    double tr = m(0, 0) + m(1, 1) + m(2, 2);
    double w, x, y, z;
    if (tr > 0.0) {
        double s = std::sqrt(tr + 1.0) * 2.0;
        w = 0.25 * s;
        x = (m(2, 1) - m(1, 2)) / s;
        y = (m(0, 2) - m(2, 0)) / s;
        z = (m(1, 0) - m(0, 1)) / s;
    } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
        double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
        w = (m(2, 1) - m(1, 2)) / s;
        x = 0.25 * s;
        y = (m(0, 1) + m(1, 0)) / s;
        z = (m(0, 2) + m(2, 0)) / s;
    } else if (m(1, 1) > m(2, 2)) {
        double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
        w = (m(0, 2) - m(2, 0)) / s;
        x = (m(0, 1) + m(1, 0)) / s;
        y = 0.25 * s;
        z = (m(1, 2) + m(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
        w = (m(1, 0) - m(0, 1)) / s;
        x = (m(0, 2) + m(2, 0)) / s;
        y = (m(1, 2) + m(2, 1)) / s;
        z = 0.25 * s;
    }
    return Quat::from_raw(w, x, y, z);
}

Mat3 orthonormalize(const Mat3& m) {
    // Polar correction X <- (X + X^-T)/2, quadratic convergence near SO(3).
    Mat3 x = m;
    for (int it = 0; it < 20; ++it) {
        Mat3 inv_t = inverse3(x).transposed();
        Mat3 next;
        for (int i = 0; i < 9; ++i) next.m[i] = 0.5 * (x.m[i] + inv_t.m[i]);
        double delta = 0.0;
        for (int i = 0; i < 9; ++i) delta = std::max(delta, std::abs(next.m[i] - x.m[i]));
        x = next;
        if (delta < 1e-15) break;
    }
    if (x.det() <= 0.0) throw UserError("matrix is not close to a proper rotation");
    return x;
}

Vec3 to_euler_xyz_deg(const Quat& q) {
    // Intrinsic X-Y-Z: M = Rx(a) Ry(b) Rz(c).
    Mat3 m = to_matrix(q);
    double sb = std::clamp(m(0, 2), -1.0, 1.0);
    double b = std::asin(sb);
    double a, c;
    if (std::abs(sb) >= 1.0 - 1e-12) {
        // Gimbal lock: only a +/- c is observable; put it all in a.
        a = std::atan2(m(2, 1), m(1, 1));
        c = 0.0;
    } else {
        a = std::atan2(-m(1, 2), m(2, 2));
        c = std::atan2(-m(0, 1), m(0, 0));
    }
    return {a * kRadToDeg, b * kRadToDeg, c * kRadToDeg};
}

Quat from_euler_xyz_deg(const Vec3& angles_deg) {
    double ha = 0.5 * angles_deg.x * kDegToRad;
    double hb = 0.5 * angles_deg.y * kDegToRad;
    double hc = 0.5 * angles_deg.z * kDegToRad;
    Quat qx{std::cos(ha), std::sin(ha), 0.0, 0.0};
    Quat qy{std::cos(hb), 0.0, std::sin(hb), 0.0};
    Quat qz{std::cos(hc), 0.0, 0.0, std::sin(hc)};
    return qx * qy * qz;
}

std::optional<Pixel> project_ray(const CameraIntrinsics& intr, const Vec3& dir) {
    double n = dir.norm();
    if (!(n > 0.0) || !std::isfinite(n)) return std::nullopt;
    Vec3 s{dir.x / n, dir.y / n, dir.z / n};
    double denom = s.z + intr.xi;
    if (denom <= 1e-9) return std::nullopt;
    return Pixel{intr.f * s.x / denom + intr.cx, intr.f * s.y / denom + intr.cy};
}

std::optional<Pixel> project_point(const CameraIntrinsics& intr,
                                   const RigidTransform& ext, const Vec3& p) {
    if (!p.finite()) throw UserError("project_point: non-finite input point");
    return project_ray(intr, apply(ext, p));
}

Vec3 undistort_pixel(const CameraIntrinsics& intr, const Pixel& px) {
    if (!px.finite()) throw UserError("undistort_pixel: non-finite pixel");
    double mx = (px.u - intr.cx) / intr.f;
    double my = (px.v - intr.cy) / intr.f;
    double r2 = mx * mx + my * my;
    double radicand = 1.0 + (1.0 - intr.xi * intr.xi) * r2;
    if (radicand < 0.0)
        throw UserError("undistort_pixel: pixel outside USM model domain");
    double eta = (intr.xi + std::sqrt(radicand)) / (1.0 + r2);
    Vec3 ray{eta * mx, eta * my, eta - intr.xi};
    return ray.normalized();
}

double quaternion_distance(const Quat& q1, const Quat& q2) {
    double d = 1.0 - std::abs(q1.dot(q2));
    return std::clamp(d, 0.0, 1.0);
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    return {a.q * b.q, a.q.rotate(b.t) + a.t};
}

RigidTransform inverse(const RigidTransform& a) {
    Quat qi = a.q.conj();
    return {qi, -qi.rotate(a.t)};
}

Vec3 apply(const RigidTransform& a, const Vec3& p) { return a.q.rotate(p) + a.t; }

}  // namespace calica
