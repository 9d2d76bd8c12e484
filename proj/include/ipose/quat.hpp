#pragma once

// Quaternion and rotation-representation algebra. Everything is templated on the
// scalar type so the same formulas run on plain doubles and on autodiff variables.
//
// Conventions (fixed project-wide):
//   - Hamilton product, scalar-first storage (w, x, y, z).
//   - A quaternion q holds the orientation of a segment/sensor frame relative to
//     the world frame (NWU: x north, y west, z up). rotate(q, v) maps a vector
//     from the segment frame into the world frame; rotate(conjugate(q), v) maps
//     world -> segment.
//   - Euler angles are intrinsic Z-Y-X (yaw, pitch, roll).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ipose/errors.hpp"

namespace ipose {

// Plain-double view of a scalar; the autodiff Var provides its own overload.
inline constexpr double scalar_value(double v) { return v; }

template <class S>
struct Vec3T {
    S x{}, y{}, z{};
};

using Vec3 = Vec3T<double>;

// Gyroscope readings are plain 3-vectors in rad/s, segment frame.
using AngularVelocity = Vec3;

inline constexpr double kGyroSaturationRadS = 35.0;

template <class S>
inline Vec3T<S> operator+(const Vec3T<S>& a, const Vec3T<S>& b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
}
template <class S>
inline Vec3T<S> operator-(const Vec3T<S>& a, const Vec3T<S>& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
}
template <class S>
inline Vec3T<S> operator*(const Vec3T<S>& a, const S& s) {
    return {a.x * s, a.y * s, a.z * s};
}
template <class S>
inline Vec3T<S> operator*(const S& s, const Vec3T<S>& a) {
    return a * s;
}
inline Vec3 operator*(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
inline Vec3 operator*(double s, const Vec3& a) { return a * s; }

template <class S>
inline S dot(const Vec3T<S>& a, const Vec3T<S>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <class S>
inline Vec3T<S> cross(const Vec3T<S>& a, const Vec3T<S>& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
template <class S>
inline S norm(const Vec3T<S>& a) {
    using std::sqrt;
    return sqrt(dot(a, a));
}
template <class S>
inline Vec3T<S> normalized(const Vec3T<S>& a) {
    S n = norm(a);
    return {a.x / n, a.y / n, a.z / n};
}

inline bool is_finite(const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// Gyro readings beyond the sensor's range scale are clipped per axis magnitude.
inline Vec3 saturate_angular_velocity(const Vec3& w, double limit = kGyroSaturationRadS) {
    if (!is_finite(w)) throw DomainError("angular velocity is not finite");
    double n = norm(w);
    if (n <= limit) return w;
    return w * (limit / n);
}

template <class S>
struct QuatT {
    S w{}, x{}, y{}, z{};

    static QuatT identity() { return {S(1), S(0), S(0), S(0)}; }
};

using Quat = QuatT<double>;

// 3x3 rotation matrix, row-major.
template <class S>
using Mat3T = std::array<S, 9>;
using Mat3 = Mat3T<double>;

// First two rotation-matrix columns, column-major: (c0x,c0y,c0z, c1x,c1y,c1z).
template <class S>
struct Repr6DT {
    std::array<S, 6> v{};
};
using Repr6D = Repr6DT<double>;

inline bool is_finite(const Quat& q) {
    return std::isfinite(q.w) && std::isfinite(q.x) && std::isfinite(q.y) && std::isfinite(q.z);
}

template <class S>
inline S quat_dot(const QuatT<S>& a, const QuatT<S>& b) {
    return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class S>
inline S quat_norm(const QuatT<S>& q) {
    using std::sqrt;
    return sqrt(quat_dot(q, q));
}

template <class S>
inline QuatT<S> normalized(const QuatT<S>& q) {
    S n = quat_norm(q);
    return {q.w / n, q.x / n, q.y / n, q.z / n};
}

template <class S>
inline QuatT<S> conjugate(const QuatT<S>& q) {
    return {q.w, -q.x, -q.y, -q.z};
}

// Hamilton product a (x) b, not renormalized.
template <class S>
inline QuatT<S> quat_multiply_raw(const QuatT<S>& a, const QuatT<S>& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

inline Quat quat_multiply(const Quat& a, const Quat& b) {
    if (!is_finite(a) || !is_finite(b)) throw DomainError("quat_multiply: non-finite input");
    return normalized(quat_multiply_raw(a, b));
}

template <class S>
inline QuatT<S> operator*(const QuatT<S>& a, const QuatT<S>& b) {
    return quat_multiply_raw(a, b);
}

// Rotates a segment-frame vector into the world frame: q (x) (0,v) (x) q*.
template <class S>
inline Vec3T<S> rotate(const QuatT<S>& q, const Vec3T<S>& v) {
    // Expanded form, 15 mul fewer than the two quaternion products.
    Vec3T<S> u{q.x, q.y, q.z};
    Vec3T<S> t = cross(u, v);
    t = {t.x + q.w * v.x, t.y + q.w * v.y, t.z + q.w * v.z};
    Vec3T<S> c = cross(u, t);
    return {v.x + c.x + c.x, v.y + c.y + c.y, v.z + c.z + c.z};
}

template <class S>
inline Vec3T<S> rotate_inverse(const QuatT<S>& q, const Vec3T<S>& v) {
    return rotate(conjugate(q), v);
}

template <class S>
inline QuatT<S> from_axis_angle(const Vec3T<S>& axis, const S& angle) {
    using std::cos;
    using std::sin;
    Vec3T<S> u = normalized(axis);
    S h = angle * S(0.5);
    S s = sin(h);
    return {cos(h), u.x * s, u.y * s, u.z * s};
}

// exp of the pure quaternion (0, v): rotation of angle 2|v| about v.
template <class S>
inline QuatT<S> quat_exp(const Vec3T<S>& v) {
    using std::cos;
    using std::sin;
    using std::sqrt;
    S a2 = dot(v, v);
    S a = sqrt(a2 + S(1e-300));  // keeps the derivative finite at v = 0
    if (a < S(1e-8)) {
        // sin(a)/a ~= 1 - a^2/6
        S s = S(1) - a2 / S(6);
        return {S(1) - a2 * S(0.5), v.x * s, v.y * s, v.z * s};
    }
    S s = sin(a) / a;
    return {cos(a), v.x * s, v.y * s, v.z * s};
}

// Inverse of quat_exp for unit q, picking the branch with |result| <= pi/2.
template <class S>
inline Vec3T<S> quat_log_vec(const QuatT<S>& q_in) {
    using std::atan2;
    using std::sqrt;
    QuatT<S> q = q_in;
    if (q.w < S(0)) q = {-q.w, -q.x, -q.y, -q.z};
    S vn2 = q.x * q.x + q.y * q.y + q.z * q.z;
    S vn = sqrt(vn2 + S(1e-300));
    if (vn < S(1e-9)) {
        // theta/sin(theta) ~= 1 + theta^2/6 with theta ~= vn/w
        S k = (S(1) + vn2 / (S(6) * q.w * q.w)) / q.w;
        return {q.x * k, q.y * k, q.z * k};
    }
    S theta = atan2(vn, q.w);
    S k = theta / vn;
    return {q.x * k, q.y * k, q.z * k};
}

// Exact exponential-map gyro update: q (x) exp(w*dt/2), renormalized.
template <class S>
inline QuatT<S> integrate_gyro(const QuatT<S>& q, const Vec3T<S>& w, double dt) {
    if (!(dt > 0.0)) throw ContractError("integrate_gyro: dt must be positive");
    QuatT<S> dq = quat_exp(Vec3T<S>{w.x * S(dt * 0.5), w.y * S(dt * 0.5), w.z * S(dt * 0.5)});
    return normalized(quat_multiply_raw(q, dq));
}

// Quaternion angle distance, radians in [0, pi]. Evaluated through the
// relative rotation's atan2 form, which equals 2*arccos(|dot|) for unit
// inputs but has no arccos slope blowup near |dot| = 1. The products are
// grouped in pairwise-cancelling order so q_pred == +/-q_target gives an
// exact zero.
inline double qad(const Quat& a, const Quat& b) {
    if (!is_finite(a) || !is_finite(b)) throw DomainError("qad: non-finite input");
    double rw = quat_dot(a, b);
    double rx = (a.w * b.x - a.x * b.w) + (a.z * b.y - a.y * b.z);
    double ry = (a.w * b.y - a.y * b.w) + (a.x * b.z - a.z * b.x);
    double rz = (a.w * b.z - a.z * b.w) + (a.y * b.x - a.x * b.y);
    double vn = std::sqrt(rx * rx + ry * ry + rz * rz);
    return 2.0 * std::atan2(vn, std::fabs(rw));
}

inline double qad_deg(const Quat& a, const Quat& b) { return qad(a, b) * (180.0 / M_PI); }

// Loss form of QAD with the dot clamped inside (-1, 1) so the arccos slope
// stays finite. Used by training code; the metric above is used for reporting.
template <class S>
inline S qad_loss(const QuatT<S>& q_target, const QuatT<S>& q_pred) {
    using std::abs;
    using std::acos;
    S d = abs(quat_dot(q_target, q_pred));
    S lo = S(-1.0 + 1e-12), hi = S(1.0 - 1e-12);
    if (d < lo) d = lo;
    if (d > hi) d = hi;
    return S(2) * acos(d);
}

// Analytic gradient of qad wrt q_pred (clamped form), for gradient checks.
inline std::array<double, 4> qad_grad_wrt_pred(const Quat& q_target, const Quat& q_pred) {
    double d = quat_dot(q_target, q_pred);
    double dc = std::clamp(d, -1.0 + 1e-12, 1.0 - 1e-12);
    double sign = dc >= 0.0 ? 1.0 : -1.0;
    double k = -2.0 * sign / std::sqrt(1.0 - dc * dc);
    return {k * q_target.w, k * q_target.x, k * q_target.y, k * q_target.z};
}

// Componentwise squared error against whichever of +/-q_pred lies in the same
// hemisphere as q_target (mean over the four components).
template <class S>
inline S qdist_loss(const QuatT<S>& q_target, const QuatT<S>& q_pred) {
    S d = quat_dot(q_target, q_pred);
    QuatT<S> p = q_pred;
    if (d < S(0)) p = {-p.w, -p.x, -p.y, -p.z};
    S ew = q_target.w - p.w, ex = q_target.x - p.x, ey = q_target.y - p.y, ez = q_target.z - p.z;
    return (ew * ew + ex * ex + ey * ey + ez * ez) * S(0.25);
}

// Plain componentwise squared error, sign kept (the unstable baseline loss).
template <class S>
inline S mse_loss(const QuatT<S>& q_target, const QuatT<S>& q_pred) {
    S ew = q_target.w - q_pred.w, ex = q_target.x - q_pred.x;
    S ey = q_target.y - q_pred.y, ez = q_target.z - q_pred.z;
    return (ew * ew + ex * ex + ey * ey + ez * ez) * S(0.25);
}

// QAD averaged over segments after expressing each list relative to its own
// root quaternion.
inline double rel_qad(const Quat& root_target, const Quat& root_pred,
                      const std::vector<Quat>& targets, const std::vector<Quat>& preds) {
    if (targets.size() != preds.size())
        throw ContractError("rel_qad: target/pred lists differ in length");
    if (targets.empty()) throw ContractError("rel_qad: empty segment lists");
    Quat rt = conjugate(root_target);
    Quat rp = conjugate(root_pred);
    double acc = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i)
        acc += qad(normalized(quat_multiply_raw(rt, targets[i])),
                   normalized(quat_multiply_raw(rp, preds[i])));
    return acc / static_cast<double>(targets.size());
}

template <class S>
inline Mat3T<S> to_matrix(const QuatT<S>& q) {
    S w = q.w, x = q.x, y = q.y, z = q.z;
    return {S(1) - S(2) * (y * y + z * z), S(2) * (x * y - w * z), S(2) * (x * z + w * y),
            S(2) * (x * y + w * z), S(1) - S(2) * (x * x + z * z), S(2) * (y * z - w * x),
            S(2) * (x * z - w * y), S(2) * (y * z + w * x), S(1) - S(2) * (x * x + y * y)};
}

// Shepperd's method; branch on the dominant diagonal term.
template <class S>
inline QuatT<S> from_matrix(const Mat3T<S>& m) {
    using std::sqrt;
    S tr = m[0] + m[4] + m[8];
    QuatT<S> q;
    if (tr > S(0)) {
        S s = sqrt(tr + S(1)) * S(2);
        q = {s * S(0.25), (m[7] - m[5]) / s, (m[2] - m[6]) / s, (m[3] - m[1]) / s};
    } else if (m[0] > m[4] && m[0] > m[8]) {
        S s = sqrt(S(1) + m[0] - m[4] - m[8]) * S(2);
        q = {(m[7] - m[5]) / s, s * S(0.25), (m[1] + m[3]) / s, (m[2] + m[6]) / s};
    } else if (m[4] > m[8]) {
        S s = sqrt(S(1) + m[4] - m[0] - m[8]) * S(2);
        q = {(m[2] - m[6]) / s, (m[1] + m[3]) / s, s * S(0.25), (m[5] + m[7]) / s};
    } else {
        S s = sqrt(S(1) + m[8] - m[0] - m[4]) * S(2);
        q = {(m[3] - m[1]) / s, (m[2] + m[6]) / s, (m[5] + m[7]) / s, s * S(0.25)};
    }
    return normalized(q);
}

// Intrinsic Z-Y-X: yaw about z, then pitch about y', then roll about x''.
template <class S>
inline QuatT<S> euler_to_quat(const S& yaw, const S& pitch, const S& roll) {
    using std::cos;
    using std::sin;
    S cy = cos(yaw * S(0.5)), sy = sin(yaw * S(0.5));
    S cp = cos(pitch * S(0.5)), sp = sin(pitch * S(0.5));
    S cr = cos(roll * S(0.5)), sr = sin(roll * S(0.5));
    return {cy * cp * cr + sy * sp * sr, cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr, sy * cp * cr - cy * sp * sr};
}

struct EulerZYX {
    double yaw, pitch, roll;  // radians
};

// Pitch is clamped at +/-90 deg; at gimbal lock yaw and roll merge and the
// roll is reported as 0 by convention.
inline EulerZYX quat_to_euler(const Quat& q) {
    double sp = 2.0 * (q.w * q.y - q.z * q.x);
    sp = std::clamp(sp, -1.0, 1.0);
    double pitch = std::asin(sp);
    if (std::fabs(sp) > 1.0 - 1e-12) {
        // Gimbal lock: only yaw-/+roll is observable; report it as yaw, roll = 0.
        return {2.0 * std::atan2(q.z, q.w), pitch, 0.0};
    }
    double roll = std::atan2(2.0 * (q.w * q.x + q.y * q.z), 1.0 - 2.0 * (q.x * q.x + q.y * q.y));
    double yaw = std::atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y * q.y + q.z * q.z));
    return {yaw, pitch, roll};
}

template <class S>
inline Repr6DT<S> quat_to_repr6d(const QuatT<S>& q) {
    Mat3T<S> m = to_matrix(q);
    return {{m[0], m[3], m[6], m[1], m[4], m[7]}};
}

// Gram-Schmidt the two stored columns, complete with the cross product.
template <class S>
inline QuatT<S> repr6d_to_quat_unchecked(const Repr6DT<S>& r) {
    Vec3T<S> a{r.v[0], r.v[1], r.v[2]};
    Vec3T<S> b{r.v[3], r.v[4], r.v[5]};
    Vec3T<S> b1 = normalized(a);
    S d = dot(b1, b);
    Vec3T<S> b2 = normalized(Vec3T<S>{b.x - d * b1.x, b.y - d * b1.y, b.z - d * b1.z});
    Vec3T<S> b3 = cross(b1, b2);
    return from_matrix<S>({b1.x, b2.x, b3.x, b1.y, b2.y, b3.y, b1.z, b2.z, b3.z});
}

inline Quat repr6d_to_quat(const Repr6D& r) {
    Vec3 a{r.v[0], r.v[1], r.v[2]};
    Vec3 b{r.v[3], r.v[4], r.v[5]};
    if (!is_finite(a) || !is_finite(b)) throw DomainError("repr6d_to_quat: non-finite input");
    if (norm(cross(a, b)) <= 1e-9)
        throw DomainError("repr6d_to_quat: degenerate columns (parallel or zero)");
    return repr6d_to_quat_unchecked(r);
}

// Shortest-arc rotation mapping direction a onto direction b.
inline Quat from_two_vectors(const Vec3& a, const Vec3& b) {
    Vec3 an = normalized(a), bn = normalized(b);
    double d = dot(an, bn);
    if (d < -1.0 + 1e-12) throw DomainError("from_two_vectors: antiparallel input");
    Vec3 c = cross(an, bn);
    Quat q{1.0 + d, c.x, c.y, c.z};
    return normalized(q);
}

inline Quat slerp(const Quat& a, const Quat& b_in, double t) {
    Quat b = b_in;
    double d = quat_dot(a, b);
    if (d < 0) {
        b = {-b.w, -b.x, -b.y, -b.z};
        d = -d;
    }
    d = std::min(d, 1.0);
    double theta = std::acos(d);
    if (theta < 1e-9) {
        Quat r{a.w + t * (b.w - a.w), a.x + t * (b.x - a.x), a.y + t * (b.y - a.y),
               a.z + t * (b.z - a.z)};
        return normalized(r);
    }
    double s = std::sin(theta);
    double ka = std::sin((1.0 - t) * theta) / s;
    double kb = std::sin(t * theta) / s;
    return normalized(Quat{ka * a.w + kb * b.w, ka * a.x + kb * b.x, ka * a.y + kb * b.y,
                           ka * a.z + kb * b.z});
}

// Keeps a quaternion stream hemisphere-continuous (flip sign when the dot with
// the previous sample goes negative).
inline void make_sign_continuous(std::vector<Quat>& qs) {
    for (std::size_t i = 1; i < qs.size(); ++i) {
        if (quat_dot(qs[i - 1], qs[i]) < 0.0)
            qs[i] = {-qs[i].w, -qs[i].x, -qs[i].y, -qs[i].z};
    }
}

}  // namespace ipose
