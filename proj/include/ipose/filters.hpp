#pragma once

// Classical per-segment orientation filters and the whole-body fusion driver.
// The integral/Mahony/Madgwick steps are templated on the scalar type: double
// for normal use, the autodiff Var for training hybrid feedback models. The
// EKF is double-only.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "ipose/calibration.hpp"
#include "ipose/dataset.hpp"
#include "ipose/quat.hpp"

namespace ipose {

enum class FilterKind { integral, mahony, madgwick, madgwick_magreject, ekf };

std::string to_string(FilterKind k);
FilterKind filter_kind_from_string(const std::string& s);

struct FilterConfig {
    FilterKind kind = FilterKind::madgwick;
    bool use_mag = true;
    double beta = 0.1;          // madgwick gain
    double kp = 1.0, ki = 0.1;  // mahony gains
    double ekf_gyro_noise = 0.01;   // rad/s, process
    double ekf_accel_noise = 0.05;  // direction units, measurement
    double ekf_mag_noise = 0.05;
    double ekf_init_cov = 1e-2;
    double band_min = 0.7, band_max = 1.3;  // |mag| rejection band, normalized
    double dt = 1.0 / 60.0;
    Vec3 ref_gravity{0, 0, 1};
    Vec3 ref_north{1, 0, 0};

    void validate() const;
};

struct FilterState {
    Quat q = Quat::identity();
    Vec3 integral_error{};          // mahony PI term
    std::array<double, 16> P{};     // ekf covariance, row-major
    bool triad_fallback = false;    // init fell back to identity
    bool spd_reset = false;         // ekf covariance was reset
};

FilterState init_state(const MargReading& first_sample, const FilterConfig& cfg);
void step_filter(FilterState& state, const MargReading& r, const FilterConfig& cfg);

// ---- generic steps -----------------------------------------------------------

namespace filter_detail {

// Gradient of Madgwick's alignment objective at q, gravity term plus (when a
// horizontal field component exists) the field term. Returns false when the
// measurements cannot form an objective this step.
template <class S>
bool madgwick_gradient(const QuatT<S>& q, const Vec3T<S>& accel, const Vec3T<S>& mag,
                       bool use_mag, QuatT<S>& grad_out) {
    using std::sqrt;
    S an2 = dot(accel, accel);
    if (!(an2 > S(1e-12))) return false;
    S an = sqrt(an2);
    Vec3T<S> a{accel.x / an, accel.y / an, accel.z / an};

    S w = q.w, x = q.x, y = q.y, z = q.z;
    // Predicted gravity direction in the body frame (third row of R).
    S fgx = S(2) * (x * z - w * y) - a.x;
    S fgy = S(2) * (y * z + w * x) - a.y;
    S fgz = S(1) - S(2) * (x * x + y * y) - a.z;

    QuatT<S> g;
    g.w = S(-2) * y * fgx + S(2) * x * fgy;
    g.x = S(2) * z * fgx + S(2) * w * fgy + S(-4) * x * fgz;
    g.y = S(-2) * w * fgx + S(2) * z * fgy + S(-4) * y * fgz;
    g.z = S(2) * x * fgx + S(2) * y * fgy;

    if (use_mag) {
        S mn2 = dot(mag, mag);
        if (mn2 > S(1e-12)) {
            S mn = sqrt(mn2);
            Vec3T<S> m{mag.x / mn, mag.y / mn, mag.z / mn};
            // Reference field from the current estimate, flattened to x-z.
            Vec3T<S> h = rotate(q, m);
            S bx2 = h.x * h.x + h.y * h.y;
            if (bx2 > S(1e-12)) {
                S bx = sqrt(bx2);
                S bz = h.z;
                S fmx = bx * (S(1) - S(2) * (y * y + z * z)) + S(2) * bz * (x * z - w * y) - m.x;
                S fmy = S(2) * bx * (x * y - w * z) + S(2) * bz * (y * z + w * x) - m.y;
                S fmz = S(2) * bx * (x * z + w * y) + bz * (S(1) - S(2) * (x * x + y * y)) - m.z;

                g.w += S(-2) * bz * y * fmx + (S(-2) * bx * z + S(2) * bz * x) * fmy +
                       S(2) * bx * y * fmz;
                g.x += S(2) * bz * z * fmx + (S(2) * bx * y + S(2) * bz * w) * fmy +
                       (S(2) * bx * z - S(4) * bz * x) * fmz;
                g.y += (S(-4) * bx * y - S(2) * bz * w) * fmx + (S(2) * bx * x + S(2) * bz * z) * fmy +
                       (S(2) * bx * w - S(4) * bz * y) * fmz;
                g.z += (S(-4) * bx * z + S(2) * bz * x) * fmx + (S(-2) * bx * w + S(2) * bz * y) * fmy +
                       S(2) * bx * x * fmz;
            }
        }
    }
    grad_out = g;
    return true;
}

}  // namespace filter_detail

template <class S>
void step_integral_g(QuatT<S>& q, const Vec3T<S>& gyro, double dt) {
    q = integrate_gyro(q, gyro, dt);
}

// Exact gyro predict followed by one gradient-descent correction of size
// beta*dt. With beta == 0 this is bit-identical to the integral filter.
template <class S>
void step_madgwick_g(QuatT<S>& q, const Vec3T<S>& accel, const Vec3T<S>& gyro,
                     const Vec3T<S>& mag, const FilterConfig& cfg, bool use_mag_now) {
    using std::sqrt;
    QuatT<S> qp = integrate_gyro(q, gyro, cfg.dt);
    if (cfg.beta == 0.0) {
        q = qp;
        return;
    }
    QuatT<S> grad;
    if (!filter_detail::madgwick_gradient(qp, accel, mag, use_mag_now, grad)) {
        q = qp;  // no usable correction this step, gyro-only
        return;
    }
    S gn2 = quat_dot(grad, grad);
    if (!(gn2 > S(1e-24))) {
        q = qp;
        return;
    }
    S k = S(cfg.beta * cfg.dt) / sqrt(gn2);
    q = normalized(QuatT<S>{qp.w - k * grad.w, qp.x - k * grad.x, qp.y - k * grad.y,
                            qp.z - k * grad.z});
}

// Proportional-integral correction on the vector-observation error, then the
// exact gyro integration. kp == ki == 0 is bit-identical to the integral
// filter.
template <class S>
void step_mahony_g(QuatT<S>& q, Vec3T<S>& integral_error, const Vec3T<S>& accel,
                   const Vec3T<S>& gyro, const Vec3T<S>& mag, const FilterConfig& cfg,
                   bool use_mag_now) {
    using std::sqrt;
    if (cfg.kp == 0.0 && cfg.ki == 0.0) {
        q = integrate_gyro(q, gyro, cfg.dt);
        return;
    }
    S w = q.w, x = q.x, y = q.y, z = q.z;
    Vec3T<S> err{S(0), S(0), S(0)};
    bool have_err = false;
    S an2 = dot(accel, accel);
    if (an2 > S(1e-12)) {
        S an = sqrt(an2);
        Vec3T<S> a{accel.x / an, accel.y / an, accel.z / an};
        // Estimated gravity direction in body frame.
        Vec3T<S> vg{S(2) * (x * z - w * y), S(2) * (y * z + w * x), S(1) - S(2) * (x * x + y * y)};
        Vec3T<S> e = cross(a, vg);
        err = err + e;
        have_err = true;
    }
    if (use_mag_now) {
        S mn2 = dot(mag, mag);
        if (mn2 > S(1e-12)) {
            S mn = sqrt(mn2);
            Vec3T<S> m{mag.x / mn, mag.y / mn, mag.z / mn};
            Vec3T<S> h = rotate(q, m);
            S bx2 = h.x * h.x + h.y * h.y;
            if (bx2 > S(1e-12)) {
                S bx = sqrt(bx2);
                S bz = h.z;
                Vec3T<S> vm{bx * (S(1) - S(2) * (y * y + z * z)) + S(2) * bz * (x * z - w * y),
                            S(2) * bx * (x * y - w * z) + S(2) * bz * (y * z + w * x),
                            S(2) * bx * (x * z + w * y) + bz * (S(1) - S(2) * (x * x + y * y))};
                Vec3T<S> e = cross(m, vm);
                err = err + e;
                have_err = true;
            }
        }
    }
    Vec3T<S> wc = gyro;
    if (have_err) {
        if (cfg.ki != 0.0) {
            integral_error.x += err.x * S(cfg.ki * cfg.dt);
            integral_error.y += err.y * S(cfg.ki * cfg.dt);
            integral_error.z += err.z * S(cfg.ki * cfg.dt);
        }
        wc.x += err.x * S(cfg.kp) + integral_error.x;
        wc.y += err.y * S(cfg.kp) + integral_error.y;
        wc.z += err.z * S(cfg.kp) + integral_error.z;
    }
    q = integrate_gyro(q, wc, cfg.dt);
}

inline bool mag_in_band(const Vec3& mag, const FilterConfig& cfg) {
    double n = norm(mag);
    return n >= cfg.band_min && n <= cfg.band_max;
}

// Generic dispatch for the differentiable filter kinds (everything but ekf).
template <class S>
void step_filter_g(QuatT<S>& q, Vec3T<S>& integral_error, const Vec3T<S>& accel,
                   const Vec3T<S>& gyro, const Vec3T<S>& mag, const FilterConfig& cfg) {
    switch (cfg.kind) {
        case FilterKind::integral:
            step_integral_g(q, gyro, cfg.dt);
            break;
        case FilterKind::madgwick:
            step_madgwick_g(q, accel, gyro, mag, cfg, cfg.use_mag);
            break;
        case FilterKind::madgwick_magreject: {
            Vec3 mval{scalar_value(mag.x), scalar_value(mag.y), scalar_value(mag.z)};
            step_madgwick_g(q, accel, gyro, mag, cfg, cfg.use_mag && mag_in_band(mval, cfg));
            break;
        }
        case FilterKind::mahony:
            step_mahony_g(q, integral_error, accel, gyro, mag, cfg, cfg.use_mag);
            break;
        default:
            throw ContractError("step_filter_g: ekf is not differentiable");
    }
}

// ---- whole-body fusion ---------------------------------------------------------

struct FuseResult {
    Trajectory traj;
    std::vector<std::pair<int, int>> gaps;  // (sample, segment) held due to missing data
    int triad_fallbacks = 0;
    int spd_resets = 0;
};

// Independent TRIAD-initialized filter per segment. Segments are independent,
// so the parallel and serial paths produce identical output.
FuseResult fuse_body(const Trial& trial, const FilterConfig& cfg, bool parallel = true);
FuseResult fuse_body_serial(const Trial& trial, const FilterConfig& cfg);

void write_filter_config(const std::string& path, const FilterConfig& cfg);
FilterConfig read_filter_config(const std::string& path);

}  // namespace ipose
