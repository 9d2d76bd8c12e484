#pragma once

// Sensor intrinsic calibration, static sensor-to-segment alignment and TRIAD
// initial orientation.

#include <span>
#include <string>
#include <vector>

#include "ipose/dataset.hpp"
#include "ipose/quat.hpp"

namespace ipose {

struct SensorIntrinsics {
    Vec3 accel_bias{}, gyro_bias{}, mag_bias{};
    Vec3 accel_scale{1, 1, 1}, gyro_scale{1, 1, 1}, mag_scale{1, 1, 1};

    void validate() const;  // scale factors strictly positive
};

// Fixed rotation per sensor mapping sensor frame -> segment frame.
struct StsTransform {
    std::vector<Quat> mounts;
};

MargReading apply_intrinsics(const MargReading& raw, const SensorIntrinsics& cal);
Trial apply_intrinsics(const Trial& raw, const std::vector<SensorIntrinsics>& cals);

// Inverse of apply_intrinsics, used to fabricate uncalibrated test data.
MargReading inject_intrinsics(const MargReading& clean, const SensorIntrinsics& cal);

struct StaticCheckConfig {
    double gyro_std_max = 0.02;    // rad/s
    double accel_mag_tol = 0.05;   // g, deviation of |accel| from 1 g
};

bool is_static_window(std::span<const MargReading> window, const StaticCheckConfig& cfg = {});

// Mean gyro over a static window; throws CalibrationError when motion is detected.
Vec3 estimate_gyro_bias(std::span<const MargReading> static_window,
                        const StaticCheckConfig& cfg = {});

// Deterministic two-vector attitude: returns the orientation whose rotation
// maps the measured body-frame gravity/north pair onto the world references.
Quat triad(const Vec3& accel, const Vec3& mag, const Vec3& ref_gravity = {0, 0, 1},
           const Vec3& ref_north = {1, 0, 0});

// Static N-pose sensor-to-segment update: corrects expected_mount in pitch and
// roll so the averaged measured gravity maps to world +z; yaw is kept from
// expected_mount. `window` is one sensor's readings over the first ~5 s.
Quat sts_static_npose(std::span<const MargReading> window, const Quat& expected_mount,
                      const StaticCheckConfig& cfg = {});

// Rotates all sensor readings into segment frames using per-sensor mounts.
Trial apply_sts(const Trial& trial, const StsTransform& sts);

// ---- persisted calibration profile ------------------------------------------

struct CalibrationProfile {
    int version = 1;
    std::vector<SensorIntrinsics> intrinsics;
    std::vector<Quat> mounts;
};

void write_calibration_profile(const std::string& path, const CalibrationProfile& p);
CalibrationProfile read_calibration_profile(const std::string& path);

}  // namespace ipose
