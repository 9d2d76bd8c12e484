#pragma once

// Synthetic ground-truth trajectories and MARG signal synthesis. This is the
// verification oracle: every imperfection (noise, bias, mounting offset,
// magnetic pulses) is injected on demand and known exactly.

#include <cstdint>
#include <string>
#include <vector>

#include "ipose/dataset.hpp"
#include "ipose/quat.hpp"

namespace ipose {

struct SegmentMotion {
    enum class Kind { static_pose, sinusoid, keyframes };
    Kind kind = Kind::static_pose;
    Quat base = Quat::identity();

    // sinusoid: intrinsic ZYX Euler profile amp*sin(2*pi*freq*t + phase), rad
    Vec3 amp{}, freq_hz{}, phase{};

    // keyframes: (time s, orientation), slerped
    std::vector<std::pair<double, Quat>> keyframes;
};

struct MagPulse {
    double start_s = 0, duration_s = 0;
    double magnitude = 2.0;       // |field| scale during the pulse
    double yaw_offset_deg = 45.0; // field direction swing during the pulse
};

struct ImperfectionSpec {
    Vec3 gyro_bias{};                 // rad/s, same for all sensors
    double gyro_noise_std = 0.0;      // rad/s
    double accel_noise_std = 0.0;     // g
    double mag_noise_std = 0.0;       // normalized units
    std::vector<Quat> sts_offsets;    // per sensor; empty = identity
    std::vector<MagPulse> mag_pulses;
    double linear_accel_amp = 0.0;    // g, world-frame sinusoidal disturbance
    double linear_accel_freq_hz = 0.5;
};

struct SynthConfig {
    double duration_s = 60.0;
    double rate_hz = 60.0;
    std::vector<SegmentMotion> segments;
    ImperfectionSpec imperfections;
    double mag_dip_deg = 0.0;  // inclination of the reference field
    std::uint64_t seed = 0;
    std::string subject = "synth";
    TrialKind kind = TrialKind::task;

    int n_samples() const { return static_cast<int>(duration_s * rate_hz + 0.5); }
    Vec3 north() const;
};

// C1-smooth unit-quaternion trajectories, [T * S] row-major.
Trajectory generate_truth(const SynthConfig& cfg);

// MARG signals consistent with the truth: gyro from the log-map finite
// difference (so integrating it reproduces the truth exactly), accel from
// gravity plus the configured linear term, mag from the reference field.
Trial synthesize_marg(const Trajectory& truth, const SynthConfig& cfg);

SynthConfig read_synth_config(const std::string& path);
void write_synth_config(const std::string& path, const SynthConfig& cfg);

}  // namespace ipose
