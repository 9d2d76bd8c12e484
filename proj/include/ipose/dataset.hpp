#pragma once

// Trial data model, the canonical CSV formats, preprocessing and dataset
// splitting. Units after preprocessing: accel in g, gyro in rad/s, mag in
// mean-field units (average measured magnitude == 1).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ipose/quat.hpp"

namespace ipose {

struct MargReading {
    Vec3 accel{};  // g
    Vec3 gyro{};   // rad/s
    Vec3 mag{};    // normalized units
};

inline bool is_finite(const MargReading& r) {
    return is_finite(r.accel) && is_finite(r.gyro) && is_finite(r.mag);
}

// One timestamped row across all sensors.
struct MargSample {
    double t = 0.0;
    std::vector<MargReading> sensors;
};

enum class TrialKind { calibration, validation, task, circuit, sequence, random_moves };

std::string to_string(TrialKind k);
TrialKind trial_kind_from_string(const std::string& s);

struct Trial {
    std::string subject = "unknown";
    TrialKind kind = TrialKind::task;
    double rate_hz = 60.0;
    int n_sensors = 0;
    std::string accel_units = "g";  // "g" or "mps2"
    bool preprocessed = false;

    std::vector<double> t;          // [T]
    std::vector<MargReading> data;  // [T * n_sensors] row-major
    std::vector<Quat> truth;        // [T * n_sensors] or empty

    int n_samples() const { return static_cast<int>(t.size()); }
    bool has_truth() const { return !truth.empty(); }

    MargReading& reading(int ti, int si) { return data[static_cast<std::size_t>(ti) * n_sensors + si]; }
    const MargReading& reading(int ti, int si) const {
        return data[static_cast<std::size_t>(ti) * n_sensors + si];
    }
    Quat& truth_at(int ti, int si) { return truth[static_cast<std::size_t>(ti) * n_sensors + si]; }
    const Quat& truth_at(int ti, int si) const {
        return truth[static_cast<std::size_t>(ti) * n_sensors + si];
    }

    MargSample sample(int ti) const;
    void validate() const;  // throws ContractError on broken invariants
};

// ---- canonical CSV formats -------------------------------------------------

inline constexpr const char* kTrialMagic = "ipose-trial";
inline constexpr const char* kTrajectoryMagic = "ipose-trajectory";
inline constexpr int kSchemaVersion = 1;

Trial parse_trial(const std::string& path);
void write_trial(const std::string& path, const Trial& trial,
                 std::optional<std::uint64_t> seed = std::nullopt);

// Trajectory files hold rows (t, segment, qw, qx, qy, qz).
struct Trajectory {
    std::vector<double> t;    // [T]
    std::vector<Quat> q;      // [T * n_segments] row-major
    int n_segments = 0;

    int n_samples() const { return static_cast<int>(t.size()); }
    const Quat& at(int ti, int si) const { return q[static_cast<std::size_t>(ti) * n_segments + si]; }
    Quat& at(int ti, int si) { return q[static_cast<std::size_t>(ti) * n_segments + si]; }
};

Trajectory parse_trajectory(const std::string& path);
void write_trajectory(const std::string& path, const Trajectory& traj,
                      std::optional<std::uint64_t> seed = std::nullopt);

// ---- preprocessing (interpolate, resample, trim, normalize) ----------------

struct PreprocessConfig {
    double target_rate_hz = 60.0;
    double trim_initial_seconds = 5.0;
    double max_gap_seconds = 1.0;   // longer gaps reject the trial
    bool convert_accel_to_g = true;
    bool normalize_mag = true;
};

// Throws DomainError with a reason when the trial must be rejected.
Trial preprocess(const Trial& trial, const PreprocessConfig& cfg = {});

// ---- descriptive statistics -------------------------------------------------

struct ModalityStats {
    double mean = 0, stddev = 0, min = 0, max = 0;
    double kurtosis = 0;  // excess (Fisher)
    double skewness = 0;
    bool degenerate = false;  // constant stream: kurtosis/skewness reported as 0
};

struct DescriptiveStats {
    ModalityStats accel, gyro, mag;
    std::int64_t n_samples = 0;
};

DescriptiveStats descriptive_stats(const std::vector<Trial>& trials);
ModalityStats stream_stats(const std::vector<double>& values);

// ---- subject-disjoint splits -------------------------------------------------

struct DatasetSplit {
    std::vector<int> train, val, test;  // indices into the trial list
    std::vector<std::string> train_subjects, val_subjects, test_subjects;
};

DatasetSplit split_by_subject(const std::vector<Trial>& trials, double train_frac = 0.7,
                              double val_frac = 0.2, double test_frac = 0.1,
                              std::uint64_t seed = 0);

// ---- dataset manifest --------------------------------------------------------

struct ManifestEntry {
    std::string file;
    std::string subject;
    TrialKind kind = TrialKind::task;
    int n_sensors = 0;
    int n_samples = 0;
    std::string checksum;  // fnv1a-64 of the file bytes, hex
};

struct Manifest {
    int version = kSchemaVersion;
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> trials;
};

void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);
std::string fnv1a_hex(const std::string& file_path);

// Loads every trial listed in a manifest (paths relative to the manifest dir).
std::vector<Trial> load_dataset(const std::string& manifest_path);

}  // namespace ipose
