#include "ipose/calibration.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ipose/errors.hpp"
#include "ipose/io.hpp"

namespace ipose {

using nlohmann::json;

void SensorIntrinsics::validate() const {
    for (const Vec3* s : {&accel_scale, &gyro_scale, &mag_scale})
        if (!(s->x > 0 && s->y > 0 && s->z > 0))
            throw ContractError("intrinsics: scale factors must be strictly positive");
}

namespace {
Vec3 unscale(const Vec3& raw, const Vec3& bias, const Vec3& scale) {
    return {(raw.x - bias.x) / scale.x, (raw.y - bias.y) / scale.y, (raw.z - bias.z) / scale.z};
}
Vec3 rescale(const Vec3& clean, const Vec3& bias, const Vec3& scale) {
    return {clean.x * scale.x + bias.x, clean.y * scale.y + bias.y, clean.z * scale.z + bias.z};
}
}  // namespace

MargReading apply_intrinsics(const MargReading& raw, const SensorIntrinsics& cal) {
    cal.validate();
    return {unscale(raw.accel, cal.accel_bias, cal.accel_scale),
            unscale(raw.gyro, cal.gyro_bias, cal.gyro_scale),
            unscale(raw.mag, cal.mag_bias, cal.mag_scale)};
}

MargReading inject_intrinsics(const MargReading& clean, const SensorIntrinsics& cal) {
    cal.validate();
    return {rescale(clean.accel, cal.accel_bias, cal.accel_scale),
            rescale(clean.gyro, cal.gyro_bias, cal.gyro_scale),
            rescale(clean.mag, cal.mag_bias, cal.mag_scale)};
}

Trial apply_intrinsics(const Trial& raw, const std::vector<SensorIntrinsics>& cals) {
    if (static_cast<int>(cals.size()) != raw.n_sensors)
        throw ContractError("apply_intrinsics: one intrinsics entry per sensor required");
    Trial out = raw;
    for (int ti = 0; ti < out.n_samples(); ++ti)
        for (int s = 0; s < out.n_sensors; ++s)
            out.reading(ti, s) = apply_intrinsics(raw.reading(ti, s), cals[s]);
    return out;
}

bool is_static_window(std::span<const MargReading> window, const StaticCheckConfig& cfg) {
    if (window.empty()) return false;
    Vec3 gyro_mean{};
    double accel_mag_mean = 0;
    for (const MargReading& r : window) {
        gyro_mean = gyro_mean + r.gyro;
        accel_mag_mean += norm(r.accel);
    }
    gyro_mean = gyro_mean * (1.0 / window.size());
    accel_mag_mean /= window.size();

    double var = 0;
    for (const MargReading& r : window) {
        Vec3 d = r.gyro - gyro_mean;
        var += dot(d, d);
    }
    double gyro_std = std::sqrt(var / (3.0 * window.size()));
    return gyro_std < cfg.gyro_std_max && std::fabs(accel_mag_mean - 1.0) < cfg.accel_mag_tol;
}

Vec3 estimate_gyro_bias(std::span<const MargReading> static_window, const StaticCheckConfig& cfg) {
    if (static_window.empty()) throw ContractError("estimate_gyro_bias: empty window");
    Vec3 mean{};
    for (const MargReading& r : static_window) mean = mean + r.gyro;
    mean = mean * (1.0 / static_window.size());

    double var = 0;
    for (const MargReading& r : static_window) {
        Vec3 d = r.gyro - mean;
        var += dot(d, d);
    }
    double gyro_std = std::sqrt(var / (3.0 * static_window.size()));
    if (gyro_std >= cfg.gyro_std_max)
        throw CalibrationError("estimate_gyro_bias: motion detected (gyro std " +
                               std::to_string(gyro_std) + " rad/s)");
    return mean;
}

Quat triad(const Vec3& accel, const Vec3& mag, const Vec3& ref_gravity, const Vec3& ref_north) {
    if (!is_finite(accel) || !is_finite(mag)) throw DomainError("triad: non-finite input");
    double an = norm(accel), mn = norm(mag);
    if (an < 1e-12 || mn < 1e-12) throw DomainError("triad: zero measurement vector");

    Vec3 b1 = accel * (1.0 / an);
    Vec3 b_cross = cross(b1, mag * (1.0 / mn));
    double bcn = norm(b_cross);
    if (bcn < 1e-9) throw DomainError("triad: measurement vectors are parallel");
    Vec3 b2 = b_cross * (1.0 / bcn);
    Vec3 b3 = cross(b1, b2);

    Vec3 w1 = normalized(ref_gravity);
    Vec3 w_cross = cross(w1, normalized(ref_north));
    double wcn = norm(w_cross);
    if (wcn < 1e-9) throw DomainError("triad: reference vectors are parallel");
    Vec3 w2 = w_cross * (1.0 / wcn);
    Vec3 w3 = cross(w1, w2);

    // R maps body to world: R = W * B^T with triad columns.
    Mat3 r;
    const Vec3 w_cols[3] = {w1, w2, w3};
    const Vec3 b_cols[3] = {b1, b2, b3};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0;
            for (int k = 0; k < 3; ++k) {
                const double wi = i == 0 ? w_cols[k].x : i == 1 ? w_cols[k].y : w_cols[k].z;
                const double bj = j == 0 ? b_cols[k].x : j == 1 ? b_cols[k].y : b_cols[k].z;
                acc += wi * bj;
            }
            r[i * 3 + j] = acc;
        }
    }
    return from_matrix(r);
}

Quat sts_static_npose(std::span<const MargReading> window, const Quat& expected_mount,
                      const StaticCheckConfig& cfg) {
    if (window.empty()) throw ContractError("sts_static_npose: empty window");
    if (!is_static_window(window, cfg)) {
        Vec3 gyro_mean{};
        double accel_mag = 0;
        for (const MargReading& r : window) {
            gyro_mean = gyro_mean + r.gyro;
            accel_mag += norm(r.accel);
        }
        std::ostringstream msg;
        msg << "sts_static_npose: window is not static (|accel| mean "
            << accel_mag / window.size() << " g, gyro mean " << norm(gyro_mean) * (1.0 / window.size())
            << " rad/s)";
        throw CalibrationError(msg.str());
    }
    Vec3 accel_mean{};
    for (const MargReading& r : window) accel_mean = accel_mean + r.accel;
    accel_mean = accel_mean * (1.0 / window.size());

    // Gravity mapped through the expected mount; the shortest-arc correction
    // onto world +z is a pure pitch/roll rotation, yaw is untouched.
    Vec3 g_est = rotate(expected_mount, normalized(accel_mean));
    Quat correction = from_two_vectors(g_est, Vec3{0, 0, 1});
    return normalized(quat_multiply_raw(correction, expected_mount));
}

Trial apply_sts(const Trial& trial, const StsTransform& sts) {
    if (static_cast<int>(sts.mounts.size()) != trial.n_sensors)
        throw ContractError("apply_sts: one mount per sensor required");
    Trial out = trial;
    for (int ti = 0; ti < out.n_samples(); ++ti) {
        for (int s = 0; s < out.n_sensors; ++s) {
            const Quat& m = sts.mounts[s];
            MargReading& r = out.reading(ti, s);
            r.accel = rotate(m, r.accel);
            r.gyro = rotate(m, r.gyro);
            r.mag = rotate(m, r.mag);
        }
    }
    return out;
}

// ---- profile JSON -------------------------------------------------------------

namespace {
json vec_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec_from_json(const json& j) { return {j.at(0), j.at(1), j.at(2)}; }
json quat_to_json(const Quat& q) { return json::array({q.w, q.x, q.y, q.z}); }
Quat quat_from_json(const json& j) { return {j.at(0), j.at(1), j.at(2), j.at(3)}; }
}  // namespace

void write_calibration_profile(const std::string& path, const CalibrationProfile& p) {
    json j;
    j["version"] = p.version;
    j["sensors"] = json::array();
    for (std::size_t i = 0; i < p.intrinsics.size(); ++i) {
        const SensorIntrinsics& s = p.intrinsics[i];
        json e;
        e["accel_bias"] = vec_to_json(s.accel_bias);
        e["accel_scale"] = vec_to_json(s.accel_scale);
        e["gyro_bias"] = vec_to_json(s.gyro_bias);
        e["gyro_scale"] = vec_to_json(s.gyro_scale);
        e["mag_bias"] = vec_to_json(s.mag_bias);
        e["mag_scale"] = vec_to_json(s.mag_scale);
        if (i < p.mounts.size()) e["mount"] = quat_to_json(p.mounts[i]);
        j["sensors"].push_back(e);
    }
    atomic_write(path, j.dump(2) + "\n");
}

CalibrationProfile read_calibration_profile(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    CalibrationProfile p;
    p.version = j.value("version", 0);
    if (p.version != 1) throw ParseError(path + ": unsupported calibration profile version");
    for (const auto& e : j.at("sensors")) {
        SensorIntrinsics s;
        s.accel_bias = vec_from_json(e.at("accel_bias"));
        s.accel_scale = vec_from_json(e.at("accel_scale"));
        s.gyro_bias = vec_from_json(e.at("gyro_bias"));
        s.gyro_scale = vec_from_json(e.at("gyro_scale"));
        s.mag_bias = vec_from_json(e.at("mag_bias"));
        s.mag_scale = vec_from_json(e.at("mag_scale"));
        s.validate();
        p.intrinsics.push_back(s);
        if (e.contains("mount"))
            p.mounts.push_back(normalized(quat_from_json(e.at("mount"))));
        else
            p.mounts.push_back(Quat::identity());
    }
    return p;
}

}  // namespace ipose
