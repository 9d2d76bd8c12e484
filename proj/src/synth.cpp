#include "ipose/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "ipose/errors.hpp"
#include "ipose/io.hpp"

namespace ipose {

using nlohmann::json;

Vec3 SynthConfig::north() const {
    double dip = mag_dip_deg * M_PI / 180.0;
    return {std::cos(dip), 0.0, -std::sin(dip)};
}

namespace {

Quat eval_motion(const SegmentMotion& m, double t) {
    switch (m.kind) {
        case SegmentMotion::Kind::static_pose:
            return m.base;
        case SegmentMotion::Kind::sinusoid: {
            double roll = m.amp.x * std::sin(2 * M_PI * m.freq_hz.x * t + m.phase.x);
            double pitch = m.amp.y * std::sin(2 * M_PI * m.freq_hz.y * t + m.phase.y);
            double yaw = m.amp.z * std::sin(2 * M_PI * m.freq_hz.z * t + m.phase.z);
            return normalized(quat_multiply_raw(m.base, euler_to_quat(yaw, pitch, roll)));
        }
        case SegmentMotion::Kind::keyframes: {
            if (m.keyframes.empty()) return m.base;
            if (t <= m.keyframes.front().first) return normalized(m.keyframes.front().second);
            if (t >= m.keyframes.back().first) return normalized(m.keyframes.back().second);
            std::size_t hi = 1;
            while (hi < m.keyframes.size() && m.keyframes[hi].first < t) ++hi;
            const auto& a = m.keyframes[hi - 1];
            const auto& b = m.keyframes[hi];
            double u = (t - a.first) / (b.first - a.first);
            return slerp(a.second, b.second, u);
        }
    }
    return Quat::identity();
}

}  // namespace

Trajectory generate_truth(const SynthConfig& cfg) {
    if (!(cfg.rate_hz > 0) || !(cfg.duration_s > 0))
        throw ContractError("generate_truth: rate and duration must be positive");
    if (cfg.segments.empty()) throw ContractError("generate_truth: no segment motions configured");
    const int T = cfg.n_samples();
    const int S = static_cast<int>(cfg.segments.size());
    Trajectory traj;
    traj.n_segments = S;
    traj.t.resize(T);
    traj.q.resize(static_cast<std::size_t>(T) * S);
    const double dt = 1.0 / cfg.rate_hz;
    for (int ti = 0; ti < T; ++ti) {
        traj.t[ti] = ti * dt;
        for (int s = 0; s < S; ++s) traj.at(ti, s) = eval_motion(cfg.segments[s], ti * dt);
    }
    for (int s = 0; s < S; ++s) {
        // keep streams hemisphere-continuous for downstream consumers
        for (int ti = 1; ti < T; ++ti)
            if (quat_dot(traj.at(ti - 1, s), traj.at(ti, s)) < 0) {
                Quat& q = traj.at(ti, s);
                q = {-q.w, -q.x, -q.y, -q.z};
            }
    }
    return traj;
}

Trial synthesize_marg(const Trajectory& truth, const SynthConfig& cfg) {
    const int T = truth.n_samples();
    const int S = truth.n_segments;
    if (T < 2) throw ContractError("synthesize_marg: need at least two truth samples");
    const double dt = 1.0 / cfg.rate_hz;
    const Vec3 gravity{0, 0, 1};
    const Vec3 north = cfg.north();
    const ImperfectionSpec& imp = cfg.imperfections;
    if (!imp.sts_offsets.empty() && static_cast<int>(imp.sts_offsets.size()) != S)
        throw ContractError("synthesize_marg: sts_offsets must match segment count");

    Trial trial;
    trial.subject = cfg.subject;
    trial.kind = cfg.kind;
    trial.rate_hz = cfg.rate_hz;
    trial.n_sensors = S;
    trial.accel_units = "g";
    trial.preprocessed = true;  // emitted clean, 60 Hz, normalized units
    trial.t = truth.t;
    trial.data.resize(static_cast<std::size_t>(T) * S);
    trial.truth = truth.q;

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (int s = 0; s < S; ++s) {
        Quat offset = imp.sts_offsets.empty() ? Quat::identity() : imp.sts_offsets[s];
        // Sensor-frame orientation stream (segment truth pre-rotated by the
        // mounting offset).
        std::vector<Quat> qs(T);
        for (int ti = 0; ti < T; ++ti) qs[ti] = normalized(quat_multiply_raw(truth.at(ti, s), offset));

        for (int ti = 0; ti < T; ++ti) {
            double t = truth.t[ti];
            // gyro: backward log-map difference, so the reading at t propagates
            // the previous orientation exactly onto the current one
            int a = std::max(ti, 1);
            Quat dq = quat_multiply_raw(conjugate(qs[a - 1]), qs[a]);
            Vec3 w = quat_log_vec(normalized(dq)) * (2.0 / dt);

            Vec3 lin{};
            if (imp.linear_accel_amp != 0.0) {
                double ph = 2 * M_PI * imp.linear_accel_freq_hz * t;
                lin = Vec3{std::sin(ph), std::sin(1.31 * ph + 1.0), 0.5 * std::sin(0.77 * ph + 2.0)} *
                      imp.linear_accel_amp;
            }

            Vec3 field = north;
            for (const MagPulse& p : imp.mag_pulses) {
                if (t >= p.start_s && t < p.start_s + p.duration_s) {
                    Quat swing = from_axis_angle(Vec3{0, 0, 1}, p.yaw_offset_deg * M_PI / 180.0);
                    field = rotate(swing, north) * p.magnitude;
                }
            }

            MargReading r;
            r.gyro = w + imp.gyro_bias;
            r.accel = rotate_inverse(qs[ti], gravity + lin);
            r.mag = rotate_inverse(qs[ti], field);
            if (imp.gyro_noise_std > 0)
                r.gyro = r.gyro + Vec3{gauss(rng), gauss(rng), gauss(rng)} * imp.gyro_noise_std;
            if (imp.accel_noise_std > 0)
                r.accel = r.accel + Vec3{gauss(rng), gauss(rng), gauss(rng)} * imp.accel_noise_std;
            if (imp.mag_noise_std > 0)
                r.mag = r.mag + Vec3{gauss(rng), gauss(rng), gauss(rng)} * imp.mag_noise_std;
            trial.reading(ti, s) = r;
        }
    }
    return trial;
}

// ---- config JSON ----------------------------------------------------------------------

namespace {
json vec_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec_from_json(const json& j) { return {j.at(0), j.at(1), j.at(2)}; }
json quat_to_json(const Quat& q) { return json::array({q.w, q.x, q.y, q.z}); }
Quat quat_from_json(const json& j) { return {j.at(0), j.at(1), j.at(2), j.at(3)}; }
}  // namespace

void write_synth_config(const std::string& path, const SynthConfig& cfg) {
    json j;
    j["duration_s"] = cfg.duration_s;
    j["rate_hz"] = cfg.rate_hz;
    j["mag_dip_deg"] = cfg.mag_dip_deg;
    j["seed"] = cfg.seed;
    j["subject"] = cfg.subject;
    j["kind"] = to_string(cfg.kind);
    j["segments"] = json::array();
    for (const SegmentMotion& m : cfg.segments) {
        json e;
        e["kind"] = m.kind == SegmentMotion::Kind::static_pose ? "static"
                    : m.kind == SegmentMotion::Kind::sinusoid  ? "sinusoid"
                                                               : "keyframes";
        e["base"] = quat_to_json(m.base);
        e["amp"] = vec_to_json(m.amp);
        e["freq_hz"] = vec_to_json(m.freq_hz);
        e["phase"] = vec_to_json(m.phase);
        e["keyframes"] = json::array();
        for (const auto& [t, q] : m.keyframes) e["keyframes"].push_back({{"t", t}, {"q", quat_to_json(q)}});
        j["segments"].push_back(e);
    }
    const ImperfectionSpec& imp = cfg.imperfections;
    json ji;
    ji["gyro_bias"] = vec_to_json(imp.gyro_bias);
    ji["gyro_noise_std"] = imp.gyro_noise_std;
    ji["accel_noise_std"] = imp.accel_noise_std;
    ji["mag_noise_std"] = imp.mag_noise_std;
    ji["linear_accel_amp"] = imp.linear_accel_amp;
    ji["linear_accel_freq_hz"] = imp.linear_accel_freq_hz;
    ji["sts_offsets"] = json::array();
    for (const Quat& q : imp.sts_offsets) ji["sts_offsets"].push_back(quat_to_json(q));
    ji["mag_pulses"] = json::array();
    for (const MagPulse& p : imp.mag_pulses)
        ji["mag_pulses"].push_back({{"start_s", p.start_s},
                                    {"duration_s", p.duration_s},
                                    {"magnitude", p.magnitude},
                                    {"yaw_offset_deg", p.yaw_offset_deg}});
    j["imperfections"] = ji;
    atomic_write(path, j.dump(2) + "\n");
}

SynthConfig read_synth_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    SynthConfig cfg;
    cfg.duration_s = j.value("duration_s", cfg.duration_s);
    cfg.rate_hz = j.value("rate_hz", cfg.rate_hz);
    cfg.mag_dip_deg = j.value("mag_dip_deg", cfg.mag_dip_deg);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.subject = j.value("subject", cfg.subject);
    if (j.contains("kind")) cfg.kind = trial_kind_from_string(j["kind"].get<std::string>());
    for (const auto& e : j.at("segments")) {
        SegmentMotion m;
        std::string kind = e.value("kind", "static");
        m.kind = kind == "sinusoid"    ? SegmentMotion::Kind::sinusoid
                 : kind == "keyframes" ? SegmentMotion::Kind::keyframes
                                       : SegmentMotion::Kind::static_pose;
        if (e.contains("base")) m.base = normalized(quat_from_json(e["base"]));
        if (e.contains("amp")) m.amp = vec_from_json(e["amp"]);
        if (e.contains("freq_hz")) m.freq_hz = vec_from_json(e["freq_hz"]);
        if (e.contains("phase")) m.phase = vec_from_json(e["phase"]);
        if (e.contains("keyframes"))
            for (const auto& k : e["keyframes"])
                m.keyframes.emplace_back(k.at("t").get<double>(), normalized(quat_from_json(k.at("q"))));
        cfg.segments.push_back(m);
    }
    if (j.contains("imperfections")) {
        const json& ji = j["imperfections"];
        ImperfectionSpec& imp = cfg.imperfections;
        if (ji.contains("gyro_bias")) imp.gyro_bias = vec_from_json(ji["gyro_bias"]);
        imp.gyro_noise_std = ji.value("gyro_noise_std", 0.0);
        imp.accel_noise_std = ji.value("accel_noise_std", 0.0);
        imp.mag_noise_std = ji.value("mag_noise_std", 0.0);
        imp.linear_accel_amp = ji.value("linear_accel_amp", 0.0);
        imp.linear_accel_freq_hz = ji.value("linear_accel_freq_hz", 0.5);
        if (ji.contains("sts_offsets"))
            for (const auto& q : ji["sts_offsets"]) imp.sts_offsets.push_back(normalized(quat_from_json(q)));
        if (ji.contains("mag_pulses"))
            for (const auto& p : ji["mag_pulses"]) {
                MagPulse mp;
                mp.start_s = p.value("start_s", 0.0);
                mp.duration_s = p.value("duration_s", 0.0);
                mp.magnitude = p.value("magnitude", 2.0);
                mp.yaw_offset_deg = p.value("yaw_offset_deg", 45.0);
                imp.mag_pulses.push_back(mp);
            }
    }
    // pulse windows must lie inside the trial
    for (const MagPulse& p : cfg.imperfections.mag_pulses)
        if (p.start_s < 0 || p.start_s + p.duration_s > cfg.duration_s)
            throw ContractError("synth config: magnetic pulse outside trial duration");
    return cfg;
}

}  // namespace ipose
