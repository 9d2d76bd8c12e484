#include <doctest.h>

#include <cmath>
#include <random>

#include "ipose/calibration.hpp"
#include "ipose/synth.hpp"
#include "test_util.hpp"

using namespace ipose;

namespace {

SynthConfig static_cfg(int segments, double duration = 2.0) {
    SynthConfig cfg;
    cfg.duration_s = duration;
    for (int s = 0; s < segments; ++s) cfg.segments.push_back(SegmentMotion{});
    return cfg;
}

SynthConfig wobble_cfg(int segments, double duration, unsigned seed = 5) {
    SynthConfig cfg;
    cfg.duration_s = duration;
    cfg.seed = seed;
    for (int s = 0; s < segments; ++s) {
        SegmentMotion m;
        m.kind = SegmentMotion::Kind::sinusoid;
        m.amp = {0.5, 0.4, 0.6};
        m.freq_hz = {0.23 + 0.017 * s, 0.31, 0.11};
        m.phase = {0.3 * s, 1.0, 0.2};
        cfg.segments.push_back(m);
    }
    return cfg;
}

}  // namespace

TEST_CASE("static spec produces the identity trajectory") {
    Trajectory t = generate_truth(static_cfg(2));
    CHECK(t.n_samples() == 120);
    for (int ti = 0; ti < t.n_samples(); ++ti)
        for (int s = 0; s < 2; ++s) CHECK(qad(t.at(ti, s), Quat::identity()) == 0.0);
}

TEST_CASE("single-axis sinusoid traces its closed form") {
    SynthConfig cfg;
    cfg.duration_s = 5;
    SegmentMotion m;
    m.kind = SegmentMotion::Kind::sinusoid;
    m.amp = {0, 0, 0.8};  // yaw only
    m.freq_hz = {0, 0, 0.5};
    cfg.segments.push_back(m);
    Trajectory t = generate_truth(cfg);
    for (int ti = 0; ti < t.n_samples(); ++ti) {
        double expect = std::fabs(0.8 * std::sin(2 * M_PI * 0.5 * t.t[ti]));
        CHECK(qad(t.at(ti, 0), Quat::identity()) == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("keyframe interpolation midpoint equals analytic slerp") {
    std::mt19937_64 rng(41);
    Quat a = test_util::random_quat(rng), b = test_util::random_quat(rng);
    SynthConfig cfg;
    cfg.duration_s = 2;
    SegmentMotion m;
    m.kind = SegmentMotion::Kind::keyframes;
    m.keyframes = {{0.0, a}, {2.0, b}};
    cfg.segments.push_back(m);
    Trajectory t = generate_truth(cfg);
    int mid = 60;  // t = 1.0 s
    CHECK(qad(t.at(mid, 0), slerp(a, b, 0.5)) < 1e-9);
}

TEST_CASE("static truth synthesizes rest-state sensor readings") {
    std::mt19937_64 rng(42);
    SynthConfig cfg = static_cfg(3);
    for (SegmentMotion& m : cfg.segments) m.base = test_util::random_quat(rng);
    Trajectory truth = generate_truth(cfg);
    Trial trial = synthesize_marg(truth, cfg);
    for (int ti = 0; ti < trial.n_samples(); ++ti) {
        for (int s = 0; s < 3; ++s) {
            const MargReading& r = trial.reading(ti, s);
            CHECK(norm(r.gyro) < 1e-9);
            Vec3 g_sensor = rotate_inverse(truth.at(ti, s), Vec3{0, 0, 1});
            CHECK(norm(r.accel - g_sensor) < 1e-12);
            CHECK(norm(r.mag) == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("constant-rate truth synthesizes that rate") {
    SynthConfig cfg;
    cfg.duration_s = 3;
    SegmentMotion m;
    m.kind = SegmentMotion::Kind::keyframes;
    Vec3 axis = normalized(Vec3{0.3, -0.5, 0.81});
    const double rate = 1.7;  // rad/s about a fixed axis
    for (double t = 0; t <= 3.01; t += 0.5) m.keyframes.emplace_back(t, from_axis_angle(axis, rate * t));
    cfg.segments.push_back(m);
    Trajectory truth = generate_truth(cfg);
    Trial trial = synthesize_marg(truth, cfg);
    Vec3 expect = axis * rate;
    for (int ti = 0; ti < trial.n_samples() - 1; ++ti)
        CHECK(norm(trial.reading(ti, 0).gyro - expect) < 1e-6);
}

TEST_CASE("round trip: integrating the synthesized gyro reproduces truth") {
    SynthConfig cfg = wobble_cfg(2, 60.0);
    Trajectory truth = generate_truth(cfg);
    Trial trial = synthesize_marg(truth, cfg);
    const double dt = 1.0 / cfg.rate_hz;
    for (int s = 0; s < 2; ++s) {
        Quat q = truth.at(0, s);
        double worst = 0;
        for (int ti = 1; ti < trial.n_samples(); ++ti) {
            q = integrate_gyro(q, trial.reading(ti, s).gyro, dt);
            worst = std::max(worst, qad_deg(truth.at(ti, s), q));
        }
        CHECK(worst < 0.5);
    }
}

TEST_CASE("injected mounting offset shifts TRIAD by exactly that angle") {
    SynthConfig cfg = static_cfg(1);
    cfg.segments[0].base = from_axis_angle(normalized(Vec3{1, 2, 0.5}), 0.7);
    Quat offset = from_axis_angle(normalized(Vec3{0.2, 1, 0.1}), 10.0 * M_PI / 180);
    cfg.imperfections.sts_offsets = {offset};
    Trajectory truth = generate_truth(cfg);
    Trial trial = synthesize_marg(truth, cfg);

    const MargReading& r = trial.reading(0, 0);
    Quat t = triad(r.accel, r.mag);
    Quat expected = quat_multiply(truth.at(0, 0), offset);
    CHECK(qad(t, expected) < 1e-9);
    CHECK(qad_deg(t, truth.at(0, 0)) == doctest::Approx(10.0).epsilon(1e-3));
}

TEST_CASE("magnetic pulse bends and scales the field only inside its window") {
    SynthConfig cfg = static_cfg(1, 10.0);
    MagPulse p;
    p.start_s = 4.0;
    p.duration_s = 2.0;
    p.magnitude = 2.0;
    cfg.imperfections.mag_pulses = {p};
    Trajectory truth = generate_truth(cfg);
    Trial trial = synthesize_marg(truth, cfg);
    CHECK(norm(trial.reading(60, 0).mag) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(norm(trial.reading(300, 0).mag) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(norm(trial.reading(599, 0).mag) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("seeded synthesis is reproducible") {
    SynthConfig cfg = wobble_cfg(2, 5.0, 9);
    cfg.imperfections.gyro_noise_std = 0.01;
    cfg.imperfections.accel_noise_std = 0.02;
    Trajectory truth = generate_truth(cfg);
    Trial a = synthesize_marg(truth, cfg);
    Trial b = synthesize_marg(truth, cfg);
    REQUIRE(a.data.size() == b.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        CHECK(a.data[i].accel.x == b.data[i].accel.x);
        CHECK(a.data[i].gyro.z == b.data[i].gyro.z);
    }
}
