#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ipose/calibration.hpp"
#include "test_util.hpp"

using namespace ipose;
using test_util::random_quat;

TEST_CASE("apply_intrinsics") {
    SUBCASE("defaults are the identity") {
        MargReading r{{1.2, -0.3, 0.9}, {0.1, 0.2, 0.3}, {0.5, 0.5, 0.0}};
        MargReading out = apply_intrinsics(r, SensorIntrinsics{});
        CHECK(out.accel.x == 1.2);
        CHECK(out.gyro.y == 0.2);
        CHECK(out.mag.z == 0.0);
    }
    SUBCASE("bias subtracted then scaled") {
        SensorIntrinsics cal;
        cal.accel_bias = {0.2, 0, 0};
        MargReading r{{1.2, 0, 0}, {}, {}};
        CHECK(apply_intrinsics(r, cal).accel.x == doctest::Approx(1.0));
    }
    SUBCASE("inject then apply is the identity") {
        std::mt19937_64 rng(51);
        std::uniform_real_distribution<double> u(-0.2, 0.2);
        std::uniform_real_distribution<double> s(0.8, 1.2);
        for (int rep = 0; rep < 50; ++rep) {
            SensorIntrinsics cal;
            cal.accel_bias = {u(rng), u(rng), u(rng)};
            cal.gyro_bias = {u(rng), u(rng), u(rng)};
            cal.mag_bias = {u(rng), u(rng), u(rng)};
            cal.accel_scale = {s(rng), s(rng), s(rng)};
            cal.gyro_scale = {s(rng), s(rng), s(rng)};
            cal.mag_scale = {s(rng), s(rng), s(rng)};
            MargReading clean{{u(rng), u(rng), 1.0}, {u(rng), u(rng), u(rng)}, {1, u(rng), u(rng)}};
            MargReading rt = apply_intrinsics(inject_intrinsics(clean, cal), cal);
            CHECK(norm(rt.accel - clean.accel) < 1e-12);
            CHECK(norm(rt.gyro - clean.gyro) < 1e-12);
            CHECK(norm(rt.mag - clean.mag) < 1e-12);
        }
    }
    SUBCASE("non-positive scale is a contract error") {
        SensorIntrinsics cal;
        cal.gyro_scale = {1, 0, 1};
        CHECK_THROWS_AS(apply_intrinsics(MargReading{}, cal), ContractError);
    }
}

TEST_CASE("estimate_gyro_bias") {
    SUBCASE("zero readings give zero bias") {
        std::vector<MargReading> win(120);
        for (auto& r : win) r.accel = {0, 0, 1};
        Vec3 b = estimate_gyro_bias(win);
        CHECK(norm(b) == 0.0);
    }
    SUBCASE("constant readings give that constant") {
        std::vector<MargReading> win(120);
        for (auto& r : win) {
            r.accel = {0, 0, 1};
            r.gyro = {0.01, -0.02, 0.0};
        }
        Vec3 b = estimate_gyro_bias(win);
        CHECK(b.x == doctest::Approx(0.01));
        CHECK(b.y == doctest::Approx(-0.02));
        CHECK(b.z == doctest::Approx(0.0));
    }
    SUBCASE("white noise around a bias recovers it within 3 sigma / sqrt(n)") {
        std::mt19937_64 rng(52);
        std::normal_distribution<double> g(0.0, 0.01);
        Vec3 bias{0.004, -0.006, 0.002};
        std::vector<MargReading> win(600);
        for (auto& r : win) {
            r.accel = {0, 0, 1};
            r.gyro = bias + Vec3{g(rng), g(rng), g(rng)};
        }
        Vec3 b = estimate_gyro_bias(win);
        double tol = 3 * 0.01 / std::sqrt(600.0);
        CHECK(std::fabs(b.x - bias.x) < tol);
        CHECK(std::fabs(b.y - bias.y) < tol);
        CHECK(std::fabs(b.z - bias.z) < tol);
    }
    SUBCASE("motion in the window is a calibration error") {
        std::vector<MargReading> win(120);
        for (int i = 0; i < 120; ++i) {
            win[i].accel = {0, 0, 1};
            win[i].gyro = {std::sin(i * 0.3), 0, 0};
        }
        CHECK_THROWS_AS(estimate_gyro_bias(win), CalibrationError);
    }
}

TEST_CASE("triad") {
    SUBCASE("reference pose gives the identity") {
        Quat q = triad(Vec3{0, 0, 1}, Vec3{1, 0, 0});
        CHECK(qad(q, Quat::identity()) < 1e-12);
    }
    SUBCASE("a yaw turn is recovered exactly") {
        Quat truth = from_axis_angle(Vec3{0, 0, 1}, M_PI / 2);
        Vec3 accel = rotate_inverse(truth, Vec3{0, 0, 1});
        Vec3 mag = rotate_inverse(truth, Vec3{1, 0, 0});
        CHECK(qad(triad(accel, mag), truth) < 1e-12);
    }
    SUBCASE("exact on 1000 random noise-free orientations") {
        std::mt19937_64 rng(53);
        for (int i = 0; i < 1000; ++i) {
            Quat truth = random_quat(rng);
            Vec3 accel = rotate_inverse(truth, Vec3{0, 0, 1}) * 1.0;
            Vec3 mag = rotate_inverse(truth, Vec3{0.94, 0, -0.34});  // dipped field
            Quat est = triad(accel, mag, Vec3{0, 0, 1}, Vec3{1, 0, 0});
            CHECK(qad(est, truth) < 1e-6);
        }
    }
    SUBCASE("degenerate geometry raises a domain error") {
        CHECK_THROWS_AS(triad(Vec3{0, 0, 1}, Vec3{0, 0, 2}), DomainError);
        CHECK_THROWS_AS(triad(Vec3{0, 0, 0}, Vec3{1, 0, 0}), DomainError);
    }
}

namespace {

std::vector<MargReading> gravity_window(const Quat& true_mount, int n, double noise = 0.0,
                                        unsigned seed = 54) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, noise);
    std::vector<MargReading> win(n);
    for (auto& r : win) {
        r.accel = rotate_inverse(true_mount, Vec3{0, 0, 1});
        if (noise > 0) r.accel = r.accel + Vec3{g(rng), g(rng), g(rng)};
        r.mag = rotate_inverse(true_mount, Vec3{1, 0, 0});
    }
    return win;
}

double yaw_twist(const Quat& q) { return 2.0 * std::atan2(q.z, q.w); }

}  // namespace

TEST_CASE("sts_static_npose") {
    SUBCASE("gravity along the expected axis leaves the mount unchanged") {
        Quat mount = from_axis_angle(Vec3{0, 0, 1}, 0.4);
        auto win = gravity_window(mount, 300);
        Quat out = sts_static_npose(win, mount);
        CHECK(qad(out, mount) < 1e-12);
    }
    SUBCASE("a 10 degree pitch error is corrected, yaw untouched") {
        Quat expected = from_axis_angle(Vec3{0, 0, 1}, 0.7);
        Quat tilt = from_axis_angle(Vec3{0, 1, 0}, 10.0 * M_PI / 180);
        Quat true_mount = quat_multiply(tilt, expected);
        auto win = gravity_window(true_mount, 300);
        Quat out = sts_static_npose(win, expected);
        CHECK(qad_deg(out, true_mount) < 1e-9);
        Quat corr = quat_multiply(out, conjugate(expected));
        CHECK(std::fabs(yaw_twist(corr)) < 1e-9);
    }
    SUBCASE("never changes yaw for random mounts") {
        std::mt19937_64 rng(55);
        for (int i = 0; i < 200; ++i) {
            Quat expected = random_quat(rng);
            Quat true_mount = quat_multiply(
                from_axis_angle(test_util::random_unit_vec(rng), 0.2), expected);
            auto win = gravity_window(true_mount, 60);
            Quat out = sts_static_npose(win, expected);
            Quat corr = quat_multiply(out, conjugate(expected));
            CHECK(std::fabs(yaw_twist(corr)) < 1e-9);
        }
    }
    SUBCASE("noisy gravity stays within a degree of the clean correction") {
        Quat expected = Quat::identity();
        Quat tilt = from_axis_angle(Vec3{1, 0, 0}, 8.0 * M_PI / 180);
        Quat true_mount = quat_multiply(tilt, expected);
        Quat clean = sts_static_npose(gravity_window(true_mount, 300), expected);
        for (unsigned seed = 0; seed < 20; ++seed) {
            Quat noisy = sts_static_npose(gravity_window(true_mount, 300, 0.05, seed), expected);
            CHECK(qad_deg(clean, noisy) < 1.0);
        }
    }
    SUBCASE("motion fails the static check with diagnostics") {
        std::vector<MargReading> win(300);
        for (int i = 0; i < 300; ++i) {
            win[i].accel = {0, 0, 1};
            win[i].gyro = {0.5 * std::sin(i * 0.1), 0, 0};
        }
        CHECK_THROWS_AS(sts_static_npose(win, Quat::identity()), CalibrationError);
    }
}

TEST_CASE("calibration profile round trip") {
    CalibrationProfile p;
    std::mt19937_64 rng(56);
    for (int s = 0; s < 3; ++s) {
        SensorIntrinsics si;
        si.gyro_bias = {0.01 * s, -0.02, 0.003};
        si.accel_scale = {1.01, 0.99, 1.0};
        p.intrinsics.push_back(si);
        p.mounts.push_back(random_quat(rng));
    }
    std::string path = (std::filesystem::temp_directory_path() / "ipose_cal_test.json").string();
    write_calibration_profile(path, p);
    CalibrationProfile r = read_calibration_profile(path);
    REQUIRE(r.intrinsics.size() == 3);
    for (int s = 0; s < 3; ++s) {
        CHECK(r.intrinsics[s].gyro_bias.x == doctest::Approx(p.intrinsics[s].gyro_bias.x));
        CHECK(qad(r.mounts[s], p.mounts[s]) < 1e-12);
    }
    std::filesystem::remove(path);
}
