#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ipose/calibration.hpp"
#include "ipose/cli.hpp"
#include "ipose/dataset.hpp"
#include "ipose/evaluation.hpp"
#include "ipose/io.hpp"
#include "ipose/synth.hpp"

using namespace ipose;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path work_dir() {
    fs::path p = fs::temp_directory_path() / "ipose_cli_tests";
    fs::create_directories(p);
    return p;
}

std::string synth_config_json(double duration, int segments) {
    json j;
    j["duration_s"] = duration;
    j["rate_hz"] = 60.0;
    j["seed"] = 21;
    j["segments"] = json::array();
    for (int s = 0; s < segments; ++s) {
        j["segments"].push_back({{"kind", "sinusoid"},
                                 {"amp", {0.4, 0.3, 0.5}},
                                 {"freq_hz", {0.2 + 0.05 * s, 0.15, 0.1}},
                                 {"phase", {0.1 * s, 0.4, 0.0}}});
    }
    return j.dump(2);
}

}  // namespace

TEST_CASE("cli pipeline: synth, fuse, eval, stats, pose, bench") {
    fs::path dir = work_dir();
    fs::path cfg = dir / "synth.json";
    atomic_write(cfg.string(), synth_config_json(6.0, 9));

    SUBCASE("unknown flags exit with the usage code") {
        CHECK(cli::run({"fuse", "--no-such-flag"}) == cli::kExitUsage);
        CHECK(cli::run({"nonsense"}) == cli::kExitUsage);
    }

    REQUIRE(cli::run({"synth", "--config", cfg.string(), "--out", (dir / "d").string()}) == 0);
    REQUIRE(fs::exists(dir / "d" / "trial.csv"));
    REQUIRE(fs::exists(dir / "d" / "trial.truth.csv"));
    REQUIRE(fs::exists(dir / "d" / "manifest.json"));

    SUBCASE("fuse writes a parseable trajectory, serial matches parallel") {
        REQUIRE(cli::run({"fuse", "--filter", "madgwick", "--mag", "on", "--in",
                          (dir / "d" / "trial.csv").string(), "--out",
                          (dir / "traj.csv").string()}) == 0);
        REQUIRE(cli::run({"fuse", "--filter", "madgwick", "--mag", "on", "--serial", "--in",
                          (dir / "d" / "trial.csv").string(), "--out",
                          (dir / "traj_serial.csv").string()}) == 0);
        Trajectory a = parse_trajectory((dir / "traj.csv").string());
        Trajectory b = parse_trajectory((dir / "traj_serial.csv").string());
        REQUIRE(a.q.size() == b.q.size());
        for (std::size_t i = 0; i < a.q.size(); ++i) CHECK(a.q[i].w == b.q[i].w);

        SUBCASE("eval report equals the library result") {
            REQUIRE(cli::run({"eval", "--pred", (dir / "traj.csv").string(), "--gt",
                              (dir / "d" / "trial.truth.csv").string(), "--report",
                              (dir / "report.json").string()}) == 0);
            json rep = json::parse(read_file((dir / "report.json").string()));
            Trajectory gt = parse_trajectory((dir / "d" / "trial.truth.csv").string());
            EvalReport lib = evaluate(a, gt);
            CHECK(rep["mean_deg"].get<double>() == doctest::Approx(lib.mean_deg).epsilon(1e-12));
            CHECK(rep["std_deg"].get<double>() == doctest::Approx(lib.std_deg).epsilon(1e-12));
        }
        SUBCASE("pose runs forward kinematics over the trajectory") {
            REQUIRE(cli::run({"pose", "--traj", (dir / "traj.csv").string(), "--skeleton", "9",
                              "--out", (dir / "pose.csv").string(), "--svg",
                              (dir / "pose.svg").string()}) == 0);
            CHECK(fs::exists(dir / "pose.csv"));
            CHECK(fs::file_size(dir / "pose.svg") > 200);
        }
    }

    SUBCASE("stats emits the moment summary") {
        REQUIRE(cli::run({"stats", "--data", (dir / "d" / "manifest.json").string(), "--out",
                          (dir / "stats.json").string()}) == 0);
        json st = json::parse(read_file((dir / "stats.json").string()));
        CHECK(st.contains("accel"));
        CHECK(st["n_samples"].get<int>() == 360);
    }

    SUBCASE("config --set overrides apply") {
        REQUIRE(cli::run({"synth", "--config", cfg.string(), "--set", "duration_s=2", "--out",
                          (dir / "d2").string()}) == 0);
        Trial t = parse_trial((dir / "d2" / "trial.csv").string());
        CHECK(t.n_samples() == 120);
    }

    SUBCASE("missing input file maps to the parse exit code") {
        CHECK(cli::run({"fuse", "--in", (dir / "missing.csv").string(), "--out",
                        (dir / "x.csv").string()}) == cli::kExitParse);
    }
}

TEST_CASE("cli calibrate on a static-start trial") {
    fs::path dir = work_dir();
    json j;
    j["duration_s"] = 8.0;
    j["rate_hz"] = 60.0;
    j["seed"] = 3;
    // static N-pose for the whole trial, small gyro bias to estimate
    j["segments"] = json::array({json{{"kind", "static"}}, json{{"kind", "static"}}});
    j["imperfections"] = {{"gyro_bias", {0.011, -0.007, 0.004}}, {"gyro_noise_std", 0.004}};
    atomic_write((dir / "cal_synth.json").string(), j.dump());
    REQUIRE(cli::run({"synth", "--config", (dir / "cal_synth.json").string(), "--out",
                      (dir / "cal").string()}) == 0);
    REQUIRE(cli::run({"calibrate", "--in", (dir / "cal" / "trial.csv").string(), "--profile",
                      (dir / "profile.json").string(), "--apply",
                      (dir / "calibrated.csv").string()}) == 0);

    CalibrationProfile p = read_calibration_profile((dir / "profile.json").string());
    REQUIRE(p.intrinsics.size() == 2);
    CHECK(p.intrinsics[0].gyro_bias.x == doctest::Approx(0.011).epsilon(0.1));
    CHECK(p.intrinsics[0].gyro_bias.y == doctest::Approx(-0.007).epsilon(0.15));

    Trial calibrated = parse_trial((dir / "calibrated.csv").string());
    double mean_gyro = 0;
    for (const MargReading& r : calibrated.data) mean_gyro += norm(r.gyro);
    mean_gyro /= calibrated.data.size();
    CHECK(mean_gyro < 0.01);  // bias removed, noise remains
}

TEST_CASE("cli bench reports per-method latency") {
    fs::path dir = work_dir();
    fs::path cfg = dir / "bench_synth.json";
    atomic_write(cfg.string(), synth_config_json(2.0, 2));
    REQUIRE(cli::run({"synth", "--config", cfg.string(), "--out", (dir / "bd").string()}) == 0);
    REQUIRE(cli::run({"bench", "--in", (dir / "bd" / "trial.csv").string(), "--methods",
                      "integral,madgwick", "--warmup", "1", "--iters", "100", "--out",
                      (dir / "bench.csv").string()}) == 0);
    std::string csv = read_file((dir / "bench.csv").string());
    CHECK(csv.find("integral,") != std::string::npos);
    CHECK(csv.find("madgwick,") != std::string::npos);
}
