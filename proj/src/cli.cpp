#include "ipose/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ipose/calibration.hpp"
#include "ipose/dataset.hpp"
#include "ipose/errors.hpp"
#include "ipose/evaluation.hpp"
#include "ipose/filters.hpp"
#include "ipose/io.hpp"
#include "ipose/nn/model.hpp"
#include "ipose/nn/train.hpp"
#include "ipose/skeleton.hpp"
#include "ipose/synth.hpp"

namespace ipose::cli {

using nlohmann::json;

namespace {

// Applies --set key.path=value overrides to a JSON config file and returns a
// path to the patched copy.
std::string patched_config(const std::string& path, const std::vector<std::string>& sets) {
    if (sets.empty()) return resolve_config_path(path);
    json j = json::parse(read_file(resolve_config_path(path)));
    for (const std::string& kv : sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("--set expects key=value, got: " + kv);
        std::string key = kv.substr(0, eq);
        std::string val = kv.substr(eq + 1);
        std::string ptr = "/" + key;
        for (char& c : ptr)
            if (c == '.') c = '/';
        json parsed;
        try {
            parsed = json::parse(val);
        } catch (const json::exception&) {
            parsed = val;  // plain string
        }
        j[json::json_pointer(ptr)] = parsed;
    }
    std::string tmp =
        (std::filesystem::temp_directory_path() / ("ipose_cfg_" + std::to_string(fnv1a64(j.dump())) + ".json"))
            .string();
    atomic_write(tmp, j.dump(2) + "\n");
    return tmp;
}

std::vector<int> parse_hidden(const std::string& s) {
    std::vector<int> out;
    for (const std::string& part : split(s, ',')) out.push_back(std::stoi(part));
    return out;
}

Trial load_trial_for_fusion(const std::string& path, const std::string& profile,
                            bool run_preprocess) {
    Trial trial = parse_trial(path);
    if (!profile.empty()) {
        CalibrationProfile p = read_calibration_profile(resolve_config_path(profile));
        trial = apply_intrinsics(trial, p.intrinsics);
        StsTransform sts{p.mounts};
        trial = apply_sts(trial, sts);
    }
    if (run_preprocess) trial = preprocess(trial);
    return trial;
}

SkeletonModel load_skeleton(const std::string& spec, double height) {
    if (spec == "9") return SkeletonModel::upper_body_9(height);
    if (spec == "17") return SkeletonModel::full_body_17(height);
    return read_skeleton_json(resolve_config_path(spec));
}

int cmd_synth(const std::string& config, const std::string& out_dir, std::int64_t seed,
              const std::vector<std::string>& sets) {
    SynthConfig cfg = read_synth_config(patched_config(config, sets));
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    Trajectory truth = generate_truth(cfg);
    Trial trial = synthesize_marg(truth, cfg);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::string trial_path = (fs::path(out_dir) / "trial.csv").string();
    std::string truth_path = (fs::path(out_dir) / "trial.truth.csv").string();
    write_trial(trial_path, trial, cfg.seed);
    write_trajectory(truth_path, truth, cfg.seed);

    Manifest m;
    m.seed = cfg.seed;
    ManifestEntry e;
    e.file = "trial.csv";
    e.subject = trial.subject;
    e.kind = trial.kind;
    e.n_sensors = trial.n_sensors;
    e.n_samples = trial.n_samples();
    e.checksum = fnv1a_hex(trial_path);
    m.trials.push_back(e);
    write_manifest((fs::path(out_dir) / "manifest.json").string(), m);
    std::cout << "synth: wrote " << trial.n_samples() << " samples x " << trial.n_sensors
              << " sensors to " << out_dir << "\n";
    return kExitOk;
}

int cmd_calibrate(const std::string& in, const std::string& out, const std::string& mounts_path,
                  double window_seconds, const std::string& apply_out) {
    Trial trial = parse_trial(in);
    int window = std::min(trial.n_samples(),
                          static_cast<int>(window_seconds * trial.rate_hz));
    if (window < 2) throw CalibrationError("calibrate: static window too short");

    std::vector<Quat> expected(trial.n_sensors, Quat::identity());
    if (!mounts_path.empty()) {
        json j = json::parse(read_file(resolve_config_path(mounts_path)));
        const auto& arr = j.at("mounts");
        if (static_cast<int>(arr.size()) != trial.n_sensors)
            throw ParseError(mounts_path + ": mount count does not match trial sensors");
        for (int s = 0; s < trial.n_sensors; ++s) {
            const auto& q = arr.at(s);
            expected[s] = normalized(Quat{q.at(0), q.at(1), q.at(2), q.at(3)});
        }
    }

    CalibrationProfile profile;
    std::vector<std::string> failures;
    for (int s = 0; s < trial.n_sensors; ++s) {
        std::vector<MargReading> win(window);
        for (int ti = 0; ti < window; ++ti) win[ti] = trial.reading(ti, s);
        SensorIntrinsics intr;
        try {
            intr.gyro_bias = estimate_gyro_bias(win);
        } catch (const CalibrationError& e) {
            failures.push_back("sensor " + std::to_string(s) + ": " + e.what());
        }
        profile.intrinsics.push_back(intr);
        try {
            profile.mounts.push_back(sts_static_npose(win, expected[s]));
        } catch (const CalibrationError& e) {
            failures.push_back("sensor " + std::to_string(s) + ": " + e.what());
            profile.mounts.push_back(expected[s]);
        }
    }
    if (!failures.empty()) {
        std::ostringstream msg;
        msg << "calibration failed for " << failures.size() << " sensor(s):";
        for (const std::string& f : failures) msg << "\n  " << f;
        throw CalibrationError(msg.str());
    }
    write_calibration_profile(out, profile);
    std::cout << "calibrate: profile for " << trial.n_sensors << " sensors -> " << out << "\n";

    if (!apply_out.empty()) {
        Trial calibrated = apply_intrinsics(trial, profile.intrinsics);
        calibrated = apply_sts(calibrated, StsTransform{profile.mounts});
        write_trial(apply_out, calibrated);
        std::cout << "calibrate: calibrated trial -> " << apply_out << "\n";
    }
    return kExitOk;
}

FilterConfig make_filter_config(const std::string& config_path, const std::vector<std::string>& sets,
                                const std::string& filter, const std::string& mag, double beta,
                                double kp, double ki, const std::string& band) {
    FilterConfig cfg;
    if (!config_path.empty()) cfg = read_filter_config(patched_config(config_path, sets));
    if (!filter.empty()) cfg.kind = filter_kind_from_string(filter);
    if (!mag.empty()) cfg.use_mag = mag == "on";
    if (beta >= 0) cfg.beta = beta;
    if (kp >= 0) cfg.kp = kp;
    if (ki >= 0) cfg.ki = ki;
    if (!band.empty()) {
        auto parts = split(band, ':');
        if (parts.size() != 2) throw ParseError("--band expects lo:hi");
        cfg.band_min = std::stod(parts[0]);
        cfg.band_max = std::stod(parts[1]);
    }
    cfg.validate();
    return cfg;
}

int cmd_fuse(const std::string& in, const std::string& out, const FilterConfig& cfg,
             const std::string& model_path, const std::string& profile, bool run_preprocess,
             bool serial, std::int64_t seed) {
    Trial trial = load_trial_for_fusion(in, profile, run_preprocess);
    Trajectory traj;
    if (!model_path.empty()) {
        nn::RecurrentModel model = nn::load_checkpoint(model_path);
        nn::NnOutput res = nn_forward(model, trial);
        if (res.diverged)
            throw DivergenceError("fuse: model rollout diverged at sample " +
                                  std::to_string(res.diverged_at));
        traj = std::move(res.traj);
    } else {
        FuseResult res = serial ? fuse_body_serial(trial, cfg) : fuse_body(trial, cfg);
        if (!res.gaps.empty())
            std::cerr << "fuse: held previous orientation through " << res.gaps.size()
                      << " missing samples\n";
        if (res.triad_fallbacks > 0)
            std::cerr << "fuse: " << res.triad_fallbacks
                      << " segment(s) fell back to identity init (degenerate TRIAD)\n";
        traj = std::move(res.traj);
    }
    write_trajectory(out, traj, seed >= 0 ? std::optional<std::uint64_t>(seed) : std::nullopt);
    std::cout << "fuse: " << traj.n_samples() << " samples x " << traj.n_segments << " segments -> "
              << out << "\n";
    return kExitOk;
}

int cmd_train(const std::string& data, const std::string& out, const std::string& report_path,
              const std::string& arch, const std::string& cell, const std::string& repr,
              const std::string& loss, const std::string& window, int epochs, int batch,
              const std::string& hidden, const std::string& mag, bool no_augment, double alpha,
              const FilterConfig& cff_filter, std::int64_t seed, std::int64_t split_seed) {
    std::vector<Trial> trials = load_dataset(data);
    if (trials.empty()) throw ContractError("train: dataset is empty");
    std::vector<Trial> prepped;
    for (Trial& t : trials) prepped.push_back(preprocess(t));

    std::vector<Trial> train_set, val_set;
    std::set<std::string> subjects;
    for (const Trial& t : prepped) subjects.insert(t.subject);
    if (subjects.size() >= 3) {
        DatasetSplit split = split_by_subject(prepped, 0.7, 0.2, 0.1,
                                              static_cast<std::uint64_t>(std::max<std::int64_t>(0, split_seed)));
        for (int i : split.train) train_set.push_back(prepped[i]);
        for (int i : split.val) val_set.push_back(prepped[i]);
    } else {
        std::cerr << "train: fewer than 3 subjects; training on all trials, validating on all\n";
        train_set = prepped;
        val_set = prepped;
    }
    if (train_set.empty()) throw ContractError("train: training split is empty");

    nn::TrainConfig cfg;
    cfg.loss = nn::loss_kind_from_string(loss);
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.window = window == "full" ? 0 : std::stoi(window);
    cfg.augment = !no_augment;
    cfg.seed = static_cast<std::uint64_t>(std::max<std::int64_t>(0, seed));

    nn::RecurrentModel model = nn::make_model(
        nn::arch_kind_from_string(arch), nn::cell_kind_from_string(cell),
        nn::output_repr_from_string(repr), train_set[0].n_sensors, train_set[0].n_sensors,
        parse_hidden(hidden), cfg.seed, mag != "off", 0.20, cff_filter);
    if (alpha >= 0) model.alpha = alpha;

    nn::TrainReport report = nn::train(model, train_set, val_set, cfg);
    nn::save_checkpoint(out, model);
    if (!report_path.empty()) nn::write_train_report_csv(report_path, report);

    if (report.diverged) {
        std::cerr << "train: diverged: " << report.note << "\n";
        return kExitDivergence;
    }
    if (report.halted_non_finite) std::cerr << "train: " << report.note << "\n";
    std::cout << "train: best epoch " << report.best_epoch << " (val loss "
              << fmt_double(report.best_val_loss) << ") -> " << out << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& report,
             const std::string& boxplot_csv, const std::string& timeplot_csv,
             const std::string& boxplot_svg, const std::string& timeplot_svg, bool serial,
             std::int64_t seed) {
    Trajectory p = parse_trajectory(pred);
    Trajectory g = parse_trajectory(gt);
    EvalReport r = serial ? evaluate_serial(p, g) : evaluate(p, g);
    if (!report.empty())
        write_eval_report_json(report, r, seed >= 0 ? static_cast<std::uint64_t>(seed) : 0);
    if (!boxplot_csv.empty()) write_boxplot_csv(boxplot_csv, r);
    if (!timeplot_csv.empty()) write_timeplot_csv(timeplot_csv, r);
    if (!boxplot_svg.empty()) write_boxplot_svg(boxplot_svg, r);
    if (!timeplot_svg.empty()) write_timeplot_svg(timeplot_svg, r);
    std::printf("eval: mean QAD %.4f deg (std %.4f), per-segment-then-mean %.4f deg\n", r.mean_deg,
                r.std_deg, r.mean_time_then_segment_deg);
    return kExitOk;
}

int cmd_stats(const std::string& data, const std::string& out) {
    std::vector<Trial> trials = load_dataset(data);
    DescriptiveStats s = descriptive_stats(trials);
    json j;
    j["n_samples"] = s.n_samples;
    auto dump = [](const ModalityStats& m) {
        return json{{"mean", m.mean},     {"std", m.stddev},       {"min", m.min},
                    {"max", m.max},       {"kurtosis", m.kurtosis}, {"skewness", m.skewness},
                    {"degenerate", m.degenerate}};
    };
    j["accel"] = dump(s.accel);
    j["gyro"] = dump(s.gyro);
    j["mag"] = dump(s.mag);
    if (!out.empty()) atomic_write(out, j.dump(2) + "\n");
    std::printf("%-6s %10s %10s %10s %10s %10s %10s\n", "sensor", "mean", "std", "min", "max",
                "kurt", "skew");
    auto row = [](const char* name, const ModalityStats& m) {
        std::printf("%-6s %10.3f %10.3f %10.3f %10.3f %10.3f %10.3f\n", name, m.mean, m.stddev,
                    m.min, m.max, m.kurtosis, m.skewness);
    };
    row("acc", s.accel);
    row("gyr", s.gyro);
    row("mag", s.mag);
    return kExitOk;
}

int cmd_bench(const std::string& in, const std::string& methods, const std::string& model_path,
              int warmup, int iters, const std::string& out) {
    Trial trial = parse_trial(in);
    std::ostringstream csv;
    csv << "method,mean_ms,std_ms,samples\n";
    for (const std::string& method : split(methods, ',')) {
        LatencyStats stats;
        if (method == "model") {
            if (model_path.empty()) throw ContractError("bench: method 'model' requires --model");
            nn::RecurrentModel model = nn::load_checkpoint(model_path);
            nn::NnRunner runner(model, trial);
            SampleProcessor proc;
            proc.reset = [&]() { runner.reset(); };
            proc.step = [&](int t) { runner.step(t); };
            stats = bench_latency(proc, trial.n_samples(), warmup, iters);
        } else {
            FilterConfig cfg;
            std::string name = method;
            if (name.size() > 6 && name.substr(name.size() - 6) == "_nomag") {
                cfg.use_mag = false;
                name = name.substr(0, name.size() - 6);
            }
            cfg.kind = filter_kind_from_string(name);
            std::vector<FilterState> bank(trial.n_sensors);
            SampleProcessor proc;
            proc.reset = [&]() {
                for (int s = 0; s < trial.n_sensors; ++s)
                    bank[s] = init_state(trial.reading(0, s), cfg);
            };
            proc.step = [&](int t) {
                for (int s = 0; s < trial.n_sensors; ++s)
                    step_filter(bank[s], trial.reading(t, s), cfg);
            };
            stats = bench_latency(proc, trial.n_samples(), warmup, iters);
        }
        csv << method << ',' << fmt_double(stats.mean_ms) << ',' << fmt_double(stats.std_ms) << ','
            << stats.n << "\n";
        std::printf("bench: %-22s %.5f +/- %.5f ms/sample (n=%lld)\n", method.c_str(),
                    stats.mean_ms, stats.std_ms, static_cast<long long>(stats.n));
    }
    if (!out.empty()) atomic_write(out, csv.str());
    return kExitOk;
}

int cmd_pose(const std::string& traj_path, const std::string& skeleton, double height,
             const std::string& out, const std::string& svg, const std::string& joints_out) {
    Trajectory traj = parse_trajectory(traj_path);
    SkeletonModel skel = load_skeleton(skeleton, height);
    if (skel.n_segments() != traj.n_segments)
        throw ContractError("pose: trajectory has " + std::to_string(traj.n_segments) +
                            " segments, skeleton has " + std::to_string(skel.n_segments()));
    std::vector<PoseFrame> frames;
    frames.reserve(traj.n_samples());
    std::vector<Quat> qs(skel.n_segments());
    for (int ti = 0; ti < traj.n_samples(); ++ti) {
        for (int s = 0; s < skel.n_segments(); ++s) qs[s] = traj.at(ti, s);
        frames.push_back(forward_kinematics(skel, qs, traj.t[ti]));
    }
    write_pose_csv(out, skel, frames);
    if (!svg.empty()) write_pose_svg(svg, skel, frames);
    if (!joints_out.empty()) {
        std::ostringstream js;
        js << "# ipose-trajectory v1\n# segments=" << skel.n_segments() << "\n";
        js << "t,segment,qw,qx,qy,qz\n";
        for (int ti = 0; ti < traj.n_samples(); ++ti) {
            for (int s = 0; s < skel.n_segments(); ++s) qs[s] = traj.at(ti, s);
            std::vector<Quat> joints = joint_angles(skel, qs);
            for (int s = 0; s < skel.n_segments(); ++s)
                js << fmt_double(traj.t[ti]) << ',' << s << ',' << fmt_double(joints[s].w) << ','
                   << fmt_double(joints[s].x) << ',' << fmt_double(joints[s].y) << ','
                   << fmt_double(joints[s].z) << "\n";
        }
        atomic_write(joints_out, js.str());
    }
    std::cout << "pose: " << frames.size() << " frames -> " << out << "\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    std::vector<std::string> storage = args;
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>("ipose"));
    for (std::string& s : storage) argv.push_back(s.data());
    return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, char** argv) {
    CLI::App app{"whole-body inertial orientation estimation toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic trial with known ground truth");
    std::string synth_config, synth_out;
    std::int64_t synth_seed = -1;
    std::vector<std::string> synth_sets;
    synth->add_option("--config", synth_config, "synthesis config JSON")->required();
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "seed override");
    synth->add_option("--set", synth_sets, "config override key=value");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "estimate sensor intrinsics and mounts from static data");
    std::string cal_in, cal_out, cal_mounts, cal_apply;
    double cal_window = 5.0;
    cal->add_option("--in", cal_in, "input trial CSV")->required();
    cal->add_option("--profile", cal_out, "output calibration profile JSON")->required();
    cal->add_option("--mounts", cal_mounts, "expected mount orientations JSON");
    cal->add_option("--window-seconds", cal_window, "static window length (default 5 s)");
    cal->add_option("--apply", cal_apply, "also write the calibrated trial CSV here");

    // fuse
    auto* fuse = app.add_subcommand("fuse", "run whole-body sensor fusion over a trial");
    std::string fuse_in, fuse_out, fuse_filter, fuse_mag, fuse_band, fuse_cfg, fuse_model, fuse_profile;
    std::vector<std::string> fuse_sets;
    double fuse_beta = -1, fuse_kp = -1, fuse_ki = -1;
    bool fuse_serial = false, fuse_prep = false;
    std::int64_t fuse_seed = -1;
    fuse->add_option("--in", fuse_in, "input trial CSV")->required();
    fuse->add_option("--out", fuse_out, "output trajectory CSV")->required();
    fuse->add_option("--filter", fuse_filter, "integral|mahony|madgwick|madgwick_magreject|ekf");
    fuse->add_option("--mag", fuse_mag, "on|off")->check(CLI::IsMember({"on", "off"}));
    fuse->add_option("--beta", fuse_beta, "madgwick gain");
    fuse->add_option("--kp", fuse_kp, "mahony proportional gain");
    fuse->add_option("--ki", fuse_ki, "mahony integral gain");
    fuse->add_option("--band", fuse_band, "mag rejection band lo:hi");
    fuse->add_option("--config", fuse_cfg, "filter config JSON");
    fuse->add_option("--set", fuse_sets, "config override key=value");
    fuse->add_option("--model", fuse_model, "learned fusion checkpoint (overrides --filter)");
    fuse->add_option("--profile", fuse_profile, "calibration profile to apply first");
    fuse->add_flag("--preprocess", fuse_prep, "preprocess the trial before fusing");
    fuse->add_flag("--serial", fuse_serial, "force the serial reference path");
    fuse->add_option("--seed", fuse_seed, "seed recorded in the output");

    // train
    auto* train = app.add_subcommand("train", "train a learned fusion model");
    std::string tr_data, tr_out, tr_report, tr_arch = "cff_detached", tr_cell = "lstm";
    std::string tr_repr = "quaternion", tr_loss = "qad", tr_window = "full", tr_hidden = "64,64";
    std::string tr_mag = "on", tr_filter;
    std::vector<std::string> tr_sets;
    int tr_epochs = 25, tr_batch = 64;
    double tr_alpha = -1;
    bool tr_noaug = false;
    std::int64_t tr_seed = 0, tr_split_seed = 0;
    train->add_option("--data", tr_data, "dataset manifest JSON")->required();
    train->add_option("--out", tr_out, "output model checkpoint")->required();
    train->add_option("--report", tr_report, "training report CSV");
    train->add_option("--arch", tr_arch, "model_free|complementary|cff_detached|cff_feedback");
    train->add_option("--cell", tr_cell, "rnn|gru|lstm");
    train->add_option("--repr", tr_repr, "euler|quaternion|repr6d");
    train->add_option("--loss", tr_loss, "qad|mse|qdist|relqad");
    train->add_option("--window", tr_window, "BPTT window length or 'full'");
    train->add_option("--epochs", tr_epochs, "training epochs");
    train->add_option("--batch", tr_batch, "batch size");
    train->add_option("--hidden", tr_hidden, "hidden sizes, comma separated");
    train->add_option("--mag", tr_mag, "on|off")->check(CLI::IsMember({"on", "off"}));
    train->add_flag("--no-augment", tr_noaug, "disable data augmentation");
    train->add_option("--alpha", tr_alpha, "complementary blend weight");
    train->add_option("--filter-config", tr_filter, "cff filter config JSON");
    train->add_option("--set", tr_sets, "filter config override key=value");
    train->add_option("--seed", tr_seed, "training seed");
    train->add_option("--split-seed", tr_split_seed, "subject split seed");

    // eval
    auto* ev = app.add_subcommand("eval", "compare a predicted trajectory against ground truth");
    std::string ev_pred, ev_gt, ev_report, ev_bcsv, ev_tcsv, ev_bsvg, ev_tsvg;
    bool ev_serial = false;
    std::int64_t ev_seed = -1;
    ev->add_option("--pred", ev_pred, "predicted trajectory CSV")->required();
    ev->add_option("--gt", ev_gt, "ground-truth trajectory CSV")->required();
    ev->add_option("--report", ev_report, "output report JSON");
    ev->add_option("--boxplot-csv", ev_bcsv, "per-segment boxplot CSV");
    ev->add_option("--timeplot-csv", ev_tcsv, "QAD time series CSV");
    ev->add_option("--boxplot-svg", ev_bsvg, "boxplot SVG");
    ev->add_option("--timeplot-svg", ev_tsvg, "timeplot SVG");
    ev->add_flag("--serial", ev_serial, "force the serial reference path");
    ev->add_option("--seed", ev_seed, "seed recorded in the report");

    // stats
    auto* st = app.add_subcommand("stats", "descriptive statistics of a dataset");
    std::string st_data, st_out;
    st->add_option("--data", st_data, "dataset manifest JSON")->required();
    st->add_option("--out", st_out, "output JSON");

    // bench
    auto* be = app.add_subcommand("bench", "per-sample latency of fusion methods");
    std::string be_in, be_methods = "integral,madgwick_nomag,madgwick,ekf", be_model, be_out;
    int be_warmup = 3, be_iters = 100;
    be->add_option("--in", be_in, "input trial CSV")->required();
    be->add_option("--methods", be_methods, "comma list; use 'model' with --model");
    be->add_option("--model", be_model, "learned fusion checkpoint");
    be->add_option("--warmup", be_warmup, "warmup passes");
    be->add_option("--iters", be_iters, "measured passes (>= 100)");
    be->add_option("--out", be_out, "output CSV");

    // pose
    auto* po = app.add_subcommand("pose", "forward kinematics from an orientation trajectory");
    std::string po_traj, po_skel = "9", po_out, po_svg, po_joints;
    double po_height = 1.71;
    po->add_option("--traj", po_traj, "orientation trajectory CSV")->required();
    po->add_option("--skeleton", po_skel, "9|17|skeleton JSON path");
    po->add_option("--height", po_height, "subject height in meters");
    po->add_option("--out", po_out, "output pose CSV")->required();
    po->add_option("--svg", po_svg, "output SVG rendering");
    po->add_option("--joints", po_joints, "output joint-angle trajectory CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(synth_config, synth_out, synth_seed, synth_sets);
        if (*cal) return cmd_calibrate(cal_in, cal_out, cal_mounts, cal_window, cal_apply);
        if (*fuse) {
            FilterConfig cfg = make_filter_config(fuse_cfg, fuse_sets, fuse_filter, fuse_mag,
                                                  fuse_beta, fuse_kp, fuse_ki, fuse_band);
            return cmd_fuse(fuse_in, fuse_out, cfg, fuse_model, fuse_profile, fuse_prep,
                            fuse_serial, fuse_seed);
        }
        if (*train) {
            FilterConfig cff = make_filter_config(tr_filter, tr_sets, "", "", -1, -1, -1, "");
            return cmd_train(tr_data, tr_out, tr_report, tr_arch, tr_cell, tr_repr, tr_loss,
                             tr_window, tr_epochs, tr_batch, tr_hidden, tr_mag, tr_noaug, tr_alpha,
                             cff, tr_seed, tr_split_seed);
        }
        if (*ev)
            return cmd_eval(ev_pred, ev_gt, ev_report, ev_bcsv, ev_tcsv, ev_bsvg, ev_tsvg,
                            ev_serial, ev_seed);
        if (*st) return cmd_stats(st_data, st_out);
        if (*be) return cmd_bench(be_in, be_methods, be_model, be_warmup, be_iters, be_out);
        if (*po) return cmd_pose(po_traj, po_skel, po_height, po_out, po_svg, po_joints);
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitContract;
    } catch (const CalibrationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCalibration;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}

}  // namespace ipose::cli
