#include "ipose/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ipose/errors.hpp"
#include "ipose/io.hpp"

namespace ipose {

using nlohmann::json;

std::string to_string(TrialKind k) {
    switch (k) {
        case TrialKind::calibration: return "calibration";
        case TrialKind::validation: return "validation";
        case TrialKind::task: return "task";
        case TrialKind::circuit: return "circuit";
        case TrialKind::sequence: return "sequence";
        case TrialKind::random_moves: return "random";
    }
    return "task";
}

TrialKind trial_kind_from_string(const std::string& s) {
    if (s == "calibration") return TrialKind::calibration;
    if (s == "validation") return TrialKind::validation;
    if (s == "task") return TrialKind::task;
    if (s == "circuit") return TrialKind::circuit;
    if (s == "sequence") return TrialKind::sequence;
    if (s == "random") return TrialKind::random_moves;
    throw ParseError("unknown trial kind: " + s);
}

MargSample Trial::sample(int ti) const {
    MargSample s;
    s.t = t[ti];
    s.sensors.assign(data.begin() + static_cast<std::ptrdiff_t>(ti) * n_sensors,
                     data.begin() + static_cast<std::ptrdiff_t>(ti + 1) * n_sensors);
    return s;
}

void Trial::validate() const {
    if (n_sensors <= 0) throw ContractError("trial: n_sensors must be positive");
    if (data.size() != t.size() * static_cast<std::size_t>(n_sensors))
        throw ContractError("trial: data size does not match sample count");
    if (!truth.empty() && truth.size() != data.size())
        throw ContractError("trial: ground-truth length does not match sample count");
}

// ---- trial CSV -----------------------------------------------------------------

namespace {

double parse_field(const std::string& f, int line_no) {
    if (f.empty()) return std::nan("");
    const char* begin = f.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) throw ParseError("line " + std::to_string(line_no) + ": bad number '" + f + "'");
    return v;
}

struct HeaderInfo {
    std::map<std::string, std::string> meta;
    int first_data_line = 0;
};

HeaderInfo parse_header(const std::vector<std::string>& lines, const std::string& magic,
                        const std::string& path) {
    if (lines.empty() || lines[0].rfind("# " + magic + " v", 0) != 0)
        throw ParseError(path + ": missing '" + magic + "' header");
    int version = std::atoi(lines[0].c_str() + magic.size() + 4);
    if (version != kSchemaVersion)
        throw ParseError(path + ": unsupported schema version " + std::to_string(version));
    HeaderInfo info;
    std::size_t i = 1;
    for (; i < lines.size(); ++i) {
        const std::string& l = lines[i];
        if (l.rfind("# ", 0) != 0) break;
        auto eq = l.find('=');
        if (eq != std::string::npos) info.meta[l.substr(2, eq - 2)] = l.substr(eq + 1);
    }
    info.first_data_line = static_cast<int>(i);
    return info;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::string content = read_file(path);
    std::vector<std::string> lines;
    std::string cur;
    for (char c : content) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

}  // namespace

Trial parse_trial(const std::string& path) {
    auto lines = read_lines(path);
    auto hdr = parse_header(lines, kTrialMagic, path);

    Trial trial;
    auto meta = [&](const char* key) -> std::string {
        auto it = hdr.meta.find(key);
        return it == hdr.meta.end() ? std::string() : it->second;
    };
    if (auto s = meta("subject"); !s.empty()) trial.subject = s;
    if (auto s = meta("kind"); !s.empty()) trial.kind = trial_kind_from_string(s);
    if (auto s = meta("rate_hz"); !s.empty()) trial.rate_hz = std::atof(s.c_str());
    if (auto s = meta("accel_units"); !s.empty()) trial.accel_units = s;
    if (auto s = meta("preprocessed"); !s.empty()) trial.preprocessed = s == "1";
    std::string sensors = meta("sensors");
    if (sensors.empty()) throw ParseError(path + ": missing 'sensors' metadata");
    trial.n_sensors = std::atoi(sensors.c_str());
    if (trial.n_sensors <= 0) throw ParseError(path + ": bad sensor count");

    int row = hdr.first_data_line;
    if (row >= static_cast<int>(lines.size())) throw ParseError(path + ": no column header");
    ++row;  // skip the column-name row

    const int n_fields = 1 + 9 * trial.n_sensors;
    for (; row < static_cast<int>(lines.size()); ++row) {
        const std::string& l = lines[row];
        if (l.empty()) continue;
        auto fields = split(l, ',');
        if (static_cast<int>(fields.size()) != n_fields)
            throw ParseError(path + ": line " + std::to_string(row + 1) + ": expected " +
                             std::to_string(n_fields) + " fields, got " +
                             std::to_string(fields.size()));
        trial.t.push_back(parse_field(fields[0], row + 1));
        for (int s = 0; s < trial.n_sensors; ++s) {
            const int base = 1 + 9 * s;
            MargReading r;
            r.accel = {parse_field(fields[base + 0], row + 1), parse_field(fields[base + 1], row + 1),
                       parse_field(fields[base + 2], row + 1)};
            r.gyro = {parse_field(fields[base + 3], row + 1), parse_field(fields[base + 4], row + 1),
                      parse_field(fields[base + 5], row + 1)};
            r.mag = {parse_field(fields[base + 6], row + 1), parse_field(fields[base + 7], row + 1),
                     parse_field(fields[base + 8], row + 1)};
            trial.data.push_back(r);
        }
    }
    if (trial.t.empty()) throw ParseError(path + ": no data rows");

    // A truth file next to the trial is picked up automatically.
    std::filesystem::path truth_path = std::filesystem::path(path);
    truth_path.replace_extension(".truth.csv");
    if (std::filesystem::exists(truth_path)) {
        Trajectory gt = parse_trajectory(truth_path.string());
        if (gt.n_samples() == trial.n_samples() && gt.n_segments == trial.n_sensors)
            trial.truth = gt.q;
    }
    trial.validate();
    return trial;
}

void write_trial(const std::string& path, const Trial& trial, std::optional<std::uint64_t> seed) {
    trial.validate();
    std::ostringstream out;
    out << "# " << kTrialMagic << " v" << kSchemaVersion << "\n";
    out << "# subject=" << trial.subject << "\n";
    out << "# kind=" << to_string(trial.kind) << "\n";
    out << "# sensors=" << trial.n_sensors << "\n";
    out << "# rate_hz=" << fmt_double(trial.rate_hz) << "\n";
    out << "# accel_units=" << trial.accel_units << "\n";
    out << "# preprocessed=" << (trial.preprocessed ? 1 : 0) << "\n";
    if (seed) out << "# seed=" << *seed << "\n";
    out << "t";
    for (int s = 0; s < trial.n_sensors; ++s) {
        char buf[40];
        const char* names[] = {"ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"};
        for (const char* n : names) {
            std::snprintf(buf, sizeof(buf), ",s%02d_%s", s, n);
            out << buf;
        }
    }
    out << "\n";
    for (int ti = 0; ti < trial.n_samples(); ++ti) {
        out << fmt_double(trial.t[ti]);
        for (int s = 0; s < trial.n_sensors; ++s) {
            const MargReading& r = trial.reading(ti, s);
            for (double v : {r.accel.x, r.accel.y, r.accel.z, r.gyro.x, r.gyro.y, r.gyro.z,
                             r.mag.x, r.mag.y, r.mag.z})
                out << ',' << fmt_double(v);
        }
        out << "\n";
    }
    atomic_write(path, out.str());
}

// ---- trajectory CSV ----------------------------------------------------------------

Trajectory parse_trajectory(const std::string& path) {
    auto lines = read_lines(path);
    auto hdr = parse_header(lines, kTrajectoryMagic, path);
    int n_segments = 0;
    if (auto it = hdr.meta.find("segments"); it != hdr.meta.end())
        n_segments = std::atoi(it->second.c_str());
    if (n_segments <= 0) throw ParseError(path + ": missing 'segments' metadata");

    Trajectory traj;
    traj.n_segments = n_segments;
    int row = hdr.first_data_line + 1;  // skip column names
    int expect_seg = 0;
    for (; row < static_cast<int>(lines.size()); ++row) {
        const std::string& l = lines[row];
        if (l.empty()) continue;
        auto fields = split(l, ',');
        if (fields.size() != 6)
            throw ParseError(path + ": line " + std::to_string(row + 1) + ": expected 6 fields");
        double t = parse_field(fields[0], row + 1);
        int seg = std::atoi(fields[1].c_str());
        if (seg != expect_seg)
            throw ParseError(path + ": line " + std::to_string(row + 1) + ": segment out of order");
        if (seg == 0) traj.t.push_back(t);
        traj.q.push_back({parse_field(fields[2], row + 1), parse_field(fields[3], row + 1),
                          parse_field(fields[4], row + 1), parse_field(fields[5], row + 1)});
        expect_seg = (expect_seg + 1) % n_segments;
    }
    if (expect_seg != 0) throw ParseError(path + ": truncated trajectory");
    if (traj.t.empty()) throw ParseError(path + ": no data rows");
    return traj;
}

void write_trajectory(const std::string& path, const Trajectory& traj,
                      std::optional<std::uint64_t> seed) {
    std::ostringstream out;
    out << "# " << kTrajectoryMagic << " v" << kSchemaVersion << "\n";
    out << "# segments=" << traj.n_segments << "\n";
    if (seed) out << "# seed=" << *seed << "\n";
    out << "t,segment,qw,qx,qy,qz\n";
    for (int ti = 0; ti < traj.n_samples(); ++ti) {
        for (int s = 0; s < traj.n_segments; ++s) {
            const Quat& q = traj.at(ti, s);
            out << fmt_double(traj.t[ti]) << ',' << s << ',' << fmt_double(q.w) << ','
                << fmt_double(q.x) << ',' << fmt_double(q.y) << ',' << fmt_double(q.z) << "\n";
        }
    }
    atomic_write(path, out.str());
}

// ---- preprocessing ------------------------------------------------------------------

namespace {

// Per-sensor, per-channel linear fill of non-finite runs. Returns the longest
// run length.
int interpolate_gaps(Trial& trial) {
    const int T = trial.n_samples();
    int longest = 0;
    for (int s = 0; s < trial.n_sensors; ++s) {
        std::vector<int> bad;
        for (int ti = 0; ti < T; ++ti)
            if (!is_finite(trial.reading(ti, s))) bad.push_back(ti);
        if (bad.empty()) continue;

        for (std::size_t k = 0; k < bad.size();) {
            std::size_t e = k;
            while (e + 1 < bad.size() && bad[e + 1] == bad[e] + 1) ++e;
            int run_begin = bad[k], run_end = bad[e];  // inclusive
            longest = std::max(longest, run_end - run_begin + 1);
            int lo = run_begin - 1, hi = run_end + 1;
            for (int ti = run_begin; ti <= run_end; ++ti) {
                MargReading& r = trial.reading(ti, s);
                if (lo >= 0 && hi < T) {
                    double a = static_cast<double>(ti - lo) / (hi - lo);
                    const MargReading& rl = trial.reading(lo, s);
                    const MargReading& rh = trial.reading(hi, s);
                    r.accel = rl.accel * (1 - a) + rh.accel * a;
                    r.gyro = rl.gyro * (1 - a) + rh.gyro * a;
                    r.mag = rl.mag * (1 - a) + rh.mag * a;
                } else {
                    int src = lo >= 0 ? lo : hi;
                    if (src < 0 || src >= T) throw DomainError("trial rejected: sensor entirely missing");
                    r = trial.reading(src, s);
                }
            }
        }
    }
    // Ground-truth gaps are slerped independently of the sensor channels.
    if (trial.has_truth()) {
        for (int s = 0; s < trial.n_sensors; ++s) {
            for (int ti = 0; ti < T; ++ti) {
                if (is_finite(trial.truth_at(ti, s))) continue;
                int lo = ti - 1;
                int hi = ti + 1;
                while (hi < T && !is_finite(trial.truth_at(hi, s))) ++hi;
                longest = std::max(longest, hi - ti);
                for (int k = ti; k < hi; ++k) {
                    if (lo >= 0 && hi < T) {
                        double a = static_cast<double>(k - lo) / (hi - lo);
                        trial.truth_at(k, s) = slerp(trial.truth_at(lo, s), trial.truth_at(hi, s), a);
                    } else {
                        int src = lo >= 0 ? lo : hi;
                        if (src < 0 || src >= T)
                            throw DomainError("trial rejected: ground truth entirely missing");
                        trial.truth_at(k, s) = trial.truth_at(src, s);
                    }
                }
                ti = hi;
            }
        }
    }
    return longest;
}

Trial resample(const Trial& in, double target_rate) {
    const int T = in.n_samples();
    Trial out = in;
    out.rate_hz = target_rate;
    out.t.clear();
    out.data.clear();
    out.truth.clear();
    const double dt = 1.0 / target_rate;
    const double t0 = in.t.front(), t1 = in.t.back();
    int src = 0;
    for (double t = t0; t <= t1 + 1e-9; t += dt) {
        while (src + 1 < T && in.t[src + 1] <= t) ++src;
        int hi = std::min(src + 1, T - 1);
        double span = in.t[hi] - in.t[src];
        double a = span > 0 ? std::clamp((t - in.t[src]) / span, 0.0, 1.0) : 0.0;
        out.t.push_back(t - t0);
        for (int s = 0; s < in.n_sensors; ++s) {
            const MargReading& rl = in.reading(src, s);
            const MargReading& rh = in.reading(hi, s);
            MargReading r;
            r.accel = rl.accel * (1 - a) + rh.accel * a;
            r.gyro = rl.gyro * (1 - a) + rh.gyro * a;
            r.mag = rl.mag * (1 - a) + rh.mag * a;
            out.data.push_back(r);
            if (in.has_truth()) out.truth.push_back(slerp(in.truth_at(src, s), in.truth_at(hi, s), a));
        }
    }
    return out;
}

}  // namespace

Trial preprocess(const Trial& in, const PreprocessConfig& cfg) {
    in.validate();
    if (in.preprocessed) return in;  // idempotent
    if (in.n_samples() < 2) throw DomainError("trial rejected: too few samples");
    for (int ti = 1; ti < in.n_samples(); ++ti)
        if (!(in.t[ti] > in.t[ti - 1]))
            throw DomainError("trial rejected: non-monotonic timestamps at row " + std::to_string(ti));

    Trial trial = in;

    // i) interpolate missing/corrupt samples, iii) reject long gaps
    int longest_gap = interpolate_gaps(trial);
    if (longest_gap / trial.rate_hz > cfg.max_gap_seconds)
        throw DomainError("trial rejected: data gap of " +
                          std::to_string(longest_gap / trial.rate_hz) + " s exceeds " +
                          std::to_string(cfg.max_gap_seconds) + " s");

    // ii) resample to the target rate
    trial = resample(trial, cfg.target_rate_hz);

    // iv) remove the initial static seconds
    int skip = static_cast<int>(cfg.trim_initial_seconds * cfg.target_rate_hz);
    if (skip > 0 && skip < trial.n_samples()) {
        trial.t.erase(trial.t.begin(), trial.t.begin() + skip);
        trial.data.erase(trial.data.begin(),
                         trial.data.begin() + static_cast<std::ptrdiff_t>(skip) * trial.n_sensors);
        if (trial.has_truth())
            trial.truth.erase(trial.truth.begin(),
                              trial.truth.begin() + static_cast<std::ptrdiff_t>(skip) * trial.n_sensors);
        double t0 = trial.t.front();
        for (double& t : trial.t) t -= t0;
    } else if (skip >= trial.n_samples()) {
        throw DomainError("trial rejected: shorter than the trimmed calibration window");
    }

    // vi) unit normalization
    if (cfg.convert_accel_to_g && trial.accel_units == "mps2") {
        constexpr double g0 = 9.80665;
        for (MargReading& r : trial.data) r.accel = r.accel * (1.0 / g0);
        trial.accel_units = "g";
    }
    if (cfg.normalize_mag) {
        for (int s = 0; s < trial.n_sensors; ++s) {
            double acc = 0;
            for (int ti = 0; ti < trial.n_samples(); ++ti) acc += norm(trial.reading(ti, s).mag);
            double mean_mag = acc / trial.n_samples();
            if (mean_mag > 1e-12) {
                for (int ti = 0; ti < trial.n_samples(); ++ti) {
                    MargReading& r = trial.reading(ti, s);
                    r.mag = r.mag * (1.0 / mean_mag);
                }
            }
        }
    }
    for (MargReading& r : trial.data) r.gyro = saturate_angular_velocity(r.gyro);

    if (trial.has_truth()) {
        for (std::size_t i = 0; i < trial.truth.size(); ++i) trial.truth[i] = normalized(trial.truth[i]);
        // hemisphere continuity along time per segment
        for (int s = 0; s < trial.n_sensors; ++s)
            for (int ti = 1; ti < trial.n_samples(); ++ti)
                if (quat_dot(trial.truth_at(ti - 1, s), trial.truth_at(ti, s)) < 0) {
                    Quat& q = trial.truth_at(ti, s);
                    q = {-q.w, -q.x, -q.y, -q.z};
                }
    }

    trial.preprocessed = true;
    return trial;
}

// ---- descriptive statistics -----------------------------------------------------------

namespace {

struct MomentAcc {
    std::int64_t n = 0;
    double mean = 0, m2 = 0, m3 = 0, m4 = 0;
    double mn = std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();

    void add(double x) {
        // one-pass central moment update
        std::int64_t n1 = n;
        n += 1;
        double delta = x - mean;
        double dn = delta / n;
        double dn2 = dn * dn;
        double term1 = delta * dn * n1;
        mean += dn;
        m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * m2 - 4.0 * dn * m3;
        m3 += term1 * dn * (n - 2.0) - 3.0 * dn * m2;
        m2 += term1;
        mn = std::min(mn, x);
        mx = std::max(mx, x);
    }

    ModalityStats finish() const {
        ModalityStats s;
        if (n == 0) return s;
        s.mean = mean;
        s.min = mn;
        s.max = mx;
        double var = m2 / n;
        s.stddev = std::sqrt(var);
        if (m2 <= 0) {
            s.degenerate = true;  // constant stream: kurtosis/skewness undefined
            return s;
        }
        s.kurtosis = (static_cast<double>(n) * m4) / (m2 * m2) - 3.0;
        s.skewness = std::sqrt(static_cast<double>(n)) * m3 / std::pow(m2, 1.5);
        return s;
    }
};

}  // namespace

ModalityStats stream_stats(const std::vector<double>& values) {
    MomentAcc acc;
    for (double v : values) acc.add(v);
    return acc.finish();
}

DescriptiveStats descriptive_stats(const std::vector<Trial>& trials) {
    if (trials.empty()) throw ContractError("descriptive_stats: empty dataset");
    MomentAcc accel, gyro, mag;
    DescriptiveStats out;
    for (const Trial& trial : trials) {
        for (const MargReading& r : trial.data) {
            for (double v : {r.accel.x, r.accel.y, r.accel.z}) accel.add(v);
            for (double v : {r.gyro.x, r.gyro.y, r.gyro.z}) gyro.add(v);
            for (double v : {r.mag.x, r.mag.y, r.mag.z}) mag.add(v);
        }
        out.n_samples += trial.n_samples();
    }
    out.accel = accel.finish();
    out.gyro = gyro.finish();
    out.mag = mag.finish();
    return out;
}

// ---- splits ------------------------------------------------------------------------------

DatasetSplit split_by_subject(const std::vector<Trial>& trials, double train_frac, double val_frac,
                              double test_frac, std::uint64_t seed) {
    if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ContractError("split_by_subject: fractions must sum to 1");
    std::set<std::string> subject_set;
    for (const Trial& t : trials) subject_set.insert(t.subject);
    std::vector<std::string> subjects(subject_set.begin(), subject_set.end());
    const int n = static_cast<int>(subjects.size());
    if (n < 3) throw ContractError("split_by_subject: need at least 3 subjects, got " +
                                   std::to_string(n));

    std::mt19937_64 rng(seed);
    std::shuffle(subjects.begin(), subjects.end(), rng);

    int n_train = std::max(1, static_cast<int>(std::lround(train_frac * n)));
    int n_val = std::max(1, static_cast<int>(std::lround(val_frac * n)));
    while (n_train + n_val >= n) (n_train > 1 ? n_train : n_val) -= 1;

    DatasetSplit split;
    for (int i = 0; i < n; ++i) {
        if (i < n_train)
            split.train_subjects.push_back(subjects[i]);
        else if (i < n_train + n_val)
            split.val_subjects.push_back(subjects[i]);
        else
            split.test_subjects.push_back(subjects[i]);
    }
    auto contains = [](const std::vector<std::string>& v, const std::string& s) {
        return std::find(v.begin(), v.end(), s) != v.end();
    };
    for (int i = 0; i < static_cast<int>(trials.size()); ++i) {
        const Trial& t = trials[i];
        if (contains(split.train_subjects, t.subject)) {
            // calibration/validation trials carry no dynamics worth training on
            if (t.kind != TrialKind::calibration && t.kind != TrialKind::validation)
                split.train.push_back(i);
        } else if (contains(split.val_subjects, t.subject)) {
            split.val.push_back(i);
        } else {
            split.test.push_back(i);
        }
    }
    return split;
}

// ---- manifest -------------------------------------------------------------------------------

std::string fnv1a_hex(const std::string& file_path) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(read_file(file_path))));
    return buf;
}

void write_manifest(const std::string& path, const Manifest& m) {
    json j;
    j["version"] = m.version;
    j["seed"] = m.seed;
    j["trials"] = json::array();
    for (const ManifestEntry& e : m.trials) {
        j["trials"].push_back({{"file", e.file},
                               {"subject", e.subject},
                               {"kind", to_string(e.kind)},
                               {"sensors", e.n_sensors},
                               {"samples", e.n_samples},
                               {"checksum", e.checksum}});
    }
    atomic_write(path, j.dump(2) + "\n");
}

Manifest read_manifest(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    Manifest m;
    m.version = j.value("version", 0);
    if (m.version != kSchemaVersion)
        throw ParseError(path + ": unsupported manifest version " + std::to_string(m.version));
    m.seed = j.value("seed", 0ull);
    for (const auto& e : j.at("trials")) {
        ManifestEntry entry;
        entry.file = e.at("file").get<std::string>();
        entry.subject = e.value("subject", "unknown");
        entry.kind = trial_kind_from_string(e.value("kind", "task"));
        entry.n_sensors = e.value("sensors", 0);
        entry.n_samples = e.value("samples", 0);
        entry.checksum = e.value("checksum", "");
        m.trials.push_back(entry);
    }
    return m;
}

std::vector<Trial> load_dataset(const std::string& manifest_path) {
    Manifest m = read_manifest(manifest_path);
    std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
    std::vector<Trial> trials;
    for (const ManifestEntry& e : m.trials) {
        std::string p = (dir / e.file).string();
        if (!e.checksum.empty() && fnv1a_hex(p) != e.checksum)
            throw ParseError(p + ": checksum mismatch against manifest");
        trials.push_back(parse_trial(p));
    }
    return trials;
}

}  // namespace ipose
