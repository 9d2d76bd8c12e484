#include "ipose/filters.hpp"

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ipose/errors.hpp"
#include "ipose/io.hpp"

namespace ipose {

using nlohmann::json;

std::string to_string(FilterKind k) {
    switch (k) {
        case FilterKind::integral: return "integral";
        case FilterKind::mahony: return "mahony";
        case FilterKind::madgwick: return "madgwick";
        case FilterKind::madgwick_magreject: return "madgwick_magreject";
        case FilterKind::ekf: return "ekf";
    }
    return "madgwick";
}

FilterKind filter_kind_from_string(const std::string& s) {
    if (s == "integral") return FilterKind::integral;
    if (s == "mahony") return FilterKind::mahony;
    if (s == "madgwick") return FilterKind::madgwick;
    if (s == "madgwick_magreject") return FilterKind::madgwick_magreject;
    if (s == "ekf") return FilterKind::ekf;
    throw ParseError("unknown filter kind: " + s);
}

void FilterConfig::validate() const {
    if (beta < 0 || kp < 0 || ki < 0) throw ContractError("filter config: gains must be >= 0");
    if (!(band_min < band_max)) throw ContractError("filter config: band_min must be < band_max");
    if (!(dt > 0)) throw ContractError("filter config: dt must be positive");
}

FilterState init_state(const MargReading& first_sample, const FilterConfig& cfg) {
    FilterState st;
    try {
        st.q = triad(first_sample.accel, first_sample.mag, cfg.ref_gravity, cfg.ref_north);
    } catch (const DomainError&) {
        st.q = Quat::identity();
        st.triad_fallback = true;
    }
    for (int i = 0; i < 4; ++i) st.P[i * 4 + i] = cfg.ekf_init_cov;
    return st;
}

// ---- EKF (double only) -----------------------------------------------------------

namespace {

// Right-multiplication matrix: q (x) d == M_R(d) * q with q as a column
// (w,x,y,z). The gyro propagation is exactly linear in q.
std::array<double, 16> right_mult_matrix(const Quat& d) {
    return {d.w, -d.x, -d.y, -d.z,
            d.x, d.w, d.z, -d.y,
            d.y, -d.z, d.w, d.x,
            d.z, d.y, -d.x, d.w};
}

void mat4_mul(const std::array<double, 16>& a, const std::array<double, 16>& b,
              std::array<double, 16>& out) {
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) acc += a[i * 4 + k] * b[k * 4 + j];
            out[i * 4 + j] = acc;
        }
}

// In-place Gauss-Jordan inverse with partial pivoting, n <= 6.
bool invert(double* m, int n) {
    double inv[36];
    std::memset(inv, 0, sizeof(inv));
    for (int i = 0; i < n; ++i) inv[i * n + i] = 1.0;
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(m[r * n + col]) > std::fabs(m[pivot * n + col])) pivot = r;
        if (std::fabs(m[pivot * n + col]) < 1e-15) return false;
        if (pivot != col)
            for (int c = 0; c < n; ++c) {
                std::swap(m[pivot * n + c], m[col * n + c]);
                std::swap(inv[pivot * n + c], inv[col * n + c]);
            }
        double d = m[col * n + col];
        for (int c = 0; c < n; ++c) {
            m[col * n + c] /= d;
            inv[col * n + c] /= d;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            double f = m[r * n + col];
            if (f == 0.0) continue;
            for (int c = 0; c < n; ++c) {
                m[r * n + c] -= f * m[col * n + c];
                inv[r * n + c] -= f * inv[col * n + c];
            }
        }
    }
    std::memcpy(m, inv, sizeof(double) * n * n);
    return true;
}

bool is_spd(const std::array<double, 16>& p) {
    // Cheap Cholesky attempt.
    double l[16] = {0};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j <= i; ++j) {
            double acc = p[i * 4 + j];
            for (int k = 0; k < j; ++k) acc -= l[i * 4 + k] * l[j * 4 + k];
            if (i == j) {
                if (acc <= 0) return false;
                l[i * 4 + i] = std::sqrt(acc);
            } else {
                l[i * 4 + j] = acc / l[j * 4 + j];
            }
        }
    }
    return true;
}

// Measurement rows for the gravity (and optionally field) observation model,
// shared with the Madgwick objective. z and h are stacked 3-vectors.
int ekf_measurement(const Quat& q, const MargReading& r, bool use_mag, double* h, double* H,
                    double* z) {
    double w = q.w, x = q.x, y = q.y, zc = q.z;
    double an = norm(r.accel);
    if (an < 1e-12) return 0;
    Vec3 a = r.accel * (1.0 / an);
    h[0] = 2 * (x * zc - w * y);
    h[1] = 2 * (y * zc + w * x);
    h[2] = 1 - 2 * (x * x + y * y);
    z[0] = a.x;
    z[1] = a.y;
    z[2] = a.z;
    const double jg[12] = {-2 * y, 2 * zc, -2 * w, 2 * x,
                           2 * x, 2 * w, 2 * zc, 2 * y,
                           0, -4 * x, -4 * y, 0};
    std::memcpy(H, jg, sizeof(jg));
    int rows = 3;
    if (use_mag) {
        double mn = norm(r.mag);
        if (mn > 1e-12) {
            Vec3 m = r.mag * (1.0 / mn);
            Vec3 hf = rotate(q, m);
            double bx2 = hf.x * hf.x + hf.y * hf.y;
            if (bx2 > 1e-12) {
                double bx = std::sqrt(bx2), bz = hf.z;
                h[3] = bx * (1 - 2 * (y * y + zc * zc)) + 2 * bz * (x * zc - w * y);
                h[4] = 2 * bx * (x * y - w * zc) + 2 * bz * (y * zc + w * x);
                h[5] = 2 * bx * (x * zc + w * y) + bz * (1 - 2 * (x * x + y * y));
                z[3] = m.x;
                z[4] = m.y;
                z[5] = m.z;
                const double jm[12] = {
                    -2 * bz * y, 2 * bz * zc, -4 * bx * y - 2 * bz * w, -4 * bx * zc + 2 * bz * x,
                    -2 * bx * zc + 2 * bz * x, 2 * bx * y + 2 * bz * w, 2 * bx * x + 2 * bz * zc,
                    -2 * bx * w + 2 * bz * y,
                    2 * bx * y, 2 * bx * zc - 4 * bz * x, 2 * bx * w - 4 * bz * y, 2 * bx * x};
                std::memcpy(H + 12, jm, sizeof(jm));
                rows = 6;
            }
        }
    }
    return rows;
}

void step_ekf(FilterState& st, const MargReading& r, const FilterConfig& cfg) {
    // Predict through the exact gyro update; F is the right-multiplication
    // matrix of the delta quaternion.
    Quat dq = quat_exp(r.gyro * (cfg.dt * 0.5));
    Quat qp = normalized(quat_multiply_raw(st.q, dq));
    std::array<double, 16> f = right_mult_matrix(dq);
    std::array<double, 16> fp, ft, pnew;
    mat4_mul(f, st.P, fp);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) ft[i * 4 + j] = f[j * 4 + i];
    mat4_mul(fp, ft, pnew);
    const double qproc = 0.25 * cfg.ekf_gyro_noise * cfg.ekf_gyro_noise * cfg.dt * cfg.dt;
    for (int i = 0; i < 4; ++i) pnew[i * 4 + i] += qproc;
    st.P = pnew;
    st.q = qp;

    // Infinite measurement noise degenerates to the integral filter.
    if (!std::isfinite(cfg.ekf_accel_noise)) return;

    double h[6], H[24], z[6];
    int rows = ekf_measurement(st.q, r, cfg.use_mag, h, H, z);
    if (rows == 0) return;

    // S = H P H^T + R
    double s[36];
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < rows; ++j) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) {
                double phk = 0;
                for (int l = 0; l < 4; ++l) phk += st.P[k * 4 + l] * H[j * 4 + l];
                acc += H[i * 4 + k] * phk;
            }
            s[i * rows + j] = acc;
        }
        double noise = i < 3 ? cfg.ekf_accel_noise : cfg.ekf_mag_noise;
        s[i * rows + i] += noise * noise;
    }
    if (!invert(s, rows)) {
        for (auto& v : st.P) v = 0;
        for (int i = 0; i < 4; ++i) st.P[i * 4 + i] = cfg.ekf_init_cov * 10;
        st.spd_reset = true;
        return;
    }

    // K = P H^T S^-1 (4 x rows)
    double pht[24];
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < rows; ++j) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) acc += st.P[i * 4 + k] * H[j * 4 + k];
            pht[i * 6 + j] = acc;
        }
    double K[24];
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < rows; ++j) {
            double acc = 0;
            for (int k = 0; k < rows; ++k) acc += pht[i * 6 + k] * s[k * rows + j];
            K[i * 6 + j] = acc;
        }

    double dq4[4] = {0, 0, 0, 0};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < rows; ++j) dq4[i] += K[i * 6 + j] * (z[j] - h[j]);
    st.q = normalized(Quat{st.q.w + dq4[0], st.q.x + dq4[1], st.q.y + dq4[2], st.q.z + dq4[3]});

    // P = (I - K H) P, then symmetrize.
    std::array<double, 16> kh;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double acc = 0;
            for (int k = 0; k < rows; ++k) acc += K[i * 6 + k] * H[k * 4 + j];
            kh[i * 4 + j] = (i == j ? 1.0 : 0.0) - acc;
        }
    std::array<double, 16> pupd;
    mat4_mul(kh, st.P, pupd);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) st.P[i * 4 + j] = 0.5 * (pupd[i * 4 + j] + pupd[j * 4 + i]);

    if (!is_spd(st.P)) {
        for (auto& v : st.P) v = 0;
        for (int i = 0; i < 4; ++i) st.P[i * 4 + i] = cfg.ekf_init_cov * 10;
        st.spd_reset = true;
    }
}

}  // namespace

void step_filter(FilterState& state, const MargReading& r, const FilterConfig& cfg) {
    if (cfg.kind == FilterKind::ekf) {
        step_ekf(state, r, cfg);
        return;
    }
    step_filter_g(state.q, state.integral_error, r.accel, r.gyro, r.mag, cfg);
}

// ---- whole-body fusion ----------------------------------------------------------------

namespace {

struct SegmentRun {
    std::vector<int> gaps;
    bool triad_fallback = false;
    bool spd_reset = false;
};

SegmentRun fuse_segment(const Trial& trial, const FilterConfig& cfg, int s, Trajectory& out) {
    SegmentRun run;
    const int T = trial.n_samples();
    FilterState st = init_state(trial.reading(0, s), cfg);
    run.triad_fallback = st.triad_fallback;
    out.at(0, s) = st.q;
    for (int ti = 1; ti < T; ++ti) {
        const MargReading& r = trial.reading(ti, s);
        if (!is_finite(r)) {
            run.gaps.push_back(ti);  // hold previous orientation
        } else {
            step_filter(st, r, cfg);
        }
        out.at(ti, s) = st.q;
    }
    run.spd_reset = st.spd_reset;
    return run;
}

FuseResult fuse_impl(const Trial& trial, const FilterConfig& cfg, bool parallel) {
    trial.validate();
    cfg.validate();
    if (trial.n_samples() == 0) throw ContractError("fuse_body: empty trial");

    FuseResult res;
    res.traj.n_segments = trial.n_sensors;
    res.traj.t = trial.t;
    res.traj.q.assign(static_cast<std::size_t>(trial.n_samples()) * trial.n_sensors,
                      Quat::identity());

    std::vector<SegmentRun> runs(trial.n_sensors);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel)
#endif
    for (int s = 0; s < trial.n_sensors; ++s) runs[s] = fuse_segment(trial, cfg, s, res.traj);

    // Merge bookkeeping in segment order so the result is identical no matter
    // how the loop was scheduled.
    for (int s = 0; s < trial.n_sensors; ++s) {
        for (int ti : runs[s].gaps) res.gaps.emplace_back(ti, s);
        res.triad_fallbacks += runs[s].triad_fallback ? 1 : 0;
        res.spd_resets += runs[s].spd_reset ? 1 : 0;
    }
    return res;
}

}  // namespace

FuseResult fuse_body(const Trial& trial, const FilterConfig& cfg, bool parallel) {
    return fuse_impl(trial, cfg, parallel);
}

FuseResult fuse_body_serial(const Trial& trial, const FilterConfig& cfg) {
    return fuse_impl(trial, cfg, false);
}

// ---- config JSON ---------------------------------------------------------------------------

void write_filter_config(const std::string& path, const FilterConfig& cfg) {
    json j;
    j["kind"] = to_string(cfg.kind);
    j["use_mag"] = cfg.use_mag;
    j["beta"] = cfg.beta;
    j["kp"] = cfg.kp;
    j["ki"] = cfg.ki;
    j["ekf_gyro_noise"] = cfg.ekf_gyro_noise;
    j["ekf_accel_noise"] = cfg.ekf_accel_noise;
    j["ekf_mag_noise"] = cfg.ekf_mag_noise;
    j["ekf_init_cov"] = cfg.ekf_init_cov;
    j["band_min"] = cfg.band_min;
    j["band_max"] = cfg.band_max;
    j["dt"] = cfg.dt;
    atomic_write(path, j.dump(2) + "\n");
}

FilterConfig read_filter_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    FilterConfig cfg;
    if (j.contains("kind")) cfg.kind = filter_kind_from_string(j["kind"].get<std::string>());
    cfg.use_mag = j.value("use_mag", cfg.use_mag);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.kp = j.value("kp", cfg.kp);
    cfg.ki = j.value("ki", cfg.ki);
    cfg.ekf_gyro_noise = j.value("ekf_gyro_noise", cfg.ekf_gyro_noise);
    cfg.ekf_accel_noise = j.value("ekf_accel_noise", cfg.ekf_accel_noise);
    cfg.ekf_mag_noise = j.value("ekf_mag_noise", cfg.ekf_mag_noise);
    cfg.ekf_init_cov = j.value("ekf_init_cov", cfg.ekf_init_cov);
    cfg.band_min = j.value("band_min", cfg.band_min);
    cfg.band_max = j.value("band_max", cfg.band_max);
    cfg.dt = j.value("dt", cfg.dt);
    cfg.validate();
    return cfg;
}

}  // namespace ipose
