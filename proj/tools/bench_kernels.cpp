// Compares the OpenMP-parallel fusion/evaluation kernels against their serial
// reference paths: wall time and output equality.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ipose/evaluation.hpp"
#include "ipose/filters.hpp"
#include "ipose/synth.hpp"

using namespace ipose;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    using clock = std::chrono::steady_clock;
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        auto t0 = clock::now();
        fn();
        auto t1 = clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

SynthConfig motion_config(int segments, double duration) {
    SynthConfig cfg;
    cfg.duration_s = duration;
    cfg.seed = 7;
    for (int s = 0; s < segments; ++s) {
        SegmentMotion m;
        m.kind = SegmentMotion::Kind::sinusoid;
        m.amp = {0.4, 0.3, 0.5};
        m.freq_hz = {0.2 + 0.01 * s, 0.15, 0.1};
        m.phase = {0.1 * s, 0.0, 0.5};
        cfg.segments.push_back(m);
    }
    cfg.imperfections.gyro_noise_std = 0.01;
    cfg.imperfections.accel_noise_std = 0.02;
    cfg.imperfections.mag_noise_std = 0.02;
    return cfg;
}

bool same_traj(const Trajectory& a, const Trajectory& b) {
    if (a.q.size() != b.q.size()) return false;
    for (std::size_t i = 0; i < a.q.size(); ++i) {
        if (a.q[i].w != b.q[i].w || a.q[i].x != b.q[i].x || a.q[i].y != b.q[i].y ||
            a.q[i].z != b.q[i].z)
            return false;
    }
    return true;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n\n", omp_get_max_threads());
#else
    std::printf("OpenMP not available; both paths run serially\n\n");
#endif
    std::printf("%-28s %10s %10s %8s %8s\n", "kernel", "serial ms", "parallel", "speedup",
                "match");

    for (int segments : {9, 17, 64}) {
        SynthConfig cfg = motion_config(segments, 60.0);
        Trajectory truth = generate_truth(cfg);
        Trial trial = synthesize_marg(truth, cfg);

        FilterConfig fcfg;
        fcfg.kind = FilterKind::madgwick;
        FuseResult serial_res, parallel_res;
        double ts = time_ms([&] { serial_res = fuse_body_serial(trial, fcfg); }, 3);
        double tp = time_ms([&] { parallel_res = fuse_body(trial, fcfg, true); }, 3);
        char label[64];
        std::snprintf(label, sizeof(label), "fuse_body madgwick S=%d", segments);
        std::printf("%-28s %10.2f %10.2f %7.2fx %8s\n", label, ts, tp, ts / tp,
                    same_traj(serial_res.traj, parallel_res.traj) ? "yes" : "NO");

        EvalReport es, ep;
        double es_ms = time_ms([&] { es = evaluate_serial(parallel_res.traj, truth); }, 3);
        double ep_ms = time_ms([&] { ep = evaluate(parallel_res.traj, truth, true); }, 3);
        std::snprintf(label, sizeof(label), "evaluate S=%d", segments);
        bool match = es.mean_deg == ep.mean_deg && es.std_deg == ep.std_deg;
        std::printf("%-28s %10.2f %10.2f %7.2fx %8s\n", label, es_ms, ep_ms, es_ms / ep_ms,
                    match ? "yes" : "NO");
    }
    return 0;
}
