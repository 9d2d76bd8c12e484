#pragma once

// QAD metrics, aggregation and the latency harness.

#include <functional>
#include <string>
#include <vector>

#include "ipose/dataset.hpp"
#include "ipose/quat.hpp"

namespace ipose {

struct BoxplotStats {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    double lo_fence = 0, hi_fence = 0;  // 1.5 * IQR
};

struct EvalReport {
    // Joint average over all (time, segment) pairs, degrees.
    double mean_deg = 0, std_deg = 0;
    // Per-segment time averages, then averaged across segments.
    double mean_time_then_segment_deg = 0;
    std::vector<double> per_segment_mean_deg;
    std::vector<BoxplotStats> per_segment_box;       // degrees
    std::vector<std::vector<double>> qad_series_deg; // [segment][time]
};

EvalReport evaluate(const Trajectory& pred, const Trajectory& gt, bool parallel = true);
EvalReport evaluate_serial(const Trajectory& pred, const Trajectory& gt);

// Exact quartiles via selection; linear interpolation between order statistics.
BoxplotStats boxplot_stats(std::vector<double> values);

struct LatencyStats {
    double mean_ms = 0, std_ms = 0;
    std::int64_t n = 0;
};

struct SampleProcessor {
    std::function<void()> reset;
    std::function<void(int)> step;  // process sample index t
};

// Per-sample wall time over `iterations` passes of the trial after `warmup`
// passes. Runs single-threaded.
LatencyStats bench_latency(SampleProcessor& proc, int n_samples, int warmup, int iterations);

void write_eval_report_json(const std::string& path, const EvalReport& r,
                            std::uint64_t seed = 0);
void write_boxplot_csv(const std::string& path, const EvalReport& r);
void write_timeplot_csv(const std::string& path, const EvalReport& r, double rate_hz = 60.0);
void write_boxplot_svg(const std::string& path, const EvalReport& r);
void write_timeplot_svg(const std::string& path, const EvalReport& r, double rate_hz = 60.0);

}  // namespace ipose
