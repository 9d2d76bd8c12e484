#include "ipose/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ipose/errors.hpp"
#include "ipose/io.hpp"

namespace ipose {

using nlohmann::json;

namespace {

double select_kth(std::vector<double>& v, std::size_t k) {
    std::nth_element(v.begin(), v.begin() + k, v.end());
    return v[k];
}

// Quantile at linearly interpolated rank p*(n-1) via selection, no full sort.
double quantile_select(std::vector<double>& v, double p) {
    const std::size_t n = v.size();
    if (n == 1) return v[0];
    double pos = p * (n - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - lo;
    double a = select_kth(v, lo);
    if (frac == 0.0 || lo + 1 >= n) return a;
    double b = select_kth(v, lo + 1);
    return a * (1.0 - frac) + b * frac;
}

struct SegmentEval {
    std::vector<double> series_deg;
    double sum = 0, sumsq = 0;
    BoxplotStats box;
};

SegmentEval eval_segment(const Trajectory& pred, const Trajectory& gt, int s) {
    SegmentEval e;
    const int T = pred.n_samples();
    e.series_deg.resize(T);
    for (int ti = 0; ti < T; ++ti) {
        double d = qad_deg(gt.at(ti, s), pred.at(ti, s));
        e.series_deg[ti] = d;
        e.sum += d;
        e.sumsq += d * d;
    }
    e.box = boxplot_stats(e.series_deg);
    return e;
}

}  // namespace

BoxplotStats boxplot_stats(std::vector<double> values) {
    if (values.empty()) throw ContractError("boxplot_stats: empty input");
    BoxplotStats b;
    b.min = *std::min_element(values.begin(), values.end());
    b.max = *std::max_element(values.begin(), values.end());
    std::vector<double> work = values;
    b.q1 = quantile_select(work, 0.25);
    work = values;
    b.median = quantile_select(work, 0.5);
    work = values;
    b.q3 = quantile_select(work, 0.75);
    double iqr = b.q3 - b.q1;
    b.lo_fence = b.q1 - 1.5 * iqr;
    b.hi_fence = b.q3 + 1.5 * iqr;
    return b;
}

namespace {

EvalReport evaluate_impl(const Trajectory& pred, const Trajectory& gt, bool parallel) {
    if (pred.n_segments != gt.n_segments || pred.n_samples() != gt.n_samples())
        throw ContractError("evaluate: prediction/ground-truth shapes differ");
    if (pred.n_samples() == 0) throw ContractError("evaluate: empty trajectories");
    const int S = pred.n_segments;
    const int T = pred.n_samples();

    std::vector<SegmentEval> segs(S);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel)
#endif
    for (int s = 0; s < S; ++s) segs[s] = eval_segment(pred, gt, s);

    EvalReport r;
    double sum = 0, sumsq = 0;
    for (int s = 0; s < S; ++s) {  // fixed merge order keeps results thread-count independent
        sum += segs[s].sum;
        sumsq += segs[s].sumsq;
        r.per_segment_mean_deg.push_back(segs[s].sum / T);
        r.per_segment_box.push_back(segs[s].box);
        r.qad_series_deg.push_back(std::move(segs[s].series_deg));
    }
    const double n = static_cast<double>(S) * T;
    r.mean_deg = sum / n;
    r.std_deg = std::sqrt(std::max(0.0, sumsq / n - r.mean_deg * r.mean_deg));
    double acc = 0;
    for (double m : r.per_segment_mean_deg) acc += m;
    r.mean_time_then_segment_deg = acc / S;
    return r;
}

}  // namespace

EvalReport evaluate(const Trajectory& pred, const Trajectory& gt, bool parallel) {
    return evaluate_impl(pred, gt, parallel);
}

EvalReport evaluate_serial(const Trajectory& pred, const Trajectory& gt) {
    return evaluate_impl(pred, gt, false);
}

LatencyStats bench_latency(SampleProcessor& proc, int n_samples, int warmup, int iterations) {
    if (iterations < 100) throw ContractError("bench_latency: need at least 100 iterations");
    if (n_samples <= 0) throw ContractError("bench_latency: empty trial");
#ifdef _OPENMP
    int prev = omp_get_max_threads();
    omp_set_num_threads(1);  // timings are per single-threaded sample
#endif
    using clock = std::chrono::steady_clock;
    for (int it = 0; it < warmup; ++it) {
        proc.reset();
        for (int t = 0; t < n_samples; ++t) proc.step(t);
    }
    double sum = 0, sumsq = 0;
    std::int64_t n = 0;
    for (int it = 0; it < iterations; ++it) {
        proc.reset();
        for (int t = 0; t < n_samples; ++t) {
            auto t0 = clock::now();
            proc.step(t);
            auto t1 = clock::now();
            double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            sum += ms;
            sumsq += ms * ms;
            ++n;
        }
    }
#ifdef _OPENMP
    omp_set_num_threads(prev);
#endif
    LatencyStats s;
    s.n = n;
    s.mean_ms = sum / n;
    s.std_ms = std::sqrt(std::max(0.0, sumsq / n - s.mean_ms * s.mean_ms));
    return s;
}

// ---- report output -----------------------------------------------------------------

void write_eval_report_json(const std::string& path, const EvalReport& r, std::uint64_t seed) {
    json j;
    j["version"] = 1;
    j["seed"] = seed;
    j["mean_deg"] = r.mean_deg;
    j["std_deg"] = r.std_deg;
    j["mean_time_then_segment_deg"] = r.mean_time_then_segment_deg;
    j["per_segment_mean_deg"] = r.per_segment_mean_deg;
    j["per_segment_box"] = json::array();
    for (const BoxplotStats& b : r.per_segment_box)
        j["per_segment_box"].push_back({{"min", b.min},
                                        {"q1", b.q1},
                                        {"median", b.median},
                                        {"q3", b.q3},
                                        {"max", b.max},
                                        {"lo_fence", b.lo_fence},
                                        {"hi_fence", b.hi_fence}});
    atomic_write(path, j.dump(2) + "\n");
}

void write_boxplot_csv(const std::string& path, const EvalReport& r) {
    std::ostringstream out;
    out << "segment,min,q1,median,q3,max,lo_fence,hi_fence\n";
    for (std::size_t s = 0; s < r.per_segment_box.size(); ++s) {
        const BoxplotStats& b = r.per_segment_box[s];
        out << s << ',' << fmt_double(b.min) << ',' << fmt_double(b.q1) << ','
            << fmt_double(b.median) << ',' << fmt_double(b.q3) << ',' << fmt_double(b.max) << ','
            << fmt_double(b.lo_fence) << ',' << fmt_double(b.hi_fence) << "\n";
    }
    atomic_write(path, out.str());
}

void write_timeplot_csv(const std::string& path, const EvalReport& r, double rate_hz) {
    std::ostringstream out;
    out << "t";
    for (std::size_t s = 0; s < r.qad_series_deg.size(); ++s) out << ",segment" << s;
    out << "\n";
    if (!r.qad_series_deg.empty()) {
        const std::size_t T = r.qad_series_deg[0].size();
        for (std::size_t ti = 0; ti < T; ++ti) {
            out << fmt_double(ti / rate_hz);
            for (const auto& series : r.qad_series_deg) out << ',' << fmt_double(series[ti]);
            out << "\n";
        }
    }
    atomic_write(path, out.str());
}

void write_boxplot_svg(const std::string& path, const EvalReport& r) {
    const double w = 640, h = 360, ml = 50, mb = 30, mt = 15;
    const int S = static_cast<int>(r.per_segment_box.size());
    double top = 1.0;
    for (const BoxplotStats& b : r.per_segment_box) top = std::max(top, b.max);
    auto ypx = [&](double v) { return h - mb - (v / top) * (h - mb - mt); };
    std::ostringstream out;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n";
    for (int g = 0; g <= 4; ++g) {
        double v = top * g / 4;
        out << "<line x1='" << ml << "' y1='" << ypx(v) << "' x2='" << w - 10 << "' y2='" << ypx(v)
            << "' stroke='#ddd'/>\n"
            << "<text x='4' y='" << ypx(v) + 4 << "' font-size='11'>" << static_cast<int>(v)
            << "</text>\n";
    }
    double band = (w - ml - 20) / std::max(1, S);
    for (int s = 0; s < S; ++s) {
        const BoxplotStats& b = r.per_segment_box[s];
        double cx = ml + band * (s + 0.5);
        double bw = band * 0.5;
        out << "<line x1='" << cx << "' y1='" << ypx(std::max(b.lo_fence, b.min)) << "' x2='" << cx
            << "' y2='" << ypx(std::min(b.hi_fence, b.max)) << "' stroke='black'/>\n";
        out << "<rect x='" << cx - bw / 2 << "' y='" << ypx(b.q3) << "' width='" << bw
            << "' height='" << ypx(b.q1) - ypx(b.q3)
            << "' fill='steelblue' fill-opacity='0.6' stroke='black'/>\n";
        out << "<line x1='" << cx - bw / 2 << "' y1='" << ypx(b.median) << "' x2='" << cx + bw / 2
            << "' y2='" << ypx(b.median) << "' stroke='black' stroke-width='2'/>\n";
        out << "<text x='" << cx << "' y='" << h - 10
            << "' font-size='11' text-anchor='middle'>s" << s << "</text>\n";
    }
    out << "</svg>\n";
    atomic_write(path, out.str());
}

void write_timeplot_svg(const std::string& path, const EvalReport& r, double rate_hz) {
    const double w = 720, h = 360, ml = 50, mb = 30, mt = 15;
    std::size_t T = r.qad_series_deg.empty() ? 0 : r.qad_series_deg[0].size();
    double top = 1.0;
    for (const auto& series : r.qad_series_deg)
        for (double v : series) top = std::max(top, v);
    auto xpx = [&](std::size_t ti) { return ml + (T <= 1 ? 0.0 : double(ti) / (T - 1)) * (w - ml - 15); };
    auto ypx = [&](double v) { return h - mb - (v / top) * (h - mb - mt); };
    std::ostringstream out;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n";
    for (int g = 0; g <= 4; ++g) {
        double v = top * g / 4;
        out << "<line x1='" << ml << "' y1='" << ypx(v) << "' x2='" << w - 10 << "' y2='" << ypx(v)
            << "' stroke='#ddd'/>\n"
            << "<text x='4' y='" << ypx(v) + 4 << "' font-size='11'>" << static_cast<int>(v)
            << "</text>\n";
    }
    const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    for (std::size_t s = 0; s < r.qad_series_deg.size(); ++s) {
        out << "<polyline fill='none' stroke='" << colors[s % 10] << "' stroke-width='1' points='";
        // thin long series to keep files small
        std::size_t stride = std::max<std::size_t>(1, T / 2000);
        for (std::size_t ti = 0; ti < T; ti += stride)
            out << xpx(ti) << ',' << ypx(r.qad_series_deg[s][ti]) << ' ';
        out << "'/>\n";
    }
    out << "<text x='" << w / 2 << "' y='" << h - 8 << "' font-size='11' text-anchor='middle'>t (s), 0 to "
        << fmt_double(T / rate_hz) << "</text>\n";
    out << "</svg>\n";
    atomic_write(path, out.str());
}

}  // namespace ipose
