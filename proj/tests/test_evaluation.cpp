#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ipose/evaluation.hpp"
#include "test_util.hpp"

using namespace ipose;
using test_util::random_quat;

namespace {

Trajectory random_traj(int T, int S, std::mt19937_64& rng) {
    Trajectory t;
    t.n_segments = S;
    for (int ti = 0; ti < T; ++ti) {
        t.t.push_back(ti / 60.0);
        for (int s = 0; s < S; ++s) t.q.push_back(random_quat(rng));
    }
    return t;
}

// Full-sort quantile oracle, numpy linear-interpolation convention.
double sorted_quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    double pos = p * (v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - lo;
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace

TEST_CASE("evaluate") {
    std::mt19937_64 rng(111);

    SUBCASE("perfect prediction is all zeros") {
        Trajectory gt = random_traj(50, 3, rng);
        EvalReport r = evaluate(gt, gt);
        CHECK(r.mean_deg == 0.0);
        CHECK(r.std_deg == 0.0);
        for (const BoxplotStats& b : r.per_segment_box) {
            CHECK(b.median == 0.0);
            CHECK(b.max == 0.0);
        }
    }
    SUBCASE("uniform 90 degree offset gives mean 90, std 0") {
        Trajectory gt = random_traj(40, 2, rng);
        Trajectory pred = gt;
        Quat off = from_axis_angle(Vec3{1, 0, 0}, M_PI / 2);
        for (Quat& q : pred.q) q = quat_multiply(q, off);
        EvalReport r = evaluate(pred, gt);
        CHECK(r.mean_deg == doctest::Approx(90.0).epsilon(1e-9));
        CHECK(r.std_deg < 1e-6);
    }
    SUBCASE("mean matches a direct per-element recomputation") {
        Trajectory gt = random_traj(30, 4, rng);
        Trajectory pred = random_traj(30, 4, rng);
        EvalReport r = evaluate(pred, gt);
        double acc = 0;
        for (std::size_t i = 0; i < gt.q.size(); ++i) acc += qad_deg(gt.q[i], pred.q[i]);
        CHECK(r.mean_deg == doctest::Approx(acc / gt.q.size()).epsilon(1e-12));
    }
    SUBCASE("invariant to a simultaneous global rotation") {
        Trajectory gt = random_traj(25, 3, rng);
        Trajectory pred = random_traj(25, 3, rng);
        double base = evaluate(pred, gt).mean_deg;
        Quat g = random_quat(rng);
        Trajectory gt2 = gt, pred2 = pred;
        for (Quat& q : gt2.q) q = quat_multiply(g, q);
        for (Quat& q : pred2.q) q = quat_multiply(g, q);
        CHECK(evaluate(pred2, gt2).mean_deg == doctest::Approx(base).epsilon(1e-9));
    }
    SUBCASE("shape mismatch is a contract error") {
        Trajectory a = random_traj(10, 2, rng);
        Trajectory b = random_traj(10, 3, rng);
        CHECK_THROWS_AS(evaluate(a, b), ContractError);
    }
    SUBCASE("parallel path equals the serial reference exactly") {
        Trajectory gt = random_traj(200, 9, rng);
        Trajectory pred = random_traj(200, 9, rng);
        EvalReport a = evaluate(pred, gt, true);
        EvalReport b = evaluate_serial(pred, gt);
        CHECK(a.mean_deg == b.mean_deg);
        CHECK(a.std_deg == b.std_deg);
        for (int s = 0; s < 9; ++s) {
            CHECK(a.per_segment_box[s].q1 == b.per_segment_box[s].q1);
            CHECK(a.per_segment_box[s].median == b.per_segment_box[s].median);
        }
    }
}

TEST_CASE("boxplot statistics match the sort-based oracle exactly") {
    std::mt19937_64 rng(112);
    std::uniform_real_distribution<double> u(0.0, 90.0);
    for (int n : {1, 2, 3, 4, 5, 10, 101, 1000}) {
        std::vector<double> v(n);
        for (double& x : v) x = u(rng);
        BoxplotStats b = boxplot_stats(v);
        CHECK(b.q1 == sorted_quantile(v, 0.25));
        CHECK(b.median == sorted_quantile(v, 0.5));
        CHECK(b.q3 == sorted_quantile(v, 0.75));
        CHECK(b.min == *std::min_element(v.begin(), v.end()));
        CHECK(b.max == *std::max_element(v.begin(), v.end()));
        CHECK(b.hi_fence == doctest::Approx(b.q3 + 1.5 * (b.q3 - b.q1)));
        CHECK(b.lo_fence == doctest::Approx(b.q1 - 1.5 * (b.q3 - b.q1)));
    }
}

TEST_CASE("bench_latency") {
    SUBCASE("needs at least 100 iterations") {
        SampleProcessor p;
        p.reset = [] {};
        p.step = [](int) {};
        CHECK_THROWS_AS(bench_latency(p, 10, 0, 10), ContractError);
    }
    SUBCASE("no-op callable is near the timer floor and stable") {
        SampleProcessor p;
        p.reset = [] {};
        volatile double sink = 0;
        p.step = [&](int t) { sink = sink + t; };
        LatencyStats s = bench_latency(p, 50, 2, 200);
        CHECK(s.mean_ms < 0.01);
        CHECK(s.n == 50 * 200);
    }
}
