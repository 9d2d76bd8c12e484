#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ipose/nn/model.hpp"
#include "ipose/synth.hpp"
#include "test_util.hpp"

using namespace ipose;
using namespace ipose::nn;

namespace {

SynthConfig wobble_cfg(int segments, double duration, unsigned seed = 121) {
    SynthConfig cfg;
    cfg.duration_s = duration;
    cfg.seed = seed;
    for (int s = 0; s < segments; ++s) {
        SegmentMotion m;
        m.kind = SegmentMotion::Kind::sinusoid;
        m.amp = {0.5, 0.3, 0.6};
        m.freq_hz = {0.21 + 0.02 * s, 0.33, 0.12};
        m.phase = {0.2 * s, 0.9, 0.4};
        cfg.segments.push_back(m);
    }
    return cfg;
}

void randomize(RecurrentModel& m, unsigned seed, double scale = 0.3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (NamedTensor& t : m.params)
        for (double& v : t.data) v += u(rng);
}

// Reference single-layer cell implementations, written independently of the
// library path, reading the same packed weights.
std::vector<double> ref_cell_step(const RecurrentModel& m, const std::vector<double>& x,
                                  std::vector<double>& h, std::vector<double>& c) {
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    const int hw = m.hidden[0];
    const NamedTensor& W = m.tensor("l0.W");
    const NamedTensor& U = m.tensor("l0.U");
    const NamedTensor& bw = m.tensor("l0.bw");
    const NamedTensor& bu = m.tensor("l0.bu");
    auto pre = [&](int row) {
        double acc = bw.data[row] + bu.data[row];
        for (int j = 0; j < W.cols; ++j) acc += W.data[row * W.cols + j] * x[j];
        for (int j = 0; j < hw; ++j) acc += U.data[row * hw + j] * h[j];
        return acc;
    };
    std::vector<double> hn(hw);
    if (m.cell == CellKind::rnn) {
        for (int i = 0; i < hw; ++i) hn[i] = std::tanh(pre(i));
    } else if (m.cell == CellKind::lstm) {
        for (int i = 0; i < hw; ++i) {
            double ig = sig(pre(i));
            double fg = sig(pre(hw + i));
            double gg = std::tanh(pre(2 * hw + i));
            double og = sig(pre(3 * hw + i));
            c[i] = fg * c[i] + ig * gg;
            hn[i] = og * std::tanh(c[i]);
        }
    } else {  // gru: n-gate mixes W x and r * (U h) separately
        for (int i = 0; i < hw; ++i) {
            double wx_r = bw.data[i], uh_r = bu.data[i];
            double wx_z = bw.data[hw + i], uh_z = bu.data[hw + i];
            double wx_n = bw.data[2 * hw + i], uh_n = bu.data[2 * hw + i];
            for (int j = 0; j < W.cols; ++j) {
                wx_r += W.data[i * W.cols + j] * x[j];
                wx_z += W.data[(hw + i) * W.cols + j] * x[j];
                wx_n += W.data[(2 * hw + i) * W.cols + j] * x[j];
            }
            for (int j = 0; j < hw; ++j) {
                uh_r += U.data[i * hw + j] * h[j];
                uh_z += U.data[(hw + i) * hw + j] * h[j];
                uh_n += U.data[(2 * hw + i) * hw + j] * h[j];
            }
            double r = sig(wx_r + uh_r);
            double z = sig(wx_z + uh_z);
            double n = std::tanh(wx_n + r * uh_n);
            hn[i] = (1.0 - z) * n + z * h[i];
        }
    }
    h = hn;
    std::vector<double> y1(m.tensor("head.b1").rows);
    const NamedTensor& W1 = m.tensor("head.W1");
    for (int i = 0; i < W1.rows; ++i) {
        double acc = m.tensor("head.b1").data[i];
        for (int j = 0; j < W1.cols; ++j) acc += W1.data[i * W1.cols + j] * h[j];
        y1[i] = acc > 0 ? acc : 0.0;
    }
    const NamedTensor& W2 = m.tensor("head.W2");
    std::vector<double> out(W2.rows);
    for (int i = 0; i < W2.rows; ++i) {
        double acc = m.tensor("head.b2").data[i];
        for (int j = 0; j < W2.cols; ++j) acc += W2.data[i * W2.cols + j] * y1[j];
        out[i] = acc;
    }
    return out;
}

}  // namespace

TEST_CASE("cell_forward matches the reference equations") {
    std::mt19937_64 rng(122);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (CellKind cell : {CellKind::rnn, CellKind::gru, CellKind::lstm}) {
        RecurrentModel m = make_model(ArchKind::model_free, cell, OutputRepr::quaternion, 1, 1,
                                      {6}, 7);
        randomize(m, 123);
        EvalState st;
        std::vector<double> rh(6, 0.0), rc(6, 0.0);
        for (int t = 0; t < 10; ++t) {
            std::vector<double> x(m.input_dim());
            for (double& v : x) v = u(rng);
            std::vector<double> got;
            cell_forward(m, x, st, got);
            std::vector<double> want = ref_cell_step(m, x, rh, rc);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i)
                CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("zero weights give zero output and zero state") {
    RecurrentModel m = make_model(ArchKind::model_free, CellKind::lstm, OutputRepr::quaternion, 1,
                                  1, {4}, 7);
    for (NamedTensor& t : m.params) std::fill(t.data.begin(), t.data.end(), 0.0);
    EvalState st;
    std::vector<double> out;
    cell_forward(m, std::vector<double>(m.input_dim(), 0.5), st, out);
    for (double v : out) CHECK(v == 0.0);
    for (double v : st.h[0]) CHECK(v == 0.0);
}

TEST_CASE("saturated lstm gates preserve the cell state") {
    RecurrentModel m = make_model(ArchKind::model_free, CellKind::lstm, OutputRepr::quaternion, 1,
                                  1, {3}, 7);
    for (NamedTensor& t : m.params) std::fill(t.data.begin(), t.data.end(), 0.0);
    const int hw = 3;
    NamedTensor& bw = m.tensor("l0.bw");
    for (int i = 0; i < hw; ++i) {
        bw.data[i] = -30.0;       // input gate ~ 0
        bw.data[hw + i] = 30.0;   // forget gate ~ 1
    }
    EvalState st;
    std::vector<double> out;
    cell_forward(m, std::vector<double>(m.input_dim(), 0.3), st, out);
    st.c[0] = {0.7, -0.2, 0.5};
    std::vector<double> before = st.c[0];
    cell_forward(m, std::vector<double>(m.input_dim(), -0.9), st, out);
    for (int i = 0; i < hw; ++i) CHECK(st.c[0][i] == doctest::Approx(before[i]).epsilon(1e-9));
}

TEST_CASE("head decoding") {
    SUBCASE("zero head output decodes to identity in every representation") {
        double zeros[6] = {0, 0, 0, 0, 0, 0};
        for (OutputRepr r : {OutputRepr::euler, OutputRepr::quaternion, OutputRepr::repr6d})
            CHECK(qad(decode_head(zeros, r), Quat::identity()) < 1e-15);
        CHECK(qad(decode_residual(zeros), Quat::identity()) == 0.0);
    }
    SUBCASE("random head outputs decode to unit quaternions in every representation") {
        std::mt19937_64 rng(124);
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        for (int rep = 0; rep < 200; ++rep) {
            double v[6];
            for (double& x : v) x = u(rng);
            for (OutputRepr r : {OutputRepr::euler, OutputRepr::quaternion, OutputRepr::repr6d}) {
                Quat q = decode_head(v, r);
                CHECK(std::fabs(quat_norm(q) - 1.0) < 1e-9);
            }
            CHECK(std::fabs(quat_norm(decode_residual(v)) - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("untrained model emits valid unit quaternions (identity by construction)") {
    SynthConfig cfg = wobble_cfg(2, 3.0);
    Trajectory truth = generate_truth(cfg);
    Trial trial = synthesize_marg(truth, cfg);
    for (OutputRepr repr : {OutputRepr::euler, OutputRepr::quaternion, OutputRepr::repr6d}) {
        RecurrentModel m = make_model(ArchKind::model_free, CellKind::lstm, repr, 2, 2, {8}, 5);
        NnOutput out = nn_forward(m, trial);
        for (const Quat& q : out.traj.q) {
            CHECK(std::fabs(quat_norm(q) - 1.0) < 1e-9);
            CHECK(qad(q, Quat::identity()) < 1e-12);  // zero-initialized head
        }
    }
}

TEST_CASE("eval-mode inference is bitwise deterministic") {
    SynthConfig cfg = wobble_cfg(2, 4.0);
    Trajectory truth = generate_truth(cfg);
    Trial trial = synthesize_marg(truth, cfg);
    for (ArchKind arch : {ArchKind::model_free, ArchKind::complementary, ArchKind::cff_detached,
                          ArchKind::cff_feedback}) {
        RecurrentModel m = make_model(arch, CellKind::lstm, OutputRepr::quaternion, 2, 2, {8}, 5);
        randomize(m, 125, 0.05);
        NnOutput a = nn_forward(m, trial);
        NnOutput b = nn_forward(m, trial);
        REQUIRE(a.traj.q.size() == b.traj.q.size());
        for (std::size_t i = 0; i < a.traj.q.size(); ++i) {
            CHECK(a.traj.q[i].w == b.traj.q[i].w);
            CHECK(a.traj.q[i].x == b.traj.q[i].x);
            CHECK(a.traj.q[i].y == b.traj.q[i].y);
            CHECK(a.traj.q[i].z == b.traj.q[i].z);
        }
    }
}

TEST_CASE("complementary blend degeneracies") {
    SynthConfig cfg = wobble_cfg(1, 5.0);
    Trajectory truth = generate_truth(cfg);
    Trial trial = synthesize_marg(truth, cfg);

    SUBCASE("alpha = 1 reproduces the integral filter") {
        RecurrentModel m = make_model(ArchKind::complementary, CellKind::lstm,
                                      OutputRepr::quaternion, 1, 1, {8}, 5);
        randomize(m, 126, 0.2);
        m.alpha = 1.0;
        NnOutput out = nn_forward(m, trial);

        FilterConfig f = m.cff_filter;
        f.kind = FilterKind::integral;
        Trajectory integral = fuse_body_serial(trial, f).traj;
        for (int ti = 0; ti < out.traj.n_samples(); ++ti)
            CHECK(qad(out.traj.at(ti, 0), integral.at(ti, 0)) < 1e-12);
    }
    SUBCASE("alpha = 0 reproduces the network prediction") {
        RecurrentModel comp = make_model(ArchKind::complementary, CellKind::lstm,
                                         OutputRepr::quaternion, 1, 1, {8}, 5);
        RecurrentModel free = make_model(ArchKind::model_free, CellKind::lstm,
                                         OutputRepr::quaternion, 1, 1, {8}, 5);
        REQUIRE(comp.n_params() == free.n_params());  // same seed, same shapes
        randomize(comp, 127, 0.2);
        free.params = comp.params;
        comp.alpha = 0.0;
        NnOutput a = nn_forward(comp, trial);
        NnOutput b = nn_forward(free, trial);
        for (int ti = 0; ti < a.traj.n_samples(); ++ti)
            CHECK(qad(a.traj.at(ti, 0), b.traj.at(ti, 0)) < 1e-12);
    }
}

TEST_CASE("hybrid architectures") {
    SynthConfig cfg = wobble_cfg(2, 5.0);
    Trajectory truth = generate_truth(cfg);
    Trial trial = synthesize_marg(truth, cfg);
    FilterConfig fcfg;  // madgwick w/ mag

    SUBCASE("zero-initialized residual head reproduces the filter exactly") {
        RecurrentModel m = make_model(ArchKind::cff_detached, CellKind::lstm,
                                      OutputRepr::quaternion, 2, 2, {8}, 5, true, 0.2, fcfg);
        NnOutput out = nn_forward(m, trial);
        Trajectory filt = fuse_body_serial(trial, fcfg).traj;
        for (std::size_t i = 0; i < out.traj.q.size(); ++i)
            CHECK(qad(out.traj.q[i], filt.q[i]) < 1e-9);
    }
    SUBCASE("detached: a constant residual composes with the unchanged filter stream") {
        RecurrentModel m = make_model(ArchKind::cff_detached, CellKind::lstm,
                                      OutputRepr::quaternion, 2, 2, {8}, 5, true, 0.2, fcfg);
        // force a constant 12 degree residual via the output bias
        Vec3 v = normalized(Vec3{1, 0.2, -0.4}) * (12.0 * M_PI / 180 / 2);
        NamedTensor& b2 = m.tensor("head.b2");
        for (int s = 0; s < 2; ++s) {
            b2.data[3 * s + 0] = v.x;
            b2.data[3 * s + 1] = v.y;
            b2.data[3 * s + 2] = v.z;
        }
        Quat residual = decode_residual(&b2.data[0]);
        NnOutput out = nn_forward(m, trial);
        Trajectory filt = fuse_body_serial(trial, fcfg).traj;
        for (std::size_t i = 0; i < out.traj.q.size(); ++i) {
            Quat expect = quat_multiply(residual, filt.q[i]);
            CHECK(qad(out.traj.q[i], expect) < 1e-9);
        }
    }
    SUBCASE("feedback: the same constant residual bends the filter stream") {
        RecurrentModel m = make_model(ArchKind::cff_feedback, CellKind::lstm,
                                      OutputRepr::quaternion, 2, 2, {8}, 5, true, 0.2, fcfg);
        Vec3 v = normalized(Vec3{1, 0.2, -0.4}) * (12.0 * M_PI / 180 / 2);
        NamedTensor& b2 = m.tensor("head.b2");
        for (int s = 0; s < 2; ++s) {
            b2.data[3 * s + 0] = v.x;
            b2.data[3 * s + 1] = v.y;
            b2.data[3 * s + 2] = v.z;
        }
        Quat residual = decode_residual(&b2.data[0]);
        NnOutput out = nn_forward(m, trial);
        Trajectory filt = fuse_body_serial(trial, fcfg).traj;
        double max_diff = 0;
        for (int ti = 1; ti < out.traj.n_samples(); ++ti) {
            Quat detached_like = quat_multiply(residual, filt.at(ti, 0));
            max_diff = std::max(max_diff, qad_deg(out.traj.at(ti, 0), detached_like));
        }
        CHECK(max_diff > 1.0);  // feedback visibly diverges from the detached composition
    }
    SUBCASE("wrong sensor count is a contract error") {
        RecurrentModel m = make_model(ArchKind::cff_detached, CellKind::lstm,
                                      OutputRepr::quaternion, 3, 3, {8}, 5, true, 0.2, fcfg);
        CHECK_THROWS_AS(nn_forward(m, trial), ContractError);
    }
}

TEST_CASE("checkpoint round trip preserves weights and outputs") {
    namespace fs = std::filesystem;
    SynthConfig cfg = wobble_cfg(2, 3.0);
    Trajectory truth = generate_truth(cfg);
    Trial trial = synthesize_marg(truth, cfg);

    RecurrentModel m = make_model(ArchKind::cff_detached, CellKind::gru, OutputRepr::quaternion,
                                  2, 2, {8, 6}, 17);
    randomize(m, 128, 0.1);
    m.norm_mean.assign(m.input_dim(), 0.25);
    m.norm_std.assign(m.input_dim(), 2.0);

    fs::path p = fs::temp_directory_path() / "ipose_ckpt_test.json";
    save_checkpoint(p.string(), m);
    RecurrentModel r = load_checkpoint(p.string());
    CHECK(r.cell == m.cell);
    CHECK(r.arch == m.arch);
    CHECK(r.hidden == m.hidden);
    REQUIRE(r.n_params() == m.n_params());
    for (std::size_t i = 0; i < m.params.size(); ++i)
        for (std::size_t j = 0; j < m.params[i].data.size(); ++j)
            CHECK(r.params[i].data[j] == m.params[i].data[j]);

    NnOutput a = nn_forward(m, trial);
    NnOutput b = nn_forward(r, trial);
    for (std::size_t i = 0; i < a.traj.q.size(); ++i) CHECK(a.traj.q[i].w == b.traj.q[i].w);
    fs::remove(p);
}
