#include "ipose/nn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "ipose/errors.hpp"
#include "ipose/io.hpp"

namespace ipose::nn {

using nlohmann::json;

std::string to_string(CellKind k) {
    switch (k) {
        case CellKind::rnn: return "rnn";
        case CellKind::gru: return "gru";
        case CellKind::lstm: return "lstm";
    }
    return "lstm";
}

std::string to_string(OutputRepr r) {
    switch (r) {
        case OutputRepr::euler: return "euler";
        case OutputRepr::quaternion: return "quaternion";
        case OutputRepr::repr6d: return "repr6d";
    }
    return "quaternion";
}

std::string to_string(ArchKind a) {
    switch (a) {
        case ArchKind::model_free: return "model_free";
        case ArchKind::complementary: return "complementary";
        case ArchKind::cff_detached: return "cff_detached";
        case ArchKind::cff_feedback: return "cff_feedback";
    }
    return "model_free";
}

CellKind cell_kind_from_string(const std::string& s) {
    if (s == "rnn") return CellKind::rnn;
    if (s == "gru") return CellKind::gru;
    if (s == "lstm") return CellKind::lstm;
    throw ParseError("unknown cell kind: " + s);
}

OutputRepr output_repr_from_string(const std::string& s) {
    if (s == "euler") return OutputRepr::euler;
    if (s == "quaternion") return OutputRepr::quaternion;
    if (s == "repr6d") return OutputRepr::repr6d;
    throw ParseError("unknown output representation: " + s);
}

ArchKind arch_kind_from_string(const std::string& s) {
    if (s == "model_free") return ArchKind::model_free;
    if (s == "complementary") return ArchKind::complementary;
    if (s == "cff_detached") return ArchKind::cff_detached;
    if (s == "cff_feedback") return ArchKind::cff_feedback;
    throw ParseError("unknown architecture: " + s);
}

bool is_cff(ArchKind a) { return a == ArchKind::cff_detached || a == ArchKind::cff_feedback; }

int RecurrentModel::input_dim() const {
    int d = marg_dim_per_sensor() * n_sensors;
    if (is_cff(arch)) d += 4 * n_segments;
    return d;
}

int RecurrentModel::out_dim_per_segment() const {
    if (is_cff(arch)) return 3;  // exp-map residual
    switch (repr) {
        case OutputRepr::euler: return 3;
        case OutputRepr::quaternion: return 4;
        case OutputRepr::repr6d: return 6;
    }
    return 4;
}

NamedTensor& RecurrentModel::tensor(const std::string& name) {
    for (NamedTensor& t : params)
        if (t.name == name) return t;
    throw ContractError("model: no tensor named " + name);
}

const NamedTensor& RecurrentModel::tensor(const std::string& name) const {
    for (const NamedTensor& t : params)
        if (t.name == name) return t;
    throw ContractError("model: no tensor named " + name);
}

std::size_t RecurrentModel::n_params() const {
    std::size_t n = 0;
    for (const NamedTensor& t : params) n += t.data.size();
    return n;
}

void RecurrentModel::check_finite() const {
    for (const NamedTensor& t : params)
        for (double v : t.data)
            if (!std::isfinite(v)) throw DomainError("model: non-finite value in tensor " + t.name);
}

RecurrentModel make_model(ArchKind arch, CellKind cell, OutputRepr repr, int n_sensors,
                          int n_segments, const std::vector<int>& hidden, std::uint64_t seed,
                          bool use_mag, double dropout, const FilterConfig& cff_filter,
                          bool alpha_learnable) {
    if (n_sensors <= 0 || n_segments <= 0) throw ContractError("make_model: need sensors and segments");
    if (hidden.empty()) throw ContractError("make_model: need at least one hidden layer");
    RecurrentModel m;
    m.arch = arch;
    m.cell = cell;
    m.repr = repr;
    m.use_mag = use_mag;
    m.n_sensors = n_sensors;
    m.n_segments = n_segments;
    m.hidden = hidden;
    m.dropout = dropout;
    m.cff_filter = cff_filter;
    m.alpha_learnable = alpha_learnable;

    std::mt19937_64 rng(seed);
    auto add = [&](const std::string& name, int rows, int cols, double scale) {
        NamedTensor t;
        t.name = name;
        t.rows = rows;
        t.cols = cols;
        t.data.resize(static_cast<std::size_t>(rows) * cols);
        if (scale > 0) {
            std::uniform_real_distribution<double> u(-scale, scale);
            for (double& v : t.data) v = u(rng);
        }
        m.params.push_back(std::move(t));
    };

    int in = m.input_dim();
    const int gates = m.n_gates();
    for (std::size_t l = 0; l < hidden.size(); ++l) {
        int h = hidden[l];
        double k = 1.0 / std::sqrt(static_cast<double>(h));
        std::string p = "l" + std::to_string(l) + ".";
        add(p + "W", gates * h, in, k);
        add(p + "U", gates * h, h, k);
        add(p + "bw", gates * h, 1, k);
        add(p + "bu", gates * h, 1, k);
        in = h;
    }
    int h_last = hidden.back();
    double k = 1.0 / std::sqrt(static_cast<double>(h_last));
    add("head.W1", h_last, h_last, k);
    add("head.b1", h_last, 1, k);
    // Zero head output decodes to the identity orientation (and to an identity
    // residual for the hybrid architectures).
    add("head.W2", m.out_dim_per_segment() * n_segments, h_last, 0.0);
    add("head.b2", m.out_dim_per_segment() * n_segments, 1, 0.0);
    if (m.alpha_learnable && arch == ArchKind::complementary) {
        add("alpha", 1, 1, 0.0);
        m.tensor("alpha").data[0] = std::log(m.alpha / (1.0 - m.alpha));  // sigmoid^-1
    }

    m.norm_mean.assign(m.input_dim(), 0.0);
    m.norm_std.assign(m.input_dim(), 1.0);
    return m;
}

// ---- head decoding -------------------------------------------------------------

Quat decode_head(const double* o, OutputRepr repr) {
    switch (repr) {
        case OutputRepr::quaternion: {
            Quat q{1.0 + o[0], o[1], o[2], o[3]};
            double n = quat_norm(q);
            if (n < 1e-12) return Quat::identity();
            return {q.w / n, q.x / n, q.y / n, q.z / n};
        }
        case OutputRepr::euler:
            return euler_to_quat(o[0], o[1], o[2]);
        case OutputRepr::repr6d: {
            Repr6D r{{1.0 + o[0], o[1], o[2], o[3], 1.0 + o[4], o[5]}};
            Vec3 a{r.v[0], r.v[1], r.v[2]}, b{r.v[3], r.v[4], r.v[5]};
            if (norm(cross(a, b)) <= 1e-9) return Quat::identity();
            return repr6d_to_quat_unchecked(r);
        }
    }
    return Quat::identity();
}

QuatT<Var> decode_head_tape(const Var* o, OutputRepr repr) {
    switch (repr) {
        case OutputRepr::quaternion: {
            QuatT<Var> q{Var(1.0) + o[0], o[1], o[2], o[3]};
            return normalized(q);
        }
        case OutputRepr::euler:
            return euler_to_quat(o[0], o[1], o[2]);
        case OutputRepr::repr6d: {
            Repr6DT<Var> r{{Var(1.0) + o[0], o[1], o[2], o[3], Var(1.0) + o[4], o[5]}};
            return repr6d_to_quat_unchecked(r);
        }
    }
    return QuatT<Var>::identity();
}

Quat decode_residual(const double* v) {
    return quat_exp(Vec3{v[0], v[1], v[2]});
}

QuatT<Var> decode_residual_tape(const Var* v) {
    return quat_exp(Vec3T<Var>{v[0], v[1], v[2]});
}

// ---- plain forward -----------------------------------------------------------------

namespace {

void affine_plain(const NamedTensor& w, const NamedTensor& b, const std::vector<double>& x,
                  std::vector<double>& out) {
    out.resize(w.rows);
    for (int i = 0; i < w.rows; ++i) {
        double acc = b.data[i];
        const double* row = w.data.data() + static_cast<std::size_t>(i) * w.cols;
        for (int j = 0; j < w.cols; ++j) acc += row[j] * x[j];
        out[i] = acc;
    }
}

inline double sigmoid_d(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

void cell_forward(const RecurrentModel& m, const std::vector<double>& input, EvalState& state,
                  std::vector<double>& head_out) {
    if (static_cast<int>(input.size()) != m.input_dim())
        throw ContractError("cell_forward: input width " + std::to_string(input.size()) +
                            " does not match model input dim " + std::to_string(m.input_dim()));
    if (state.h.empty()) {
        state.h.resize(m.hidden.size());
        state.c.resize(m.hidden.size());
        for (std::size_t l = 0; l < m.hidden.size(); ++l) {
            state.h[l].assign(m.hidden[l], 0.0);
            state.c[l].assign(m.hidden[l], 0.0);
        }
    }
    std::vector<double> x = input, pw, pu;
    for (std::size_t l = 0; l < m.hidden.size(); ++l) {
        const int h = m.hidden[l];
        std::string p = "l" + std::to_string(l) + ".";
        affine_plain(m.tensor(p + "W"), m.tensor(p + "bw"), x, pw);
        affine_plain(m.tensor(p + "U"), m.tensor(p + "bu"), state.h[l], pu);
        std::vector<double>& hv = state.h[l];
        switch (m.cell) {
            case CellKind::rnn:
                for (int i = 0; i < h; ++i) hv[i] = std::tanh(pw[i] + pu[i]);
                break;
            case CellKind::gru:
                for (int i = 0; i < h; ++i) {
                    double r = sigmoid_d(pw[i] + pu[i]);
                    double z = sigmoid_d(pw[h + i] + pu[h + i]);
                    double n = std::tanh(pw[2 * h + i] + r * pu[2 * h + i]);
                    hv[i] = (1.0 - z) * n + z * hv[i];
                }
                break;
            case CellKind::lstm:
                for (int i = 0; i < h; ++i) {
                    double ig = sigmoid_d(pw[i] + pu[i]);
                    double fg = sigmoid_d(pw[h + i] + pu[h + i]);
                    double gg = std::tanh(pw[2 * h + i] + pu[2 * h + i]);
                    double og = sigmoid_d(pw[3 * h + i] + pu[3 * h + i]);
                    state.c[l][i] = fg * state.c[l][i] + ig * gg;
                    hv[i] = og * std::tanh(state.c[l][i]);
                }
                break;
        }
        x = hv;
    }
    std::vector<double> y1;
    affine_plain(m.tensor("head.W1"), m.tensor("head.b1"), x, y1);
    for (double& v : y1) v = v > 0 ? v : 0.0;
    affine_plain(m.tensor("head.W2"), m.tensor("head.b2"), y1, head_out);
}

// ---- incremental runner ----------------------------------------------------------------

namespace {

void assemble_marg_features(const RecurrentModel& m, const Trial& trial, int ti,
                            std::vector<double>& f) {
    f.clear();
    for (int s = 0; s < trial.n_sensors; ++s) {
        const MargReading& r = trial.reading(ti, s);
        f.insert(f.end(), {r.accel.x, r.accel.y, r.accel.z, r.gyro.x, r.gyro.y, r.gyro.z});
        if (m.use_mag) f.insert(f.end(), {r.mag.x, r.mag.y, r.mag.z});
    }
}

void normalize_features(const RecurrentModel& m, std::vector<double>& f) {
    for (std::size_t i = 0; i < f.size(); ++i) {
        double sd = m.norm_std[i];
        f[i] = (f[i] - m.norm_mean[i]) / (sd > 1e-8 ? sd : 1.0);
    }
}

}  // namespace

NnRunner::NnRunner(const RecurrentModel& m, const Trial& trial) : model_(m), trial_(trial) {
    trial.validate();
    if (trial.n_sensors != m.n_sensors)
        throw ContractError("nn runner: trial has " + std::to_string(trial.n_sensors) +
                            " sensors, model expects " + std::to_string(m.n_sensors));
    m.check_finite();
    reset();
}

void NnRunner::reset() {
    state_ = EvalState{};
    out_.assign(model_.n_segments, Quat::identity());
    q_int_.clear();
    filter_.clear();
}

const std::vector<Quat>& NnRunner::step(int t) {
    const RecurrentModel& m = model_;
    assemble_marg_features(m, trial_, t, features_);

    const bool cff = is_cff(m.arch);
    if (cff) {
        if (t == 0 || filter_.empty()) {
            filter_.clear();
            for (int s = 0; s < m.n_segments; ++s)
                filter_.push_back(init_state(trial_.reading(0, s), m.cff_filter));
        } else {
            for (int s = 0; s < m.n_segments; ++s)
                step_filter(filter_[s], trial_.reading(t, s), m.cff_filter);
        }
        for (int s = 0; s < m.n_segments; ++s) {
            const Quat& q = filter_[s].q;
            features_.insert(features_.end(), {q.w, q.x, q.y, q.z});
        }
    }
    normalize_features(m, features_);
    cell_forward(m, features_, state_, head_out_);

    const int od = m.out_dim_per_segment();
    if (m.arch == ArchKind::model_free) {
        for (int s = 0; s < m.n_segments; ++s) out_[s] = decode_head(&head_out_[s * od], m.repr);
    } else if (m.arch == ArchKind::complementary) {
        if (t == 0 || q_int_.empty()) {
            q_int_.assign(m.n_segments, Quat::identity());
            for (int s = 0; s < m.n_segments; ++s)
                q_int_[s] = init_state(trial_.reading(0, s), m.cff_filter).q;
        } else {
            for (int s = 0; s < m.n_segments; ++s)
                q_int_[s] = integrate_gyro(q_int_[s], trial_.reading(t, s).gyro, m.cff_filter.dt);
        }
        double alpha = m.alpha;
        if (m.alpha_learnable) alpha = sigmoid_d(m.tensor("alpha").data[0]);
        for (int s = 0; s < m.n_segments; ++s) {
            Quat qn = decode_head(&head_out_[s * od], m.repr);
            if (quat_dot(q_int_[s], qn) < 0) qn = {-qn.w, -qn.x, -qn.y, -qn.z};
            Quat blend{alpha * q_int_[s].w + (1 - alpha) * qn.w,
                       alpha * q_int_[s].x + (1 - alpha) * qn.x,
                       alpha * q_int_[s].y + (1 - alpha) * qn.y,
                       alpha * q_int_[s].z + (1 - alpha) * qn.z};
            out_[s] = normalized(blend);
            q_int_[s] = out_[s];  // the integration branch continues from the blend
        }
    } else {
        for (int s = 0; s < m.n_segments; ++s) {
            Quat residual = decode_residual(&head_out_[s * od]);
            Quat corrected = normalized(quat_multiply_raw(residual, filter_[s].q));
            out_[s] = corrected;
            if (m.arch == ArchKind::cff_feedback) filter_[s].q = corrected;
        }
    }
    return out_;
}

NnOutput nn_forward(const RecurrentModel& m, const Trial& trial) {
    NnRunner runner(m, trial);
    NnOutput out;
    out.traj.n_segments = m.n_segments;
    out.traj.t = trial.t;
    out.traj.q.assign(static_cast<std::size_t>(trial.n_samples()) * m.n_segments, Quat::identity());

    const bool monitor = m.arch == ArchKind::cff_feedback && trial.has_truth();
    const int window = 50;
    std::vector<double> recent;
    for (int t = 0; t < trial.n_samples(); ++t) {
        const std::vector<Quat>& q = runner.step(t);
        for (int s = 0; s < m.n_segments; ++s) out.traj.at(t, s) = q[s];
        if (monitor) {
            double mean = 0;
            for (int s = 0; s < m.n_segments; ++s) mean += qad_deg(trial.truth_at(t, s), q[s]);
            mean /= m.n_segments;
            recent.push_back(mean);
            if (static_cast<int>(recent.size()) > window) recent.erase(recent.begin());
            double wmean = 0;
            for (double v : recent) wmean += v;
            wmean /= recent.size();
            if (static_cast<int>(recent.size()) == window && wmean > 150.0) {
                out.diverged = true;
                out.diverged_at = t;
                for (int tt = t + 1; tt < trial.n_samples(); ++tt)
                    for (int s = 0; s < m.n_segments; ++s) out.traj.at(tt, s) = q[s];
                break;
            }
        }
    }
    return out;
}

// ---- tape rollout -------------------------------------------------------------------------

std::vector<Var> insert_params(Tape& tape, const RecurrentModel& m) {
    std::vector<Var> vars;
    vars.reserve(m.n_params());
    for (const NamedTensor& t : m.params)
        for (double v : t.data) vars.push_back(make_leaf(tape, v));
    return vars;
}

namespace {

struct TensorView {
    const Var* data;
    int rows, cols;
};

struct TapeWeights {
    std::vector<TensorView> views;
    std::vector<std::string> names;

    const TensorView& view(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return views[i];
        throw ContractError("tape weights: no tensor named " + name);
    }
};

TapeWeights make_views(const RecurrentModel& m, const std::vector<Var>& params) {
    TapeWeights w;
    std::size_t off = 0;
    for (const NamedTensor& t : m.params) {
        w.views.push_back({params.data() + off, t.rows, t.cols});
        w.names.push_back(t.name);
        off += t.data.size();
    }
    if (off != params.size()) throw ContractError("tape weights: parameter count mismatch");
    return w;
}

void affine_tape(Tape& tape, const TensorView& w, const TensorView& b, const std::vector<Var>& x,
                 std::vector<Var>& out) {
    if (static_cast<int>(x.size()) != w.cols) throw ContractError("affine_tape: width mismatch");
    out.clear();
    out.reserve(w.rows);
    for (int i = 0; i < w.rows; ++i) {
        const Var* row = w.data + static_cast<std::size_t>(i) * w.cols;
        double acc = b.data[i].value();
        for (int j = 0; j < w.cols; ++j) acc += row[j].value() * x[j].value();
        tape.begin(acc);
        for (int j = 0; j < w.cols; ++j) {
            tape.edge(x[j].id, row[j].value());
            tape.edge(row[j].id, x[j].value());
        }
        tape.edge(b.data[i].id, 1.0);
        out.push_back(Var(&tape, tape.end()));
    }
}

}  // namespace

DropoutPlan make_dropout_plan(const RecurrentModel& m, int t_begin, int t_end, std::uint64_t seed) {
    DropoutPlan plan;
    if (m.dropout <= 0.0) return plan;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int T = t_end - t_begin;
    const int L = static_cast<int>(m.hidden.size());
    plan.masks.resize(static_cast<std::size_t>(T) * L);
    const double keep = 1.0 - m.dropout;
    for (int t = 0; t < T; ++t)
        for (int l = 0; l < L; ++l) {
            std::vector<double>& mask = plan.masks[static_cast<std::size_t>(t) * L + l];
            mask.resize(m.hidden[l]);
            for (double& v : mask) v = u(rng) < keep ? 1.0 / keep : 0.0;
        }
    return plan;
}

std::vector<QuatT<Var>> rollout_tape(Tape& tape, const RecurrentModel& m, const Trial& trial,
                                     int t_begin, int t_end, const std::vector<Var>& params,
                                     const DropoutPlan* dropout) {
    trial.validate();
    if (t_begin < 0 || t_end > trial.n_samples() || t_begin >= t_end)
        throw ContractError("rollout_tape: bad window");
    if (trial.n_sensors != m.n_sensors) throw ContractError("rollout_tape: sensor count mismatch");
    TapeWeights weights = make_views(m, params);
    const bool cff = is_cff(m.arch);
    const int L = static_cast<int>(m.hidden.size());
    const int od = m.out_dim_per_segment();

    // Detached hybrid: the filter runs ahead of the network, off the tape.
    Trajectory detached;
    if (m.arch == ArchKind::cff_detached) detached = fuse_body(trial, m.cff_filter, false).traj;

    // Feedback hybrid: differentiable filter state on the tape.
    std::vector<QuatT<Var>> fb_q(m.n_segments, QuatT<Var>::identity());
    std::vector<Vec3T<Var>> fb_ie(m.n_segments, Vec3T<Var>{Var(0.0), Var(0.0), Var(0.0)});
    // Complementary: integration branch state.
    std::vector<QuatT<Var>> q_int(m.n_segments, QuatT<Var>::identity());
    if (m.arch == ArchKind::cff_feedback || m.arch == ArchKind::complementary) {
        for (int s = 0; s < m.n_segments; ++s) {
            Quat q0 = init_state(trial.reading(t_begin, s), m.cff_filter).q;
            QuatT<Var> v{Var(q0.w), Var(q0.x), Var(q0.y), Var(q0.z)};
            if (m.arch == ArchKind::cff_feedback)
                fb_q[s] = v;
            else
                q_int[s] = v;
        }
    }

    std::vector<std::vector<Var>> h(L), c(L);
    for (int l = 0; l < L; ++l) {
        h[l].assign(m.hidden[l], Var(0.0));
        c[l].assign(m.hidden[l], Var(0.0));
        for (int i = 0; i < m.hidden[l]; ++i) {
            h[l][i] = make_leaf(tape, 0.0);
            c[l][i] = make_leaf(tape, 0.0);
        }
    }

    Var alpha(m.alpha);
    if (m.alpha_learnable && m.arch == ArchKind::complementary) {
        const TensorView& av = weights.view("alpha");
        alpha = sigmoid(av.data[0]);
    }

    std::vector<QuatT<Var>> outputs;
    outputs.reserve(static_cast<std::size_t>(t_end - t_begin) * m.n_segments);
    std::vector<double> raw;
    std::vector<Var> x, pw, pu, y1, head;

    for (int t = t_begin; t < t_end; ++t) {
        // raw marg features
        raw.clear();
        for (int s = 0; s < m.n_sensors; ++s) {
            const MargReading& r = trial.reading(t, s);
            raw.insert(raw.end(), {r.accel.x, r.accel.y, r.accel.z, r.gyro.x, r.gyro.y, r.gyro.z});
            if (m.use_mag) raw.insert(raw.end(), {r.mag.x, r.mag.y, r.mag.z});
        }
        x.clear();
        for (std::size_t i = 0; i < raw.size(); ++i) {
            double sd = m.norm_std[i];
            x.push_back(make_leaf(tape, (raw[i] - m.norm_mean[i]) / (sd > 1e-8 ? sd : 1.0)));
        }

        if (cff) {
            if (m.arch == ArchKind::cff_feedback && t > t_begin) {
                for (int s = 0; s < m.n_segments; ++s) {
                    const MargReading& r = trial.reading(t, s);
                    Vec3T<Var> a{Var(r.accel.x), Var(r.accel.y), Var(r.accel.z)};
                    Vec3T<Var> g{Var(r.gyro.x), Var(r.gyro.y), Var(r.gyro.z)};
                    Vec3T<Var> mg{Var(r.mag.x), Var(r.mag.y), Var(r.mag.z)};
                    step_filter_g(fb_q[s], fb_ie[s], a, g, mg, m.cff_filter);
                }
            }
            const std::size_t base = raw.size();
            for (int s = 0; s < m.n_segments; ++s) {
                Var comps[4];
                if (m.arch == ArchKind::cff_detached) {
                    const Quat& q = detached.at(t, s);
                    comps[0] = make_leaf(tape, q.w);
                    comps[1] = make_leaf(tape, q.x);
                    comps[2] = make_leaf(tape, q.y);
                    comps[3] = make_leaf(tape, q.z);
                } else {
                    comps[0] = fb_q[s].w;
                    comps[1] = fb_q[s].x;
                    comps[2] = fb_q[s].y;
                    comps[3] = fb_q[s].z;
                }
                for (int k = 0; k < 4; ++k) {
                    std::size_t fi = base + static_cast<std::size_t>(s) * 4 + k;
                    double sd = m.norm_std[fi];
                    Var lifted = comps[k].is_const() ? make_leaf(tape, comps[k].cval) : comps[k];
                    x.push_back((lifted - Var(m.norm_mean[fi])) / Var(sd > 1e-8 ? sd : 1.0));
                }
            }
        }

        // recurrent layers; dropout applies to the activations passed upward,
        // not to the recurrent state itself
        for (int l = 0; l < L; ++l) {
            const int hw = m.hidden[l];
            std::string p = "l" + std::to_string(l) + ".";
            affine_tape(tape, weights.view(p + "W"), weights.view(p + "bw"), x, pw);
            affine_tape(tape, weights.view(p + "U"), weights.view(p + "bu"), h[l], pu);
            switch (m.cell) {
                case CellKind::rnn:
                    for (int i = 0; i < hw; ++i) h[l][i] = tanh(pw[i] + pu[i]);
                    break;
                case CellKind::gru:
                    for (int i = 0; i < hw; ++i) {
                        Var r = sigmoid(pw[i] + pu[i]);
                        Var z = sigmoid(pw[hw + i] + pu[hw + i]);
                        Var n = tanh(pw[2 * hw + i] + r * pu[2 * hw + i]);
                        h[l][i] = (Var(1.0) - z) * n + z * h[l][i];
                    }
                    break;
                case CellKind::lstm:
                    for (int i = 0; i < hw; ++i) {
                        Var ig = sigmoid(pw[i] + pu[i]);
                        Var fg = sigmoid(pw[hw + i] + pu[hw + i]);
                        Var gg = tanh(pw[2 * hw + i] + pu[2 * hw + i]);
                        Var og = sigmoid(pw[3 * hw + i] + pu[3 * hw + i]);
                        c[l][i] = fg * c[l][i] + ig * gg;
                        h[l][i] = og * tanh(c[l][i]);
                    }
                    break;
            }
            x = h[l];
            if (dropout && !dropout->masks.empty()) {
                const std::vector<double>& mask =
                    dropout->masks[static_cast<std::size_t>(t - t_begin) * L + l];
                for (int i = 0; i < hw; ++i) x[i] = x[i] * Var(mask[i]);
            }
        }

        affine_tape(tape, weights.view("head.W1"), weights.view("head.b1"), x, y1);
        for (Var& v : y1) v = relu(v);
        affine_tape(tape, weights.view("head.W2"), weights.view("head.b2"), y1, head);

        for (int s = 0; s < m.n_segments; ++s) {
            QuatT<Var> q_out;
            if (cff) {
                QuatT<Var> residual = decode_residual_tape(&head[s * od]);
                QuatT<Var> qf;
                if (m.arch == ArchKind::cff_detached) {
                    const Quat& q = detached.at(t, s);
                    qf = {Var(q.w), Var(q.x), Var(q.y), Var(q.z)};
                } else {
                    qf = fb_q[s];
                }
                q_out = normalized(quat_multiply_raw(residual, qf));
                if (m.arch == ArchKind::cff_feedback) fb_q[s] = q_out;
            } else if (m.arch == ArchKind::complementary) {
                if (t > t_begin) {
                    const MargReading& r = trial.reading(t, s);
                    Vec3T<Var> g{Var(r.gyro.x), Var(r.gyro.y), Var(r.gyro.z)};
                    q_int[s] = integrate_gyro(q_int[s], g, m.cff_filter.dt);
                }
                QuatT<Var> qn = decode_head_tape(&head[s * od], m.repr);
                if (quat_dot(q_int[s], qn).value() < 0.0)
                    qn = {Var(0.0) - qn.w, Var(0.0) - qn.x, Var(0.0) - qn.y, Var(0.0) - qn.z};
                Var ia = Var(1.0) - alpha;
                QuatT<Var> blend{alpha * q_int[s].w + ia * qn.w, alpha * q_int[s].x + ia * qn.x,
                                 alpha * q_int[s].y + ia * qn.y, alpha * q_int[s].z + ia * qn.z};
                q_out = normalized(blend);
                q_int[s] = q_out;
            } else {
                q_out = decode_head_tape(&head[s * od], m.repr);
            }
            outputs.push_back(q_out);
        }
    }
    return outputs;
}

// ---- checkpoints ------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const RecurrentModel& m) {
    json j;
    j["format"] = "ipose-model";
    j["version"] = 1;
    j["arch"] = to_string(m.arch);
    j["cell"] = to_string(m.cell);
    j["repr"] = to_string(m.repr);
    j["use_mag"] = m.use_mag;
    j["n_sensors"] = m.n_sensors;
    j["n_segments"] = m.n_segments;
    j["hidden"] = m.hidden;
    j["dropout"] = m.dropout;
    j["alpha"] = m.alpha;
    j["alpha_learnable"] = m.alpha_learnable;
    j["cff_filter"] = {{"kind", to_string(m.cff_filter.kind)},
                       {"use_mag", m.cff_filter.use_mag},
                       {"beta", m.cff_filter.beta},
                       {"kp", m.cff_filter.kp},
                       {"ki", m.cff_filter.ki},
                       {"band_min", m.cff_filter.band_min},
                       {"band_max", m.cff_filter.band_max},
                       {"dt", m.cff_filter.dt}};
    j["norm_mean"] = m.norm_mean;
    j["norm_std"] = m.norm_std;
    j["params"] = json::array();
    for (const NamedTensor& t : m.params)
        j["params"].push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"data", t.data}});
    atomic_write(path, j.dump() + "\n");
}

RecurrentModel load_checkpoint(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (j.value("format", "") != "ipose-model" || j.value("version", 0) != 1)
        throw ParseError(path + ": not a version-1 model checkpoint");
    RecurrentModel m;
    m.arch = arch_kind_from_string(j.at("arch").get<std::string>());
    m.cell = cell_kind_from_string(j.at("cell").get<std::string>());
    m.repr = output_repr_from_string(j.at("repr").get<std::string>());
    m.use_mag = j.value("use_mag", true);
    m.n_sensors = j.at("n_sensors").get<int>();
    m.n_segments = j.at("n_segments").get<int>();
    m.hidden = j.at("hidden").get<std::vector<int>>();
    m.dropout = j.value("dropout", 0.2);
    m.alpha = j.value("alpha", 0.98);
    m.alpha_learnable = j.value("alpha_learnable", false);
    if (j.contains("cff_filter")) {
        const json& f = j["cff_filter"];
        m.cff_filter.kind = filter_kind_from_string(f.value("kind", "madgwick"));
        m.cff_filter.use_mag = f.value("use_mag", true);
        m.cff_filter.beta = f.value("beta", 0.1);
        m.cff_filter.kp = f.value("kp", 1.0);
        m.cff_filter.ki = f.value("ki", 0.1);
        m.cff_filter.band_min = f.value("band_min", 0.7);
        m.cff_filter.band_max = f.value("band_max", 1.3);
        m.cff_filter.dt = f.value("dt", 1.0 / 60.0);
    }
    m.norm_mean = j.at("norm_mean").get<std::vector<double>>();
    m.norm_std = j.at("norm_std").get<std::vector<double>>();
    for (const auto& e : j.at("params")) {
        NamedTensor t;
        t.name = e.at("name").get<std::string>();
        t.rows = e.at("rows").get<int>();
        t.cols = e.at("cols").get<int>();
        t.data = e.at("data").get<std::vector<double>>();
        if (static_cast<int>(t.data.size()) != t.rows * t.cols)
            throw ParseError(path + ": tensor " + t.name + " has wrong element count");
        m.params.push_back(std::move(t));
    }
    m.check_finite();
    return m;
}

}  // namespace ipose::nn
