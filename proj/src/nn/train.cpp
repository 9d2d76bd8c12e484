#include "ipose/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ipose/errors.hpp"
#include "ipose/io.hpp"

namespace ipose::nn {

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::qad: return "qad";
        case LossKind::mse: return "mse";
        case LossKind::qdist: return "qdist";
        case LossKind::relqad: return "relqad";
    }
    return "qad";
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "qad") return LossKind::qad;
    if (s == "mse") return LossKind::mse;
    if (s == "qdist") return LossKind::qdist;
    if (s == "relqad") return LossKind::relqad;
    throw ParseError("unknown loss: " + s);
}

void TrainConfig::validate() const {
    if (!(lr_initial > 0) || !(lr_final > 0)) throw ContractError("train config: learning rates must be positive");
    if (!(clip_min < clip_max)) throw ContractError("train config: clip_min must be < clip_max");
    if (epochs < 1) throw ContractError("train config: epochs must be >= 1");
    if (warmup_epochs < 0 || warmup_epochs >= epochs + 1)
        throw ContractError("train config: bad warmup length");
    if (batch_size < 1) throw ContractError("train config: batch size must be >= 1");
    if (window < 0) throw ContractError("train config: window must be >= 0 (0 = full)");
}

double lr_schedule(const TrainConfig& cfg, int epoch) {
    const double peak = cfg.lr_initial, final = cfg.lr_final;
    const int peak_epoch = std::max(0, cfg.warmup_epochs - 1);
    if (epoch < peak_epoch) return peak * (epoch + 1) / cfg.warmup_epochs;
    const int span = (cfg.epochs - 1) - peak_epoch;
    if (span <= 0) return epoch >= cfg.epochs - 1 ? final : peak;
    double u = static_cast<double>(epoch - peak_epoch) / span;
    u = std::clamp(u, 0.0, 1.0);
    return final + (peak - final) * 0.5 * (1.0 + std::cos(M_PI * u));
}

double augmentation_strength(const TrainConfig& cfg, int epoch) {
    if (!cfg.augment) return 0.0;
    double ramp = cfg.epochs <= 1 ? 1.0 : static_cast<double>(epoch) / (cfg.epochs - 1);
    return ramp * cfg.aug_max_strength;
}

// ---- loss on the tape -----------------------------------------------------------------

Var tape_loss(Tape& tape, const RecurrentModel& m, const Trial& trial, int t_begin, int t_end,
              LossKind loss, const std::vector<Var>& params, const DropoutPlan* dropout,
              double divergence_qad_deg) {
    if (!trial.has_truth()) throw ContractError("tape_loss: trial has no ground truth");
    std::vector<QuatT<Var>> outputs = rollout_tape(tape, m, trial, t_begin, t_end, params, dropout);
    const int S = m.n_segments;
    const int T = t_end - t_begin;

    const bool monitor = divergence_qad_deg > 0 && m.arch == ArchKind::cff_feedback;
    const int div_window = 50;
    std::vector<double> recent;

    Var acc(0.0);
    for (int t = 0; t < T; ++t) {
        const Quat* root_t = nullptr;
        const QuatT<Var>* root_p = nullptr;
        if (loss == LossKind::relqad) {
            root_t = &trial.truth_at(t_begin + t, 0);
            root_p = &outputs[static_cast<std::size_t>(t) * S + 0];
        }
        double step_mean_deg = 0;
        for (int s = 0; s < S; ++s) {
            const Quat& gt = trial.truth_at(t_begin + t, s);
            const QuatT<Var>& pred = outputs[static_cast<std::size_t>(t) * S + s];
            QuatT<Var> target{Var(gt.w), Var(gt.x), Var(gt.y), Var(gt.z)};
            switch (loss) {
                case LossKind::qad:
                    acc += qad_loss(target, pred);
                    break;
                case LossKind::mse:
                    acc += mse_loss(target, pred);
                    break;
                case LossKind::qdist:
                    acc += qdist_loss(target, pred);
                    break;
                case LossKind::relqad: {
                    Quat rel_t = normalized(quat_multiply_raw(conjugate(*root_t), gt));
                    QuatT<Var> rel_p = normalized(quat_multiply_raw(conjugate(*root_p), pred));
                    acc += qad_loss(QuatT<Var>{Var(rel_t.w), Var(rel_t.x), Var(rel_t.y), Var(rel_t.z)},
                                    rel_p);
                    break;
                }
            }
            if (monitor) {
                Quat pv{pred.w.value(), pred.x.value(), pred.y.value(), pred.z.value()};
                step_mean_deg += qad_deg(gt, normalized(pv));
            }
        }
        if (monitor) {
            recent.push_back(step_mean_deg / S);
            if (static_cast<int>(recent.size()) > div_window) recent.erase(recent.begin());
            if (static_cast<int>(recent.size()) == div_window) {
                double wmean = 0;
                for (double v : recent) wmean += v;
                wmean /= recent.size();
                if (wmean > divergence_qad_deg)
                    throw DivergenceError("feedback rollout diverged: sliding mean QAD " +
                                          std::to_string(wmean) + " deg at step " +
                                          std::to_string(t_begin + t));
            }
        }
    }
    return acc / Var(static_cast<double>(T) * S);
}

// ---- plain-forward loss -----------------------------------------------------------------

double eval_loss(const RecurrentModel& m, const Trial& trial, LossKind loss) {
    if (!trial.has_truth()) throw ContractError("eval_loss: trial has no ground truth");
    NnOutput out = nn_forward(m, trial);
    const int S = m.n_segments, T = trial.n_samples();
    double acc = 0;
    for (int t = 0; t < T; ++t) {
        for (int s = 0; s < S; ++s) {
            const Quat& gt = trial.truth_at(t, s);
            const Quat& pred = out.traj.at(t, s);
            switch (loss) {
                case LossKind::qad: acc += qad_loss(gt, pred); break;
                case LossKind::mse: acc += mse_loss(gt, pred); break;
                case LossKind::qdist: acc += qdist_loss(gt, pred); break;
                case LossKind::relqad: {
                    Quat rel_t = normalized(quat_multiply_raw(conjugate(trial.truth_at(t, 0)), gt));
                    Quat rel_p = normalized(quat_multiply_raw(conjugate(out.traj.at(t, 0)), pred));
                    acc += qad_loss(rel_t, rel_p);
                    break;
                }
            }
        }
    }
    return acc / (static_cast<double>(T) * S);
}

// ---- augmentation --------------------------------------------------------------------------

void aug_sensor_noise(Trial& t, double accel_std, double gyro_std, double mag_std, bool uniform,
                      std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    // same variance for the uniform variant
    std::uniform_real_distribution<double> uni(-std::sqrt(3.0), std::sqrt(3.0));
    auto draw = [&]() { return uniform ? uni(rng) : gauss(rng); };
    for (MargReading& r : t.data) {
        r.accel = r.accel + Vec3{draw(), draw(), draw()} * accel_std;
        r.gyro = r.gyro + Vec3{draw(), draw(), draw()} * gyro_std;
        r.mag = r.mag + Vec3{draw(), draw(), draw()} * mag_std;
    }
}

void aug_sensor_dropout(Trial& t, int sensor, int t_begin, int t_end) {
    t_begin = std::max(0, t_begin);
    t_end = std::min(t.n_samples(), t_end);
    for (int ti = t_begin; ti < t_end; ++ti) t.reading(ti, sensor) = MargReading{};
}

Trial aug_time_dropout(const Trial& t, const std::vector<int>& drop_steps) {
    if (drop_steps.empty()) return t;
    std::vector<bool> drop(t.n_samples(), false);
    int kept = 0;
    for (int d : drop_steps)
        if (d >= 0 && d < t.n_samples()) drop[d] = true;
    Trial out = t;
    out.t.clear();
    out.data.clear();
    out.truth.clear();
    for (int ti = 0; ti < t.n_samples(); ++ti) {
        if (drop[ti]) continue;
        out.t.push_back(t.t[ti]);
        for (int s = 0; s < t.n_sensors; ++s) {
            out.data.push_back(t.reading(ti, s));
            if (t.has_truth()) out.truth.push_back(t.truth_at(ti, s));
        }
        ++kept;
    }
    if (kept == 0) throw ContractError("aug_time_dropout: cannot drop every step");
    return out;
}

void aug_rotation_offset(Trial& t, int sensor, const Quat& offset) {
    // The sensor's frame is pre-rotated by `offset`; its readings move to the
    // new frame and the ground truth composes the same offset.
    for (int ti = 0; ti < t.n_samples(); ++ti) {
        MargReading& r = t.reading(ti, sensor);
        r.accel = rotate_inverse(offset, r.accel);
        r.gyro = rotate_inverse(offset, r.gyro);
        r.mag = rotate_inverse(offset, r.mag);
        if (t.has_truth())
            t.truth_at(ti, sensor) = normalized(quat_multiply_raw(t.truth_at(ti, sensor), offset));
    }
}

Trial augment(const Trial& t, double strength, std::mt19937_64& rng) {
    if (strength <= 0.0) return t;
    Trial out = t;
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    bool uniform = u01(rng) < 0.5;
    aug_sensor_noise(out, 0.05 * strength, 0.02 * strength, 0.05 * strength, uniform, rng);

    for (int s = 0; s < out.n_sensors; ++s) {
        if (u01(rng) < 0.15 * strength) {
            int len = static_cast<int>(out.n_samples() * (0.1 + 0.4 * u01(rng)));
            int begin = static_cast<int>(u01(rng) * (out.n_samples() - 1));
            aug_sensor_dropout(out, s, begin, begin + std::max(1, len));
        }
    }

    std::vector<int> drops;
    for (int ti = 0; ti < out.n_samples(); ++ti)
        if (u01(rng) < 0.02 * strength) drops.push_back(ti);
    if (static_cast<int>(drops.size()) < out.n_samples()) out = aug_time_dropout(out, drops);

    for (int s = 0; s < out.n_sensors; ++s) {
        if (u01(rng) < 0.3 * strength) {
            double angle = 0.17 * strength * u01(rng);  // up to ~10 deg at full strength
            double z = 2.0 * u01(rng) - 1.0;
            double phi = 2.0 * M_PI * u01(rng);
            double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            Quat offset = from_axis_angle(Vec3{r * std::cos(phi), r * std::sin(phi), z}, angle);
            aug_rotation_offset(out, s, offset);
        }
    }
    return out;
}

// ---- training loop ----------------------------------------------------------------------------

namespace {

std::vector<double> flatten_params(const RecurrentModel& m) {
    std::vector<double> flat;
    flat.reserve(m.n_params());
    for (const NamedTensor& t : m.params) flat.insert(flat.end(), t.data.begin(), t.data.end());
    return flat;
}

void unflatten_params(RecurrentModel& m, const std::vector<double>& flat) {
    std::size_t off = 0;
    for (NamedTensor& t : m.params) {
        std::copy(flat.begin() + off, flat.begin() + off + t.data.size(), t.data.begin());
        off += t.data.size();
    }
}

// Per-feature statistics of the assembled (unnormalized) input stream.
void compute_norm_stats(RecurrentModel& m, const std::vector<Trial>& train_set) {
    const int dim = m.input_dim();
    std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
    std::int64_t n = 0;
    for (const Trial& trial : train_set) {
        Trajectory filt;
        bool cff = m.arch == ArchKind::cff_detached || m.arch == ArchKind::cff_feedback;
        if (cff) filt = fuse_body(trial, m.cff_filter, false).traj;
        for (int ti = 0; ti < trial.n_samples(); ++ti) {
            int k = 0;
            for (int s = 0; s < trial.n_sensors; ++s) {
                const MargReading& r = trial.reading(ti, s);
                double vals[9] = {r.accel.x, r.accel.y, r.accel.z, r.gyro.x, r.gyro.y,
                                  r.gyro.z, r.mag.x, r.mag.y, r.mag.z};
                const int nv = m.use_mag ? 9 : 6;
                for (int i = 0; i < nv; ++i, ++k) {
                    sum[k] += vals[i];
                    sumsq[k] += vals[i] * vals[i];
                }
            }
            if (cff) {
                for (int s = 0; s < m.n_segments; ++s) {
                    const Quat& q = filt.at(ti, s);
                    for (double v : {q.w, q.x, q.y, q.z}) {
                        sum[k] += v;
                        sumsq[k] += v * v;
                        ++k;
                    }
                }
            }
            ++n;
        }
    }
    m.norm_mean.resize(dim);
    m.norm_std.resize(dim);
    for (int i = 0; i < dim; ++i) {
        double mean = sum[i] / n;
        m.norm_mean[i] = mean;
        m.norm_std[i] = std::sqrt(std::max(0.0, sumsq[i] / n - mean * mean));
    }
}

struct WorkItem {
    int trial_idx;
    int t_begin, t_end;
};

}  // namespace

TrainReport train(RecurrentModel& m, const std::vector<Trial>& train_set,
                  const std::vector<Trial>& val_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw ContractError("train: empty training set");
    for (const Trial& t : train_set) {
        t.validate();
        if (!t.has_truth()) throw ContractError("train: training trial lacks ground truth");
        if (t.n_sensors != m.n_sensors) throw ContractError("train: sensor count mismatch");
    }
    m.check_finite();

    compute_norm_stats(m, train_set);

    const std::size_t P = m.n_params();
    std::vector<double> adam_m(P, 0.0), adam_v(P, 0.0), grad_acc(P, 0.0);
    std::int64_t adam_t = 0;

    TrainReport report;
    report.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<double> best_params = flatten_params(m);

    Tape tape;
    std::mt19937_64 rng(cfg.seed);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(cfg, epoch);
        const double aug = augmentation_strength(cfg, epoch);

        // window plan over the (possibly augmented) trials of this epoch
        std::vector<Trial> epoch_trials;
        epoch_trials.reserve(train_set.size());
        for (const Trial& t : train_set)
            epoch_trials.push_back(aug > 0 ? augment(t, aug, rng) : t);

        std::vector<WorkItem> items;
        for (int i = 0; i < static_cast<int>(epoch_trials.size()); ++i) {
            const int T = epoch_trials[i].n_samples();
            if (cfg.window <= 0) {
                items.push_back({i, 0, T});
            } else {
                for (int b = 0; b < T; b += cfg.window)
                    items.push_back({i, b, std::min(T, b + cfg.window)});
            }
        }
        std::shuffle(items.begin(), items.end(), rng);

        double epoch_loss = 0;
        int epoch_items = 0;
        bool stop = false;

        for (std::size_t base = 0; base < items.size() && !stop; base += cfg.batch_size) {
            std::fill(grad_acc.begin(), grad_acc.end(), 0.0);
            int batch_n = 0;
            for (std::size_t k = base; k < std::min(items.size(), base + cfg.batch_size); ++k) {
                const WorkItem& item = items[k];
                const Trial& trial = epoch_trials[item.trial_idx];
                tape.reset();
                std::vector<Var> params = insert_params(tape, m);
                DropoutPlan plan;
                if (m.dropout > 0)
                    plan = make_dropout_plan(m, item.t_begin, item.t_end,
                                             cfg.seed ^ (0x9e3779b97f4a7c15ull * (epoch + 1) + k));
                double loss_val;
                try {
                    Var loss = tape_loss(tape, m, trial, item.t_begin, item.t_end, cfg.loss, params,
                                         m.dropout > 0 ? &plan : nullptr, cfg.divergence_qad_deg);
                    loss_val = loss.value();
                    if (!std::isfinite(loss_val)) {
                        report.halted_non_finite = true;
                        report.note = "non-finite loss at epoch " + std::to_string(epoch) +
                                      "; restored best checkpoint";
                        stop = true;
                        break;
                    }
                    tape.backward(loss.id);
                } catch (const DivergenceError& e) {
                    report.diverged = true;
                    report.note = e.what();
                    stop = true;
                    break;
                }
                for (std::size_t p = 0; p < P; ++p) grad_acc[p] += tape.grad(params[p].id);
                epoch_loss += loss_val;
                ++epoch_items;
                ++batch_n;
            }
            if (stop || batch_n == 0) break;

            // mean gradient, per-element clip, AdamW step
            adam_t += 1;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam_t));
            std::size_t p = 0;
            for (NamedTensor& tsr : m.params) {
                for (double& w : tsr.data) {
                    double g = std::clamp(grad_acc[p] / batch_n, cfg.clip_min, cfg.clip_max);
                    adam_m[p] = cfg.adam_beta1 * adam_m[p] + (1 - cfg.adam_beta1) * g;
                    adam_v[p] = cfg.adam_beta2 * adam_v[p] + (1 - cfg.adam_beta2) * g * g;
                    double mh = adam_m[p] / bc1;
                    double vh = adam_v[p] / bc2;
                    w -= lr * (mh / (std::sqrt(vh) + cfg.adam_eps) + cfg.weight_decay * w);
                    ++p;
                }
            }
        }

        if (report.halted_non_finite || report.diverged) {
            unflatten_params(m, best_params);
            break;
        }

        EpochRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.aug_strength = aug;
        row.train_loss = epoch_items > 0 ? epoch_loss / epoch_items : 0.0;

        double val_loss = 0;
        if (!val_set.empty()) {
            try {
                for (const Trial& t : val_set) val_loss += eval_loss(m, t, cfg.loss);
                val_loss /= val_set.size();
            } catch (const DivergenceError& e) {
                report.diverged = true;
                report.note = e.what();
                unflatten_params(m, best_params);
                break;
            }
        } else {
            val_loss = row.train_loss;
        }
        row.val_loss = val_loss;
        report.rows.push_back(row);

        if (std::isfinite(val_loss) && val_loss < report.best_val_loss) {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best_params = flatten_params(m);
        }
    }

    unflatten_params(m, best_params);  // best checkpoint by validation loss
    return report;
}

void write_train_report_csv(const std::string& path, const TrainReport& r) {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss,lr,aug_strength\n";
    for (const EpochRow& row : r.rows)
        out << row.epoch << ',' << fmt_double(row.train_loss) << ',' << fmt_double(row.val_loss)
            << ',' << fmt_double(row.lr) << ',' << fmt_double(row.aug_strength) << "\n";
    atomic_write(path, out.str());
}

// ---- gradient check ------------------------------------------------------------------------------

GradCheckResult gradient_check(const RecurrentModel& m, const Trial& toy, LossKind loss, double h,
                               int max_checks) {
    RecurrentModel work = m;
    const int T = toy.n_samples();

    Tape tape;
    std::vector<Var> params = insert_params(tape, work);
    Var l = tape_loss(tape, work, toy, 0, T, loss, params, nullptr, 0.0);
    tape.backward(l.id);
    std::vector<double> analytic(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) analytic[i] = tape.grad(params[i].id);

    std::vector<double> flat = flatten_params(work);
    auto loss_at = [&](const std::vector<double>& values) {
        unflatten_params(work, values);
        Tape t2;
        std::vector<Var> p2 = insert_params(t2, work);
        return tape_loss(t2, work, toy, 0, T, loss, p2, nullptr, 0.0).value();
    };

    const std::size_t n = flat.size();
    std::size_t stride = 1;
    if (max_checks > 0 && n > static_cast<std::size_t>(max_checks))
        stride = n / static_cast<std::size_t>(max_checks);

    auto central = [&](std::size_t i, double step) {
        std::vector<double> v = flat;
        v[i] = flat[i] + step;
        double lp = loss_at(v);
        v[i] = flat[i] - step;
        double lm = loss_at(v);
        return (lp - lm) / (2 * step);
    };

    GradCheckResult res;
    std::size_t off = 0;
    for (const NamedTensor& tsr : m.params) {
        for (std::size_t j = 0; j < tsr.data.size(); ++j) {
            std::size_t i = off + j;
            if (i % stride != 0) continue;
            auto rel_err = [&](double numeric) {
                double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-6});
                return std::fabs(analytic[i] - numeric) / denom;
            };
            double rel = rel_err(central(i, h));
            // refine once when truncation dominates at the coarse step
            if (rel > 5e-5) rel = std::min(rel, rel_err(central(i, h * 0.25)));
            ++res.n_checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_tensor = tsr.name + "[" + std::to_string(j) + "]";
            }
        }
        off += tsr.data.size();
    }
    unflatten_params(work, flat);
    return res;
}

}  // namespace ipose::nn
