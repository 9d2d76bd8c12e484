#pragma once

// Recurrent fusion models: a minimal RNN/GRU/LSTM engine with four
// architectures around it (direct regression, complementary blend with gyro
// integration, and the two hybrid filter+residual variants).

#include <cstdint>
#include <string>
#include <vector>

#include "ipose/dataset.hpp"
#include "ipose/filters.hpp"
#include "ipose/nn/tape.hpp"
#include "ipose/quat.hpp"

namespace ipose::nn {

enum class CellKind { rnn, gru, lstm };
enum class OutputRepr { euler, quaternion, repr6d };
enum class ArchKind { model_free, complementary, cff_detached, cff_feedback };

std::string to_string(CellKind k);
std::string to_string(OutputRepr r);
std::string to_string(ArchKind a);
CellKind cell_kind_from_string(const std::string& s);
OutputRepr output_repr_from_string(const std::string& s);
ArchKind arch_kind_from_string(const std::string& s);

struct NamedTensor {
    std::string name;
    int rows = 0, cols = 1;
    std::vector<double> data;

    int size() const { return rows * cols; }
};

struct RecurrentModel {
    CellKind cell = CellKind::lstm;
    ArchKind arch = ArchKind::model_free;
    OutputRepr repr = OutputRepr::quaternion;
    bool use_mag = true;
    int n_sensors = 0;
    int n_segments = 0;
    std::vector<int> hidden{256, 256};
    double dropout = 0.20;
    double alpha = 0.98;  // complementary blend weight toward the gyro branch
    bool alpha_learnable = false;
    FilterConfig cff_filter;  // madgwick w/ mag by default

    std::vector<double> norm_mean, norm_std;  // per input feature
    std::vector<NamedTensor> params;

    int marg_dim_per_sensor() const { return use_mag ? 9 : 6; }
    int input_dim() const;
    // cff residual heads always emit an exp-map 3-vector so zero weights mean
    // an identity correction; the other architectures emit the configured
    // representation.
    int out_dim_per_segment() const;
    int n_gates() const { return cell == CellKind::lstm ? 4 : cell == CellKind::gru ? 3 : 1; }

    NamedTensor& tensor(const std::string& name);
    const NamedTensor& tensor(const std::string& name) const;
    std::size_t n_params() const;
    void check_finite() const;  // throws DomainError naming the bad tensor
};

RecurrentModel make_model(ArchKind arch, CellKind cell, OutputRepr repr, int n_sensors,
                          int n_segments, const std::vector<int>& hidden, std::uint64_t seed,
                          bool use_mag = true, double dropout = 0.20,
                          const FilterConfig& cff_filter = {}, bool alpha_learnable = false);

// Decodes one segment's raw head output into a unit quaternion. Quaternion and
// 6D heads are offset so that zero output decodes to identity.
Quat decode_head(const double* seg_out, OutputRepr repr);
QuatT<Var> decode_head_tape(const Var* seg_out, OutputRepr repr);

// Residual decode for the cff heads: exp-map 3-vector.
Quat decode_residual(const double* v3);
QuatT<Var> decode_residual_tape(const Var* v3);

// ---- plain-double inference -----------------------------------------------------

// One recurrent step through all layers plus the dense head; used by the
// incremental runner below. The training path runs the same equations on the
// tape; tests pin the two together.
struct EvalState {
    std::vector<std::vector<double>> h, c;
};

void cell_forward(const RecurrentModel& m, const std::vector<double>& input, EvalState& state,
                  std::vector<double>& head_out);

struct NnOutput {
    Trajectory traj;
    bool diverged = false;
    int diverged_at = -1;
};

// Incremental per-sample runner (also the latency-benchmark subject).
class NnRunner {
public:
    NnRunner(const RecurrentModel& m, const Trial& trial);
    void reset();
    // Processes sample t (must be called in order); returns per-segment quats.
    const std::vector<Quat>& step(int t);

private:
    const RecurrentModel& model_;
    const Trial& trial_;
    EvalState state_;
    std::vector<double> features_, head_out_;
    std::vector<Quat> out_;
    std::vector<Quat> q_int_;            // complementary integration branch
    std::vector<FilterState> filter_;    // cff filter bank
    Trajectory detached_traj_;           // cff_detached precomputed filter run
};

// Full-trajectory inference. When ground truth is present and the architecture
// is cff_feedback, a sliding-window divergence monitor is applied.
NnOutput nn_forward(const RecurrentModel& m, const Trial& trial);

// ---- tape (training) rollout ------------------------------------------------------

struct DropoutPlan {
    // Per (step, layer) keep/scale masks; empty = no dropout.
    std::vector<std::vector<double>> masks;  // [t * n_layers + l][width]
};

DropoutPlan make_dropout_plan(const RecurrentModel& m, int t_begin, int t_end,
                              std::uint64_t seed);

// Builds the rollout of trial[t_begin, t_end) on the tape and returns the
// predicted quaternions, one per (step, segment). `params` are tape leaves in
// model.params order (flattened).
std::vector<QuatT<Var>> rollout_tape(Tape& tape, const RecurrentModel& m, const Trial& trial,
                                     int t_begin, int t_end, const std::vector<Var>& params,
                                     const DropoutPlan* dropout = nullptr);

std::vector<Var> insert_params(Tape& tape, const RecurrentModel& m);

// ---- checkpoints -------------------------------------------------------------------

void save_checkpoint(const std::string& path, const RecurrentModel& m);
RecurrentModel load_checkpoint(const std::string& path);

}  // namespace ipose::nn
