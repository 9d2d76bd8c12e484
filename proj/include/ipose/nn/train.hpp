#pragma once

// BPTT training: AdamW with decoupled weight decay, cosine-annealed learning
// rate with linear warmup, per-element gradient clipping, incremental data
// augmentation and best-checkpoint selection on validation loss.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ipose/dataset.hpp"
#include "ipose/nn/model.hpp"

namespace ipose::nn {

enum class LossKind { qad, mse, qdist, relqad };
std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
    double lr_initial = 2e-3;
    double lr_final = 1e-5;
    int epochs = 25;
    int warmup_epochs = 2;
    int batch_size = 64;  // trajectories (or windows) per optimizer step
    double clip_min = -0.2, clip_max = 0.2;
    double weight_decay = 1e-5;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    LossKind loss = LossKind::qad;
    int window = 0;  // BPTT window length; 0 = full trajectory
    bool augment = true;
    double aug_max_strength = 0.5;
    double divergence_qad_deg = 150.0;
    int divergence_window = 50;
    std::uint64_t seed = 0;

    void validate() const;
};

// Peak lr_initial at the end of warmup, cosine decay to exactly lr_final at
// the last epoch.
double lr_schedule(const TrainConfig& cfg, int epoch);

double augmentation_strength(const TrainConfig& cfg, int epoch);

struct EpochRow {
    int epoch = 0;
    double train_loss = 0, val_loss = 0, lr = 0, aug_strength = 0;
};

struct TrainReport {
    std::vector<EpochRow> rows;
    int best_epoch = -1;
    double best_val_loss = 0;
    bool diverged = false;
    bool halted_non_finite = false;
    std::string note;
};

// Trains in place; on return the model holds the best-validation weights.
TrainReport train(RecurrentModel& m, const std::vector<Trial>& train_set,
                  const std::vector<Trial>& val_set, const TrainConfig& cfg);

void write_train_report_csv(const std::string& path, const TrainReport& r);

// Loss of a plain-double forward pass against the trial's ground truth.
double eval_loss(const RecurrentModel& m, const Trial& trial, LossKind loss);

// ---- augmentation -------------------------------------------------------------------

// The four train-time augmentations, individually addressable for tests.
void aug_sensor_noise(Trial& t, double accel_std, double gyro_std, double mag_std,
                      bool uniform, std::mt19937_64& rng);
void aug_sensor_dropout(Trial& t, int sensor, int t_begin, int t_end);
Trial aug_time_dropout(const Trial& t, const std::vector<int>& drop_steps);
void aug_rotation_offset(Trial& t, int sensor, const Quat& offset);

// Combined random augmentation; strength 0 returns the trial unchanged.
Trial augment(const Trial& t, double strength, std::mt19937_64& rng);

// ---- gradient checking ----------------------------------------------------------------

struct GradCheckResult {
    double max_rel_err = 0;
    int n_checked = 0;
    std::string worst_tensor;
};

// Central finite differences on every parameter (or a strided subset when
// max_checks > 0) against the tape gradient of the full-trial loss.
GradCheckResult gradient_check(const RecurrentModel& m, const Trial& toy, LossKind loss,
                               double h = 1e-6, int max_checks = -1);

// Loss on the tape for a window; shared by train() and gradient_check().
Var tape_loss(Tape& tape, const RecurrentModel& m, const Trial& trial, int t_begin, int t_end,
              LossKind loss, const std::vector<Var>& params, const DropoutPlan* dropout = nullptr,
              double divergence_qad_deg = 0.0);

}  // namespace ipose::nn
