#pragma once

#include "dst/checkpoint.hpp"
#include "dst/data.hpp"
#include "dst/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dst {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t shuffle_seed = 1;
    /// Training stops when more than this many consecutive epochs fail to improve the best validation loss.
    std::size_t patience = 10;
    double clip_norm = 5.0;

    void validate() const;
};

struct TrainHistory {
    double initial_train_mse = 0.0;
    double initial_val_mse = 0.0;
    std::vector<double> train_mse;
    std::vector<double> val_mse;
    std::vector<double> seconds;
    std::size_t best_epoch = 0;  // 0 = the initial parameters
    bool early_stopped = false;

    [[nodiscard]] std::size_t epochs() const noexcept { return train_mse.size(); }
    /// "epoch,train_mse,val_mse,seconds" followed by one line per epoch.
    [[nodiscard]] std::string log_text() const;
};

struct TrainResult {
    Checkpoint checkpoint;  // best-validation parameters
    TrainHistory history;
    bool diverged = false;
    std::string divergence;
};

[[nodiscard]] double mse_loss(std::span<const double> predicted, std::span<const double> target);
[[nodiscard]] ad::Var mse_loss(ad::Tape& tape, ad::Var predicted, ad::Var target);

struct AdamState {
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/**
 * One bias-corrected Adam update of each tensor from its grad buffer.
 * `names` labels the tensors in errors; a non-finite gradient throws
 * NumericError before anything is modified.
 */
void adam_step(std::span<Tensor* const> params, std::span<const std::string> names, AdamState& state,
               const TrainConfig& config);

/// Rescales all gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(std::span<Tensor* const> params, double max_norm);

/// Mean squared error in scaled space over all samples and stations.
[[nodiscard]] double evaluate_mse(const ModelParams& params, const TransitGraph& graph,
                                  std::span<const SampleWindow> samples);

using EpochCallback = std::function<void(std::size_t epoch, double train_mse, double val_mse, double seconds)>;

/**
 * Mini-batch Adam with a seeded reshuffle each epoch. The returned
 * checkpoint holds the parameters with the lowest validation MSE seen,
 * including the starting point; without validation samples the training
 * MSE is used instead.
 */
[[nodiscard]] TrainResult train(ModelParams params, std::span<const SampleWindow> samples, const TransitGraph& graph,
                                const TrainConfig& config, std::span<const SampleWindow> validation,
                                const EpochCallback& on_epoch = {});

/// Continues training from a checkpoint; lineage and epoch counts carry over.
[[nodiscard]] TrainResult fine_tune(const Checkpoint& checkpoint, std::span<const SampleWindow> samples,
                                    const TransitGraph& graph, const TrainConfig& config,
                                    std::span<const SampleWindow> validation, const EpochCallback& on_epoch = {});

}  // namespace dst
