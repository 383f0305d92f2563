#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsol/data.hpp"
#include "wsol/losses.hpp"
#include "wsol/model.hpp"

namespace wsol {

struct TrainConfig {
    double learning_rate = 0.001;
    double momentum = 0.9;
    int epochs = 30;
    int batch_size = 16;
    std::uint32_t seed = 0;
    bool shuffle = true;
    // Worker threads for per-sample gradient evaluation. Gradients merge in
    // sample index order, so the result is identical for any thread count.
    int threads = 1;

    void validate() const;
};

/// Mean loss terms over one epoch plus the number of samples whose
/// suppression term was skipped.
struct EpochStats {
    int epoch = 0;
    double cls = 0.0;
    double cls_fg = 0.0;
    double ae = 0.0;
    double ae_fg = 0.0;
    double pseudo = 0.0;
    double bas = 0.0;
    double ac = 0.0;
    double total = 0.0;
    int bas_skipped = 0;
};

/// v <- mu*v + g; p <- p - lr*v, elementwise.
void sgd_momentum_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double mu);

/// Owns the optimizer state for one training run. The epoch counter drives
/// the per-epoch shuffle seed, so a restored trainer continues exactly
/// where the saved one stopped.
class Trainer {
  public:
    Trainer(WsolNet& net, TrainConfig train_config, LossConfig loss_config);

    /// One pass over the dataset (training reads only images and labels).
    EpochStats run_epoch(const Dataset& dataset);

    int epoch() const { return epoch_; }
    void set_epoch(int epoch) { epoch_ = epoch; }

    const WsolNet& net() const { return net_; }
    const TrainConfig& train_config() const { return train_config_; }

    /// Momentum buffers aligned with net.named_parameters().
    std::vector<std::pair<std::string, Tensor>> named_velocities() const;
    void set_velocity(const std::string& param_name, const Tensor& value);

  private:
    WsolNet& net_;
    TrainConfig train_config_;
    LossConfig loss_config_;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<Tensor> velocities_;
    int epoch_ = 0;
};

/// Runs train_config.epochs epochs and returns the per-epoch log.
std::vector<EpochStats> train(WsolNet& net, const Dataset& dataset, const TrainConfig& train_config,
                              const LossConfig& loss_config);

/// Serializable training state: model config, parameters, momentum buffers,
/// and the epoch counter.
struct Checkpoint {
    std::uint32_t version = 1;
    ModelConfig model;
    int epoch = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;  // params, then ".m" momentum buffers
};

Checkpoint make_checkpoint(const Trainer& trainer);
Checkpoint make_checkpoint(const WsolNet& net);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the network from a checkpoint.
WsolNet restore_net(const Checkpoint& checkpoint);

/// Restores the momentum buffers and epoch counter into a trainer.
void restore_trainer(Trainer& trainer, const Checkpoint& checkpoint);

/// Writes the per-epoch log as line-oriented text.
void write_train_log(const std::vector<EpochStats>& log, const std::filesystem::path& path);

}  // namespace wsol
