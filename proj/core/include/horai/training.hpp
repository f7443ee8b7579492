#pragma once
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "horai/model.hpp"

namespace horai {

struct TrainConfig {
    float lr = 5e-4f;
    int epochs = 20;
    int patience = 5;  // 10 is the other published setting; both are valid knobs
    int batch_size = 32;
    std::uint64_t seed = 42;
    float adam_beta1 = 0.9f;
    float adam_beta2 = 0.999f;
    float adam_eps = 1e-8f;
    bool load_balance = false;  // optional importance penalty, off by default
    float lb_lambda = 0.01f;
    std::string lr_schedule = "constant";  // constant | cosine
    int max_steps = 0;  // 0 = no cap; fixed-budget runs set this

    void validate() const {
        if (!(lr > 0.0f)) throw ConfigError("lr must be positive");
        if (epochs < 1 || batch_size < 1) throw ConfigError("epochs and batch_size must be >= 1");
        if (patience < 1 || patience > epochs)
            throw ConfigError("patience must satisfy 1 <= patience <= epochs");
        if (lr_schedule != "constant" && lr_schedule != "cosine")
            throw ConfigError("lr_schedule must be constant or cosine");
    }
};

// Next-patch MSE with the final (unsupervised) row excluded:
// mean over (N-1) rows x S elements of ||pred_i - target_i||^2.
ValueId ar_loss(Tape& t, ValueId predictions, ValueId targets);
float ar_loss_value(const Tensor& predictions, const Tensor& targets);

// Row i of the target is patch i+1 of the window; the last row is zero
// padding that the loss never reads.
Tensor make_targets(const Tensor& patches_norm);

// True once the best value has not improved by more than 1e-6 absolute for
// `patience` consecutive epochs.
bool early_stop(const std::vector<float>& history, int patience);

class Adam {
  public:
    Adam(ParamStore& params, const TrainConfig& cfg);
    void step(float lr);  // consumes Parameter::grad; frozen parameters are skipped
    int steps_taken() const { return t_; }

  private:
    ParamStore& params_;
    float beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct EpochStats {
    double mean_loss = 0.0;
    int steps = 0;
    std::vector<long> expert_counts;  // tokens routed per expert across the epoch
    double max_grad_norm = 0.0;
};

struct FitResult {
    std::vector<float> train_losses;  // per epoch
    std::vector<float> val_losses;
    int epochs_run = 0;
    bool stopped_early = false;
};

class Trainer {
  public:
    Trainer(HoraiModel& model, TrainConfig cfg);

    // One deterministic pass: seeded shuffle, per-batch Adam updates, one JSON
    // log line per step ({"epoch","step","loss","expert_counts"}).
    EpochStats train_epoch(const std::vector<MultimodalSample>& samples, int epoch,
                           std::ostream* log = nullptr);

    float evaluate(const std::vector<MultimodalSample>& samples) const;

    FitResult fit(const std::vector<MultimodalSample>& train,
                  const std::vector<MultimodalSample>& val, std::ostream* log = nullptr);

    Rng& rng() { return rng_; }
    int global_step() const { return global_step_; }
    std::string rng_state() const;
    void restore_rng_state(const std::string& state);

  private:
    float lr_at(int step) const;

    HoraiModel& model_;
    TrainConfig cfg_;
    Adam adam_;
    Rng rng_;
    int global_step_ = 0;
    int planned_total_steps_ = 0;
};

}  // namespace horai
