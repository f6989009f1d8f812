#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rng/dataset.hpp"
#include "rng/eval.hpp"
#include "rng/gradcheck.hpp"
#include "rng/model.hpp"
#include "rng/objectives.hpp"

namespace rng {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  double lr = 5e-3;
  /// Per-group learning rates keyed by parameter-name prefix; the longest
  /// matching prefix wins, unmatched parameters use `lr`.
  std::map<std::string, double> lr_groups;
  double weight_decay = 0.01;
  double beta1 = 0.5;
  double beta2 = 0.5;
  KlReduction kl_reduction = KlReduction::kMean;
  double tau = 0.07;
  std::uint64_t seed = 0;
  AblationFlags flags;
  BoundMode bound_mode = BoundMode::kSurrogate;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool constrained_eval = true;

  void validate() const;
  double lr_for(const std::string& param_name) const;
  LossConfig loss_config(const ModelConfig& model) const;
};

/// AdamW with decoupled weight decay:
///   θ ← θ − lr·(m̂ / (√v̂ + eps) + wd·θ)
class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}
  void step(ParamStore& params);
  std::size_t steps() const { return t_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  const TrainConfig& cfg_;
  std::map<std::string, Moments> state_;
  std::size_t t_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_task = 0.0;
  double loss_ib = 0.0;
  double loss_sc = 0.0;
  EvalResult dev;
  bool sc_skipped = false;
};

/// One JSON object, no trailing newline:
/// {epoch, loss_total, loss_task, loss_ib, loss_sc, dev_p, dev_r, dev_f1}.
std::string epoch_log_json(const EpochLog& log);

struct TrainResult {
  ParamStore best;
  ParamStore last;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_dev_f1 = -1.0;
};

/// Mini-batch AdamW over total_loss; keeps the best dev-F1 parameters.
/// Fully determined by (train cfg, model cfg, data).
TrainResult train(const TrainConfig& cfg, const ModelConfig& model, const Dataset& train_set,
                  const Dataset& dev_set,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Forward + loss + backward for one batch; gradients land in `params`.
LossBreakdown train_step_loss(ad::Tape& tape, ParamStore& params, const ModelConfig& model,
                              const TrainConfig& cfg, std::span<const Sample> batch,
                              std::uint64_t noise_seed);

/// Finite-difference check of total_loss for a freshly initialized model on
/// `batch`, with the VIB noise held fixed.
GradCheckReport check_model_gradients(const ModelConfig& model, const TrainConfig& cfg,
                                      std::span<const Sample> batch, std::uint64_t seed,
                                      double eps = 1e-5, double tol = 1e-4);

}  // namespace rng
