#include "rng/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace rng {

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (lr < 0.0) throw std::invalid_argument("TrainConfig: lr must be >= 0");
  for (const auto& [prefix, v] : lr_groups)
    if (v < 0.0) throw std::invalid_argument("TrainConfig: lr for group '" + prefix + "' is negative");
  if (beta1 < 0.0 || beta2 < 0.0) throw std::invalid_argument("TrainConfig: betas must be >= 0");
  if (!(tau > 0.0)) throw std::invalid_argument("TrainConfig: tau must be > 0");
}

double TrainConfig::lr_for(const std::string& name) const {
  double best = lr;
  std::size_t best_len = 0;
  for (const auto& [prefix, v] : lr_groups) {
    if (prefix.size() >= best_len && name.compare(0, prefix.size(), prefix) == 0) {
      best = v;
      best_len = prefix.size();
    }
  }
  return best;
}

LossConfig TrainConfig::loss_config(const ModelConfig& model) const {
  LossConfig lc;
  lc.ib = IbConfig{beta1, beta2, kl_reduction};
  lc.contrastive = ContrastiveConfig{tau, model.proj_dim};
  lc.bound_mode = bound_mode;
  return lc;
}

void AdamW::step(ParamStore& params) {
  ++t_;
  const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto [it, fresh] = state_.try_emplace(name);
    if (fresh) it->second = Moments{Matrix(p.value.rows(), p.value.cols()), Matrix(p.value.rows(), p.value.cols())};
    Moments& s = it->second;
    const double lr = cfg_.lr_for(name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
      s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
      const double mhat = s.m[i] / c1;
      const double vhat = s.v[i] / c2;
      p.value[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.adam_eps) + cfg_.weight_decay * p.value[i]);
    }
  }
}

std::string epoch_log_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["loss_total"] = log.loss_total;
  j["loss_task"] = log.loss_task;
  j["loss_ib"] = log.loss_ib;
  j["loss_sc"] = log.loss_sc;
  j["dev_p"] = log.dev.precision;
  j["dev_r"] = log.dev.recall;
  j["dev_f1"] = log.dev.f1;
  if (log.sc_skipped) j["warning"] = "sc_con_skipped_batch_lt_2";
  return j.dump();
}

LossBreakdown train_step_loss(ad::Tape& tape, ParamStore& params, const ModelConfig& model,
                              const TrainConfig& cfg, std::span<const Sample> batch,
                              std::uint64_t noise_seed) {
  ad::Binder bind(tape, params);
  const ForwardTrace trace = forward(bind, batch, model, cfg.flags, VibMode::kTrain, noise_seed);
  LossBreakdown loss = total_loss(trace, cfg.loss_config(model));
  tape.backward(loss.total);
  return loss;
}

GradCheckReport check_model_gradients(const ModelConfig& model, const TrainConfig& cfg,
                                      std::span<const Sample> batch, std::uint64_t seed, double eps,
                                      double tol) {
  ParamStore params = init_model(model, seed);
  const std::uint64_t noise_seed = derive_seed(seed, "noise");
  auto loss_fn = [&](ParamStore& p) {
    ad::Tape tape;
    return train_step_loss(tape, p, model, cfg, batch, noise_seed).total.scalar();
  };
  return grad_check(loss_fn, params, eps, tol);
}

TrainResult train(const TrainConfig& cfg, const ModelConfig& model, const Dataset& train_set,
                  const Dataset& dev_set, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty() || dev_set.empty()) {
    throw std::invalid_argument("train: train and dev splits must be non-empty");
  }
  TrainResult result;
  ParamStore params = init_model(model, cfg.seed);
  AdamW opt(cfg);
  const Rng shuffle_root(derive_seed(cfg.seed, "shuffle"));
  const std::uint64_t noise_root = derive_seed(cfg.seed, "noise");

  std::vector<std::size_t> order(train_set.size());
  std::vector<Sample> batch;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = shuffle_root.derive(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    EpochLog log;
    log.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k)
        batch.push_back(train_set[order[k]]);
      params.zero_grad();
      ad::Tape tape;
      const LossBreakdown loss =
          train_step_loss(tape, params, model, cfg, batch, derive_seed(noise_root, static_cast<std::uint64_t>(step)));
      opt.step(params);
      ++step;
      ++batches;
      log.loss_total += loss.total.scalar();
      log.loss_task += loss.task.scalar();
      log.loss_ib += loss.ib.scalar();
      log.loss_sc += loss.sc.scalar();
      log.sc_skipped = log.sc_skipped || loss.sc_skipped;
    }
    const double nb = static_cast<double>(batches);
    log.loss_total /= nb;
    log.loss_task /= nb;
    log.loss_ib /= nb;
    log.loss_sc /= nb;
    log.dev = evaluate(params, model, dev_set, cfg.flags, cfg.constrained_eval);
    if (log.dev.f1 > result.best_dev_f1) {
      result.best_dev_f1 = log.dev.f1;
      result.best_epoch = epoch;
      result.best = params;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  result.last = std::move(params);
  return result;
}

}  // namespace rng
