#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sardiff/checkpoint.hpp"
#include "sardiff/data.hpp"
#include "sardiff/diffusion.hpp"
#include "sardiff/nn.hpp"
#include "sardiff/schedule.hpp"
#include "sardiff/unet.hpp"

namespace sardiff {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 2e-4;
  int pretrain_epochs = 500;
  uint64_t seed = 0;
  ScheduleKind schedule_kind = ScheduleKind::Linear;
  bool conditional = false;

  int num_steps = 1000;   // diffusion steps T
  double beta_1 = 1e-4;
  double beta_T = 0.02;
  double grad_clip_norm = 1.0;   // <= 0 disables clipping
  int checkpoint_interval = 0;   // epochs between checkpoints; 0 = final only

  void validate() const {
    require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(learning_rate > 0.0, "TrainConfig: learning_rate must be > 0");
    require(pretrain_epochs >= 1, "TrainConfig: pretrain_epochs must be >= 1");
    require(num_steps >= 1, "TrainConfig: num_steps must be >= 1");
  }
};

inline json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"pretrain_epochs", c.pretrain_epochs},
              {"seed", c.seed},
              {"schedule_kind", to_string(c.schedule_kind)},
              {"conditional", c.conditional},
              {"num_steps", c.num_steps},
              {"beta_1", c.beta_1},
              {"beta_T", c.beta_T},
              {"grad_clip_norm", c.grad_clip_norm},
              {"checkpoint_interval", c.checkpoint_interval}};
}

struct TrainReport {
  std::vector<double> epoch_losses;
  std::vector<double> epoch_seconds;
  std::vector<double> step_losses;
  std::filesystem::path final_checkpoint;
};

// Draws (t, eps, x_t) for one objective evaluation: t uniform over {1..T}
// per element, eps standard normal, x_t from the closed-form forward step.
template <typename T>
struct TrainingBatch {
  std::vector<int> t;
  Tensor<T> eps;
  Tensor<T> xt;
};

template <typename T>
TrainingBatch<T> make_training_batch(const Tensor<T>& x0, const NoiseSchedule& schedule,
                                     Rng& rng) {
  const int64_t B = x0.dim(0);
  TrainingBatch<T> out;
  out.t.resize(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b)
    out.t[static_cast<size_t>(b)] = static_cast<int>(rng.uniform_int(1, schedule.num_steps()));
  out.eps = draw_noise<T>(x0.shape(), rng);
  ImageBatch<T> x0b{x0, std::nullopt};
  out.xt = forward_sample(x0b, out.t, out.eps, schedule).data;
  return out;
}

// Mean-squared error between predicted and true noise, and its gradient
// with respect to the prediction.
template <typename T>
std::pair<double, Tensor<T>> mse_and_grad(const Tensor<T>& eps_hat, const Tensor<T>& eps) {
  require(eps_hat.same_shape(eps), "mse_and_grad: shape mismatch");
  const int64_t n = eps_hat.size();
  double loss = 0;
  Tensor<T> grad(eps_hat.shape());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(eps_hat[i]) - static_cast<double>(eps[i]);
    loss += d * d;
    grad[i] = static_cast<T>(2.0 * d * inv_n);
  }
  return {loss * inv_n, std::move(grad)};
}

// One objective evaluation with gradient accumulation into the model.
// The caller owns zero_grad() and the optimizer step.
template <typename T>
double loss_step(DenoiserModel<T>& model, const Tensor<T>& x0,
                 const std::vector<int32_t>* labels, const NoiseSchedule& schedule,
                 Rng& rng, bool train_mode = true) {
  TrainingBatch<T> batch = make_training_batch(x0, schedule, rng);
  typename DenoiserModel<T>::Cache cache;
  Tensor<T> eps_hat =
      model.forward(batch.xt, batch.t, labels, &cache, train_mode, &rng);
  auto [loss, grad] = mse_and_grad(eps_hat, batch.eps);
  ensure(std::isfinite(loss),
         "loss_step: non-finite loss (t[0]=" + std::to_string(batch.t[0]) +
             ", batch=" + std::to_string(x0.dim(0)) + ")");
  model.backward(grad, cache);
  return loss;
}

// Owns one training run: optimizer and RNG state, minibatch scheduling,
// checkpointing. Single-threaded and bit-reproducible for a fixed seed.
class Trainer {
 public:
  Trainer(DenoiserModel<float>& model, const NoiseSchedule& schedule, TrainConfig cfg)
      : model_(model), schedule_(schedule), cfg_(cfg),
        adam_(nn::Adam<float>::Options{cfg.learning_rate, 0.9, 0.999, 1e-8}),
        rng_(cfg.seed) {
    cfg.validate();
  }

  // One optimizer step on a [B,1,H,W] batch.
  double train_step(const Tensor<float>& x0, const std::vector<int32_t>* labels) {
    model_.zero_grad();
    const double loss = loss_step(model_, x0, labels, schedule_, rng_, true);
    auto params = model_.parameters();
    if (cfg_.grad_clip_norm > 0) nn::clip_grad_norm(params, cfg_.grad_clip_norm);
    adam_.step(params);
    ++steps_done_;
    return loss;
  }

  TrainReport fit(const Dataset& dataset, int epochs,
                  const std::filesystem::path& run_dir = {},
                  std::ostream* log = nullptr) {
    require(dataset.count() > 0, "fit: empty dataset");
    require(dataset.image_size() == model_.config().image_size,
            "fit: dataset resolution does not match model");
    const bool conditional = model_.config().conditional();
    if (conditional)
      require(dataset.labeled(), "fit: conditional model needs a labeled dataset");

    std::ofstream loss_csv;
    if (!run_dir.empty()) {
      std::filesystem::create_directories(run_dir);
      std::ofstream cfg_out(run_dir / "config.json");
      json snapshot = train_config_to_json(cfg_);
      snapshot["model"] = unet_config_to_json(model_.config());
      cfg_out << snapshot.dump(2) << "\n";
      loss_csv.open(run_dir / "loss.csv");
      loss_csv << "epoch,mean_loss,seconds\n";
    }

    TrainReport report;
    const int64_t n = dataset.count();
    const int64_t HW = dataset.images.dim(2) * dataset.images.dim(3);
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    for (int epoch = 1; epoch <= epochs; ++epoch) {
      const auto t_start = std::chrono::steady_clock::now();
      // reshuffled per epoch from the master seed, so a resumed run sees
      // the same batch order
      Rng shuffle_rng(Rng::derive(cfg_.seed, 0x0EC0DE + static_cast<uint64_t>(epoch)));
      shuffle_rng.shuffle(order.begin(), order.end());

      double epoch_loss = 0;
      int64_t steps = 0;
      for (int64_t lo = 0; lo < n; lo += cfg_.batch_size) {
        const int64_t hi = std::min<int64_t>(n, lo + cfg_.batch_size);
        Tensor<float> x0({hi - lo, 1, dataset.images.dim(2), dataset.images.dim(3)});
        std::vector<int32_t> labels;
        for (int64_t i = lo; i < hi; ++i) {
          const int64_t src = order[static_cast<size_t>(i)];
          std::copy(dataset.images.data() + src * HW,
                    dataset.images.data() + (src + 1) * HW,
                    x0.data() + (i - lo) * HW);
          if (conditional) labels.push_back(dataset.labels[static_cast<size_t>(src)]);
        }
        const double loss = train_step(x0, conditional ? &labels : nullptr);
        report.step_losses.push_back(loss);
        epoch_loss += loss;
        ++steps;
      }
      epoch_loss /= static_cast<double>(steps);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      report.epoch_losses.push_back(epoch_loss);
      report.epoch_seconds.push_back(seconds);
      if (loss_csv.is_open()) {
        loss_csv.precision(12);
        loss_csv << epoch << "," << epoch_loss << "," << seconds << "\n";
        loss_csv.flush();
      }
      if (log)
        (*log) << "epoch " << epoch << "/" << epochs << "  mean_loss " << epoch_loss
               << "  (" << seconds << " s)\n";
      if (!run_dir.empty() && cfg_.checkpoint_interval > 0 &&
          epoch % cfg_.checkpoint_interval == 0 && epoch != epochs) {
        save_model(run_dir / ("model_epoch_" + std::to_string(epoch) + ".ckpt"), model_);
      }
    }
    if (!run_dir.empty()) {
      report.final_checkpoint = run_dir / "model_final.ckpt";
      save_model(report.final_checkpoint, model_);
      save_state(run_dir / "train_state.ckpt");
    }
    return report;
  }

  // Full resumable state: parameters, Adam moments, step count, RNG.
  void save_state(const std::filesystem::path& path) {
    Checkpoint ck;
    ck.kind = "train_state";
    ck.config = unet_config_to_json(model_.config());
    ck.config["train"] = train_config_to_json(cfg_);
    ck.config["rng_state"] = rng_.save_state();
    ck.config["adam_step"] = adam_.step_count();
    ck.config["steps_done"] = steps_done_;
    auto params = model_.parameters();
    for (auto& p : params) ck.tensors.emplace_back(p.name, *p.value);
    auto& m = adam_.first_moments();
    auto& v = adam_.second_moments();
    ensure(m.size() == params.size() || m.empty(), "save_state: optimizer desynced");
    for (size_t i = 0; i < m.size(); ++i) {
      ck.tensors.emplace_back("adam.m." + params[i].name, m[i]);
      ck.tensors.emplace_back("adam.v." + params[i].name, v[i]);
    }
    save_checkpoint(path, ck);
  }

  void load_state(const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    ensure(ck.kind == "train_state", "load_state: not a train-state checkpoint");
    auto params = model_.parameters();
    for (auto& p : params) {
      const Tensor<float>& t = ck.tensor(p.name);
      ensure(t.shape() == p.value->shape(), "load_state: shape mismatch for " + p.name);
      *p.value = t;
    }
    auto& m = adam_.first_moments();
    auto& v = adam_.second_moments();
    m.clear();
    v.clear();
    for (auto& p : params) {
      m.push_back(ck.tensor("adam.m." + p.name));
      v.push_back(ck.tensor("adam.v." + p.name));
    }
    adam_.set_step_count(ck.config.at("adam_step").get<int64_t>());
    steps_done_ = ck.config.at("steps_done").get<int64_t>();
    rng_.load_state(ck.config.at("rng_state").get<std::string>());
  }

  DenoiserModel<float>& model() { return model_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  int64_t steps_done() const { return steps_done_; }

 private:
  DenoiserModel<float>& model_;
  NoiseSchedule schedule_;
  TrainConfig cfg_;
  nn::Adam<float> adam_;
  Rng rng_;
  int64_t steps_done_ = 0;
};

// Convenience wrapper over Trainer for a single run.
inline TrainReport fit(DenoiserModel<float>& model, const Dataset& dataset,
                       const TrainConfig& cfg, const std::filesystem::path& run_dir = {},
                       std::ostream* log = nullptr) {
  cfg.validate();
  NoiseSchedule schedule =
      NoiseSchedule::make(cfg.schedule_kind, cfg.num_steps, cfg.beta_1, cfg.beta_T);
  Trainer trainer(model, schedule, cfg);
  return trainer.fit(dataset, cfg.epochs, run_dir, log);
}

struct PretrainResult {
  DenoiserModel<float> model;
  TrainReport pretrain_report;
  TrainReport finetune_report;
};

// Rebuilds an unconditional model as a conditional one: every pretrained
// parameter carries over, only the class-embedding table starts fresh.
inline DenoiserModel<float> attach_class_table(DenoiserModel<float>& pretrained,
                                               int num_classes, uint64_t seed) {
  require(!pretrained.config().conditional(),
          "attach_class_table: model is already conditional");
  require(num_classes >= 1, "attach_class_table: num_classes must be >= 1");
  UNetConfig cfg = pretrained.config();
  cfg.num_classes = num_classes;
  DenoiserModel<float> model = DenoiserModel<float>::build(cfg, seed);
  model.load_matching_params(pretrained);
  return model;
}

// Phase 1 trains an unconditional model on clutter; phase 2 rebuilds it with
// a freshly initialized class-embedding table and fine-tunes every parameter
// on the labeled target set.
inline PretrainResult pretrain_then_finetune(const Dataset& clutter, const Dataset& targets,
                                             const UNetConfig& arch, const TrainConfig& cfg,
                                             const std::filesystem::path& run_dir = {},
                                             std::ostream* log = nullptr) {
  cfg.validate();
  require(targets.labeled(), "pretrain_then_finetune: target dataset must be labeled");
  require(clutter.image_size() == targets.image_size(),
          "pretrain_then_finetune: clutter and target resolutions differ");
  if (clutter.labeled() && log)
    (*log) << "warning: clutter dataset has labels; pretraining ignores them\n";

  UNetConfig pre_cfg = arch;
  pre_cfg.num_classes = 0;
  pre_cfg.image_size = static_cast<int>(clutter.image_size());
  DenoiserModel<float> pre_model = DenoiserModel<float>::build(pre_cfg, cfg.seed);

  TrainConfig phase1 = cfg;
  phase1.conditional = false;
  phase1.epochs = cfg.pretrain_epochs;
  TrainReport rep1 = fit(pre_model, clutter, phase1,
                         run_dir.empty() ? run_dir : run_dir / "pretrain", log);

  DenoiserModel<float> model =
      attach_class_table(pre_model, targets.num_classes, Rng::derive(cfg.seed, 1));

  TrainConfig phase2 = cfg;
  phase2.conditional = true;
  phase2.seed = Rng::derive(cfg.seed, 2);
  TrainReport rep2 = fit(model, targets, phase2,
                         run_dir.empty() ? run_dir : run_dir / "finetune", log);
  return {std::move(model), std::move(rep1), std::move(rep2)};
}

}  // namespace sardiff
