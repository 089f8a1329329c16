#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "macnet/batch.hpp"
#include "macnet/checkpoint.hpp"
#include "macnet/error.hpp"
#include "macnet/loss.hpp"
#include "macnet/manifest.hpp"
#include "macnet/metrics.hpp"
#include "macnet/model.hpp"
#include "macnet/ops.hpp"

namespace macnet {

// Step policy: lr(e) = base_lr * gamma^floor(e / step_size_epochs).
struct LrSchedule {
  double base_lr = 0.001;
  int step_size_epochs = 20;
  double gamma = 0.1;

  double at(int epoch) const {
    if (epoch < 0) throw ContractError("lr_at: epoch must be >= 0");
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step_size_epochs));
  }
};

struct TrainRunConfig {
  int epochs = 100;
  std::int64_t batch_size = 32;
  std::uint64_t seed = 1;
  int checkpoint_every = 25;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  LrSchedule lr;
  bool augment = true;
  AugmentationPolicy policy;
  std::filesystem::path run_dir;  // empty: keep everything in memory
  double stop_at_train_top1 = -1.0;  // early stop once reached; < 0 disables
  bool track_train_top1 = true;
};

struct HistoryRow {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // Eq.1 batch sums divided by the split size
  double val_top1 = 0.0;
  double val_top5 = 0.0;
  double val_macro_f1 = 0.0;
  double train_top1 = -1.0;  // -1 when not tracked
};

// SGD with velocity-form momentum and L2 weight decay folded into the
// gradient: g' = g + wd*p; v <- mu*v + g'; p <- p - lr*v.
template <class S>
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  std::vector<std::vector<S>>& velocities() { return velocity_; }
  const std::vector<std::vector<S>>& velocities() const { return velocity_; }
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

  void restore_velocities(std::vector<std::vector<S>> v) { velocity_ = std::move(v); }

  void step(ParamSet<S>& params, double lr) {
    if (lr < 0.0) throw ContractError("sgd_step: learning rate must be >= 0");
    if (velocity_.empty()) {
      velocity_.resize(params.params.size());
      for (std::size_t i = 0; i < params.params.size(); ++i) {
        velocity_[i].assign(params.params[i].second->data.size(), S(0));
      }
    }
    for (std::size_t i = 0; i < params.params.size(); ++i) {
      auto& [name, p] = params.params[i];
      if (!p->has_grad()) {
        throw GradientError("sgd_step: parameter '" + name + "' has no gradient");
      }
      auto& v = velocity_[i];
      for (std::size_t j = 0; j < p->data.size(); ++j) {
        const double g = static_cast<double>(p->grad[j]) +
                         weight_decay_ * static_cast<double>(p->data[j]);
        const double vel = momentum_ * static_cast<double>(v[j]) + g;
        v[j] = static_cast<S>(vel);
        p->data[j] = static_cast<S>(static_cast<double>(p->data[j]) - lr * vel);
      }
    }
    params.zero_grads();  // grads cleared after the step
  }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<S>> velocity_;
};

template <class S>
TensorPtr<S> batch_to_tensor(const Batch& batch) {
  auto t = make_tensor<S>({batch.size, 3, batch.height, batch.width});
  for (std::size_t i = 0; i < batch.images.size(); ++i) {
    t->data[i] = static_cast<S>(batch.images[i]);
  }
  return t;
}

// Eval-mode full-split evaluation: no augmentation, no shuffling,
// side-effect free on the model (mode is restored).
template <class S>
EvalReport evaluate(MacNetModel<S>& model, const DatasetManifest& manifest,
                    const std::filesystem::path& data_root, Split split,
                    ImageCache* cache = nullptr, std::int64_t batch_size = 32) {
  const Mode prior_mode = model.mode();
  model.set_mode(Mode::kEval);
  std::vector<std::vector<double>> probabilities;
  std::vector<int> labels;
  BatchIterator it(manifest, data_root, split, batch_size, /*seed=*/0, /*epoch=*/0,
                   /*policy=*/nullptr, cache);
  while (auto batch = it.next()) {
    auto x = batch_to_tensor<S>(*batch);
    auto logits = model.forward(x, nullptr);
    auto probs = softmax<S>(logits, nullptr);
    const std::int64_t k = probs->shape[1];
    for (std::int64_t i = 0; i < batch->size; ++i) {
      std::vector<double> row(static_cast<std::size_t>(k));
      for (std::int64_t j = 0; j < k; ++j) {
        row[static_cast<std::size_t>(j)] = static_cast<double>(probs->data[i * k + j]);
      }
      probabilities.push_back(std::move(row));
      labels.push_back(batch->labels[static_cast<std::size_t>(i)]);
    }
  }
  model.set_mode(prior_mode);
  return compute_report(probabilities, labels, manifest.class_names);
}

inline void write_history_csv(const std::vector<HistoryRow>& history,
                              const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write history: " + path.string());
  os << "epoch,lr,train_loss,val_top1,val_top5,val_macro_f1,train_top1\n";
  os.precision(12);
  for (const auto& row : history) {
    os << row.epoch << ',' << row.lr << ',' << row.train_loss << ',' << row.val_top1 << ','
       << row.val_top5 << ',' << row.val_macro_f1 << ',' << row.train_top1 << '\n';
  }
}

struct TrainResult {
  std::vector<HistoryRow> history;
  int best_epoch = -1;
  double best_val_macro_f1 = -1.0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
};

// The full optimization recipe: seeded batches, Eq.1 loss with Eq.2
// train-split weights, SGD-with-momentum steps under the step LR
// policy, per-epoch validation, cadence + best-val checkpoints.
// Deterministic given (model seed, run seed).
template <class S>
TrainResult train(MacNetModel<S>& model, const DatasetManifest& manifest,
                  const std::filesystem::path& data_root, const TrainRunConfig& cfg,
                  SgdOptimizer<S>* resumed_optimizer = nullptr, int start_epoch = 0,
                  std::vector<HistoryRow> prior_history = {}) {
  if (cfg.epochs < 1) throw ContractError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ContractError("train: batch_size must be >= 1");

  const ClassWeights weights = compute_class_weights(manifest.train_image_counts_per_class());

  const bool writing = !cfg.run_dir.empty();
  std::filesystem::path ckpt_dir;
  if (writing) {
    ckpt_dir = cfg.run_dir / "checkpoints";
    std::filesystem::create_directories(ckpt_dir);
  }

  SgdOptimizer<S> local_opt(cfg.momentum, cfg.weight_decay);
  SgdOptimizer<S>& opt = resumed_optimizer ? *resumed_optimizer : local_opt;

  TrainResult result;
  result.history = std::move(prior_history);
  for (const auto& row : result.history) {
    if (row.val_macro_f1 > result.best_val_macro_f1) {
      result.best_val_macro_f1 = row.val_macro_f1;
      result.best_epoch = row.epoch;
    }
  }

  ImageCache cache;
  AugmentationPolicy policy = cfg.policy;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr.at(epoch);
    model.set_mode(Mode::kTrain);
    double loss_sum = 0.0;
    std::int64_t seen = 0;
    BatchIterator it(manifest, data_root, Split::kTrain, cfg.batch_size, cfg.seed, epoch,
                     cfg.augment ? &policy : nullptr, &cache);
    std::int64_t batch_index = 0;
    while (auto batch = it.next()) {
      Tape<S> tape;
      auto x = batch_to_tensor<S>(*batch);
      auto logits = model.forward(
          x, &tape, mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                             static_cast<std::uint64_t>(batch_index)));
      auto probs = softmax(logits, &tape);
      auto loss = weighted_cross_entropy(probs, batch->labels, weights, &tape);
      const double loss_value = static_cast<double>(loss->data[0]);
      if (!std::isfinite(loss_value)) {
        throw NumericFault("train: non-finite loss at epoch " + std::to_string(epoch) +
                           (result.last_checkpoint.empty()
                                ? std::string("; no checkpoint written yet")
                                : "; last good checkpoint: " + result.last_checkpoint.string()));
      }
      tape.backward(loss);
      opt.step(model.params(), lr);
      loss_sum += loss_value;
      seen += batch->size;
      ++batch_index;
    }

    HistoryRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = loss_sum / static_cast<double>(seen);
    const EvalReport val_report = evaluate(model, manifest, data_root, Split::kVal, &cache);
    row.val_top1 = val_report.top1_accuracy;
    row.val_top5 = val_report.top5_accuracy;
    row.val_macro_f1 = val_report.macro_f1;
    if (cfg.track_train_top1) {
      row.train_top1 = evaluate(model, manifest, data_root, Split::kTrain, &cache).top1_accuracy;
    }
    result.history.push_back(row);

    if (writing) {
      save_checkpoint(ckpt_dir / "last.ckpt", model, &opt.velocities(), epoch, cfg.seed);
      result.last_checkpoint = ckpt_dir / "last.ckpt";
      if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
        std::ostringstream name;
        name << "epoch_" << epoch << ".ckpt";
        save_checkpoint(ckpt_dir / name.str(), model, &opt.velocities(), epoch, cfg.seed);
      }
      write_history_csv(result.history, cfg.run_dir / "history.csv");
    }
    // Best checkpoint by validation macro-F1; ties keep the earlier epoch.
    if (row.val_macro_f1 > result.best_val_macro_f1) {
      result.best_val_macro_f1 = row.val_macro_f1;
      result.best_epoch = epoch;
      if (writing) {
        save_checkpoint(ckpt_dir / "best.ckpt", model, &opt.velocities(), epoch, cfg.seed);
        result.best_checkpoint = ckpt_dir / "best.ckpt";
      }
    }
    if (cfg.stop_at_train_top1 >= 0.0 && row.train_top1 >= cfg.stop_at_train_top1) break;
  }
  return result;
}

}  // namespace macnet
