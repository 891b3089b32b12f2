#include "guardnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "guardnet/error.hpp"

namespace guardnet {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) throw ConfigError("learning rate must be positive");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ConfigError("warmup ratio must lie in [0, 1)");
  if (adamw.weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  if (!(grad_clip > 0.0)) throw ConfigError("gradient clip norm must be positive");
}

double lr_at(long step, long total_steps, const TrainConfig& cfg) {
  if (total_steps <= 0) throw ConfigError("lr schedule needs total_steps >= 1");
  if (step < 0 || step > total_steps) {
    throw UsageError("lr step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  const double warm = cfg.warmup_ratio * static_cast<double>(total_steps);
  const auto s = static_cast<double>(step);
  if (s < warm) return cfg.peak_lr * s / warm;
  const double progress = (s - warm) / (static_cast<double>(total_steps) - warm);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::string history_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& r : history) {
    nlohmann::json j{{"epoch", r.epoch}, {"loss", r.train_loss}, {"macro_f1", r.val_macro_f1},
                     {"accuracy", r.val_accuracy}};
    out += j.dump() + "\n";
  }
  return out;
}

Tensor64 label_targets(const std::vector<const Sample*>& batch) {
  Tensor64 t({batch.size(), kNumLabels});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t k = 0; k < kNumLabels; ++k) t(i, k) = batch[i]->labels[kLabels[k]] ? 1.0 : 0.0;
  }
  return t;
}

std::vector<std::uint8_t> predict_malicious(const FrozenModel& m, const Dataset& ds) {
  std::vector<std::uint8_t> out;
  out.reserve(ds.size());
  for (const auto& s : ds.samples) {
    const ForwardResult r = forward(m, tokenize(s.text, m.config.encoder.max_len));
    out.push_back(m.config.thresholds.flags(r.probs) ? 1 : 0);
  }
  return out;
}

Confusion evaluate_confusion(const FrozenModel& m, const Dataset& ds) {
  std::vector<std::uint8_t> truth;
  truth.reserve(ds.size());
  for (const auto& s : ds.samples) truth.push_back(s.malicious() ? 1 : 0);
  return confusion(predict_malicious(m, ds), truth);
}

namespace {

void check_both_labels(const Dataset& ds) {
  bool pos = false, neg = false;
  for (const auto& s : ds.samples) (s.malicious() ? pos : neg) = true;
  if (!pos || !neg) throw DataError("training split must contain both malicious and benign samples");
}

Var<double> batch_loss(Var<double> logits, const Tensor64& targets, const FocalConfig& loss) {
  if (loss.gamma == 0.0) return bce_loss(logits, targets, loss.task_weights);
  return focal_loss(logits, targets, loss);
}

}  // namespace

TrainResult train(GuardModel model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const FocalConfig& loss) {
  cfg.validate();
  loss.validate();
  if (is_tree_arch(model.arch())) {
    throw UsageError(std::string(arch_name(model.arch())) + " is trained with two_stage_fit");
  }
  if (train_set.empty()) throw DataError("training set is empty");
  if (val_set.empty()) throw DataError("validation set is empty");
  check_both_labels(train_set);

  const std::size_t max_len = model.config.encoder.max_len;
  std::vector<TokenSequence> seqs;
  seqs.reserve(train_set.size());
  for (const auto& s : train_set.samples) seqs.push_back(tokenize(s.text, max_len));

  std::vector<Tensor64*> params;
  model.for_each_param([&](const std::string&, Tensor64& t) { params.push_back(&t); });

  const std::size_t n = train_set.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const long steps_per_epoch = static_cast<long>((n + bs - 1) / bs);
  const long total_steps = steps_per_epoch * cfg.epochs;

  std::mt19937_64 rng(cfg.seed);
  AdamState opt;
  std::vector<std::size_t> order(n);
  long step = 0;

  TrainResult result;
  double best_f1 = -1.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;

    for (std::size_t begin = 0; begin < n; begin += bs) {
      ++step;
      const std::size_t end = std::min(n, begin + bs);
      std::vector<const Sample*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_set.samples[order[i]]);

      const std::string where = "epoch " + std::to_string(epoch) + " step " + std::to_string(step);
      Tape<double> tape;
      double value = 0.0;
      try {
        std::vector<Var<double>> rows;
        rows.reserve(batch.size());
        for (std::size_t i = begin; i < end; ++i) {
          rows.push_back(forward_on(tape, model, seqs[order[i]], ForwardMode::train(rng)).logits);
        }
        Var<double> l = batch_loss(concat_rows(rows), label_targets(batch), loss);
        value = l.value()[0];
        if (!std::isfinite(value)) throw TrainingError("loss diverged");
        tape.backward(l);
      } catch (const DimensionError& e) {
        if (std::string_view(e.what()).find("non-finite") == std::string_view::npos) throw;
        throw TrainingError(where + ": " + e.what());
      } catch (const TrainingError& e) {
        throw TrainingError(where + ": " + e.what());
      }

      std::vector<Tensor64> grads;
      grads.reserve(params.size());
      for (const auto* p : params) grads.push_back(tape.grad_of(*p));
      try {
        clip_grad_norm(grads, cfg.grad_clip);
        adamw_step(params, grads, opt, step, lr_at(step, total_steps, cfg), cfg.adamw);
      } catch (const TrainingError& e) {
        throw TrainingError(where + ": " + e.what());
      }
      loss_sum += value * static_cast<double>(batch.size());
    }

    const Metrics val = metrics(evaluate_confusion(freeze(model), val_set));
    result.history.push_back({epoch, loss_sum / static_cast<double>(n), val.macro_f1, val.accuracy});
    if (val.macro_f1 > best_f1) {
      best_f1 = val.macro_f1;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

Recipe default_recipe(Arch arch) {
  Recipe r;
  switch (arch) {
    case Arch::sharanga:
      r.loss = {0.0, {1.0, 1.0}};
      break;
    case Arch::mahendra:
      r.loss = {2.0, {1.0, 1.0}};
      break;
    case Arch::raudra:
      r.train.peak_lr = 3e-5;
      r.loss = {3.0, {1.5, 1.0}};
      break;
    case Arch::vaishnava:
    case Arch::ashwina:
      r.train.epochs = 3;
      r.loss = {0.0, {1.0, 1.0}};
      break;
  }
  return r;
}

TwoStageResult two_stage_fit(Arch arch, const ModelConfig& model_cfg, EmbeddingBackend<double> backend,
                             const Dataset& train_set, const Dataset& val_set, const TwoStageConfig& cfg) {
  if (!is_tree_arch(arch)) throw UsageError("two_stage_fit applies to vaishnava and ashwina only");
  if (train_set.empty()) throw DataError("training set is empty");
  TwoStageResult out;

  if (!cfg.skip_stage1 && !backend.precomputed()) {
    ModelConfig stage_cfg = model_cfg;
    stage_cfg.sharanga_pooling = PoolKind::cls;
    GuardModel stage = build_model(Arch::sharanga, stage_cfg, std::move(backend));
    TrainResult r = train(std::move(stage), train_set, val_set, cfg.stage1, FocalConfig{0.0, {1.0, 1.0}});
    backend = std::move(r.model.backend);
    out.stage1_history = std::move(r.history);
  }

  ModelConfig final_cfg = model_cfg;
  final_cfg.forest = cfg.forest;
  final_cfg.boost = cfg.boost;
  GuardModel model = build_model(arch, final_cfg, std::move(backend));
  const FrozenModel frozen = freeze(model);

  const std::size_t n = train_set.size();
  const std::size_t d = model.config.encoder.d_model;
  Tensor64 x({n, d});
  std::array<std::vector<std::uint8_t>, kNumLabels> y;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = train_set.samples[i];
    const std::vector<double> f = cls_features(frozen, tokenize(s.text, model.config.encoder.max_len));
    std::copy(f.begin(), f.end(), x.row_span(i).begin());
    for (std::size_t k = 0; k < kNumLabels; ++k) y[k].push_back(s.labels[kLabels[k]] ? 1 : 0);
  }

  TreeHeads heads;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    if (arch == Arch::vaishnava) {
      heads.per_label[k] = fit_forest(x, y[k], cfg.forest);
    } else {
      heads.per_label[k] = fit_boosted(x, y[k], cfg.boost);
    }
  }
  model.heads = std::move(heads);
  out.model = std::move(model);
  out.features = std::move(x);
  return out;
}

void GridSpace::validate() const {
  if (lrs.empty() || gammas.empty() || label_weight_pairs.empty()) throw ConfigError("grid space has an empty axis");
  if (probe_epochs < 1) throw ConfigError("probe_epochs must be >= 1");
}

bool grid_order(const GridCandidate& a, const GridCandidate& b) {
  return std::tie(a.lr, a.gamma, a.weights) < std::tie(b.lr, b.gamma, b.weights);
}

GridResult grid_search(const GridSpace& space, const GuardModel& initial, const Dataset& train_set,
                       const Dataset& val_set, const TrainConfig& base, kernels::Exec exec) {
  space.validate();
  GridResult out;
  for (double lr : space.lrs) {
    for (double g : space.gammas) {
      for (const auto& w : space.label_weight_pairs) out.results.push_back({lr, g, w, 0.0, 0.0});
    }
  }

  kernels::for_each_index(
      out.results.size(),
      [&](std::size_t i) {
        GridCandidate& c = out.results[i];
        TrainConfig cfg = base;
        cfg.epochs = space.probe_epochs;
        cfg.peak_lr = c.lr;
        TrainResult r = train(initial, train_set, val_set, cfg, FocalConfig{c.gamma, c.weights});
        for (const auto& rec : r.history) c.macro_f1 = std::max(c.macro_f1, rec.val_macro_f1);
        c.train_loss = r.history.back().train_loss;
      },
      exec);

  std::vector<std::size_t> idx(out.results.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return grid_order(out.results[a], out.results[b]); });
  std::size_t best = idx.front();
  for (std::size_t i : idx) {
    if (out.results[i].macro_f1 > out.results[best].macro_f1) best = i;
  }
  out.best = out.results[best];
  return out;
}

std::string grid_results_jsonl(const std::vector<GridCandidate>& results) {
  std::string out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& c = results[i];
    nlohmann::json j{{"candidate", i},
                     {"lr", c.lr},
                     {"gamma", c.gamma},
                     {"label_weights", {c.weights[0], c.weights[1]}},
                     {"loss", c.train_loss},
                     {"macro_f1", c.macro_f1}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace guardnet
