#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dynten/autodiff.hpp"
#include "dynten/backend.hpp"
#include "dynten/core.hpp"
#include "dynten/data.hpp"
#include "dynten/graph.hpp"
#include "dynten/model.hpp"
#include "dynten/rng.hpp"

namespace dynten {

enum class SamplerMode { stratified, naive };

struct BatchItem {
  int obs_id = 0;
  double weight = 1.0;
};

// Stratified: draw `batch_size` distinct timestamps, then one observation per
// drawn timestamp; the weight |T|/B * |bucket| makes the summed likelihood an
// unbiased estimate of the full-data likelihood. Naive: draw observations
// directly, each weighted N/B.
struct BatchSampler {
  const Dataset* data = nullptr;
  const TimeIndex* index = nullptr;
  SamplerMode mode = SamplerMode::stratified;
  int batch_size = 50;
  bool reweight = true;  // stratified only; off reproduces the unweighted variant
  Rng rng{0};

  std::vector<BatchItem> sample() {
    if (batch_size < 1) throw Error("sample_batch: batch size must be >= 1");
    std::vector<BatchItem> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    if (mode == SamplerMode::stratified) {
      const int T = static_cast<int>(index->size());
      if (batch_size > T) {
        throw Error("sample_batch: batch size " + std::to_string(batch_size) +
                    " exceeds distinct timestamp count " + std::to_string(T));
      }
      std::vector<int> picked = rng.sample_without_replacement(T, batch_size);
      double scale = static_cast<double>(T) / static_cast<double>(batch_size);
      for (int t : picked) {
        const auto& bucket = index->buckets[static_cast<std::size_t>(t)];
        int obs = bucket[static_cast<std::size_t>(rng.uniform_int(bucket.size()))];
        double w = reweight ? scale * static_cast<double>(bucket.size())
                            : static_cast<double>(data->size()) / batch_size;
        out.push_back(BatchItem{obs, w});
      }
    } else {
      const int N = static_cast<int>(data->size());
      if (batch_size > N) {
        throw Error("sample_batch: batch size " + std::to_string(batch_size) +
                    " exceeds observation count " + std::to_string(N));
      }
      std::vector<int> picked = rng.sample_without_replacement(N, batch_size);
      double w = static_cast<double>(N) / static_cast<double>(batch_size);
      for (int obs : picked) out.push_back(BatchItem{obs, w});
    }
    return out;
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  double learning_rate = 1e-2;
  long step_count = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

inline AdamState init_adam(const ModelParams& params, double learning_rate,
                           AdamConfig cfg = {}) {
  AdamState s;
  s.config = cfg;
  s.learning_rate = learning_rate;
  for_each_param(params, [&](const std::string&, const Matrix& p) {
    s.m.push_back(Matrix::Zero(p.rows(), p.cols()));
    s.v.push_back(Matrix::Zero(p.rows(), p.cols()));
  });
  return s;
}

// One bias-corrected update in place. A non-finite gradient rejects the step
// and leaves parameters and moments untouched.
inline bool adam_step(AdamState& s, ModelParams& params, const std::vector<Matrix>& grads) {
  std::size_t n_params = s.m.size();
  if (grads.size() != n_params) throw Error("adam_step: gradient count mismatch");
  for (const auto& g : grads) {
    if (!g.allFinite()) return false;
  }
  ++s.step_count;
  double c1 = 1.0 - std::pow(s.config.beta1, static_cast<double>(s.step_count));
  double c2 = 1.0 - std::pow(s.config.beta2, static_cast<double>(s.step_count));
  std::size_t i = 0;
  for_each_param(params, [&](const std::string&, Matrix& p) {
    s.m[i] = s.config.beta1 * s.m[i] + (1.0 - s.config.beta1) * grads[i];
    s.v[i] = s.config.beta2 * s.v[i] + (1.0 - s.config.beta2) * grads[i].cwiseProduct(grads[i]);
    Matrix m_hat = s.m[i] / c1;
    Matrix v_hat = s.v[i] / c2;
    p.array() -=
        s.learning_rate * (m_hat.array() / (v_hat.array().sqrt() + s.config.epsilon));
    ++i;
  });
  return true;
}

// Reduce-on-plateau: after `patience` consecutive epochs without a relative
// improvement over the best seen loss, the learning rate is halved (clamped
// to the configured range).
struct PlateauScheduler {
  double factor = 0.5;
  int patience = 50;
  double min_lr = 1e-4;
  double max_lr = 1e-1;
  double rel_threshold = 1e-6;

  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  void observe(double loss, AdamState& adam) {
    adam.learning_rate = std::min(std::max(adam.learning_rate, min_lr), max_lr);
    double cutoff = std::isfinite(best) ? best - rel_threshold * std::abs(best) : best;
    if (loss < cutoff) {
      best = loss;
      bad_epochs = 0;
      return;
    }
    ++bad_epochs;
    if (bad_epochs >= patience) {
      adam.learning_rate = std::max(adam.learning_rate * factor, min_lr);
      bad_epochs = 0;
    }
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double eval_metric = std::numeric_limits<double>::quiet_NaN();
  double learning_rate = 0.0;
  double seconds = 0.0;
};

struct TrainConfig {
  int epochs = 2000;
  int batch_size = 50;
  SamplerMode sampler_mode = SamplerMode::stratified;
  bool stratified_reweight = true;
  double learning_rate = 1e-2;
  double lr_min = 1e-4;
  double lr_max = 1e-1;
  double lr_decay = 0.5;
  int patience = 50;
  double improvement_threshold = 1e-6;
  std::uint64_t seed = 0;
  int max_step_retries = 3;
  // Called after every epoch (history row already filled in), e.g. for
  // progress output or checkpoint cadence.
  std::function<void(const EpochStats& stats, const ModelParams&)> epoch_hook;
  // Optional extra metric recorded in the history (e.g. held-out nRMSE).
  std::function<double(const ModelParams&)> eval_metric;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
};

namespace detail {

inline std::vector<Matrix> batch_gradients(const ModelParams& params, const ModelConfig& cfg,
                                           const MultiPartiteGraph& graph,
                                           const std::vector<Observation>& batch,
                                           const std::vector<double>& weights, double& loss) {
  ad::Tape tape;
  TapeBackend bk(&tape);
  BoundModel<TapeBackend> bound = bind_model(bk, params, cfg, graph);
  ad::VarRef objective = negative_log_joint(bk, bound, batch, weights);
  loss = tape.value(objective)(0, 0);
  std::vector<Matrix> grads;
  if (!std::isfinite(loss)) return grads;  // caller treats as failed step
  tape.backward(objective);
  grads.reserve(bound.param_leaves.size());
  for (ad::VarRef leaf : bound.param_leaves) grads.push_back(tape.gradient(leaf));
  return grads;
}

}  // namespace detail

// Stochastic training loop. An epoch is one pass in expectation: over the
// distinct timestamps in stratified mode, over the observations in naive
// mode. The scheduler watches the exact full-data objective, evaluated
// off-tape once per epoch. A non-finite loss/gradient or a diverged solve
// rolls back the previous update, halves the learning rate and retries with a
// fresh batch; repeated consecutive failures abort.
inline TrainResult train(const Dataset& data, const ModelConfig& cfg,
                         const MultiPartiteGraph& graph, const TrainConfig& tc,
                         ModelParams initial_params) {
  cfg.validate();
  if (tc.epochs < 0) throw Error("train: epochs must be >= 0");
  TimeIndex time_index = build_time_index(data);

  BatchSampler sampler;
  sampler.data = &data;
  sampler.index = &time_index;
  sampler.mode = tc.sampler_mode;
  sampler.batch_size = tc.batch_size;
  sampler.reweight = tc.stratified_reweight;
  sampler.rng = Rng::substream(tc.seed, "sampler");

  TrainResult result;
  result.params = std::move(initial_params);
  AdamState adam = init_adam(result.params, tc.learning_rate);
  PlateauScheduler scheduler;
  scheduler.factor = tc.lr_decay;
  scheduler.patience = tc.patience;
  scheduler.min_lr = tc.lr_min;
  scheduler.max_lr = tc.lr_max;
  scheduler.rel_threshold = tc.improvement_threshold;

  const double denom = tc.sampler_mode == SamplerMode::stratified
                           ? static_cast<double>(time_index.size())
                           : static_cast<double>(data.size());
  const int steps_per_epoch =
      std::max(1, static_cast<int>(std::ceil(denom / static_cast<double>(tc.batch_size))));

  std::vector<double> full_weights(data.size(), 1.0);
  ModelParams before_last_update = result.params;
  int consecutive_failures = 0;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    auto epoch_start = std::chrono::steady_clock::now();
    for (int step = 0; step < steps_per_epoch; ++step) {
      std::vector<BatchItem> items = sampler.sample();
      std::vector<Observation> batch;
      std::vector<double> weights;
      batch.reserve(items.size());
      weights.reserve(items.size());
      for (const auto& it : items) {
        batch.push_back(data.observations[static_cast<std::size_t>(it.obs_id)]);
        weights.push_back(it.weight);
      }
      double loss = 0.0;
      std::vector<Matrix> grads;
      bool ok = true;
      std::string why;
      try {
        grads = detail::batch_gradients(result.params, cfg, graph, batch, weights, loss);
        if (grads.empty()) {
          ok = false;
          why = "non-finite loss";
        }
      } catch (const OdeDivergence& e) {
        ok = false;
        why = e.what();
      }
      if (ok) {
        ModelParams snapshot = result.params;
        ok = adam_step(adam, result.params, grads);
        if (ok) {
          before_last_update = std::move(snapshot);
          consecutive_failures = 0;
        } else {
          why = "non-finite gradient";
        }
      }
      if (!ok) {
        ++consecutive_failures;
        if (consecutive_failures > tc.max_step_retries) {
          throw Error("train: aborting at epoch " + std::to_string(epoch) + " after " +
                      std::to_string(consecutive_failures) + " failed steps (" + why + ")");
        }
        result.params = before_last_update;  // roll back the previous update
        adam.learning_rate = std::max(adam.learning_rate * 0.5, tc.lr_min);
        --step;  // retry with a fresh batch
      }
    }
    double full_loss =
        negative_log_joint_value(result.params, cfg, graph, data.observations, full_weights);
    scheduler.observe(full_loss, adam);
    auto epoch_end = std::chrono::steady_clock::now();

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = full_loss;
    stats.learning_rate = adam.learning_rate;
    stats.seconds = std::chrono::duration<double>(epoch_end - epoch_start).count();
    if (tc.eval_metric) stats.eval_metric = tc.eval_metric(result.params);
    result.history.push_back(stats);
    if (tc.epoch_hook) tc.epoch_hook(stats, result.params);
  }
  return result;
}

inline TrainResult train(const Dataset& data, const ModelConfig& cfg,
                         const MultiPartiteGraph& graph, const TrainConfig& tc) {
  Rng init_rng = Rng::substream(tc.seed, "init");
  return train(data, cfg, graph, tc, init_params(cfg, graph, init_rng));
}

}  // namespace dynten
