#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dynten/backend.hpp"
#include "dynten/core.hpp"
#include "dynten/data.hpp"
#include "dynten/graph.hpp"
#include "dynten/nn.hpp"
#include "dynten/ode.hpp"
#include "dynten/rng.hpp"

namespace dynten {

struct ModelConfig {
  int order = 2;
  std::vector<int> dims;
  int rank = 1;
  std::vector<int> reaction_hidden = {10};
  std::vector<int> readout_hidden = {50, 50};
  SolverConfig solver;
  bool diffusion_enabled = true;
  bool reaction_enabled = true;

  nn::MlpConfig reaction_config() const {
    return nn::MlpConfig{rank + 1, reaction_hidden, rank};
  }
  nn::MlpConfig readout_config() const {
    return nn::MlpConfig{order * rank, readout_hidden, 1};
  }
  void validate() const {
    if (order < 1) throw Error("model config: order must be >= 1");
    if (static_cast<int>(dims.size()) != order) {
      throw Error("model config: dims must have one entry per mode");
    }
    for (int d : dims) {
      if (d < 1) throw Error("model config: mode sizes must be >= 1");
    }
    if (rank < 1) throw Error("model config: rank must be >= 1");
    if (!diffusion_enabled && !reaction_enabled) {
      throw Error("model config: at least one of diffusion/reaction must be enabled");
    }
  }
};

// All trainable state. Embedding blocks are d_k x rank; edge weights are one
// column; the noise variance is carried as its logarithm so it stays positive
// under unconstrained updates.
struct ModelParams {
  std::vector<Matrix> initial_state;
  Matrix edge_weights;  // weight_count x 1
  std::vector<nn::MlpParams> reaction;
  nn::MlpParams readout;
  Matrix log_noise_variance = Matrix::Zero(1, 1);

  double noise_variance() const { return std::exp(log_noise_variance(0, 0)); }
};

// Visits every parameter matrix in a fixed order; optimizer slots,
// checkpoints and gradient harvesting all rely on this order.
template <class Params, class F>
void for_each_param(Params& p, F&& fn) {
  for (std::size_t k = 0; k < p.initial_state.size(); ++k) {
    fn("initial_state_" + std::to_string(k), p.initial_state[k]);
  }
  fn("edge_weights", p.edge_weights);
  for (std::size_t k = 0; k < p.reaction.size(); ++k) {
    for (std::size_t l = 0; l < p.reaction[k].weights.size(); ++l) {
      fn("reaction_" + std::to_string(k) + "_w" + std::to_string(l), p.reaction[k].weights[l]);
      fn("reaction_" + std::to_string(k) + "_b" + std::to_string(l), p.reaction[k].biases[l]);
    }
  }
  for (std::size_t l = 0; l < p.readout.weights.size(); ++l) {
    fn("readout_w" + std::to_string(l), p.readout.weights[l]);
    fn("readout_b" + std::to_string(l), p.readout.biases[l]);
  }
  fn("log_noise_variance", p.log_noise_variance);
}

inline std::size_t param_matrix_count(const ModelParams& p) {
  std::size_t n = 0;
  for_each_param(p, [&](const std::string&, const Matrix&) { ++n; });
  return n;
}

// Number of scalar parameters carrying a standard normal prior (the reaction
// and readout networks; embeddings, edge weights and the noise do not).
inline std::size_t prior_param_count(const ModelParams& p) {
  std::size_t n = 0;
  auto count_mlp = [&](const nn::MlpParams& m) {
    for (const auto& w : m.weights) n += static_cast<std::size_t>(w.size());
    for (const auto& b : m.biases) n += static_cast<std::size_t>(b.size());
  };
  for (const auto& m : p.reaction) count_mlp(m);
  count_mlp(p.readout);
  return n;
}

// Embeddings start as small-noise draws; every edge weight starts at the
// reciprocal mean unweighted degree so initial diffusion has moderate spread;
// the noise variance starts at 1.
inline ModelParams init_params(const ModelConfig& cfg, const MultiPartiteGraph& graph,
                               Rng& rng) {
  cfg.validate();
  if (graph.dims != cfg.dims) throw Error("init_params: graph dims do not match model dims");
  ModelParams p;
  for (int k = 0; k < cfg.order; ++k) {
    Matrix u(cfg.dims[static_cast<std::size_t>(k)], cfg.rank);
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      for (Eigen::Index j = 0; j < u.cols(); ++j) u(i, j) = rng.normal(0.0, 0.1);
    }
    p.initial_state.push_back(std::move(u));
  }
  double mean_deg = graph.mean_unweighted_degree();
  double w0 = mean_deg > 0.0 ? 1.0 / mean_deg : 1.0;
  p.edge_weights = Matrix::Constant(graph.weight_count, 1, w0);
  for (int k = 0; k < cfg.order; ++k) {
    p.reaction.push_back(nn::init_mlp(cfg.reaction_config(), rng));
  }
  p.readout = nn::init_mlp(cfg.readout_config(), rng);
  p.log_noise_variance = Matrix::Zero(1, 1);
  return p;
}

template <class B>
struct BoundModel {
  const ModelConfig* config = nullptr;
  const MultiPartiteGraph* graph = nullptr;
  ModeStack<B> initial_state;
  BoundDynamics<B> dynamics;
  nn::BoundMlp<B> readout;
  typename B::Value log_noise_variance;
  std::vector<typename B::Value> param_leaves;  // for_each_param order
  std::vector<typename B::Value> prior_leaves;  // reaction + readout entries
};

template <class B>
BoundModel<B> bind_model(const B& bk, const ModelParams& p, const ModelConfig& cfg,
                         const MultiPartiteGraph& graph) {
  cfg.validate();
  BoundModel<B> m;
  m.config = &cfg;
  m.graph = &graph;
  for_each_param(p, [&](const std::string&, const Matrix& mat) {
    m.param_leaves.push_back(bk.leaf(mat));
  });
  // Leaf layout mirrors for_each_param: modes, edge weights, reaction nets,
  // readout, log noise variance.
  std::size_t pos = 0;
  for (std::size_t k = 0; k < p.initial_state.size(); ++k) {
    m.initial_state.push_back(m.param_leaves[pos++]);
  }
  m.dynamics.graph = &graph;
  m.dynamics.diffusion_enabled = cfg.diffusion_enabled;
  m.dynamics.reaction_enabled = cfg.reaction_enabled;
  m.dynamics.edge_weights = m.param_leaves[pos++];
  for (std::size_t k = 0; k < p.reaction.size(); ++k) {
    nn::BoundMlp<B> net;
    for (std::size_t l = 0; l < p.reaction[k].weights.size(); ++l) {
      net.weights.push_back(m.param_leaves[pos++]);
      net.biases.push_back(m.param_leaves[pos++]);
      m.prior_leaves.push_back(net.weights.back());
      m.prior_leaves.push_back(net.biases.back());
    }
    m.dynamics.reaction.push_back(std::move(net));
  }
  for (std::size_t l = 0; l < p.readout.weights.size(); ++l) {
    m.readout.weights.push_back(m.param_leaves[pos++]);
    m.readout.biases.push_back(m.param_leaves[pos++]);
    m.prior_leaves.push_back(m.readout.weights.back());
    m.prior_leaves.push_back(m.readout.biases.back());
  }
  m.log_noise_variance = m.param_leaves[pos++];
  return m;
}

namespace detail {

inline void validate_observation_indices(const std::vector<Observation>& obs,
                                         const std::vector<int>& dims) {
  for (const auto& o : obs) {
    if (o.index.size() != dims.size()) {
      throw Error("predict: observation order " + std::to_string(o.index.size()) +
                  " does not match model order " + std::to_string(dims.size()));
    }
    for (std::size_t k = 0; k < dims.size(); ++k) {
      if (o.index[k] < 0 || o.index[k] >= dims[k]) {
        throw Error("predict: index " + std::to_string(o.index[k]) +
                    " out of range in mode " + std::to_string(k));
      }
    }
  }
}

}  // namespace detail

// Sorted deduplicated timestamps plus, per observation, the snapshot it maps
// to. Duplicate timestamps share one ODE snapshot.
inline std::pair<std::vector<double>, std::vector<int>> unique_sorted_times(
    const std::vector<Observation>& obs) {
  std::vector<double> times;
  times.reserve(obs.size());
  for (const auto& o : obs) times.push_back(o.time);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::vector<int> which(obs.size());
  for (std::size_t n = 0; n < obs.size(); ++n) {
    which[n] = static_cast<int>(
        std::lower_bound(times.begin(), times.end(), obs[n].time) - times.begin());
  }
  return {std::move(times), std::move(which)};
}

// Mean prediction for each observation, as one n x 1 column. One ODE solve
// covers all requested timestamps; per timestamp the relevant entity rows are
// gathered, concatenated across modes and pushed through the readout net.
template <class B>
typename B::Value predict_means(const B& bk, const BoundModel<B>& m,
                                const std::vector<Observation>& obs) {
  if (obs.empty()) throw Error("predict: empty observation list");
  detail::validate_observation_indices(obs, m.config->dims);
  auto [times, which] = unique_sorted_times(obs);
  auto snapshots = solve_to_times(bk, m.dynamics, m.initial_state, times, m.config->solver);

  const int K = m.config->order;
  const Eigen::Index n = static_cast<Eigen::Index>(obs.size());
  std::vector<std::vector<std::int32_t>> groups(times.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    groups[static_cast<std::size_t>(which[i])].push_back(static_cast<std::int32_t>(i));
  }

  typename B::Value features{};  // n x (K * rank), assembled per time group
  bool has_features = false;
  for (std::size_t s = 0; s < times.size(); ++s) {
    if (groups[s].empty()) continue;
    std::vector<typename B::Value> parts;
    parts.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      auto rows = std::make_shared<ad::IndexList>();
      rows->reserve(groups[s].size());
      for (std::int32_t i : groups[s]) {
        rows->push_back(obs[static_cast<std::size_t>(i)].index[static_cast<std::size_t>(k)]);
      }
      parts.push_back(bk.select_rows(snapshots[s][static_cast<std::size_t>(k)], std::move(rows)));
    }
    auto group_rows = std::make_shared<ad::IndexList>(groups[s].begin(), groups[s].end());
    auto placed = bk.scatter_add_rows(bk.concat_columns(parts), std::move(group_rows), n);
    features = has_features ? bk.add(features, placed) : placed;
    has_features = true;
  }
  return nn::mlp_forward(bk, m.readout, features);
}

struct Prediction {
  double mean = 0.0;
  double noise_variance = 1.0;
};

inline std::vector<Prediction> predict_entries(const ModelParams& p, const ModelConfig& cfg,
                                               const MultiPartiteGraph& graph,
                                               const std::vector<Observation>& obs) {
  ValueBackend bk;
  BoundModel<ValueBackend> m = bind_model(bk, p, cfg, graph);
  Matrix means = predict_means(bk, m, obs);
  double var = p.noise_variance();
  std::vector<Prediction> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    out[i] = Prediction{means(static_cast<Eigen::Index>(i), 0), var};
  }
  return out;
}

// Negative log of the joint density: Gaussian likelihood of the batch values
// under the predicted means (each term scaled by its batch weight) plus
// standard normal priors over the reaction and readout parameters. Weights
// scale only the likelihood part.
template <class B>
typename B::Value negative_log_joint(const B& bk, const BoundModel<B>& m,
                                     const std::vector<Observation>& batch,
                                     const std::vector<double>& weights) {
  if (batch.empty()) throw Error("negative_log_joint: empty batch");
  if (weights.size() != batch.size()) {
    throw Error("negative_log_joint: weight count does not match batch size");
  }
  double weight_sum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw Error("negative_log_joint: weights must be positive");
    weight_sum += w;
  }
  const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);

  auto means = predict_means(bk, m, batch);
  Matrix y(static_cast<Eigen::Index>(batch.size()), 1);
  Matrix w(static_cast<Eigen::Index>(batch.size()), 1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    y(static_cast<Eigen::Index>(i), 0) = batch[i].value;
    w(static_cast<Eigen::Index>(i), 0) = weights[i];
  }
  auto resid = bk.subtract(bk.constant(std::move(y)), means);
  auto weighted_sq = bk.element_multiply(bk.square(resid), bk.constant(std::move(w)));
  auto half_precision =
      bk.scale_by_scalar(bk.exponential(bk.scale_by_scalar(m.log_noise_variance, -1.0)), 0.5);
  auto quad = bk.element_multiply(bk.sum_all(weighted_sq), half_precision);
  auto nll = bk.add(quad, bk.scale_by_scalar(m.log_noise_variance, 0.5 * weight_sum));
  nll = bk.add(nll, bk.constant(Matrix::Constant(1, 1, weight_sum * half_log_2pi)));

  std::size_t prior_count = 0;
  typename B::Value prior_ss{};
  bool has_prior = false;
  for (const auto& leaf : m.prior_leaves) {
    prior_count += static_cast<std::size_t>(bk.rows(leaf) * bk.cols(leaf));
    auto ss = bk.sum_all(bk.square(leaf));
    prior_ss = has_prior ? bk.add(prior_ss, ss) : ss;
    has_prior = true;
  }
  if (has_prior) {
    auto prior = bk.add(bk.scale_by_scalar(prior_ss, 0.5),
                        bk.constant(Matrix::Constant(
                            1, 1, static_cast<double>(prior_count) * half_log_2pi)));
    return bk.add(nll, prior);
  }
  return nll;
}

inline double negative_log_joint_value(const ModelParams& p, const ModelConfig& cfg,
                                       const MultiPartiteGraph& graph,
                                       const std::vector<Observation>& batch,
                                       const std::vector<double>& weights) {
  ValueBackend bk;
  BoundModel<ValueBackend> m = bind_model(bk, p, cfg, graph);
  return negative_log_joint(bk, m, batch, weights)(0, 0);
}

// Embedding blocks at the requested (sorted) times, evaluated off-tape.
inline std::vector<EmbeddingState> snapshot_embeddings(const ModelParams& p,
                                                       const ModelConfig& cfg,
                                                       const MultiPartiteGraph& graph,
                                                       const std::vector<double>& times) {
  ValueBackend bk;
  BoundModel<ValueBackend> m = bind_model(bk, p, cfg, graph);
  return solve_to_times(bk, m.dynamics, m.initial_state, times, cfg.solver);
}

}  // namespace dynten
