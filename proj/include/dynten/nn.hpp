#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dynten/backend.hpp"
#include "dynten/core.hpp"
#include "dynten/rng.hpp"

namespace dynten::nn {

struct MlpConfig {
  int input_dim = 1;
  std::vector<int> hidden;
  int output_dim = 1;

  std::vector<int> layer_sizes() const {
    std::vector<int> s;
    s.push_back(input_dim);
    for (int h : hidden) s.push_back(h);
    s.push_back(output_dim);
    return s;
  }
};

// weights[l] is out x in, biases[l] is 1 x out; hidden activations are tanh,
// the output layer is linear.
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;
  std::size_t layer_count() const { return weights.size(); }
};

// Glorot-uniform weights, zero biases.
inline MlpParams init_mlp(const MlpConfig& cfg, Rng& rng) {
  auto sizes = cfg.layer_sizes();
  for (int s : sizes) {
    if (s < 1) throw Error("init_mlp: layer sizes must be >= 1");
  }
  MlpParams p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    int fan_in = sizes[l];
    int fan_out = sizes[l + 1];
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Matrix::Zero(1, fan_out));
  }
  return p;
}

template <class B>
struct BoundMlp {
  std::vector<typename B::Value> weights;
  std::vector<typename B::Value> biases;
};

template <class B>
BoundMlp<B> bind_mlp(const B& bk, const MlpParams& p) {
  BoundMlp<B> out;
  out.weights.reserve(p.weights.size());
  out.biases.reserve(p.biases.size());
  for (const auto& w : p.weights) out.weights.push_back(bk.leaf(w));
  for (const auto& b : p.biases) out.biases.push_back(bk.leaf(b));
  return out;
}

// Row-wise forward pass over a batch: x is n x input_dim, the result is
// n x output_dim. The bias broadcast is an outer product with a ones column
// so its adjoint reduces to per-column sums automatically.
template <class B>
typename B::Value mlp_forward(const B& bk, const BoundMlp<B>& mlp, typename B::Value x) {
  if (mlp.weights.empty()) throw Error("mlp_forward: empty network");
  auto ones = bk.constant(Matrix::Ones(bk.rows(x), 1));
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    x = bk.add(bk.matrix_multiply(x, mlp.weights[l], false, true),
               bk.matrix_multiply(ones, mlp.biases[l]));
    if (l + 1 < mlp.weights.size()) x = bk.tanh(x);
  }
  return x;
}

inline Matrix mlp_apply(const MlpParams& p, const Matrix& x) {
  ValueBackend bk;
  return mlp_forward(bk, bind_mlp(bk, p), x);
}

}  // namespace dynten::nn
