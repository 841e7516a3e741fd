#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "dynten/core.hpp"
#include "dynten/data.hpp"
#include "dynten/graph.hpp"
#include "dynten/model.hpp"
#include "dynten/rng.hpp"

namespace dynten {

struct EvalReport {
  double rmse = 0.0;   // original value units
  double nrmse = 0.0;  // rmse divided by the training-value spread
  std::size_t count = 0;
  std::vector<double> residuals;  // original units, test order
};

// Held-out error. Test data arrives in original units; queries are mapped
// into model time, predictions are mapped back through the standardizer.
inline EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                           const MultiPartiteGraph& graph, const Standardizer& std_info,
                           const Dataset& test) {
  if (test.observations.empty()) throw Error("evaluate: empty test set");
  std::vector<Observation> queries = test.observations;
  for (auto& q : queries) q.time = std_info.model_time(q.time);
  std::vector<Prediction> preds = predict_entries(params, cfg, graph, queries);
  EvalReport report;
  report.count = test.size();
  report.residuals.reserve(test.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    double mean = std_info.invert_value(preds[i].mean);
    double r = test.observations[i].value - mean;
    report.residuals.push_back(r);
    ss += r * r;
  }
  report.rmse = std::sqrt(ss / static_cast<double>(test.size()));
  report.nrmse = report.rmse / std_info.value_std;
  return report;
}

struct KMeansResult {
  std::vector<int> labels;
  Matrix centroids;  // k x p
  double wcss = 0.0;
};

// Lloyd's algorithm, best of 10 seeded restarts. Ties in the assignment go to
// the lowest centroid index; an emptied cluster is reseeded to the point
// farthest from its current centroid.
inline KMeansResult kmeans(const Matrix& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw Error("kmeans: k must be >= 1");
  if (k > n) {
    throw Error("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(n) +
                " points");
  }
  const int restarts = 10;
  const int max_iters = 200;
  const double tol = 1e-9;

  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    std::vector<int> seed_ids = rng.sample_without_replacement(static_cast<int>(n), k);
    Matrix centroids(k, points.cols());
    for (int c = 0; c < k; ++c) centroids.row(c) = points.row(seed_ids[static_cast<std::size_t>(c)]);

    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    for (int iter = 0; iter < max_iters; ++iter) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double best_d = std::numeric_limits<double>::infinity();
        int best_c = 0;
        for (int c = 0; c < k; ++c) {
          double d = (points.row(i) - centroids.row(c)).squaredNorm();
          if (d < best_d) {
            best_d = d;
            best_c = c;
          }
        }
        labels[static_cast<std::size_t>(i)] = best_c;
      }
      Matrix next = Matrix::Zero(k, points.cols());
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        next.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
          next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        } else {
          Eigen::Index far_i = 0;
          double far_d = -1.0;
          for (Eigen::Index i = 0; i < n; ++i) {
            double d = (points.row(i) - centroids.row(labels[static_cast<std::size_t>(i)]))
                           .squaredNorm();
            if (d > far_d) {
              far_d = d;
              far_i = i;
            }
          }
          next.row(c) = points.row(far_i);
        }
      }
      double movement = (next - centroids).rowwise().norm().maxCoeff();
      centroids = next;
      if (movement < tol) break;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      double best_d = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        double d = (points.row(i) - centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best_c = c;
        }
      }
      labels[static_cast<std::size_t>(i)] = best_c;
    }
    double wcss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      wcss += (points.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
    }
    if (wcss < best.wcss) {
      best.wcss = wcss;
      best.labels = labels;
      best.centroids = centroids;
    }
  }
  return best;
}

// Elbow rule: the k in [2, k_max] with the largest second difference of the
// within-cluster sum of squares; ties resolve to the smallest k.
inline int elbow_select(const Matrix& points, int k_max, Rng& rng) {
  const int n = static_cast<int>(points.rows());
  if (k_max < 2) throw Error("elbow_select: k_max must be >= 2");
  int hi = std::min(k_max + 1, n);
  if (hi < 3) return std::min(2, n);  // too few points to compare curvatures
  std::vector<double> wcss(static_cast<std::size_t>(hi) + 1, 0.0);
  for (int k = 1; k <= hi; ++k) wcss[static_cast<std::size_t>(k)] = kmeans(points, k, rng).wcss;
  int best_k = 2;
  double best_curv = -std::numeric_limits<double>::infinity();
  for (int k = 2; k <= std::min(k_max, hi - 1); ++k) {
    double curv = wcss[static_cast<std::size_t>(k - 1)] - 2.0 * wcss[static_cast<std::size_t>(k)] +
                  wcss[static_cast<std::size_t>(k + 1)];
    if (curv > best_curv) {
      best_curv = curv;
      best_k = k;
    }
  }
  return best_k;
}

// Fraction of points whose cluster's majority ground-truth label matches
// their own; label values themselves are arbitrary on both sides.
inline double cluster_purity(const std::vector<int>& labels, const std::vector<int>& truth) {
  if (labels.size() != truth.size()) throw Error("cluster_purity: length mismatch");
  if (labels.empty()) throw Error("cluster_purity: empty labels");
  std::map<int, std::map<int, int>> table;
  for (std::size_t i = 0; i < labels.size(); ++i) ++table[labels[i]][truth[i]];
  double matched = 0.0;
  for (const auto& [label, counts] : table) {
    int best = 0;
    for (const auto& [t, c] : counts) best = std::max(best, c);
    matched += best;
  }
  return matched / static_cast<double>(labels.size());
}

// One row per entity of the chosen mode: its learned trajectory sampled on
// the given time grid, all rank components concatenated. Feature matrix for
// cluster analysis of trajectory shapes.
inline Matrix trajectory_features(const ModelParams& params, const ModelConfig& cfg,
                                  const MultiPartiteGraph& graph, int mode,
                                  const std::vector<double>& grid) {
  if (mode < 0 || mode >= cfg.order) throw Error("trajectory_features: mode out of range");
  if (grid.empty()) throw Error("trajectory_features: empty time grid");
  auto snapshots = snapshot_embeddings(params, cfg, graph, grid);
  const Eigen::Index d = cfg.dims[static_cast<std::size_t>(mode)];
  const Eigen::Index r = cfg.rank;
  Matrix features(d, static_cast<Eigen::Index>(grid.size()) * r);
  for (std::size_t s = 0; s < grid.size(); ++s) {
    features.middleCols(static_cast<Eigen::Index>(s) * r, r) =
        snapshots[s][static_cast<std::size_t>(mode)];
  }
  return features;
}

}  // namespace dynten
