#pragma once

#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "dynten/backend.hpp"
#include "dynten/core.hpp"
#include "dynten/data.hpp"

namespace dynten {

using EmbeddingState = std::vector<Matrix>;  // one d_k x R block per mode
using EdgeWeights = std::vector<double>;

// Undirected edges between one ordered mode pair (mode_a < mode_b), stored as
// parallel index arrays so they can be fed straight into gather/scatter ops.
// weight_ids point into the shared weight vector: the two directions of an
// edge use one weight, which keeps cross-mode coupling symmetric.
struct PairBlock {
  int mode_a = 0;
  int mode_b = 0;
  ad::IndexListPtr rows_a;
  ad::IndexListPtr rows_b;
  ad::IndexListPtr weight_ids;
  std::size_t edge_count() const { return rows_a ? rows_a->size() : 0; }
};

struct MultiPartiteGraph {
  std::vector<int> dims;
  std::vector<PairBlock> pairs;
  int weight_count = 0;

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.edge_count();
    return n;
  }
  std::size_t vertex_count() const {
    std::size_t n = 0;
    for (int d : dims) n += static_cast<std::size_t>(d);
    return n;
  }
  double mean_unweighted_degree() const {
    if (vertex_count() == 0) return 0.0;
    return 2.0 * static_cast<double>(edge_count()) / static_cast<double>(vertex_count());
  }
};

// Entities are linked iff they co-occur in at least one observed entry.
// Duplicate co-occurrences collapse to one edge; weight ids are assigned in
// first-encounter order, so the layout is deterministic in file order.
inline MultiPartiteGraph build_graph(const Dataset& ds) {
  if (ds.order < 1) throw Error("build_graph: dataset order must be >= 1");
  const int order = ds.order;
  MultiPartiteGraph g;
  g.dims = ds.dims;

  struct Block {
    ad::IndexList a, b, wid;
  };
  std::map<std::pair<int, int>, Block> blocks;
  std::map<std::tuple<int, int, int, int>, int> seen;
  for (const auto& obs : ds.observations) {
    for (int ka = 0; ka < order; ++ka) {
      for (int kb = ka + 1; kb < order; ++kb) {
        auto key = std::make_tuple(ka, kb, obs.index[ka], obs.index[kb]);
        auto [it, inserted] = seen.emplace(key, g.weight_count);
        if (!inserted) continue;
        Block& blk = blocks[{ka, kb}];
        blk.a.push_back(obs.index[ka]);
        blk.b.push_back(obs.index[kb]);
        blk.wid.push_back(g.weight_count);
        ++g.weight_count;
      }
    }
  }
  for (auto& [modes, blk] : blocks) {
    PairBlock p;
    p.mode_a = modes.first;
    p.mode_b = modes.second;
    p.rows_a = std::make_shared<ad::IndexList>(std::move(blk.a));
    p.rows_b = std::make_shared<ad::IndexList>(std::move(blk.b));
    p.weight_ids = std::make_shared<ad::IndexList>(std::move(blk.wid));
    g.pairs.push_back(std::move(p));
  }
  return g;
}

// Weighted degree of entity j in mode k, aggregated over all partner modes.
inline double degree(const MultiPartiteGraph& g, const EdgeWeights& w, int k, int j) {
  if (static_cast<int>(w.size()) != g.weight_count) {
    throw Error("degree: expected " + std::to_string(g.weight_count) + " edge weights, got " +
                std::to_string(w.size()));
  }
  if (k < 0 || k >= static_cast<int>(g.dims.size())) throw Error("degree: mode out of range");
  if (j < 0 || j >= g.dims[static_cast<std::size_t>(k)]) {
    throw Error("degree: entity out of range");
  }
  double total = 0.0;
  for (const auto& p : g.pairs) {
    if (p.mode_a != k && p.mode_b != k) continue;
    const ad::IndexList& mine = (p.mode_a == k) ? *p.rows_a : *p.rows_b;
    for (std::size_t e = 0; e < mine.size(); ++e) {
      if (mine[e] == j) total += w[static_cast<std::size_t>((*p.weight_ids)[e])];
    }
  }
  return total;
}

// Graph-coupling term of the state derivative: for every edge, mass w*(u_b -
// u_a) flows into a and the opposite amount into b, so the columns of the
// stacked state are conserved exactly.
template <class B>
ModeStack<B> diffusion_term(const B& bk, const MultiPartiteGraph& g,
                            const typename B::Value& weights, const ModeStack<B>& state) {
  const int K = static_cast<int>(g.dims.size());
  if (static_cast<int>(state.size()) != K) {
    throw ShapeError("diffusion_term: expected " + std::to_string(K) + " mode blocks, got " +
                     std::to_string(state.size()));
  }
  if (bk.rows(weights) != g.weight_count || bk.cols(weights) != 1) {
    throw ShapeError("diffusion_term: weights must be " + std::to_string(g.weight_count) +
                     "x1, got " + shape_str(bk.rows(weights), bk.cols(weights)));
  }
  const Eigen::Index R = K > 0 ? bk.cols(state[0]) : 0;
  for (int k = 0; k < K; ++k) {
    if (bk.rows(state[k]) != g.dims[static_cast<std::size_t>(k)] || bk.cols(state[k]) != R) {
      throw ShapeError("diffusion_term: mode " + std::to_string(k) + " block is " +
                       shape_str(bk.rows(state[k]), bk.cols(state[k])) + ", expected " +
                       shape_str(g.dims[static_cast<std::size_t>(k)], R));
    }
  }

  typename B::Value ones_row = bk.constant(Matrix::Ones(1, R));
  std::vector<std::optional<typename B::Value>> acc(static_cast<std::size_t>(K));
  auto accumulate = [&](int k, typename B::Value v) {
    auto& slot = acc[static_cast<std::size_t>(k)];
    slot = slot ? bk.add(*slot, v) : v;
  };
  for (const auto& p : g.pairs) {
    if (p.edge_count() == 0) continue;
    auto ua = bk.select_rows(state[static_cast<std::size_t>(p.mode_a)], p.rows_a);
    auto ub = bk.select_rows(state[static_cast<std::size_t>(p.mode_b)], p.rows_b);
    auto flow = bk.subtract(ub, ua);  // per edge, toward the a side
    auto w = bk.select_rows(weights, p.weight_ids);
    auto wflow = bk.element_multiply(flow, bk.matrix_multiply(w, ones_row));
    accumulate(p.mode_a,
               bk.scatter_add_rows(wflow, p.rows_a, g.dims[static_cast<std::size_t>(p.mode_a)]));
    accumulate(p.mode_b,
               bk.scatter_add_rows(bk.scale_by_scalar(wflow, -1.0), p.rows_b,
                                   g.dims[static_cast<std::size_t>(p.mode_b)]));
  }
  ModeStack<B> out;
  out.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    auto& slot = acc[static_cast<std::size_t>(k)];
    out.push_back(slot ? *slot
                       : bk.constant(Matrix::Zero(g.dims[static_cast<std::size_t>(k)], R)));
  }
  return out;
}

inline EmbeddingState apply_diffusion(const MultiPartiteGraph& g, const EdgeWeights& w,
                                      const EmbeddingState& state) {
  if (static_cast<int>(w.size()) != g.weight_count) {
    throw ShapeError("apply_diffusion: expected " + std::to_string(g.weight_count) +
                     " edge weights, got " + std::to_string(w.size()));
  }
  Matrix wm(static_cast<Eigen::Index>(w.size()), 1);
  for (std::size_t i = 0; i < w.size(); ++i) wm(static_cast<Eigen::Index>(i), 0) = w[i];
  ValueBackend bk;
  return diffusion_term(bk, g, wm, state);
}

}  // namespace dynten
