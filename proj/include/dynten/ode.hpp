#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dynten/backend.hpp"
#include "dynten/core.hpp"
#include "dynten/graph.hpp"
#include "dynten/nn.hpp"

namespace dynten {

struct SolverConfig {
  int substeps_per_unit_time = 20;
};

namespace detail {

template <class B>
ModeStack<B> stack_axpy(const B& bk, const ModeStack<B>& y, const ModeStack<B>& k, double c) {
  ModeStack<B> out;
  out.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out.push_back(bk.add(y[i], bk.scale_by_scalar(k[i], c)));
  }
  return out;
}

template <class B>
void ensure_finite_state(const B& bk, const ModeStack<B>& state, double t) {
  for (const auto& block : state) {
    if (!bk.value_of(block).allFinite()) {
      throw OdeDivergence("ode solve produced a non-finite state at time " + std::to_string(t),
                          t);
    }
  }
}

}  // namespace detail

// One classical fourth-order Runge-Kutta step of length h from time t.
template <class B, class F>
ModeStack<B> rk4_step(const B& bk, F&& deriv, const ModeStack<B>& y, double t, double h) {
  ModeStack<B> k1 = deriv(bk, y, t);
  ModeStack<B> k2 = deriv(bk, detail::stack_axpy(bk, y, k1, h / 2.0), t + h / 2.0);
  ModeStack<B> k3 = deriv(bk, detail::stack_axpy(bk, y, k2, h / 2.0), t + h / 2.0);
  ModeStack<B> k4 = deriv(bk, detail::stack_axpy(bk, y, k3, h), t + h);
  ModeStack<B> out;
  out.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto mid = bk.scale_by_scalar(bk.add(k2[i], k3[i]), 2.0);
    auto sum = bk.add(bk.add(k1[i], mid), k4[i]);
    out.push_back(bk.add(y[i], bk.scale_by_scalar(sum, h / 6.0)));
  }
  return out;
}

// Integrates from 0 and snapshots the state at each requested time.
//
// The main integration line walks a fixed uniform grid of width
// 1/substeps_per_unit_time anchored at 0. A requested time that falls off the
// grid is reached by a single shortened step branching off the last grid
// state; the main line itself is never perturbed. Every snapshot is therefore
// a pure function of its own timestamp, independent of what else is in the
// request: solving to [a, b] reproduces the solve to [b] bit for bit.
template <class B, class F>
std::vector<ModeStack<B>> solve_to_times(const B& bk, F&& deriv, const ModeStack<B>& initial,
                                         const std::vector<double>& times,
                                         const SolverConfig& cfg) {
  if (cfg.substeps_per_unit_time < 1) throw Error("solve_to_times: substeps must be >= 1");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || !std::isfinite(times[i])) {
      throw Error("solve_to_times: times must be finite and >= 0");
    }
    if (i > 0 && times[i] < times[i - 1]) {
      throw Error("solve_to_times: times must be sorted ascending");
    }
  }
  const double h = 1.0 / static_cast<double>(cfg.substeps_per_unit_time);
  ModeStack<B> grid_state = initial;
  long grid_pos = 0;

  std::vector<ModeStack<B>> snapshots;
  snapshots.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double target = times[i];
    if (i > 0 && target == times[i - 1]) {
      snapshots.push_back(snapshots.back());
      continue;
    }
    while (h * static_cast<double>(grid_pos + 1) <= target) {
      double t0 = h * static_cast<double>(grid_pos);
      grid_state = rk4_step(bk, deriv, grid_state, t0, h);
      ++grid_pos;
      detail::ensure_finite_state(bk, grid_state, h * static_cast<double>(grid_pos));
    }
    double t_grid = h * static_cast<double>(grid_pos);
    if (target == t_grid) {
      snapshots.push_back(grid_state);
    } else {
      ModeStack<B> side = rk4_step(bk, deriv, grid_state, t_grid, target - t_grid);
      detail::ensure_finite_state(bk, side, target);
      snapshots.push_back(std::move(side));
    }
  }
  return snapshots;
}

// State derivative of the embedding trajectories: graph diffusion plus a
// per-mode reaction network applied row-wise to (embedding, time).
template <class B>
struct BoundDynamics {
  const MultiPartiteGraph* graph = nullptr;
  typename B::Value edge_weights;  // weight_count x 1, meaningful iff diffusion_enabled
  std::vector<nn::BoundMlp<B>> reaction;  // one per mode, meaningful iff reaction_enabled
  bool diffusion_enabled = true;
  bool reaction_enabled = true;

  ModeStack<B> operator()(const B& bk, const ModeStack<B>& state, double t) const {
    if (!diffusion_enabled && !reaction_enabled) {
      throw Error("dynamics: at least one of diffusion/reaction must be enabled");
    }
    ModeStack<B> out;
    if (diffusion_enabled) {
      out = diffusion_term(bk, *graph, edge_weights, state);
    }
    if (reaction_enabled) {
      if (reaction.size() != state.size()) {
        throw Error("dynamics: expected one reaction network per mode");
      }
      for (std::size_t k = 0; k < state.size(); ++k) {
        auto t_col = bk.constant(Matrix::Constant(bk.rows(state[k]), 1, t));
        auto x = bk.concat_columns({state[k], t_col});
        auto r = nn::mlp_forward(bk, reaction[k], x);
        if (diffusion_enabled) {
          out[k] = bk.add(out[k], r);
        } else {
          out.push_back(r);
        }
      }
    }
    return out;
  }
};

}  // namespace dynten
