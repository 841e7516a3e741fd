#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dynten/core.hpp"
#include "dynten/data.hpp"
#include "dynten/rng.hpp"

namespace dynten::synth {

// Two-mode benchmark with planted cluster structure. Entities in the first
// cluster draw their base coefficient near -5, the second near 0.5 (variance
// 0.1 each); the second mode's coefficient is a noisy copy of the first.
// Mode-1 trajectories grow/decay exponentially, mode-2 trajectories are
// linear with slope 2*pi*coefficient, and an observed entry reports one of
// the two trajectories depending on index parity.
struct SynthSpec {
  int entities_per_mode = 20;
  int cluster_size = 10;  // entities [0, cluster_size) form cluster 1
  int train_count = 6400;
  int test_count = 1600;
  double time_max = 5.0;
  std::uint64_t seed = 0;
};

struct GroundTruth {
  std::vector<double> mode1_coeff;
  std::vector<double> mode2_coeff;
  std::vector<int> cluster;  // 1 or 2 per entity
};

inline GroundTruth sample_ground_truth(const SynthSpec& spec, Rng& rng) {
  if (spec.cluster_size < 1 || spec.cluster_size >= spec.entities_per_mode) {
    throw Error("synth: cluster size must split the entities into two non-empty groups");
  }
  const double sd = std::sqrt(0.1);
  GroundTruth gt;
  gt.mode1_coeff.resize(static_cast<std::size_t>(spec.entities_per_mode));
  gt.mode2_coeff.resize(static_cast<std::size_t>(spec.entities_per_mode));
  gt.cluster.resize(static_cast<std::size_t>(spec.entities_per_mode));
  for (int j = 0; j < spec.entities_per_mode; ++j) {
    bool first = j < spec.cluster_size;
    gt.cluster[static_cast<std::size_t>(j)] = first ? 1 : 2;
    gt.mode1_coeff[static_cast<std::size_t>(j)] = rng.normal(first ? -5.0 : 0.5, sd);
  }
  for (int j = 0; j < spec.entities_per_mode; ++j) {
    gt.mode2_coeff[static_cast<std::size_t>(j)] =
        rng.normal(gt.mode1_coeff[static_cast<std::size_t>(j)], sd);
  }
  return gt;
}

// mode is 1 or 2; the entity index is 0-based.
inline double trajectory(const GroundTruth& gt, int mode, int entity, double t) {
  if (mode == 1) {
    double c = gt.mode1_coeff[static_cast<std::size_t>(entity)];
    return c * std::exp(0.5 * c * t);
  }
  if (mode == 2) {
    double c = gt.mode2_coeff[static_cast<std::size_t>(entity)];
    return c + 2.0 * M_PI * c * t;
  }
  throw Error("synth: mode must be 1 or 2");
}

// Entries with an even coordinate-sum parity report the mode-1 trajectory of
// their first coordinate, odd ones the mode-2 trajectory of their second.
inline double entry_value(const GroundTruth& gt, int l1, int l2, double t) {
  return ((l1 + l2) % 2 == 0) ? trajectory(gt, 1, l1, t) : trajectory(gt, 2, l2, t);
}

struct SynthData {
  SynthSpec spec;
  GroundTruth truth;
  Dataset train;
  Dataset test;
};

// Entries are sampled uniformly over the within-cluster index pairs, with
// timestamps uniform on [0, time_max]. Train and test are independent draws
// from one seeded stream. Values are noise-free.
inline SynthData generate(const SynthSpec& spec) {
  Rng truth_rng = Rng::substream(spec.seed, "synth-truth");
  Rng entry_rng = Rng::substream(spec.seed, "synth-entries");
  SynthData out;
  out.spec = spec;
  out.truth = sample_ground_truth(spec, truth_rng);

  const int c1 = spec.cluster_size;
  const int c2 = spec.entities_per_mode - spec.cluster_size;
  const std::uint64_t n_pairs =
      static_cast<std::uint64_t>(c1) * c1 + static_cast<std::uint64_t>(c2) * c2;
  auto draw = [&](Dataset& ds, int count) {
    ds.order = 2;
    ds.dims = {spec.entities_per_mode, spec.entities_per_mode};
    ds.observations.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
      std::uint64_t pick = entry_rng.uniform_int(n_pairs);
      int l1, l2;
      if (pick < static_cast<std::uint64_t>(c1) * c1) {
        l1 = static_cast<int>(pick / static_cast<std::uint64_t>(c1));
        l2 = static_cast<int>(pick % static_cast<std::uint64_t>(c1));
      } else {
        std::uint64_t q = pick - static_cast<std::uint64_t>(c1) * c1;
        l1 = c1 + static_cast<int>(q / static_cast<std::uint64_t>(c2));
        l2 = c1 + static_cast<int>(q % static_cast<std::uint64_t>(c2));
      }
      Observation obs;
      obs.index = {l1, l2};
      obs.time = entry_rng.uniform(0.0, spec.time_max);
      obs.value = entry_value(out.truth, l1, l2, obs.time);
      ds.observations.push_back(std::move(obs));
    }
  };
  draw(out.train, spec.train_count);
  draw(out.test, spec.test_count);
  return out;
}

// Long format: one row per (entity, mode) with that mode's coefficient.
inline void write_ground_truth_csv(const std::string& path, const GroundTruth& gt) {
  std::ofstream out(path);
  if (!out) throw Error("write_ground_truth_csv: cannot open '" + path + "'");
  out << "entity,mode,coefficient,cluster\n";
  char buf[80];
  for (int mode = 1; mode <= 2; ++mode) {
    const auto& coeff = mode == 1 ? gt.mode1_coeff : gt.mode2_coeff;
    for (std::size_t j = 0; j < gt.cluster.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%zu,%d,%.17g,%d", j, mode, coeff[j], gt.cluster[j]);
      out << buf << "\n";
    }
  }
}

}  // namespace dynten::synth
