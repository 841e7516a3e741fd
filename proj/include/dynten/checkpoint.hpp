#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dynten/core.hpp"
#include "dynten/data.hpp"
#include "dynten/graph.hpp"
#include "dynten/model.hpp"

namespace dynten {

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  MultiPartiteGraph graph;
  Standardizer standardizer;
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline ModelParams make_empty_params(const ModelConfig& cfg, int weight_count) {
  ModelParams p;
  for (int k = 0; k < cfg.order; ++k) {
    p.initial_state.push_back(Matrix::Zero(cfg.dims[static_cast<std::size_t>(k)], cfg.rank));
  }
  p.edge_weights = Matrix::Zero(weight_count, 1);
  auto empty_mlp = [](const nn::MlpConfig& mc) {
    nn::MlpParams m;
    auto sizes = mc.layer_sizes();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      m.weights.push_back(Matrix::Zero(sizes[l + 1], sizes[l]));
      m.biases.push_back(Matrix::Zero(1, sizes[l + 1]));
    }
    return m;
  };
  for (int k = 0; k < cfg.order; ++k) p.reaction.push_back(empty_mlp(cfg.reaction_config()));
  p.readout = empty_mlp(cfg.readout_config());
  return p;
}

}  // namespace detail

// Plain-text container of the model configuration, standardization
// statistics, interaction graph and every parameter array. Written to a
// temporary file first and renamed into place, so a reader never sees a
// partial checkpoint.
inline void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                            const ModelParams& params, const MultiPartiteGraph& graph,
                            const Standardizer& std_info) {
  cfg.validate();
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("save_checkpoint: cannot open '" + tmp + "'");
    out << "dynten-checkpoint 1\n";
    out << "order " << cfg.order << "\n";
    out << "dims";
    for (int d : cfg.dims) out << " " << d;
    out << "\n";
    out << "rank " << cfg.rank << "\n";
    out << "reaction_hidden " << cfg.reaction_hidden.size();
    for (int h : cfg.reaction_hidden) out << " " << h;
    out << "\n";
    out << "readout_hidden " << cfg.readout_hidden.size();
    for (int h : cfg.readout_hidden) out << " " << h;
    out << "\n";
    out << "substeps " << cfg.solver.substeps_per_unit_time << "\n";
    out << "diffusion " << (cfg.diffusion_enabled ? 1 : 0) << "\n";
    out << "reaction " << (cfg.reaction_enabled ? 1 : 0) << "\n";
    out << "value_mean " << detail::fmt17(std_info.value_mean) << "\n";
    out << "value_std " << detail::fmt17(std_info.value_std) << "\n";
    out << "time_min " << detail::fmt17(std_info.time_min) << "\n";
    out << "time_max " << detail::fmt17(std_info.time_max) << "\n";
    out << "rescale_time " << (std_info.rescale_time ? 1 : 0) << "\n";
    out << "weight_count " << graph.weight_count << "\n";
    out << "pair_blocks " << graph.pairs.size() << "\n";
    for (const auto& p : graph.pairs) {
      out << "block " << p.mode_a << " " << p.mode_b << " " << p.edge_count() << "\n";
      for (std::size_t e = 0; e < p.edge_count(); ++e) {
        out << (*p.rows_a)[e] << " " << (*p.rows_b)[e] << " " << (*p.weight_ids)[e] << "\n";
      }
    }
    std::size_t n_arrays = param_matrix_count(params);
    out << "arrays " << n_arrays << "\n";
    for_each_param(params, [&](const std::string& name, const Matrix& m) {
      out << "array " << name << " " << m.rows() << " " << m.cols() << "\n";
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          out << (j ? " " : "") << detail::fmt17(m(i, j));
        }
        out << "\n";
      }
    });
    out << "end\n";
    if (!out) throw Error("save_checkpoint: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw Error("save_checkpoint: cannot rename '" + tmp + "' to '" + path + "'");
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_checkpoint: cannot open '" + path + "'");
  auto expect = [&](const std::string& key) {
    std::string got;
    if (!(in >> got) || got != key) {
      throw Error("load_checkpoint: expected '" + key + "' in '" + path + "'");
    }
  };
  auto read_int = [&](const std::string& key) {
    expect(key);
    long long v;
    if (!(in >> v)) throw Error("load_checkpoint: bad value for '" + key + "'");
    return v;
  };
  auto read_double = [&](const std::string& key) {
    expect(key);
    double v;
    if (!(in >> v)) throw Error("load_checkpoint: bad value for '" + key + "'");
    return v;
  };

  expect("dynten-checkpoint");
  long long version;
  if (!(in >> version) || version != 1) throw Error("load_checkpoint: unsupported version");

  Checkpoint ck;
  ck.config.order = static_cast<int>(read_int("order"));
  expect("dims");
  ck.config.dims.resize(static_cast<std::size_t>(ck.config.order));
  for (auto& d : ck.config.dims) {
    if (!(in >> d)) throw Error("load_checkpoint: bad dims");
  }
  ck.config.rank = static_cast<int>(read_int("rank"));
  auto read_widths = [&](const std::string& key, std::vector<int>& out) {
    long long n = read_int(key);
    out.resize(static_cast<std::size_t>(n));
    for (auto& h : out) {
      if (!(in >> h)) throw Error("load_checkpoint: bad " + key);
    }
  };
  read_widths("reaction_hidden", ck.config.reaction_hidden);
  read_widths("readout_hidden", ck.config.readout_hidden);
  ck.config.solver.substeps_per_unit_time = static_cast<int>(read_int("substeps"));
  ck.config.diffusion_enabled = read_int("diffusion") != 0;
  ck.config.reaction_enabled = read_int("reaction") != 0;
  ck.standardizer.value_mean = read_double("value_mean");
  ck.standardizer.value_std = read_double("value_std");
  ck.standardizer.time_min = read_double("time_min");
  ck.standardizer.time_max = read_double("time_max");
  ck.standardizer.rescale_time = read_int("rescale_time") != 0;

  ck.graph.dims = ck.config.dims;
  ck.graph.weight_count = static_cast<int>(read_int("weight_count"));
  long long n_blocks = read_int("pair_blocks");
  for (long long b = 0; b < n_blocks; ++b) {
    expect("block");
    PairBlock p;
    long long edges;
    if (!(in >> p.mode_a >> p.mode_b >> edges)) throw Error("load_checkpoint: bad block");
    auto a = std::make_shared<ad::IndexList>();
    auto bb = std::make_shared<ad::IndexList>();
    auto w = std::make_shared<ad::IndexList>();
    for (long long e = 0; e < edges; ++e) {
      std::int32_t ja, jb, wid;
      if (!(in >> ja >> jb >> wid)) throw Error("load_checkpoint: bad edge");
      a->push_back(ja);
      bb->push_back(jb);
      w->push_back(wid);
    }
    p.rows_a = a;
    p.rows_b = bb;
    p.weight_ids = w;
    ck.graph.pairs.push_back(std::move(p));
  }

  ck.params = detail::make_empty_params(ck.config, ck.graph.weight_count);
  std::map<std::string, Matrix> arrays;
  long long n_arrays = read_int("arrays");
  for (long long i = 0; i < n_arrays; ++i) {
    expect("array");
    std::string name;
    Eigen::Index rows, cols;
    if (!(in >> name >> rows >> cols)) throw Error("load_checkpoint: bad array header");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!(in >> m(r, c))) throw Error("load_checkpoint: bad array data for " + name);
      }
    }
    arrays.emplace(std::move(name), std::move(m));
  }
  expect("end");

  for_each_param(ck.params, [&](const std::string& name, Matrix& slot) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw Error("load_checkpoint: missing array '" + name + "'");
    if (it->second.rows() != slot.rows() || it->second.cols() != slot.cols()) {
      throw Error("load_checkpoint: array '" + name + "' is " + shape_str(it->second) +
                  ", expected " + shape_str(slot));
    }
    slot = it->second;
  });
  return ck;
}

}  // namespace dynten
