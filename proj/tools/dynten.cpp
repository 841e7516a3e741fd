// Command-line driver: synthetic data generation, training, evaluation,
// prediction, trajectory export and cluster analysis for the dynamic tensor
// engine. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dynten/dynten.hpp"

namespace {

using dynten::Error;
using dynten::Matrix;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_resolved_config(const CLI::App& sub, const std::string& dir) {
  std::string path = dir + "/config.resolved";
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << sub.config_to_str(true, false);
}

// Key=value files fill in options the command line leaves unset; flags always
// win. CLI11 only auto-loads config files on the root app, so the file is
// expanded by hand into extra arguments for a second parse.
std::vector<std::string> config_injections(const CLI::App& sub, const std::string& path) {
  std::vector<CLI::ConfigItem> items = CLI::ConfigTOML{}.from_file(path);
  std::vector<std::string> extra;
  for (const auto& item : items) {
    if (!item.parents.empty()) {
      throw Error("config file: unknown section in key '" + item.fullname() + "'");
    }
    const CLI::Option* opt = sub.get_option_no_throw("--" + item.name);
    if (opt == nullptr || !opt->get_configurable()) {
      throw Error("config file: unknown option '" + item.name + "'");
    }
    if (opt->count() > 0) continue;  // set on the command line; the flag wins
    std::string joined;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) {
      if (i > 0) joined += ',';
      joined += item.inputs[i];
    }
    extra.push_back("--" + item.name + "=" + joined);
  }
  return extra;
}

// CLI11 consumes argument vectors back to front.
void parse_args(CLI::App& app, const std::vector<std::string>& natural_order) {
  std::vector<std::string> reversed(natural_order.rbegin(), natural_order.rend());
  app.parse(reversed);
}

// Hidden-width lists use a single 0 to mean "no hidden layers".
std::vector<int> hidden_widths(const std::vector<int>& raw) {
  if (raw.size() == 1 && raw[0] == 0) return {};
  for (int w : raw) {
    if (w < 1) throw Error("hidden layer widths must be >= 1 (or a single 0 for none)");
  }
  return raw;
}

void print_graph_stats(const dynten::MultiPartiteGraph& g) {
  std::cout << "graph: " << g.vertex_count() << " vertices, " << g.edge_count() << " edges, "
            << g.weight_count << " shared weights\n";
  for (const auto& block : g.pairs) {
    std::cout << "  modes " << block.mode_a << "x" << block.mode_b << ": "
              << block.rows_a->size() << " edges\n";
  }
}

// Query rows: i_1,...,i_K,time with an optional header; a trailing value
// column is tolerated and ignored.
std::vector<dynten::Observation> load_queries(const std::string& path, int order,
                                              const std::vector<int>& dims) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<dynten::Observation> out;
  std::string line;
  int lineno = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    int n = static_cast<int>(fields.size());
    if (n != order + 1 && n != order + 2) {
      if (first_content) {  // header row
        first_content = false;
        continue;
      }
      throw Error("expected " + std::to_string(order + 1) + " columns at line " +
                  std::to_string(lineno));
    }
    char* end = nullptr;
    dynten::Observation obs;
    obs.index.resize(static_cast<std::size_t>(order));
    bool numeric = true;
    for (int k = 0; k < order && numeric; ++k) {
      long v = std::strtol(fields[static_cast<std::size_t>(k)].c_str(), &end, 10);
      numeric = end == fields[static_cast<std::size_t>(k)].c_str() +
                           fields[static_cast<std::size_t>(k)].size() &&
                !fields[static_cast<std::size_t>(k)].empty();
      obs.index[static_cast<std::size_t>(k)] = static_cast<int>(v);
    }
    if (numeric) {
      obs.time = std::strtod(fields[static_cast<std::size_t>(order)].c_str(), &end);
      numeric = end == fields[static_cast<std::size_t>(order)].c_str() +
                           fields[static_cast<std::size_t>(order)].size();
    }
    if (!numeric) {
      if (first_content) {  // header row
        first_content = false;
        continue;
      }
      throw Error("bad query row at line " + std::to_string(lineno));
    }
    first_content = false;
    if (!std::isfinite(obs.time)) {
      throw Error("non-finite time at line " + std::to_string(lineno));
    }
    for (int k = 0; k < order; ++k) {
      int i = obs.index[static_cast<std::size_t>(k)];
      if (i < 0 || i >= dims[static_cast<std::size_t>(k)]) {
        throw Error("query index " + std::to_string(i) + " out of range in mode " +
                    std::to_string(k) + " at line " + std::to_string(lineno));
      }
    }
    out.push_back(std::move(obs));
  }
  if (out.empty()) throw Error("no queries in '" + path + "'");
  return out;
}

std::vector<double> time_grid(double lo, double hi, int points) {
  if (points < 1) throw Error("grid needs at least one point");
  if (points == 1) return {lo};
  if (hi < lo) throw Error("grid end precedes its start");
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    grid.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  }
  return grid;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out_dir;
  dynten::synth::SynthSpec spec;
};

int cmd_synth(const CLI::App& sub, const SynthArgs& a) {
  dynten::synth::SynthData data = dynten::synth::generate(a.spec);
  dynten::write_dataset_csv(a.out_dir + "/train.csv", data.train);
  dynten::write_dataset_csv(a.out_dir + "/test.csv", data.test);
  dynten::synth::write_ground_truth_csv(a.out_dir + "/ground_truth.csv", data.truth);
  write_resolved_config(sub, a.out_dir);
  std::cout << "wrote " << data.train.size() << " train and " << data.test.size()
            << " test observations (dims " << data.train.dims[0] << "x" << data.train.dims[1]
            << ") to " << a.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string train_path;
  std::string test_path;
  std::string out_dir;
  int order = 2;
  std::vector<int> dims;  // optional override; default inferred from data
  int rank = 1;
  std::vector<int> reaction_hidden = {10};
  std::vector<int> readout_hidden = {50, 50};
  int substeps = 20;
  bool diffusion_only = false;
  bool reaction_only = false;
  bool time_rescale = false;
  std::string sampler = "stratified";
  bool stratified_unweighted = false;
  int epochs = 2000;
  int batch = 50;
  double lr = 1e-2;
  double lr_min = 1e-4;
  double lr_max = 1e-1;
  double lr_decay = 0.5;
  int patience = 50;
  double improvement_threshold = 1e-6;
  std::uint64_t seed = 0;
  int log_every = 25;
};

int cmd_train(const CLI::App& sub, const TrainArgs& a) {
  dynten::Dataset raw = dynten::load_dataset(a.train_path, a.order, a.dims);
  dynten::Standardizer st = dynten::fit_standardizer(raw, a.time_rescale);
  dynten::Dataset data = dynten::apply_standardizer(st, raw);
  dynten::MultiPartiteGraph graph = dynten::build_graph(data);
  print_graph_stats(graph);

  dynten::ModelConfig cfg;
  cfg.order = data.order;
  cfg.dims = data.dims;
  cfg.rank = a.rank;
  cfg.reaction_hidden = hidden_widths(a.reaction_hidden);
  cfg.readout_hidden = hidden_widths(a.readout_hidden);
  cfg.solver.substeps_per_unit_time = a.substeps;
  cfg.diffusion_enabled = !a.reaction_only;
  cfg.reaction_enabled = !a.diffusion_only;

  dynten::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.sampler_mode =
      a.sampler == "naive" ? dynten::SamplerMode::naive : dynten::SamplerMode::stratified;
  tc.stratified_reweight = !a.stratified_unweighted;
  tc.learning_rate = a.lr;
  tc.lr_min = a.lr_min;
  tc.lr_max = a.lr_max;
  tc.lr_decay = a.lr_decay;
  tc.patience = a.patience;
  tc.improvement_threshold = a.improvement_threshold;
  tc.seed = a.seed;

  dynten::Dataset test;
  if (!a.test_path.empty()) {
    test = dynten::load_dataset(a.test_path, a.order, data.dims);
    tc.eval_metric = [&](const dynten::ModelParams& p) {
      try {
        return dynten::evaluate(p, cfg, graph, st, test).nrmse;
      } catch (const Error&) {
        return std::numeric_limits<double>::quiet_NaN();
      }
    };
  }
  if (a.log_every > 0) {
    tc.epoch_hook = [&](const dynten::EpochStats& s, const dynten::ModelParams&) {
      if (s.epoch % a.log_every == 0 || s.epoch == a.epochs) {
        std::cout << "epoch " << s.epoch << " loss " << s.train_loss << " lr "
                  << s.learning_rate;
        if (std::isfinite(s.eval_metric)) std::cout << " eval " << s.eval_metric;
        std::cout << std::endl;
      }
    };
  }

  dynten::TrainResult result = dynten::train(data, cfg, graph, tc);

  std::string ckpt_path = a.out_dir + "/model.ckpt";
  dynten::save_checkpoint(ckpt_path, cfg, result.params, graph, st);

  std::string hist_path = a.out_dir + "/history.csv";
  std::ofstream hist(hist_path);
  if (!hist) throw Error("cannot write '" + hist_path + "'");
  hist << "epoch,train_loss,eval_nrmse,lr,epoch_seconds\n";
  for (const auto& row : result.history) {
    hist << row.epoch << "," << format_double(row.train_loss) << ",";
    if (std::isfinite(row.eval_metric)) hist << format_double(row.eval_metric);
    hist << "," << format_double(row.learning_rate) << "," << format_double(row.seconds)
         << "\n";
  }
  write_resolved_config(sub, a.out_dir);

  if (!result.history.empty()) {
    std::cout << "final loss " << result.history.back().train_loss;
    if (std::isfinite(result.history.back().eval_metric)) {
      std::cout << " eval nrmse " << result.history.back().eval_metric;
    }
    std::cout << "\n";
  }
  std::cout << "checkpoint " << ckpt_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string ckpt_path;
  std::string test_path;
  std::string out_dir;
  bool dump_residuals = false;
};

int cmd_eval(const EvalArgs& a) {
  dynten::Checkpoint ck = dynten::load_checkpoint(a.ckpt_path);
  dynten::Dataset test = dynten::load_dataset(a.test_path, ck.config.order, ck.config.dims);
  dynten::EvalReport rep =
      dynten::evaluate(ck.params, ck.config, ck.graph, ck.standardizer, test);
  std::cout << "rmse " << format_double(rep.rmse) << "\n";
  std::cout << "nrmse " << format_double(rep.nrmse) << "\n";
  std::cout << "count " << rep.count << "\n";
  if (!a.out_dir.empty()) {
    std::string path = a.out_dir + "/report.csv";
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << "rmse,nrmse,count\n";
    out << format_double(rep.rmse) << "," << format_double(rep.nrmse) << "," << rep.count
        << "\n";
    if (a.dump_residuals) {
      std::string rpath = a.out_dir + "/residuals.csv";
      std::ofstream rout(rpath);
      if (!rout) throw Error("cannot write '" + rpath + "'");
      rout << "row,residual\n";
      for (std::size_t i = 0; i < rep.residuals.size(); ++i) {
        rout << i << "," << format_double(rep.residuals[i]) << "\n";
      }
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  std::string ckpt_path;
  std::string query_path;
  std::string out_path;
};

int cmd_predict(const PredictArgs& a) {
  dynten::Checkpoint ck = dynten::load_checkpoint(a.ckpt_path);
  std::vector<dynten::Observation> queries =
      load_queries(a.query_path, ck.config.order, ck.config.dims);
  std::vector<dynten::Observation> mapped = queries;
  for (auto& q : mapped) q.time = ck.standardizer.model_time(q.time);
  std::vector<dynten::Prediction> preds =
      dynten::predict_entries(ck.params, ck.config, ck.graph, mapped);
  std::ofstream out(a.out_path);
  if (!out) throw Error("cannot write '" + a.out_path + "'");
  out << "mean,variance\n";
  double var_scale = ck.standardizer.value_std * ck.standardizer.value_std;
  for (const auto& p : preds) {
    out << format_double(ck.standardizer.invert_value(p.mean)) << ","
        << format_double(p.noise_variance * var_scale) << "\n";
  }
  std::cout << "wrote " << preds.size() << " predictions to " << a.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// export-trajectories

struct ExportArgs {
  std::string ckpt_path;
  std::string out_path;
  int grid_points = 50;
  double t_min = std::numeric_limits<double>::quiet_NaN();
  double t_max = std::numeric_limits<double>::quiet_NaN();
};

int cmd_export(const ExportArgs& a) {
  dynten::Checkpoint ck = dynten::load_checkpoint(a.ckpt_path);
  double lo = std::isnan(a.t_min) ? ck.standardizer.time_min : a.t_min;
  double hi = std::isnan(a.t_max) ? ck.standardizer.time_max : a.t_max;
  std::vector<double> raw_grid = time_grid(lo, hi, a.grid_points);
  std::vector<double> model_grid = raw_grid;
  for (auto& t : model_grid) t = ck.standardizer.model_time(t);
  auto snaps = dynten::snapshot_embeddings(ck.params, ck.config, ck.graph, model_grid);

  std::ofstream out(a.out_path);
  if (!out) throw Error("cannot write '" + a.out_path + "'");
  out << "mode,entity,dim,t,value\n";
  std::size_t rows = 0;
  for (int k = 0; k < ck.config.order; ++k) {
    for (int j = 0; j < ck.config.dims[static_cast<std::size_t>(k)]; ++j) {
      for (int r = 0; r < ck.config.rank; ++r) {
        for (std::size_t s = 0; s < raw_grid.size(); ++s) {
          out << k << "," << j << "," << r << "," << format_double(raw_grid[s]) << ","
              << format_double(snaps[s][static_cast<std::size_t>(k)](j, r)) << "\n";
          ++rows;
        }
      }
    }
  }
  std::cout << "wrote " << rows << " trajectory samples to " << a.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string ckpt_path;
  std::string out_path;
  std::vector<double> times;  // raw units; default: 5 points over the training window
  int k = 0;                  // 0 = choose by the elbow rule
  int k_max = 8;
  std::uint64_t seed = 0;
};

int cmd_analyze(const AnalyzeArgs& a) {
  dynten::Checkpoint ck = dynten::load_checkpoint(a.ckpt_path);
  std::vector<double> raw_times = a.times;
  if (raw_times.empty()) {
    raw_times = time_grid(ck.standardizer.time_min, ck.standardizer.time_max, 5);
  }
  std::vector<double> model_times = raw_times;
  for (auto& t : model_times) t = ck.standardizer.model_time(t);
  for (double t : model_times) {
    if (!std::isfinite(t) || t < 0.0) throw Error("analysis times must be finite and inside the model window");
  }
  std::vector<std::size_t> order(model_times.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return model_times[x] < model_times[y]; });
  std::vector<double> sorted_times;
  for (std::size_t i : order) sorted_times.push_back(model_times[i]);

  auto snaps = dynten::snapshot_embeddings(ck.params, ck.config, ck.graph, sorted_times);
  dynten::Rng rng = dynten::Rng::substream(a.seed, "kmeans");

  std::ofstream out(a.out_path);
  if (!out) throw Error("cannot write '" + a.out_path + "'");
  out << "mode,entity,time,label\n";
  for (std::size_t s = 0; s < order.size(); ++s) {
    double raw_t = raw_times[order[s]];
    for (int k = 0; k < ck.config.order; ++k) {
      const Matrix& points = snaps[s][static_cast<std::size_t>(k)];
      int chosen = a.k;
      if (chosen == 0) chosen = dynten::elbow_select(points, a.k_max, rng);
      dynten::KMeansResult res = dynten::kmeans(points, chosen, rng);
      std::cout << "t " << raw_t << " mode " << k << ": k " << chosen << " (wcss "
                << res.wcss << ")\n";
      for (std::size_t j = 0; j < res.labels.size(); ++j) {
        out << k << "," << j << "," << format_double(raw_t) << "," << res.labels[j] << "\n";
      }
    }
  }
  std::cout << "wrote cluster labels to " << a.out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic tensor engine: diffusion-reaction embedding trajectories"};
  app.require_subcommand(1);

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "Generate the two-mode synthetic benchmark");
  synth->add_option("--out", sa.out_dir, "Output directory (must exist)")
      ->required()
      ->check(CLI::ExistingDirectory);
  synth->add_option("--seed", sa.spec.seed, "Random seed")->capture_default_str();
  synth->add_option("--entities", sa.spec.entities_per_mode, "Entities per mode")
      ->capture_default_str();
  synth->add_option("--cluster-size", sa.spec.cluster_size, "Entities in the first cluster")
      ->capture_default_str();
  synth->add_option("--train-count", sa.spec.train_count, "Training observations")
      ->capture_default_str();
  synth->add_option("--test-count", sa.spec.test_count, "Test observations")
      ->capture_default_str();
  synth->add_option("--time-max", sa.spec.time_max, "Upper end of the sampling window")
      ->capture_default_str();
  std::string synth_config;
  synth->add_option("--config", synth_config, "Key=value configuration file")
      ->check(CLI::ExistingFile)
      ->configurable(false);

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "Fit the model to a CSV dataset");
  train->add_option("--train", ta.train_path, "Training CSV (i_1,...,i_K,time,value)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--test", ta.test_path, "Held-out CSV for per-epoch evaluation")
      ->check(CLI::ExistingFile);
  train->add_option("--out", ta.out_dir, "Output directory (must exist)")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--order", ta.order, "Tensor order K")->capture_default_str();
  train->add_option("--dims", ta.dims, "Mode sizes override, comma separated")
      ->delimiter(',');
  train->add_option("--rank", ta.rank, "Embedding dimension per entity")
      ->capture_default_str();
  train->add_option("--reaction-hidden", ta.reaction_hidden,
                    "Reaction net hidden widths (0 for none)")
      ->delimiter(',')
      ->capture_default_str();
  train->add_option("--readout-hidden", ta.readout_hidden,
                    "Readout net hidden widths (0 for none)")
      ->delimiter(',')
      ->capture_default_str();
  train->add_option("--substeps", ta.substeps, "Solver steps per model-time unit")
      ->capture_default_str();
  CLI::Option* diff_only =
      train->add_flag("--diffusion-only", ta.diffusion_only, "Disable the reaction term");
  train->add_flag("--reaction-only", ta.reaction_only, "Disable the diffusion term")
      ->excludes(diff_only);
  train->add_flag("--time-rescale", ta.time_rescale,
                  "Map the training time window onto [0, 1]");
  train->add_option("--sampler", ta.sampler, "Mini-batch scheme")
      ->check(CLI::IsMember({"stratified", "naive"}))
      ->capture_default_str();
  train->add_flag("--stratified-unweighted", ta.stratified_unweighted,
                  "Use N/B weights even for stratified batches");
  train->add_option("--epochs", ta.epochs, "Training epochs")->capture_default_str();
  train->add_option("--batch", ta.batch, "Mini-batch size")->capture_default_str();
  train->add_option("--lr", ta.lr, "Initial learning rate")->capture_default_str();
  train->add_option("--lr-min", ta.lr_min, "Learning-rate floor")->capture_default_str();
  train->add_option("--lr-max", ta.lr_max, "Learning-rate ceiling")->capture_default_str();
  train->add_option("--lr-decay", ta.lr_decay, "Plateau decay factor")->capture_default_str();
  train->add_option("--patience", ta.patience, "Plateau patience, epochs")
      ->capture_default_str();
  train->add_option("--improvement-threshold", ta.improvement_threshold,
                    "Relative improvement that resets the plateau counter")
      ->capture_default_str();
  train->add_option("--seed", ta.seed, "Random seed")->capture_default_str();
  train->add_option("--log-every", ta.log_every, "Progress print cadence (0 silences)")
      ->capture_default_str();
  std::string train_config;
  train->add_option("--config", train_config, "Key=value configuration file")
      ->check(CLI::ExistingFile)
      ->configurable(false);

  EvalArgs ea;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on held-out data");
  eval_cmd->add_option("--checkpoint", ea.ckpt_path, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--test", ea.test_path, "Held-out CSV")
      ->required()
      ->check(CLI::ExistingFile);
  CLI::Option* eval_out = eval_cmd->add_option("--out", ea.out_dir, "Report directory")
                              ->check(CLI::ExistingDirectory);
  eval_cmd->add_flag("--dump-residuals", ea.dump_residuals, "Also write per-row residuals")
      ->needs(eval_out);

  PredictArgs pa;
  CLI::App* predict = app.add_subcommand("predict", "Predict entry means and variances");
  predict->add_option("--checkpoint", pa.ckpt_path, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--queries", pa.query_path, "Query CSV (i_1,...,i_K,time)")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--out", pa.out_path, "Output CSV path")->required();

  ExportArgs xa;
  CLI::App* export_cmd =
      app.add_subcommand("export-trajectories", "Sample learned trajectories on a grid");
  export_cmd->add_option("--checkpoint", xa.ckpt_path, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  export_cmd->add_option("--out", xa.out_path, "Output CSV path")->required();
  export_cmd->add_option("--grid-points", xa.grid_points, "Samples per trajectory")
      ->capture_default_str();
  export_cmd->add_option("--t-min", xa.t_min, "Grid start (default: training window start)");
  export_cmd->add_option("--t-max", xa.t_max, "Grid end (default: training window end)");

  AnalyzeArgs aa;
  CLI::App* analyze = app.add_subcommand("analyze", "Cluster entity embeddings over time");
  analyze->add_option("--checkpoint", aa.ckpt_path, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  analyze->add_option("--out", aa.out_path, "Output CSV path")->required();
  analyze->add_option("--times", aa.times, "Time points, comma separated (raw units)")
      ->delimiter(',');
  analyze->add_option("--k", aa.k, "Cluster count (0 = elbow rule)")->capture_default_str();
  analyze->add_option("--k-max", aa.k_max, "Largest k the elbow rule may pick")
      ->capture_default_str();
  analyze->add_option("--seed", aa.seed, "Random seed")->capture_default_str();

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    bool retry = false;
    try {
      parse_args(app, args);
    } catch (const CLI::RequiredError&) {
      retry = true;  // a config file may supply what is missing
    }
    std::vector<std::string> extra;
    if (synth->parsed() && !synth_config.empty()) {
      extra = config_injections(*synth, synth_config);
    } else if (train->parsed() && !train_config.empty()) {
      extra = config_injections(*train, train_config);
    }
    if (!extra.empty() || retry) {
      std::vector<std::string> expanded = args;
      expanded.insert(expanded.end(), extra.begin(), extra.end());
      parse_args(app, expanded);
    }
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;  // a malformed config file is a usage error
  }

  try {
    if (synth->parsed()) return cmd_synth(*synth, sa);
    if (train->parsed()) return cmd_train(*train, ta);
    if (eval_cmd->parsed()) return cmd_eval(ea);
    if (predict->parsed()) return cmd_predict(pa);
    if (export_cmd->parsed()) return cmd_export(xa);
    if (analyze->parsed()) return cmd_analyze(aa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;  // unreachable: a subcommand is required
}
