#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "dynten/checkpoint.hpp"
#include "dynten/model.hpp"
#include "testutil.hpp"

using namespace dynten;

namespace {

struct Setup {
  Dataset data;
  MultiPartiteGraph graph;
  ModelConfig config;
  ModelParams params;
};

Setup make_setup(std::vector<int> dims, int rank, std::uint64_t seed,
                 std::vector<int> reaction_hidden = {3}, std::vector<int> readout_hidden = {4}) {
  Setup s;
  s.data.order = static_cast<int>(dims.size());
  s.data.dims = dims;
  Rng rng(seed);
  int n_obs = 6;
  for (int n = 0; n < n_obs; ++n) {
    Observation obs;
    for (int d : dims) {
      obs.index.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(d))));
    }
    obs.time = rng.uniform(0.0, 0.5);
    obs.value = rng.uniform(-1.0, 1.0);
    s.data.observations.push_back(obs);
  }
  s.graph = build_graph(s.data);
  s.config.order = static_cast<int>(dims.size());
  s.config.dims = dims;
  s.config.rank = rank;
  s.config.reaction_hidden = reaction_hidden;
  s.config.readout_hidden = readout_hidden;
  Rng init_rng(seed + 1);
  s.params = init_params(s.config, s.graph, init_rng);
  return s;
}

}  // namespace

TEST_CASE("init_params produces the documented shapes and defaults") {
  Dataset ds;
  ds.order = 2;
  ds.dims = {20, 20};
  Rng pair_rng(9);
  for (int n = 0; n < 40; ++n) {
    ds.observations.push_back(Observation{{static_cast<int>(pair_rng.uniform_int(20)),
                                           static_cast<int>(pair_rng.uniform_int(20))},
                                          pair_rng.uniform(), 0.0});
  }
  MultiPartiteGraph g = build_graph(ds);
  ModelConfig cfg;
  cfg.order = 2;
  cfg.dims = {20, 20};
  cfg.rank = 1;
  Rng rng(3);
  ModelParams p = init_params(cfg, g, rng);
  REQUIRE(p.initial_state.size() == 2);
  REQUIRE(p.initial_state[0].rows() == 20);
  REQUIRE(p.initial_state[0].cols() == 1);
  REQUIRE(p.initial_state[1].rows() == 20);
  REQUIRE(p.edge_weights.rows() == g.weight_count);
  double expected_w = 1.0 / g.mean_unweighted_degree();
  REQUIRE_THAT(p.edge_weights(0, 0), Catch::Matchers::WithinAbs(expected_w, 1e-15));
  REQUIRE(p.log_noise_variance(0, 0) == 0.0);
  REQUIRE(p.noise_variance() == 1.0);
  REQUIRE(p.reaction.size() == 2);
  REQUIRE(p.reaction[0].weights[0].rows() == 10);  // default hidden width
  REQUIRE(p.reaction[0].weights[0].cols() == 2);   // rank + time column
  REQUIRE(p.readout.weights[0].cols() == 2);       // order * rank

  Rng rng2(3);
  ModelParams q = init_params(cfg, g, rng2);
  REQUIRE(p.initial_state[0] == q.initial_state[0]);
  REQUIRE(p.readout.weights[0] == q.readout.weights[0]);
}

TEST_CASE("initial embeddings have the configured small spread") {
  Dataset ds;
  ds.order = 2;
  ds.dims = {300, 300};
  Rng pair_rng(11);
  for (int n = 0; n < 50; ++n) {
    ds.observations.push_back(Observation{{static_cast<int>(pair_rng.uniform_int(300)),
                                           static_cast<int>(pair_rng.uniform_int(300))},
                                          0.0, 0.0});
  }
  MultiPartiteGraph g = build_graph(ds);
  ModelConfig cfg;
  cfg.order = 2;
  cfg.dims = {300, 300};
  cfg.rank = 2;
  Rng rng(5);
  ModelParams p = init_params(cfg, g, rng);
  double ss = 0.0;
  std::size_t count = 0;
  for (const auto& u : p.initial_state) {
    ss += u.cwiseProduct(u).sum();
    count += static_cast<std::size_t>(u.size());
  }
  double sd = std::sqrt(ss / static_cast<double>(count));
  REQUIRE(sd > 0.08);
  REQUIRE(sd < 0.12);
}

TEST_CASE("an identity-like readout exposes one embedding trajectory") {
  Dataset ds;
  ds.order = 2;
  ds.dims = {1, 1};
  ds.observations.push_back(Observation{{0, 0}, 0.2, 0.0});
  MultiPartiteGraph g = build_graph(ds);
  ModelConfig cfg;
  cfg.order = 2;
  cfg.dims = {1, 1};
  cfg.rank = 1;
  cfg.reaction_hidden = {3};
  cfg.readout_hidden = {};  // single linear readout layer
  Rng rng(17);
  ModelParams p = init_params(cfg, g, rng);
  p.readout.weights[0] = Matrix::Zero(1, 2);
  p.readout.weights[0](0, 0) = 1.0;  // pick out the first mode's component
  p.readout.biases[0] = Matrix::Zero(1, 1);

  std::vector<double> times = {0.0, 0.2, 0.45};
  std::vector<Observation> queries;
  for (double t : times) queries.push_back(Observation{{0, 0}, t, 0.0});
  auto preds = predict_entries(p, cfg, g, queries);
  auto snaps = snapshot_embeddings(p, cfg, g, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    REQUIRE(preds[i].mean == snaps[i][0](0, 0));
  }
  REQUIRE(preds[0].mean == p.initial_state[0](0, 0));
}

TEST_CASE("a zero readout predicts zero everywhere") {
  Setup s = make_setup({2, 3}, 1, 21);
  for (auto& w : s.params.readout.weights) w.setZero();
  for (auto& b : s.params.readout.biases) b.setZero();
  auto preds = predict_entries(s.params, s.config, s.graph, s.data.observations);
  for (const auto& p : preds) REQUIRE(p.mean == 0.0);
}

TEST_CASE("predictions at duplicate timestamps coincide") {
  Setup s = make_setup({2, 2}, 1, 22);
  std::vector<Observation> queries = {Observation{{0, 0}, 0.3, 0.0},
                                      Observation{{1, 1}, 0.3, 0.0},
                                      Observation{{0, 0}, 0.3, 0.0}};
  auto preds = predict_entries(s.params, s.config, s.graph, queries);
  REQUIRE(preds[0].mean == preds[2].mean);

  auto [times, which] = unique_sorted_times(queries);
  REQUIRE(times.size() == 1);
  REQUIRE(which == std::vector<int>{0, 0, 0});
}

TEST_CASE("prediction validates entity indices naming the mode") {
  Setup s = make_setup({2, 2}, 1, 23);
  std::vector<Observation> bad = {Observation{{0, 5}, 0.1, 0.0}};
  REQUIRE_THROWS_WITH(predict_entries(s.params, s.config, s.graph, bad),
                      Catch::Matchers::ContainsSubstring("mode 1"));
}

TEST_CASE("predictions agree with a manual snapshot-and-readout route") {
  Setup s = make_setup({3, 2}, 2, 24);
  std::vector<Observation> queries = {Observation{{2, 0}, 0.15, 0.0},
                                      Observation{{0, 1}, 0.4, 0.0}};
  auto preds = predict_entries(s.params, s.config, s.graph, queries);
  auto snaps = snapshot_embeddings(s.params, s.config, s.graph, {0.15, 0.4});
  for (std::size_t i = 0; i < queries.size(); ++i) {
    Matrix x(1, 4);
    x.block(0, 0, 1, 2) = snaps[i][0].row(queries[i].index[0]);
    x.block(0, 2, 1, 2) = snaps[i][1].row(queries[i].index[1]);
    Matrix y = nn::mlp_apply(s.params.readout, x);
    REQUIRE_THAT(preds[i].mean, Catch::Matchers::WithinRel(y(0, 0), 1e-12));
  }
}

TEST_CASE("the objective hits its closed form under perfect predictions") {
  Setup s = make_setup({2, 2}, 1, 25);
  for (auto& net : s.params.reaction) {
    for (auto& w : net.weights) w.setZero();
    for (auto& b : net.biases) b.setZero();
  }
  for (auto& w : s.params.readout.weights) w.setZero();
  for (auto& b : s.params.readout.biases) b.setZero();
  s.params.log_noise_variance.setZero();

  std::vector<Observation> batch = s.data.observations;
  for (auto& obs : batch) obs.value = 0.0;  // predictions are zero too
  std::vector<double> weights(batch.size(), 1.0);
  double loss = negative_log_joint_value(s.params, s.config, s.graph, batch, weights);
  double b = static_cast<double>(batch.size());
  double p = static_cast<double>(prior_param_count(s.params));
  double want = 0.5 * b * std::log(2.0 * M_PI) + 0.5 * p * std::log(2.0 * M_PI);
  REQUIRE_THAT(loss, Catch::Matchers::WithinRel(want, 1e-12));
}

TEST_CASE("batch weights scale the likelihood part only") {
  Setup s = make_setup({2, 2}, 1, 26);
  std::vector<Observation> batch = s.data.observations;
  std::vector<double> w1(batch.size(), 1.0);
  std::vector<double> w2(batch.size(), 2.0);
  double l1 = negative_log_joint_value(s.params, s.config, s.graph, batch, w1);
  double l2 = negative_log_joint_value(s.params, s.config, s.graph, batch, w2);

  double prior_ss = 0.0;
  std::size_t p_count = prior_param_count(s.params);
  for (const auto& net : s.params.reaction) {
    for (const auto& w : net.weights) prior_ss += w.cwiseProduct(w).sum();
    for (const auto& b : net.biases) prior_ss += b.cwiseProduct(b).sum();
  }
  for (const auto& w : s.params.readout.weights) prior_ss += w.cwiseProduct(w).sum();
  for (const auto& b : s.params.readout.biases) prior_ss += b.cwiseProduct(b).sum();
  double prior = 0.5 * prior_ss + 0.5 * static_cast<double>(p_count) * std::log(2.0 * M_PI);

  REQUIRE_THAT(l2 - l1, Catch::Matchers::WithinRel(l1 - prior, 1e-9));
}

TEST_CASE("the noise gradient vanishes at the weighted residual variance") {
  Setup s = make_setup({2, 2}, 1, 27);
  std::vector<Observation> batch = s.data.observations;
  std::vector<double> weights = {1.0, 2.0, 0.5, 1.5, 1.0, 3.0};
  auto preds = predict_entries(s.params, s.config, s.graph, batch);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double r = batch[i].value - preds[i].mean;
    num += weights[i] * r * r;
    den += weights[i];
  }
  s.params.log_noise_variance(0, 0) = std::log(num / den);

  ad::Tape tape;
  TapeBackend bk(&tape);
  auto bound = bind_model(bk, s.params, s.config, s.graph);
  auto root = negative_log_joint(bk, bound, batch, weights);
  tape.backward(root);
  double g = tape.gradient(bound.log_noise_variance)(0, 0);
  REQUIRE(std::abs(g) < 1e-10);
}

TEST_CASE("tape and value routes compute the same objective") {
  Setup s = make_setup({3, 2}, 2, 28);
  std::vector<Observation> batch = s.data.observations;
  std::vector<double> weights = {0.5, 1.0, 2.0, 1.0, 0.25, 4.0};
  ad::Tape tape;
  TapeBackend bk(&tape);
  auto bound = bind_model(bk, s.params, s.config, s.graph);
  double on_tape = tape.value(negative_log_joint(bk, bound, batch, weights))(0, 0);
  double off_tape = negative_log_joint_value(s.params, s.config, s.graph, batch, weights);
  REQUIRE(on_tape == off_tape);
}

TEST_CASE("objective validates weights") {
  Setup s = make_setup({2, 2}, 1, 29);
  std::vector<Observation> batch = s.data.observations;
  std::vector<double> bad(batch.size(), 1.0);
  bad[2] = 0.0;
  ValueBackend bk;
  auto bound = bind_model(bk, s.params, s.config, s.graph);
  REQUIRE_THROWS_AS(negative_log_joint(bk, bound, batch, bad), Error);
  std::vector<double> short_w(batch.size() - 1, 1.0);
  REQUIRE_THROWS_AS(negative_log_joint(bk, bound, batch, short_w), Error);
  REQUIRE_THROWS_AS(negative_log_joint(bk, bound, {}, {}), Error);
}

TEST_CASE("end-to-end gradients match finite differences on a tiny instance") {
  Setup s = make_setup({2, 2}, 2, 30);
  std::vector<Observation> batch = s.data.observations;
  std::vector<double> weights = {1.0, 2.0, 0.5, 1.0, 1.5, 1.0};

  ad::Tape tape;
  TapeBackend bk(&tape);
  auto bound = bind_model(bk, s.params, s.config, s.graph);
  auto root = negative_log_joint(bk, bound, batch, weights);
  tape.backward(root);
  std::vector<Matrix> grads;
  for (auto leaf : bound.param_leaves) grads.push_back(tape.gradient(leaf));

  auto loss_at = [&] {
    return negative_log_joint_value(s.params, s.config, s.graph, batch, weights);
  };
  double worst = 0.0;
  std::size_t slot = 0;
  for_each_param(s.params, [&](const std::string& name, Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double fd = testutil::fd_derivative(&m(i, j), loss_at);
        double err = testutil::rel_err(grads[slot](i, j), fd);
        INFO(name << "(" << i << "," << j << ")");
        CHECK(err < 1e-4);
        worst = std::max(worst, err);
      }
    }
    ++slot;
  });
  REQUIRE(worst < 1e-4);
}

TEST_CASE("checkpoints round-trip every field bitwise") {
  Setup s = make_setup({3, 2}, 2, 31);
  Standardizer st;
  st.value_mean = -18.649993282094;
  st.value_std = 43.19221134;
  st.time_min = 0.25;
  st.time_max = 4.75;
  st.rescale_time = true;
  save_checkpoint("model_roundtrip.ckpt", s.config, s.params, s.graph, st);
  std::ifstream tmp("model_roundtrip.ckpt.tmp");
  REQUIRE_FALSE(tmp.good());  // temp file renamed away

  Checkpoint ck = load_checkpoint("model_roundtrip.ckpt");
  REQUIRE(ck.config.dims == s.config.dims);
  REQUIRE(ck.config.rank == s.config.rank);
  REQUIRE(ck.config.reaction_hidden == s.config.reaction_hidden);
  REQUIRE(ck.config.readout_hidden == s.config.readout_hidden);
  REQUIRE(ck.config.solver.substeps_per_unit_time == s.config.solver.substeps_per_unit_time);
  REQUIRE(ck.standardizer.value_mean == st.value_mean);
  REQUIRE(ck.standardizer.value_std == st.value_std);
  REQUIRE(ck.standardizer.time_min == st.time_min);
  REQUIRE(ck.standardizer.time_max == st.time_max);
  REQUIRE(ck.standardizer.rescale_time == st.rescale_time);
  REQUIRE(ck.graph.weight_count == s.graph.weight_count);
  REQUIRE(ck.graph.pairs.size() == s.graph.pairs.size());
  for (std::size_t b = 0; b < s.graph.pairs.size(); ++b) {
    REQUIRE(*ck.graph.pairs[b].rows_a == *s.graph.pairs[b].rows_a);
    REQUIRE(*ck.graph.pairs[b].rows_b == *s.graph.pairs[b].rows_b);
    REQUIRE(*ck.graph.pairs[b].weight_ids == *s.graph.pairs[b].weight_ids);
  }
  std::vector<Matrix> original;
  for_each_param(s.params, [&](const std::string&, const Matrix& m) { original.push_back(m); });
  std::size_t slot = 0;
  for_each_param(ck.params, [&](const std::string&, const Matrix& m) {
    REQUIRE(m == original[slot]);
    ++slot;
  });

  std::remove("model_roundtrip.ckpt");
}

TEST_CASE("loading a truncated checkpoint fails cleanly") {
  Setup s = make_setup({2, 2}, 1, 32);
  Standardizer st;
  save_checkpoint("model_trunc.ckpt", s.config, s.params, s.graph, st);
  std::ifstream in("model_trunc.ckpt");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  testutil::write_text("model_trunc.ckpt", content.substr(0, content.size() / 2));
  REQUIRE_THROWS_AS(load_checkpoint("model_trunc.ckpt"), Error);
  std::remove("model_trunc.ckpt");
}
