#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <vector>

#include "dynten/graph.hpp"
#include "dynten/rng.hpp"
#include "testutil.hpp"

using namespace dynten;

namespace {

Dataset tiny_dataset() {
  // Two modes; pairs (0,0), (0,1), (1,1); the duplicate (0,0) row must not
  // create a second edge.
  Dataset ds;
  ds.order = 2;
  ds.dims = {2, 2};
  ds.observations.push_back(Observation{{0, 0}, 0.1, 1.0});
  ds.observations.push_back(Observation{{0, 1}, 0.2, 2.0});
  ds.observations.push_back(Observation{{0, 0}, 0.3, 3.0});
  ds.observations.push_back(Observation{{1, 1}, 0.4, 4.0});
  return ds;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  }
  return m;
}

// Independent oracle: explicit dense (W - A) U over the stacked vertex set.
EmbeddingState dense_diffusion(const MultiPartiteGraph& g, const EdgeWeights& w,
                               const EmbeddingState& state) {
  std::vector<int> offset(g.dims.size() + 1, 0);
  for (std::size_t k = 0; k < g.dims.size(); ++k) {
    offset[k + 1] = offset[k] + g.dims[k];
  }
  int V = offset.back();
  Matrix W = Matrix::Zero(V, V);
  for (const auto& p : g.pairs) {
    for (std::size_t e = 0; e < p.edge_count(); ++e) {
      int ia = offset[static_cast<std::size_t>(p.mode_a)] + (*p.rows_a)[e];
      int ib = offset[static_cast<std::size_t>(p.mode_b)] + (*p.rows_b)[e];
      double wv = w[static_cast<std::size_t>((*p.weight_ids)[e])];
      W(ia, ib) = wv;
      W(ib, ia) = wv;
    }
  }
  Matrix A = W.rowwise().sum().asDiagonal();
  Matrix U(V, state[0].cols());
  for (std::size_t k = 0; k < state.size(); ++k) {
    U.middleRows(offset[k], g.dims[k]) = state[k];
  }
  Matrix out = (W - A) * U;
  EmbeddingState result;
  for (std::size_t k = 0; k < state.size(); ++k) {
    result.push_back(out.middleRows(offset[k], g.dims[k]));
  }
  return result;
}

MultiPartiteGraph random_graph(Rng& rng, int max_modes = 4, int max_dim = 4) {
  int K = 2 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_modes - 1)));
  Dataset ds;
  ds.order = K;
  ds.dims.resize(static_cast<std::size_t>(K));
  for (auto& d : ds.dims) {
    d = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_dim)));
  }
  int n_obs = 3 + static_cast<int>(rng.uniform_int(10));
  for (int n = 0; n < n_obs; ++n) {
    Observation obs;
    obs.index.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      obs.index[static_cast<std::size_t>(k)] =
          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(ds.dims[static_cast<std::size_t>(k)])));
    }
    obs.time = rng.uniform();
    obs.value = rng.uniform();
    ds.observations.push_back(obs);
  }
  return build_graph(ds);
}

}  // namespace

TEST_CASE("build_graph links co-occurring entities once") {
  MultiPartiteGraph g = build_graph(tiny_dataset());
  REQUIRE(g.weight_count == 3);
  REQUIRE(g.edge_count() == 3);
  REQUIRE(g.pairs.size() == 1);
  REQUIRE(g.pairs[0].mode_a == 0);
  REQUIRE(g.pairs[0].mode_b == 1);
  // First-encounter order: (0,0), (0,1), (1,1).
  REQUIRE(*g.pairs[0].rows_a == ad::IndexList{0, 0, 1});
  REQUIRE(*g.pairs[0].rows_b == ad::IndexList{0, 1, 1});
  REQUIRE(*g.pairs[0].weight_ids == ad::IndexList{0, 1, 2});
}

TEST_CASE("a three-mode observation links every mode pair") {
  Dataset ds;
  ds.order = 3;
  ds.dims = {2, 2, 2};
  ds.observations.push_back(Observation{{0, 1, 1}, 0.0, 1.0});
  MultiPartiteGraph g = build_graph(ds);
  REQUIRE(g.pairs.size() == 3);
  REQUIRE(g.weight_count == 3);
}

TEST_CASE("degree aggregates incident edge weights over partner modes") {
  MultiPartiteGraph g = build_graph(tiny_dataset());
  EdgeWeights w = {0.5, 0.25, 1.0};
  // Entity 0 of mode 0 touches edges (0,0) and (0,1).
  REQUIRE(degree(g, w, 0, 0) == 0.75);
  REQUIRE(degree(g, w, 0, 1) == 1.0);
  REQUIRE(degree(g, w, 1, 1) == 1.25);
  REQUIRE_THROWS_AS(degree(g, EdgeWeights{1.0}, 0, 0), Error);
  REQUIRE_THROWS_AS(degree(g, w, 2, 0), Error);
}

TEST_CASE("unit-weight degree counts incident edges") {
  MultiPartiteGraph g = build_graph(tiny_dataset());
  EdgeWeights w(static_cast<std::size_t>(g.weight_count), 1.0);
  REQUIRE(degree(g, w, 0, 0) == 2.0);
}

TEST_CASE("single-edge diffusion moves mass between the endpoints") {
  Dataset ds;
  ds.order = 2;
  ds.dims = {1, 1};
  ds.observations.push_back(Observation{{0, 0}, 0.0, 1.0});
  MultiPartiteGraph g = build_graph(ds);
  EmbeddingState state = {Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 5.0)};
  EmbeddingState out = apply_diffusion(g, {0.5}, state);
  REQUIRE(out[0](0, 0) == 0.5 * (5.0 - 2.0));
  REQUIRE(out[1](0, 0) == 0.5 * (2.0 - 5.0));
}

TEST_CASE("diffusion matches the dense stacked-operator oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 12; ++trial) {
    MultiPartiteGraph g = random_graph(rng);
    EdgeWeights w(static_cast<std::size_t>(g.weight_count));
    for (auto& x : w) x = rng.uniform(-1.0, 1.0);
    int R = 1 + static_cast<int>(rng.uniform_int(3));
    EmbeddingState state;
    for (int d : g.dims) state.push_back(random_matrix(d, R, rng));
    EmbeddingState got = apply_diffusion(g, w, state);
    EmbeddingState want = dense_diffusion(g, w, state);
    for (std::size_t k = 0; k < state.size(); ++k) {
      REQUIRE((got[k] - want[k]).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("diffusion conserves the stacked column totals") {
  Rng rng(555);
  for (int trial = 0; trial < 10; ++trial) {
    MultiPartiteGraph g = random_graph(rng);
    EdgeWeights w(static_cast<std::size_t>(g.weight_count));
    for (auto& x : w) x = rng.uniform(-1.0, 1.0);
    EmbeddingState state;
    for (int d : g.dims) state.push_back(random_matrix(d, 3, rng));
    EmbeddingState out = apply_diffusion(g, w, state);
    Matrix total = Matrix::Zero(1, 3);
    for (const auto& block : out) total += block.colwise().sum();
    REQUIRE(total.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("diffusion is linear in the state and the weights") {
  Rng rng(31);
  MultiPartiteGraph g = build_graph(tiny_dataset());
  EdgeWeights w = {0.3, -0.2, 0.9};
  EmbeddingState s1 = {random_matrix(2, 2, rng), random_matrix(2, 2, rng)};
  EmbeddingState s2 = {random_matrix(2, 2, rng), random_matrix(2, 2, rng)};
  EmbeddingState mix = {2.0 * s1[0] - 3.0 * s2[0], 2.0 * s1[1] - 3.0 * s2[1]};
  EmbeddingState o1 = apply_diffusion(g, w, s1);
  EmbeddingState o2 = apply_diffusion(g, w, s2);
  EmbeddingState om = apply_diffusion(g, w, mix);
  for (std::size_t k = 0; k < 2; ++k) {
    REQUIRE((om[k] - (2.0 * o1[k] - 3.0 * o2[k])).cwiseAbs().maxCoeff() < 1e-12);
  }
  EdgeWeights w2 = {0.6, -0.4, 1.8};
  EmbeddingState od = apply_diffusion(g, w2, s1);
  for (std::size_t k = 0; k < 2; ++k) {
    REQUIRE((od[k] - 2.0 * o1[k]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("diffusion gradients flow to weights and state") {
  MultiPartiteGraph g = build_graph(tiny_dataset());
  Rng rng(8);
  Matrix w = random_matrix(3, 1, rng);
  Matrix s0 = random_matrix(2, 2, rng);
  Matrix s1 = random_matrix(2, 2, rng);
  Matrix proj0 = random_matrix(2, 2, rng);
  Matrix proj1 = random_matrix(2, 2, rng);

  auto loss_at = [&](const Matrix& wv, const Matrix& a, const Matrix& b) {
    ValueBackend bk;
    auto out = diffusion_term(bk, g, wv, ModeStack<ValueBackend>{a, b});
    return (out[0].cwiseProduct(proj0)).sum() + (out[1].cwiseProduct(proj1)).sum();
  };

  ad::Tape tape;
  TapeBackend bk(&tape);
  auto wv = tape.parameter(w);
  auto a = tape.parameter(s0);
  auto b = tape.parameter(s1);
  auto out = diffusion_term(bk, g, wv, ModeStack<TapeBackend>{a, b});
  auto root = tape.add(tape.sum_all(tape.element_multiply(out[0], tape.constant(proj0))),
                       tape.sum_all(tape.element_multiply(out[1], tape.constant(proj1))));
  tape.backward(root);

  double worst = 0.0;
  auto check = [&](Matrix& target, const Matrix& grad) {
    for (Eigen::Index i = 0; i < target.rows(); ++i) {
      for (Eigen::Index j = 0; j < target.cols(); ++j) {
        double fd = testutil::fd_derivative(&target(i, j),
                                            [&] { return loss_at(w, s0, s1); });
        worst = std::max(worst, testutil::rel_err(grad(i, j), fd));
      }
    }
  };
  check(w, tape.gradient(wv));
  check(s0, tape.gradient(a));
  check(s1, tape.gradient(b));
  REQUIRE(worst < 1e-5);
}

TEST_CASE("apply_diffusion validates shapes") {
  MultiPartiteGraph g = build_graph(tiny_dataset());
  EmbeddingState state = {Matrix::Zero(2, 1), Matrix::Zero(2, 1)};
  REQUIRE_THROWS_AS(apply_diffusion(g, {1.0}, state), ShapeError);
  EmbeddingState bad = {Matrix::Zero(3, 1), Matrix::Zero(2, 1)};
  REQUIRE_THROWS_AS(apply_diffusion(g, {1.0, 1.0, 1.0}, bad), ShapeError);
}

TEST_CASE("mean unweighted degree counts both edge endpoints") {
  MultiPartiteGraph g = build_graph(tiny_dataset());
  // 3 edges over 4 vertices.
  REQUIRE(g.mean_unweighted_degree() == 1.5);
}
