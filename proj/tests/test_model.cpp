#include <unistd.h>

#include <array>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "moshead/model.hpp"
#include "oracles.hpp"

using namespace moshead;
using model::LabeledExample;
using model::LossKind;
using model::LossSpec;
using model::ModelSpec;

namespace {

ModelSpec linear_spec(std::size_t d) {
  ModelSpec spec;
  spec.input_dim = d;
  return spec;
}

ModelSpec random_spec(numkit::RngState& rng) {
  ModelSpec spec;
  spec.input_dim = 1 + numkit::next_bounded(rng, 16);
  if (numkit::next_uniform(rng) < 0.6)
    spec.hidden_dims.push_back(1 + numkit::next_bounded(rng, 8));
  return spec;
}

}  // namespace

TEST_CASE("forward midpoint, saturation and hand-evaluated sigmoid") {
  const auto spec = linear_spec(3);
  const auto zeros = model::zero_params(spec);
  CHECK(model::forward(spec, zeros, std::vector<double>{5, -2, 7}) == doctest::Approx(3.0));

  auto saturated = model::zero_params(spec);
  saturated.values.back() = 1e4;  // bias
  const double hi = model::forward(spec, saturated, std::vector<double>{0, 0, 0});
  CHECK(std::abs(hi - 5.0) < 1e-6);
  CHECK(hi < 5.0);
  saturated.values.back() = -1e4;
  const double lo = model::forward(spec, saturated, std::vector<double>{0, 0, 0});
  CHECK(std::abs(lo - 1.0) < 1e-6);
  CHECK(lo > 1.0);

  const auto spec2 = linear_spec(2);
  model::ParamVector p = model::zero_params(spec2);
  p.values = {1.0, -1.0, 0.0};  // w = (1,-1), b = 0
  const double score = model::forward(spec2, p, std::vector<double>{2, 1});
  const long double sig1 = 1.0L / (1.0L + std::exp(-1.0L));
  CHECK(score == doctest::Approx(static_cast<double>(1.0L + 4.0L * sig1)).epsilon(1e-12));

  CHECK_THROWS_AS(model::forward(spec2, p, std::vector<double>{1, 2, 3}), Error);
}

TEST_CASE("forward stays strictly inside (1,5) for random probes") {
  numkit::RngState rng{17, 0};
  for (int trial = 0; trial < 100; ++trial) {
    const auto spec = random_spec(rng);
    auto params = model::init_params(spec, rng);
    // blow some weights up to push the sigmoid toward its rails
    for (auto& v : params.values)
      if (numkit::next_uniform(rng) < 0.2) v *= 1e3;
    for (int probe = 0; probe < 100; ++probe) {
      std::vector<double> x(spec.input_dim);
      for (auto& v : x) v = 10.0 * numkit::next_normal(rng);
      const double s = model::forward(spec, params, x);
      REQUIRE(s > 1.0);
      REQUIRE(s < 5.0);
    }
  }
}

TEST_CASE("loss values and calculus") {
  CHECK(model::loss({LossKind::l1}, 3.2, 3.2) == 0.0);
  CHECK(model::loss({LossKind::l1}, 3.0, 4.0) == 1.0);
  CHECK(model::loss({LossKind::mse}, 3.0, 4.0) == 1.0);
  CHECK(model::loss({LossKind::huber, 1.0}, 3.0, 5.0) == doctest::Approx(1.5));
  CHECK(model::loss({LossKind::huber, 1.0}, 3.0, 3.5) == doctest::Approx(0.125));

  // symmetry for l1/mse
  CHECK(model::loss({LossKind::l1}, 2.0, 4.5) == model::loss({LossKind::l1}, 4.5, 2.0));
  CHECK(model::loss({LossKind::mse}, 2.0, 4.5) == model::loss({LossKind::mse}, 4.5, 2.0));

  // non-negative, zero only at pred == target
  numkit::RngState rng{5, 0};
  for (int i = 0; i < 200; ++i) {
    const double p = 1 + 4 * numkit::next_uniform(rng);
    const double t = 1 + 4 * numkit::next_uniform(rng);
    for (auto kind : {LossKind::l1, LossKind::mse, LossKind::huber}) {
      const double v = model::loss({kind, 1.0}, p, t);
      CHECK(v >= 0.0);
      if (p != t) CHECK(v > 0.0);
    }
  }

  // l1 subgradient at the kink is 0
  CHECK(model::dloss_dpred({LossKind::l1}, 2.0, 2.0) == 0.0);
}

TEST_CASE("grad is zero at a perfect fit and invariant under duplication") {
  const auto spec = linear_spec(4);
  numkit::RngState rng{9, 0};
  auto params = model::init_params(spec, rng);
  std::vector<double> x{0.4, -1.0, 2.0, 0.1};
  const double fit = model::forward(spec, params, x);

  for (auto kind : {LossKind::l1, LossKind::mse, LossKind::huber}) {
    std::vector<LabeledExample> batch{{x, fit}};
    const auto g = model::grad(spec, params, batch, {kind, 1.0});
    for (double v : g.values) CHECK(v == 0.0);
  }

  std::vector<double> x2{1.0, 1.0, -2.0, 0.0};
  std::vector<LabeledExample> once{{x2, 2.0}};
  std::vector<LabeledExample> twice{{x2, 2.0}, {x2, 2.0}};
  const auto g1 = model::grad(spec, params, once, {LossKind::mse});
  const auto g2 = model::grad(spec, params, twice, {LossKind::mse});
  CHECK(g1.values == g2.values);
}

TEST_CASE("grad matches central finite differences across specs and losses") {
  numkit::RngState rng{31, 0};
  int tested = 0;
  while (tested < 100) {
    const auto spec = random_spec(rng);
    auto params = model::init_params(spec, rng);
    const std::size_t bs = 1 + numkit::next_bounded(rng, 6);
    std::vector<std::vector<double>> xs(bs);
    std::vector<LabeledExample> batch;
    const LossKind kind =
        std::array{LossKind::l1, LossKind::mse, LossKind::huber}[tested % 3];
    bool ok = true;
    for (auto& x : xs) {
      x.resize(spec.input_dim);
      for (auto& v : x) v = numkit::next_normal(rng);
      const double pred = model::forward(spec, params, x);
      double target = 1.0 + 4.0 * numkit::next_uniform(rng);
      if (kind == LossKind::l1 && std::abs(pred - target) < 1e-3) {
        ok = false;  // stay away from the subgradient kink
        break;
      }
      // keep huber probes away from its |r| = delta seam as well
      if (kind == LossKind::huber && std::abs(std::abs(pred - target) - 1.0) < 1e-3) {
        ok = false;
        break;
      }
      batch.push_back({x, target});
    }
    if (!ok) continue;
    ++tested;
    const auto g = model::grad(spec, params, batch, {kind, 1.0});
    const auto fd = oracle::finite_diff_grad(spec, params, batch, {kind, 1.0});
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double denom = std::max(1e-4, std::abs(g.values[i]) + std::abs(fd[i]));
      REQUIRE(std::abs(g.values[i] - fd[i]) / denom < 1e-5);
    }
  }
}

TEST_CASE("last_layer_split shapes and round trip") {
  const auto lin = linear_spec(5);
  const auto p_lin = model::zero_params(lin);
  const auto v_lin = model::last_layer_split(p_lin);
  CHECK(v_lin.last.size() == 6);
  CHECK(v_lin.frozen.empty());

  ModelSpec mlp;
  mlp.input_dim = 8;
  mlp.hidden_dims = {4};
  numkit::RngState rng{3, 0};
  const auto p = model::init_params(mlp, rng);
  const auto view = model::last_layer_split(p);
  CHECK(view.last.size() == 5);
  CHECK(view.frozen.size() == p.values.size() - 5);

  std::vector<double> glued(view.frozen.begin(), view.frozen.end());
  glued.insert(glued.end(), view.last.begin(), view.last.end());
  CHECK(glued == p.values);
}

TEST_CASE("checkpoint files round trip bit-exactly") {
  ModelSpec spec;
  spec.input_dim = 6;
  spec.hidden_dims = {3};
  numkit::RngState rng{12, 0};
  model::CheckpointFile ckpt;
  ckpt.spec = spec;
  ckpt.params = model::init_params(spec, rng);
  ckpt.seed = 12;
  ckpt.iteration = 777;
  ckpt.feature_norm = dataio::FeatureNorm{{1, 2, 3, 4, 5, 6}, {1, 1, 2, 2, 3, 3}};

  const auto path = std::filesystem::temp_directory_path() /
                    ("moshead_ckpt_" + std::to_string(::getpid()) + ".ckpt");
  model::save_checkpoint(path, ckpt);
  const auto back = model::load_checkpoint(path);
  std::filesystem::remove(path);

  CHECK(back.params.values == ckpt.params.values);
  CHECK(back.iteration == 777);
  CHECK(back.seed == 12);
  CHECK(back.spec.input_dim == 6);
  CHECK(back.spec.hidden_dims == std::vector<std::size_t>{3});
  REQUIRE(back.feature_norm.has_value());
  CHECK(back.feature_norm->mean == ckpt.feature_norm->mean);
  CHECK(back.params.layout.size() == 4);
  CHECK(back.params.layout[0].name == "layer0.weight");
}

TEST_CASE("unbounded output mode is a raw linear head") {
  ModelSpec spec = linear_spec(2);
  spec.output = model::OutputKind::linear;
  model::ParamVector p = model::zero_params(spec);
  p.values = {2.0, -1.0, 0.5};
  CHECK(model::forward(spec, p, std::vector<double>{3, 4}) == doctest::Approx(2.5));
  CHECK(model::dscore_dpreact(spec, 1.7) == 1.0);
  CHECK(model::d2score_dpreact2(spec, 1.7) == 0.0);
}
