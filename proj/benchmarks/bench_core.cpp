#include <benchmark/benchmark.h>

#include <vector>

#include "moshead/influence.hpp"
#include "moshead/metrics.hpp"
#include "moshead/model.hpp"
#include "moshead/numkit.hpp"
#include "moshead/swag.hpp"
#include "moshead/synth.hpp"

using namespace moshead;

namespace {

numkit::DenseMatrix random_spd(numkit::RngState& rng, std::size_t n) {
  numkit::DenseMatrix m(n, n);
  for (auto& v : m.data()) v = numkit::next_normal(rng);
  numkit::DenseMatrix spd(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = (i == j) ? 0.5 : 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += m(i, k) * m(j, k);
      spd(i, j) = acc;
    }
  return spd;
}

void BM_SolveDamped(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  numkit::RngState rng{1, 0};
  const auto a = random_spd(rng, n);
  std::vector<double> b(n);
  for (auto& v : b) v = numkit::next_normal(rng);
  for (auto _ : state) {
    auto x = numkit::solve_damped(a, b, 0.01);
    benchmark::DoNotOptimize(x);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SolveDamped)->RangeMultiplier(2)->Range(8, 256)->Complexity();

void BM_GradMlp(benchmark::State& state) {
  model::ModelSpec spec;
  spec.input_dim = 16;
  spec.hidden_dims = {8};
  numkit::RngState rng{2, 0};
  const auto params = model::init_params(spec, rng);
  const auto bs = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<double>> xs(bs, std::vector<double>(16));
  std::vector<model::LabeledExample> batch;
  for (auto& x : xs) {
    for (auto& v : x) v = numkit::next_normal(rng);
    batch.push_back({x, 3.0});
  }
  for (auto _ : state) {
    auto g = model::grad(spec, params, batch, {model::LossKind::l1});
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(BM_GradMlp)->Arg(1)->Arg(8)->Arg(64);

void BM_KendallTau(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  numkit::RngState rng{3, 0};
  std::vector<double> a(n), b(n);
  for (auto& v : a) v = static_cast<double>(numkit::next_bounded(rng, 32));
  for (auto& v : b) v = static_cast<double>(numkit::next_bounded(rng, 32));
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::kendall_ktau(a, b));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KendallTau)->RangeMultiplier(4)->Range(64, 16384)->Complexity();

void BM_SwagSample(benchmark::State& state) {
  model::ModelSpec spec;
  spec.input_dim = static_cast<std::size_t>(state.range(0)) - 1;
  auto post = swag::make_posterior(spec);
  numkit::RngState rng{4, 0};
  for (int i = 0; i < 20; ++i) {
    auto snap = model::zero_params(spec);
    for (auto& v : snap.values) v = numkit::next_normal(rng);
    swag::swa_update(post, snap);
  }
  numkit::RngState sample_rng{5, 0};
  for (auto _ : state) {
    auto theta = swag::sample_params(post, sample_rng, swag::SampleMode::diag_lowrank);
    benchmark::DoNotOptimize(theta);
  }
}
BENCHMARK(BM_SwagSample)->Arg(16)->Arg(256)->Arg(4096);

void BM_DebugRank(benchmark::State& state) {
  synth::SynthConfig gen;
  gen.train_systems = static_cast<std::size_t>(state.range(0));
  gen.train_utts = 5;
  gen.feature_dim = 8;
  gen.dev_systems = 0;
  gen.test_systems = 0;
  gen.corrupt = 2;
  const auto data = synth::generate(gen);
  model::ModelSpec spec;
  spec.input_dim = 8;
  numkit::RngState rng{6, 0};
  const auto params = model::init_params(spec, rng);
  influence::InfluenceConfig cfg;
  cfg.worst_k = 5;
  cfg.damping = 10.0;  // untrained params: damp hard so the solve succeeds
  cfg.gradient_loss = {model::LossKind::mse};
  for (auto _ : state) {
    auto report = influence::debug_rank(spec, params, data.train, cfg);
    benchmark::DoNotOptimize(report);
  }
}
BENCHMARK(BM_DebugRank)->Arg(20)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
