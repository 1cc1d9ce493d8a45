// Acceptance suite: one line per criterion, exit 0 only if all pass.

#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "json.hpp"
#include "moshead/influence.hpp"
#include "moshead/metrics.hpp"
#include "moshead/swag.hpp"
#include "moshead/synth.hpp"
#include "moshead/trainer.hpp"
#include "oracles.hpp"

using namespace moshead;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_workdir;

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int cli(std::initializer_list<std::string> args) {
  return cli::run(std::vector<std::string>(args));
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. analytic gradients vs central finite differences

Outcome criterion_gradients() {
  numkit::RngState rng{10101, 0};
  double worst = 0.0;
  int tested = 0;
  while (tested < 100) {
    model::ModelSpec spec;
    spec.input_dim = 1 + numkit::next_bounded(rng, 16);
    if (numkit::next_uniform(rng) < 0.6)
      spec.hidden_dims.push_back(1 + numkit::next_bounded(rng, 8));
    auto params = model::init_params(spec, rng);
    const model::LossKind kind =
        std::array{model::LossKind::l1, model::LossKind::mse,
                   model::LossKind::huber}[tested % 3];
    const std::size_t bs = 1 + numkit::next_bounded(rng, 7);
    std::vector<std::vector<double>> xs(bs);
    std::vector<model::LabeledExample> batch;
    bool usable = true;
    for (auto& x : xs) {
      x.resize(spec.input_dim);
      for (auto& v : x) v = numkit::next_normal(rng);
      const double pred = model::forward(spec, params, x);
      const double target = 1.0 + 4.0 * numkit::next_uniform(rng);
      if (kind == model::LossKind::l1 && std::abs(pred - target) < 1e-3) usable = false;
      if (kind == model::LossKind::huber &&
          std::abs(std::abs(pred - target) - 1.0) < 1e-3)
        usable = false;
      batch.push_back({x, target});
    }
    if (!usable) continue;
    ++tested;
    const auto g = model::grad(spec, params, batch, {kind, 1.0});
    const auto fd = oracle::finite_diff_grad(spec, params, batch, {kind, 1.0}, 1e-6);
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double denom = std::max(1e-4, std::abs(g.values[i]) + std::abs(fd[i]));
      worst = std::max(worst, std::abs(g.values[i] - fd[i]) / denom);
    }
  }
  return {worst < 1e-5, "max relative error " + fmt(worst, 3) + " over 100 triples"};
}

// ---------------------------------------------------------------------------
// 2. SWA running moments vs from-scratch averages

Outcome criterion_swa_exactness() {
  model::ModelSpec spec;
  spec.input_dim = 99;  // 100 parameters
  const std::size_t dim = model::param_count(spec);
  numkit::RngState rng{20202, 0};

  double worst_mean = 0.0, worst_var = 0.0;
  for (const std::size_t n : {std::size_t{15}, std::size_t{1000}}) {
    auto post = swag::make_posterior(spec, 20);
    std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto snap = model::zero_params(spec);
      for (auto& v : snap.values) v = 0.5 + 3.0 * numkit::next_normal(rng);
      for (std::size_t j = 0; j < dim; ++j) {
        sum[j] += snap.values[j];
        sumsq[j] += snap.values[j] * snap.values[j];
      }
      swag::swa_update(post, snap);
    }
    const auto var = swag::diagonal_variance(post);
    for (std::size_t j = 0; j < dim; ++j) {
      const double mean = sum[j] / static_cast<double>(n);
      worst_mean = std::max(worst_mean,
                            std::abs(post.mean[j] - mean) / std::max(1.0, std::abs(mean)));
      const double pvar = sumsq[j] / static_cast<double>(n) - mean * mean;
      if (n <= post.rank_max) worst_var = std::max(worst_var, std::abs(var[j] - pvar));
    }
  }
  return {worst_mean <= 1e-12 && worst_var <= 1e-10,
          "mean rel err " + fmt(worst_mean, 3) + ", variance err " + fmt(worst_var, 3)};
}

// ---------------------------------------------------------------------------
// 3. sampler statistics against the analytic covariance

Outcome criterion_sampler_statistics() {
  model::ModelSpec spec;
  spec.input_dim = 9;  // 10 parameters
  const std::size_t dim = model::param_count(spec);
  auto post = swag::make_posterior(spec, 20);
  numkit::RngState rng{30303, 0};
  for (int i = 0; i < 12; ++i) {
    auto snap = model::zero_params(spec);
    for (std::size_t j = 0; j < dim; ++j)
      snap.values[j] = 0.2 * static_cast<double>(j) + 0.8 * numkit::next_normal(rng);
    swag::swa_update(post, snap);
  }

  const auto var = swag::diagonal_variance(post);
  const std::size_t rank = post.deviations.size();
  std::vector<std::vector<double>> sigma(dim, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < dim; ++i) sigma[i][i] = 0.5 * var[i];
  const double lowrank_scale = 1.0 / (2.0 * static_cast<double>(rank - 1));
  for (std::size_t c = 0; c < rank; ++c)
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        sigma[i][j] += post.deviations[c][i] * post.deviations[c][j] * lowrank_scale;

  const std::size_t n = 50000;
  numkit::RngState sample_rng{99, 0};
  std::vector<double> mean(dim, 0.0);
  std::vector<std::vector<double>> cov(dim, std::vector<double>(dim, 0.0));
  std::vector<std::vector<double>> draws;
  draws.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto theta = swag::sample_params(post, sample_rng, swag::SampleMode::diag_lowrank);
    for (std::size_t i = 0; i < dim; ++i) mean[i] += theta.values[i];
    draws.push_back(std::move(theta.values));
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  for (const auto& d : draws)
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        cov[i][j] += (d[i] - mean[i]) * (d[j] - mean[j]);
  for (auto& row : cov)
    for (auto& v : row) v /= static_cast<double>(n);

  double worst_se = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double se = std::sqrt(sigma[i][i] / static_cast<double>(n));
    worst_se = std::max(worst_se, std::abs(mean[i] - post.mean[i]) / se);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      num += (cov[i][j] - sigma[i][j]) * (cov[i][j] - sigma[i][j]);
      den += sigma[i][j] * sigma[i][j];
    }
  const double frob = std::sqrt(num / den);
  return {worst_se <= 4.0 && frob <= 0.05,
          "worst mean deviation " + fmt(worst_se, 3) + " SE, covariance error " +
              fmt(100.0 * frob, 3) + "% Frobenius (50k samples, dim 10)"};
}

// ---------------------------------------------------------------------------
// 4. BMA degeneracy: zero covariance and mean-only collapse to forward(mean)

Outcome criterion_bma_degeneracy() {
  model::ModelSpec spec;
  spec.input_dim = 3;
  numkit::RngState rng{40404, 0};

  // dyadic values keep the running moments exact, covariance exactly zero
  auto flat = swag::make_posterior(spec);
  auto snap = model::zero_params(spec);
  for (std::size_t j = 0; j < snap.values.size(); ++j)
    snap.values[j] = (j % 2 ? -0.25 : 0.5) + 0.125 * static_cast<double>(j);
  for (int i = 0; i < 7; ++i) swag::swa_update(flat, snap);
  for (double v : swag::diagonal_variance(flat))
    if (v != 0.0) return {false, "constructed posterior has nonzero variance"};

  auto spread = swag::make_posterior(spec);
  for (int i = 0; i < 8; ++i) {
    auto s = model::zero_params(spec);
    for (auto& v : s.values) v = numkit::next_normal(rng);
    swag::swa_update(spread, s);
  }

  for (int probe = 0; probe < 50; ++probe) {
    std::vector<double> x(3);
    for (auto& v : x) v = numkit::next_normal(rng);
    const double flat_ref = model::forward(spec, swag::mean_params(flat), x);
    const double spread_ref = model::forward(spec, swag::mean_params(spread), x);
    for (std::size_t k : {1u, 2u, 3u, 10u}) {
      const auto zero_cov =
          swag::bma_predict(flat, x, {k, 777, swag::SampleMode::diag_lowrank});
      if (zero_cov.mean_score != flat_ref)
        return {false, "zero-covariance BMA drifted from forward(mean) at K=" +
                           std::to_string(k)};
      const auto mean_only =
          swag::bma_predict(spread, x, {k, 777, swag::SampleMode::mean_only});
      if (mean_only.mean_score != spread_ref)
        return {false, "mean-only BMA drifted from forward(mean) at K=" +
                           std::to_string(k)};
    }
  }
  return {true, "exact equality over 50 probes, K in {1,2,3,10}"};
}

// ---------------------------------------------------------------------------
// 5. influence scores vs leave-one-out retraining (convex last layer)

Outcome criterion_influence_loo() {
  const std::size_t n = 40, d = 5;
  numkit::RngState rng{50505, 0};
  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  std::vector<double> y(n);
  std::vector<double> w(d);
  for (auto& v : w) v = numkit::next_normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x[i][j] = numkit::next_normal(rng);
    y[i] = 0.3;
    for (std::size_t j = 0; j < d; ++j) y[i] += w[j] * x[i][j];
    y[i] += 0.4 * numkit::next_normal(rng);
  }

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const auto theta = oracle::least_squares(x, y, all);

  model::ModelSpec spec;
  spec.input_dim = d;
  spec.output = model::OutputKind::linear;
  auto params = model::zero_params(spec);
  params.values = theta;

  dataio::Dataset data;
  data.feature_dim = d;
  for (std::size_t i = 0; i < n; ++i)
    data.records.push_back({"u" + std::to_string(i), "s", x[i], y[i]});

  influence::InfluenceConfig cfg;
  cfg.damping = 0.01;
  cfg.gradient_loss = {model::LossKind::mse};
  cfg.worst_k = 3;
  const auto report = influence::debug_rank(spec, params, data, cfg);

  std::vector<std::size_t> test_rows;
  for (const auto& id : report.test_ids)
    test_rows.push_back(static_cast<std::size_t>(std::stoul(id.substr(1))));
  auto loss_at = [&](const std::vector<double>& th, std::size_t row) {
    double pred = th[d];
    for (std::size_t j = 0; j < d; ++j) pred += th[j] * x[row][j];
    return (pred - y[row]) * (pred - y[row]);
  };
  double base = 0;
  for (auto t : test_rows) base += loss_at(theta, t);
  base /= static_cast<double>(test_rows.size());

  std::vector<double> predicted(n), actual(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < n; ++r)
      if (r != i) rows.push_back(r);
    const auto th = oracle::least_squares(x, y, rows);
    double after = 0;
    for (auto t : test_rows) after += loss_at(th, t);
    actual[i] = after / static_cast<double>(test_rows.size()) - base;
    predicted[i] = -(1.0 / static_cast<double>(n)) * report.per_point[i].i_up_loss;
  }
  const double rho = metrics::spearman_srcc(predicted, actual);
  return {rho >= 0.9, "Spearman(predicted, retrained) = " + fmt(rho, 4) +
                          " over n=40 points (threshold 0.9)"};
}

// ---------------------------------------------------------------------------
// 6. corrupted-label detection across seeds

struct DetectionRun {
  dataio::Dataset train;
  std::vector<std::string> corrupted;
  model::ModelSpec spec;
  model::ParamVector params;
};

DetectionRun train_corrupted(std::uint64_t seed, synth::SynthResult* keep_gen = nullptr) {
  synth::SynthConfig gen;
  gen.train_systems = 20;
  gen.train_utts = 5;
  gen.feature_dim = 5;
  gen.noise = 0.3;
  gen.corrupt = 2;
  gen.seed = seed;
  gen.dev_systems = 10;
  gen.test_systems = 10;
  gen.test_utts = 10;
  auto result = synth::generate(gen);

  DetectionRun run;
  run.spec.input_dim = gen.feature_dim;
  trainer::TrainConfig cfg;
  // stop right after a fully annealed cosine phase so the params settle
  cfg.iterations = 3100;
  cfg.lr = 0.02;
  cfg.batch_size = 8;
  cfg.loss = {model::LossKind::mse};
  cfg.seed = seed + 1;
  cfg.checkpoint_interval = 3100;
  const auto cks = trainer::train(run.spec, result.train, nullptr, cfg);
  run.params = cks.back().params;
  run.train = result.train;
  run.corrupted = result.corrupted_ids;
  if (keep_gen) *keep_gen = std::move(result);
  return run;
}

Outcome criterion_detection() {
  int hits = 0;
  std::string misses;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto run = train_corrupted(seed);
    influence::InfluenceConfig cfg;
    cfg.worst_k = 5;
    cfg.gradient_loss = {model::LossKind::mse};
    const auto report = influence::debug_rank(run.spec, run.params, run.train, cfg);

    const std::set<std::string> top5(report.ranking.begin(), report.ranking.begin() + 5);
    bool in_top5 = true;
    for (const auto& id : run.corrupted) in_top5 &= top5.count(id) > 0;

    std::vector<double> scores;
    for (const auto& p : report.per_point) scores.push_back(p.neg_i_up_loss);
    std::vector<double> sorted = scores;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    bool strong = true;
    for (const auto& p : report.per_point)
      if (std::find(run.corrupted.begin(), run.corrupted.end(), p.utterance_id) !=
          run.corrupted.end())
        strong &= p.neg_i_up_loss >= 5.0 * median;

    if (in_top5 && strong) {
      ++hits;
    } else {
      misses += " seed" + std::to_string(seed) + (in_top5 ? "[5x-median]" : "[top5]");
    }
  }
  return {hits >= 9, std::to_string(hits) + "/10 seeds flag both corrupted ids" +
                         (misses.empty() ? "" : "; missed:" + misses)};
}

// ---------------------------------------------------------------------------
// 7. metric implementations vs brute-force references

Outcome criterion_metric_equivalence() {
  numkit::RngState rng{70707, 0};
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + numkit::next_bounded(rng, 60);
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = static_cast<double>(numkit::next_bounded(rng, 8));
    for (auto& v : b) v = static_cast<double>(numkit::next_bounded(rng, 8));
    const bool a_const = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; });
    const bool b_const = std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
    if (a_const || b_const) continue;
    if (metrics::kendall_ktau(a, b) != oracle::naive_kendall(a, b))
      return {false, "kendall mismatch at trial " + std::to_string(trial)};
    const auto ra = metrics::average_ranks(a);
    const auto rb = metrics::average_ranks(b);
    if (metrics::spearman_srcc(a, b) != metrics::pearson_lcc(ra, rb))
      return {false, "spearman != pearson of ranks at trial " + std::to_string(trial)};
  }

  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    dataio::Dataset d;
    std::map<std::string, double> preds;
    for (std::size_t s = 0; s < 20; ++s) {
      const std::size_t utts = 2 + numkit::next_bounded(rng, 9);
      for (std::size_t u = 0; u < utts; ++u) {
        const std::string id = "s" + std::to_string(s) + "u" + std::to_string(u);
        d.records.push_back({id, "sys" + std::to_string(s), {},
                             1.0 + 4.0 * numkit::next_uniform(rng)});
        preds[id] = 1.0 + 4.0 * numkit::next_uniform(rng);
      }
    }
    const auto rep = metrics::evaluate(preds, d);
    const auto ref = oracle::naive_evaluate(preds, d);
    for (double diff : {rep.utterance.mse - ref.utterance.mse,
                        rep.utterance.lcc - ref.utterance.lcc,
                        rep.utterance.srcc - ref.utterance.srcc,
                        rep.utterance.ktau - ref.utterance.ktau,
                        rep.system.mse - ref.system.mse,
                        rep.system.lcc - ref.system.lcc,
                        rep.system.srcc - ref.system.srcc,
                        rep.system.ktau - ref.system.ktau})
      worst = std::max(worst, std::abs(diff));
  }
  return {worst <= 1e-12, "1000 tau-b vectors exact, evaluate max deviation " +
                              fmt(worst, 3) + " on 20-system instances"};
}

// ---------------------------------------------------------------------------
// 8. end-to-end desk-scale pipeline through the CLI

Outcome criterion_end_to_end() {
  const fs::path base = g_workdir / "e2e";
  const std::string data = (base / "data").string();
  if (cli({"gen-synth", "--out", data, "--systems", "20", "--utts", "10",
           "--dev-systems", "10", "--test-systems", "10", "--feature-dim", "16",
           "--noise", "0.3", "--seed", "8080"}) != 0)
    return {false, "gen-synth failed"};

  const std::string train_dir = (base / "train").string();
  if (cli({"train", "--train-table", data + "/train.csv", "--train-features",
           data + "/train.swgf", "--dev-table", data + "/dev.csv", "--dev-features",
           data + "/dev.swgf", "--out", train_dir, "--iterations", "3000", "--lr",
           "0.02", "--loss", "l1", "--batch-size", "8", "--seed", "42",
           "--checkpoint-interval", "1000"}) != 0)
    return {false, "train failed"};

  const std::string swag_dir = (base / "swag").string();
  if (cli({"swag", "--train-table", data + "/train.csv", "--train-features",
           data + "/train.swgf", "--dev-table", data + "/dev.csv", "--dev-features",
           data + "/dev.swgf", "--from-checkpoint", train_dir + "/final_checkpoint.ckpt",
           "--out", swag_dir, "--iterations", "600", "--lr", "0.02", "--loss", "l1",
           "--batch-size", "4", "--accum-steps", "2", "--snapshot-every", "12",
           "--seed", "43"}) != 0)
    return {false, "swag failed"};

  auto predict_and_eval = [&](const std::string& tag,
                              std::initializer_list<std::string> source_args,
                              const std::string& split) -> metrics::MetricReport {
    std::vector<std::string> args{"predict"};
    args.insert(args.end(), source_args);
    const std::string pred_dir = (base / (tag + "_pred_" + split)).string();
    args.insert(args.end(),
                {"--table", data + "/" + split + ".csv", "--features",
                 data + "/" + split + ".swgf", "--out", pred_dir, "--k", "10",
                 "--seed", "44"});
    if (cli::run(args) != 0) throw Error::internal("predict failed for " + tag);
    const std::string eval_dir = (base / (tag + "_eval_" + split)).string();
    if (cli({"evaluate", "--predictions", pred_dir + "/predictions.csv", "--table",
             data + "/" + split + ".csv", "--out", eval_dir}) != 0)
      throw Error::internal("evaluate failed for " + tag);
    return metrics::report_from_json_string(read_file(eval_dir + "/metrics.json"));
  };

  const auto bma_test = predict_and_eval(
      "bma", {"--posterior", swag_dir + "/posterior.post"}, "test");
  const auto bma_dev = predict_and_eval(
      "bma", {"--posterior", swag_dir + "/posterior.post"}, "dev");
  const auto sgd_test = predict_and_eval(
      "sgd", {"--checkpoint", train_dir + "/final_checkpoint.ckpt"}, "test");
  const auto sgd_dev = predict_and_eval(
      "sgd", {"--checkpoint", train_dir + "/final_checkpoint.ckpt"}, "dev");

  std::ostringstream detail;
  detail << "test system SRCC: SWAG-BMA " << fmt(bma_test.system.srcc, 4) << ", plain SGD "
         << fmt(sgd_test.system.srcc, 4) << "; dev system SRCC: SWAG-BMA "
         << fmt(bma_dev.system.srcc, 4) << ", plain SGD " << fmt(sgd_dev.system.srcc, 4)
         << " (threshold 0.9 on SWAG-BMA test)";
  return {bma_test.system.srcc >= 0.9, detail.str()};
}

// ---------------------------------------------------------------------------
// 9. filtering the influence-identified points does not hurt test MSE

Outcome criterion_filtering() {
  int ok = 0;
  std::string details;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    synth::SynthResult gen;
    const auto run = train_corrupted(seed, &gen);

    auto pipeline_mse = [&](const dataio::Dataset& train_set) {
      trainer::SwagPhaseConfig phase;
      phase.sgd.iterations = 3100;
      phase.sgd.lr = 0.02;
      phase.sgd.batch_size = 8;
      phase.sgd.loss = {model::LossKind::mse};
      phase.sgd.seed = seed + 1;
      phase.sgd.checkpoint_interval = 3100;
      auto cfg = phase.sgd;
      cfg.schedule = trainer::Schedule::cosine;
      const auto cks = trainer::train(run.spec, train_set, nullptr, cfg);

      phase.sgd.iterations = 600;
      phase.sgd.lr = 0.002;
      phase.sgd.batch_size = 4;
      phase.sgd.accumulation_steps = 2;
      phase.sgd.seed = seed + 2;
      phase.snapshot_every = 10;
      const auto result = trainer::run_swag_phase(run.spec, cks.back().params, train_set,
                                                  gen.dev, phase);
      const auto mean = swag::mean_params(result.candidates[result.selected].posterior);
      double mse = 0.0;
      std::size_t n = 0;
      for (const auto& r : gen.test.records) {
        const double pred = model::forward(run.spec, mean, r.features);
        mse += (pred - *r.mos) * (pred - *r.mos);
        ++n;
      }
      return mse / static_cast<double>(n);
    };

    const double unfiltered = pipeline_mse(run.train);

    influence::InfluenceConfig icfg;
    icfg.worst_k = 5;
    icfg.gradient_loss = {model::LossKind::mse};
    const auto report = influence::debug_rank(run.spec, run.params, run.train, icfg);
    const std::set<std::string> drop(report.ranking.begin(), report.ranking.begin() + 2);
    const auto filtered_set = dataio::filter_by_ids(run.train, drop);
    const double filtered = pipeline_mse(filtered_set);

    if (filtered <= unfiltered) ++ok;
    details += " s" + std::to_string(seed) + ":" + fmt(unfiltered, 3) + "->" +
               fmt(filtered, 3);
  }
  return {ok >= 8, std::to_string(ok) + "/10 seeds no worse after dropping the top-2" +
                       " (unfiltered->filtered MSE:" + details + ")"};
}

// ---------------------------------------------------------------------------
// 10. byte-identical artifacts across reruns

Outcome criterion_determinism() {
  auto pipeline = [&](const std::string& tag) {
    const fs::path base = g_workdir / tag;
    const std::string data = (base / "data").string();
    if (cli({"gen-synth", "--out", data, "--systems", "10", "--utts", "6",
             "--feature-dim", "6", "--noise", "0.2", "--corrupt", "2", "--seed",
             "7"}) != 0)
      throw Error::internal("gen-synth failed");
    const std::string train_dir = (base / "train").string();
    if (cli({"train", "--train-table", data + "/train.csv", "--train-features",
             data + "/train.swgf", "--dev-table", data + "/dev.csv", "--dev-features",
             data + "/dev.swgf", "--out", train_dir, "--iterations", "500", "--lr",
             "0.02", "--loss", "mse", "--seed", "7", "--checkpoint-interval",
             "250"}) != 0)
      throw Error::internal("train failed");
    const std::string swag_dir = (base / "swag").string();
    if (cli({"swag", "--train-table", data + "/train.csv", "--train-features",
             data + "/train.swgf", "--dev-table", data + "/dev.csv", "--dev-features",
             data + "/dev.swgf", "--from-checkpoint",
             train_dir + "/final_checkpoint.ckpt", "--out", swag_dir, "--iterations",
             "70", "--lr", "0.02", "--loss", "mse", "--snapshot-every", "7", "--seed",
             "7"}) != 0)
      throw Error::internal("swag failed");
    const std::string pred_dir = (base / "pred").string();
    if (cli({"predict", "--posterior", swag_dir + "/posterior.post", "--table",
             data + "/test.csv", "--features", data + "/test.swgf", "--out", pred_dir,
             "--k", "10", "--seed", "7"}) != 0)
      throw Error::internal("predict failed");
    const std::string inf_dir = (base / "inf").string();
    if (cli({"influence", "--checkpoint", train_dir + "/final_checkpoint.ckpt",
             "--table", data + "/train.csv", "--features", data + "/train.swgf",
             "--out", inf_dir, "--worst-k", "5", "--loss", "mse"}) != 0)
      throw Error::internal("influence failed");
    const std::string eval_dir = (base / "eval").string();
    if (cli({"evaluate", "--predictions", pred_dir + "/predictions.csv", "--table",
             data + "/test.csv", "--out", eval_dir}) != 0)
      throw Error::internal("evaluate failed");
    return base;
  };

  const auto a = pipeline("det_a");
  const auto b = pipeline("det_b");
  const std::vector<std::pair<std::string, std::string>> artifacts = {
      {"pred/predictions.csv", "predictions"},
      {"swag/posterior.post", "posterior"},
      {"train/final_checkpoint.ckpt", "checkpoint"},
      {"inf/influence.json", "influence report"},
      {"eval/metrics.json", "metric report"},
  };
  for (const auto& [rel, label] : artifacts) {
    if (read_file(a / rel) != read_file(b / rel))
      return {false, label + " differs between identical runs"};
    if (read_file(a / rel).empty()) return {false, label + " is empty"};
  }
  return {true, "predictions, posterior, checkpoint and reports byte-identical"};
}

}  // namespace

int main() {
  g_workdir = fs::temp_directory_path() /
              ("moshead_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(g_workdir);

  struct Criterion {
    int number;
    const char* title;
    std::function<Outcome()> fn;
    double budget_seconds;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient fidelity vs finite differences", criterion_gradients, 60},
      {2, "SWA running-moment exactness", criterion_swa_exactness, 600},
      {3, "SWAG sampler statistics", criterion_sampler_statistics, 600},
      {4, "BMA degeneracy", criterion_bma_degeneracy, 600},
      {5, "influence vs leave-one-out oracle", criterion_influence_loo, 60},
      {6, "corrupted-label detection", criterion_detection, 600},
      {7, "metric equivalence vs brute force", criterion_metric_equivalence, 600},
      {8, "end-to-end synthetic pipeline", criterion_end_to_end, 300},
      {9, "influence filtering efficacy", criterion_filtering, 600},
      {10, "pipeline determinism", criterion_determinism, 600},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) {
      out.pass = false;
      out.detail += " [over time budget " + fmt(c.budget_seconds, 3) + "s]";
    }
    std::printf("[%s] criterion %2d: %s -- %s (%.1fs)\n", out.pass ? "PASS" : "FAIL",
                c.number, c.title, out.detail.c_str(), secs);
    std::fflush(stdout);
    failures += out.pass ? 0 : 1;
  }

  std::error_code ec;
  fs::remove_all(g_workdir, ec);
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all 10 criteria passed\n");
  return 0;
}
