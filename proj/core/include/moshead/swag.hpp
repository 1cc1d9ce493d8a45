#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "moshead/dataio.hpp"
#include "moshead/model.hpp"
#include "moshead/numkit.hpp"

namespace moshead::swag {

/// Gaussian posterior approximation collected from SGD snapshots: running
/// mean, running second moment (diagonal term) and a FIFO buffer of
/// deviation columns (low-rank term).
struct SwagPosterior {
  model::ModelSpec spec;
  std::vector<model::LayerShape> layout;
  std::vector<double> mean;
  std::vector<double> sq_mean;
  std::vector<std::vector<double>> deviations;  // newest column last
  std::size_t n_collected = 0;
  std::size_t rank_max = 20;
  std::optional<dataio::FeatureNorm> feature_norm;
};

SwagPosterior make_posterior(const model::ModelSpec& spec, std::size_t rank_max = 20);

/// Running-average update: mean_N = (mean_{N-1} * (N-1) + snapshot) / N,
/// identically on snapshot^2 for the second moment. Appends the deviation
/// column (snapshot - updated mean), evicting the oldest past rank_max.
void swa_update(SwagPosterior& posterior, const model::ParamVector& snapshot);

/// max(sq_mean - mean^2, 0) componentwise. Needs n_collected >= 2.
std::vector<double> diagonal_variance(const SwagPosterior& posterior);

enum class SampleMode { mean_only, diag, diag_lowrank };

/// mean_only returns the SWA mean exactly. diag adds sqrt(var) * z1 / sqrt(2)
/// componentwise. diag_lowrank adds D z2 / sqrt(2 (rank-1)) on top, z1 and z2
/// standard normal, so the implied covariance is var/2 + D D^T / (2 (rank-1)).
model::ParamVector sample_params(const SwagPosterior& posterior, numkit::RngState& rng,
                                 SampleMode mode);

model::ParamVector mean_params(const SwagPosterior& posterior);

struct BmaConfig {
  std::size_t n_samples = 10;
  std::uint64_t seed = 0;
  SampleMode mode = SampleMode::diag_lowrank;
};

struct BmaResult {
  double mean_score = 0.0;
  std::vector<double> sample_scores;
};

/// The K parameter sets drawn for Bayesian model averaging; deterministic
/// given cfg.seed, shared across every input scored with the same config.
std::vector<model::ParamVector> draw_bma_params(const SwagPosterior& posterior,
                                                const BmaConfig& cfg);

BmaResult bma_predict(const SwagPosterior& posterior, std::span<const double> x,
                      const BmaConfig& cfg);

/// One score per record, in record order, using a single shared draw of K
/// parameter sets.
std::vector<double> bma_predict_batch(const SwagPosterior& posterior,
                                      const dataio::Dataset& d, const BmaConfig& cfg);

/// Posterior container: compact JSON header line (spec, layout, counts,
/// rank) then f64-le payload: mean, sq_mean, deviation columns in order.
void save_posterior(const std::filesystem::path& path, const SwagPosterior& posterior);
SwagPosterior load_posterior(const std::filesystem::path& path);

}  // namespace moshead::swag
