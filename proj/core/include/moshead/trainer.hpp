#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moshead/dataio.hpp"
#include "moshead/metrics.hpp"
#include "moshead/model.hpp"
#include "moshead/swag.hpp"

namespace moshead::trainer {

enum class Schedule { cosine, constant };

struct TrainConfig {
  std::uint64_t iterations = 30000;
  double lr = 0.001;
  double lr_min = 0.0;
  double momentum = 0.9;
  Schedule schedule = Schedule::cosine;
  std::uint64_t cosine_period = 100;
  std::size_t batch_size = 8;
  std::size_t accumulation_steps = 1;
  std::uint64_t seed = 0;
  model::LossSpec loss{};
  std::uint64_t checkpoint_interval = 500;
};

void validate(const TrainConfig& cfg);

/// lr(t) = lr_min + (lr_max - lr_min)/2 * (1 + cos(pi * (t mod 2*period) / period)).
/// Continuous and periodic with period 2*period; lr(0) = lr_max,
/// lr(period) = lr_min.
double cosine_lr(std::uint64_t t, double lr_max, double lr_min, std::uint64_t period);

double learning_rate(const TrainConfig& cfg, std::uint64_t t);

struct Checkpoint {
  model::ParamVector params;
  std::uint64_t iteration = 0;
  std::optional<metrics::MetricReport> dev_metrics;
};

struct StepInfo {
  std::uint64_t step = 0;  // 1-based optimizer step
  double lr = 0.0;
  double loss = 0.0;  // mean loss over the accumulated micro-batches
};

using StepObserver = std::function<void(const StepInfo&)>;

/// Mean of per-micro-batch mean gradients; equals the union-batch gradient
/// for equal micro-batch sizes (within accumulation order rounding).
model::ParamVector average_gradients(std::span<const model::ParamVector> grads);

/// Batch view over labeled records; an unlabeled record raises a label error.
std::vector<model::LabeledExample> make_batch(const dataio::Dataset& d,
                                              std::span<const std::size_t> indices);

std::map<std::string, double> predict_all(const model::ModelSpec& spec,
                                          const model::ParamVector& params,
                                          const dataio::Dataset& d);

/// SGD with momentum: v <- momentum*v + g, theta <- theta - lr(t)*v, over
/// shuffled epochs of the labeled records, gradients averaged over
/// accumulation_steps micro-batches per optimizer step. Deterministic given
/// (seed, record order). Checkpoints carry dev metrics when a dev set is
/// given and its metrics are computable.
std::vector<Checkpoint> train(const model::ModelSpec& spec, const dataio::Dataset& data,
                              const dataio::Dataset* dev, const TrainConfig& cfg,
                              const StepObserver& observer = {});

/// Same loop continuing from explicit initial parameters.
std::vector<Checkpoint> train_from(const model::ModelSpec& spec,
                                   const model::ParamVector& init,
                                   const dataio::Dataset& data, const dataio::Dataset* dev,
                                   const TrainConfig& cfg,
                                   const StepObserver& observer = {});

struct SwagPhaseConfig {
  TrainConfig sgd{};                 // schedule is forced to constant
  std::uint64_t snapshot_every = 0;  // optimizer steps between snapshots; 0 = one epoch
  std::size_t rank_max = 20;
};

struct SwagCandidate {
  Checkpoint checkpoint;
  swag::SwagPosterior posterior;  // state at collection time
  std::optional<double> dev_system_srcc;
};

struct SwagRunResult {
  std::vector<SwagCandidate> candidates;
  std::size_t selected = 0;
};

/// Constant-lr SGD collecting one posterior snapshot every snapshot_every
/// steps; candidates align checkpoints with posterior states. Selection
/// picks the candidate with the best dev system-level SRCC of the posterior
/// mean among those with at least 5 snapshots.
SwagRunResult run_swag_phase(const model::ModelSpec& spec, const model::ParamVector& init,
                             const dataio::Dataset& data, const dataio::Dataset& dev,
                             const SwagPhaseConfig& cfg);

/// Index maximizing dev system-level SRCC of forward(posterior mean) over
/// candidates with n_collected >= 5; ties break to the earliest index.
std::size_t select_checkpoint(std::span<const Checkpoint> checkpoints,
                              std::span<const swag::SwagPosterior> posteriors,
                              const dataio::Dataset& dev);

}  // namespace moshead::trainer
