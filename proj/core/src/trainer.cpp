#include "moshead/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace moshead::trainer {

namespace {

std::vector<std::size_t> labeled_indices(const dataio::Dataset& d) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < d.records.size(); ++i)
    if (d.records[i].mos) idx.push_back(i);
  return idx;
}

void shuffle(std::vector<std::size_t>& v, numkit::RngState& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = numkit::next_bounded(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

std::optional<metrics::MetricReport> dev_report(const model::ModelSpec& spec,
                                                const model::ParamVector& params,
                                                const dataio::Dataset* dev) {
  if (!dev || dev->records.empty()) return std::nullopt;
  try {
    return metrics::evaluate(predict_all(spec, params, *dev), *dev);
  } catch (const Error&) {
    // Degenerate dev sets (single system, constant predictions) leave the
    // checkpoint without metrics instead of killing the run.
    return std::nullopt;
  }
}

/// Shared SGD-with-momentum loop. post_step runs after each applied update
/// with the current parameters.
void run_sgd(const model::ModelSpec& spec, model::ParamVector& params,
             const dataio::Dataset& data, const TrainConfig& cfg, numkit::RngState& rng,
             const StepObserver& observer,
             const std::function<void(std::uint64_t, const model::ParamVector&)>& post_step) {
  auto labeled = labeled_indices(data);
  if (labeled.empty()) throw Error::data("train: dataset has no labeled records");
  const std::size_t micro_per_epoch = labeled.size() / cfg.batch_size;
  if (micro_per_epoch == 0)
    throw Error::data("train: batch_size " + std::to_string(cfg.batch_size) +
                      " exceeds labeled record count " + std::to_string(labeled.size()));
  if (micro_per_epoch < cfg.accumulation_steps)
    throw Error::data("train: accumulation_steps " +
                      std::to_string(cfg.accumulation_steps) +
                      " exceeds micro-batches per epoch " +
                      std::to_string(micro_per_epoch));

  model::ParamVector velocity = model::zero_params(spec);
  std::size_t micro_pos = micro_per_epoch;  // forces a shuffle on first use
  std::vector<model::ParamVector> micro_grads(cfg.accumulation_steps);
  std::vector<std::size_t> batch_idx(cfg.batch_size);

  for (std::uint64_t t = 0; t < cfg.iterations; ++t) {
    if (micro_pos + cfg.accumulation_steps > micro_per_epoch) {
      shuffle(labeled, rng);
      micro_pos = 0;
    }
    const double lr = learning_rate(cfg, t);
    double loss_sum = 0.0;
    for (std::size_t a = 0; a < cfg.accumulation_steps; ++a) {
      for (std::size_t b = 0; b < cfg.batch_size; ++b)
        batch_idx[b] = labeled[micro_pos * cfg.batch_size + b];
      ++micro_pos;
      const auto batch = make_batch(data, batch_idx);
      double batch_loss = 0.0;
      micro_grads[a] = model::grad(spec, params, batch, cfg.loss, &batch_loss);
      loss_sum += batch_loss;
    }
    const double step_loss = loss_sum / static_cast<double>(cfg.accumulation_steps);
    if (!std::isfinite(step_loss)) {
      std::ostringstream msg;
      msg << "train: non-finite loss at step " << (t + 1) << " (lr " << lr << ")";
      throw Error::numeric(msg.str());
    }
    const auto g = average_gradients(micro_grads);
    for (std::size_t i = 0; i < params.values.size(); ++i) {
      velocity.values[i] = cfg.momentum * velocity.values[i] + g.values[i];
      params.values[i] -= lr * velocity.values[i];
    }
    if (observer) observer({t + 1, lr, step_loss});
    post_step(t + 1, params);
  }
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw Error::data("train config: lr must be > 0");
  if (cfg.lr_min < 0.0 || cfg.lr_min > cfg.lr)
    throw Error::data("train config: lr_min must lie in [0, lr]");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw Error::data("train config: momentum must lie in [0, 1)");
  if (cfg.batch_size < 1) throw Error::data("train config: batch_size must be >= 1");
  if (cfg.accumulation_steps < 1)
    throw Error::data("train config: accumulation_steps must be >= 1");
  if (cfg.cosine_period < 1) throw Error::data("train config: cosine period must be >= 1");
  if (cfg.checkpoint_interval < 1)
    throw Error::data("train config: checkpoint_interval must be >= 1");
  if (cfg.loss.kind == model::LossKind::huber && !(cfg.loss.huber_delta > 0.0))
    throw Error::data("train config: huber delta must be > 0");
}

double cosine_lr(std::uint64_t t, double lr_max, double lr_min, std::uint64_t period) {
  if (period < 1) throw Error::data("cosine_lr: period must be >= 1");
  if (lr_min > lr_max) throw Error::data("cosine_lr: lr_min must be <= lr_max");
  const double phase =
      static_cast<double>(t % (2 * period)) / static_cast<double>(period);
  const double lr =
      lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * phase));
  return std::clamp(lr, lr_min, lr_max);
}

double learning_rate(const TrainConfig& cfg, std::uint64_t t) {
  if (cfg.schedule == Schedule::constant) return cfg.lr;
  return cosine_lr(t, cfg.lr, cfg.lr_min, cfg.cosine_period);
}

model::ParamVector average_gradients(std::span<const model::ParamVector> grads) {
  if (grads.empty()) throw Error::data("average_gradients: empty input");
  model::ParamVector out = grads[0];
  for (std::size_t k = 1; k < grads.size(); ++k) {
    if (grads[k].values.size() != out.values.size())
      throw Error::data("average_gradients: layout mismatch");
    for (std::size_t i = 0; i < out.values.size(); ++i)
      out.values[i] += grads[k].values[i];
  }
  const double inv = 1.0 / static_cast<double>(grads.size());
  for (auto& v : out.values) v *= inv;
  return out;
}

std::vector<model::LabeledExample> make_batch(const dataio::Dataset& d,
                                              std::span<const std::size_t> indices) {
  std::vector<model::LabeledExample> batch;
  batch.reserve(indices.size());
  for (auto i : indices) {
    const auto& r = d.records.at(i);
    if (!r.mos)
      throw Error::data("batch contains unlabeled record " + r.utterance_id);
    batch.push_back({r.features, *r.mos});
  }
  return batch;
}

std::map<std::string, double> predict_all(const model::ModelSpec& spec,
                                          const model::ParamVector& params,
                                          const dataio::Dataset& d) {
  std::map<std::string, double> preds;
  for (const auto& r : d.records)
    preds[r.utterance_id] = model::forward(spec, params, r.features);
  return preds;
}

std::vector<Checkpoint> train(const model::ModelSpec& spec, const dataio::Dataset& data,
                              const dataio::Dataset* dev, const TrainConfig& cfg,
                              const StepObserver& observer) {
  validate(cfg);
  numkit::RngState rng{cfg.seed, 0};
  model::ParamVector params = model::init_params(spec, rng);

  std::vector<Checkpoint> checkpoints;
  auto emit = [&](std::uint64_t iteration, const model::ParamVector& p) {
    checkpoints.push_back({p, iteration, dev_report(spec, p, dev)});
  };
  run_sgd(spec, params, data, cfg, rng, observer,
          [&](std::uint64_t step, const model::ParamVector& p) {
            if (step % cfg.checkpoint_interval == 0) emit(step, p);
          });
  if (cfg.iterations == 0 || cfg.iterations % cfg.checkpoint_interval != 0)
    emit(cfg.iterations, params);
  return checkpoints;
}

std::vector<Checkpoint> train_from(const model::ModelSpec& spec,
                                   const model::ParamVector& init,
                                   const dataio::Dataset& data, const dataio::Dataset* dev,
                                   const TrainConfig& cfg, const StepObserver& observer) {
  validate(cfg);
  model::check_params(spec, init);
  numkit::RngState rng{cfg.seed, 0};
  model::ParamVector params = init;

  std::vector<Checkpoint> checkpoints;
  auto emit = [&](std::uint64_t iteration, const model::ParamVector& p) {
    checkpoints.push_back({p, iteration, dev_report(spec, p, dev)});
  };
  run_sgd(spec, params, data, cfg, rng, observer,
          [&](std::uint64_t step, const model::ParamVector& p) {
            if (step % cfg.checkpoint_interval == 0) emit(step, p);
          });
  if (cfg.iterations == 0 || cfg.iterations % cfg.checkpoint_interval != 0)
    emit(cfg.iterations, params);
  return checkpoints;
}

SwagRunResult run_swag_phase(const model::ModelSpec& spec, const model::ParamVector& init,
                             const dataio::Dataset& data, const dataio::Dataset& dev,
                             const SwagPhaseConfig& cfg) {
  TrainConfig sgd = cfg.sgd;
  sgd.schedule = Schedule::constant;
  validate(sgd);
  model::check_params(spec, init);

  const std::size_t labeled = [&] {
    std::size_t n = 0;
    for (const auto& r : data.records) n += r.mos.has_value();
    return n;
  }();
  const std::size_t micro_per_epoch = labeled / sgd.batch_size;
  const std::size_t steps_per_epoch =
      micro_per_epoch == 0 ? 0 : micro_per_epoch / sgd.accumulation_steps;
  const std::uint64_t cadence =
      cfg.snapshot_every > 0 ? cfg.snapshot_every
                             : static_cast<std::uint64_t>(steps_per_epoch);
  if (cadence == 0)
    throw Error::data("swag phase: dataset too small for one optimizer step per epoch");

  numkit::RngState rng{sgd.seed, 0};
  model::ParamVector params = init;
  auto posterior = swag::make_posterior(spec, cfg.rank_max);

  SwagRunResult result;
  run_sgd(spec, params, data, sgd, rng, {},
          [&](std::uint64_t step, const model::ParamVector& p) {
            if (step % cadence != 0) return;
            swag::swa_update(posterior, p);
            SwagCandidate cand;
            cand.checkpoint.params = p;
            cand.checkpoint.iteration = step;
            cand.posterior = posterior;
            try {
              const auto report =
                  metrics::evaluate(predict_all(spec, swag::mean_params(posterior), dev), dev);
              cand.dev_system_srcc = report.system.srcc;
              cand.checkpoint.dev_metrics = report;
            } catch (const Error&) {
              cand.dev_system_srcc = std::nullopt;
            }
            result.candidates.push_back(std::move(cand));
          });

  if (result.candidates.empty())
    throw Error::numeric("swag phase: no snapshots collected (increase iterations)");
  std::vector<Checkpoint> cks;
  std::vector<swag::SwagPosterior> posts;
  for (const auto& c : result.candidates) {
    cks.push_back(c.checkpoint);
    posts.push_back(c.posterior);
  }
  result.selected = select_checkpoint(cks, posts, dev);
  return result;
}

std::size_t select_checkpoint(std::span<const Checkpoint> checkpoints,
                              std::span<const swag::SwagPosterior> posteriors,
                              const dataio::Dataset& dev) {
  if (checkpoints.size() != posteriors.size())
    throw Error::data("select_checkpoint: checkpoints and posteriors are not aligned");
  if (checkpoints.empty()) throw Error::data("select_checkpoint: no candidates");
  bool any_eligible = false;
  double best = 0.0;
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    if (posteriors[i].n_collected < 5) continue;
    const auto& spec = posteriors[i].spec;
    const auto report =
        metrics::evaluate(predict_all(spec, swag::mean_params(posteriors[i]), dev), dev);
    const double srcc = report.system.srcc;
    if (!any_eligible || srcc > best) {
      any_eligible = true;
      best = srcc;
      best_idx = i;
    }
  }
  if (!any_eligible)
    throw Error::numeric("select_checkpoint: no posterior has gathered at least 5 samples");
  return best_idx;
}

}  // namespace moshead::trainer
