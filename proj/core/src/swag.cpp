#include "moshead/swag.hpp"

#include <cmath>
#include <fstream>

#include "json_detail.hpp"
#include "wire.hpp"

namespace moshead::swag {

SwagPosterior make_posterior(const model::ModelSpec& spec, std::size_t rank_max) {
  if (rank_max < 2) throw Error::data("swag: rank_max must be >= 2");
  SwagPosterior p;
  p.spec = spec;
  p.layout = model::layout_for(spec);
  p.mean.assign(model::param_count(spec), 0.0);
  p.sq_mean.assign(model::param_count(spec), 0.0);
  p.rank_max = rank_max;
  return p;
}

void swa_update(SwagPosterior& posterior, const model::ParamVector& snapshot) {
  const std::size_t count = posterior.mean.size();
  if (snapshot.values.size() != count)
    throw Error::data("swa_update: snapshot has " + std::to_string(snapshot.values.size()) +
                      " values, posterior layout wants " + std::to_string(count));
  const double n = static_cast<double>(posterior.n_collected + 1);
  std::vector<double> column(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double v = snapshot.values[i];
    posterior.mean[i] = (posterior.mean[i] * (n - 1.0) + v) / n;
    posterior.sq_mean[i] = (posterior.sq_mean[i] * (n - 1.0) + v * v) / n;
    column[i] = v - posterior.mean[i];
  }
  posterior.deviations.push_back(std::move(column));
  if (posterior.deviations.size() > posterior.rank_max)
    posterior.deviations.erase(posterior.deviations.begin());
  posterior.n_collected += 1;
}

std::vector<double> diagonal_variance(const SwagPosterior& posterior) {
  if (posterior.n_collected < 2)
    throw Error::numeric("diagonal_variance: need at least 2 snapshots, have " +
                         std::to_string(posterior.n_collected));
  std::vector<double> var(posterior.mean.size());
  for (std::size_t i = 0; i < var.size(); ++i) {
    const double v = posterior.sq_mean[i] - posterior.mean[i] * posterior.mean[i];
    var[i] = v > 0.0 ? v : 0.0;
  }
  return var;
}

model::ParamVector mean_params(const SwagPosterior& posterior) {
  model::ParamVector p;
  p.layout = posterior.layout;
  p.values = posterior.mean;
  return p;
}

model::ParamVector sample_params(const SwagPosterior& posterior, numkit::RngState& rng,
                                 SampleMode mode) {
  model::ParamVector p = mean_params(posterior);
  if (mode == SampleMode::mean_only) return p;
  if (posterior.n_collected < 2)
    throw Error::numeric("sample_params: need at least 2 snapshots for stochastic modes");
  const auto var = diagonal_variance(posterior);
  const auto z1 = numkit::standard_normal(rng, p.values.size());
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (std::size_t i = 0; i < p.values.size(); ++i)
    p.values[i] += std::sqrt(var[i]) * z1[i] * inv_sqrt2;
  if (mode == SampleMode::diag) return p;
  const std::size_t rank = posterior.deviations.size();
  if (rank < 2)
    throw Error::numeric("sample_params: need at least 2 deviation columns for the "
                         "low-rank term");
  const auto z2 = numkit::standard_normal(rng, rank);
  const double scale = 1.0 / std::sqrt(2.0 * static_cast<double>(rank - 1));
  for (std::size_t c = 0; c < rank; ++c) {
    const auto& col = posterior.deviations[c];
    const double w = z2[c] * scale;
    for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] += col[i] * w;
  }
  return p;
}

std::vector<model::ParamVector> draw_bma_params(const SwagPosterior& posterior,
                                                const BmaConfig& cfg) {
  if (cfg.n_samples == 0) throw Error::data("bma: n_samples must be >= 1");
  numkit::RngState rng{cfg.seed, 0};
  std::vector<model::ParamVector> thetas;
  thetas.reserve(cfg.n_samples);
  for (std::size_t k = 0; k < cfg.n_samples; ++k)
    thetas.push_back(sample_params(posterior, rng, cfg.mode));
  return thetas;
}

namespace {

/// Averaging identical scores must return that score exactly, so degenerate
/// posteriors (zero covariance, mean-only mode) reproduce forward(mean)
/// bit for bit regardless of K.
double mean_of_scores(std::span<const double> scores) {
  bool all_equal = true;
  for (double s : scores) all_equal &= (s == scores[0]);
  if (all_equal) return scores[0];
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

}  // namespace

BmaResult bma_predict(const SwagPosterior& posterior, std::span<const double> x,
                      const BmaConfig& cfg) {
  const auto thetas = draw_bma_params(posterior, cfg);
  BmaResult res;
  res.sample_scores.reserve(thetas.size());
  for (const auto& theta : thetas)
    res.sample_scores.push_back(model::forward(posterior.spec, theta, x));
  res.mean_score = mean_of_scores(res.sample_scores);
  return res;
}

std::vector<double> bma_predict_batch(const SwagPosterior& posterior,
                                      const dataio::Dataset& d, const BmaConfig& cfg) {
  const auto thetas = draw_bma_params(posterior, cfg);
  std::vector<double> out;
  out.reserve(d.records.size());
  std::vector<double> scores(thetas.size());
  for (const auto& r : d.records) {
    for (std::size_t k = 0; k < thetas.size(); ++k)
      scores[k] = model::forward(posterior.spec, thetas[k], r.features);
    out.push_back(mean_of_scores(scores));
  }
  return out;
}

void save_posterior(const std::filesystem::path& path, const SwagPosterior& posterior) {
  nlohmann::json header = {
      {"format", "moshead-posterior"},
      {"version", 1},
      {"spec", detail::spec_to_json(posterior.spec)},
      {"layout", detail::layout_to_json(posterior.layout)},
      {"n_collected", posterior.n_collected},
      {"rank_max", posterior.rank_max},
      {"deviation_cols", posterior.deviations.size()},
      {"param_count", posterior.mean.size()},
  };
  if (posterior.feature_norm)
    header["feature_norm"] = detail::norm_to_json(*posterior.feature_norm);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error::data("cannot write posterior: " + path.string());
  os << header.dump() << '\n';
  wire::write_f64_span(os, posterior.mean);
  wire::write_f64_span(os, posterior.sq_mean);
  for (const auto& col : posterior.deviations) wire::write_f64_span(os, col);
}

SwagPosterior load_posterior(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error::data("posterior not found: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(wire::read_json_line(is, "posterior " + path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw Error::data("posterior header is not valid JSON: " + path.string() + " (" +
                      e.what() + ")");
  }
  if (header.value("format", "") != "moshead-posterior")
    throw Error::data("not a posterior file: " + path.string());
  SwagPosterior p;
  p.spec = detail::spec_from_json(header.at("spec"));
  p.layout = detail::layout_from_json(header.at("layout"));
  p.n_collected = header.at("n_collected").get<std::size_t>();
  p.rank_max = header.at("rank_max").get<std::size_t>();
  const auto cols = header.at("deviation_cols").get<std::size_t>();
  const auto count = header.at("param_count").get<std::size_t>();
  if (count != model::param_count(p.spec))
    throw Error::data("posterior param_count does not match spec: " + path.string());
  p.mean = wire::read_f64_array(is, count, "posterior mean");
  p.sq_mean = wire::read_f64_array(is, count, "posterior sq_mean");
  for (std::size_t c = 0; c < cols; ++c)
    p.deviations.push_back(wire::read_f64_array(is, count, "posterior deviation column"));
  if (header.contains("feature_norm"))
    p.feature_norm = detail::norm_from_json(header.at("feature_norm"));
  return p;
}

}  // namespace moshead::swag
