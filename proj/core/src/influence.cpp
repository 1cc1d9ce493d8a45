#include "moshead/influence.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace moshead::influence {

namespace {

const char* loss_name(model::LossKind k) {
  switch (k) {
    case model::LossKind::l1: return "l1";
    case model::LossKind::mse: return "mse";
    case model::LossKind::huber: return "huber";
  }
  return "?";
}

std::vector<std::size_t> labeled_indices(const dataio::Dataset& d) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < d.records.size(); ++i)
    if (d.records[i].mos) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> select_test_indices(const model::ModelSpec& spec,
                                             const model::ParamVector& params,
                                             const dataio::Dataset& train,
                                             const InfluenceConfig& cfg,
                                             std::span<const std::size_t> labeled) {
  if (!cfg.test_ids.empty()) {
    std::vector<std::size_t> out;
    for (const auto& id : cfg.test_ids) {
      bool found = false;
      for (auto i : labeled) {
        if (train.records[i].utterance_id == id) {
          out.push_back(i);
          found = true;
          break;
        }
      }
      if (!found)
        throw Error::data("influence: test id not found among labeled records: " + id);
    }
    return out;
  }
  if (cfg.worst_k == 0)
    throw Error::data("influence: test selection needs worst_k >= 1 or explicit ids");
  if (cfg.worst_k > labeled.size())
    throw Error::data("influence: worst_k " + std::to_string(cfg.worst_k) +
                      " exceeds labeled record count " + std::to_string(labeled.size()));
  std::vector<std::pair<double, std::size_t>> losses;
  losses.reserve(labeled.size());
  for (auto i : labeled) {
    const auto& r = train.records[i];
    const double pred = model::forward(spec, params, r.features);
    losses.emplace_back(model::loss(cfg.gradient_loss, pred, *r.mos), i);
  }
  std::stable_sort(losses.begin(), losses.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < cfg.worst_k; ++k) out.push_back(losses[k].second);
  return out;
}

}  // namespace

std::vector<double> last_layer_grad(const model::ModelSpec& spec,
                                    const model::ParamVector& params,
                                    std::span<const double> x, double target,
                                    const model::LossSpec& loss_spec) {
  const auto trace = model::forward_head(spec, params, x);
  const double dldz = model::dloss_dpred(loss_spec, trace.score, target) *
                      model::dscore_dpreact(spec, trace.preact);
  std::vector<double> g(trace.last_input.size() + 1);
  for (std::size_t i = 0; i < trace.last_input.size(); ++i)
    g[i] = dldz * trace.last_input[i];
  g.back() = dldz;
  return g;
}

numkit::DenseMatrix last_layer_hessian(const model::ModelSpec& spec,
                                       const model::ParamVector& params,
                                       const dataio::Dataset& data,
                                       const InfluenceConfig& cfg) {
  if (cfg.damping < 0.0) throw Error::data("influence: damping must be >= 0");
  if (cfg.curvature.kind == model::LossKind::l1)
    throw Error::data("influence: curvature loss must be twice-differentiable (mse or huber)");
  const auto labeled = labeled_indices(data);
  if (labeled.empty()) throw Error::data("influence: dataset has no labeled records");

  const std::size_t dim = model::last_layer_split(params).last.size();
  numkit::DenseMatrix h(dim, dim);
  std::vector<double> a(dim);
  for (auto idx : labeled) {
    const auto& r = data.records[idx];
    const auto trace = model::forward_head(spec, params, r.features);
    const double ds = model::dscore_dpreact(spec, trace.preact);
    const double d2s = model::d2score_dpreact2(spec, trace.preact);
    const double c = model::d2loss_dpred2(cfg.curvature, trace.score, *r.mos) * ds * ds +
                     model::dloss_dpred(cfg.curvature, trace.score, *r.mos) * d2s;
    for (std::size_t i = 0; i + 1 < dim; ++i) a[i] = trace.last_input[i];
    a[dim - 1] = 1.0;
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) h(i, j) += c * a[i] * a[j];
  }
  const double inv_n = 1.0 / static_cast<double>(labeled.size());
  for (auto& v : h.data()) v *= inv_n;

  numkit::DenseMatrix damped = h;
  for (std::size_t i = 0; i < dim; ++i) damped(i, i) += cfg.damping;
  try {
    numkit::cholesky(damped);
  } catch (const Error& e) {
    std::ostringstream msg;
    msg << "influence: damped Hessian is not positive-definite (" << e.what()
        << "); increase damping above " << cfg.damping;
    throw Error::numeric(msg.str());
  }
  return h;
}

StestVector compute_s_test(const numkit::DenseMatrix& h, std::span<const double> grad_test,
                           double damping, std::string test_id) {
  StestVector s;
  s.values = numkit::solve_damped(h, grad_test, damping);
  s.test_id = std::move(test_id);
  return s;
}

double influence_up_loss(const StestVector& s_test, std::span<const double> grad_train) {
  if (s_test.values.size() != grad_train.size())
    throw Error::data("influence_up_loss: dimension mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < grad_train.size(); ++i)
    dot += s_test.values[i] * grad_train[i];
  return -dot;
}

std::vector<double> influence_on_params(const numkit::DenseMatrix& h,
                                        std::span<const double> grad_train, double damping) {
  auto x = numkit::solve_damped(h, grad_train, damping);
  for (auto& v : x) v = -v;
  return x;
}

InfluenceReport debug_rank(const model::ModelSpec& spec, const model::ParamVector& params,
                           const dataio::Dataset& train, const InfluenceConfig& cfg) {
  return debug_rank(spec, params, train, cfg, {});
}

InfluenceReport debug_rank(const model::ModelSpec& spec, const model::ParamVector& params,
                           const dataio::Dataset& train, const InfluenceConfig& cfg,
                           std::span<const StestVector> cached_s_tests) {
  const auto labeled = labeled_indices(train);
  if (labeled.empty()) throw Error::data("influence: dataset has no labeled records");
  const auto test_idx = select_test_indices(spec, params, train, cfg, labeled);

  InfluenceReport report;
  report.config = cfg;
  for (auto i : test_idx) report.test_ids.push_back(train.records[i].utterance_id);

  std::vector<StestVector> s_tests;
  if (!cached_s_tests.empty()) {
    if (cached_s_tests.size() != test_idx.size())
      throw Error::data("influence: cached s_test count does not match test selection");
    s_tests.assign(cached_s_tests.begin(), cached_s_tests.end());
  } else {
    const auto h = last_layer_hessian(spec, params, train, cfg);
    for (auto i : test_idx) {
      const auto& r = train.records[i];
      const auto g =
          last_layer_grad(spec, params, r.features, *r.mos, cfg.gradient_loss);
      s_tests.push_back(compute_s_test(h, g, cfg.damping, r.utterance_id));
    }
  }

  report.per_point.reserve(labeled.size());
  for (auto i : labeled) {
    const auto& r = train.records[i];
    const auto g = last_layer_grad(spec, params, r.features, *r.mos, cfg.gradient_loss);
    PointScores ps;
    ps.utterance_id = r.utterance_id;
    ps.per_test.reserve(s_tests.size());
    for (const auto& s : s_tests) ps.per_test.push_back(influence_up_loss(s, g));
    ps.i_up_loss = std::accumulate(ps.per_test.begin(), ps.per_test.end(), 0.0) /
                   static_cast<double>(ps.per_test.size());
    ps.neg_i_up_loss = -ps.i_up_loss;
    report.per_point.push_back(std::move(ps));
  }

  std::vector<std::size_t> order(report.per_point.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return report.per_point[a].neg_i_up_loss > report.per_point[b].neg_i_up_loss;
  });
  for (auto i : order) report.ranking.push_back(report.per_point[i].utterance_id);
  return report;
}

std::string to_json_string(const InfluenceReport& report) {
  nlohmann::json cfg = {
      {"damping", report.config.damping},
      {"curvature", loss_name(report.config.curvature.kind)},
      {"gradient_loss", loss_name(report.config.gradient_loss.kind)},
      {"scope", "last_layer"},
  };
  if (report.config.curvature.kind == model::LossKind::huber)
    cfg["curvature_huber_delta"] = report.config.curvature.huber_delta;
  if (report.config.gradient_loss.kind == model::LossKind::huber)
    cfg["gradient_huber_delta"] = report.config.gradient_loss.huber_delta;
  if (report.config.test_ids.empty()) {
    cfg["selection"] = "worst_k";
    cfg["worst_k"] = report.config.worst_k;
  } else {
    cfg["selection"] = "explicit";
    cfg["explicit_ids"] = report.config.test_ids;
  }

  nlohmann::json per_point = nlohmann::json::array();
  for (const auto& p : report.per_point) {
    per_point.push_back({
        {"utterance_id", p.utterance_id},
        {"per_test", p.per_test},
        {"i_up_loss", p.i_up_loss},
        {"neg_i_up_loss", p.neg_i_up_loss},
    });
  }

  nlohmann::json j = {
      {"format", "moshead-influence"},
      {"version", 1},
      {"test_ids", report.test_ids},
      {"config", cfg},
      {"sign_conventions",
       {{"i_up_loss",
         "positive: upweighting this training point increases loss at the test points"},
        {"neg_i_up_loss",
         "positive: upweighting reduces test loss; ranking sorts by this value, which "
         "surfaces mislabeled points through their dominant self-influence"}}},
      {"per_point", per_point},
      {"ranking", report.ranking},
  };
  return j.dump(2) + "\n";
}

void save_report(const InfluenceReport& report, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error::data("cannot write influence report: " + path.string());
  os << to_json_string(report);
}

}  // namespace moshead::influence
