#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "moshead/dataio.hpp"
#include "moshead/model.hpp"
#include "moshead/numkit.hpp"

namespace moshead::influence {

struct InfluenceConfig {
  double damping = 0.01;
  /// Curvature loss for the Hessian. The L1 training loss has zero second
  /// derivative almost everywhere, so curvature defaults to MSE on the same
  /// predictions; gradients still use gradient_loss.
  model::LossSpec curvature{model::LossKind::mse, 1.0};
  model::LossSpec gradient_loss{model::LossKind::l1, 1.0};
  std::size_t worst_k = 5;
  std::vector<std::string> test_ids;  // explicit selection when non-empty
};

/// Loss gradient restricted to the final layer: dloss/dz * (last_input, 1).
std::vector<double> last_layer_grad(const model::ModelSpec& spec,
                                    const model::ParamVector& params,
                                    std::span<const double> x, double target,
                                    const model::LossSpec& loss_spec);

/// Mean curvature-loss Hessian over the labeled records, restricted to the
/// final layer: (1/n) sum c_i a_i a_i^T with a_i = (last_input_i, 1) and
/// c_i the exact second derivative of the curvature loss in z. Verifies
/// that H + damping*I is positive-definite before returning H.
numkit::DenseMatrix last_layer_hessian(const model::ModelSpec& spec,
                                       const model::ParamVector& params,
                                       const dataio::Dataset& data,
                                       const InfluenceConfig& cfg);

struct StestVector {
  std::vector<double> values;
  std::string test_id;
};

/// Solves (H + damping*I) s = grad_test.
StestVector compute_s_test(const numkit::DenseMatrix& h, std::span<const double> grad_test,
                           double damping, std::string test_id = "");

/// I_up,loss(z, z_test) = -s_test . grad_train. Positive means upweighting
/// the training point increases the loss at the test point.
double influence_up_loss(const StestVector& s_test, std::span<const double> grad_train);

/// -(H + damping*I)^-1 grad_train: first-order parameter change from
/// upweighting the training point.
std::vector<double> influence_on_params(const numkit::DenseMatrix& h,
                                        std::span<const double> grad_train, double damping);

struct PointScores {
  std::string utterance_id;
  std::vector<double> per_test;  // I_up,loss against each test point
  double i_up_loss = 0.0;        // mean over test points
  double neg_i_up_loss = 0.0;
};

struct InfluenceReport {
  std::vector<std::string> test_ids;
  std::vector<PointScores> per_point;  // training order
  /// Training IDs sorted by descending aggregate -I_up,loss, the ordering
  /// that surfaces mislabeled points through their dominant self-influence.
  std::vector<std::string> ranking;
  InfluenceConfig config;
};

/// Full data-debugging pass: pick test points (worst-k training loss or the
/// explicit ID list), precompute one s_test per test point, score every
/// training record, rank.
InfluenceReport debug_rank(const model::ModelSpec& spec, const model::ParamVector& params,
                           const dataio::Dataset& train, const InfluenceConfig& cfg);

/// Same pass reusing previously computed s_test vectors (one per selected
/// test point, in selection order).
InfluenceReport debug_rank(const model::ModelSpec& spec, const model::ParamVector& params,
                           const dataio::Dataset& train, const InfluenceConfig& cfg,
                           std::span<const StestVector> cached_s_tests);

std::string to_json_string(const InfluenceReport& report);
void save_report(const InfluenceReport& report, const std::filesystem::path& path);

}  // namespace moshead::influence
