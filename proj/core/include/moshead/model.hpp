#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moshead/dataio.hpp"
#include "moshead/numkit.hpp"

namespace moshead::model {

enum class Activation { tanh_fn, relu };

enum class OutputKind {
  sigmoid_bounded,  // score = low + (high-low) * sigmoid(z)
  linear,           // score = z, for convex probes
};

struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  Activation activation = Activation::tanh_fn;
  OutputKind output = OutputKind::sigmoid_bounded;
  double output_low = 1.0;
  double output_high = 5.0;
};

struct LayerShape {
  std::string name;
  std::vector<std::size_t> dims;

  std::size_t count() const noexcept {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

/// Flattened parameters. Order per layer l (input to output): weight matrix
/// (out x in, row-major) then bias (out). This flattening is the contract
/// shared with the SWAG posterior and the influence engine.
struct ParamVector {
  std::vector<double> values;
  std::vector<LayerShape> layout;
};

std::vector<std::size_t> layer_dims(const ModelSpec& spec);
std::vector<LayerShape> layout_for(const ModelSpec& spec);
std::size_t param_count(const ModelSpec& spec);

ParamVector zero_params(const ModelSpec& spec);

/// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer, weights then
/// bias, drawn in layout order.
ParamVector init_params(const ModelSpec& spec, numkit::RngState& rng);

/// Shape error when params do not match the spec layout.
void check_params(const ModelSpec& spec, const ParamVector& params);

double forward(const ModelSpec& spec, const ParamVector& params,
               std::span<const double> x);

/// Forward pass keeping what the last-layer influence math needs: the input
/// feeding the final layer and the pre-activation z.
struct HeadTrace {
  std::vector<double> last_input;
  double preact = 0.0;
  double score = 0.0;
};

HeadTrace forward_head(const ModelSpec& spec, const ParamVector& params,
                       std::span<const double> x);

double score_from_preact(const ModelSpec& spec, double z);
double dscore_dpreact(const ModelSpec& spec, double z);
double d2score_dpreact2(const ModelSpec& spec, double z);

enum class LossKind { l1, mse, huber };

struct LossSpec {
  LossKind kind = LossKind::l1;
  double huber_delta = 1.0;
};

double loss(const LossSpec& spec, double pred, double target);
double dloss_dpred(const LossSpec& spec, double pred, double target);
double d2loss_dpred2(const LossSpec& spec, double pred, double target);

struct LabeledExample {
  std::span<const double> features;
  double target = 0.0;
};

/// Gradient of the mean batch loss, same layout as params. The L1
/// subgradient at pred == target is 0. mean_loss, when given, receives the
/// mean batch loss from the same forward passes.
ParamVector grad(const ModelSpec& spec, const ParamVector& params,
                 std::span<const LabeledExample> batch, const LossSpec& loss_spec,
                 double* mean_loss = nullptr);

/// Views into the flattened vector: everything before the final layer, and
/// the final layer (last hidden width + 1 values, weight row then bias).
struct LastLayerView {
  std::span<const double> frozen;
  std::span<const double> last;
  std::size_t offset = 0;  // index of the first last-layer value
};

LastLayerView last_layer_split(const ParamVector& params);

/// Checkpoint container: one compact JSON header line (spec, layout, seed,
/// iteration, optional feature standardization) followed by param_count
/// f64-le values.
struct CheckpointFile {
  ModelSpec spec;
  ParamVector params;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::optional<dataio::FeatureNorm> feature_norm;
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointFile& ckpt);
CheckpointFile load_checkpoint(const std::filesystem::path& path);

}  // namespace moshead::model
