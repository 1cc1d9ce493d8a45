#include "moshead/model.hpp"

#include <cmath>
#include <fstream>

#include "json_detail.hpp"
#include "wire.hpp"

namespace moshead::model {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double activate(Activation a, double v) {
  return a == Activation::tanh_fn ? std::tanh(v) : (v > 0.0 ? v : 0.0);
}

double activate_derivative(Activation a, double v) {
  if (a == Activation::tanh_fn) {
    const double t = std::tanh(v);
    return 1.0 - t * t;
  }
  return v > 0.0 ? 1.0 : 0.0;
}

struct ForwardPass {
  // preacts[l] and acts[l] for each layer; acts.back() holds the raw z.
  std::vector<std::vector<double>> inputs;  // input to each layer
  double preact = 0.0;
};

ForwardPass run_forward(const ModelSpec& spec, const ParamVector& params,
                        std::span<const double> x) {
  if (x.size() != spec.input_dim)
    throw Error::data("forward: input length " + std::to_string(x.size()) +
                      " does not match input_dim " + std::to_string(spec.input_dim));
  check_params(spec, params);
  const auto dims = layer_dims(spec);
  ForwardPass fp;
  fp.inputs.reserve(dims.size() - 1);
  std::vector<double> cur(x.begin(), x.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    fp.inputs.push_back(cur);
    std::vector<double> next(out);
    for (std::size_t o = 0; o < out; ++o) {
      double z = params.values[off + in * out + o];  // bias
      const double* w = params.values.data() + off + o * in;
      for (std::size_t i = 0; i < in; ++i) z += w[i] * cur[i];
      next[o] = z;
    }
    off += in * out + out;
    const bool is_last = l + 2 == dims.size();
    if (is_last) {
      fp.preact = next[0];
    } else {
      for (auto& v : next) v = activate(spec.activation, v);
    }
    cur = std::move(next);
  }
  return fp;
}

}  // namespace

std::vector<std::size_t> layer_dims(const ModelSpec& spec) {
  if (spec.input_dim == 0) throw Error::data("model spec: input_dim must be >= 1");
  if (!(spec.output_low < spec.output_high))
    throw Error::data("model spec: output bounds must satisfy low < high");
  std::vector<std::size_t> dims;
  dims.push_back(spec.input_dim);
  for (auto h : spec.hidden_dims) {
    if (h == 0) throw Error::data("model spec: hidden width must be >= 1");
    dims.push_back(h);
  }
  dims.push_back(1);
  return dims;
}

std::vector<LayerShape> layout_for(const ModelSpec& spec) {
  const auto dims = layer_dims(spec);
  std::vector<LayerShape> layout;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::string base = "layer" + std::to_string(l);
    layout.push_back({base + ".weight", {dims[l + 1], dims[l]}});
    layout.push_back({base + ".bias", {dims[l + 1]}});
  }
  return layout;
}

std::size_t param_count(const ModelSpec& spec) {
  std::size_t n = 0;
  for (const auto& l : layout_for(spec)) n += l.count();
  return n;
}

ParamVector zero_params(const ModelSpec& spec) {
  ParamVector p;
  p.layout = layout_for(spec);
  p.values.assign(param_count(spec), 0.0);
  return p;
}

ParamVector init_params(const ModelSpec& spec, numkit::RngState& rng) {
  ParamVector p = zero_params(spec);
  const auto dims = layer_dims(spec);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t k = 0; k < in * out + out; ++k)
      p.values[off + k] = (2.0 * numkit::next_uniform(rng) - 1.0) * bound;
    off += in * out + out;
  }
  return p;
}

void check_params(const ModelSpec& spec, const ParamVector& params) {
  if (params.values.size() != param_count(spec))
    throw Error::data("params have " + std::to_string(params.values.size()) +
                      " values, spec wants " + std::to_string(param_count(spec)));
}

double score_from_preact(const ModelSpec& spec, double z) {
  if (spec.output == OutputKind::linear) return z;
  double score = spec.output_low + (spec.output_high - spec.output_low) * sigmoid(z);
  // Keep the output strictly inside (low, high) even when the sigmoid rounds
  // to 0 or 1 in double precision.
  if (score <= spec.output_low) score = std::nextafter(spec.output_low, spec.output_high);
  if (score >= spec.output_high) score = std::nextafter(spec.output_high, spec.output_low);
  return score;
}

double dscore_dpreact(const ModelSpec& spec, double z) {
  if (spec.output == OutputKind::linear) return 1.0;
  const double s = sigmoid(z);
  return (spec.output_high - spec.output_low) * s * (1.0 - s);
}

double d2score_dpreact2(const ModelSpec& spec, double z) {
  if (spec.output == OutputKind::linear) return 0.0;
  const double s = sigmoid(z);
  return (spec.output_high - spec.output_low) * s * (1.0 - s) * (1.0 - 2.0 * s);
}

double forward(const ModelSpec& spec, const ParamVector& params,
               std::span<const double> x) {
  return score_from_preact(spec, run_forward(spec, params, x).preact);
}

HeadTrace forward_head(const ModelSpec& spec, const ParamVector& params,
                       std::span<const double> x) {
  auto fp = run_forward(spec, params, x);
  HeadTrace trace;
  trace.last_input = std::move(fp.inputs.back());
  trace.preact = fp.preact;
  trace.score = score_from_preact(spec, fp.preact);
  return trace;
}

double loss(const LossSpec& spec, double pred, double target) {
  const double r = pred - target;
  switch (spec.kind) {
    case LossKind::l1:
      return std::abs(r);
    case LossKind::mse:
      return r * r;
    case LossKind::huber: {
      const double d = spec.huber_delta;
      return std::abs(r) <= d ? 0.5 * r * r : d * (std::abs(r) - 0.5 * d);
    }
  }
  throw Error::internal("loss: unknown kind");
}

double dloss_dpred(const LossSpec& spec, double pred, double target) {
  const double r = pred - target;
  switch (spec.kind) {
    case LossKind::l1:
      return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    case LossKind::mse:
      return 2.0 * r;
    case LossKind::huber: {
      const double d = spec.huber_delta;
      if (std::abs(r) <= d) return r;
      return r > 0.0 ? d : -d;
    }
  }
  throw Error::internal("dloss_dpred: unknown kind");
}

double d2loss_dpred2(const LossSpec& spec, double pred, double target) {
  const double r = pred - target;
  switch (spec.kind) {
    case LossKind::l1:
      return 0.0;
    case LossKind::mse:
      return 2.0;
    case LossKind::huber:
      return std::abs(r) <= spec.huber_delta ? 1.0 : 0.0;
  }
  throw Error::internal("d2loss_dpred2: unknown kind");
}

ParamVector grad(const ModelSpec& spec, const ParamVector& params,
                 std::span<const LabeledExample> batch, const LossSpec& loss_spec,
                 double* mean_loss) {
  if (batch.empty()) throw Error::data("grad: empty batch");
  check_params(spec, params);
  const auto dims = layer_dims(spec);
  const std::size_t n_layers = dims.size() - 1;

  // per-layer flat offsets
  std::vector<std::size_t> offsets(n_layers);
  {
    std::size_t off = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
      offsets[l] = off;
      off += dims[l] * dims[l + 1] + dims[l + 1];
    }
  }

  ParamVector g = zero_params(spec);
  double total_loss = 0.0;

  // reused per-example buffers
  std::vector<std::vector<double>> inputs(n_layers);
  std::vector<std::vector<double>> preacts(n_layers);

  for (const auto& ex : batch) {
    if (ex.features.size() != spec.input_dim)
      throw Error::data("grad: example feature length mismatch");
    std::vector<double> cur(ex.features.begin(), ex.features.end());
    for (std::size_t l = 0; l < n_layers; ++l) {
      const std::size_t in = dims[l], out = dims[l + 1];
      inputs[l] = cur;
      std::vector<double> z(out);
      for (std::size_t o = 0; o < out; ++o) {
        double v = params.values[offsets[l] + in * out + o];
        const double* w = params.values.data() + offsets[l] + o * in;
        for (std::size_t i = 0; i < in; ++i) v += w[i] * cur[i];
        z[o] = v;
      }
      preacts[l] = z;
      if (l + 1 == n_layers) {
        cur = z;
      } else {
        for (auto& v : z) v = activate(spec.activation, v);
        cur = std::move(z);
      }
    }
    const double zout = preacts[n_layers - 1][0];
    const double pred = score_from_preact(spec, zout);
    total_loss += loss(loss_spec, pred, ex.target);
    // delta at the output pre-activation
    std::vector<double> delta{dloss_dpred(loss_spec, pred, ex.target) *
                              dscore_dpreact(spec, zout)};
    for (std::size_t li = n_layers; li-- > 0;) {
      const std::size_t in = dims[li], out = dims[li + 1];
      double* gw = g.values.data() + offsets[li];
      double* gb = g.values.data() + offsets[li] + in * out;
      const std::vector<double>& input = inputs[li];
      for (std::size_t o = 0; o < out; ++o) {
        gb[o] += delta[o];
        for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += delta[o] * input[i];
      }
      if (li == 0) break;
      const std::size_t prev_out = dims[li];
      std::vector<double> prev_delta(prev_out, 0.0);
      const double* w = params.values.data() + offsets[li];
      for (std::size_t i = 0; i < prev_out; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) acc += w[o * in + i] * delta[o];
        prev_delta[i] = acc * activate_derivative(spec.activation, preacts[li - 1][i]);
      }
      delta = std::move(prev_delta);
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (auto& v : g.values) v *= inv_n;
  if (mean_loss) *mean_loss = total_loss * inv_n;
  return g;
}

LastLayerView last_layer_split(const ParamVector& params) {
  if (params.layout.size() < 2)
    throw Error::data("last_layer_split: layout has no layers");
  const std::size_t last_count = params.layout[params.layout.size() - 2].count() +
                                 params.layout[params.layout.size() - 1].count();
  const std::size_t offset = params.values.size() - last_count;
  LastLayerView view;
  view.frozen = std::span<const double>(params.values.data(), offset);
  view.last = std::span<const double>(params.values.data() + offset, last_count);
  view.offset = offset;
  return view;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointFile& ckpt) {
  nlohmann::json header = {
      {"format", "moshead-checkpoint"},
      {"version", 1},
      {"spec", detail::spec_to_json(ckpt.spec)},
      {"layout", detail::layout_to_json(ckpt.params.layout)},
      {"seed", ckpt.seed},
      {"iteration", ckpt.iteration},
      {"param_count", ckpt.params.values.size()},
  };
  if (ckpt.feature_norm) header["feature_norm"] = detail::norm_to_json(*ckpt.feature_norm);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error::data("cannot write checkpoint: " + path.string());
  os << header.dump() << '\n';
  wire::write_f64_span(os, ckpt.params.values);
}

CheckpointFile load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error::data("checkpoint not found: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(wire::read_json_line(is, "checkpoint " + path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw Error::data("checkpoint header is not valid JSON: " + path.string() + " (" +
                      e.what() + ")");
  }
  if (header.value("format", "") != "moshead-checkpoint")
    throw Error::data("not a checkpoint file: " + path.string());
  CheckpointFile ckpt;
  ckpt.spec = detail::spec_from_json(header.at("spec"));
  ckpt.params.layout = detail::layout_from_json(header.at("layout"));
  ckpt.seed = header.at("seed").get<std::uint64_t>();
  ckpt.iteration = header.at("iteration").get<std::uint64_t>();
  const auto count = header.at("param_count").get<std::size_t>();
  ckpt.params.values = wire::read_f64_array(is, count, "checkpoint " + path.string());
  if (header.contains("feature_norm"))
    ckpt.feature_norm = detail::norm_from_json(header.at("feature_norm"));
  check_params(ckpt.spec, ckpt.params);
  return ckpt;
}

}  // namespace moshead::model
