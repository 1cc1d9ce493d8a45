#pragma once

// Internal JSON (de)serialization for types embedded in checkpoint and
// posterior headers. Not installed.

#include "json.hpp"
#include "moshead/dataio.hpp"
#include "moshead/model.hpp"

namespace moshead::detail {

inline nlohmann::json spec_to_json(const model::ModelSpec& spec) {
  return {
      {"input_dim", spec.input_dim},
      {"hidden_dims", spec.hidden_dims},
      {"activation", spec.activation == model::Activation::tanh_fn ? "tanh" : "relu"},
      {"output", spec.output == model::OutputKind::sigmoid_bounded ? "sigmoid" : "linear"},
      {"low", spec.output_low},
      {"high", spec.output_high},
  };
}

inline model::ModelSpec spec_from_json(const nlohmann::json& j) {
  model::ModelSpec spec;
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  spec.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  const auto act = j.at("activation").get<std::string>();
  if (act == "tanh") {
    spec.activation = model::Activation::tanh_fn;
  } else if (act == "relu") {
    spec.activation = model::Activation::relu;
  } else {
    throw Error::data("unknown activation in header: " + act);
  }
  const auto out = j.at("output").get<std::string>();
  if (out == "sigmoid") {
    spec.output = model::OutputKind::sigmoid_bounded;
  } else if (out == "linear") {
    spec.output = model::OutputKind::linear;
  } else {
    throw Error::data("unknown output kind in header: " + out);
  }
  spec.output_low = j.at("low").get<double>();
  spec.output_high = j.at("high").get<double>();
  return spec;
}

inline nlohmann::json layout_to_json(const std::vector<model::LayerShape>& layout) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layout) arr.push_back({{"name", l.name}, {"shape", l.dims}});
  return arr;
}

inline std::vector<model::LayerShape> layout_from_json(const nlohmann::json& j) {
  std::vector<model::LayerShape> layout;
  for (const auto& e : j) {
    layout.push_back({e.at("name").get<std::string>(),
                      e.at("shape").get<std::vector<std::size_t>>()});
  }
  return layout;
}

inline nlohmann::json norm_to_json(const dataio::FeatureNorm& norm) {
  return {{"mean", norm.mean}, {"stddev", norm.stddev}};
}

inline dataio::FeatureNorm norm_from_json(const nlohmann::json& j) {
  return {j.at("mean").get<std::vector<double>>(),
          j.at("stddev").get<std::vector<double>>()};
}

}  // namespace moshead::detail
