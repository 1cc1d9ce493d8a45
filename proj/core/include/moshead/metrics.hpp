#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "moshead/dataio.hpp"

namespace moshead::metrics {

struct MetricSet {
  double mse = 0.0;
  double lcc = 0.0;
  double srcc = 0.0;
  double ktau = 0.0;
};

struct MetricReport {
  MetricSet utterance;
  MetricSet system;
  std::size_t n_utterances = 0;
  std::size_t n_systems = 0;
};

double mse(std::span<const double> pred, std::span<const double> truth);

/// Pearson correlation. Constant input in either argument raises a
/// degeneracy error rather than returning 0 or NaN.
double pearson_lcc(std::span<const double> a, std::span<const double> b);

/// 1-based ranks; ties share the mean of their rank positions.
std::vector<double> average_ranks(std::span<const double> v);

/// Pearson correlation of average ranks.
double spearman_srcc(std::span<const double> a, std::span<const double> b);

/// Kendall tau-b with tie correction, O(n log n) via merge-sort inversion
/// counting. All pairs tied in either vector raises a degeneracy error.
double kendall_ktau(std::span<const double> a, std::span<const double> b);

/// Utterance-level metrics over all labeled records, system-level metrics
/// over per-system means of predictions and of true MOS. Every labeled
/// record needs a prediction; fewer than two systems is degenerate.
MetricReport evaluate(const std::map<std::string, double>& predictions,
                      const dataio::Dataset& d);

std::string to_json_string(const MetricReport& report);
MetricReport report_from_json_string(const std::string& text);

/// Plain-text table, system block above utterance block.
std::string render_table(const MetricReport& report);

void save_report(const MetricReport& report, const std::filesystem::path& json_path,
                 const std::filesystem::path& table_path);

}  // namespace moshead::metrics
