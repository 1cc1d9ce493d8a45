#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "moshead/error.hpp"

namespace moshead::dataio {

/// One labeled (or unlabeled) data point: precomputed feature vector plus
/// the listener-averaged MOS when available.
struct UtteranceRecord {
  std::string utterance_id;
  std::string system_id;
  std::vector<double> features;
  std::optional<double> mos;
};

struct Dataset {
  std::string name;
  std::size_t feature_dim = 0;
  std::vector<UtteranceRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  std::size_t labeled_count() const noexcept;
  bool fully_labeled() const noexcept;
};

/// Metadata table: CSV with header `utterance_id,system_id,mos`; an empty
/// mos field marks an unlabeled record.
///
/// Feature file (SWGF): magic "SWGF", version byte 1, u32-le record count,
/// u32-le dimension, then per record a u16-le ID length, the UTF-8 ID bytes
/// and `dimension` f64-le values.
Dataset load_dataset(const std::filesystem::path& table_path,
                     const std::filesystem::path& features_path,
                     std::string name = "");

/// Metadata only (labels and system grouping); records carry no features.
Dataset load_table(const std::filesystem::path& table_path, std::string name = "");

/// Canonical writer (shortest round-trip decimals in the CSV). load followed
/// by save reproduces canonically-written inputs byte for byte.
void save_dataset(const Dataset& d, const std::filesystem::path& table_path,
                  const std::filesystem::path& features_path);

/// Records whose IDs are in `exclude` are dropped, order preserved. Unknown
/// IDs are ignored; their count lands in *unknown_count when given. An empty
/// result raises an emptiness error.
Dataset filter_by_ids(const Dataset& d, const std::set<std::string>& exclude,
                      std::size_t* unknown_count = nullptr);

/// system_id -> record indices, every index in exactly one group.
std::map<std::string, std::vector<std::size_t>> group_by_system(const Dataset& d);

/// Per-dimension standardization statistics, computed on the training set
/// only and applied to every split. Constant dimensions get stddev 1.
struct FeatureNorm {
  std::vector<double> mean;
  std::vector<double> stddev;
};

FeatureNorm compute_norm(const Dataset& train);
Dataset apply_norm(const Dataset& d, const FeatureNorm& norm);

/// Shortest round-trip decimal formatting, shared by every text artifact so
/// identical runs produce identical bytes.
std::string format_double(double v);

}  // namespace moshead::dataio
