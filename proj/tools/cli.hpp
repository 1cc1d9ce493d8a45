#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace moshead::cli {

/// Runs one subcommand. `args` is argv without the program name. Returns
/// the process exit code: 0 success, 1 usage, 2 data/format, 3 numerical,
/// 4 internal.
int run(const std::vector<std::string>& args);

/// Answer-file shape: CSV with header `utterance_id,prediction`.
void write_predictions_csv(const std::filesystem::path& path,
                           std::span<const std::string> ids,
                           std::span<const double> values);

std::map<std::string, double> read_predictions_csv(const std::filesystem::path& path);

}  // namespace moshead::cli
