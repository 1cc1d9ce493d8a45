#include "moshead/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wire.hpp"

namespace moshead::dataio {

namespace {

using namespace moshead::wire;

constexpr char kMagic[4] = {'S', 'W', 'G', 'F'};
constexpr unsigned char kVersion = 1;

struct FeatureTable {
  std::size_t dim = 0;
  std::map<std::string, std::vector<double>> by_id;
};

FeatureTable read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error::data("features file not found: " + path.string());
  unsigned char header[4 + 1 + 4 + 4];
  if (!read_bytes(is, header, sizeof header))
    throw Error::data("features file truncated header: " + path.string());
  if (std::memcmp(header, kMagic, 4) != 0)
    throw Error::data("features file has bad magic (want SWGF): " + path.string());
  if (header[4] != kVersion)
    throw Error::data("features file has unsupported version " +
                      std::to_string(header[4]) + ": " + path.string());
  const std::uint32_t count = load_u32le(header + 5);
  const std::uint32_t dim = load_u32le(header + 9);
  FeatureTable table;
  table.dim = dim;
  std::vector<unsigned char> buf;
  for (std::uint32_t r = 0; r < count; ++r) {
    unsigned char len_b[2];
    if (!read_bytes(is, len_b, 2))
      throw Error::data("features file dimension/payload mismatch (truncated record " +
                        std::to_string(r) + "): " + path.string());
    const std::uint16_t id_len = load_u16le(len_b);
    std::string id(id_len, '\0');
    if (id_len > 0 && !read_bytes(is, id.data(), id_len))
      throw Error::data("features file truncated utterance id at record " +
                        std::to_string(r) + ": " + path.string());
    buf.resize(static_cast<std::size_t>(dim) * 8);
    if (dim > 0 && !read_bytes(is, buf.data(), buf.size()))
      throw Error::data("features file dimension/payload mismatch (record " + id +
                        "): " + path.string());
    std::vector<double> values(dim);
    for (std::uint32_t j = 0; j < dim; ++j) values[j] = load_f64le(buf.data() + 8 * j);
    table.by_id.emplace(std::move(id), std::move(values));
  }
  // Trailing bytes mean the header undercounted.
  char probe;
  if (is.read(&probe, 1))
    throw Error::data("features file has trailing bytes beyond declared record count: " +
                      path.string());
  return table;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

std::size_t Dataset::labeled_count() const noexcept {
  std::size_t n = 0;
  for (const auto& r : records) n += r.mos.has_value();
  return n;
}

bool Dataset::fully_labeled() const noexcept {
  return labeled_count() == records.size();
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error::internal("format_double: to_chars failed");
  return std::string(buf, ptr);
}

Dataset load_table(const std::filesystem::path& table_path, std::string name) {
  std::ifstream is(table_path);
  if (!is) throw Error::data("metadata table not found: " + table_path.string());
  std::string line;
  if (!std::getline(is, line))
    throw Error::data("metadata table is empty: " + table_path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "utterance_id,system_id,mos")
    throw Error::data("metadata table has bad header (want utterance_id,system_id,mos): " +
                      table_path.string());

  Dataset d;
  d.name = name.empty() ? table_path.stem().string() : std::move(name);
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 3)
      throw Error::data("metadata table line " + std::to_string(lineno) +
                        " has " + std::to_string(fields.size()) + " fields, want 3");
    UtteranceRecord rec;
    rec.utterance_id = fields[0];
    rec.system_id = fields[1];
    if (rec.utterance_id.empty())
      throw Error::data("metadata table line " + std::to_string(lineno) +
                        " has empty utterance_id");
    if (!seen.insert(rec.utterance_id).second)
      throw Error::data("duplicate utterance_id in metadata table: " + rec.utterance_id);
    if (!fields[2].empty()) {
      double mos = 0.0;
      auto [ptr, ec] = std::from_chars(fields[2].data(),
                                       fields[2].data() + fields[2].size(), mos);
      if (ec != std::errc{} || ptr != fields[2].data() + fields[2].size())
        throw Error::data("metadata table line " + std::to_string(lineno) +
                          " has unparsable mos field '" + fields[2] + "'");
      if (!(mos >= 1.0 && mos <= 5.0))
        throw Error::data("mos out of range [1,5] for utterance " + rec.utterance_id +
                          ": " + fields[2]);
      rec.mos = mos;
    }
    d.records.push_back(std::move(rec));
  }
  return d;
}

Dataset load_dataset(const std::filesystem::path& table_path,
                     const std::filesystem::path& features_path, std::string name) {
  Dataset d = load_table(table_path, std::move(name));
  FeatureTable features = read_features(features_path);
  d.feature_dim = features.dim;
  std::vector<std::string> missing;
  for (auto& rec : d.records) {
    auto it = features.by_id.find(rec.utterance_id);
    if (it == features.by_id.end()) {
      missing.push_back(rec.utterance_id);
    } else {
      rec.features = it->second;
    }
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "features file is missing " << missing.size() << " utterance id(s):";
    std::size_t shown = std::min<std::size_t>(missing.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) msg << ' ' << missing[i];
    if (missing.size() > shown) msg << " (+" << missing.size() - shown << " more)";
    throw Error::data(msg.str());
  }
  for (const auto& r : d.records) {
    for (double v : r.features) {
      if (!std::isfinite(v))
        throw Error::data("non-finite feature value for utterance " + r.utterance_id);
    }
  }
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& table_path,
                  const std::filesystem::path& features_path) {
  {
    std::ofstream os(table_path, std::ios::binary);
    if (!os) throw Error::data("cannot write metadata table: " + table_path.string());
    os << "utterance_id,system_id,mos\n";
    for (const auto& r : d.records) {
      os << r.utterance_id << ',' << r.system_id << ',';
      if (r.mos) os << format_double(*r.mos);
      os << '\n';
    }
  }
  std::ofstream os(features_path, std::ios::binary);
  if (!os) throw Error::data("cannot write features file: " + features_path.string());
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  write_u32le(os, static_cast<std::uint32_t>(d.records.size()));
  write_u32le(os, static_cast<std::uint32_t>(d.feature_dim));
  for (const auto& r : d.records) {
    if (r.features.size() != d.feature_dim)
      throw Error::data("record " + r.utterance_id + " has feature dim " +
                        std::to_string(r.features.size()) + ", dataset declares " +
                        std::to_string(d.feature_dim));
    if (r.utterance_id.size() > 0xFFFF)
      throw Error::data("utterance id too long for SWGF: " + r.utterance_id);
    write_u16le(os, static_cast<std::uint16_t>(r.utterance_id.size()));
    os.write(r.utterance_id.data(), static_cast<std::streamsize>(r.utterance_id.size()));
    for (double v : r.features) write_f64le(os, v);
  }
}

Dataset filter_by_ids(const Dataset& d, const std::set<std::string>& exclude,
                      std::size_t* unknown_count) {
  Dataset out;
  out.name = d.name;
  out.feature_dim = d.feature_dim;
  std::size_t hits = 0;
  for (const auto& r : d.records) {
    if (exclude.count(r.utterance_id)) {
      ++hits;
    } else {
      out.records.push_back(r);
    }
  }
  if (unknown_count) *unknown_count = exclude.size() - hits;
  if (out.records.empty())
    throw Error::data("filter_by_ids: every record excluded, dataset would be empty");
  return out;
}

std::map<std::string, std::vector<std::size_t>> group_by_system(const Dataset& d) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < d.records.size(); ++i)
    groups[d.records[i].system_id].push_back(i);
  return groups;
}

FeatureNorm compute_norm(const Dataset& train) {
  if (train.records.empty()) throw Error::data("compute_norm: empty dataset");
  const std::size_t dim = train.feature_dim;
  FeatureNorm norm;
  norm.mean.assign(dim, 0.0);
  norm.stddev.assign(dim, 0.0);
  const double n = static_cast<double>(train.records.size());
  for (const auto& r : train.records)
    for (std::size_t j = 0; j < dim; ++j) norm.mean[j] += r.features[j];
  for (std::size_t j = 0; j < dim; ++j) norm.mean[j] /= n;
  for (const auto& r : train.records)
    for (std::size_t j = 0; j < dim; ++j) {
      const double c = r.features[j] - norm.mean[j];
      norm.stddev[j] += c * c;
    }
  for (std::size_t j = 0; j < dim; ++j) {
    norm.stddev[j] = std::sqrt(norm.stddev[j] / n);
    if (norm.stddev[j] == 0.0) norm.stddev[j] = 1.0;
  }
  return norm;
}

Dataset apply_norm(const Dataset& d, const FeatureNorm& norm) {
  if (norm.mean.size() != d.feature_dim || norm.stddev.size() != d.feature_dim)
    throw Error::data("apply_norm: dimension mismatch");
  Dataset out = d;
  for (auto& r : out.records)
    for (std::size_t j = 0; j < d.feature_dim; ++j)
      r.features[j] = (r.features[j] - norm.mean[j]) / norm.stddev[j];
  return out;
}

}  // namespace moshead::dataio
