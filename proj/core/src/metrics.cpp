#include "moshead/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace moshead::metrics {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b,
                   const char* who, std::size_t min_len) {
  if (a.size() != b.size())
    throw Error::data(std::string(who) + ": length mismatch (" +
                      std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  if (a.size() < min_len)
    throw Error::data(std::string(who) + ": need at least " + std::to_string(min_len) +
                      " values, got " + std::to_string(a.size()));
}

/// Merge sort on b-values counting strict inversions (pairs i<j with
/// b[i] > b[j]). Equal values are not inversions.
std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& tmp,
                               std::size_t lo, std::size_t hi) {
  if (hi - lo <= 1) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(v, tmp, lo, mid) + count_inversions(v, tmp, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += mid - i;
      tmp[k++] = v[j++];
    } else {
      tmp[k++] = v[i++];
    }
  }
  while (i < mid) tmp[k++] = v[i++];
  while (j < hi) tmp[k++] = v[j++];
  std::copy(tmp.begin() + static_cast<std::ptrdiff_t>(lo),
            tmp.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

std::uint64_t tie_pairs(std::span<const double> sorted) {
  std::uint64_t pairs = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const std::uint64_t run = j - i;
    pairs += run * (run - 1) / 2;
    i = j;
  }
  return pairs;
}

}  // namespace

double mse(std::span<const double> pred, std::span<const double> truth) {
  check_lengths(pred, truth, "mse", 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

double pearson_lcc(std::span<const double> a, std::span<const double> b) {
  check_lengths(a, b, "pearson_lcc", 2);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ca = a[i] - ma, cb = b[i] - mb;
    saa += ca * ca;
    sbb += cb * cb;
    sab += ca * cb;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw Error::numeric("pearson_lcc: constant input vector (degenerate correlation)");
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    // positions i..j-1 (0-based) share the mean 1-based rank
    const double r = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double spearman_srcc(std::span<const double> a, std::span<const double> b) {
  check_lengths(a, b, "spearman_srcc", 2);
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson_lcc(ra, rb);
}

double kendall_ktau(std::span<const double> a, std::span<const double> b) {
  check_lengths(a, b, "kendall_ktau", 2);
  const std::size_t n = a.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (a[i] != a[j]) return a[i] < a[j];
    return b[i] < b[j];
  });

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;

  // Tie bookkeeping on the (a, b)-sorted order.
  std::uint64_t n_a = 0, n_ab = 0;
  {
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j < n && a[order[j]] == a[order[i]]) ++j;
      const std::uint64_t run = j - i;
      n_a += run * (run - 1) / 2;
      std::size_t k = i;
      while (k < j) {
        std::size_t l = k;
        while (l < j && b[order[l]] == b[order[k]]) ++l;
        const std::uint64_t jr = l - k;
        n_ab += jr * (jr - 1) / 2;
        k = l;
      }
      i = j;
    }
  }

  std::vector<double> bs(n);
  for (std::size_t i = 0; i < n; ++i) bs[i] = b[order[i]];
  std::vector<double> work = bs, tmp(n);
  const std::uint64_t discordant = count_inversions(work, tmp, 0, n);

  std::sort(bs.begin(), bs.end());
  const std::uint64_t n_b = tie_pairs(bs);

  if (n0 == n_a || n0 == n_b)
    throw Error::numeric("kendall_ktau: all pairs tied in one vector (degenerate)");

  const double num = static_cast<double>(n0) - static_cast<double>(n_a) -
                     static_cast<double>(n_b) + static_cast<double>(n_ab) -
                     2.0 * static_cast<double>(discordant);
  const double den = std::sqrt(static_cast<double>(n0 - n_a) * static_cast<double>(n0 - n_b));
  return num / den;
}

MetricReport evaluate(const std::map<std::string, double>& predictions,
                      const dataio::Dataset& d) {
  std::vector<double> up, ut;
  std::vector<std::string> missing;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_system;
  for (const auto& r : d.records) {
    if (!r.mos) continue;
    auto it = predictions.find(r.utterance_id);
    if (it == predictions.end()) {
      missing.push_back(r.utterance_id);
      continue;
    }
    up.push_back(it->second);
    ut.push_back(*r.mos);
    auto& [ps, ts] = per_system[r.system_id];
    ps.push_back(it->second);
    ts.push_back(*r.mos);
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "evaluate: missing predictions for " << missing.size() << " utterance(s):";
    std::size_t shown = std::min<std::size_t>(missing.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) msg << ' ' << missing[i];
    if (missing.size() > shown) msg << " (+" << missing.size() - shown << " more)";
    throw Error::data(msg.str());
  }
  if (up.empty()) throw Error::data("evaluate: no labeled records");
  if (per_system.size() < 2)
    throw Error::numeric("evaluate: fewer than two systems, system-level metrics degenerate");

  std::vector<double> sp, st;
  for (const auto& [sys, vecs] : per_system) {
    const auto& [ps, ts] = vecs;
    sp.push_back(std::accumulate(ps.begin(), ps.end(), 0.0) / static_cast<double>(ps.size()));
    st.push_back(std::accumulate(ts.begin(), ts.end(), 0.0) / static_cast<double>(ts.size()));
  }

  MetricReport rep;
  rep.n_utterances = up.size();
  rep.n_systems = per_system.size();
  rep.utterance = {mse(up, ut), pearson_lcc(up, ut), spearman_srcc(up, ut),
                   kendall_ktau(up, ut)};
  rep.system = {mse(sp, st), pearson_lcc(sp, st), spearman_srcc(sp, st),
                kendall_ktau(sp, st)};
  return rep;
}

namespace {

nlohmann::json set_to_json(const MetricSet& s) {
  return {{"mse", s.mse}, {"lcc", s.lcc}, {"srcc", s.srcc}, {"ktau", s.ktau}};
}

MetricSet set_from_json(const nlohmann::json& j) {
  return {j.at("mse").get<double>(), j.at("lcc").get<double>(),
          j.at("srcc").get<double>(), j.at("ktau").get<double>()};
}

}  // namespace

std::string to_json_string(const MetricReport& report) {
  nlohmann::json j = {
      {"utterance", set_to_json(report.utterance)},
      {"system", set_to_json(report.system)},
      {"n_utterances", report.n_utterances},
      {"n_systems", report.n_systems},
  };
  return j.dump(2) + "\n";
}

MetricReport report_from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  MetricReport rep;
  rep.utterance = set_from_json(j.at("utterance"));
  rep.system = set_from_json(j.at("system"));
  rep.n_utterances = j.at("n_utterances").get<std::size_t>();
  rep.n_systems = j.at("n_systems").get<std::size_t>();
  return rep;
}

std::string render_table(const MetricReport& report) {
  char buf[256];
  std::string out;
  out += "Level       MSE       LCC       KTAU      SRCC\n";
  std::snprintf(buf, sizeof buf, "System    %8.4f  %8.4f  %8.4f  %8.4f   (%zu systems)\n",
                report.system.mse, report.system.lcc, report.system.ktau,
                report.system.srcc, report.n_systems);
  out += buf;
  std::snprintf(buf, sizeof buf, "Utterance %8.4f  %8.4f  %8.4f  %8.4f   (%zu utterances)\n",
                report.utterance.mse, report.utterance.lcc, report.utterance.ktau,
                report.utterance.srcc, report.n_utterances);
  out += buf;
  return out;
}

void save_report(const MetricReport& report, const std::filesystem::path& json_path,
                 const std::filesystem::path& table_path) {
  {
    std::ofstream os(json_path, std::ios::binary);
    if (!os) throw Error::data("cannot write report: " + json_path.string());
    os << to_json_string(report);
  }
  std::ofstream os(table_path, std::ios::binary);
  if (!os) throw Error::data("cannot write report table: " + table_path.string());
  os << render_table(report);
}

}  // namespace moshead::metrics
