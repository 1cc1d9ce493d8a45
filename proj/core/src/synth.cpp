#include "moshead/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "moshead/numkit.hpp"

namespace moshead::synth {

namespace {

std::string two_digit(std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02zu", v);
  return buf;
}

std::string three_digit(std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03zu", v);
  return buf;
}

}  // namespace

SynthResult generate(const SynthConfig& cfg) {
  if (cfg.train_systems < 1 || cfg.train_utts < 1)
    throw Error::data("gen-synth: train split needs at least one system and utterance");
  if (cfg.feature_dim < 1) throw Error::data("gen-synth: feature_dim must be >= 1");
  if (cfg.noise < 0.0) throw Error::data("gen-synth: noise must be >= 0");
  if (cfg.jitter < 0.0) throw Error::data("gen-synth: jitter must be >= 0");
  if (cfg.corrupt > cfg.train_systems * cfg.train_utts)
    throw Error::data("gen-synth: corrupt count exceeds train record count");

  numkit::RngState rng{cfg.seed, 0};
  const std::size_t d = cfg.feature_dim;
  const std::size_t m = std::min<std::size_t>(3, d - 1);

  // Fixed encoder shared by every split.
  std::vector<double> encoder(d * (1 + m));
  const double enc_scale = 1.0 / std::sqrt(static_cast<double>(1 + m));
  for (auto& v : encoder) v = numkit::next_normal(rng) * enc_scale;

  auto make_split = [&](const std::string& prefix, std::size_t n_sys, std::size_t n_utts,
                        std::size_t corrupt_n, std::vector<std::string>* corrupted_out) {
    dataio::Dataset split;
    split.name = prefix;
    split.feature_dim = d;
    if (n_sys == 0 || n_utts == 0) return split;

    // One latent quality per equal-width bin of [1,5], then shuffled.
    std::vector<double> q(n_sys);
    const double width = 4.0 / static_cast<double>(n_sys);
    for (std::size_t s = 0; s < n_sys; ++s)
      q[s] = 1.0 + (static_cast<double>(s) + numkit::next_uniform(rng)) * width;
    for (std::size_t i = n_sys; i > 1; --i)
      std::swap(q[i - 1], q[numkit::next_bounded(rng, i)]);

    std::vector<std::size_t> record_system;
    for (std::size_t s = 0; s < n_sys; ++s) {
      const std::string sys_id = prefix + "-sys" + two_digit(s);
      for (std::size_t u = 0; u < n_utts; ++u) {
        dataio::UtteranceRecord rec;
        rec.system_id = sys_id;
        rec.utterance_id = sys_id + "-utt" + three_digit(u);
        rec.features.resize(d);
        std::vector<double> latent(1 + m);
        latent[0] = q[s];
        for (std::size_t j = 0; j < m; ++j)
          latent[1 + j] = numkit::next_normal(rng) * cfg.jitter;
        for (std::size_t i = 0; i < d; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < 1 + m; ++j)
            acc += encoder[i * (1 + m) + j] * latent[j];
          rec.features[i] = acc;
        }
        rec.mos = std::clamp(q[s] + cfg.noise * numkit::next_normal(rng), 1.0, 5.0);
        split.records.push_back(std::move(rec));
        record_system.push_back(s);
      }
    }

    if (corrupt_n > 0) {
      // Largest post-clamp shift first; spread over systems before doubling up.
      std::vector<std::size_t> order(split.records.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = std::clamp(q[record_system[a]] + 3.0, 1.0, 5.0) - q[record_system[a]];
        const double sb = std::clamp(q[record_system[b]] + 3.0, 1.0, 5.0) - q[record_system[b]];
        return sa > sb;
      });
      std::vector<std::size_t> chosen;
      std::vector<bool> system_used(n_sys, false);
      for (auto i : order) {
        if (chosen.size() == corrupt_n) break;
        if (system_used[record_system[i]]) continue;
        system_used[record_system[i]] = true;
        chosen.push_back(i);
      }
      for (auto i : order) {
        if (chosen.size() == corrupt_n) break;
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) chosen.push_back(i);
      }
      std::sort(chosen.begin(), chosen.end());
      for (auto i : chosen) {
        auto& rec = split.records[i];
        rec.mos = std::clamp(q[record_system[i]] + 3.0, 1.0, 5.0);
        if (corrupted_out) corrupted_out->push_back(rec.utterance_id);
      }
    }
    return split;
  };

  SynthResult result;
  result.train = make_split("train", cfg.train_systems, cfg.train_utts, cfg.corrupt,
                            &result.corrupted_ids);
  result.dev = make_split("dev", cfg.dev_systems,
                          cfg.dev_utts ? cfg.dev_utts : cfg.train_utts, 0, nullptr);
  result.test = make_split("test", cfg.test_systems,
                           cfg.test_utts ? cfg.test_utts : cfg.train_utts, 0, nullptr);
  return result;
}

}  // namespace moshead::synth
