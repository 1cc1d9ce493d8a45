#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moshead/dataio.hpp"

namespace moshead::synth {

/// Desk-scale stand-in for a listening test: each system carries a latent
/// quality q in [1,5] (stratified over equal-width bins so systems stay
/// distinguishable), utterance MOS is clamp(q + noise*N(0,1), 1, 5), and
/// features are a fixed random linear encoding of (q, utterance jitter)
/// shared by all three splits.
struct SynthConfig {
  std::size_t train_systems = 20;
  std::size_t train_utts = 10;
  std::size_t dev_systems = 10;
  std::size_t dev_utts = 0;  // 0 = train_utts
  std::size_t test_systems = 10;
  std::size_t test_utts = 0;
  std::size_t feature_dim = 16;
  double noise = 0.3;
  double jitter = 0.5;
  std::size_t corrupt = 0;
  std::uint64_t seed = 0;
};

struct SynthResult {
  dataio::Dataset train;
  dataio::Dataset dev;
  dataio::Dataset test;
  std::vector<std::string> corrupted_ids;
};

/// Corruption replaces the MOS of `corrupt` training records with
/// clamp(q + 3, 1, 5), choosing the records whose post-clamp shift is
/// largest (lowest-quality systems, one record per system first) so the
/// mislabeling is real rather than clipped away.
SynthResult generate(const SynthConfig& cfg);

}  // namespace moshead::synth
