#pragma once

#include <cstdint>
#include <vector>

#include "segcode/errors.hpp"
#include "segcode/rng.hpp"

namespace segcode {

/// Result of fixed-length temporal sub-sampling. Indices are 1-based frame
/// numbers into the source clip.
struct SampleIndices {
  std::int64_t k = 0;       // target length
  std::int64_t tau = 0;     // sampling period floor(N / k); 0 in the N < k case
  std::int64_t i_rand = 0;  // first selected frame
  std::vector<std::int64_t> indices;  // length k, nondecreasing, all in [1, N]
};

/// Sub-samples an N-frame clip down to k frames: tau = floor(N / k), the
/// first index is uniform in [1, tau], and subsequent indices step by tau.
/// When N < k the clip is taken whole and the last frame repeats to length k.
SampleIndices subsample_indices(std::int64_t n_frames, std::int64_t k, SplitMix64& rng);

/// Deterministic core: the index sequence for a given first frame.
SampleIndices subsample_indices_at(std::int64_t n_frames, std::int64_t k, std::int64_t i_rand);

/// Applies shared indices to any per-frame sequence (RGB frames and their
/// mask frames must be sampled with the same SampleIndices).
template <typename T>
std::vector<T> apply_indices(const std::vector<T>& frames, const SampleIndices& s) {
  std::vector<T> out;
  out.reserve(s.indices.size());
  for (std::int64_t i : s.indices) out.push_back(frames[static_cast<std::size_t>(i - 1)]);
  return out;
}

}  // namespace segcode
