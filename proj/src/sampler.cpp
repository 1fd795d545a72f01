#include "segcode/sampler.hpp"

namespace segcode {

SampleIndices subsample_indices_at(std::int64_t n_frames, std::int64_t k, std::int64_t i_rand) {
  if (n_frames < 1 || k < 1)
    throw DimensionError("subsample: need N >= 1 and k >= 1, got N=" + std::to_string(n_frames) +
                         " k=" + std::to_string(k));
  SampleIndices s;
  s.k = k;
  if (n_frames >= k) {
    s.tau = n_frames / k;
    s.i_rand = i_rand;
    s.indices.reserve(static_cast<std::size_t>(k));
    for (std::int64_t i = 1; i <= k; ++i) s.indices.push_back(s.i_rand + (i - 1) * s.tau);
  } else {
    // degenerate case: take everything, repeat the last frame up to length k
    s.tau = 0;
    s.i_rand = 1;
    s.indices.reserve(static_cast<std::size_t>(k));
    for (std::int64_t i = 1; i <= n_frames; ++i) s.indices.push_back(i);
    while (static_cast<std::int64_t>(s.indices.size()) < k) s.indices.push_back(n_frames);
  }
  return s;
}

SampleIndices subsample_indices(std::int64_t n_frames, std::int64_t k, SplitMix64& rng) {
  if (n_frames < 1 || k < 1)
    throw DimensionError("subsample: need N >= 1 and k >= 1, got N=" + std::to_string(n_frames) +
                         " k=" + std::to_string(k));
  std::int64_t i_rand = 1;
  if (n_frames >= k) {
    const std::int64_t tau = n_frames / k;
    i_rand = static_cast<std::int64_t>(rng.next_in(1, static_cast<std::uint64_t>(tau)));
  }
  return subsample_indices_at(n_frames, k, i_rand);
}

}  // namespace segcode
