// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace uq {

// Named sub-streams carved out of one master seed. Every stochastic
// component draws from its own stream so that adding draws to one part
// of the pipeline never perturbs another.
enum class RngStream : std::uint64_t {
  data_gen = 1,
  data_split = 2,
  model_init = 3,
  batch_shuffle = 4,
  dropout = 5,
  sghmc_noise = 6,
  mcd_seeds = 7,
  occlusion = 8,
  member_subset = 9,
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Deterministic (base, stream, index) -> seed mapping.
inline std::uint64_t derive_seed(std::uint64_t base, RngStream stream,
                                 std::uint64_t index = 0) {
  std::uint64_t s = base ^ (static_cast<std::uint64_t>(stream) * 0xd1342543de82ef95ull);
  std::uint64_t a = splitmix64(s);
  s ^= index + 0x632be59bd9b4e019ull;
  return a ^ splitmix64(s);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline std::vector<double> normal_vector(std::size_t n, std::mt19937_64& rng,
                                         double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

}  // namespace uq
