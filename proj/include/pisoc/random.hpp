// Copyright 2026 The pisoc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PISOC_RANDOM_HPP
#define PISOC_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <limits>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

namespace pisoc {

/// SplitMix64 generator. Cheap to seed, so one instance per rollout is affordable.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return finalize(state_);
  }

  static constexpr std::uint64_t finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Derives an independent substream key from a master seed and a path of indices.
/**
 * Used for (seed, replan, rollout) style addressing so results never depend on which worker evaluates
 * which rollout.
 */
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t key = SplitMix64::finalize(seed ^ 0x6a09e667f3bcc909ULL);
  for (const auto index : path) {
    key = SplitMix64::finalize(key + 0x9e3779b97f4a7c15ULL * (index + 1));
  }
  return key;
}

/// Standard normal variates from a dedicated SplitMix64 stream.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double operator()() { return normal_(engine_); }

  double uniform(double lo, double hi) { return boost::random::uniform_real_distribution<double>(lo, hi)(engine_); }

  SplitMix64& engine() { return engine_; }

 private:
  SplitMix64 engine_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace pisoc

#endif
