// Copyright 2026 The vvit Authors
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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace vvit {

/// Counter-based generator: output i is a SplitMix64 finalisation of
/// (key + i * golden). The whole state is (key, counter), so a copy replays
/// the same stream and `derive` hands out independent child streams without
/// touching the parent.
///
/// Distributions are implemented here rather than taken from <random>: the
/// standard distributions are implementation-defined, which would break
/// bit-exact reproducibility across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Standard normal via Box-Muller (cosine branch only, two draws each).
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept;
  bool bernoulli(double p) noexcept;
  /// Knuth's product method; intended for small means.
  std::uint64_t poisson(double mean) noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n) noexcept;

  Rng derive(std::uint64_t stream) const noexcept;
  Rng derive(std::string_view name) const noexcept;

  static std::uint64_t mix(std::uint64_t x) noexcept;
  static std::uint64_t hash(std::string_view text) noexcept;
  static std::uint64_t combine(std::uint64_t a, std::uint64_t b) noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace vvit
