// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace guidebench {

using Seed = std::uint64_t;

/// Seeded 64-bit generator with distribution helpers whose output is fixed by
/// this library rather than by the standard library implementation, so runs
/// reproduce bit-for-bit across toolchains.
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal draw (Box-Muller, one value per call).
  double normal();

 private:
  std::mt19937_64 engine_;
};

/// Seed derivation used everywhere a stage fans out into items:
/// the first eight bytes (big-endian) of SHA-256("<root>\x1f<stage>\x1f<item>").
Seed derive_seed(Seed root, std::string_view stage, std::string_view item);

}  // namespace guidebench
