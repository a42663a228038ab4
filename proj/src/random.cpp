// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/random.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "guidebench/digest.hpp"

namespace guidebench {

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  const std::uint64_t bound = n;
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % bound);
}

double Rng::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Seed derive_seed(Seed root, std::string_view stage, std::string_view item) {
  std::string material = std::to_string(root);
  material.push_back('\x1f');
  material.append(stage);
  material.push_back('\x1f');
  material.append(item);
  const auto bytes = sha256(material);
  Seed out = 0;
  for (int i = 0; i < 8; ++i) out = (out << 8) | bytes[static_cast<std::size_t>(i)];
  return out;
}

}  // namespace guidebench
