#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fade/data.hpp"

namespace fade::testing {

// Back-to-back CIFAR-10 records with random labels and pixels.
inline std::vector<std::uint8_t> cifar_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> out(n * data::kCifarRecordBytes);
  for (std::size_t r = 0; r < n; ++r) {
    out[r * data::kCifarRecordBytes] = static_cast<std::uint8_t>(rng() % 10);
    for (std::size_t i = 1; i < data::kCifarRecordBytes; ++i)
      out[r * data::kCifarRecordBytes + i] = static_cast<std::uint8_t>(rng() & 0xff);
  }
  return out;
}

}  // namespace fade::testing
