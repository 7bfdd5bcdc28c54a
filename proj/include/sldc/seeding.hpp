#pragma once

#include <cstdint>
#include <random>

namespace sldc {

using Rng = std::mt19937_64;

// Engine seeded through seed_seq so that nearby integer seeds give unrelated streams.
inline Rng make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

// Sub-seed for one (task, class) draw. Adding classes never perturbs the
// seeds of other classes.
inline std::uint64_t sub_seed(std::uint64_t base, std::uint64_t task_id, std::uint64_t class_id) {
  return base ^ (task_id * 0x9E3779B9ull) ^ class_id;
}

}  // namespace sldc
