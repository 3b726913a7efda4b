#pragma once

#include <cstdint>
#include <string_view>

namespace gait {

// Seed for a named substream ("init", "sampler", "synth", ...) of a run seed.
// Distinct (name, index) pairs give unrelated streams; the mapping is stable
// across runs and platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

}  // namespace gait
