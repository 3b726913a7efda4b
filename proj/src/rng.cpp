#include "gait/rng.hpp"

#include <array>
#include <random>

namespace gait {

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  std::uint64_t name_hash = 0xcbf29ce484222325ull;
  for (char c : stream) {
    name_hash ^= static_cast<unsigned char>(c);
    name_hash *= 0x100000001b3ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(name_hash),
                    static_cast<std::uint32_t>(name_hash >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace gait
