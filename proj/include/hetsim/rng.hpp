#pragma once

#include <cstdint>
#include <random>

namespace hetsim {

// SplitMix64 output mixer (Steele, Lea, Flood 2014).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based stream split: stream k of a master seed is the k-th output
// of a SplitMix64 keyed on the master. Streams are independent of execution
// order, so parallel trials reproduce bit-exactly.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(master + stream * 0x9e3779b97f4a7c15ULL);
}

// Fixed channel layout inside one trial. Every consumer of randomness owns
// its own channel; adding a consumer must append, never renumber.
enum class RngChannel : std::uint64_t {
  detector_1 = 0,
  detector_2 = 1,
  electronics_1 = 2,
  electronics_2 = 3,
  excess_noise = 4,
  lo_phase = 5,
  fringe = 6,
};

inline constexpr std::uint64_t kChannelsPerTrial = 8;

inline std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial,
                                RngChannel channel) {
  return stream_seed(master,
                     trial * kChannelsPerTrial +
                         static_cast<std::uint64_t>(channel));
}

// Sub-run master for multi-leg scenarios (leg 0, leg 1, ...), derived so leg
// streams never collide with trial streams of another leg.
inline std::uint64_t leg_master(std::uint64_t master, std::uint64_t leg) {
  return mix64(master ^ (0xa0761d6478bd642fULL * (leg + 1)));
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

}  // namespace hetsim
