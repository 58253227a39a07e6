#pragma once

#include <cstdint>
#include <random>

// Seed split schedule.  Every random draw in the library flows from one root
// seed through derive(root, stream), where stream identifies the consumer:
//
//   stream_dataset        synthetic data generation
//   stream_partition      knockoff half split
//   stream_permutation    label permutation on a select half
//   stream_piece + k      piece k of a splitter run (shuffle + halving)
//
// Monte-Carlo experiments use root seeds base, base + 1, ... so any row of an
// experiment CSV can be replayed by passing its seed column straight back in.
// derive() is a splitmix64 chain, so streams are decorrelated and the result
// is a pure function of (root, stream): execution order and thread count
// never change any draw.
namespace spr::rng {

inline constexpr std::uint64_t stream_dataset = 0x01;
inline constexpr std::uint64_t stream_partition = 0x02;
inline constexpr std::uint64_t stream_permutation = 0x03;
inline constexpr std::uint64_t stream_piece = 0x1000;

[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

[[nodiscard]] constexpr std::uint64_t derive(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(splitmix64(root) ^ splitmix64(stream));
}

[[nodiscard]] inline std::mt19937_64 engine(std::uint64_t root, std::uint64_t stream) {
  return std::mt19937_64(derive(root, stream));
}

}  // namespace spr::rng
