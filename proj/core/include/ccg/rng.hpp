#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ccg {

// Every stochastic routine takes a caller-owned stream; there is no global RNG.
using Rng = std::mt19937_64;

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Deterministically derive an independent sub-seed from a base seed and a
// list of tags (record index, candidate index, purpose code, ...).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept;

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags = {}) {
  return Rng{derive_seed(base, tags)};
}

// Uniform draw on the open interval (0, 1).
double uniform_open01(Rng& rng);

double standard_normal(Rng& rng);

// Purpose codes for derive_seed, so that streams for different roles never collide.
enum class Stream : std::uint64_t {
  kAction = 0xA1,
  kEnvironment = 0xE1,
  kReport = 0xB1,
  kReportExtension = 0xB2,
  kPrompt = 0xC1,
  kEdit = 0xC2,
  kAbduction = 0xD1,
  kCandidate = 0xD2,
  kTraining = 0xF1,
  kSplit = 0x51,
};

constexpr std::uint64_t tag(Stream s) noexcept { return static_cast<std::uint64_t>(s); }

}  // namespace ccg
