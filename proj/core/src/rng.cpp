#include "ccg/rng.hpp"

#include <cmath>
#include <limits>

namespace ccg {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = mix64(base);
  for (auto t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

double uniform_open01(Rng& rng) {
  // 53 random bits, shifted off zero by half an ulp step.
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  const std::uint64_t bits = rng() >> 11;
  return (static_cast<double>(bits) + 0.5) * kScale;
}

double standard_normal(Rng& rng) {
  // Box-Muller on our own uniforms keeps draws identical across standard libraries.
  const double u1 = uniform_open01(rng);
  const double u2 = uniform_open01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace ccg
