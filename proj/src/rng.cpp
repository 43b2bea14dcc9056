#include "hatr/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hatr {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t stream_id) {
  return Rng(mix_seed(mix_seed(seed) ^ mix_seed(stream_id * 0x9e3779b97f4a7c15ULL + 1)));
}

double Rng::normal() {
  // Box-Muller; the unused second variate is discarded to keep the
  // draw count a pure function of call count.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::categorical(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("categorical: empty probability vector");
  const double u = uniform();
  double cumulative = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace hatr
