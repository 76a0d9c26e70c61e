#pragma once
#include <cstdint>
#include <cmath>
#include <random>

namespace loopren {

// Deterministic random streams. The engine is mt19937_64 (whose output
// sequence the standard pins down exactly); the real-valued mappings below
// are written out explicitly instead of going through the standard
// distributions, whose algorithms are implementation-defined. Seeded runs
// are therefore bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // uniform on [0, 1) with 53 random mantissa bits
  double uniform() { return double(bits() >> 11) * 0x1.0p-53; }

  // uniform on (0, 1]
  double uniform_pos() { return double((bits() >> 11) + 1) * 0x1.0p-53; }

  // standard normal via Box-Muller (pair cached)
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double a = 2.0 * 3.14159265358979323846 * uniform();
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0;
};

// Stable substream derivation (splitmix64 steps over seed and indices), so
// that parallel samples draw from independent, schedule-independent streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
  auto step = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  std::uint64_t h = step(seed);
  h = step(h ^ step(a + 0x100));
  h = step(h ^ step(b + 0x200));
  h = step(h ^ step(c + 0x300));
  return h ? h : 0x9e3779b97f4a7c15ull;
}

}  // namespace loopren
