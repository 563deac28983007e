#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

namespace emsim {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Every dB conversion in the project clamps at this floor so that zero power
// maps to a finite value instead of -inf.
inline constexpr double kDbFloor = -300.0;
inline constexpr double kLinearFloor = 1e-30;

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct AliasingError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct TrainingFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double power_to_db(double p) {
  return 10.0 * std::log10(std::max(p, kLinearFloor));
}

inline double db_to_power(double db) { return std::pow(10.0, db / 10.0); }

inline double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }

// FNV-1a, used for config fingerprints.  Fixed constants keep hashes stable
// across platforms and runs.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string to_hex(std::uint64_t v);

// sin and cos evaluated together for small arguments (series through x^19,
// error below 1e-14 for |x| <= 1.6, libm fallback beyond).  The synthesis
// loops call this once per sample, where two libm calls dominate the cost.
inline void sincos_small(double x, double& s, double& c) {
  if (!(std::fabs(x) <= 1.6)) {
    s = std::sin(x);
    c = std::cos(x);
    return;
  }
  const double z = x * x;
  double ps = 1.0 - z * (1.0 / 342.0);
  ps = 1.0 - z * (1.0 / 272.0) * ps;
  ps = 1.0 - z * (1.0 / 210.0) * ps;
  ps = 1.0 - z * (1.0 / 156.0) * ps;
  ps = 1.0 - z * (1.0 / 110.0) * ps;
  ps = 1.0 - z * (1.0 / 72.0) * ps;
  ps = 1.0 - z * (1.0 / 42.0) * ps;
  ps = 1.0 - z * (1.0 / 20.0) * ps;
  ps = 1.0 - z * (1.0 / 6.0) * ps;
  s = x * ps;
  double pc = 1.0 - z * (1.0 / 306.0);
  pc = 1.0 - z * (1.0 / 240.0) * pc;
  pc = 1.0 - z * (1.0 / 182.0) * pc;
  pc = 1.0 - z * (1.0 / 132.0) * pc;
  pc = 1.0 - z * (1.0 / 90.0) * pc;
  pc = 1.0 - z * (1.0 / 56.0) * pc;
  pc = 1.0 - z * (1.0 / 30.0) * pc;
  pc = 1.0 - z * (1.0 / 12.0) * pc;
  pc = 1.0 - z * (1.0 / 2.0) * pc;
  c = pc;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic seed derivation.  Components of the simulation (noise,
// interference, per-pair phases, ...) each derive an isolated stream from the
// scene seed plus a tag, so adding or removing one component never shifts the
// randomness consumed by another.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> words);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a, std::uint64_t b);

// xoshiro256++ with splitmix64 seeding.  Hand-rolled so that streams are
// bit-reproducible across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Inclusive bounds.
  int uniform_int(int lo, int hi);

  // Standard normal via the Marsaglia polar method (second value cached).
  double normal();
  // E|z|^2 = 1.
  std::complex<double> normal_complex();

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace emsim
