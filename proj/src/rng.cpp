#include "patchlikely/rng.hpp"

#include <cmath>
#include <numbers>

namespace patchlikely {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed, uint64_t stream) : key_(splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL))) {}

uint64_t Rng::next_u64() {
  const uint64_t i = counter_++;
  return splitmix64(key_ + i * 0x9E3779B97F4A7C15ULL);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  // 1 - u keeps the logarithm argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t Rng::below(uint64_t n) {
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "Rng::below requires n > 0");
  // Rejection sampling removes modulo bias.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

Rng Rng::derive(uint64_t stream) const {
  Rng child(0);
  child.key_ = splitmix64(key_ ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
  return child;
}

Tensor gaussian_sample(Rng& rng, const Shape& shape) {
  Tensor out(shape);
  auto d = out.data();
  for (size_t i = 0; i < d.size(); i += 2) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    d[i] = static_cast<float>(r * std::cos(2.0 * std::numbers::pi * u2));
    if (i + 1 < d.size()) d[i + 1] = static_cast<float>(r * std::sin(2.0 * std::numbers::pi * u2));
  }
  return out;
}

Tensor uniform_sample(Rng& rng, const Shape& shape, float lo, float hi) {
  if (!(lo <= hi)) {
    throw Error(ErrorKind::kInvalidArgument,
                "uniform_sample: lo (" + std::to_string(lo) + ") must not exceed hi (" + std::to_string(hi) + ")");
  }
  Tensor out(shape, lo);
  if (lo == hi) return out;
  const double span = static_cast<double>(hi) - lo;
  for (float& v : out.data()) {
    v = static_cast<float>(lo + span * rng.uniform());
    if (v >= hi) v = std::nextafter(hi, lo);
  }
  return out;
}

}  // namespace patchlikely
