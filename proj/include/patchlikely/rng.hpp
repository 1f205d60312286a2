#pragma once

#include <cstdint>

#include "patchlikely/tensor.hpp"

namespace patchlikely {

// Counter-based generator: output i is a pure function of (key, i), so the
// full state is two integers and streams can be derived without sharing
// mutable state. Built on the SplitMix64 finalizer, which is specified
// bit-exactly and therefore identical on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0);

  uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Standard normal via Box-Muller; consumes two raw draws.
  double normal();
  // Uniform integer on [0, n).
  uint64_t below(uint64_t n);

  // Independent generator keyed by this one's key and `stream`.
  Rng derive(uint64_t stream) const;

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

uint64_t splitmix64(uint64_t x);

Tensor gaussian_sample(Rng& rng, const Shape& shape);
// Throws when lo > hi. lo == hi yields a constant tensor.
Tensor uniform_sample(Rng& rng, const Shape& shape, float lo, float hi);

}  // namespace patchlikely
