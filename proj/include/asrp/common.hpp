// include/asrp/common.hpp

// Copyright 2026  The asrp Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef ASRP_COMMON_HPP_
#define ASRP_COMMON_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace asrp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when user-supplied configuration or input data is invalid.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Mixes `value` into `seed` (splitmix64 finalizer). Used to derive independent
/// seed streams such as (base, round, model) triples.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t value);

template <typename... Ts>
std::uint64_t derive_seed(std::uint64_t base, Ts... values) {
  std::uint64_t s = base;
  ((s = mix_seed(s, static_cast<std::uint64_t>(values))), ...);
  return s;
}

/// Small deterministic random source. Implemented on top of splitmix64/xoshiro
/// so that streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Runs `fn(i)` for i in [0, n) using up to `workers` threads. Each index is
/// handled exactly once; results must be written to per-index slots.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn);

/// Number of workers to use when the caller passes 0.
int default_workers();

inline bool all_finite(const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

}  // namespace asrp

#endif  // ASRP_COMMON_HPP_
