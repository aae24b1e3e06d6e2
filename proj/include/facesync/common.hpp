#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace facesync {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input whose shape or size does not match what the operation expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or corrupted file container.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Numerically degenerate input (e.g. parallel rotation columns).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Deterministic random stream (xoshiro256**), reproducible across
/// platforms and standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller).
  double normal();
  /// +1 or -1 with equal probability.
  double rademacher();
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);
  /// Independent child stream, e.g. one per frame or per worker.
  Rng split(std::uint64_t stream);

 private:
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
  std::uint64_t next();
};

/// Number of worker threads used by parallel_for (default: hardware).
void set_thread_count(int n);
int thread_count();

/// Runs fn(i) for i in [begin, end) across the configured worker threads.
/// Each index is visited exactly once; callers write to disjoint outputs.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn);

}  // namespace facesync
