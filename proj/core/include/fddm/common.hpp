/*
 * Copyright 2026 The FDDM Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FDDM_COMMON_HPP_
#define FDDM_COMMON_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fddm {

// All numeric work is done in double precision.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto its exit-code contract, so new
// failure modes should reuse one of the existing categories.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dimension disagreement between arguments.
struct ShapeError : Error {
  using Error::Error;
};

/// Invalid parameter or configuration value (bad tau, negative weight,
/// non-PSD correlation, degenerate layer dims, ...).
struct ParamError : Error {
  using Error::Error;
};

/// Non-finite or otherwise malformed numeric input.
struct InputError : Error {
  using Error::Error;
};

/// Mathematical domain violation (KL with a vanishing q, zero-norm cosine).
struct DomainError : Error {
  using Error::Error;
};

/// Operation requested on a model that lacks the needed component.
struct CapabilityError : Error {
  using Error::Error;
};

/// Dataset-level problem (empty modality subset, degenerate split, ...).
struct DataError : Error {
  using Error::Error;
};

/// Malformed dataset or checkpoint file content.
struct ParseError : Error {
  using Error::Error;
};

/// Structurally valid file whose fields contradict the declared schema.
struct SchemaError : Error {
  using Error::Error;
};

/// Filesystem failure.
struct IoError : Error {
  using Error::Error;
};

/// Training-time failure (divergence), message carries the step index.
struct TrainError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// std::mt19937_64 output is pinned by the standard, but the std::*_distribution
// adapters are not, so uniform/normal draws are derived here directly from the
// raw 64-bit stream. Given a seed, every draw is identical on every platform.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1), 53 bits of entropy.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Draws two uniforms per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  /// Uniform integer in [0, n). Rejection-sampled, bias free.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % n;
    }
  }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[bounded(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 mix step; used to derive independent stream seeds from one seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// FNV-1a over bytes; stable across platforms, used for provenance hashes.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace fddm

#endif  // FDDM_COMMON_HPP_
