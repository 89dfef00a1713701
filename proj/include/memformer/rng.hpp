/*
 * Copyright 2026 The Memformer Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Seedable PRNG (xoshiro256++) with explicit stream splitting.
//
// Every random draw in the project comes from a stream addressed by a
// path of tags under the experiment seed, e.g.
//
//   Rng::root(seed).child(run).child(Stream::kBatch).child(epoch).child(i)
//
// Two consequences: a batch index can be sampled independently of its
// siblings (safe to parallelize), and resampling schedules are
// reproducible because the stream for (run, epoch, i) never depends on
// how many draws other streams made.

#pragma once

#include <cmath>
#include <cstdint>

#include "memformer/matrix.hpp"

namespace memformer {

// Stream tags; numeric run/step/index tags are used alongside these.
namespace Stream {
inline constexpr std::uint64_t kSigma = 0x5349474d41ull;   // covariance draw
inline constexpr std::uint64_t kInit = 0x494e4954ull;      // parameter init
inline constexpr std::uint64_t kBatch = 0x4241544348ull;   // training batches
inline constexpr std::uint64_t kEval = 0x4556414cull;      // held-out batches
inline constexpr std::uint64_t kTask = 0x5441534bull;      // per-instance tasks
}  // namespace Stream

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  static Rng root(std::uint64_t seed) { return Rng(splitmix64(seed)); }

  // Derive an independent child stream; children with distinct tags are
  // distinct, and the derivation is order-sensitive along the path.
  Rng child(std::uint64_t tag) const {
    return Rng(splitmix64(key_ ^ splitmix64(tag)));
  }

  double uniform01() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Box-Muller; the pair member not returned is cached in this stream.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u = 1.0 - uniform01();  // (0, 1], keeps log finite
    const double r = std::sqrt(-2.0 * std::log(u));
    const double t = 2.0 * 3.141592653589793238462643383279502884 * uniform01();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  Matrix gaussian_matrix(int rows, int cols, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = stddev * gaussian();
    return m;
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

 private:
  explicit Rng(std::uint64_t key) : key_(key) {
    std::uint64_t x = key;
    for (auto& word : s_) {
      x = splitmix64(x);
      word = x;
    }
  }

  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t key_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace memformer
