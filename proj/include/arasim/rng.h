//
// Copyright 2026 Google LLC
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef ARASIM_RNG_H_
#define ARASIM_RNG_H_

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace arasim {

inline constexpr uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; used to key random substreams by impression identifiers so that a
// record's draws do not depend on its position in the dataset.
inline constexpr uint64_t Fingerprint64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// A counter-based random stream. The state is a pure function of the root
// seed and the path of substream indices used to reach it, so identical
// (seed, path) pairs give identical draw sequences regardless of the order in
// which streams are created or which thread consumes them.
//
// Satisfies UniformRandomBitGenerator (xoshiro256** underneath), so it can
// be passed to <random> distributions.
class RngStream {
 public:
  using result_type = uint64_t;

  explicit RngStream(uint64_t seed) : key_(SplitMix64(seed)) { Reset(); }
  RngStream(uint64_t seed, std::initializer_list<uint64_t> path)
      : key_(SplitMix64(seed)) {
    for (uint64_t p : path) key_ = Mix(key_, p);
    Reset();
  }

  // Independent child stream; does not advance this stream.
  RngStream Substream(uint64_t index) const {
    return RngStream(Mix(key_, index), KeyTag{});
  }
  RngStream Substream(std::initializer_list<uint64_t> path) const {
    uint64_t key = key_;
    for (uint64_t p : path) key = Mix(key, p);
    return RngStream(key, KeyTag{});
  }

  uint64_t key() const { return key_; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    const uint64_t result = Rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = Rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1).
  double Uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform double in (0, 1].
  double UniformPositive() {
    return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, n); n > 0. Lemire's nearly-divisionless method.
  uint64_t UniformInt(uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
    uint64_t low = static_cast<uint64_t>(m);
    if (low < n) {
      const uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * n;
        low = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

 private:
  struct KeyTag {};
  RngStream(uint64_t key, KeyTag) : key_(key) { Reset(); }

  static constexpr uint64_t Mix(uint64_t key, uint64_t index) {
    return SplitMix64(key ^ SplitMix64(index + 0x632be59bd9b4e019ULL));
  }
  static constexpr uint64_t Rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  void Reset() {
    uint64_t x = key_;
    for (auto& s : s_) {
      x += 0x9e3779b97f4a7c15ULL;
      s = SplitMix64(x);
    }
  }

  uint64_t key_;
  uint64_t s_[4];
};

}  // namespace arasim

#endif  // ARASIM_RNG_H_
