// Copyright 2026 The privlens Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PRIVLENS_RANDOM_HPP
#define PRIVLENS_RANDOM_HPP

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace privlens {

/// Engine used everywhere. Boost's engine and distributions have fixed,
/// documented algorithms, so draws are identical across standard libraries.
using Engine = boost::random::mt19937_64;

/// A node in a tree of deterministic random streams.
///
/// A key never advances; children are derived by hashing, so stream i of a
/// parent is the same no matter how many other streams were consumed or in
/// which order (and on which thread) they were used.
class StreamKey {
 public:
  explicit StreamKey(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  StreamKey child(std::uint64_t index) const { return StreamKey(key_, index); }
  StreamKey child(std::string_view name) const { return child(hash_name(name)); }

  Engine engine() const { return Engine(key_); }
  std::uint64_t value() const noexcept { return key_; }

  static std::uint64_t mix(std::uint64_t x) noexcept {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t hash_name(std::string_view name) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : name) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  StreamKey(std::uint64_t parent, std::uint64_t index) : key_(mix(parent ^ mix(index + 1))) {}

  std::uint64_t key_;
};

/// Fisher-Yates with a portable index distribution (std::shuffle is not portable).
template <typename T>
void shuffle(std::vector<T>& items, Engine& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    boost::random::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(items[i - 1], items[pick(rng)]);
  }
}

}  // namespace privlens

#endif  // PRIVLENS_RANDOM_HPP
