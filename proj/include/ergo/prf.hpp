#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace ergo {

// 64-bit finalizer (splitmix64 output function)
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int r) {
  return (x << r) | (x >> (64 - r));
}

// SeedKey: 128-bit master key.
struct SeedKey {
  std::uint64_t hi{0};
  std::uint64_t lo{0};

  friend bool operator==(const SeedKey&, const SeedKey&) = default;

  std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string s(32, '0');
    for (int i = 0; i < 16; ++i) {
      s[15 - i] = digits[(hi >> (4 * i)) & 0xf];
      s[31 - i] = digits[(lo >> (4 * i)) & 0xf];
    }
    return s;
  }

  static SeedKey from_hex(std::string s) {
    if (s.rfind("0x", 0) == 0 || s.rfind("0X", 0) == 0) s = s.substr(2);
    if (s.empty() || s.size() > 32) throw std::invalid_argument("seed must be 1..32 hex digits");
    SeedKey k;
    for (char c : s) {
      int v;
      if (c >= '0' && c <= '9') v = c - '0';
      else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
      else throw std::invalid_argument("seed has a non-hex digit");
      k.hi = (k.hi << 4) | (k.lo >> 60);
      k.lo = (k.lo << 4) | static_cast<std::uint64_t>(v);
    }
    return k;
  }
};

// Default master used by the test suites and the CLI.
inline constexpr SeedKey kDefaultSeed{0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL};

namespace detail {
enum : std::uint64_t { kTagSet = 0x5e7, kTagWords = 0x3a4d, kTagDerive = 0xd311 };
}

// Keyed hash of a word sequence. Two lanes absorb the words through the
// splitmix finalizer; the key enters both lanes.
inline std::uint64_t prf64(const SeedKey& key, const std::uint64_t* words, std::size_t n) {
  std::uint64_t a = mix64(key.lo ^ 0x6a09e667f3bcc908ULL);
  std::uint64_t b = mix64(key.hi ^ 0xbb67ae8584caa73bULL);
  for (std::size_t i = 0; i < n; ++i) {
    a = mix64(a ^ words[i]);
    b = mix64(b + rotl64(a, 23) + 0x9e3779b97f4a7c15ULL);
  }
  a = mix64(a ^ (n * 0x3c6ef372fe94f82bULL));
  return mix64(a ^ rotl64(b, 29) ^ key.hi);
}

inline std::uint64_t prf64(const SeedKey& key, std::initializer_list<std::uint64_t> words) {
  return prf64(key, words.begin(), words.size());
}

// Canonical encoding of a finite set: tag, size, then the sorted distinct elements.
inline std::vector<std::uint64_t> encode_set(std::vector<std::uint64_t> set) {
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  std::vector<std::uint64_t> w;
  w.reserve(set.size() + 2);
  w.push_back(detail::kTagSet);
  w.push_back(set.size());
  w.insert(w.end(), set.begin(), set.end());
  return w;
}

inline double to_unit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Raw 64-bit draw attached to a finite set.
inline std::uint64_t xi_bits(const SeedKey& key, const std::vector<std::uint64_t>& set) {
  auto w = encode_set(set);
  return prf64(key, w.data(), w.size());
}

// Uniform value in [0,1) attached to a finite set, as a 53-bit dyadic rational.
inline double xi(const SeedKey& key, const std::vector<std::uint64_t>& set) {
  return to_unit(xi_bits(key, set));
}

// Child key for an ordered label path (trial number, sample number, ...).
inline SeedKey derive(const SeedKey& key, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint64_t> w{detail::kTagDerive, path.size()};
  w.insert(w.end(), path.begin(), path.end());
  SeedKey out;
  out.hi = prf64(key, w.data(), w.size());
  w.push_back(0x1);
  out.lo = prf64(key, w.data(), w.size());
  return out;
}

inline std::uint64_t label_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return mix64(h);
}

// Splitmix64 stream.
class Stream {
 public:
  explicit Stream(std::uint64_t state) : state_(state) {}
  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }
  double uniform() { return to_unit(next()); }
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("below(0)");
    std::uint64_t limit = ~0ULL - (~0ULL % n);
    for (;;) {
      std::uint64_t v = next();
      if (v < limit) return v % n;
    }
  }
  bool coin() { return (next() >> 63) != 0; }

 private:
  std::uint64_t state_;
};

// Bit sequence read off a uniform value: the first 53 bits are the binary
// expansion of the value; later bits are expanded deterministically from it.
class UniformBits {
 public:
  explicit UniformBits(double u)
      : head_(static_cast<std::uint64_t>(u * 0x1.0p53)), stream_(head_ ^ 0xa0761d6478bd642fULL) {}

  bool bit(std::size_t n) {
    if (n < 53) return ((head_ >> (52 - n)) & 1ULL) != 0;
    std::size_t idx = n - 53;
    while (tail_.size() * 64 <= idx) tail_.push_back(stream_.next());
    return ((tail_[idx / 64] >> (idx % 64)) & 1ULL) != 0;
  }

  // Count of leading 1 bits starting at position `from`, capped at `cap`.
  std::size_t run_of_ones(std::size_t from, std::size_t cap) {
    std::size_t k = 0;
    while (k < cap && bit(from + k)) ++k;
    return k;
  }

 private:
  std::uint64_t head_;
  Stream stream_;
  std::vector<std::uint64_t> tail_;
};

}  // namespace ergo
