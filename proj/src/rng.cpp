#include "splitwing/rng.hpp"

namespace splitwing {
namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t mix(uint64_t h, uint64_t v) {
  h ^= v;
  uint64_t s = h;
  return splitmix64(s);
}

}  // namespace

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

uint64_t Rng::below(uint64_t bound) {
  // reject the tail of the 64-bit range that would bias the modulo
  uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

Rng Rng::fork(std::string_view label, uint64_t a, uint64_t b) const {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the label bytes
  for (char c : label) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  h = mix(h, seed_);
  h = mix(h, a);
  h = mix(h, b);
  return Rng(h);
}

}  // namespace splitwing
