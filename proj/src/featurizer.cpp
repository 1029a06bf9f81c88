#include "warren/featurizer.hpp"

#include <cstring>

namespace warren {

namespace {

// MurmurHash64A, fixed seed.
uint64_t murmur64a(const void* key, size_t len, uint64_t seed) {
  const uint64_t m = 0xc6a4a7935bd1e995ULL;
  const int r = 47;
  uint64_t h = seed ^ (len * m);
  const unsigned char* data = static_cast<const unsigned char*>(key);
  const unsigned char* end = data + (len & ~size_t{7});
  while (data != end) {
    uint64_t k;
    std::memcpy(&k, data, 8);
    data += 8;
    k *= m;
    k ^= k >> r;
    k *= m;
    h ^= k;
    h *= m;
  }
  size_t tail = len & 7;
  if (tail) {
    uint64_t k = 0;
    std::memcpy(&k, data, tail);
    h ^= k;
    h *= m;
  }
  h ^= h >> r;
  h *= m;
  h ^= h >> r;
  return h;
}

constexpr uint64_t kSeed = 0x5741525245ULL;  // fixed, not per-index

}  // namespace

Feature featurize(std::string_view s) {
  uint64_t h = murmur64a(s.data(), s.size(), kSeed);
  return h == 0 ? 1 : h;
}

Feature json_featurize(const Token& token) {
  if (token.structural) return 0;
  return featurize(token.text);
}

}  // namespace warren
