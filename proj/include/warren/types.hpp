#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace warren {

// Token addresses. Finite addresses may be negative; the two extreme
// representable values are reserved as sentinels and never appear in
// stored annotations.
using Addr = int64_t;

constexpr Addr kNegInf = std::numeric_limits<Addr>::min();
constexpr Addr kPosInf = std::numeric_limits<Addr>::max();

inline Addr sat_add(Addr a, Addr b) {
  if (a == kPosInf || b == kPosInf) return kPosInf;
  if (a == kNegInf || b == kNegInf) return kNegInf;
  Addr r;
  if (__builtin_add_overflow(a, b, &r)) return b > 0 ? kPosInf : kNegInf;
  return r;
}

inline Addr sat_sub(Addr a, Addr b) {
  if (a == kPosInf) return kPosInf;
  if (a == kNegInf) return kNegInf;
  Addr r;
  if (__builtin_sub_overflow(a, b, &r)) return b < 0 ? kPosInf : kNegInf;
  return r;
}

// 64-bit hashed feature id. Id 0 is reserved: it is never produced by the
// featurizer and marks erased regions in the index.
using Feature = uint64_t;
constexpr Feature kEraseFeature = 0;

// Annotation payload, interpreted as a double. Integer payloads are exact
// below 2^53.
using Value = double;

struct Interval {
  Addr p = 0;  // start
  Addr q = 0;  // end, inclusive

  bool operator==(const Interval&) const = default;

  bool finite() const { return p != kNegInf && q != kPosInf; }
  Addr length() const { return q - p + 1; }

  static Interval infinite() { return {kPosInf, kPosInf}; }
  static Interval before() { return {kNegInf, kNegInf}; }
  bool is_infinite() const { return p == kPosInf; }
  bool is_before() const { return q == kNegInf; }
};

struct Annotation {
  Feature feature = 0;
  Interval interval;
  Value value = 0.0;

  bool operator==(const Annotation&) const = default;
};

// The (interval, value) pair returned by cursor access methods.
struct Posting {
  Interval interval;
  Value value = 0.0;

  bool operator==(const Posting&) const = default;

  static Posting infinite() { return {Interval::infinite(), 0.0}; }
  static Posting before() { return {Interval::before(), 0.0}; }
  bool is_infinite() const { return interval.is_infinite(); }
  bool is_before() const { return interval.is_before(); }
};

// a is contained in b: b.p <= a.p <= a.q <= b.q.
inline bool contains(const Interval& a, const Interval& b) {
  return b.p <= a.p && a.q <= b.q;
}

// a nests in b: contained and not equal.
inline bool nests(const Interval& a, const Interval& b) {
  return a != b && contains(a, b);
}

// Anti-nesting reduction: keep the intervals with no other member nested
// inside them, ordered by start (equivalently end) address. Duplicates
// collapse.
std::vector<Interval> reduce(std::vector<Interval> intervals);

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct StorageError : Error {
  using Error::Error;
};

}  // namespace warren
