#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "warren/types.hpp"

namespace warren {

struct Entry {
  Interval interval;
  Value value = 0.0;

  bool operator==(const Entry&) const = default;
};

// One feature's annotations in minimal-interval order: strictly increasing
// starts and ends, no same-feature nesting.
class AnnotationList {
 public:
  // Inserts under the conflict rules: if the new annotation nests with an
  // existing one, only the innermost is retained; an identical interval
  // takes the later value.
  void annotate(Interval interval, Value value);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& mutable_entries() { return entries_; }
  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }

  Value max_value() const;

 private:
  std::vector<Entry> entries_;
};

// Compressed posting storage: gap-encoded varint starts, ends elided when
// every interval is a singleton, values elided when all zero, with
// synchronization points every 256 entries.
struct PostingBlock {
  std::vector<uint8_t> bytes;
};

constexpr size_t kSyncInterval = 256;

// Throws Error if entries are not in minimal-interval order.
PostingBlock encode_block(std::span<const Entry> entries);
std::vector<Entry> decode_block(const PostingBlock& block);

// Decodes only entries from the sync point covering `index` onward;
// used by storage-backed cursors to avoid decoding whole lists.
std::vector<Entry> decode_block_from(const PostingBlock& block, size_t index);

// Counts access-method invocations against the leaf cursors of a query.
struct AccessCounter {
  uint64_t calls = 0;
};

// Stateful cursor. tau/rho implement the forward access methods
// (first entry with start/end >= k, <(inf,inf),0> at exhaustion);
// uat/ohr are their internal mirror images (last entry with start/end
// <= k, <(-inf,-inf),0> before the first entry), used by operator
// composition, not exposed as a query feature.
class Hopper {
 public:
  virtual ~Hopper() = default;
  virtual Posting tau(Addr k) = 0;
  virtual Posting rho(Addr k) = 0;
  virtual Posting uat(Addr k) = 0;
  virtual Posting ohr(Addr k) = 0;

  static Posting before_first() { return Posting::before(); }
};

// Array-backed cursor with galloping search from the most recent position.
class ListHopper : public Hopper {
 public:
  explicit ListHopper(std::shared_ptr<const std::vector<Entry>> entries,
                      AccessCounter* counter = nullptr);

  Posting tau(Addr k) override;
  Posting rho(Addr k) override;
  Posting uat(Addr k) override;
  Posting ohr(Addr k) override;

 private:
  size_t seek_start(Addr k);  // first index with start >= k
  size_t seek_end(Addr k);    // first index with end >= k

  std::shared_ptr<const std::vector<Entry>> entries_;
  AccessCounter* counter_;
  size_t hint_ = 0;
  // Most recent results, one per forward access method.
  Addr tau_key_ = kNegInf;
  Posting tau_cache_;
  bool tau_cached_ = false;
  Addr rho_key_ = kNegInf;
  Posting rho_cache_;
  bool rho_cached_ = false;
};

// Cursor over an empty list.
std::unique_ptr<Hopper> empty_hopper();

}  // namespace warren
