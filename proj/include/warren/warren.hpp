#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "warren/content.hpp"
#include "warren/gcl.hpp"
#include "warren/postings.hpp"
#include "warren/rank.hpp"
#include "warren/types.hpp"

namespace warren {

enum class Mode { kDynamic, kStatic };

// Test hook simulating an abrupt process kill mid-write: once `budget`
// bytes have been written to the commit log, everything further (including
// the tail of the record in flight) is silently dropped and the engine
// refuses further writes. Recovery then runs against the torn file.
struct FaultInjector {
  std::atomic<int64_t> budget{-1};  // bytes still writable; <0 disables
  std::atomic<bool> tripped{false};
};

class Engine;

// One committed, immutable slice of the index: a single transaction's
// update or the result of merging a contiguous sequence range. Feature
// lists decode lazily from the loaded block bytes.
class Subindex {
 public:
  uint64_t seq_lo() const { return seq_lo_; }
  uint64_t seq_hi() const { return seq_hi_; }
  const std::vector<ContentExtent>& extents() const { return extents_; }
  std::vector<Feature> features() const;
  // nullptr when the feature is absent here.
  std::shared_ptr<const std::vector<Entry>> list(Feature f) const;
  double max_value(Feature f) const;

 private:
  friend class Engine;
  friend class Warren;
  struct FeatureSlot {
    PostingBlock block;
    double max_value = 0.0;
    mutable std::shared_ptr<const std::vector<Entry>> decoded;
  };

  uint64_t seq_lo_ = 0, seq_hi_ = 0;
  std::vector<ContentExtent> extents_;
  std::map<Feature, FeatureSlot> slots_;
  mutable std::mutex decode_mu_;
};

// An immutable view of every commit with sequence number <= high_water().
// Merged per-feature lists (conflict rules applied, erased spans filtered)
// are materialized on first use and cached for the snapshot's lifetime.
class Snapshot : public RankSource {
 public:
  Snapshot(std::vector<std::shared_ptr<const Subindex>> subs,
           uint64_t high_water);

  uint64_t high_water() const { return high_water_; }

  // Merged annotation list; never null (empty list when absent). Feature 0
  // yields the erasure spans themselves.
  std::shared_ptr<const std::vector<Entry>> list(Feature f) const;

  std::unique_ptr<Hopper> hopper(Feature f,
                                 AccessCounter* counter) const override;
  FeatureStats feature_stats(Feature f) const override;

  // Original text over tokens p..q. Throws StorageError if the interval
  // crosses a gap, falls outside stored content, or touches an erased span.
  std::string translate(Addr p, Addr q) const;

  // True when p..q is fully covered by contiguous content and untouched by
  // erasures.
  bool translatable(Addr p, Addr q) const;

  // Coverage alone, ignoring erasures (erase targets stay "covered").
  bool covered(Addr p, Addr q) const;

 private:
  std::vector<std::shared_ptr<const Subindex>> subs_;  // sequence order
  uint64_t high_water_;
  std::vector<const ContentExtent*> extents_;  // sorted by base
  mutable std::mutex mu_;
  mutable std::map<Feature, std::shared_ptr<const std::vector<Entry>>> lists_;
};

using SnapshotPtr = std::shared_ptr<const Snapshot>;

// A single-owner handle over a shared index. Clones share the index;
// each clone manages at most one snapshot and one transaction at a time.
class Warren {
 public:
  ~Warren();
  Warren(Warren&&) noexcept;
  Warren& operator=(Warren&&) noexcept;

  static Warren create(const std::filesystem::path& dir,
                       Mode mode = Mode::kDynamic);
  // Opens an existing index, running crash recovery over the commit log.
  static Warren open(const std::filesystem::path& dir);

  Warren clone() const;

  // Snapshot bracket. Every read and every transaction happens between
  // start() and end().
  void start();
  void end();
  bool started() const { return snapshot_ != nullptr; }
  SnapshotPtr snapshot() const;

  // Two-phase transactions. Addresses passed to annotate/erase while a
  // transaction holds appended content refer to the transaction's private
  // space when they fall inside it; anything else (and every erase) is a
  // committed global address. ready() assigns the sequence number and the
  // permanent interval and logs durably; it returns false (aborting) on
  // write failure. commit() publishes and returns the permanent interval of
  // the appended content ({0,-1} when nothing was appended); abort()
  // discards, leaving a gap if ready() already ran.
  void transaction();
  bool in_transaction() const { return txn_ != nullptr; }
  Interval append(std::string_view text);
  void annotate(Feature f, Interval interval, Value value);
  void annotate(std::string_view feature_text, Interval interval, Value value);
  void erase(Interval interval);
  bool ready();
  Interval commit();
  void abort();

  // Maintenance. merge_step() collapses one eligible run of subindexes
  // (returns whether it did anything); gc_step() deletes retired subindex
  // files no snapshot references any more, returning how many.
  bool merge_step();
  size_t gc_step();

  FaultInjector& fault_injector();
  const std::filesystem::path& dir() const;
  Mode mode() const;

 private:
  struct Txn;
  Warren() = default;

  std::shared_ptr<Engine> engine_;
  SnapshotPtr snapshot_;
  std::unique_ptr<Txn> txn_;
};

}  // namespace warren
