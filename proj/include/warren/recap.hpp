#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace warren {

// Desk-scale dynamic-index workout: concurrent appenders (content txn,
// stats txn, judgment txn per document), query threads (ranked retrieval
// with feedback, effectiveness per query), one deletion pass per epoch,
// and optional background merge/GC — all against one shared index, with
// consistency checks riding along.
struct RecapConfig {
  std::filesystem::path dir;
  uint64_t seed = 42;
  int appenders = 4;
  int queriers = 16;
  int epochs = 4;
  int docs_per_epoch = 48;
  int topics = 8;
  size_t depth = 20;        // ranking depth
  bool maintenance = true;  // background merge/GC thread
};

struct EpochStats {
  double map_after_add = 0.0;
  double oracle_after_add = 0.0;
  double map_after_delete = 0.0;
  double oracle_after_delete = 0.0;
  uint64_t docs_added = 0;
  uint64_t docs_deleted = 0;
};

struct RecapReport {
  std::vector<EpochStats> epochs;
  bool consistent = true;   // no atomicity/translation violation observed
  std::string diagnostics;  // first violation, if any
};

// Runs the full scenario; `log` (optional) receives an AP-over-time line
// per query evaluation and per-barrier summaries. Deterministic barrier
// metrics for a fixed config; in-flight query lines depend on scheduling.
RecapReport run_recap(const RecapConfig& config, std::ostream* log = nullptr);

}  // namespace warren
