#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "warren/gcl.hpp"
#include "warren/warren.hpp"

namespace warren {

// One path annotation produced by ingestion, in the transaction's private
// address space; exposed so tests can check the emitted trace.
struct TraceEntry {
  std::string path;
  Interval interval;
  Value value = 0.0;
};

// Appends a JSON document (structural characters stored as marker tokens)
// and annotates every value with its canonical path feature:
//   root ":", object members ":key:", array elements ":key:[i]:".
// Objects are traversed in sorted key order. Arrays carry their length as
// the annotation value; numeric leaves carry their number. Returns the
// document's interval in the transaction's private space.
Interval ingest_json(Warren& w, const nlohmann::json& doc,
                     std::vector<TraceEntry>* trace = nullptr);

// Parses then ingests; throws ParseError on malformed text.
Interval ingest_json_text(Warren& w, std::string_view text,
                          std::vector<TraceEntry>* trace = nullptr);

struct IngestReport {
  size_t documents = 0;
  size_t parse_errors = 0;
  Interval extent{0, -1};  // private-space extent of everything ingested
};

// Ingests a .json file (one document) or .jsonl (document per line) in a
// single transaction, annotates the whole span with the file-name feature,
// and commits. With strict=true a parse error aborts the transaction;
// otherwise bad records are skipped and counted.
IngestReport ingest_file(Warren& w, const std::filesystem::path& file,
                         bool strict = false);

// Atom scoping queries to one ingested file's extent.
GclExpr file_extent(std::string_view name);

enum class DateFormat {
  kMonthNameDayYear,  // "Feb 20 2015"
  kIsoDate,           // "2015-02-20"
  kEpochMillis,       // 1180075887000 (UTC)
};

struct DateReport {
  size_t objects = 0;  // distinct root objects annotated
  size_t skipped = 0;  // unparseable field values
};

// Solves `scan` over the current snapshot, parses each solution's text as
// a date, and annotates the enclosing root object with year=YYYY,
// month=MM, day=DD features inside the open transaction. Idempotent: a
// repeat run rewrites identical annotations.
DateReport annotate_dates(Warren& w, const GclExpr& scan,
                          const std::vector<DateFormat>& formats = {
                              DateFormat::kMonthNameDayYear,
                              DateFormat::kIsoDate, DateFormat::kEpochMillis});

enum class AggKind {
  kCount,
  kMin,
  kMax,
  kAvg,
  kSum,
  kGroupBy,
  kExplode,
  kSelect,
};

struct AggregationSpec {
  AggKind kind = AggKind::kCount;
  GclExpr target;
  std::string explode_path;      // array path for kExplode
  bool values_from_text = false; // numeric folds parse translated text
};

struct AggregationResult {
  std::vector<std::vector<std::string>> rows;
  size_t warnings = 0;  // non-numeric values skipped by a numeric fold
};

AggregationResult aggregate(const Snapshot& snap, const AggregationSpec& spec);

}  // namespace warren
