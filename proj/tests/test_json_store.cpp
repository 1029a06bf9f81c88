#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "warren/featurizer.hpp"
#include "warren/json_store.hpp"
#include "warren/warren.hpp"

using namespace warren;

namespace {

const char* kDonut = R"({
 "id": "0001",
 "type": "donut",
 "name": "Cake",
 "ppu": 0.55,
 "batters":
  {"batter":
    [{ "id": "1001", "type": "Regular"},
     { "id": "1002", "type": "Chocolate"},
     { "id": "1003", "type": "Blueberry"},
     { "id": "1004", "type": "Devil's Food"}]},
 "topping":
  [{ "id": "5001", "type": "None"},
   { "id": "5002", "type": "Glazed"},
   { "id": "5005", "type": "Sugar"},
   { "id": "5007", "type": "Powdered Sugar"},
   { "id": "5006", "type": "Chocolate with Sprinkles" },
   { "id": "5003", "type": "Chocolate" },
   { "id": "5004", "type": "Maple" }]
})";

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("warren-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

Warren fresh(const TempDir& t) { return Warren::create(t.path); }

void commit_json(Warren& w, const std::string& text) {
  w.transaction();
  ingest_json_text(w, text);
  REQUIRE(w.ready());
  w.commit();
  w.end();  // refresh the read snapshot past the commit
  w.start();
}

}  // namespace

TEST_CASE("ingesting the sample object reproduces the reference trace") {
  TempDir dir("trace");
  Warren w = fresh(dir);
  w.start();
  w.transaction();
  std::vector<TraceEntry> trace;
  Interval root = ingest_json_text(w, kDonut, &trace);

  std::map<std::string, std::vector<TraceEntry>> by_path;
  for (const TraceEntry& t : trace) by_path[t.path].push_back(t);
  auto only = [&](const std::string& path) {
    REQUIRE(by_path.count(path) == 1);
    REQUIRE(by_path[path].size() == 1);
    return by_path[path][0];
  };

  CHECK(only(":batters:batter:[0]:id:").interval == Interval{16, 18});
  CHECK(only(":batters:batter:[0]:type:").interval == Interval{24, 26});
  CHECK(only(":batters:batter:[0]:").interval == Interval{11, 27});
  TraceEntry arr = only(":batters:batter:");
  CHECK(arr.interval == Interval{10, 84});
  CHECK(arr.value == 4.0);
  CHECK(only(":batters:").interval == Interval{5, 85});
  CHECK(only(":name:").interval == Interval{99, 101});
  TraceEntry ppu = only(":ppu:");
  CHECK(ppu.interval == Interval{107, 110});
  CHECK(ppu.value == 0.55);
  CHECK(root == Interval{0, 254});
  CHECK(only(":").interval == root);

  // structural-token waypoints pinned by the reference trace
  REQUIRE(w.ready());
  Interval committed = w.commit();
  CHECK(committed == Interval{0, 254});
  w.end();
  w.start();
  SnapshotPtr snap = w.snapshot();
  CHECK(snap->translate(0, 0) == "{");
  CHECK(snap->translate(1, 4) == "\"batters\":");
  CHECK(snap->translate(5, 5) == "{");
  CHECK(snap->translate(6, 9) == "\"batter\":");
  CHECK(snap->translate(10, 10) == "[");
  CHECK(snap->translate(11, 11) == "{");
  CHECK(snap->translate(12, 15) == "\"id\":");
  CHECK(snap->translate(16, 18) == "\"1001\"");
  CHECK(snap->translate(19, 19) == ",");
  CHECK(snap->translate(20, 23) == "\"type\":");
  CHECK(snap->translate(24, 26) == "\"Regular\"");
  CHECK(snap->translate(27, 27) == "}");
  CHECK(snap->translate(95, 98) == "\"name\":");
  CHECK(snap->translate(99, 101) == "\"Cake\"");
  CHECK(snap->translate(102, 102) == ",");
  CHECK(snap->translate(103, 106) == "\"ppu\":");
  CHECK(snap->translate(107, 110) == "0.55");
  w.end();
}

TEST_CASE("translate of the root parses back to the ingested document") {
  TempDir dir("roundtrip");
  Warren w = fresh(dir);
  w.start();
  commit_json(w, kDonut);
  SnapshotPtr snap = w.snapshot();
  auto roots = snap->list(featurize(":"));
  REQUIRE(roots->size() == 1);
  Interval root = roots->at(0).interval;
  nlohmann::json got = nlohmann::json::parse(snap->translate(root.p, root.q));
  CHECK(got == nlohmann::json::parse(kDonut));
  w.end();
}

TEST_CASE("every leaf's path annotation translates to its serialized value") {
  TempDir dir("leaves");
  Warren w = fresh(dir);
  w.start();
  w.transaction();
  std::vector<TraceEntry> trace;
  ingest_json_text(w,
                   R"({"a": 1.5, "b": ["x", true, null], "c": {"d": "y"}})",
                   &trace);
  REQUIRE(w.ready());
  w.commit();
  w.end();
  w.start();
  SnapshotPtr snap = w.snapshot();
  std::map<std::string, std::string> leaves;
  for (const TraceEntry& t : trace)
    leaves[t.path] = snap->translate(t.interval.p, t.interval.q);
  CHECK(leaves[":a:"] == "1.5");
  CHECK(leaves[":b:[0]:"] == "\"x\"");
  CHECK(leaves[":b:[1]:"] == "true");
  CHECK(leaves[":b:[2]:"] == "null");
  CHECK(leaves[":c:d:"] == "\"y\"");
  // array value carries its length
  for (const TraceEntry& t : trace)
    if (t.path == ":b:") CHECK(t.value == 3.0);
  w.end();
}

TEST_CASE("the empty object gets only a root annotation") {
  TempDir dir("empty");
  Warren w = fresh(dir);
  w.start();
  w.transaction();
  std::vector<TraceEntry> trace;
  Interval root = ingest_json_text(w, "{}", &trace);
  CHECK(root == Interval{0, 1});
  REQUIRE(trace.size() == 1);
  CHECK(trace[0].path == ":");
  w.abort();
  w.end();
}

TEST_CASE("malformed JSON raises a parse error, no transaction an error") {
  TempDir dir("errs");
  Warren w = fresh(dir);
  w.start();
  w.transaction();
  CHECK_THROWS_AS(ingest_json_text(w, "{oops"), ParseError);
  w.abort();
  CHECK_THROWS_AS(ingest_json_text(w, "{}"), Error);  // no open transaction
  w.end();
}

TEST_CASE("file ingestion scopes queries and partitions the store") {
  TempDir dir("files");
  TempDir data("files-data");
  std::filesystem::create_directories(data.path);
  auto write = [&](const char* name, const char* body) {
    std::ofstream out(data.path / name);
    out << body;
    return data.path / name;
  };
  auto trades = write("trades.jsonl",
                      "{\"sym\": \"ab\", \"qty\": 5}\n"
                      "{\"sym\": \"cd\", \"qty\": 7}\n"
                      "not json at all\n"
                      "{\"sym\": \"ab\", \"qty\": 1}\n");
  auto zips = write("zips.json", "{\"zip\": \"10001\", \"city\": \"ny\"}");

  Warren w = fresh(dir);
  w.start();
  IngestReport r1 = ingest_file(w, trades);
  CHECK(r1.documents == 3);
  CHECK(r1.parse_errors == 1);
  IngestReport r2 = ingest_file(w, zips);
  CHECK(r2.documents == 1);
  CHECK(r2.parse_errors == 0);
  w.end();
  w.start();
  SnapshotPtr snap = w.snapshot();
  AggregationSpec count;
  count.kind = AggKind::kCount;
  count.target = parse_query(":");
  CHECK(aggregate(*snap, count).rows[0][0] == "4");

  // per-file scoping: ": << file" splits the global count
  size_t total = 0;
  for (const auto& file : {trades, zips}) {
    AggregationSpec scoped;
    scoped.kind = AggKind::kCount;
    scoped.target = GclExpr::binary(GclKind::kContainedIn, parse_query(":"),
                                    file_extent(file.generic_string()));
    total += std::stoul(aggregate(*snap, scoped).rows[0][0]);
  }
  CHECK(total == 4);

  AggregationSpec ghost;
  ghost.kind = AggKind::kCount;
  ghost.target = GclExpr::binary(GclKind::kContainedIn, parse_query(":"),
                                 file_extent("never/ingested.json"));
  CHECK(aggregate(*snap, ghost).rows[0][0] == "0");

  // strict mode aborts on the bad record
  CHECK_THROWS_AS(ingest_file(w, trades, /*strict=*/true), ParseError);
  CHECK_FALSE(w.in_transaction());
  w.end();
}

TEST_CASE("numeric folds use annotation values or translated text") {
  TempDir dir("agg");
  Warren w = fresh(dir);
  w.start();
  commit_json(w, kDonut);
  commit_json(w, R"({"name": "Ring", "ppu": 0.15})");
  commit_json(w, R"({"name": "Twist", "ppu": 0.95})");
  SnapshotPtr snap = w.snapshot();

  auto fold = [&](AggKind kind, const char* q, bool from_text = false) {
    AggregationSpec spec;
    spec.kind = kind;
    spec.target = parse_query(q);
    spec.values_from_text = from_text;
    return aggregate(*snap, spec);
  };
  CHECK(fold(AggKind::kMin, ":ppu:").rows[0][0] == "0.15");
  CHECK(fold(AggKind::kMax, ":ppu:").rows[0][0] == "0.95");
  CHECK(std::stod(fold(AggKind::kAvg, ":ppu:").rows[0][0]) ==
        doctest::Approx(0.55).epsilon(1e-12));
  CHECK(std::stod(fold(AggKind::kSum, ":ppu:", true).rows[0][0]) ==
        doctest::Approx(1.65).epsilon(1e-12));

  // non-numeric values in a text-sourced fold are skipped with a warning
  auto bad = fold(AggKind::kSum, ":name:", true);
  CHECK(bad.warnings == 3);
  CHECK(bad.rows[0][0] == "0.0");

  // AVG / MIN / MAX over nothing yield an empty result
  CHECK(fold(AggKind::kAvg, ":absent:").rows.empty());
  CHECK(fold(AggKind::kMin, ":absent:").rows.empty());
  w.end();
}

TEST_CASE("group-by counts translated keys") {
  TempDir dir("group");
  Warren w = fresh(dir);
  w.start();
  commit_json(w, R"({"result": "Pass", "run": 1})");
  commit_json(w, R"({"result": "Fail", "run": 2})");
  commit_json(w, R"({"result": "Pass", "run": 3})");
  SnapshotPtr snap = w.snapshot();
  AggregationSpec spec;
  spec.kind = AggKind::kGroupBy;
  spec.target = parse_query(":result:");
  auto result = aggregate(*snap, spec);
  REQUIRE(result.rows.size() == 2);
  CHECK(result.rows[0] == std::vector<std::string>{"Fail", "1"});
  CHECK(result.rows[1] == std::vector<std::string>{"Pass", "2"});
  w.end();
}

TEST_CASE("explode yields one row per array element") {
  TempDir dir("explode");
  Warren w = fresh(dir);
  w.start();
  commit_json(w, kDonut);
  SnapshotPtr snap = w.snapshot();
  AggregationSpec spec;
  spec.kind = AggKind::kExplode;
  spec.explode_path = ":batters:batter:";
  auto result = aggregate(*snap, spec);
  REQUIRE(result.rows.size() == 4);
  CHECK(result.rows[0][0] == "0");
  CHECK(result.rows[0][1].find("1001") != std::string::npos);
  CHECK(result.rows[3][0] == "3");
  CHECK(result.rows[3][1].find("Devil's Food") != std::string::npos);
  w.end();
}

TEST_CASE("select returns the translated solutions") {
  TempDir dir("select");
  Warren w = fresh(dir);
  w.start();
  commit_json(w, kDonut);
  SnapshotPtr snap = w.snapshot();
  AggregationSpec spec;
  spec.kind = AggKind::kSelect;
  spec.target = parse_query(":name:");
  auto result = aggregate(*snap, spec);
  REQUIRE(result.rows.size() == 1);
  CHECK(result.rows[0][0] == "\"Cake\"");
  w.end();
}

TEST_CASE("date unification recognizes three formats and is idempotent") {
  TempDir dir("dates");
  Warren w = fresh(dir);
  w.start();
  commit_json(w, R"({"date": "Feb 20 2015", "id": 1})");
  commit_json(w, R"({"date": "2008-12-01", "id": 2})");
  commit_json(w, R"({"date": 1180075887000, "id": 3})");
  commit_json(w, R"({"date": "not a date", "id": 4})");
  commit_json(w, R"({"other": "field", "id": 5})");

  w.transaction();
  DateReport report = annotate_dates(w, parse_query(":date:"));
  REQUIRE(w.ready());
  w.commit();
  CHECK(report.objects == 3);
  CHECK(report.skipped == 1);
  w.end();
  w.start();
  SnapshotPtr snap = w.snapshot();
  auto count = [&](const std::string& feature) {
    return snap->list(featurize(feature))->size();
  };
  CHECK(count("year=2015") == 1);
  CHECK(count("month=02") == 1);
  CHECK(count("day=20") == 1);
  CHECK(count("year=2008") == 1);
  CHECK(count("month=12") == 1);
  CHECK(count("day=01") == 1);
  // 1180075887000 ms is 2007-05-25 UTC
  CHECK(count("year=2007") == 1);
  CHECK(count("month=05") == 1);
  CHECK(count("day=25") == 1);

  // Fig-6-style conjunction: month and year on the same object
  size_t hits = 0;
  solve(parse_query("year=2008 ^ month=12"), *snap,
        [&](Interval, Value) { ++hits; });
  CHECK(hits == 1);

  // repeat run rewrites identical annotations
  w.transaction();
  annotate_dates(w, parse_query(":date:"));
  REQUIRE(w.ready());
  w.commit();
  w.end();
  w.start();
  SnapshotPtr again = w.snapshot();
  CHECK(again->list(featurize("year=2007"))->size() == 1);
  CHECK(again->list(featurize("month=05"))->size() == 1);
  w.end();
}

TEST_CASE("restricting formats skips the others") {
  TempDir dir("datefmt");
  Warren w = fresh(dir);
  w.start();
  commit_json(w, R"({"date": "Feb 20 2015"})");
  commit_json(w, R"({"date": "2008-12-01"})");
  w.transaction();
  DateReport report =
      annotate_dates(w, parse_query(":date:"), {DateFormat::kIsoDate});
  REQUIRE(w.ready());
  w.commit();
  CHECK(report.objects == 1);
  CHECK(report.skipped == 1);
  w.end();
}
