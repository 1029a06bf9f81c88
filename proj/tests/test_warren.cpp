#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <optional>
#include <random>
#include <thread>

#include "doctest.h"
#include "warren/featurizer.hpp"
#include "warren/gcl.hpp"
#include "warren/warren.hpp"

using namespace warren;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("warren-engine-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

// Commits one document with a per-document canary annotation; returns the
// permanent extent.
Interval commit_doc(Warren& w, const std::string& text, int id) {
  w.transaction();
  Interval priv = w.append(text);
  w.annotate(":", priv, 0.0);
  w.annotate("canary:" + std::to_string(id), priv, 1.0);
  REQUIRE(w.ready());
  return w.commit();
}

std::vector<std::pair<Interval, Value>> solutions(const Snapshot& snap,
                                                  const std::string& q) {
  std::vector<std::pair<Interval, Value>> out;
  solve(parse_query(q), snap, [&](Interval iv, Value v) {
    out.emplace_back(iv, v);
  });
  return out;
}

}  // namespace

TEST_CASE("handle usage contract") {
  TempDir dir("usage");
  Warren w = Warren::create(dir.path);
  CHECK_THROWS_AS(w.end(), UsageError);
  CHECK_THROWS_AS(w.snapshot(), UsageError);
  CHECK_THROWS_AS(w.transaction(), UsageError);
  w.start();
  CHECK_THROWS_AS(w.start(), UsageError);
  CHECK_THROWS_AS(w.append("x"), UsageError);
  CHECK_THROWS_AS(w.commit(), UsageError);
  CHECK_THROWS_AS(w.abort(), UsageError);
  w.transaction();
  CHECK_THROWS_AS(w.transaction(), UsageError);
  CHECK_THROWS_AS(w.commit(), UsageError);  // not ready yet
  CHECK_THROWS_AS(w.annotate(kEraseFeature, {0, 0}, 0.0), UsageError);
  CHECK_THROWS_AS(w.annotate("f", {5, 2}, 0.0), UsageError);
  CHECK_THROWS_AS(w.erase({0, 10}), UsageError);  // nothing committed yet
  CHECK_THROWS_AS(w.end(), UsageError);           // transaction still open
  w.append("hello world");
  REQUIRE(w.ready());
  CHECK_THROWS_AS(w.append("more"), UsageError);  // already ready
  CHECK_THROWS_AS(w.ready(), UsageError);
  w.abort();
  w.end();
  CHECK_THROWS_AS(Warren::create(dir.path), UsageError);  // already exists
  CHECK_THROWS_AS(Warren::open(dir.path / "missing"), UsageError);
}

TEST_CASE("append, commit, and translate round-trip") {
  TempDir dir("basic");
  Warren w = Warren::create(dir.path);
  w.start();
  SnapshotPtr before = w.snapshot();
  Interval doc = commit_doc(w, "hello brave world", 1);
  CHECK(doc == Interval{0, 2});

  // the pre-commit snapshot is immutable
  CHECK_FALSE(before->covered(0, 2));
  w.end();
  w.start();
  SnapshotPtr after = w.snapshot();
  CHECK(after->translate(0, 2) == "hello brave world");
  CHECK(after->translate(1, 1) == "brave");
  CHECK(after->translatable(0, 2));
  CHECK_FALSE(after->translatable(0, 3));
  CHECK_THROWS_AS(after->translate(0, 5), StorageError);

  // appended words are automatically indexed as single-token annotations
  auto hits = solutions(*after, "brave");
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].first == Interval{1, 1});
  w.end();
}

TEST_CASE("addresses are private inside an appending transaction") {
  TempDir dir("priv");
  Warren w = Warren::create(dir.path);
  w.start();
  commit_doc(w, "one two three", 1);  // occupies (0,2)
  w.transaction();
  Interval priv = w.append("four five");
  CHECK(priv == Interval{0, 1});  // private space starts at zero
  w.annotate("mark", priv, 2.0);
  REQUIRE(w.ready());
  Interval global = w.commit();
  CHECK(global == Interval{3, 4});
  w.end();
  w.start();
  auto hits = solutions(*w.snapshot(), "mark");
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].first == Interval{3, 4});  // rebased on commit
  CHECK(hits[0].second == 2.0);

  // without an append, intervals address committed content directly
  w.transaction();
  w.annotate("label", {0, 2}, 7.0);
  REQUIRE(w.ready());
  CHECK(w.commit() == Interval{0, -1});  // nothing appended
  w.end();
  w.start();
  auto labels = solutions(*w.snapshot(), "label");
  REQUIRE(labels.size() == 1);
  CHECK(labels[0].first == Interval{0, 2});
  w.end();
}

TEST_CASE("aborting after ready leaves a permanent gap") {
  TempDir dir("gap");
  Warren w = Warren::create(dir.path);
  w.start();
  commit_doc(w, "alpha beta", 1);  // (0,1)
  w.transaction();
  w.append("gone forever now");
  REQUIRE(w.ready());
  w.abort();  // addresses (2,4) are burned
  Interval next = commit_doc(w, "gamma delta", 2);
  CHECK(next == Interval{5, 6});
  w.end();
  w.start();
  SnapshotPtr snap = w.snapshot();
  CHECK(snap->translate(5, 6) == "gamma delta");
  CHECK_FALSE(snap->covered(2, 4));
  CHECK_THROWS_AS(snap->translate(0, 6), StorageError);
  w.end();
}

TEST_CASE("conflict rules: innermost wins, later value on equal intervals") {
  TempDir dir("conflict");
  Warren w = Warren::create(dir.path);
  w.start();
  commit_doc(w, "a b c d e f g h", 1);

  w.transaction();
  w.annotate("outer", {0, 6}, 1.0);
  REQUIRE(w.ready());
  w.commit();
  w.transaction();
  w.annotate("outer", {2, 4}, 2.0);  // nests inside: innermost retained
  REQUIRE(w.ready());
  w.commit();
  w.transaction();
  w.annotate("eq", {1, 3}, 10.0);
  REQUIRE(w.ready());
  w.commit();
  w.transaction();
  w.annotate("eq", {1, 3}, 20.0);  // same interval: higher sequence wins
  REQUIRE(w.ready());
  w.commit();
  w.end();

  w.start();
  SnapshotPtr snap = w.snapshot();
  auto outer = solutions(*snap, "outer");
  REQUIRE(outer.size() == 1);
  CHECK(outer[0].first == Interval{2, 4});
  CHECK(outer[0].second == 2.0);
  auto eq = solutions(*snap, "eq");
  REQUIRE(eq.size() == 1);
  CHECK(eq[0].second == 20.0);
  w.end();
}

TEST_CASE("erase hides content and contained annotations") {
  TempDir dir("erase");
  Warren w = Warren::create(dir.path);
  w.start();
  Interval doc1 = commit_doc(w, "secret launch codes", 1);
  Interval doc2 = commit_doc(w, "public knowledge base", 2);
  w.end();
  w.start();
  w.transaction();
  w.erase(doc1);
  REQUIRE(w.ready());
  w.commit();
  w.end();

  w.start();
  SnapshotPtr snap = w.snapshot();
  CHECK_FALSE(snap->translatable(doc1.p, doc1.q));
  CHECK_THROWS_AS(snap->translate(doc1.p, doc1.q), StorageError);
  CHECK(snap->covered(doc1.p, doc1.q));  // addresses remain occupied
  CHECK(snap->translate(doc2.p, doc2.q) == "public knowledge base");

  // annotations inside the erased span disappear from query results
  CHECK(solutions(*snap, "secret").empty());
  CHECK(solutions(*snap, "canary:1").empty());
  CHECK(solutions(*snap, "canary:2").size() == 1);
  auto roots = solutions(*snap, ":");
  REQUIRE(roots.size() == 1);
  CHECK(roots[0].first == doc2);

  // the erasure span itself is visible on the reserved feature
  auto markers = snap->list(kEraseFeature);
  REQUIRE(markers->size() == 1);
  CHECK(markers->at(0).interval == doc1);
  w.end();
}

TEST_CASE("overlapping erasures keep the outermost coverage") {
  TempDir dir("erase2");
  Warren w = Warren::create(dir.path);
  w.start();
  commit_doc(w, "t0 t1 t2 t3 t4 t5 t6 t7", 1);
  w.end();
  w.start();
  w.transaction();
  w.erase({2, 3});
  REQUIRE(w.ready());
  w.commit();
  w.transaction();
  w.erase({1, 5});  // wider erase must not lose to the nested earlier one
  REQUIRE(w.ready());
  w.commit();
  w.end();
  w.start();
  auto markers = w.snapshot()->list(kEraseFeature);
  REQUIRE(markers->size() == 1);
  CHECK(markers->at(0).interval == Interval{1, 5});
  CHECK_FALSE(w.snapshot()->translatable(4, 4));
  CHECK(w.snapshot()->translatable(6, 7));
  w.end();
}

TEST_CASE("merging preserves queries, translation, and erasures") {
  TempDir dir("merge");
  std::vector<Interval> docs;
  {
    Warren w = Warren::create(dir.path);
    w.start();
    for (int i = 0; i < 30; ++i)
      docs.push_back(commit_doc(
          w, "common token" + std::to_string(i) + " text", i));
    w.end();
    w.start();
    w.transaction();
    w.erase(docs[7]);
    REQUIRE(w.ready());
    w.commit();
    w.end();

    w.start();
    SnapshotPtr before = w.snapshot();
    auto expect_common = solutions(*before, "common");
    auto expect_roots = solutions(*before, ":");
    std::string expect_text = before->translate(docs[3].p, docs[3].q);

    size_t merges = 0;
    while (w.merge_step()) ++merges;
    CHECK(merges > 0);
    w.end();
    w.gc_step();

    w.start();
    SnapshotPtr after = w.snapshot();
    CHECK(solutions(*after, "common") == expect_common);
    CHECK(solutions(*after, ":") == expect_roots);
    CHECK(after->translate(docs[3].p, docs[3].q) == expect_text);
    CHECK_FALSE(after->translatable(docs[7].p, docs[7].q));
    CHECK(solutions(*after, "token7").empty());  // physically dropped or hidden
    w.end();
  }
  // the merged state survives reopening from disk
  Warren r = Warren::open(dir.path);
  r.start();
  SnapshotPtr snap = r.snapshot();
  CHECK(solutions(*snap, "common").size() == 29);
  CHECK(snap->translate(docs[3].p, docs[3].q).find("token3") !=
        std::string::npos);
  CHECK_FALSE(snap->translatable(docs[7].p, docs[7].q));
  r.end();
}

TEST_CASE("a pinned snapshot is immune to later commits, merges, and GC") {
  TempDir dir("pin");
  Warren w = Warren::create(dir.path);
  w.start();
  for (int i = 0; i < 10; ++i) commit_doc(w, "stable doc" + std::to_string(i), i);
  w.end();

  Warren reader = w.clone();
  reader.start();
  SnapshotPtr pinned = reader.snapshot();
  auto expect = solutions(*pinned, "stable");
  std::string expect_text = pinned->translate(0, 2);
  uint64_t expect_high = pinned->high_water();

  w.start();
  for (int i = 0; i < 100; ++i) {
    commit_doc(w, "churn stable " + std::to_string(i), 1000 + i);
    w.merge_step();
    w.gc_step();
  }
  w.end();
  while (w.merge_step()) {
  }
  w.gc_step();

  CHECK(pinned->high_water() == expect_high);
  CHECK(solutions(*pinned, "stable") == expect);
  CHECK(pinned->translate(0, 2) == expect_text);
  reader.end();

  // fresh snapshots see everything
  w.start();
  CHECK(solutions(*w.snapshot(), "stable").size() == expect.size() + 100);
  w.end();
}

TEST_CASE("recovery after torn log writes keeps exactly the committed work") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    TempDir dir("crash" + std::to_string(trial));
    std::vector<int> committed;
    std::vector<Interval> extents;
    {
      Warren w = Warren::create(dir.path);
      w.start();
      int id = 0;
      for (; id < 3; ++id)
        extents.push_back(commit_doc(w, "seed doc " + std::to_string(id), id)),
            committed.push_back(id);
      // arm the injector: the log accepts only a random number of further
      // bytes, then silently drops everything — a kill mid-write
      w.fault_injector().budget = static_cast<int64_t>(rng() % 700);
      bool crashed = false;
      while (!crashed && id < 40) {
        w.transaction();
        Interval priv = w.append("crash doc " + std::to_string(id));
        w.annotate(":", priv, 0.0);
        w.annotate("canary:" + std::to_string(id), priv, 1.0);
        if (!w.ready()) {
          crashed = true;
          break;
        }
        try {
          extents.push_back(w.commit());
          committed.push_back(id);
        } catch (const StorageError&) {
          crashed = true;
        }
        ++id;
      }
      REQUIRE(crashed);
      REQUIRE(w.fault_injector().tripped.load());
      if (w.in_transaction()) w.abort();
      w.end();
    }

    Warren r = Warren::open(dir.path);
    r.start();
    SnapshotPtr snap = r.snapshot();
    // every acknowledged commit survived intact
    for (size_t i = 0; i < committed.size(); ++i) {
      CAPTURE(trial);
      CAPTURE(committed[i]);
      REQUIRE(snap->translatable(extents[i].p, extents[i].q));
      auto canary = snap->list(featurize("canary:" + std::to_string(committed[i])));
      REQUIRE(canary->size() == 1);
      CHECK(canary->at(0).interval == extents[i]);
    }
    // nothing partial: every root solution carries its canary and translates
    size_t roots = 0;
    solve(parse_query(":"), *snap, [&](Interval iv, Value) {
      ++roots;
      CHECK(snap->translatable(iv.p, iv.q));
    });
    CHECK(roots == committed.size());
    // and the recovered index accepts new work
    r.transaction();
    r.append("post recovery doc");
    REQUIRE(r.ready());
    r.commit();
    r.end();
  }
}

TEST_CASE("no reader ever observes a partial transaction") {
  TempDir dir("atomic");
  Warren root = Warren::create(dir.path);
  constexpr int kWriters = 8;
  constexpr int kReaders = 8;
  constexpr int kDocsPerWriter = 40;
  std::atomic<bool> done{false};
  std::atomic<int> violations{0};

  std::vector<std::thread> readers;
  for (int rdr = 0; rdr < kReaders; ++rdr)
    readers.emplace_back([&] {
      Warren w = root.clone();
      while (!done.load()) {
        w.start();
        SnapshotPtr snap = w.snapshot();
        solve(parse_query(":"), *snap, [&](Interval iv, Value) {
          // a visible document must be fully translatable and carry the
          // canary written in the same transaction
          std::string text;
          try {
            text = snap->translate(iv.p, iv.q);
          } catch (const Error&) {
            ++violations;
            return;
          }
          auto space = text.find(' ');
          std::string id = text.substr(0, space);
          auto canary = snap->list(featurize("canary:" + id));
          bool found = false;
          for (const Entry& e : *canary)
            if (e.interval == iv) found = true;
          if (!found) ++violations;
        });
        w.end();
        std::this_thread::yield();
      }
    });

  std::vector<std::thread> writers;
  for (int wr = 0; wr < kWriters; ++wr)
    writers.emplace_back([&, wr] {
      Warren w = root.clone();
      w.start();
      for (int i = 0; i < kDocsPerWriter; ++i) {
        int id = wr * kDocsPerWriter + i;
        w.transaction();
        Interval priv =
            w.append(std::to_string(id) + " payload words " +
                     std::to_string(id));
        w.annotate(":", priv, 0.0);
        w.annotate("canary:" + std::to_string(id), priv, 1.0);
        REQUIRE(w.ready());
        w.commit();
        if (i % 16 == 0) w.merge_step();
      }
      w.end();
    });

  for (auto& t : writers) t.join();
  done.store(true);
  for (auto& t : readers) t.join();
  CHECK(violations.load() == 0);

  Warren check = root.clone();
  check.start();
  CHECK(solutions(*check.snapshot(), ":").size() == kWriters * kDocsPerWriter);
  check.end();
}

TEST_CASE("static mode persists each commit as an index file") {
  TempDir dir("static");
  {
    Warren w = Warren::create(dir.path, Mode::kStatic);
    CHECK(w.mode() == Mode::kStatic);
    w.start();
    commit_doc(w, "static mode document", 1);
    commit_doc(w, "another static document", 2);
    w.end();
    w.start();
    CHECK(solutions(*w.snapshot(), "static").size() == 2);
    w.end();
  }
  Warren r = Warren::open(dir.path);
  CHECK(r.mode() == Mode::kStatic);
  r.start();
  SnapshotPtr snap = r.snapshot();
  CHECK(solutions(*snap, "static").size() == 2);
  CHECK(snap->translate(0, 2) == "static mode document");
  r.end();
  // no commit log in a static index
  CHECK_FALSE(std::filesystem::exists(dir.path / "log"));
}

TEST_CASE("static transactions serialize across clones") {
  TempDir dir("static-mutex");
  Warren a = Warren::create(dir.path, Mode::kStatic);
  Warren b = a.clone();
  a.start();
  b.start();
  a.transaction();
  std::atomic<bool> b_entered{false};
  std::thread t([&] {
    b.transaction();  // must wait for a's transaction to finish
    b_entered.store(true);
    b.append("second writer");
    REQUIRE(b.ready());
    b.commit();
    b.end();
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  CHECK_FALSE(b_entered.load());
  a.append("first writer");
  REQUIRE(a.ready());
  a.commit();
  a.end();
  t.join();
  CHECK(b_entered.load());
}
