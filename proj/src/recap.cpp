#include "warren/recap.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "warren/rank.hpp"
#include "warren/warren.hpp"

namespace warren {

namespace {

constexpr size_t kFeedbackDocs = 5;
constexpr size_t kFeedbackTerms = 2;

struct DocPlan {
  int id;
  int topic;
  bool relevant;
  std::string text;
};

// Deterministic synthetic document: a unique id token, topic signature
// terms with varying repetition for the relevant two-thirds, and filler
// giving every document a distinct length.
DocPlan make_doc(int g, const RecapConfig& cfg) {
  DocPlan d;
  d.id = g;
  d.topic = g % cfg.topics;
  d.relevant = (g % 3) != 0;
  std::string text = "doc" + std::to_string(g);
  size_t words = 1;
  if (d.relevant) {
    int reps = 1 + g % 3;
    for (int r = 0; r < reps; ++r) {
      text += " topic" + std::to_string(d.topic) + "xray";
      text += " topic" + std::to_string(d.topic) + "yankee";
      words += 2;
    }
  }
  size_t target = 12 + static_cast<size_t>(g);
  for (size_t j = 0; words < target; ++j, ++words)
    text += " filler" + std::to_string((static_cast<size_t>(g) * 31 + j) % 29);
  d.text = text;
  return d;
}

std::vector<WeightedTerm> topic_terms(int t) {
  return {{"topic" + std::to_string(t) + "xray", 1.0},
          {"topic" + std::to_string(t) + "yankee", 1.0}};
}

struct Registry {
  std::mutex mu;
  std::unordered_map<int, Interval> extents;           // doc id -> extent
  std::map<int, std::unordered_set<Addr>> relevant;    // topic -> doc ids
  std::vector<int> by_epoch_order;                     // commit order

  void add(const DocPlan& d, Interval extent) {
    std::lock_guard lock(mu);
    extents[d.id] = extent;
    if (d.relevant) relevant[d.topic].insert(d.id);
    by_epoch_order.push_back(d.id);
  }
  std::map<int, std::unordered_set<Addr>> relevant_copy() {
    std::lock_guard lock(mu);
    return relevant;
  }
};

int doc_id_of(const Snapshot& snap, Interval doc) {
  std::string token = snap.translate(doc.p, doc.p);
  if (token.rfind("doc", 0) != 0) return -1;
  return std::atoi(token.c_str() + 3);
}

// One ranked evaluation of a topic: BM25, feedback expansion, re-rank, AP
// against the given judgment set. Also verifies every retrieved document
// translates cleanly (atomicity canary).
double evaluate_topic(const Snapshot& snap, int topic, size_t depth,
                      const std::unordered_set<Addr>& relevant,
                      std::string* violation) {
  BM25Params params;
  auto first = bm25_rank(snap, topic_terms(topic), params, depth, true);
  auto doc_text = [&](Interval iv) { return snap.translate(iv.p, iv.q); };
  auto expanded = prf_expand(snap, topic_terms(topic), first, kFeedbackDocs,
                             kFeedbackTerms, doc_text);
  auto ranked = bm25_rank(snap, expanded, params, depth, true);
  std::vector<Addr> ids;
  for (const ScoredDoc& sd : ranked) {
    int id = -1;
    try {
      id = doc_id_of(snap, sd.doc);
    } catch (const Error& e) {
      if (violation && violation->empty())
        *violation = std::string("retrieved document not translatable: ") +
                     e.what();
      continue;
    }
    if (id < 0) {
      if (violation && violation->empty())
        *violation = "retrieved document with foreign content";
      continue;
    }
    ids.push_back(id);
  }
  return average_precision(ids, relevant);
}

double measure_map(Warren& w, const RecapConfig& cfg,
                   const std::map<int, std::unordered_set<Addr>>& relevant,
                   std::string* violation) {
  w.start();
  SnapshotPtr snap = w.snapshot();
  double sum = 0.0;
  for (int t = 0; t < cfg.topics; ++t) {
    auto it = relevant.find(t);
    static const std::unordered_set<Addr> kNone;
    sum += evaluate_topic(*snap, t, cfg.depth,
                          it == relevant.end() ? kNone : it->second,
                          violation);
  }
  w.end();
  return sum / cfg.topics;
}

// The three-transaction ingestion pattern: content, then statistics, then
// relevance judgments.
Interval add_document(Warren& w, const DocPlan& d) {
  w.transaction();
  Interval priv = w.append(d.text);
  w.annotate(":", priv, 0.0);
  if (!w.ready()) throw StorageError("recap: content txn not durable");
  Interval extent = w.commit();
  (void)priv;

  w.transaction();
  index_stats(d.text, extent, [&](std::string_view f, Interval iv, Value v) {
    w.annotate(f, iv, v);
  });
  if (!w.ready()) throw StorageError("recap: stats txn not durable");
  w.commit();

  if (d.relevant) {
    w.transaction();
    w.annotate("qrel:" + std::to_string(d.topic), extent, 1.0);
    if (!w.ready()) throw StorageError("recap: qrel txn not durable");
    w.commit();
  }
  return extent;
}

double oracle_map(const RecapConfig& cfg, Registry& reg,
                  const std::map<int, std::unordered_set<Addr>>& relevant,
                  const std::unordered_set<int>& deleted,
                  std::string* violation) {
  std::filesystem::path dir = cfg.dir;
  dir += ".oracle";
  std::filesystem::remove_all(dir);
  Warren w = Warren::create(dir, Mode::kDynamic);
  std::vector<int> survivors;
  {
    std::lock_guard lock(reg.mu);
    for (int id : reg.by_epoch_order)
      if (!deleted.count(id)) survivors.push_back(id);
  }
  w.start();
  for (int id : survivors) add_document(w, make_doc(id, cfg));
  w.end();
  double m = measure_map(w, cfg, relevant, violation);
  std::filesystem::remove_all(dir);
  return m;
}

}  // namespace

RecapReport run_recap(const RecapConfig& cfg, std::ostream* log) {
  RecapReport report;
  std::string violation;
  std::mutex log_mu;
  auto emit = [&](const std::string& line) {
    if (!log) return;
    std::lock_guard lock(log_mu);
    *log << line << '\n';
  };

  Warren root = Warren::create(cfg.dir, Mode::kDynamic);
  Registry reg;
  std::unordered_set<int> deleted;

  std::atomic<bool> all_done{false};
  std::thread maintenance;
  if (cfg.maintenance)
    maintenance = std::thread([&] {
      Warren m = root.clone();
      while (!all_done.load()) {
        m.merge_step();
        m.gc_step();
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
      }
    });

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochStats stats;
    int lo = epoch * cfg.docs_per_epoch;
    int hi = lo + cfg.docs_per_epoch;

    std::atomic<bool> phase_done{false};
    std::vector<std::thread> queriers;
    for (int q = 0; q < cfg.queriers; ++q)
      queriers.emplace_back([&, q] {
        Warren w = root.clone();
        std::mt19937_64 rng(cfg.seed * 7919 + q);
        while (!phase_done.load()) {
          int topic = static_cast<int>(rng() % cfg.topics);
          auto relevant = reg.relevant_copy();
          std::string local;
          w.start();
          double ap =
              evaluate_topic(*w.snapshot(), topic, cfg.depth,
                             relevant[topic], &local);
          w.end();
          if (!local.empty()) {
            std::lock_guard lock(reg.mu);
            if (violation.empty()) violation = local;
          }
          emit("query epoch=" + std::to_string(epoch) +
               " thread=" + std::to_string(q) +
               " topic=" + std::to_string(topic) +
               " ap=" + std::to_string(ap));
          std::this_thread::yield();
        }
      });

    std::vector<std::thread> appenders;
    int per = std::max(1, cfg.docs_per_epoch / std::max(1, cfg.appenders));
    for (int a = 0; a < cfg.appenders; ++a)
      appenders.emplace_back([&, a] {
        Warren w = root.clone();
        w.start();
        for (int g = lo + a * per; g < std::min(hi, lo + (a + 1) * per); ++g) {
          DocPlan d = make_doc(g, cfg);
          Interval extent = add_document(w, d);
          reg.add(d, extent);
        }
        w.end();
      });
    // remainder not covered by the even split
    {
      Warren w = root.clone();
      w.start();
      for (int g = lo + cfg.appenders * per; g < hi; ++g) {
        DocPlan d = make_doc(g, cfg);
        reg.add(d, add_document(w, d));
      }
      w.end();
    }
    for (auto& t : appenders) t.join();
    phase_done.store(true);
    for (auto& t : queriers) t.join();
    stats.docs_added = static_cast<uint64_t>(hi - lo);

    {
      auto relevant = reg.relevant_copy();
      Warren w = root.clone();
      stats.map_after_add = measure_map(w, cfg, relevant, &violation);
      stats.oracle_after_add =
          oracle_map(cfg, reg, relevant, deleted, &violation);
      emit("barrier epoch=" + std::to_string(epoch) +
           " phase=add map=" + std::to_string(stats.map_after_add) +
           " oracle=" + std::to_string(stats.oracle_after_add));
    }

    // Deletion pass: one transaction erasing a third of the epoch (all of
    // them relevant documents), judgments kept in the harness ledger so
    // effectiveness drops.
    {
      Warren w = root.clone();
      w.start();
      w.transaction();
      for (int g = lo; g < hi; ++g) {
        if (g % 3 != 1) continue;
        Interval extent;
        {
          std::lock_guard lock(reg.mu);
          extent = reg.extents.at(g);
        }
        w.erase(extent);
        deleted.insert(g);
        ++stats.docs_deleted;
      }
      if (!w.ready()) throw StorageError("recap: delete txn not durable");
      w.commit();
      w.end();
    }

    {
      auto relevant = reg.relevant_copy();
      Warren w = root.clone();
      stats.map_after_delete = measure_map(w, cfg, relevant, &violation);
      stats.oracle_after_delete =
          oracle_map(cfg, reg, relevant, deleted, &violation);
      emit("barrier epoch=" + std::to_string(epoch) +
           " phase=delete map=" + std::to_string(stats.map_after_delete) +
           " oracle=" + std::to_string(stats.oracle_after_delete));
    }

    report.epochs.push_back(stats);
  }

  all_done.store(true);
  if (maintenance.joinable()) maintenance.join();
  report.consistent = violation.empty();
  report.diagnostics = violation;
  return report;
}

}  // namespace warren
