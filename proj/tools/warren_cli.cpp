// Command-line surface over the library: index construction, structural
// queries with aggregation, ranked retrieval, date unification, and the
// concurrent read/write recapitulation harness.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "warren/featurizer.hpp"
#include "warren/json_store.hpp"
#include "warren/rank.hpp"
#include "warren/recap.hpp"
#include "warren/warren.hpp"

namespace {

using namespace warren;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string default_index() {
  const char* env = std::getenv("WARREN_INDEX");
  return env ? env : "";
}

bool is_json_path(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  return ext == ".json" || ext == ".jsonl";
}

int cmd_build(const std::string& index, const std::vector<std::string>& inputs,
              const std::string& mode, bool strict, bool force, bool stats) {
  if (force) std::filesystem::remove_all(index);
  Warren w = Warren::create(index, mode == "static" ? Mode::kStatic
                                                    : Mode::kDynamic);
  auto t0 = std::chrono::steady_clock::now();
  size_t docs = 0, errors = 0;
  w.start();
  for (const std::string& input : inputs) {
    std::filesystem::path path(input);
    if (is_json_path(path)) {
      IngestReport r = ingest_file(w, path, strict);
      docs += r.documents;
      errors += r.parse_errors;
    } else {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw UsageError("cannot read " + input);
      std::ostringstream buf;
      buf << in.rdbuf();
      w.transaction();
      Interval iv = w.append(buf.str());
      w.annotate(":", iv, 0.0);
      w.annotate(featurize(path.generic_string()), iv, 0.0);
      if (!w.ready()) throw StorageError("build: log write failed");
      w.commit();
      ++docs;
    }
  }
  if (stats) {
    // statistics pass: one transaction per document extent
    w.end();
    w.start();
    SnapshotPtr snap = w.snapshot();
    auto roots = snap->list(featurize(":"));
    for (const Entry& e : *roots) {
      std::string text = snap->translate(e.interval.p, e.interval.q);
      w.transaction();
      index_stats(text, e.interval,
                  [&](std::string_view f, Interval iv, Value v) {
                    w.annotate(f, iv, v);
                  });
      if (!w.ready()) throw StorageError("build: log write failed");
      w.commit();
    }
  }
  w.end();
  while (w.merge_step()) {
  }
  w.gc_step();
  std::cout << "documents\t" << docs << "\n";
  if (errors) std::cout << "parse_errors\t" << errors << "\n";
  std::cout << "seconds\t" << seconds_since(t0) << "\n";
  return 0;
}

void print_rows(const AggregationResult& result, bool as_json) {
  for (const auto& row : result.rows) {
    if (as_json) {
      nlohmann::json j = row;
      std::cout << j.dump() << "\n";
    } else {
      for (size_t i = 0; i < row.size(); ++i)
        std::cout << (i ? "\t" : "") << row[i];
      std::cout << "\n";
    }
  }
  if (result.warnings)
    std::cerr << "skipped " << result.warnings << " non-numeric values\n";
}

int cmd_query(const std::string& index, const std::string& query_text,
              const std::string& agg, const std::string& explode_path,
              bool from_text, bool timing, bool as_json) {
  Warren w = Warren::open(index);
  w.start();
  SnapshotPtr snap = w.snapshot();
  auto t0 = std::chrono::steady_clock::now();
  if (agg.empty() && explode_path.empty()) {
    GclExpr expr = parse_query(query_text);
    solve(expr, *snap, [&](Interval iv, Value v) {
      std::cout << iv.p << "\t" << iv.q << "\t" << v << "\n";
    });
  } else {
    AggregationSpec spec;
    spec.values_from_text = from_text;
    if (!explode_path.empty()) {
      spec.kind = AggKind::kExplode;
      spec.explode_path = explode_path;
      spec.target = GclExpr::atom(featurize(explode_path));
    } else {
      spec.target = parse_query(query_text);
      if (agg == "count") spec.kind = AggKind::kCount;
      else if (agg == "min") spec.kind = AggKind::kMin;
      else if (agg == "max") spec.kind = AggKind::kMax;
      else if (agg == "avg") spec.kind = AggKind::kAvg;
      else if (agg == "sum") spec.kind = AggKind::kSum;
      else if (agg == "group-by") spec.kind = AggKind::kGroupBy;
      else if (agg == "select") spec.kind = AggKind::kSelect;
      else throw UsageError("unknown aggregation: " + agg);
    }
    print_rows(aggregate(*snap, spec), as_json);
  }
  if (timing)
    std::cerr << "seconds\t" << seconds_since(t0) << "\n";
  w.end();
  return 0;
}

int cmd_rank(const std::string& index, const std::string& topics_file,
             size_t depth, int threads, double k1, double b, bool wand,
             size_t prf_terms, const std::string& tag) {
  std::ifstream in(topics_file);
  if (!in) throw UsageError("cannot read " + topics_file);
  std::vector<std::pair<std::string, std::string>> topics;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string id;
    if (!(ls >> id)) continue;
    std::string rest;
    std::getline(ls, rest);
    topics.emplace_back(id, rest);
  }

  Warren root = Warren::open(index);
  {
    Warren probe = root.clone();
    probe.start();
    if (probe.snapshot()->feature_stats(featurize("length:")).count == 0)
      throw UsageError(
          "no term statistics in this index; rebuild with --stats");
    probe.end();
  }

  BM25Params params{k1, b};
  std::vector<std::vector<std::string>> out(topics.size());
  std::atomic<size_t> cursor{0};
  auto t0 = std::chrono::steady_clock::now();
  auto worker = [&] {
    Warren w = root.clone();
    w.start();
    SnapshotPtr snap = w.snapshot();
    for (;;) {
      size_t i = cursor.fetch_add(1);
      if (i >= topics.size()) break;
      std::vector<WeightedTerm> terms;
      std::istringstream ts(topics[i].second);
      std::string term;
      while (ts >> term) terms.push_back({term, 1.0});
      auto ranked = bm25_rank(*snap, terms, params, depth, wand);
      if (prf_terms > 0) {
        auto doc_text = [&](Interval iv) {
          return snap->translate(iv.p, iv.q);
        };
        auto expanded =
            prf_expand(*snap, terms, ranked, 20, prf_terms, doc_text);
        ranked = bm25_rank(*snap, expanded, params, depth, wand);
      }
      for (size_t r = 0; r < ranked.size(); ++r) {
        std::ostringstream row;
        row << topics[i].first << " Q0 " << ranked[r].doc.p << " " << (r + 1)
            << " " << ranked[r].score << " " << tag;
        out[i].push_back(row.str());
      }
    }
    w.end();
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::max(1, threads); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  double secs = seconds_since(t0);
  for (const auto& rows : out)
    for (const std::string& r : rows) std::cout << r << "\n";
  std::cerr << "queries\t" << topics.size() << "\nqps\t"
            << (secs > 0 ? topics.size() / secs : 0.0) << "\nmean_latency_s\t"
            << (topics.empty() ? 0.0 : secs / topics.size()) << "\n";
  return 0;
}

int cmd_dates(const std::string& index, const std::string& selector,
              const std::vector<std::string>& format_names) {
  std::vector<DateFormat> formats;
  for (const std::string& f : format_names) {
    if (f == "mon") formats.push_back(DateFormat::kMonthNameDayYear);
    else if (f == "iso") formats.push_back(DateFormat::kIsoDate);
    else if (f == "epoch-ms") formats.push_back(DateFormat::kEpochMillis);
    else throw UsageError("unknown date format: " + f);
  }
  if (formats.empty())
    formats = {DateFormat::kMonthNameDayYear, DateFormat::kIsoDate,
               DateFormat::kEpochMillis};
  Warren w = Warren::open(index);
  w.start();
  w.transaction();
  DateReport report = annotate_dates(w, parse_query(selector), formats);
  if (!w.ready()) throw StorageError("dates: log write failed");
  w.commit();
  w.end();
  std::cout << "objects\t" << report.objects << "\n"
            << "skipped\t" << report.skipped << "\n";
  return 0;
}

int cmd_recap(const std::string& index, RecapConfig cfg, bool quiet) {
  cfg.dir = index;
  RecapReport report = run_recap(cfg, quiet ? nullptr : &std::cerr);
  std::cout << "epoch\tmap_add\toracle_add\tmap_del\toracle_del\n";
  for (size_t e = 0; e < report.epochs.size(); ++e) {
    const EpochStats& s = report.epochs[e];
    std::cout << e << "\t" << s.map_after_add << "\t" << s.oracle_after_add
              << "\t" << s.map_after_delete << "\t" << s.oracle_after_delete
              << "\n";
  }
  if (!report.consistent) {
    std::cerr << "consistency violation: " << report.diagnostics << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"annotative index engine"};
  app.require_subcommand(1);

  // --index falls back to $WARREN_INDEX; it is mandatory only without one.
  auto index_option = [](CLI::App* sub, std::string& var) {
    auto* opt = sub->add_option("--index,-i", var,
                                "index directory (default: $WARREN_INDEX)");
    if (var.empty()) opt->required();
  };

  // build
  auto* build = app.add_subcommand("build", "create an index from files");
  std::string b_index = default_index(), b_mode = "dynamic";
  std::vector<std::string> b_inputs;
  bool b_strict = false, b_force = false, b_stats = false;
  index_option(build, b_index);
  build->add_option("inputs", b_inputs, "input files")->required();
  build->add_option("--mode", b_mode, "static|dynamic")
      ->check(CLI::IsMember({"static", "dynamic"}));
  build->add_flag("--strict", b_strict, "abort on parse errors");
  build->add_flag("--force", b_force, "replace an existing index");
  build->add_flag("--stats", b_stats, "write ranking statistics");

  // query
  auto* query = app.add_subcommand("query", "structural query / aggregation");
  std::string q_index = default_index(), q_text, q_agg, q_explode;
  bool q_from_text = false, q_time = false, q_json = false;
  index_option(query, q_index);
  query->add_option("query", q_text, "query text");
  query->add_flag_callback("--count", [&] { q_agg = "count"; });
  query->add_flag_callback("--min", [&] { q_agg = "min"; });
  query->add_flag_callback("--max", [&] { q_agg = "max"; });
  query->add_flag_callback("--avg", [&] { q_agg = "avg"; });
  query->add_flag_callback("--sum", [&] { q_agg = "sum"; });
  query->add_flag_callback("--group-by", [&] { q_agg = "group-by"; });
  query->add_flag_callback("--select", [&] { q_agg = "select"; });
  query->add_option("--explode", q_explode, "array path to explode");
  query->add_flag("--from-text", q_from_text,
                  "numeric folds parse translated text");
  query->add_flag("--time", q_time, "print wall-clock seconds");
  query->add_flag("--json", q_json, "rows as JSON lines instead of TSV");

  // rank
  auto* rank = app.add_subcommand("rank", "ranked retrieval, TREC run output");
  std::string r_index = default_index(), r_topics, r_tag = "warren";
  size_t r_depth = 10, r_prf = 0;
  int r_threads = 1;
  double r_k1 = 0.82, r_b = 0.68;
  bool r_no_wand = false;
  index_option(rank, r_index);
  rank->add_option("topics", r_topics, "topics file: id then query per line")
      ->required();
  rank->add_option("-k,--depth", r_depth, "ranking depth");
  rank->add_option("--threads", r_threads, "concurrent query workers");
  rank->add_option("--k1", r_k1, "BM25 k1");
  rank->add_option("--b", r_b, "BM25 b");
  rank->add_flag("--no-wand", r_no_wand, "disable pruning");
  rank->add_option("--prf", r_prf, "feedback terms to add (0 = off)");
  rank->add_option("--tag", r_tag, "run tag");

  // dates
  auto* dates = app.add_subcommand("dates", "unify date fields");
  std::string d_index = default_index(), d_selector;
  std::vector<std::string> d_formats;
  index_option(dates, d_index);
  dates->add_option("selector", d_selector, "query selecting date fields")
      ->required();
  dates->add_option("--format", d_formats, "mon|iso|epoch-ms (repeatable)");

  // recap
  auto* recap = app.add_subcommand("recap", "concurrent workload harness");
  std::string c_index = default_index();
  RecapConfig cfg;
  bool c_quiet = false, c_no_maint = false;
  index_option(recap, c_index);
  recap->add_option("--seed", cfg.seed, "corpus seed");
  recap->add_option("--appenders", cfg.appenders, "writer threads");
  recap->add_option("--queriers", cfg.queriers, "query threads");
  recap->add_option("--epochs", cfg.epochs, "epochs");
  recap->add_option("--docs", cfg.docs_per_epoch, "documents per epoch");
  recap->add_option("--topics", cfg.topics, "topic count");
  recap->add_option("--depth", cfg.depth, "ranking depth");
  recap->add_flag("--quiet", c_quiet, "suppress per-query log lines");
  recap->add_flag("--no-maintenance", c_no_maint, "no merge/GC thread");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) return cmd_build(b_index, b_inputs, b_mode, b_strict, b_force,
                                 b_stats);
    if (*query) return cmd_query(q_index, q_text, q_agg, q_explode,
                                 q_from_text, q_time, q_json);
    if (*rank)
      return cmd_rank(r_index, r_topics, r_depth, r_threads, r_k1, r_b,
                      !r_no_wand, r_prf, r_tag);
    if (*dates) return cmd_dates(d_index, d_selector, d_formats);
    if (*recap) {
      cfg.maintenance = !c_no_maint;
      return cmd_recap(c_index, cfg, c_quiet);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
