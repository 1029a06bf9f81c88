#include "warren/json_store.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "warren/featurizer.hpp"
#include "warren/tokenizer.hpp"

namespace warren {

using nlohmann::json;

namespace {

// Serializes a JSON value into marker-delimited text while tracking token
// positions, so every value's path annotation can be attached to its exact
// address interval. nlohmann's default object is a sorted map, giving the
// lexicographic member order the path convention relies on.
struct Emitter {
  std::string text;
  size_t tokens = 0;
  std::vector<TraceEntry> anns;

  void mark(StructuralKind k) {
    text += structural_text(k);
    ++tokens;
  }
  void raw(std::string_view s) {
    text += s;
    tokens += count_tokens(s);
  }
  void key(const std::string& k) {
    mark(StructuralKind::kQuote);
    raw(k);
    mark(StructuralKind::kQuote);
    mark(StructuralKind::kColon);
  }

  void value(const json& v, const std::string& path) {
    size_t start = tokens;
    Value payload = 0.0;
    switch (v.type()) {
      case json::value_t::object: {
        mark(StructuralKind::kObjectOpen);
        bool first = true;
        for (const auto& [k, child] : v.items()) {
          if (!first) mark(StructuralKind::kComma);
          first = false;
          key(k);
          value(child, path + k + ":");
        }
        mark(StructuralKind::kObjectClose);
        break;
      }
      case json::value_t::array: {
        mark(StructuralKind::kArrayOpen);
        for (size_t i = 0; i < v.size(); ++i) {
          if (i) mark(StructuralKind::kComma);
          value(v[i], path + "[" + std::to_string(i) + "]:");
        }
        mark(StructuralKind::kArrayClose);
        payload = static_cast<Value>(v.size());
        break;
      }
      case json::value_t::string:
        mark(StructuralKind::kQuote);
        raw(v.get_ref<const std::string&>());
        mark(StructuralKind::kQuote);
        break;
      case json::value_t::boolean:
        raw(v.get<bool>() ? "true" : "false");
        payload = v.get<bool>() ? 1.0 : 0.0;
        break;
      case json::value_t::null:
        raw("null");
        break;
      default:  // every numeric type
        mark(StructuralKind::kNumberMark);
        raw(v.dump());
        mark(StructuralKind::kNumberMark);
        payload = v.get<double>();
        break;
    }
    anns.push_back({path, {static_cast<Addr>(start),
                           static_cast<Addr>(tokens) - 1}, payload});
  }
};

std::string trimmed(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

Interval ingest_json(Warren& w, const json& doc,
                     std::vector<TraceEntry>* trace) {
  Emitter em;
  em.value(doc, ":");
  Interval iv = w.append(em.text);
  for (TraceEntry& t : em.anns) {
    t.interval.p += iv.p;
    t.interval.q += iv.p;
    w.annotate(featurize(t.path), t.interval, t.value);
  }
  if (trace)
    trace->insert(trace->end(), em.anns.begin(), em.anns.end());
  return iv;
}

Interval ingest_json_text(Warren& w, std::string_view text,
                          std::vector<TraceEntry>* trace) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ParseError("malformed JSON document");
  return ingest_json(w, doc, trace);
}

IngestReport ingest_file(Warren& w, const std::filesystem::path& file,
                         bool strict) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw UsageError("cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string whole = buf.str();

  std::vector<json> docs;
  IngestReport report;
  json one = json::parse(whole, nullptr, false);
  if (!one.is_discarded()) {
    docs.push_back(std::move(one));
  } else {
    std::istringstream lines(whole);
    std::string line;
    size_t lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (trimmed(line).empty()) continue;
      json doc = json::parse(line, nullptr, false);
      if (doc.is_discarded()) {
        if (strict)
          throw ParseError(file.string() + ":" + std::to_string(lineno) +
                           ": malformed JSON record");
        ++report.parse_errors;
        continue;
      }
      docs.push_back(std::move(doc));
    }
  }

  w.transaction();
  try {
    for (const json& doc : docs) {
      Interval iv = ingest_json(w, doc);
      if (report.documents == 0) report.extent.p = iv.p;
      report.extent.q = iv.q;
      ++report.documents;
    }
    if (report.documents > 0)
      w.annotate(featurize(file.generic_string()), report.extent, 0.0);
    if (!w.ready()) throw StorageError("ingest: durable log write failed");
    w.commit();
  } catch (...) {
    if (w.in_transaction()) w.abort();
    throw;
  }
  return report;
}

GclExpr file_extent(std::string_view name) {
  return GclExpr::atom(featurize(name));
}

// ---- dates --------------------------------------------------------------

namespace {

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

bool month_by_name(std::string_view name, int* month) {
  static constexpr std::string_view kNames[] = {
      "jan", "feb", "mar", "apr", "may", "jun",
      "jul", "aug", "sep", "oct", "nov", "dec"};
  if (name.size() != 3) return false;
  std::string low;
  for (char c : name)
    low += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (int i = 0; i < 12; ++i)
    if (low == kNames[i]) {
      *month = i + 1;
      return true;
    }
  return false;
}

bool valid_ymd(int y, int m, int d) {
  using namespace std::chrono;
  return year_month_day{year{y}, month{static_cast<unsigned>(m)},
                        day{static_cast<unsigned>(d)}}
      .ok();
}

bool parse_date(std::string_view raw, const std::vector<DateFormat>& formats,
                int* y, int* m, int* d) {
  std::string s = trimmed(raw);
  while (s.size() >= 2 && s.front() == '"' && s.back() == '"')
    s = trimmed(std::string_view(s).substr(1, s.size() - 2));
  for (DateFormat f : formats) {
    switch (f) {
      case DateFormat::kMonthNameDayYear: {
        std::istringstream in(s);
        std::string mon, day, year;
        if (!(in >> mon >> day >> year) || !(in >> std::ws).eof()) break;
        int mm;
        if (!month_by_name(mon, &mm)) break;
        if (!all_digits(day) || day.size() > 2) break;
        if (!all_digits(year) || year.size() != 4) break;
        int dd = std::stoi(day), yy = std::stoi(year);
        if (!valid_ymd(yy, mm, dd)) break;
        *y = yy;
        *m = mm;
        *d = dd;
        return true;
      }
      case DateFormat::kIsoDate: {
        if (s.size() != 10 || s[4] != '-' || s[7] != '-') break;
        std::string year = s.substr(0, 4), mon = s.substr(5, 2),
                    day = s.substr(8, 2);
        if (!all_digits(year) || !all_digits(mon) || !all_digits(day)) break;
        int yy = std::stoi(year), mm = std::stoi(mon), dd = std::stoi(day);
        if (!valid_ymd(yy, mm, dd)) break;
        *y = yy;
        *m = mm;
        *d = dd;
        return true;
      }
      case DateFormat::kEpochMillis: {
        if (!all_digits(s) || s.size() < 6 || s.size() > 18) break;
        using namespace std::chrono;
        sys_time<milliseconds> tp{milliseconds{std::stoll(s)}};
        year_month_day ymd{floor<days>(tp)};
        *y = static_cast<int>(ymd.year());
        *m = static_cast<int>(static_cast<unsigned>(ymd.month()));
        *d = static_cast<int>(static_cast<unsigned>(ymd.day()));
        return true;
      }
    }
  }
  return false;
}

std::string pad2(int v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

}  // namespace

DateReport annotate_dates(Warren& w, const GclExpr& scan,
                          const std::vector<DateFormat>& formats) {
  if (!w.in_transaction())
    throw UsageError("annotate_dates: no open transaction");
  SnapshotPtr snap = w.snapshot();
  auto roots = snap->list(featurize(":"));
  DateReport report;
  std::set<Addr> annotated;
  solve(scan, *snap, [&](Interval iv, Value) {
    int y, m, d;
    if (!parse_date(snap->translate(iv.p, iv.q), formats, &y, &m, &d)) {
      ++report.skipped;
      return;
    }
    // enclosing root object
    auto it = std::lower_bound(
        roots->begin(), roots->end(), iv.q,
        [](const Entry& e, Addr q) { return e.interval.q < q; });
    if (it == roots->end() || it->interval.p > iv.p) {
      ++report.skipped;
      return;
    }
    w.annotate("year=" + std::to_string(y), it->interval, 0.0);
    w.annotate("month=" + pad2(m), it->interval, 0.0);
    w.annotate("day=" + pad2(d), it->interval, 0.0);
    annotated.insert(it->interval.p);
  });
  report.objects = annotated.size();
  return report;
}

// ---- aggregation --------------------------------------------------------

namespace {

std::string format_number(double v) { return json(v).dump(); }

std::string group_key(const std::string& rendered) {
  std::string t = trimmed(rendered);
  json v = json::parse(t, nullptr, false);
  if (!v.is_discarded() && v.is_string()) return v.get<std::string>();
  return t;
}

}  // namespace

AggregationResult aggregate(const Snapshot& snap, const AggregationSpec& spec) {
  AggregationResult result;
  switch (spec.kind) {
    case AggKind::kCount: {
      size_t n = 0;
      solve(spec.target, snap, [&](Interval, Value) { ++n; });
      result.rows.push_back({std::to_string(n)});
      break;
    }
    case AggKind::kMin:
    case AggKind::kMax:
    case AggKind::kAvg:
    case AggKind::kSum: {
      double acc = 0.0;
      size_t n = 0;
      solve(spec.target, snap, [&](Interval iv, Value v) {
        double x = v;
        if (spec.values_from_text) {
          std::string t = trimmed(snap.translate(iv.p, iv.q));
          json parsed = json::parse(t, nullptr, false);
          if (parsed.is_discarded() || !parsed.is_number()) {
            ++result.warnings;
            return;
          }
          x = parsed.get<double>();
        }
        ++n;
        switch (spec.kind) {
          case AggKind::kMin: acc = n == 1 ? x : std::min(acc, x); break;
          case AggKind::kMax: acc = n == 1 ? x : std::max(acc, x); break;
          default: acc += x; break;
        }
      });
      if (n == 0 && spec.kind == AggKind::kAvg) break;  // empty result
      if (spec.kind == AggKind::kAvg) acc /= static_cast<double>(n);
      if (n == 0 && (spec.kind == AggKind::kMin || spec.kind == AggKind::kMax))
        break;
      result.rows.push_back({format_number(acc)});
      break;
    }
    case AggKind::kGroupBy: {
      std::map<std::string, size_t> groups;
      solve(spec.target, snap, [&](Interval iv, Value) {
        ++groups[group_key(snap.translate(iv.p, iv.q))];
      });
      for (const auto& [key, n] : groups)
        result.rows.push_back({key, std::to_string(n)});
      break;
    }
    case AggKind::kSelect: {
      solve(spec.target, snap, [&](Interval iv, Value) {
        result.rows.push_back({trimmed(snap.translate(iv.p, iv.q))});
      });
      break;
    }
    case AggKind::kExplode: {
      GclExpr arrays = GclExpr::atom(featurize(spec.explode_path));
      solve(arrays, snap, [&](Interval arr, Value len) {
        auto count = static_cast<size_t>(len);
        for (size_t i = 0; i < count; ++i) {
          Feature f = featurize(spec.explode_path + "[" + std::to_string(i) +
                                "]:");
          auto hop = snap.hopper(f, nullptr);
          Posting p = hop->tau(arr.p);
          if (p.is_infinite() || p.interval.q > arr.q) continue;
          result.rows.push_back(
              {std::to_string(i),
               trimmed(snap.translate(p.interval.p, p.interval.q))});
        }
      });
      break;
    }
  }
  return result;
}

}  // namespace warren
