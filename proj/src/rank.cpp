#include "warren/rank.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <unordered_map>

#include "warren/featurizer.hpp"
#include "warren/stemmer.hpp"
#include "warren/tokenizer.hpp"

namespace warren {

namespace {

constexpr std::string_view kLengthFeatureText = "length:";
constexpr std::string_view kTermPrefix = "tf:porter:";

std::string fold_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Feature stem_feature(std::string_view stem) {
  std::string text(kTermPrefix);
  text += stem;
  return featurize(text);
}

}  // namespace

Feature term_feature(std::string_view term) {
  return stem_feature(porter_stem(fold_lower(term)));
}

void index_stats(
    std::string_view doc_text, Interval doc,
    const std::function<void(std::string_view, Interval, Value)>& write) {
  std::map<std::string, uint64_t> counts;
  for (const Token& t : tokenize(doc_text))
    if (!t.structural) ++counts[porter_stem(t.text)];
  for (const auto& [stem, n] : counts) {
    std::string text(kTermPrefix);
    text += stem;
    write(text, doc, static_cast<Value>(n));
  }
  write(kLengthFeatureText, doc, static_cast<Value>(doc.length()));
}

namespace {

struct TermCursor {
  Feature feature = 0;
  double weight = 0.0;
  double idf = 0.0;
  double upper_bound = 0.0;
  std::unique_ptr<Hopper> hopper;
  Addr at = kPosInf;  // start of the current posting
};

struct Scorer {
  std::vector<TermCursor> terms;  // fixed order: first appearance in query
  std::unique_ptr<Hopper> lengths;
  BM25Params params;
  double avgdl = 1.0;

  // Full evaluation at a document start; all term cursors end up past or at
  // `start`. Summation order is the fixed term order regardless of which
  // path asked.
  ScoredDoc score_doc(Addr start) {
    double dl = avgdl;
    Posting len = lengths->tau(start);
    if (len.interval.p == start) dl = len.value;
    ScoredDoc out{{start, start}, 0.0};
    for (TermCursor& t : terms) {
      Posting p = t.hopper->tau(start);
      t.at = p.interval.p;
      if (p.interval.p != start) continue;
      out.doc = p.interval;
      double tf = p.value;
      double denom =
          tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl);
      out.score += t.weight * t.idf * tf * (params.k1 + 1.0) / denom;
    }
    return out;
  }
};

// Bounded best-list: worst element at the heap front. A candidate must
// strictly beat the worst score to displace it; on equal scores the
// earlier-starting incumbent stays.
struct TopK {
  size_t k;
  std::vector<ScoredDoc> heap;

  static bool better(const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc.p < b.doc.p;
  }

  double threshold() const {
    return heap.size() < k ? -std::numeric_limits<double>::infinity()
                           : heap.front().score;
  }

  void offer(const ScoredDoc& d) {
    if (heap.size() < k) {
      heap.push_back(d);
      std::push_heap(heap.begin(), heap.end(), better);
      return;
    }
    if (d.score > heap.front().score) {
      std::pop_heap(heap.begin(), heap.end(), better);
      heap.back() = d;
      std::push_heap(heap.begin(), heap.end(), better);
    }
  }

  std::vector<ScoredDoc> finish() && {
    std::sort(heap.begin(), heap.end(), better);
    return std::move(heap);
  }
};

}  // namespace

std::vector<ScoredDoc> bm25_rank(const RankSource& source,
                                 const std::vector<WeightedTerm>& terms,
                                 const BM25Params& params, size_t k,
                                 bool use_wand) {
  if (k == 0) return {};
  FeatureStats lengths = source.feature_stats(featurize(kLengthFeatureText));
  if (lengths.count == 0) return {};
  double n_docs = static_cast<double>(lengths.count);

  Scorer scorer;
  scorer.params = params;
  scorer.avgdl = lengths.sum_value / n_docs;
  scorer.lengths = source.hopper(featurize(kLengthFeatureText), nullptr);

  // Duplicate terms merge by summing weights, keeping first position.
  std::unordered_map<Feature, size_t> seen;
  for (const WeightedTerm& wt : terms) {
    Feature f = term_feature(wt.term);
    auto it = seen.find(f);
    if (it != seen.end()) {
      scorer.terms[it->second].weight += wt.weight;
      continue;
    }
    FeatureStats st = source.feature_stats(f);
    if (st.count == 0) continue;
    double df = static_cast<double>(st.count);
    double idf = std::log((n_docs - df + 0.5) / (df + 0.5));
    if (idf <= 0.0) continue;  // floor at zero: term contributes nothing
    TermCursor tc;
    tc.feature = f;
    tc.weight = wt.weight;
    tc.idf = idf;
    tc.hopper = source.hopper(f, nullptr);
    tc.at = tc.hopper->tau(kNegInf).interval.p;
    seen.emplace(f, scorer.terms.size());
    scorer.terms.push_back(std::move(tc));
  }
  if (scorer.terms.empty()) return {};
  // Per-term ceilings, computed once weights are fully merged: the shortest
  // possible document and the largest observed tf maximize a contribution.
  for (TermCursor& t : scorer.terms) {
    double tf_max = std::max(1.0, source.feature_stats(t.feature).max_value);
    t.upper_bound = t.weight * t.idf * tf_max * (params.k1 + 1.0) /
                    (tf_max + params.k1 * (1.0 - params.b));
  }

  TopK best{k, {}};

  if (!use_wand) {
    Addr next = kNegInf;
    for (;;) {
      Addr doc = kPosInf;
      for (TermCursor& t : scorer.terms) {
        Posting p = t.hopper->tau(next);
        t.at = p.interval.p;
        doc = std::min(doc, p.interval.p);
      }
      if (doc == kPosInf) break;
      best.offer(scorer.score_doc(doc));
      next = sat_add(doc, 1);
    }
    return std::move(best).finish();
  }

  std::vector<size_t> order(scorer.terms.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (;;) {
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (scorer.terms[a].at != scorer.terms[b].at)
        return scorer.terms[a].at < scorer.terms[b].at;
      return a < b;
    });
    if (scorer.terms[order[0]].at == kPosInf) break;
    double theta = best.threshold();
    double acc = 0.0;
    size_t pivot = order.size();
    for (size_t i = 0; i < order.size(); ++i) {
      if (scorer.terms[order[i]].at == kPosInf) break;
      acc += scorer.terms[order[i]].upper_bound;
      if (acc > theta) {
        pivot = i;
        break;
      }
    }
    if (pivot == order.size()) break;  // nothing left can beat the floor
    Addr pivot_doc = scorer.terms[order[pivot]].at;
    if (scorer.terms[order[0]].at == pivot_doc) {
      best.offer(scorer.score_doc(pivot_doc));
      Addr past = sat_add(pivot_doc, 1);
      for (TermCursor& t : scorer.terms)
        if (t.at <= pivot_doc) t.at = t.hopper->tau(past).interval.p;
    } else {
      TermCursor& t = scorer.terms[order[0]];
      t.at = t.hopper->tau(pivot_doc).interval.p;
    }
  }
  return std::move(best).finish();
}

std::vector<WeightedTerm> prf_expand(
    const RankSource& source, const std::vector<WeightedTerm>& original,
    const std::vector<ScoredDoc>& ranking, size_t fb_docs, size_t fb_terms,
    const std::function<std::string(Interval)>& doc_text) {
  std::vector<WeightedTerm> out = original;
  if (fb_terms == 0 || ranking.empty()) return out;

  std::unordered_set<Feature> query_features;
  for (const WeightedTerm& wt : original)
    query_features.insert(term_feature(wt.term));

  struct Candidate {
    std::string raw;  // a surface form mapping to the stem
    uint64_t count = 0;
  };
  std::map<std::string, Candidate> by_stem;
  size_t docs = std::min(fb_docs, ranking.size());
  for (size_t i = 0; i < docs; ++i) {
    std::string text = doc_text(ranking[i].doc);
    for (const Token& t : tokenize(text)) {
      if (t.structural) continue;
      std::string stem = porter_stem(t.text);
      Candidate& c = by_stem[stem];
      if (c.count == 0) c.raw = t.text;
      ++c.count;
    }
  }

  FeatureStats lengths = source.feature_stats(featurize(kLengthFeatureText));
  double n_docs = std::max<double>(1, lengths.count);
  struct Scored {
    double weight;
    std::string stem;
    std::string raw;
  };
  std::vector<Scored> scored;
  for (const auto& [stem, cand] : by_stem) {
    Feature f = stem_feature(stem);
    if (query_features.count(f)) continue;  // originals stay as they are
    FeatureStats st = source.feature_stats(f);
    if (st.count == 0) continue;
    double df = static_cast<double>(st.count);
    double idf = std::log((n_docs - df + 0.5) / (df + 0.5));
    if (idf <= 0.0) continue;
    scored.push_back({static_cast<double>(cand.count) * idf, stem, cand.raw});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.stem < b.stem;
  });
  for (size_t i = 0; i < scored.size() && i < fb_terms; ++i)
    out.push_back({scored[i].raw, scored[i].weight});
  return out;
}

double average_precision(const std::vector<Addr>& ranking,
                         const std::unordered_set<Addr>& relevant) {
  if (relevant.empty()) return 0.0;
  double hits = 0.0, sum = 0.0;
  for (size_t i = 0; i < ranking.size(); ++i) {
    if (!relevant.count(ranking[i])) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(relevant.size());
}

double mrr_at(const std::vector<Addr>& ranking,
              const std::unordered_set<Addr>& relevant, size_t cutoff) {
  size_t limit = std::min(cutoff, ranking.size());
  for (size_t i = 0; i < limit; ++i)
    if (relevant.count(ranking[i])) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

}  // namespace warren
