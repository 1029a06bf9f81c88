#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "warren/gcl.hpp"
#include "warren/postings.hpp"
#include "warren/types.hpp"

namespace warren {

// Ranking reads term statistics straight from annotation lists:
//   ":"                  document extents
//   "length:"            one annotation per document, value = token count
//   "tf:porter:<stem>"   one annotation per containing document,
//                        value = occurrence count
// so N, df, and avgdl always reflect the snapshot being queried.

struct BM25Params {
  double k1 = 0.82;
  double b = 0.68;
};

struct FeatureStats {
  uint64_t count = 0;      // number of annotations (df for tf features)
  double max_value = 0.0;  // largest value (tf ceiling for term bounds)
  double sum_value = 0.0;  // total value (token total for "length:")
};

// What ranking needs from an index snapshot.
class RankSource : public HopperSource {
 public:
  virtual FeatureStats feature_stats(Feature feature) const = 0;
};

struct WeightedTerm {
  std::string term;
  double weight = 1.0;
};

struct ScoredDoc {
  Interval doc;
  double score = 0.0;
};

// Feature id a query term is scored under: lowercased, Porter-stemmed,
// prefixed "tf:porter:".
Feature term_feature(std::string_view term);

// Writes the per-document statistics for one document's text: a
// "tf:porter:<stem>" count annotation per distinct stem and a "length:"
// annotation, all over `doc`. `write` receives (feature text, interval,
// value); callers bind it to an open transaction.
void index_stats(
    std::string_view doc_text, Interval doc,
    const std::function<void(std::string_view, Interval, Value)>& write);

// Top-k documents under BM25 with idf floored at zero. Results are sorted
// by descending score, ties by ascending document start. The pruned
// (`use_wand`) and exhaustive paths return identical results, scores
// included: both accumulate per-term contributions in the same order and
// both require a strictly better score to displace a held document.
std::vector<ScoredDoc> bm25_rank(const RankSource& source,
                                 const std::vector<WeightedTerm>& terms,
                                 const BM25Params& params, size_t k,
                                 bool use_wand = true);

// Pseudo-relevance feedback: adds the fb_terms highest-weighted stems found
// in the top fb_docs of `ranking` (weight = occurrences in the feedback set
// x idf). Original terms are kept untouched; a stem matching one of them is
// never added twice. `doc_text` fetches a ranked document's text.
std::vector<WeightedTerm> prf_expand(
    const RankSource& source, const std::vector<WeightedTerm>& original,
    const std::vector<ScoredDoc>& ranking, size_t fb_docs, size_t fb_terms,
    const std::function<std::string(Interval)>& doc_text);

// Standard effectiveness metrics; documents are identified by their start
// address. Zero relevant documents yields 0.
double average_precision(const std::vector<Addr>& ranking,
                         const std::unordered_set<Addr>& relevant);
double mrr_at(const std::vector<Addr>& ranking,
              const std::unordered_set<Addr>& relevant, size_t cutoff);

}  // namespace warren
