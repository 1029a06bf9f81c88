#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "warren/postings.hpp"
#include "warren/types.hpp"

namespace warren {

enum class GclKind {
  kAtom,          // one feature's annotation list
  kPhrase,        // consecutive token features, fixed gap 1
  kWindow,        // every interval of exactly n tokens
  kContainedIn,   // A << B
  kContaining,    // A >> B
  kNotContainedIn,  // A !<< B
  kNotContaining,   // A !>> B
  kBothOf,        // A ^ B
  kOneOf,         // A + B
  kFollows,       // A ... B
};

// Immutable query expression tree; shareable across evaluations.
struct GclExpr {
  GclKind kind;
  Feature feature = 0;            // kAtom
  std::vector<Feature> phrase;    // kPhrase, in order
  int64_t window = 0;             // kWindow
  std::shared_ptr<const GclExpr> left, right;

  static GclExpr atom(Feature f);
  static GclExpr make_phrase(std::vector<Feature> features);
  static GclExpr make_window(int64_t n);  // throws UsageError if n < 1
  static GclExpr binary(GclKind kind, GclExpr a, GclExpr b);
};

// Supplies leaf cursors over one feature's annotation list for whatever
// backs the evaluation (a snapshot, a test fixture, ...).
class HopperSource {
 public:
  virtual ~HopperSource() = default;
  virtual std::unique_ptr<Hopper> hopper(Feature feature,
                                         AccessCounter* counter) const = 0;
};

// Compiles an expression into a cursor tree. All combination logic is lazy:
// each access method touches only the leaf entries it needs. `counter`, when
// given, tallies every access-method call made against leaf cursors.
// Throws UsageError for a window as the right operand of a negation.
std::unique_ptr<Hopper> make_hopper(const GclExpr& expr,
                                    const HopperSource& source,
                                    AccessCounter* counter = nullptr);

// Convenience single-shot evaluations.
Posting eval_tau(const GclExpr& expr, const HopperSource& source, Addr k);
Posting eval_rho(const GclExpr& expr, const HopperSource& source, Addr k);

// Visits every solution exactly once in increasing start (and end) order.
void solve(Hopper& hopper,
           const std::function<void(Interval, Value)>& visit);
void solve(const GclExpr& expr, const HopperSource& source,
           const std::function<void(Interval, Value)>& visit,
           AccessCounter* counter = nullptr);

// Parses the ASCII query grammar:
//   expr    := operand (op operand)*          (one operator kind per level;
//   operand := '(' expr ')'                    parentheses required to mix)
//            | '"' words '"'                  (phrase)
//            | '#' digits                     (window)
//            | atom                           (feature literal)
//   op      := '<<' | '>>' | '!<<' | '!>>' | '^' | '+' | '...'
// Atoms made purely of letters and digits are folded to lowercase before
// featurizing; anything else ( ":title:" etc.) is featurized verbatim.
// Throws ParseError with a byte position on malformed input.
GclExpr parse_query(std::string_view text);

}  // namespace warren
