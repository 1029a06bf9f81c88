#include "warren/gcl.hpp"

#include <cctype>
#include <optional>
#include <utility>

#include "warren/featurizer.hpp"
#include "warren/tokenizer.hpp"

namespace warren {

GclExpr GclExpr::atom(Feature f) {
  GclExpr e;
  e.kind = GclKind::kAtom;
  e.feature = f;
  return e;
}

GclExpr GclExpr::make_phrase(std::vector<Feature> features) {
  if (features.empty()) throw UsageError("phrase: no features");
  if (features.size() == 1) return atom(features[0]);
  GclExpr e;
  e.kind = GclKind::kPhrase;
  e.phrase = std::move(features);
  return e;
}

GclExpr GclExpr::make_window(int64_t n) {
  if (n < 1) throw UsageError("window: width must be at least 1");
  GclExpr e;
  e.kind = GclKind::kWindow;
  e.window = n;
  return e;
}

GclExpr GclExpr::binary(GclKind kind, GclExpr a, GclExpr b) {
  GclExpr e;
  e.kind = kind;
  e.left = std::make_shared<const GclExpr>(std::move(a));
  e.right = std::make_shared<const GclExpr>(std::move(b));
  return e;
}

namespace {

using HopperPtr = std::unique_ptr<Hopper>;

// ---- combination cursors ----------------------------------------------
//
// Every composite implements the two forward access methods (tau: first
// solution with start >= k; rho: first with end >= k) and their mirror
// images (ohr: last with end <= k; uat: last with start <= k). The mirrors
// never surface in query results; they let the combination operators find
// the largest start covering a position, which is what makes the emitted
// intervals minimal.

// A << B: members of A lying within some member of B. Emits A's value.
class ContainedInHopper : public Hopper {
 public:
  ContainedInHopper(HopperPtr a, HopperPtr b)
      : a_(std::move(a)), b_(std::move(b)) {}

  Posting tau(Addr k) override {
    for (;;) {
      Posting a = a_->tau(k);
      if (a.is_infinite()) return a;
      Posting b = b_->rho(a.interval.q);
      if (b.interval.p <= a.interval.p) return a;
      k = b.interval.p;  // containers ending later start no earlier
    }
  }
  Posting rho(Addr k) override {
    Posting a = a_->rho(k);
    if (a.is_infinite()) return a;
    Posting b = b_->rho(a.interval.q);
    if (b.interval.p <= a.interval.p) return a;
    return tau(b.interval.p);
  }
  Posting ohr(Addr k) override {
    for (;;) {
      Posting a = a_->ohr(k);
      if (a.is_before()) return a;
      Posting b = b_->uat(a.interval.p);
      if (b.interval.q >= a.interval.q) return a;
      k = b.interval.q;
    }
  }
  Posting uat(Addr k) override {
    Posting a = a_->uat(k);
    if (a.is_before()) return a;
    Posting b = b_->uat(a.interval.p);
    if (b.interval.q >= a.interval.q) return a;
    return ohr(b.interval.q);
  }

 private:
  HopperPtr a_, b_;
};

// A >> B: members of A with some member of B inside. Emits A's value.
class ContainingHopper : public Hopper {
 public:
  ContainingHopper(HopperPtr a, HopperPtr b)
      : a_(std::move(a)), b_(std::move(b)) {}

  Posting tau(Addr k) override {
    Posting a = a_->tau(k);
    if (a.is_infinite()) return a;
    Posting b = b_->tau(a.interval.p);
    if (b.interval.q <= a.interval.q) return a;
    return rho(b.interval.q);
  }
  Posting rho(Addr k) override {
    for (;;) {
      Posting a = a_->rho(k);
      if (a.is_infinite()) return a;
      Posting b = b_->tau(a.interval.p);
      if (b.interval.q <= a.interval.q) return a;
      k = b.interval.q;  // later members must cover an inner ending here
    }
  }
  Posting ohr(Addr k) override {
    Posting a = a_->ohr(k);
    if (a.is_before()) return a;
    Posting b = b_->ohr(a.interval.q);
    if (b.interval.p >= a.interval.p) return a;
    return uat(b.interval.p);
  }
  Posting uat(Addr k) override {
    for (;;) {
      Posting a = a_->uat(k);
      if (a.is_before()) return a;
      Posting b = b_->ohr(a.interval.q);
      if (b.interval.p >= a.interval.p) return a;
      k = b.interval.p;
    }
  }

 private:
  HopperPtr a_, b_;
};

// A !<< B: members of A within no member of B. Emits A's value.
class NotContainedInHopper : public Hopper {
 public:
  NotContainedInHopper(HopperPtr a, HopperPtr b)
      : a_(std::move(a)), b_(std::move(b)) {}

  Posting tau(Addr k) override { return scan(a_->tau(k)); }
  Posting rho(Addr k) override { return scan(a_->rho(k)); }
  Posting ohr(Addr k) override { return scan_back(a_->ohr(k)); }
  Posting uat(Addr k) override { return scan_back(a_->uat(k)); }

 private:
  Posting scan(Posting a) {
    for (;;) {
      if (a.is_infinite()) return a;
      Posting b = b_->rho(a.interval.q);
      if (b.interval.p > a.interval.p) return a;
      // every member of A ending at or before b.q sits inside b; skip them
      a = a_->rho(sat_add(b.interval.q, 1));
    }
  }
  Posting scan_back(Posting a) {
    for (;;) {
      if (a.is_before()) return a;
      Posting b = b_->uat(a.interval.p);
      if (b.interval.q < a.interval.q) return a;
      a = a_->uat(sat_sub(b.interval.p, 1));
    }
  }

  HopperPtr a_, b_;
};

// A !>> B: members of A with no member of B inside. Emits A's value.
class NotContainingHopper : public Hopper {
 public:
  NotContainingHopper(HopperPtr a, HopperPtr b)
      : a_(std::move(a)), b_(std::move(b)) {}

  Posting tau(Addr k) override { return scan(a_->tau(k)); }
  Posting rho(Addr k) override { return scan(a_->rho(k)); }
  Posting ohr(Addr k) override { return scan_back(a_->ohr(k)); }
  Posting uat(Addr k) override { return scan_back(a_->uat(k)); }

 private:
  Posting scan(Posting a) {
    for (;;) {
      if (a.is_infinite()) return a;
      Posting b = b_->tau(a.interval.p);
      if (b.interval.q > a.interval.q) return a;
      // every member of A starting at or before b.p covers b; skip them
      a = a_->tau(sat_add(b.interval.p, 1));
    }
  }
  Posting scan_back(Posting a) {
    for (;;) {
      if (a.is_before()) return a;
      Posting b = b_->ohr(a.interval.q);
      if (b.interval.p < a.interval.p) return a;
      a = a_->ohr(sat_sub(b.interval.q, 1));
    }
  }

  HopperPtr a_, b_;
};

// Forward/backward derivations shared by the combining operators, whose
// natural primitives are tau and ohr.
template <typename Base>
class TauOhrHopper : public Hopper {
 public:
  Posting rho(Addr k) final {
    Posting d = this->ohr(sat_sub(k, 1));
    if (d.is_before()) return this->tau(kNegInf);
    return this->tau(sat_add(d.interval.p, 1));
  }
  Posting uat(Addr k) final {
    Posting d = this->tau(sat_add(k, 1));
    if (d.is_infinite()) return this->ohr(kPosInf);
    return this->ohr(sat_sub(d.interval.q, 1));
  }
};

// A ^ B: minimal intervals covering one member of each. Value 0.
class BothOfHopper : public TauOhrHopper<BothOfHopper> {
 public:
  BothOfHopper(HopperPtr a, HopperPtr b)
      : a_(std::move(a)), b_(std::move(b)) {}

  Posting tau(Addr k) override {
    Posting a = a_->tau(k), b = b_->tau(k);
    if (a.is_infinite() || b.is_infinite()) return Posting::infinite();
    Addr e = std::max(a.interval.q, b.interval.q);
    Addr s = std::min(a_->ohr(e).interval.p, b_->ohr(e).interval.p);
    return {{s, e}, 0.0};
  }
  Posting ohr(Addr k) override {
    Posting a = a_->ohr(k), b = b_->ohr(k);
    if (a.is_before() || b.is_before()) return Posting::before();
    Addr s = std::min(a.interval.p, b.interval.p);
    Addr e = std::max(a_->tau(s).interval.q, b_->tau(s).interval.q);
    return {{s, e}, 0.0};
  }

 private:
  HopperPtr a_, b_;
};

// A + B: the anti-nesting reduction of the union. Emits the winning
// member's own value.
class OneOfHopper : public TauOhrHopper<OneOfHopper> {
 public:
  OneOfHopper(HopperPtr a, HopperPtr b) : a_(std::move(a)), b_(std::move(b)) {}

  Posting tau(Addr k) override {
    Posting a = a_->tau(k), b = b_->tau(k);
    // smaller end wins; on a tie the larger (innermost) start wins
    if (a.interval.q != b.interval.q)
      return a.interval.q < b.interval.q ? a : b;
    return a.interval.p >= b.interval.p ? a : b;
  }
  Posting ohr(Addr k) override {
    Posting a = a_->ohr(k), b = b_->ohr(k);
    if (a.interval.p != b.interval.p)
      return a.interval.p > b.interval.p ? a : b;
    return a.interval.q <= b.interval.q ? a : b;
  }

 private:
  HopperPtr a_, b_;
};

// A ... B: minimal intervals from a member of A to a strictly later
// member of B. Value 0.
class FollowsHopper : public TauOhrHopper<FollowsHopper> {
 public:
  FollowsHopper(HopperPtr a, HopperPtr b)
      : a_(std::move(a)), b_(std::move(b)) {}

  Posting tau(Addr k) override {
    Posting a = a_->tau(k);
    if (a.is_infinite()) return a;
    Posting b = b_->tau(sat_add(a.interval.q, 1));
    if (b.is_infinite()) return b;
    // tightest leading member still ending before b
    Addr s = a_->ohr(sat_sub(b.interval.p, 1)).interval.p;
    return {{s, b.interval.q}, 0.0};
  }
  Posting ohr(Addr k) override {
    Posting b = b_->ohr(k);
    if (b.is_before()) return b;
    Posting a = a_->ohr(sat_sub(b.interval.p, 1));
    if (a.is_before()) return a;
    Addr e = b_->tau(sat_add(a.interval.q, 1)).interval.q;
    return {{a.interval.p, e}, 0.0};
  }

 private:
  HopperPtr a_, b_;
};

// #n: every interval of exactly n tokens. Value 0.
class WindowHopper : public Hopper {
 public:
  explicit WindowHopper(int64_t n) : n_(n) {}

  Posting tau(Addr k) override { return {{k, sat_add(k, n_ - 1)}, 0.0}; }
  Posting rho(Addr k) override { return {{sat_sub(k, n_ - 1), k}, 0.0}; }
  Posting uat(Addr k) override { return {{k, sat_add(k, n_ - 1)}, 0.0}; }
  Posting ohr(Addr k) override { return {{sat_sub(k, n_ - 1), k}, 0.0}; }

 private:
  int64_t n_;
};

// Consecutive token features at fixed gap 1. Value 0.
class PhraseHopper : public Hopper {
 public:
  explicit PhraseHopper(std::vector<HopperPtr> tokens)
      : tokens_(std::move(tokens)) {}

  Posting tau(Addr k) override {
    Addr s = k;
    for (;;) {
      Posting first = tokens_[0]->tau(s);
      if (first.is_infinite()) return Posting::infinite();
      s = first.interval.p;
      bool aligned = true;
      for (size_t i = 1; i < tokens_.size(); ++i) {
        Addr want = sat_add(s, static_cast<Addr>(i));
        Posting t = tokens_[i]->tau(want);
        if (t.is_infinite()) return Posting::infinite();
        if (t.interval.p != want) {
          s = sat_sub(t.interval.p, static_cast<Addr>(i));
          aligned = false;
          break;
        }
      }
      if (aligned)
        return {{s, sat_add(s, static_cast<Addr>(tokens_.size()) - 1)}, 0.0};
    }
  }
  Posting rho(Addr k) override {
    return tau(sat_sub(k, static_cast<Addr>(tokens_.size()) - 1));
  }
  Posting uat(Addr k) override {
    Addr s = k;
    for (;;) {
      Posting first = tokens_[0]->uat(s);
      if (first.is_before()) return Posting::before();
      s = first.interval.p;
      bool aligned = true;
      for (size_t i = 1; i < tokens_.size(); ++i) {
        Addr want = sat_add(s, static_cast<Addr>(i));
        Posting t = tokens_[i]->uat(want);
        if (t.is_before()) return Posting::before();
        if (t.interval.p != want) {
          s = sat_sub(t.interval.p, static_cast<Addr>(i));
          aligned = false;
          break;
        }
      }
      if (aligned)
        return {{s, sat_add(s, static_cast<Addr>(tokens_.size()) - 1)}, 0.0};
    }
  }
  Posting ohr(Addr k) override {
    return uat(sat_sub(k, static_cast<Addr>(tokens_.size()) - 1));
  }

 private:
  std::vector<HopperPtr> tokens_;
};

}  // namespace

std::unique_ptr<Hopper> make_hopper(const GclExpr& expr,
                                    const HopperSource& source,
                                    AccessCounter* counter) {
  switch (expr.kind) {
    case GclKind::kAtom:
      return source.hopper(expr.feature, counter);
    case GclKind::kPhrase: {
      std::vector<HopperPtr> tokens;
      tokens.reserve(expr.phrase.size());
      for (Feature f : expr.phrase) tokens.push_back(source.hopper(f, counter));
      return std::make_unique<PhraseHopper>(std::move(tokens));
    }
    case GclKind::kWindow:
      return std::make_unique<WindowHopper>(expr.window);
    default:
      break;
  }
  if ((expr.kind == GclKind::kNotContainedIn ||
       expr.kind == GclKind::kNotContaining) &&
      expr.right->kind == GclKind::kWindow)
    throw UsageError("a window cannot be the right operand of a negation");
  HopperPtr a = make_hopper(*expr.left, source, counter);
  HopperPtr b = make_hopper(*expr.right, source, counter);
  switch (expr.kind) {
    case GclKind::kContainedIn:
      return std::make_unique<ContainedInHopper>(std::move(a), std::move(b));
    case GclKind::kContaining:
      return std::make_unique<ContainingHopper>(std::move(a), std::move(b));
    case GclKind::kNotContainedIn:
      return std::make_unique<NotContainedInHopper>(std::move(a),
                                                    std::move(b));
    case GclKind::kNotContaining:
      return std::make_unique<NotContainingHopper>(std::move(a), std::move(b));
    case GclKind::kBothOf:
      return std::make_unique<BothOfHopper>(std::move(a), std::move(b));
    case GclKind::kOneOf:
      return std::make_unique<OneOfHopper>(std::move(a), std::move(b));
    case GclKind::kFollows:
      return std::make_unique<FollowsHopper>(std::move(a), std::move(b));
    default:
      throw UsageError("unknown expression node");
  }
}

Posting eval_tau(const GclExpr& expr, const HopperSource& source, Addr k) {
  return make_hopper(expr, source)->tau(k);
}

Posting eval_rho(const GclExpr& expr, const HopperSource& source, Addr k) {
  return make_hopper(expr, source)->rho(k);
}

void solve(Hopper& hopper,
           const std::function<void(Interval, Value)>& visit) {
  Addr k = kNegInf;
  for (;;) {
    Posting p = hopper.tau(k);
    if (p.is_infinite()) return;
    visit(p.interval, p.value);
    k = sat_add(p.interval.p, 1);
  }
}

void solve(const GclExpr& expr, const HopperSource& source,
           const std::function<void(Interval, Value)>& visit,
           AccessCounter* counter) {
  auto h = make_hopper(expr, source, counter);
  solve(*h, visit);
}

// ---- query text -------------------------------------------------------

namespace {

struct Parser {
  std::string_view text;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("query: " + what + " at byte " + std::to_string(pos));
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
  }

  bool at(std::string_view s) const {
    return text.substr(pos, s.size()) == s;
  }

  // Returns the operator kind at the cursor, or nullopt at an expression
  // boundary.
  std::optional<GclKind> peek_op() {
    skip_ws();
    if (pos >= text.size() || text[pos] == ')') return std::nullopt;
    struct OpText {
      std::string_view text;
      GclKind kind;
    };
    static constexpr OpText kOps[] = {
        {"!<<", GclKind::kNotContainedIn}, {"!>>", GclKind::kNotContaining},
        {"<<", GclKind::kContainedIn},     {">>", GclKind::kContaining},
        {"...", GclKind::kFollows},        {"^", GclKind::kBothOf},
        {"+", GclKind::kOneOf},
    };
    for (const OpText& op : kOps)
      if (at(op.text)) {
        pos += op.text.size();
        return op.kind;
      }
    fail("expected an operator");
  }

  GclExpr parse_expr() {
    GclExpr lhs = parse_operand();
    std::optional<GclKind> level;
    for (;;) {
      size_t before = pos;
      std::optional<GclKind> op = peek_op();
      if (!op) return lhs;
      if (level && *op != *level) {
        pos = before;
        fail("mixed operators need parentheses");
      }
      level = *op;
      lhs = GclExpr::binary(*op, std::move(lhs), parse_operand());
    }
  }

  GclExpr parse_operand() {
    skip_ws();
    if (pos >= text.size()) fail("expected an operand");
    char c = text[pos];
    if (c == '(') {
      ++pos;
      GclExpr inner = parse_expr();
      skip_ws();
      if (pos >= text.size() || text[pos] != ')') fail("expected ')'");
      ++pos;
      return inner;
    }
    if (c == '"') return parse_phrase();
    if (c == '#') return parse_window();
    return parse_atom();
  }

  GclExpr parse_phrase() {
    size_t open = pos++;
    size_t start = pos;
    while (pos < text.size() && text[pos] != '"') ++pos;
    if (pos >= text.size()) {
      pos = open;
      fail("unterminated phrase");
    }
    std::string_view body = text.substr(start, pos - start);
    ++pos;
    std::vector<Feature> features;
    for (const Token& t : tokenize(body))
      if (!t.structural) features.push_back(featurize(t.text));
    if (features.empty()) {
      pos = open;
      fail("empty phrase");
    }
    return GclExpr::make_phrase(std::move(features));
  }

  GclExpr parse_window() {
    ++pos;  // '#'
    size_t start = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos])))
      ++pos;
    if (pos == start) fail("expected a window width");
    int64_t n = 0;
    for (size_t i = start; i < pos; ++i) {
      n = n * 10 + (text[i] - '0');
      if (n > (int64_t{1} << 32)) fail("window width out of range");
    }
    if (n < 1) {
      pos = start;
      fail("window width must be at least 1");
    }
    return GclExpr::make_window(n);
  }

  GclExpr parse_atom() {
    size_t start = pos;
    while (pos < text.size()) {
      char c = text[pos];
      if (std::isspace(static_cast<unsigned char>(c)) || c == '(' ||
          c == ')' || c == '"' || c == '<' || c == '>' || c == '!' ||
          c == '^' || c == '+' || c == '#')
        break;
      if (c == '.' && at("..."))  // the follows operator, not atom text
        break;
      ++pos;
    }
    if (pos == start) fail("expected an operand");
    std::string atom(text.substr(start, pos - start));
    bool plain = true;
    for (char& c : atom)
      if (!std::isalnum(static_cast<unsigned char>(c))) plain = false;
    if (plain)
      for (char& c : atom) c = static_cast<char>(std::tolower(
          static_cast<unsigned char>(c)));
    return GclExpr::atom(featurize(atom));
  }
};

}  // namespace

GclExpr parse_query(std::string_view text) {
  Parser p{text};
  GclExpr e = p.parse_expr();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing input");
  return e;
}

}  // namespace warren
