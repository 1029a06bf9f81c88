#include "warren/stemmer.hpp"

// Porter's algorithm, following the layout of his reference implementation:
// the word lives in b[0..k] and each step trims or rewrites the ending.

namespace warren {

namespace {

struct Stemmer {
  std::string b;
  int k = 0;   // offset of the last character
  int j = 0;   // set by ends(); boundary before the matched suffix

  bool cons(int i) const {
    switch (b[i]) {
      case 'a': case 'e': case 'i': case 'o': case 'u':
        return false;
      case 'y':
        return i == 0 ? true : !cons(i - 1);
      default:
        return true;
    }
  }

  // Number of consonant-vowel sequences in b[0..j].
  int m() const {
    int n = 0, i = 0;
    for (;;) {
      if (i > j) return n;
      if (!cons(i)) break;
      ++i;
    }
    ++i;
    for (;;) {
      for (;;) {
        if (i > j) return n;
        if (cons(i)) break;
        ++i;
      }
      ++i;
      ++n;
      for (;;) {
        if (i > j) return n;
        if (!cons(i)) break;
        ++i;
      }
      ++i;
    }
  }

  bool vowel_in_stem() const {
    for (int i = 0; i <= j; ++i)
      if (!cons(i)) return true;
    return false;
  }

  bool double_cons(int i) const {
    if (i < 1) return false;
    if (b[i] != b[i - 1]) return false;
    return cons(i);
  }

  // consonant-vowel-consonant ending where the final consonant is not
  // w, x, or y; signals an "e" should be restored (hop -> hope).
  bool cvc(int i) const {
    if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
    char c = b[i];
    return c != 'w' && c != 'x' && c != 'y';
  }

  bool ends(std::string_view s) {
    int len = static_cast<int>(s.size());
    if (len > k + 1) return false;
    if (b.compare(k - len + 1, len, s) != 0) return false;
    j = k - len;
    return true;
  }

  void set_to(std::string_view s) {
    b.replace(j + 1, std::string::npos, s);
    k = j + static_cast<int>(s.size());
    b.resize(k + 1);
  }

  void r(std::string_view s) {
    if (m() > 0) set_to(s);
  }

  // plurals and -ed/-ing
  void step1ab() {
    if (b[k] == 's') {
      if (ends("sses")) k -= 2;
      else if (ends("ies")) set_to("i");
      else if (b[k - 1] != 's') --k;
      b.resize(k + 1);
    }
    if (ends("eed")) {
      if (m() > 0) {
        --k;
        b.resize(k + 1);
      }
    } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
      k = j;
      b.resize(k + 1);
      if (ends("at")) set_to("ate");
      else if (ends("bl")) set_to("ble");
      else if (ends("iz")) set_to("ize");
      else if (double_cons(k)) {
        --k;
        b.resize(k + 1);
        char c = b[k];
        if (c == 'l' || c == 's' || c == 'z') {
          ++k;
          b.resize(k + 1, c);
        }
      } else if (m() == 1 && cvc(k)) {
        j = k;
        set_to("e");
      }
    }
  }

  void step1c() {
    if (ends("y") && vowel_in_stem()) b[k] = 'i';
  }

  void step2() {
    switch (b[k - 1]) {
      case 'a':
        if (ends("ational")) { r("ate"); break; }
        if (ends("tional")) { r("tion"); break; }
        break;
      case 'c':
        if (ends("enci")) { r("ence"); break; }
        if (ends("anci")) { r("ance"); break; }
        break;
      case 'e':
        if (ends("izer")) { r("ize"); break; }
        break;
      case 'l':
        if (ends("bli")) { r("ble"); break; }
        if (ends("alli")) { r("al"); break; }
        if (ends("entli")) { r("ent"); break; }
        if (ends("eli")) { r("e"); break; }
        if (ends("ousli")) { r("ous"); break; }
        break;
      case 'o':
        if (ends("ization")) { r("ize"); break; }
        if (ends("ation")) { r("ate"); break; }
        if (ends("ator")) { r("ate"); break; }
        break;
      case 's':
        if (ends("alism")) { r("al"); break; }
        if (ends("iveness")) { r("ive"); break; }
        if (ends("fulness")) { r("ful"); break; }
        if (ends("ousness")) { r("ous"); break; }
        break;
      case 't':
        if (ends("aliti")) { r("al"); break; }
        if (ends("iviti")) { r("ive"); break; }
        if (ends("biliti")) { r("ble"); break; }
        break;
      case 'g':
        if (ends("logi")) { r("log"); break; }
        break;
    }
  }

  void step3() {
    switch (b[k]) {
      case 'e':
        if (ends("icate")) { r("ic"); break; }
        if (ends("ative")) { r(""); break; }
        if (ends("alize")) { r("al"); break; }
        break;
      case 'i':
        if (ends("iciti")) { r("ic"); break; }
        break;
      case 'l':
        if (ends("ical")) { r("ic"); break; }
        if (ends("ful")) { r(""); break; }
        break;
      case 's':
        if (ends("ness")) { r(""); break; }
        break;
    }
  }

  void step4() {
    switch (b[k - 1]) {
      case 'a': if (ends("al")) break; return;
      case 'c': if (ends("ance")) break;
                if (ends("ence")) break; return;
      case 'e': if (ends("er")) break; return;
      case 'i': if (ends("ic")) break; return;
      case 'l': if (ends("able")) break;
                if (ends("ible")) break; return;
      case 'n': if (ends("ant")) break;
                if (ends("ement")) break;
                if (ends("ment")) break;
                if (ends("ent")) break; return;
      case 'o': if (ends("ion") && j >= 0 && (b[j] == 's' || b[j] == 't'))
                  break;
                if (ends("ou")) break; return;
      case 's': if (ends("ism")) break; return;
      case 't': if (ends("ate")) break;
                if (ends("iti")) break; return;
      case 'u': if (ends("ous")) break; return;
      case 'v': if (ends("ive")) break; return;
      case 'z': if (ends("ize")) break; return;
      default: return;
    }
    if (m() > 1) {
      k = j;
      b.resize(k + 1);
    }
  }

  void step5() {
    j = k;
    if (b[k] == 'e') {
      int a = m();
      if (a > 1 || (a == 1 && !cvc(k - 1))) {
        --k;
        b.resize(k + 1);
      }
    }
    j = k;
    if (b[k] == 'l' && double_cons(k) && m() > 1) {
      --k;
      b.resize(k + 1);
    }
  }
};

}  // namespace

std::string porter_stem(std::string_view word) {
  if (word.size() <= 2) return std::string(word);
  for (char c : word)
    if (c < 'a' || c > 'z') return std::string(word);
  Stemmer s;
  s.b = word;
  s.k = static_cast<int>(word.size()) - 1;
  s.step1ab();
  s.step1c();
  s.step2();
  s.step3();
  s.step4();
  s.step5();
  return s.b;
}

}  // namespace warren
