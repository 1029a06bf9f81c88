#include "warren/types.hpp"

#include <algorithm>

namespace warren {

std::vector<Interval> reduce(std::vector<Interval> intervals) {
  std::sort(intervals.begin(), intervals.end(),
            [](const Interval& a, const Interval& b) {
              return a.p != b.p ? a.p < b.p : a.q < b.q;
            });
  intervals.erase(std::unique(intervals.begin(), intervals.end()),
                  intervals.end());
  // Sweep by start, keeping the output strictly increasing in both
  // coordinates. A newcomer with the same start as the last survivor is
  // dropped (the survivor nests in it); a newcomer ending at or before the
  // last survivor's end evicts it.
  std::vector<Interval> out;
  for (const Interval& iv : intervals) {
    if (!out.empty() && out.back().p == iv.p) continue;
    while (!out.empty() && out.back().p < iv.p && iv.q <= out.back().q)
      out.pop_back();
    out.push_back(iv);
  }
  return out;
}

}  // namespace warren
