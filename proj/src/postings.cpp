#include "warren/postings.hpp"

#include <algorithm>
#include <cstring>

namespace warren {

namespace {

void put_varint(std::vector<uint8_t>& out, uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<uint8_t>(v) | 0x80);
    v >>= 7;
  }
  out.push_back(static_cast<uint8_t>(v));
}

uint64_t get_varint(const std::vector<uint8_t>& in, size_t& pos) {
  uint64_t v = 0;
  int shift = 0;
  while (true) {
    if (pos >= in.size()) throw StorageError("posting block truncated");
    uint8_t b = in[pos++];
    v |= static_cast<uint64_t>(b & 0x7F) << shift;
    if (!(b & 0x80)) return v;
    shift += 7;
    if (shift > 63) throw StorageError("posting block corrupt varint");
  }
}

uint64_t zigzag(int64_t v) {
  return (static_cast<uint64_t>(v) << 1) ^ static_cast<uint64_t>(v >> 63);
}

int64_t unzigzag(uint64_t v) {
  return static_cast<int64_t>(v >> 1) ^ -static_cast<int64_t>(v & 1);
}

constexpr uint8_t kEndsElided = 0x01;
constexpr uint8_t kValuesElided = 0x02;

// Exponential search for the first index with proj(e) >= k, starting from
// a cached position.
template <typename Proj>
size_t gallop(const std::vector<Entry>& entries, Addr k, size_t hint,
              Proj proj) {
  size_t n = entries.size();
  if (n == 0) return 0;
  size_t lo, hi;
  if (hint >= n) hint = n - 1;
  if (proj(entries[hint]) >= k) {
    // Gallop left for the boundary.
    size_t step = 1;
    hi = hint;
    lo = hint;
    while (lo > 0 && proj(entries[lo - 1]) >= k) {
      hi = lo;
      lo = step > lo ? 0 : lo - step;
      step <<= 1;
    }
    if (lo == hi) return lo;
  } else {
    size_t step = 1;
    lo = hint + 1;
    hi = lo;
    while (hi < n && proj(entries[hi]) < k) {
      lo = hi + 1;
      hi = std::min(n, hi + step);
      step <<= 1;
    }
    if (hi >= n && (n == 0 || proj(entries[n - 1]) < k)) return n;
  }
  while (lo < hi) {
    size_t mid = lo + (hi - lo) / 2;
    if (proj(entries[mid]) < k)
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace

void AnnotationList::annotate(Interval interval, Value value) {
  // Common case: strictly after everything present.
  if (entries_.empty() || (entries_.back().interval.p < interval.p &&
                           entries_.back().interval.q < interval.q)) {
    entries_.push_back({interval, value});
    return;
  }
  auto pos = std::lower_bound(entries_.begin(), entries_.end(), interval.p,
                              [](const Entry& e, Addr p) {
                                return e.interval.p < p;
                              });
  // Identical interval: later value wins.
  if (pos != entries_.end() && pos->interval == interval) {
    pos->value = value;
    return;
  }
  // If an existing annotation nests strictly inside the new interval, the
  // innermost (existing) wins and the new one is dropped. Such entries
  // have start >= interval.p and end <= interval.q.
  for (auto it = pos; it != entries_.end() && it->interval.p <= interval.q;
       ++it) {
    if (nests(it->interval, interval)) return;
  }
  // Remove existing annotations the new one nests inside.
  auto keep_from = pos;
  while (keep_from != entries_.begin() &&
         nests(interval, std::prev(keep_from)->interval))
    --keep_from;
  auto inserted = entries_.erase(keep_from, pos);
  entries_.insert(inserted, {interval, value});
}

Value AnnotationList::max_value() const {
  Value m = 0.0;
  for (const Entry& e : entries_) m = std::max(m, e.value);
  return m;
}

PostingBlock encode_block(std::span<const Entry> entries) {
  bool ends_elided = true;
  bool values_elided = true;
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].interval.p != entries[i].interval.q) ends_elided = false;
    if (entries[i].value != 0.0) values_elided = false;
    if (i > 0 && (entries[i].interval.p <= entries[i - 1].interval.p ||
                  entries[i].interval.q <= entries[i - 1].interval.q))
      throw Error("encode_block: entries out of minimal-interval order");
  }

  std::vector<uint8_t> starts, ends;
  Addr prev_p = 0, prev_q = 0;
  // Sync point: entry index, absolute start/end, gap-stream byte offsets.
  struct Sync {
    uint64_t index, soff, eoff;
    Addr p, q;
  };
  std::vector<Sync> syncs;
  for (size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    if (i % kSyncInterval == 0)
      syncs.push_back({i, starts.size(), ends.size(), e.interval.p,
                       e.interval.q});
    if (i % kSyncInterval == 0) {
      put_varint(starts, zigzag(e.interval.p));
      if (!ends_elided) put_varint(ends, zigzag(e.interval.q));
    } else {
      put_varint(starts, static_cast<uint64_t>(e.interval.p - prev_p));
      if (!ends_elided)
        put_varint(ends, static_cast<uint64_t>(e.interval.q - prev_q));
    }
    prev_p = e.interval.p;
    prev_q = e.interval.q;
  }

  PostingBlock block;
  auto& out = block.bytes;
  put_varint(out, entries.size());
  if (entries.empty()) return block;
  uint8_t flags = (ends_elided ? kEndsElided : 0) |
                  (values_elided ? kValuesElided : 0);
  out.push_back(flags);
  put_varint(out, syncs.size());
  for (const auto& s : syncs) {
    put_varint(out, s.index);
    put_varint(out, s.soff);
    put_varint(out, s.eoff);
    put_varint(out, zigzag(s.p));
    put_varint(out, zigzag(s.q));
  }
  put_varint(out, starts.size());
  out.insert(out.end(), starts.begin(), starts.end());
  if (!ends_elided) {
    put_varint(out, ends.size());
    out.insert(out.end(), ends.begin(), ends.end());
  }
  if (!values_elided) {
    for (const Entry& e : entries) {
      uint64_t bits;
      std::memcpy(&bits, &e.value, sizeof bits);
      for (int b = 0; b < 8; ++b)
        out.push_back(static_cast<uint8_t>(bits >> (8 * b)));
    }
  }
  return block;
}

namespace {

struct SyncPoint {
  uint64_t index, soff, eoff;
  Addr p, q;
};

struct BlockHeader {
  size_t count;
  uint8_t flags;
  std::vector<SyncPoint> syncs;
  size_t starts_off, starts_len;
  size_t ends_off, ends_len;
  size_t values_off;
};

BlockHeader parse_header(const PostingBlock& block) {
  BlockHeader h{};
  size_t pos = 0;
  h.count = get_varint(block.bytes, pos);
  if (h.count == 0) return h;
  if (pos >= block.bytes.size()) throw StorageError("posting block truncated");
  h.flags = block.bytes[pos++];
  size_t nsync = get_varint(block.bytes, pos);
  for (size_t i = 0; i < nsync; ++i) {
    SyncPoint s;
    s.index = get_varint(block.bytes, pos);
    s.soff = get_varint(block.bytes, pos);
    s.eoff = get_varint(block.bytes, pos);
    s.p = unzigzag(get_varint(block.bytes, pos));
    s.q = unzigzag(get_varint(block.bytes, pos));
    h.syncs.push_back(s);
  }
  h.starts_len = get_varint(block.bytes, pos);
  h.starts_off = pos;
  pos += h.starts_len;
  if (!(h.flags & kEndsElided)) {
    if (pos > block.bytes.size()) throw StorageError("posting block truncated");
    h.ends_len = get_varint(block.bytes, pos);
    h.ends_off = pos;
    pos += h.ends_len;
  }
  h.values_off = pos;
  if (pos > block.bytes.size()) throw StorageError("posting block truncated");
  return h;
}

// Decodes entries from the sync point at `sync_idx` to the end of the list.
std::vector<Entry> decode_from_sync(const PostingBlock& block,
                                    const BlockHeader& h, size_t sync_idx) {
  const SyncPoint& sync = h.syncs[sync_idx];
  size_t spos = h.starts_off + sync.soff;
  size_t epos = h.ends_off + sync.eoff;
  std::vector<Entry> out;
  out.reserve(h.count - sync.index);
  Addr p = 0, q = 0;
  for (size_t i = sync.index; i < h.count; ++i) {
    if (i % kSyncInterval == 0) {
      p = unzigzag(get_varint(block.bytes, spos));
      q = (h.flags & kEndsElided) ? p
                                  : unzigzag(get_varint(block.bytes, epos));
    } else {
      p += static_cast<Addr>(get_varint(block.bytes, spos));
      q = (h.flags & kEndsElided)
              ? p
              : q + static_cast<Addr>(get_varint(block.bytes, epos));
    }
    Entry e;
    e.interval = {p, q};
    e.value = 0.0;
    if (!(h.flags & kValuesElided)) {
      size_t voff = h.values_off + 8 * i;
      if (voff + 8 > block.bytes.size())
        throw StorageError("posting block truncated");
      uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<uint64_t>(block.bytes[voff + b]) << (8 * b);
      std::memcpy(&e.value, &bits, sizeof e.value);
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace

std::vector<Entry> decode_block(const PostingBlock& block) {
  BlockHeader h = parse_header(block);
  if (h.count == 0) return {};
  std::vector<Entry> out = decode_from_sync(block, h, 0);
  for (size_t i = 1; i < out.size(); ++i)
    if (out[i].interval.p <= out[i - 1].interval.p ||
        out[i].interval.q <= out[i - 1].interval.q)
      throw StorageError("posting block violates minimal-interval order");
  return out;
}

std::vector<Entry> decode_block_from(const PostingBlock& block, size_t index) {
  BlockHeader h = parse_header(block);
  if (h.count == 0 || index >= h.count) return {};
  size_t si = 0;
  for (size_t i = 0; i < h.syncs.size(); ++i)
    if (h.syncs[i].index <= index) si = i;
  std::vector<Entry> out = decode_from_sync(block, h, si);
  out.erase(out.begin(),
            out.begin() + static_cast<ptrdiff_t>(index - h.syncs[si].index));
  return out;
}

ListHopper::ListHopper(std::shared_ptr<const std::vector<Entry>> entries,
                       AccessCounter* counter)
    : entries_(std::move(entries)), counter_(counter) {}

size_t ListHopper::seek_start(Addr k) {
  return gallop(*entries_, k, hint_,
                [](const Entry& e) { return e.interval.p; });
}

size_t ListHopper::seek_end(Addr k) {
  return gallop(*entries_, k, hint_,
                [](const Entry& e) { return e.interval.q; });
}

Posting ListHopper::tau(Addr k) {
  if (counter_) ++counter_->calls;
  if (tau_cached_ && k == tau_key_) return tau_cache_;
  size_t i = seek_start(k);
  Posting r = i < entries_->size()
                  ? Posting{(*entries_)[i].interval, (*entries_)[i].value}
                  : Posting::infinite();
  if (i < entries_->size()) hint_ = i;
  tau_cached_ = true;
  tau_key_ = k;
  tau_cache_ = r;
  return r;
}

Posting ListHopper::rho(Addr k) {
  if (counter_) ++counter_->calls;
  if (rho_cached_ && k == rho_key_) return rho_cache_;
  size_t i = seek_end(k);
  Posting r = i < entries_->size()
                  ? Posting{(*entries_)[i].interval, (*entries_)[i].value}
                  : Posting::infinite();
  if (i < entries_->size()) hint_ = i;
  rho_cached_ = true;
  rho_key_ = k;
  rho_cache_ = r;
  return r;
}

Posting ListHopper::uat(Addr k) {
  if (counter_) ++counter_->calls;
  if (k == kPosInf) {
    return entries_->empty()
               ? Posting::before()
               : Posting{entries_->back().interval, entries_->back().value};
  }
  size_t i = gallop(*entries_, sat_add(k, 1), hint_,
                    [](const Entry& e) { return e.interval.p; });
  if (i == 0) return Posting::before();
  hint_ = i - 1;
  return {(*entries_)[i - 1].interval, (*entries_)[i - 1].value};
}

Posting ListHopper::ohr(Addr k) {
  if (counter_) ++counter_->calls;
  if (k == kPosInf) {
    return entries_->empty()
               ? Posting::before()
               : Posting{entries_->back().interval, entries_->back().value};
  }
  size_t i = gallop(*entries_, sat_add(k, 1), hint_,
                    [](const Entry& e) { return e.interval.q; });
  if (i == 0) return Posting::before();
  hint_ = i - 1;
  return {(*entries_)[i - 1].interval, (*entries_)[i - 1].value};
}

std::unique_ptr<Hopper> empty_hopper() {
  static const auto empty =
      std::make_shared<const std::vector<Entry>>();
  return std::make_unique<ListHopper>(empty);
}

}  // namespace warren
