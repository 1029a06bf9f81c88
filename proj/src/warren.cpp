#include "warren/warren.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <set>

#include "json.hpp"
#include "warren/featurizer.hpp"
#include "warren/tokenizer.hpp"

namespace warren {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'W', 'A', 'R', 'R', 'S', 'U', 'B', '1'};
constexpr int kManifestVersion = 1;

uint32_t crc_of(const uint8_t* data, size_t n) {
  return static_cast<uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(data),
            static_cast<uInt>(n)));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

// Whole-file helpers with fsync + rename so a crash leaves either the old
// file or the new one, never a torn mix.
void write_file_durably(const fs::path& path, const void* data, size_t n) {
  fs::path tmp = path;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw StorageError("cannot write " + tmp.string());
  const char* p = static_cast<const char*>(data);
  size_t off = 0;
  while (off < n) {
    ssize_t w = ::write(fd, p + off, n - off);
    if (w <= 0) {
      ::close(fd);
      throw StorageError("short write to " + tmp.string());
    }
    off += static_cast<size_t>(w);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw StorageError("fsync failed for " + tmp.string());
  }
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw StorageError("rename failed for " + path.string());
  int dfd = ::open(path.parent_path().c_str(), O_RDONLY);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

std::vector<uint8_t> read_file(const fs::path& path) {
  int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) throw StorageError("cannot read " + path.string());
  std::vector<uint8_t> out;
  uint8_t buf[1 << 16];
  for (;;) {
    ssize_t r = ::read(fd, buf, sizeof buf);
    if (r < 0) {
      ::close(fd);
      throw StorageError("read failed for " + path.string());
    }
    if (r == 0) break;
    out.insert(out.end(), buf, buf + r);
  }
  ::close(fd);
  return out;
}

// ---- serialization ------------------------------------------------------

json extent_to_json(const ContentExtent& e) {
  json blocks = json::array();
  for (const std::string& b : e.blocks())
    blocks.push_back(json::binary(
        std::vector<uint8_t>(b.begin(), b.end())));
  return json{{"base", e.base()},
              {"raw", e.raw_size()},
              {"starts", e.token_starts()},
              {"ends", e.token_ends()},
              {"blocks", std::move(blocks)}};
}

ContentExtent extent_from_json(const json& j) {
  std::vector<std::string> blocks;
  for (const json& b : j.at("blocks")) {
    const auto& bin = b.get_binary();
    blocks.emplace_back(bin.begin(), bin.end());
  }
  return ContentExtent::from_parts(
      j.at("base").get<Addr>(), j.at("starts").get<std::vector<uint32_t>>(),
      j.at("ends").get<std::vector<uint32_t>>(), j.at("raw").get<size_t>(),
      std::move(blocks));
}

}  // namespace

// ---- Subindex -----------------------------------------------------------

std::vector<Feature> Subindex::features() const {
  std::vector<Feature> out;
  out.reserve(slots_.size());
  for (const auto& [f, slot] : slots_) out.push_back(f);
  return out;
}

std::shared_ptr<const std::vector<Entry>> Subindex::list(Feature f) const {
  auto it = slots_.find(f);
  if (it == slots_.end()) return nullptr;
  std::lock_guard lock(decode_mu_);
  if (!it->second.decoded)
    it->second.decoded = std::make_shared<const std::vector<Entry>>(
        decode_block(it->second.block));
  return it->second.decoded;
}

double Subindex::max_value(Feature f) const {
  auto it = slots_.find(f);
  return it == slots_.end() ? 0.0 : it->second.max_value;
}

namespace {

// Annotation conflict rules shared by transactions, merges, and snapshot
// materialization: innermost wins, equal intervals take the later value.
// Erasure spans (feature 0) invert nesting — the widest span must survive
// so coverage is never lost.
void add_entry(std::vector<Entry>& list, Feature f, Interval iv, Value v) {
  bool outermost = (f == kEraseFeature);
  // locate first entry with end >= iv.q
  auto pos = std::lower_bound(
      list.begin(), list.end(), iv.q,
      [](const Entry& e, Addr q) { return e.interval.q < q; });
  if (pos != list.end() && pos->interval == iv) {
    if (!outermost) pos->value = v;  // later write wins
    return;
  }
  if (pos != list.end() && pos->interval.p <= iv.p) {
    // the new interval nests inside *pos
    if (!outermost) {
      // innermost wins: evict every entry the newcomer nests inside
      auto last = pos;
      while (last != list.end() && last->interval.p <= iv.p) ++last;
      auto at = list.erase(pos, last);
      list.insert(at, {iv, v});
    }
    return;
  }
  // evict entries nesting inside the newcomer (outermost rule) or let them
  // win (innermost rule)
  auto lo = std::lower_bound(
      list.begin(), list.end(), iv.p,
      [](const Entry& e, Addr p) { return e.interval.p < p; });
  auto hi = lo;
  while (hi != list.end() && hi->interval.q <= iv.q) ++hi;
  if (lo != hi) {
    if (!outermost) return;  // an innermost entry already covers this ground
    lo = list.erase(lo, hi);
    list.insert(lo, {iv, v});
    return;
  }
  list.insert(lo, {iv, v});
}

// Drops entries contained in any erasure span. Both inputs are in
// minimal-interval order.
std::vector<Entry> filter_erased(std::vector<Entry> entries,
                                 const std::vector<Entry>& erased) {
  if (erased.empty()) return entries;
  std::vector<Entry> out;
  out.reserve(entries.size());
  size_t ei = 0;
  for (const Entry& e : entries) {
    while (ei < erased.size() && erased[ei].interval.q < e.interval.q) ++ei;
    if (ei < erased.size() && erased[ei].interval.p <= e.interval.p) continue;
    out.push_back(e);
  }
  return out;
}

}  // namespace

// ---- Snapshot -----------------------------------------------------------

Snapshot::Snapshot(std::vector<std::shared_ptr<const Subindex>> subs,
                   uint64_t high_water)
    : subs_(std::move(subs)), high_water_(high_water) {
  for (const auto& s : subs_)
    for (const ContentExtent& e : s->extents()) extents_.push_back(&e);
  std::sort(extents_.begin(), extents_.end(),
            [](const ContentExtent* a, const ContentExtent* b) {
              return a->base() < b->base();
            });
}

std::shared_ptr<const std::vector<Entry>> Snapshot::list(Feature f) const {
  {
    std::lock_guard lock(mu_);
    auto it = lists_.find(f);
    if (it != lists_.end()) return it->second;
  }
  std::vector<Entry> merged;
  for (const auto& s : subs_) {
    auto part = s->list(f);
    if (!part) continue;
    for (const Entry& e : *part) add_entry(merged, f, e.interval, e.value);
  }
  if (f != kEraseFeature && !merged.empty())
    merged = filter_erased(std::move(merged), *list(kEraseFeature));
  auto shared = std::make_shared<const std::vector<Entry>>(std::move(merged));
  std::lock_guard lock(mu_);
  auto [it, inserted] = lists_.emplace(f, shared);
  return it->second;  // keep the first materialization on a race
}

std::unique_ptr<Hopper> Snapshot::hopper(Feature f,
                                         AccessCounter* counter) const {
  return std::make_unique<ListHopper>(list(f), counter);
}

FeatureStats Snapshot::feature_stats(Feature f) const {
  auto entries = list(f);
  FeatureStats st;
  st.count = entries->size();
  for (const Entry& e : *entries) {
    st.max_value = std::max(st.max_value, e.value);
    st.sum_value += e.value;
  }
  return st;
}

bool Snapshot::covered(Addr p, Addr q) const {
  if (p > q) return false;
  Addr cur = p;
  // last extent starting at or before cur
  auto it = std::upper_bound(extents_.begin(), extents_.end(), cur,
                             [](Addr a, const ContentExtent* e) {
                               return a < e->base();
                             });
  if (it == extents_.begin()) return false;
  --it;
  while (true) {
    if ((*it)->base() > cur || (*it)->last() < cur) return false;
    if ((*it)->last() >= q) return true;
    cur = (*it)->last() + 1;
    ++it;
    if (it == extents_.end()) return false;
  }
}

bool Snapshot::translatable(Addr p, Addr q) const {
  if (!covered(p, q)) return false;
  const std::vector<Entry>& erased = *list(kEraseFeature);
  auto it = std::lower_bound(
      erased.begin(), erased.end(), p,
      [](const Entry& e, Addr a) { return e.interval.q < a; });
  return it == erased.end() || it->interval.p > q;
}

std::string Snapshot::translate(Addr p, Addr q) const {
  if (p > q) throw UsageError("translate: start past end");
  if (!translatable(p, q))
    throw StorageError("translate: interval crosses a gap or erased span");
  std::string raw;
  Addr cur = p;
  auto it = std::upper_bound(extents_.begin(), extents_.end(), cur,
                             [](Addr a, const ContentExtent* e) {
                               return a < e->base();
                             });
  --it;
  while (cur <= q) {
    Addr stop = std::min(q, (*it)->last());
    if (!raw.empty()) raw.push_back('\n');
    raw += (*it)->raw_slice(cur, stop);
    cur = stop + 1;
    ++it;
  }
  return render_content(raw);
}

// ---- commit log ---------------------------------------------------------

namespace {

class CommitLog {
 public:
  CommitLog(const fs::path& path, FaultInjector* injector)
      : path_(path), injector_(injector) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd_ < 0) throw StorageError("cannot open log " + path.string());
  }
  ~CommitLog() {
    if (fd_ >= 0) ::close(fd_);
  }

  // Length-prefixed, checksummed record. Throws StorageError when the
  // injected crash point is reached; whatever prefix was "written" before
  // the cut stays in the file, like a real torn tail.
  void append(const json& payload) {
    std::vector<uint8_t> body = json::to_cbor(payload);
    std::vector<uint8_t> rec;
    put_u32(rec, static_cast<uint32_t>(body.size()));
    put_u32(rec, crc_of(body.data(), body.size()));
    rec.insert(rec.end(), body.begin(), body.end());
    std::lock_guard lock(mu_);
    size_t allowed = rec.size();
    if (injector_->tripped.load())
      throw StorageError("log unavailable after simulated crash");
    if (injector_->budget.load() >= 0) {
      int64_t b = injector_->budget.load();
      allowed = std::min<size_t>(rec.size(), static_cast<size_t>(b));
      injector_->budget.store(b - static_cast<int64_t>(allowed));
    }
    size_t off = 0;
    while (off < allowed) {
      ssize_t w = ::write(fd_, rec.data() + off, allowed - off);
      if (w <= 0) throw StorageError("log write failed");
      off += static_cast<size_t>(w);
    }
    if (allowed < rec.size()) {
      injector_->tripped.store(true);
      throw StorageError("simulated crash during log write");
    }
    if (::fsync(fd_) != 0) throw StorageError("log fsync failed");
  }

 private:
  fs::path path_;
  FaultInjector* injector_;
  int fd_ = -1;
  std::mutex mu_;
};

}  // namespace

// ---- Engine -------------------------------------------------------------

class Engine {
 public:
  static std::shared_ptr<Engine> create(const fs::path& dir, Mode mode);
  static std::shared_ptr<Engine> open(const fs::path& dir);

  Mode mode() const { return mode_; }
  const fs::path& dir() const { return dir_; }
  FaultInjector& injector() { return injector_; }

  SnapshotPtr snapshot() {
    std::lock_guard lock(mu_);
    uint64_t high = 0;
    for (const auto& s : committed_) high = std::max(high, s->seq_hi());
    return std::make_shared<Snapshot>(committed_, high);
  }

  // Sequence number and permanent interval assignment; the only state a
  // writer needs the global lock for. Advances even if the transaction
  // later aborts — the interval becomes a gap.
  std::pair<uint64_t, Addr> assign(size_t tokens) {
    std::lock_guard lock(mu_);
    uint64_t seq = next_seq_++;
    Addr base = next_addr_;
    next_addr_ += static_cast<Addr>(tokens);
    inflight_.insert(seq);
    return {seq, base};
  }

  // An assigned sequence number stops being in flight once its unit is
  // published or its transaction aborts. Merges never reach past the lowest
  // in-flight number, so a merged range can only swallow sequence numbers
  // that are either inside it or permanently aborted — which is what log
  // replay assumes.
  void release_seq(uint64_t seq) {
    std::lock_guard lock(mu_);
    inflight_.erase(seq);
  }

  void log_ready(const json& payload) { log_->append(payload); }
  void log_commit(uint64_t seq) {
    log_->append(json{{"t", "commit"}, {"seq", seq}});
  }

  void publish(std::shared_ptr<const Subindex> sub) {
    std::lock_guard lock(mu_);
    auto it = std::lower_bound(
        committed_.begin(), committed_.end(), sub->seq_lo(),
        [](const std::shared_ptr<const Subindex>& s, uint64_t seq) {
          return s->seq_lo() < seq;
        });
    for (uint64_t s = sub->seq_lo(); s <= sub->seq_hi(); ++s)
      inflight_.erase(s);
    committed_.insert(it, std::move(sub));
  }

  // Static mode admits one transaction at a time.
  std::unique_lock<std::mutex> exclusive_txn() {
    return std::unique_lock(static_txn_mu_);
  }

  void write_static_unit(std::shared_ptr<const Subindex> sub, json payload);
  bool merge_step();
  size_t gc_step();

  // Builds an immutable subindex from a ready-record payload.
  static std::shared_ptr<Subindex> build_subindex(const json& payload);

 private:
  Engine() = default;
  void write_manifest();
  void load_manifest_and_log();

  fs::path dir_;
  Mode mode_ = Mode::kDynamic;
  std::mutex mu_;
  uint64_t next_seq_ = 1;
  Addr next_addr_ = 0;
  std::vector<std::shared_ptr<const Subindex>> committed_;
  struct Retired {
    std::shared_ptr<const Subindex> sub;
    fs::path file;  // empty for log-backed units
  };
  std::vector<Retired> retired_;
  std::set<uint64_t> inflight_;  // assigned, not yet published or aborted
  std::map<const Subindex*, fs::path> files_;  // file-backed subindexes
  std::unique_ptr<CommitLog> log_;
  FaultInjector injector_;
  std::mutex static_txn_mu_;
  std::mutex merge_mu_;
  uint64_t file_counter_ = 0;
};

std::shared_ptr<Subindex> Engine::build_subindex(const json& payload) {
  auto sub = std::make_shared<Subindex>();
  sub->seq_lo_ = payload.at("seq_lo").get<uint64_t>();
  sub->seq_hi_ = payload.at("seq_hi").get<uint64_t>();
  for (const json& e : payload.at("extents"))
    sub->extents_.push_back(extent_from_json(e));
  for (const json& f : payload.at("features")) {
    Subindex::FeatureSlot slot;
    const auto& bin = f.at(1).get_binary();
    slot.block.bytes.assign(bin.begin(), bin.end());
    slot.max_value = f.at(2).get<double>();
    sub->slots_.emplace(f.at(0).get<Feature>(), std::move(slot));
  }
  return sub;
}

namespace {

json subindex_to_json(const Subindex& sub) {
  json extents = json::array();
  for (const ContentExtent& e : sub.extents())
    extents.push_back(extent_to_json(e));
  json features = json::array();
  for (Feature f : sub.features()) {
    auto entries = sub.list(f);
    PostingBlock block = encode_block(*entries);
    features.push_back(json::array(
        {f, json::binary(std::move(block.bytes)), sub.max_value(f)}));
  }
  return json{{"seq_lo", sub.seq_lo()},
              {"seq_hi", sub.seq_hi()},
              {"extents", std::move(extents)},
              {"features", std::move(features)}};
}

void write_subindex_file(const fs::path& path, const json& payload) {
  std::vector<uint8_t> body = json::to_cbor(payload);
  std::vector<uint8_t> file(kMagic, kMagic + sizeof kMagic);
  put_u32(file, crc_of(body.data(), body.size()));
  file.insert(file.end(), body.begin(), body.end());
  write_file_durably(path, file.data(), file.size());
}

std::shared_ptr<Subindex> load_subindex_file(const fs::path& path) {
  std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() < sizeof kMagic + 4 ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw StorageError("bad subindex file " + path.string());
  uint32_t crc = get_u32(bytes.data() + sizeof kMagic);
  const uint8_t* body = bytes.data() + sizeof kMagic + 4;
  size_t n = bytes.size() - sizeof kMagic - 4;
  if (crc_of(body, n) != crc)
    throw StorageError("checksum mismatch in " + path.string());
  return Engine::build_subindex(json::from_cbor(body, body + n));
}

}  // namespace

void Engine::write_manifest() {
  json subs = json::array();
  {
    std::lock_guard lock(mu_);
    for (const auto& s : committed_) {
      auto it = files_.find(s.get());
      if (it == files_.end()) continue;  // log-backed; replayed at open
      subs.push_back(json{{"file", it->second.filename().string()},
                          {"seq_lo", s->seq_lo()},
                          {"seq_hi", s->seq_hi()}});
    }
  }
  json m{{"version", kManifestVersion},
         {"mode", mode_ == Mode::kDynamic ? "dynamic" : "static"},
         {"subindexes", std::move(subs)}};
  std::string text = m.dump(2);
  write_file_durably(dir_ / "manifest.json", text.data(), text.size());
}

std::shared_ptr<Engine> Engine::create(const fs::path& dir, Mode mode) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (fs::exists(dir / "manifest.json"))
    throw UsageError("index already exists at " + dir.string());
  auto e = std::shared_ptr<Engine>(new Engine);
  e->dir_ = dir;
  e->mode_ = mode;
  e->write_manifest();
  if (mode == Mode::kDynamic)
    e->log_ = std::make_unique<CommitLog>(dir / "log", &e->injector_);
  return e;
}

std::shared_ptr<Engine> Engine::open(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json"))
    throw UsageError("no index at " + dir.string());
  auto e = std::shared_ptr<Engine>(new Engine);
  e->dir_ = dir;
  e->load_manifest_and_log();
  if (e->mode_ == Mode::kDynamic)
    e->log_ = std::make_unique<CommitLog>(dir / "log", &e->injector_);
  return e;
}

void Engine::load_manifest_and_log() {
  std::vector<uint8_t> mtext = read_file(dir_ / "manifest.json");
  json m = json::parse(mtext.begin(), mtext.end());
  if (m.at("version").get<int>() != kManifestVersion)
    throw StorageError("unsupported index format version");
  mode_ = m.at("mode").get<std::string>() == "static" ? Mode::kStatic
                                                      : Mode::kDynamic;
  // ranges of sequence numbers already represented by subindex files
  std::vector<std::pair<uint64_t, uint64_t>> covered;
  for (const json& s : m.at("subindexes")) {
    fs::path file = dir_ / s.at("file").get<std::string>();
    auto sub = load_subindex_file(file);
    files_.emplace(sub.get(), file);
    covered.emplace_back(sub->seq_lo(), sub->seq_hi());
    committed_.push_back(std::move(sub));
    next_seq_ = std::max(next_seq_, covered.back().second + 1);
  }
  for (const auto& s : committed_)
    for (const ContentExtent& e : s->extents())
      next_addr_ = std::max(next_addr_, e.last() + 1);
  auto is_covered = [&](uint64_t seq) {
    for (auto [lo, hi] : covered)
      if (lo <= seq && seq <= hi) return true;
    return false;
  };

  // Log replay: ready records stage units (and account their address
  // intervals — aborted ones stay as gaps); commit records publish. A
  // checksum or length failure marks a torn tail and ends the scan.
  std::map<uint64_t, json> staged;
  if (fs::exists(dir_ / "log")) {
    std::vector<uint8_t> log = read_file(dir_ / "log");
    size_t pos = 0;
    while (pos + 8 <= log.size()) {
      uint32_t len = get_u32(log.data() + pos);
      uint32_t crc = get_u32(log.data() + pos + 4);
      if (pos + 8 + len > log.size()) break;  // torn tail
      const uint8_t* body = log.data() + pos + 8;
      if (crc_of(body, len) != crc) break;  // torn or corrupt; drop the rest
      json rec;
      try {
        rec = json::from_cbor(body, body + len);
      } catch (const json::exception&) {
        break;
      }
      pos += 8 + len;
      uint64_t seq = rec.at("seq").get<uint64_t>();
      std::string type = rec.at("t").get<std::string>();
      if (type == "ready") {
        next_seq_ = std::max(next_seq_, seq + 1);
        next_addr_ = std::max(
            next_addr_, rec.at("base").get<Addr>() +
                            static_cast<Addr>(rec.at("tokens").get<uint64_t>()));
        if (!is_covered(seq)) staged.emplace(seq, std::move(rec));
      } else if (type == "commit") {
        auto it = staged.find(seq);
        if (it != staged.end()) {
          committed_.push_back(build_subindex(it->second));
          staged.erase(it);
        }
      }
    }
  }
  std::sort(committed_.begin(), committed_.end(),
            [](const auto& a, const auto& b) {
              return a->seq_lo() < b->seq_lo();
            });
}

void Engine::write_static_unit(std::shared_ptr<const Subindex> sub,
                               json payload) {
  fs::path file =
      dir_ / ("sub-" + std::to_string(sub->seq_lo()) + "-" +
              std::to_string(sub->seq_hi()) + ".sub");
  write_subindex_file(file, payload);
  {
    std::lock_guard lock(mu_);
    files_.emplace(sub.get(), file);
  }
  publish(sub);
  write_manifest();
}

bool Engine::merge_step() {
  std::lock_guard merge_lock(merge_mu_);
  // Tier by how many sequence numbers a subindex covers; merge the oldest
  // run of 8 tier-mates adjacent in the committed order.
  constexpr size_t kFanIn = 8;
  auto tier_of = [](const Subindex& s) {
    uint64_t n = s.seq_hi() - s.seq_lo() + 1;
    int t = 0;
    while (n >= kFanIn) {
      n /= kFanIn;
      ++t;
    }
    return t;
  };
  std::vector<std::shared_ptr<const Subindex>> run;
  {
    std::lock_guard lock(mu_);
    // never merge across a sequence number that is still in flight: once a
    // merged range covers it, recovery would treat its log records as
    // already represented
    uint64_t fence =
        inflight_.empty() ? UINT64_MAX : *inflight_.begin();
    for (size_t i = 0; i < committed_.size(); ++i) {
      if (committed_[i]->seq_hi() >= fence) break;
      size_t j = i;
      int tier = tier_of(*committed_[i]);
      while (j < committed_.size() && committed_[j]->seq_hi() < fence &&
             tier_of(*committed_[j]) == tier && j - i < kFanIn)
        ++j;
      if (j - i == kFanIn) {
        run.assign(committed_.begin() + i, committed_.begin() + j);
        break;
      }
      i = j - 1;
    }
  }
  if (run.empty()) return false;

  // Fold the run outside the global lock; sources are immutable.
  auto merged = std::make_shared<Subindex>();
  merged->seq_lo_ = run.front()->seq_lo();
  merged->seq_hi_ = run.back()->seq_hi();
  std::map<Feature, std::vector<Entry>> lists;
  for (const auto& s : run)
    for (Feature f : s->features())
      for (const Entry& e : *s->list(f))
        add_entry(lists[f], f, e.interval, e.value);
  std::vector<Entry> erased;
  if (auto it = lists.find(kEraseFeature); it != lists.end())
    erased = it->second;
  for (auto& [f, entries] : lists) {
    // erased material is physically dropped; the feature-0 spans survive
    // because they may cover content in older subindexes
    if (f != kEraseFeature) entries = filter_erased(std::move(entries), erased);
    if (entries.empty()) continue;
    Subindex::FeatureSlot slot;
    slot.block = encode_block(entries);
    for (const Entry& e : entries)
      slot.max_value = std::max(slot.max_value, e.value);
    merged->slots_.emplace(f, std::move(slot));
  }
  auto span_erased = [&](const ContentExtent& e) {
    for (const Entry& er : erased)
      if (er.interval.p <= e.base() && e.last() <= er.interval.q) return true;
    return false;
  };
  for (const auto& s : run)
    for (const ContentExtent& e : s->extents())
      if (!span_erased(e)) merged->extents_.push_back(e);
  std::sort(merged->extents_.begin(), merged->extents_.end(),
            [](const ContentExtent& a, const ContentExtent& b) {
              return a.base() < b.base();
            });

  fs::path file;
  {
    std::lock_guard lock(mu_);
    file = dir_ / ("sub-" + std::to_string(merged->seq_lo_) + "-" +
                   std::to_string(merged->seq_hi_) + "." +
                   std::to_string(file_counter_++) + ".sub");
  }
  write_subindex_file(file, subindex_to_json(*merged));

  {
    std::lock_guard lock(mu_);
    // remove the run members by identity: a commit with an in-flight
    // sequence number may have been inserted between them meanwhile
    for (const auto& s : run)
      if (std::find(committed_.begin(), committed_.end(), s) ==
          committed_.end())
        return false;  // raced; the new file is left orphaned
    for (const auto& s : run) {
      auto fit = files_.find(s.get());
      retired_.push_back({s, fit == files_.end() ? fs::path{} : fit->second});
      if (fit != files_.end()) files_.erase(fit);
      committed_.erase(
          std::find(committed_.begin(), committed_.end(), s));
    }
    auto at = std::lower_bound(
        committed_.begin(), committed_.end(), merged->seq_lo_,
        [](const std::shared_ptr<const Subindex>& s, uint64_t seq) {
          return s->seq_lo() < seq;
        });
    committed_.insert(at, merged);
    files_.emplace(merged.get(), file);
  }
  write_manifest();
  return true;
}

size_t Engine::gc_step() {
  std::vector<fs::path> doomed;
  size_t freed = 0;
  {
    std::lock_guard lock(mu_);
    for (auto it = retired_.begin(); it != retired_.end();) {
      if (it->sub.use_count() == 1) {
        if (!it->file.empty()) doomed.push_back(it->file);
        it = retired_.erase(it);
        ++freed;
      } else {
        ++it;
      }
    }
  }
  for (const fs::path& f : doomed) {
    std::error_code ec;
    fs::remove(f, ec);
  }
  return freed;
}

// ---- Warren handle ------------------------------------------------------

struct Warren::Txn {
  ContentBuilder builder{0};
  struct Pending {
    Feature f;
    Interval iv;
    Value v;
    bool priv;  // interval is in the transaction's private address space
  };
  std::vector<Pending> anns;
  std::vector<Interval> erases;  // always global addresses
  bool ready_ok = false;
  uint64_t seq = 0;
  Addr base = 0;
  std::shared_ptr<Subindex> unit;
  std::unique_lock<std::mutex> static_slot;
};

Warren::~Warren() {
  // a transaction dropped between ready and commit/abort must not pin the
  // merge fence forever
  if (txn_ && txn_->ready_ok && engine_) engine_->release_seq(txn_->seq);
}
Warren::Warren(Warren&&) noexcept = default;
Warren& Warren::operator=(Warren&&) noexcept = default;

Warren Warren::create(const fs::path& dir, Mode mode) {
  Warren w;
  w.engine_ = Engine::create(dir, mode);
  return w;
}

Warren Warren::open(const fs::path& dir) {
  Warren w;
  w.engine_ = Engine::open(dir);
  return w;
}

Warren Warren::clone() const {
  Warren w;
  w.engine_ = engine_;
  return w;
}

void Warren::start() {
  if (snapshot_) throw UsageError("start: snapshot already held");
  snapshot_ = engine_->snapshot();
}

void Warren::end() {
  if (!snapshot_) throw UsageError("end: no snapshot held");
  if (txn_) throw UsageError("end: transaction still open");
  snapshot_.reset();
}

SnapshotPtr Warren::snapshot() const {
  if (!snapshot_) throw UsageError("no snapshot; call start() first");
  return snapshot_;
}

void Warren::transaction() {
  if (!snapshot_) throw UsageError("transaction: no snapshot held");
  if (txn_) throw UsageError("transaction: one already open");
  auto t = std::make_unique<Txn>();
  if (engine_->mode() == Mode::kStatic) t->static_slot = engine_->exclusive_txn();
  txn_ = std::move(t);
}

Interval Warren::append(std::string_view text) {
  if (!txn_) throw UsageError("append: no open transaction");
  if (txn_->ready_ok) throw UsageError("append: transaction already ready");
  std::vector<Token> tokens = tokenize(text);
  Interval iv = txn_->builder.append(text, tokens);
  for (size_t i = 0; i < tokens.size(); ++i) {
    Feature f = json_featurize(tokens[i]);
    if (f == 0) continue;  // structural tokens are not auto-indexed
    Addr at = iv.p + static_cast<Addr>(i);
    txn_->anns.push_back({f, {at, at}, 0.0, true});
  }
  return iv;
}

void Warren::annotate(Feature f, Interval iv, Value v) {
  if (!txn_) throw UsageError("annotate: no open transaction");
  if (txn_->ready_ok) throw UsageError("annotate: transaction already ready");
  if (f == kEraseFeature) throw UsageError("annotate: feature 0 is reserved");
  if (iv.p > iv.q || !iv.finite())
    throw UsageError("annotate: malformed interval");
  bool priv = !txn_->builder.empty() && iv.p >= 0 &&
              iv.q < txn_->builder.next_address();
  txn_->anns.push_back({f, iv, v, priv});
}

void Warren::annotate(std::string_view feature_text, Interval iv, Value v) {
  annotate(featurize(feature_text), iv, v);
}

void Warren::erase(Interval iv) {
  if (!txn_) throw UsageError("erase: no open transaction");
  if (txn_->ready_ok) throw UsageError("erase: transaction already ready");
  if (iv.p > iv.q || !iv.finite()) throw UsageError("erase: malformed interval");
  if (!snapshot_->covered(iv.p, iv.q))
    throw UsageError("erase: interval outside committed content");
  txn_->erases.push_back(iv);
}

bool Warren::ready() {
  if (!txn_) throw UsageError("ready: no open transaction");
  if (txn_->ready_ok) throw UsageError("ready: already ready");
  auto [seq, base] = engine_->assign(txn_->builder.token_count());
  txn_->seq = seq;
  txn_->base = base;

  auto sub = std::make_shared<Subindex>();
  sub->seq_lo_ = sub->seq_hi_ = seq;
  if (!txn_->builder.empty())
    sub->extents_.push_back(txn_->builder.freeze(base));
  std::map<Feature, std::vector<Entry>> lists;
  for (const Txn::Pending& a : txn_->anns) {
    Interval iv = a.iv;
    if (a.priv) iv = {iv.p + base, iv.q + base};
    add_entry(lists[a.f], a.f, iv, a.v);
  }
  for (const Interval& iv : txn_->erases)
    add_entry(lists[kEraseFeature], kEraseFeature, iv, 0.0);
  for (auto& [f, entries] : lists) {
    if (entries.empty()) continue;
    Subindex::FeatureSlot slot;
    slot.block = encode_block(entries);
    for (const Entry& e : entries)
      slot.max_value = std::max(slot.max_value, e.value);
    sub->slots_.emplace(f, std::move(slot));
  }
  txn_->unit = std::move(sub);

  if (engine_->mode() == Mode::kDynamic) {
    json payload = subindex_to_json(*txn_->unit);
    payload["t"] = "ready";
    payload["seq"] = seq;
    payload["base"] = base;
    payload["tokens"] = txn_->builder.token_count();
    try {
      engine_->log_ready(payload);
    } catch (const StorageError&) {
      engine_->release_seq(seq);
      txn_.reset();  // the assigned interval becomes a gap
      return false;
    }
  }
  txn_->ready_ok = true;
  return true;
}

Interval Warren::commit() {
  if (!txn_) throw UsageError("commit: no open transaction");
  if (!txn_->ready_ok) throw UsageError("commit: transaction not ready");
  std::shared_ptr<Subindex> unit = std::move(txn_->unit);
  uint64_t seq = txn_->seq;
  Interval extent{0, -1};  // nothing appended
  if (txn_->builder.token_count() > 0)
    extent = {txn_->base,
              txn_->base + static_cast<Addr>(txn_->builder.token_count()) - 1};
  if (engine_->mode() == Mode::kDynamic) {
    try {
      engine_->log_commit(seq);
    } catch (const StorageError&) {
      engine_->release_seq(seq);
      txn_.reset();  // recovery will resolve the ready record to aborted
      throw;
    }
    engine_->publish(std::move(unit));
  } else {
    json payload = subindex_to_json(*unit);
    engine_->write_static_unit(std::move(unit), std::move(payload));
  }
  txn_.reset();
  return extent;
}

void Warren::abort() {
  if (!txn_) throw UsageError("abort: no open transaction");
  if (txn_->ready_ok) engine_->release_seq(txn_->seq);
  txn_.reset();
}

bool Warren::merge_step() { return engine_->merge_step(); }
size_t Warren::gc_step() { return engine_->gc_step(); }
FaultInjector& Warren::fault_injector() { return engine_->injector(); }
const fs::path& Warren::dir() const { return engine_->dir(); }
Mode Warren::mode() const { return engine_->mode(); }

}  // namespace warren
