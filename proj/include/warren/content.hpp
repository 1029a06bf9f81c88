#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "warren/tokenizer.hpp"
#include "warren/types.hpp"

namespace warren {

// A contiguous token-addressed run of stored text. Raw bytes are kept in
// fixed-size deflate blocks with a per-block directory; a per-token byte
// offset table supports slicing an address interval back out.
class ContentExtent {
 public:
  static constexpr size_t kBlockSize = 4096;

  ContentExtent() = default;
  ContentExtent(Addr base, std::vector<uint32_t> token_starts,
                std::vector<uint32_t> token_ends, std::string_view raw);

  Addr base() const { return base_; }
  size_t token_count() const { return token_starts_.size(); }
  Addr last() const { return base_ + static_cast<Addr>(token_count()) - 1; }
  Interval interval() const { return {base_, last()}; }
  size_t raw_size() const { return raw_size_; }

  // Raw source bytes spanning tokens p..q inclusive, structural
  // noncharacters still in place. Precondition: base() <= p <= q <= last().
  std::string raw_slice(Addr p, Addr q) const;

  ContentExtent rebased(Addr new_base) const;

  // Serialization accessors.
  const std::vector<uint32_t>& token_starts() const { return token_starts_; }
  const std::vector<uint32_t>& token_ends() const { return token_ends_; }
  const std::vector<std::string>& blocks() const { return blocks_; }
  static ContentExtent from_parts(Addr base, std::vector<uint32_t> starts,
                                  std::vector<uint32_t> ends, size_t raw_size,
                                  std::vector<std::string> blocks);

 private:
  std::string decompress_range(size_t begin, size_t end) const;

  Addr base_ = 0;
  std::vector<uint32_t> token_starts_;  // byte offset of each token
  std::vector<uint32_t> token_ends_;    // one past each token's last byte
  size_t raw_size_ = 0;
  std::vector<std::string> blocks_;  // deflate-compressed kBlockSize chunks
};

// Builder for one extent: appends accumulate at increasing addresses
// starting at `base`. A single newline separates successive appends in the
// stored bytes so cross-append translation stays readable.
class ContentBuilder {
 public:
  explicit ContentBuilder(Addr base = 0) : base_(base) {}

  // Assigns the text's tokens the next consecutive addresses. Throws
  // UsageError if the text has no tokens.
  Interval append(std::string_view text, const std::vector<Token>& tokens);
  Interval append(std::string_view text);

  size_t token_count() const { return token_starts_.size(); }
  Addr next_address() const {
    return base_ + static_cast<Addr>(token_count());
  }
  bool empty() const { return token_starts_.empty(); }

  // Raw slice over the in-progress buffer (same contract as
  // ContentExtent::raw_slice).
  std::string raw_slice(Addr p, Addr q) const;

  ContentExtent freeze(Addr final_base) const;

 private:
  Addr base_;
  std::string buffer_;
  std::vector<uint32_t> token_starts_;
  std::vector<uint32_t> token_ends_;
};

// Renders stored bytes back to source text: structural noncharacters are
// replaced by the characters they encode.
std::string render_content(std::string_view raw);

}  // namespace warren
