#include "warren/content.hpp"

#include <zlib.h>

#include <cstring>

namespace warren {

namespace {

std::string deflate_block(std::string_view raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string out(bound, '\0');
  if (compress(reinterpret_cast<Bytef*>(out.data()), &bound,
               reinterpret_cast<const Bytef*>(raw.data()),
               static_cast<uLong>(raw.size())) != Z_OK)
    throw StorageError("content block compression failed");
  out.resize(bound);
  return out;
}

std::string inflate_block(std::string_view block, size_t raw_size) {
  std::string out(raw_size, '\0');
  uLongf len = static_cast<uLongf>(raw_size);
  if (uncompress(reinterpret_cast<Bytef*>(out.data()), &len,
                 reinterpret_cast<const Bytef*>(block.data()),
                 static_cast<uLong>(block.size())) != Z_OK ||
      len != raw_size)
    throw StorageError("content block corrupt");
  return out;
}

}  // namespace

ContentExtent::ContentExtent(Addr base, std::vector<uint32_t> token_starts,
                             std::vector<uint32_t> token_ends,
                             std::string_view raw)
    : base_(base),
      token_starts_(std::move(token_starts)),
      token_ends_(std::move(token_ends)),
      raw_size_(raw.size()) {
  for (size_t off = 0; off < raw.size(); off += kBlockSize)
    blocks_.push_back(
        deflate_block(raw.substr(off, std::min(kBlockSize, raw.size() - off))));
}

ContentExtent ContentExtent::from_parts(Addr base,
                                        std::vector<uint32_t> starts,
                                        std::vector<uint32_t> ends,
                                        size_t raw_size,
                                        std::vector<std::string> blocks) {
  ContentExtent e;
  e.base_ = base;
  e.token_starts_ = std::move(starts);
  e.token_ends_ = std::move(ends);
  e.raw_size_ = raw_size;
  e.blocks_ = std::move(blocks);
  return e;
}

std::string ContentExtent::decompress_range(size_t begin, size_t end) const {
  size_t first_block = begin / kBlockSize;
  size_t last_block = end == begin ? first_block : (end - 1) / kBlockSize;
  std::string bytes;
  for (size_t b = first_block; b <= last_block && b < blocks_.size(); ++b) {
    size_t block_raw = std::min(kBlockSize, raw_size_ - b * kBlockSize);
    bytes += inflate_block(blocks_[b], block_raw);
  }
  size_t base_off = first_block * kBlockSize;
  return bytes.substr(begin - base_off, end - begin);
}

std::string ContentExtent::raw_slice(Addr p, Addr q) const {
  size_t i = static_cast<size_t>(p - base_);
  size_t j = static_cast<size_t>(q - base_);
  return decompress_range(token_starts_[i], token_ends_[j]);
}

ContentExtent ContentExtent::rebased(Addr new_base) const {
  ContentExtent e = *this;
  e.base_ = new_base;
  return e;
}

Interval ContentBuilder::append(std::string_view text,
                                const std::vector<Token>& tokens) {
  if (tokens.empty()) throw UsageError("append: text has no tokens");
  if (!buffer_.empty()) buffer_.push_back('\n');
  uint32_t origin = static_cast<uint32_t>(buffer_.size());
  Addr first = next_address();
  buffer_.append(text);
  for (const Token& t : tokens) {
    token_starts_.push_back(origin + static_cast<uint32_t>(t.offset));
    token_ends_.push_back(origin + static_cast<uint32_t>(t.offset + t.length));
  }
  return {first, first + static_cast<Addr>(tokens.size()) - 1};
}

Interval ContentBuilder::append(std::string_view text) {
  return append(text, tokenize(text));
}

std::string ContentBuilder::raw_slice(Addr p, Addr q) const {
  size_t i = static_cast<size_t>(p - base_);
  size_t j = static_cast<size_t>(q - base_);
  return buffer_.substr(token_starts_[i], token_ends_[j] - token_starts_[i]);
}

ContentExtent ContentBuilder::freeze(Addr final_base) const {
  return ContentExtent(final_base, token_starts_, token_ends_, buffer_);
}

std::string render_content(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  size_t i = 0;
  while (i < raw.size()) {
    unsigned char c = static_cast<unsigned char>(raw[i]);
    // Structural noncharacters are U+FDD0..U+FDD7: EF B7 90..97 in UTF-8.
    if (c == 0xEF && i + 2 < raw.size() &&
        static_cast<unsigned char>(raw[i + 1]) == 0xB7) {
      unsigned char third = static_cast<unsigned char>(raw[i + 2]);
      if (third >= 0x90 && third <= 0x97) {
        out += structural_render(static_cast<StructuralKind>(third - 0x90));
        i += 3;
        continue;
      }
    }
    out.push_back(raw[i]);
    ++i;
  }
  return out;
}

}  // namespace warren
