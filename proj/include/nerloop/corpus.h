#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nerloop {

struct Paragraph {
  std::string doc_id;
  std::size_t para_index = 0;
  std::string text;

  friend bool operator==(const Paragraph&, const Paragraph&) = default;
};

struct ParagraphKey {
  std::string doc_id;
  std::size_t para_index = 0;

  friend auto operator<=>(const ParagraphKey&, const ParagraphKey&) = default;
};

inline ParagraphKey key_of(const Paragraph& p) { return {p.doc_id, p.para_index}; }

struct Document {
  std::string doc_id;
  std::vector<std::string> paragraphs;
};

inline constexpr std::uint64_t kDefaultStreamSeed = 42;

// Reads the line-delimited corpus format: one JSON object per line with
// "doc_id" (string) and "paragraphs" (array of strings). Paragraphs whose
// text is blank after trimming are skipped but keep their original index.
// Throws FormatError with the offending line number.
std::vector<Paragraph> read_corpus(const std::string& path);

void write_corpus(const std::string& path, std::span<const Document> documents);

// Single-consumer stream over a fixed permutation of a corpus. The order is a
// Fisher-Yates shuffle of the file-order paragraph list under Rng(seed); the
// cursor is the only mutable state, so (corpus, seed, cursor) pins the
// stream position exactly.
class CorpusStream {
 public:
  CorpusStream(std::vector<Paragraph> paragraphs, std::uint64_t seed);

  // Next unconsumed paragraph, or nullopt at end of stream.
  std::optional<Paragraph> next();

  std::size_t cursor() const { return cursor_; }
  void seek(std::size_t cursor);
  std::size_t size() const { return order_.size(); }
  std::size_t remaining() const { return order_.size() - cursor_; }
  bool exhausted() const { return cursor_ >= order_.size(); }
  std::uint64_t seed() const { return seed_; }

  // True when the paragraph at this file position was already emitted.
  bool consumed(std::size_t file_index) const;

  const std::vector<Paragraph>& paragraphs() const { return *paragraphs_; }
  std::span<const std::size_t> order() const { return order_; }

 private:
  std::shared_ptr<const std::vector<Paragraph>> paragraphs_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> rank_;  // file index -> position in order_
  std::uint64_t seed_;
  std::size_t cursor_ = 0;
};

// read_corpus + stream; throws FormatError on an empty corpus.
CorpusStream load_corpus(const std::string& path,
                         std::uint64_t seed = kDefaultStreamSeed);

}  // namespace nerloop
