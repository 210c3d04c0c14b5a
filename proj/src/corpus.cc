#include "nerloop/corpus.h"

#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "nerloop/error.h"
#include "nerloop/rng.h"
#include "nerloop/unicode.h"

namespace nerloop {

namespace {

bool is_blank(std::string_view text) {
  for (const auto& c : decode_utf8(text)) {
    if (!is_space(c.cp)) return false;
  }
  return true;
}

}  // namespace

std::vector<Paragraph> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read corpus: " + path);

  std::vector<Paragraph> out;
  std::set<std::string> doc_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!record.is_object() || !record.contains("doc_id") ||
        !record.contains("paragraphs")) {
      throw FormatError("expected object with doc_id and paragraphs", line_no);
    }
    const auto& id = record["doc_id"];
    const auto& paras = record["paragraphs"];
    if (!id.is_string()) throw FormatError("doc_id must be a string", line_no);
    if (!paras.is_array())
      throw FormatError("paragraphs must be an array", line_no);
    const std::string doc_id = id.get<std::string>();
    if (!doc_ids.insert(doc_id).second)
      throw FormatError("duplicate doc_id '" + doc_id + "'", line_no);
    for (std::size_t i = 0; i < paras.size(); ++i) {
      if (!paras[i].is_string())
        throw FormatError("paragraph " + std::to_string(i) + " is not a string",
                          line_no);
      std::string text = paras[i].get<std::string>();
      if (is_blank(text)) continue;
      out.push_back({doc_id, i, std::move(text)});
    }
  }
  return out;
}

void write_corpus(const std::string& path, std::span<const Document> documents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus: " + path);
  for (const auto& doc : documents) {
    nlohmann::ordered_json record;
    record["doc_id"] = doc.doc_id;
    record["paragraphs"] = doc.paragraphs;
    out << record.dump() << '\n';
  }
}

CorpusStream::CorpusStream(std::vector<Paragraph> paragraphs, std::uint64_t seed)
    : paragraphs_(std::make_shared<const std::vector<Paragraph>>(
          std::move(paragraphs))),
      order_(paragraphs_->size()),
      rank_(paragraphs_->size()),
      seed_(seed) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order_);
  for (std::size_t pos = 0; pos < order_.size(); ++pos) rank_[order_[pos]] = pos;
}

std::optional<Paragraph> CorpusStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  return (*paragraphs_)[order_[cursor_++]];
}

void CorpusStream::seek(std::size_t cursor) {
  if (cursor > order_.size())
    throw std::out_of_range("stream cursor beyond corpus size");
  cursor_ = cursor;
}

bool CorpusStream::consumed(std::size_t file_index) const {
  return file_index < rank_.size() && rank_[file_index] < cursor_;
}

CorpusStream load_corpus(const std::string& path, std::uint64_t seed) {
  auto paragraphs = read_corpus(path);
  if (paragraphs.empty()) throw FormatError("corpus has no paragraphs: " + path);
  return CorpusStream(std::move(paragraphs), seed);
}

}  // namespace nerloop
