#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nerloop/annotations.h"

namespace nerloop {

// Line-delimited JSON dataset, one paragraph per line:
//
//   {"text": ...,
//    "tokens": [{"text", "start", "end", "id"}, ...],
//    "spans":  [{"start", "end", "token_start", "token_end", "label"}, ...]}
//
// Offsets count Unicode scalar values. Keys are emitted in exactly this
// order. When `with_meta` is set a trailing "meta" object carries doc_id,
// para_index and provenance; records without it read back as gold with an
// empty doc_id and para_index 0.
struct DatasetOptions {
  bool with_meta = false;
};

nlohmann::ordered_json to_json(const LabeledParagraph& lp,
                               const DatasetOptions& options = {});
nlohmann::ordered_json to_json(const Span& span);
nlohmann::ordered_json to_json(const Token& token);

// Strict parse: unknown or missing keys and invariant violations throw
// FormatError (with `line` when non-zero).
LabeledParagraph labeled_from_json(const nlohmann::json& record,
                                   std::size_t line = 0);
Span span_from_json(const nlohmann::json& j);

std::string to_jsonl_record(const LabeledParagraph& lp,
                            const DatasetOptions& options = {});
LabeledParagraph parse_jsonl_record(std::string_view line,
                                    std::size_t line_no = 0);

void write_dataset(std::span<const LabeledParagraph> lps,
                   const std::string& path, const DatasetOptions& options = {});
std::vector<LabeledParagraph> read_dataset(const std::string& path);

// Sentence boundaries as token ranges [first, last). A sentence ends after a
// '.', '!' or '?' token that is followed by whitespace and then a token
// starting with an uppercase letter, unless that boundary falls inside a span.
std::vector<std::pair<std::size_t, std::size_t>> split_sentences(
    const LabeledParagraph& lp);

// RFC 4180 quoting: fields containing ',', '"' or a newline are quoted and
// embedded quotes doubled.
std::string csv_field(std::string_view field);

// Two-column CSV with header "tokens,labels", one sentence per line; each
// column holds space-separated tokens / IOB labels.
void write_iob_csv(std::span<const LabeledParagraph> lps, std::ostream& out);
void export_iob_csv(std::span<const LabeledParagraph> lps,
                    const std::string& path);

}  // namespace nerloop
