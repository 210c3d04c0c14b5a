#include "nerloop/dataset.h"

#include <fstream>
#include <initializer_list>
#include <stdexcept>

#include "nerloop/error.h"
#include "nerloop/unicode.h"

namespace nerloop {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json to_json(const Token& token) {
  ordered_json j;
  j["text"] = token.text;
  j["start"] = token.start;
  j["end"] = token.end;
  j["id"] = token.id;
  return j;
}

ordered_json to_json(const Span& span) {
  ordered_json j;
  j["start"] = span.start;
  j["end"] = span.end;
  j["token_start"] = span.token_start;
  j["token_end"] = span.token_end;
  j["label"] = span.label;
  return j;
}

ordered_json to_json(const LabeledParagraph& lp, const DatasetOptions& options) {
  ordered_json j;
  j["text"] = lp.text();
  j["tokens"] = ordered_json::array();
  for (const auto& t : lp.tokens) j["tokens"].push_back(to_json(t));
  j["spans"] = ordered_json::array();
  for (const auto& s : lp.spans) j["spans"].push_back(to_json(s));
  if (options.with_meta) {
    ordered_json meta;
    meta["doc_id"] = lp.paragraph.doc_id;
    meta["para_index"] = lp.paragraph.para_index;
    meta["provenance"] = to_string(lp.provenance);
    j["meta"] = std::move(meta);
  }
  return j;
}

namespace {

void expect_keys(const json& j, std::initializer_list<const char*> required,
                 std::initializer_list<const char*> optional,
                 const std::string& what, std::size_t line) {
  if (!j.is_object()) throw FormatError(what + " must be an object", line);
  for (const char* key : required) {
    if (!j.contains(key))
      throw FormatError(what + " is missing field '" + key + "'", line);
  }
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : required) known = known || item.key() == key;
    for (const char* key : optional) known = known || item.key() == key;
    if (!known)
      throw FormatError(what + " has unknown field '" + item.key() + "'", line);
  }
}

std::size_t get_index(const json& j, const char* key, const std::string& what,
                      std::size_t line) {
  const auto& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw FormatError(what + "." + key + " must be a nonnegative integer", line);
  return v.get<std::size_t>();
}

std::string get_string(const json& j, const char* key, const std::string& what,
                       std::size_t line) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw FormatError(what + "." + key + " must be a string", line);
  return v.get<std::string>();
}

Span parse_span(const json& j, std::size_t line) {
  expect_keys(j, {"start", "end", "token_start", "token_end", "label"}, {},
              "span", line);
  return {get_index(j, "start", "span", line), get_index(j, "end", "span", line),
          get_index(j, "token_start", "span", line),
          get_index(j, "token_end", "span", line),
          get_string(j, "label", "span", line)};
}

}  // namespace

Span span_from_json(const json& j) { return parse_span(j, 0); }

LabeledParagraph labeled_from_json(const json& record, std::size_t line) {
  expect_keys(record, {"text", "tokens", "spans"}, {"meta"}, "record", line);
  LabeledParagraph lp;
  lp.paragraph.text = get_string(record, "text", "record", line);
  const auto& tokens = record.at("tokens");
  const auto& spans = record.at("spans");
  if (!tokens.is_array()) throw FormatError("tokens must be an array", line);
  if (!spans.is_array()) throw FormatError("spans must be an array", line);
  for (const auto& t : tokens) {
    expect_keys(t, {"text", "start", "end", "id"}, {}, "token", line);
    lp.tokens.push_back({get_string(t, "text", "token", line),
                         get_index(t, "start", "token", line),
                         get_index(t, "end", "token", line),
                         get_index(t, "id", "token", line)});
  }
  for (const auto& s : spans) lp.spans.push_back(parse_span(s, line));
  if (record.contains("meta")) {
    const auto& meta = record.at("meta");
    expect_keys(meta, {"doc_id", "para_index", "provenance"}, {}, "meta", line);
    lp.paragraph.doc_id = get_string(meta, "doc_id", "meta", line);
    lp.paragraph.para_index = get_index(meta, "para_index", "meta", line);
    try {
      lp.provenance =
          provenance_from_string(get_string(meta, "provenance", "meta", line));
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what(), line);
    }
  }
  try {
    validate(lp);
  } catch (const AlignmentError& e) {
    throw FormatError(std::string("invalid record: ") + e.what(), line);
  }
  return lp;
}

std::string to_jsonl_record(const LabeledParagraph& lp,
                            const DatasetOptions& options) {
  return to_json(lp, options).dump();
}

LabeledParagraph parse_jsonl_record(std::string_view line, std::size_t line_no) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what(), line_no);
  }
  return labeled_from_json(record, line_no);
}

void write_dataset(std::span<const LabeledParagraph> lps, const std::string& path,
                   const DatasetOptions& options) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  for (const auto& lp : lps) out << to_jsonl_record(lp, options) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<LabeledParagraph> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read dataset: " + path);
  std::vector<LabeledParagraph> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_jsonl_record(line, line_no));
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> split_sentences(
    const LabeledParagraph& lp) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto& tokens = lp.tokens;
  if (tokens.empty()) return out;

  std::vector<bool> joined(tokens.size(), false);  // token k and k+1 share a span
  for (const auto& s : lp.spans) {
    for (std::size_t k = s.token_start; k < s.token_end; ++k) joined[k] = true;
  }

  std::size_t first = 0;
  for (std::size_t k = 0; k + 1 < tokens.size(); ++k) {
    const auto& t = tokens[k];
    if (t.text != "." && t.text != "!" && t.text != "?") continue;
    const auto& next = tokens[k + 1];
    if (next.start == t.end || joined[k]) continue;  // no whitespace gap
    const auto chars = decode_utf8(next.text);
    if (chars.empty() || !is_upper(chars.front().cp)) continue;
    out.emplace_back(first, k + 1);
    first = k + 1;
  }
  out.emplace_back(first, tokens.size());
  return out;
}

std::string csv_field(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_iob_csv(std::span<const LabeledParagraph> lps, std::ostream& out) {
  out << "tokens,labels\n";
  for (const auto& lp : lps) {
    const IobSequence labels = spans_to_iob(lp);
    for (const auto& [first, last] : split_sentences(lp)) {
      std::string words;
      std::string tags;
      for (std::size_t k = first; k < last; ++k) {
        if (k > first) {
          words.push_back(' ');
          tags.push_back(' ');
        }
        words += lp.tokens[k].text;
        tags.push_back(to_char(labels[k]));
      }
      out << csv_field(words) << ',' << tags << '\n';
    }
  }
}

void export_iob_csv(std::span<const LabeledParagraph> lps,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write CSV: " + path);
  write_iob_csv(lps, out);
}

}  // namespace nerloop
