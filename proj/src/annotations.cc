#include "nerloop/annotations.h"

#include <stdexcept>

#include "nerloop/error.h"
#include "nerloop/unicode.h"

namespace nerloop {

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kSilverLexicon: return "silver_lexicon";
    case Provenance::kSilverModel: return "silver_model";
    case Provenance::kGold: return "gold";
  }
  return "?";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "silver_lexicon") return Provenance::kSilverLexicon;
  if (s == "silver_model") return Provenance::kSilverModel;
  if (s == "gold") return Provenance::kGold;
  throw std::invalid_argument("unknown provenance '" + std::string(s) + "'");
}

LabeledParagraph make_labeled(Paragraph paragraph, Provenance provenance) {
  LabeledParagraph lp;
  lp.tokens = tokenize(paragraph.text);
  lp.paragraph = std::move(paragraph);
  lp.provenance = provenance;
  return lp;
}

Span make_span(std::span<const Token> tokens, std::size_t token_start,
               std::size_t token_end, std::string label) {
  if (token_start > token_end || token_end >= tokens.size())
    throw AlignmentError("token range [" + std::to_string(token_start) + ", " +
                         std::to_string(token_end) + "] out of range");
  return {tokens[token_start].start, tokens[token_end].end, token_start,
          token_end, std::move(label)};
}

namespace {

std::string describe(const Span& s) {
  return "span (" + std::to_string(s.start) + "," + std::to_string(s.end) +
         ") tokens [" + std::to_string(s.token_start) + "," +
         std::to_string(s.token_end) + "]";
}

}  // namespace

void validate_spans(std::span<const Token> tokens, std::span<const Span> spans,
                    std::size_t text_chars) {
  const Span* prev = nullptr;
  for (const auto& s : spans) {
    if (s.start >= s.end) throw AlignmentError(describe(s) + ": empty extent");
    if (s.end > text_chars)
      throw AlignmentError(describe(s) + ": extends past end of text");
    if (s.token_start > s.token_end || s.token_end >= tokens.size())
      throw AlignmentError(describe(s) + ": token range out of bounds");
    if (tokens[s.token_start].start != s.start ||
        tokens[s.token_end].end != s.end)
      throw AlignmentError(describe(s) + ": not aligned to token boundaries");
    if (s.label.empty()) throw AlignmentError(describe(s) + ": empty label");
    if (prev && prev->token_end >= s.token_start)
      throw AlignmentError(describe(s) + ": overlaps or precedes previous span");
    prev = &s;
  }
}

void validate(const LabeledParagraph& lp) {
  const auto offsets = char_offsets(lp.text());
  const std::size_t n = offsets.size() - 1;
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < lp.tokens.size(); ++i) {
    const Token& t = lp.tokens[i];
    const std::string where = "token " + std::to_string(i);
    if (t.id != i) throw AlignmentError(where + ": id is not its position");
    if (t.start >= t.end) throw AlignmentError(where + ": empty extent");
    if (t.end > n) throw AlignmentError(where + ": extends past end of text");
    if (t.start < prev_end) throw AlignmentError(where + ": overlaps previous");
    if (lp.text().compare(offsets[t.start], offsets[t.end] - offsets[t.start],
                          t.text) != 0)
      throw AlignmentError(where + ": text does not match paragraph slice");
    prev_end = t.end;
  }
  validate_spans(lp.tokens, lp.spans, n);
}

char to_char(Iob label) {
  switch (label) {
    case Iob::B: return 'B';
    case Iob::I: return 'I';
    case Iob::O: return 'O';
  }
  return '?';
}

Iob iob_from_char(char c) {
  switch (c) {
    case 'B': return Iob::B;
    case 'I': return Iob::I;
    case 'O': return Iob::O;
  }
  throw std::invalid_argument(std::string("not an IOB label: ") + c);
}

bool is_valid(std::span<const Iob> labels) {
  Iob prev = Iob::O;
  for (Iob l : labels) {
    if (l == Iob::I && prev == Iob::O) return false;
    prev = l;
  }
  return true;
}

IobSequence spans_to_iob(std::span<const Token> tokens,
                         std::span<const Span> spans) {
  IobSequence labels(tokens.size(), Iob::O);
  for (const auto& s : spans) {
    if (s.token_start > s.token_end || s.token_end >= tokens.size() ||
        tokens[s.token_start].start != s.start ||
        tokens[s.token_end].end != s.end)
      throw AlignmentError(describe(s) + ": not aligned to token boundaries");
    for (std::size_t k = s.token_start; k <= s.token_end; ++k) {
      if (labels[k] != Iob::O)
        throw AlignmentError(describe(s) + ": overlaps another span");
      labels[k] = k == s.token_start ? Iob::B : Iob::I;
    }
  }
  return labels;
}

IobSequence spans_to_iob(const LabeledParagraph& lp) {
  return spans_to_iob(lp.tokens, lp.spans);
}

DecodedSpans iob_to_spans(std::span<const Token> tokens,
                          std::span<const Iob> labels, std::string_view label) {
  if (tokens.size() != labels.size())
    throw std::invalid_argument("IOB sequence length " +
                                std::to_string(labels.size()) +
                                " does not match token count " +
                                std::to_string(tokens.size()));
  DecodedSpans out;
  std::size_t open = 0;
  bool in_span = false;
  auto close = [&](std::size_t last) {
    out.spans.push_back(make_span(tokens, open, last, std::string(label)));
    in_span = false;
  };
  for (std::size_t k = 0; k < labels.size(); ++k) {
    Iob l = labels[k];
    if (l == Iob::I && !in_span) {
      ++out.repairs;
      l = Iob::B;
    }
    if (l == Iob::B) {
      if (in_span) close(k - 1);
      open = k;
      in_span = true;
    } else if (l == Iob::O && in_span) {
      close(k - 1);
    }
  }
  if (in_span) close(labels.size() - 1);
  return out;
}

std::string span_text(const LabeledParagraph& lp, const Span& span) {
  return char_substr(lp.text(), span.start, span.end);
}

}  // namespace nerloop
