#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nerloop/corpus.h"
#include "nerloop/tokenizer.h"

namespace nerloop {

inline constexpr std::string_view kDrugLabel = "drug";

// An entity over tokens [token_start, token_end] (inclusive) whose character
// extent is [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t token_start = 0;
  std::size_t token_end = 0;
  std::string label = std::string(kDrugLabel);

  friend bool operator==(const Span&, const Span&) = default;
};

enum class Provenance { kSilverLexicon, kSilverModel, kGold };

const char* to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct LabeledParagraph {
  Paragraph paragraph;
  std::vector<Token> tokens;
  std::vector<Span> spans;
  Provenance provenance = Provenance::kGold;

  const std::string& text() const { return paragraph.text; }
  friend bool operator==(const LabeledParagraph&,
                         const LabeledParagraph&) = default;
};

// Tokenizes the paragraph; no spans.
LabeledParagraph make_labeled(Paragraph paragraph,
                              Provenance provenance = Provenance::kGold);

// Builds the span covering tokens [token_start, token_end].
Span make_span(std::span<const Token> tokens, std::size_t token_start,
               std::size_t token_end, std::string label = std::string(kDrugLabel));

// Checks token invariants against the text and span invariants against the
// tokens. Throws AlignmentError naming the first violation.
void validate(const LabeledParagraph& lp);
void validate_spans(std::span<const Token> tokens, std::span<const Span> spans,
                    std::size_t text_chars);

enum class Iob : unsigned char { B = 0, I = 1, O = 2 };
inline constexpr std::size_t kNumLabels = 3;
using IobSequence = std::vector<Iob>;

char to_char(Iob label);
Iob iob_from_char(char c);

// No I at position 0 and no I directly after O.
bool is_valid(std::span<const Iob> labels);

// Throws AlignmentError if a span is off token boundaries.
IobSequence spans_to_iob(const LabeledParagraph& lp);
IobSequence spans_to_iob(std::span<const Token> tokens,
                         std::span<const Span> spans);

struct DecodedSpans {
  std::vector<Span> spans;
  std::size_t repairs = 0;  // stray I labels promoted to B
};

// Inverse of spans_to_iob. A stray I (position 0 or after O) is treated as B
// and counted in `repairs`. Throws std::invalid_argument on length mismatch.
DecodedSpans iob_to_spans(std::span<const Token> tokens,
                          std::span<const Iob> labels,
                          std::string_view label = kDrugLabel);

// The entity's surface text, sliced from the paragraph by character offsets.
std::string span_text(const LabeledParagraph& lp, const Span& span);

}  // namespace nerloop
