#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nerloop/lexicon.h"
#include "nerloop/tokenizer.h"

namespace nerloop {

enum class FeatureTemplate {
  kBias,
  kWord,        // exact token text
  kLowercase,   // case-folded text
  kShape,       // word_shape()
  kAffixes,     // case-folded prefixes and suffixes of length 2..4
  kNumeric,
  kPunct,
  kLexicon,     // token lies inside a lexicon match
  kNeighbors1,  // case-folded words at offsets -1, +1
  kNeighbors2,  // case-folded words at offsets -2, +2
};

const char* to_string(FeatureTemplate t);
FeatureTemplate feature_template_from_string(std::string_view s);

// Ordered template list. Fixed before training and stored in checkpoints.
struct FeatureConfig {
  std::string name;
  std::vector<FeatureTemplate> templates;

  // "A": every template.
  static FeatureConfig full();
  // "B": no lexicon flag and no +-2 neighbors.
  static FeatureConfig reduced();
  // "A" / "B" (case-insensitive); throws std::invalid_argument otherwise.
  static FeatureConfig named(std::string_view name);

  bool has(FeatureTemplate t) const;
  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

// Upper -> X, lower -> x, digit -> d, anything else kept; a run of one
// symbol longer than four is cut to four followed by '+'. "Ribavirin" ->
// "Xxxxx+", "300" -> "ddd".
std::string word_shape(std::string_view text);

using TokenFeatures = std::vector<std::vector<std::string>>;

// Deterministic in (tokens, lexicon, config). `lexicon` may be null.
TokenFeatures extract_features(std::span<const Token> tokens,
                               const Lexicon* lexicon,
                               const FeatureConfig& config);

}  // namespace nerloop
