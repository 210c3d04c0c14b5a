#include "nerloop/features.h"

#include <algorithm>
#include <stdexcept>

#include "nerloop/unicode.h"

namespace nerloop {

namespace {

struct NamedTemplate {
  FeatureTemplate value;
  const char* name;
};

constexpr NamedTemplate kTemplates[] = {
    {FeatureTemplate::kBias, "bias"},
    {FeatureTemplate::kWord, "word"},
    {FeatureTemplate::kLowercase, "lower"},
    {FeatureTemplate::kShape, "shape"},
    {FeatureTemplate::kAffixes, "affixes"},
    {FeatureTemplate::kNumeric, "numeric"},
    {FeatureTemplate::kPunct, "punct"},
    {FeatureTemplate::kLexicon, "lexicon"},
    {FeatureTemplate::kNeighbors1, "neighbors1"},
    {FeatureTemplate::kNeighbors2, "neighbors2"},
};

}  // namespace

const char* to_string(FeatureTemplate t) {
  for (const auto& e : kTemplates) {
    if (e.value == t) return e.name;
  }
  return "?";
}

FeatureTemplate feature_template_from_string(std::string_view s) {
  for (const auto& e : kTemplates) {
    if (s == e.name) return e.value;
  }
  throw std::invalid_argument("unknown feature template '" + std::string(s) + "'");
}

FeatureConfig FeatureConfig::full() {
  FeatureConfig c{"A", {}};
  for (const auto& e : kTemplates) c.templates.push_back(e.value);
  return c;
}

FeatureConfig FeatureConfig::reduced() {
  FeatureConfig c = full();
  c.name = "B";
  std::erase_if(c.templates, [](FeatureTemplate t) {
    return t == FeatureTemplate::kLexicon || t == FeatureTemplate::kNeighbors2;
  });
  return c;
}

FeatureConfig FeatureConfig::named(std::string_view name) {
  if (name == "A" || name == "a") return full();
  if (name == "B" || name == "b") return reduced();
  throw std::invalid_argument("unknown feature configuration '" +
                              std::string(name) + "' (expected A or B)");
}

bool FeatureConfig::has(FeatureTemplate t) const {
  return std::find(templates.begin(), templates.end(), t) != templates.end();
}

std::string word_shape(std::string_view text) {
  std::string out;
  char last = 0;
  int run = 0;
  for (const auto& c : decode_utf8(text)) {
    std::string symbol;
    if (is_upper(c.cp)) {
      symbol = "X";
    } else if (is_lower(c.cp)) {
      symbol = "x";
    } else if (is_digit(c.cp)) {
      symbol = "d";
    } else if (c.cp < 0x80) {
      symbol = std::string(1, static_cast<char>(c.cp));
    } else {
      symbol = is_word_char(c.cp) ? "x" : "-";
    }
    const char s = symbol[0];
    if (s == last) {
      ++run;
      if (run == 5) out.push_back('+');
      if (run >= 5) continue;
    } else {
      last = s;
      run = 1;
    }
    out += symbol;
  }
  return out;
}

namespace {

// Prefix/suffix of `len` characters of an already case-folded word.
std::string char_prefix(const std::vector<Utf8Char>& chars, std::string_view s,
                        std::size_t len) {
  return std::string(s.substr(0, chars[len - 1].byte_offset + chars[len - 1].byte_length));
}

std::string char_suffix(const std::vector<Utf8Char>& chars, std::string_view s,
                        std::size_t len) {
  return std::string(s.substr(chars[chars.size() - len].byte_offset));
}

}  // namespace

TokenFeatures extract_features(std::span<const Token> tokens,
                               const Lexicon* lexicon,
                               const FeatureConfig& config) {
  const std::size_t n = tokens.size();
  std::vector<std::string> lower(n);
  for (std::size_t i = 0; i < n; ++i) lower[i] = casefold(tokens[i].text);

  std::vector<bool> in_lexicon(n, false);
  if (lexicon && config.has(FeatureTemplate::kLexicon)) {
    for (const auto& m : match_lexicon(tokens, *lexicon)) {
      for (std::size_t k = m.token_start; k <= m.token_end; ++k) in_lexicon[k] = true;
    }
  }

  auto neighbor = [&](std::size_t i, long offset) -> std::string {
    const long j = static_cast<long>(i) + offset;
    if (j < 0) return "<s>";
    if (j >= static_cast<long>(n)) return "</s>";
    return lower[static_cast<std::size_t>(j)];
  };

  TokenFeatures out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& f = out[i];
    const std::string& text = tokens[i].text;
    for (FeatureTemplate t : config.templates) {
      switch (t) {
        case FeatureTemplate::kBias:
          f.push_back("bias");
          break;
        case FeatureTemplate::kWord:
          f.push_back("w=" + text);
          break;
        case FeatureTemplate::kLowercase:
          f.push_back("lw=" + lower[i]);
          break;
        case FeatureTemplate::kShape:
          f.push_back("shape=" + word_shape(text));
          break;
        case FeatureTemplate::kAffixes: {
          const auto chars = decode_utf8(lower[i]);
          for (std::size_t len = 2; len <= 4 && len <= chars.size(); ++len) {
            f.push_back("p" + std::to_string(len) + "=" +
                        char_prefix(chars, lower[i], len));
            f.push_back("s" + std::to_string(len) + "=" +
                        char_suffix(chars, lower[i], len));
          }
          break;
        }
        case FeatureTemplate::kNumeric:
          if (classify_token(text) == TokenClass::kNumeric) f.push_back("numeric");
          break;
        case FeatureTemplate::kPunct:
          if (classify_token(text) == TokenClass::kPunct) f.push_back("punct");
          break;
        case FeatureTemplate::kLexicon:
          if (in_lexicon[i]) f.push_back("lexicon");
          break;
        case FeatureTemplate::kNeighbors1:
          f.push_back("w-1=" + neighbor(i, -1));
          f.push_back("w+1=" + neighbor(i, +1));
          break;
        case FeatureTemplate::kNeighbors2:
          f.push_back("w-2=" + neighbor(i, -2));
          f.push_back("w+2=" + neighbor(i, +2));
          break;
      }
    }
  }
  return out;
}

}  // namespace nerloop
