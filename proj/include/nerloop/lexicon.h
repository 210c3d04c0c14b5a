#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nerloop/annotations.h"

namespace nerloop {

// Case-folds, trims and collapses internal whitespace runs to one space.
std::string normalize_term(std::string_view term);

// Gazetteer of normalized terms and aliases. Matching is whole-token: a term
// is keyed by the case-folded texts of its own tokens.
class Lexicon {
 public:
  // Adds (or merges into) a term. Returns false if the name normalizes to
  // nothing. Aliases already used by another term keep their first owner.
  bool add(std::string_view name, std::span<const std::string> aliases = {},
           std::optional<std::string> code = std::nullopt);

  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }

  bool contains_term(std::string_view normalized) const;
  bool contains_alias(std::string_view normalized) const;
  // Canonical term for a normalized name or alias.
  std::optional<std::string> canonical(std::string_view normalized) const;
  std::optional<std::string> code(std::string_view term) const;

  const std::set<std::string>& terms() const { return terms_; }
  const std::map<std::string, std::string>& aliases() const { return aliases_; }
  const std::map<std::string, std::string>& codes() const { return codes_; }

  struct KeyEntry {
    std::string canonical;
    bool via_alias = false;
  };
  const KeyEntry* find_key(const std::string& token_key) const;
  std::size_t max_key_tokens() const { return max_key_tokens_; }

  friend bool operator==(const Lexicon& a, const Lexicon& b) {
    return a.terms_ == b.terms_ && a.aliases_ == b.aliases_ &&
           a.codes_ == b.codes_;
  }

 private:
  void index(const std::string& normalized, const std::string& canonical,
             bool via_alias);

  std::set<std::string> terms_;
  std::map<std::string, std::string> aliases_;  // alias -> canonical
  std::map<std::string, std::string> codes_;    // canonical -> code
  std::unordered_map<std::string, KeyEntry> keys_;
  std::size_t max_key_tokens_ = 0;
};

// Token key used for matching: case-folded token texts joined by U+001F.
std::string token_key(std::span<const Token> tokens);

using CodeFilter = std::function<bool(const std::optional<std::string>&)>;

inline bool has_code(const std::optional<std::string>& code) {
  return code.has_value() && !code->empty();
}

struct LexiconLoad {
  Lexicon lexicon;
  std::size_t rows = 0;
  std::size_t kept = 0;
  std::size_t filtered = 0;
  std::size_t duplicates = 0;
  std::size_t malformed = 0;
  std::vector<std::string> warnings;
};

// Tab-separated term file: name, aliases (';'-separated, may be empty),
// code (optional). An optional header row "name\taliases\tcode" and '#'
// comment lines are skipped. Malformed rows are skipped and reported.
LexiconLoad load_lexicon(const std::string& path, const CodeFilter& filter = {});
LexiconLoad parse_lexicon(std::istream& in, const CodeFilter& filter = {});

void write_lexicon(const Lexicon& lexicon, const std::string& path);

struct LexiconMatch {
  std::size_t token_start = 0;
  std::size_t token_end = 0;  // inclusive
  std::string canonical;
  bool via_alias = false;
};

// Longest match, scanning left to right; matches never overlap.
std::vector<LexiconMatch> match_lexicon(std::span<const Token> tokens,
                                        const Lexicon& lexicon);

// Silver paragraph with one span per lexicon match.
LabeledParagraph auto_label(const Paragraph& paragraph, const Lexicon& lexicon);

}  // namespace nerloop
