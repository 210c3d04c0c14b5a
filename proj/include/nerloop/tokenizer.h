#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace nerloop {

// A token of a paragraph. start/end are character (Unicode scalar value)
// indices into the paragraph text; end is one past the last character.
struct Token {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t id = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

// Rules: maximal runs of letters, digits and underscore; '-', '/', '\''
// (and their typographic variants) join two word characters; '.' and ','
// join two digits; any other non-space character is a token of its own.
std::vector<Token> tokenize(std::string_view text);

enum class TokenClass { kWord, kStopword, kPunct, kNumeric };

const char* to_string(TokenClass kind);

class StopwordList {
 public:
  StopwordList() = default;
  explicit StopwordList(const std::vector<std::string>& words);

  // The embedded English list (data/stopwords.txt).
  static const StopwordList& english();
  // One lowercase word per line; blank lines and '#' comments ignored.
  static StopwordList load(const std::string& path);

  bool contains(std::string_view word) const;
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

// Integers, decimals with '.' or ',' separators, optional sign and
// trailing percent: "300", "2.5", "2,5", "2.5%".
bool is_numeric_text(std::string_view text);

// PUNCT if every character is punctuation, NUMERIC if it parses as a number,
// STOPWORD if its case-folded text is listed, WORD otherwise.
TokenClass classify_token(std::string_view text,
                          const StopwordList& stopwords = StopwordList::english());

}  // namespace nerloop
