#include "nerloop/tokenizer.h"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "nerloop/unicode.h"

namespace nerloop {

extern const char* const kEmbeddedStopwords;  // generated from data/

namespace {

bool is_joiner(char32_t cp) {
  switch (cp) {
    case '-': case '/': case '\'':
    case 0x2010: case 0x2011: case 0x2019:
      return true;
    default:
      return false;
  }
}

bool is_decimal_separator(char32_t cp) { return cp == '.' || cp == ','; }

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  const auto chars = decode_utf8(text);
  std::vector<Token> tokens;
  auto emit = [&](std::size_t begin, std::size_t end) {
    const std::size_t b = chars[begin].byte_offset;
    const std::size_t e = chars[end - 1].byte_offset + chars[end - 1].byte_length;
    tokens.push_back({std::string(text.substr(b, e - b)), begin, end,
                      tokens.size()});
  };

  std::size_t i = 0;
  const std::size_t n = chars.size();
  while (i < n) {
    const char32_t cp = chars[i].cp;
    if (is_space(cp)) {
      ++i;
      continue;
    }
    if (!is_word_char(cp)) {
      emit(i, i + 1);
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < n) {
      const char32_t c = chars[j].cp;
      if (is_word_char(c)) {
        ++j;
      } else if (j + 1 < n && is_word_char(chars[j + 1].cp) &&
                 (is_joiner(c) ||
                  (is_decimal_separator(c) && is_digit(chars[j - 1].cp) &&
                   is_digit(chars[j + 1].cp)))) {
        j += 2;
      } else {
        break;
      }
    }
    emit(i, j);
    i = j;
  }
  return tokens;
}

const char* to_string(TokenClass kind) {
  switch (kind) {
    case TokenClass::kWord: return "WORD";
    case TokenClass::kStopword: return "STOPWORD";
    case TokenClass::kPunct: return "PUNCT";
    case TokenClass::kNumeric: return "NUMERIC";
  }
  return "?";
}

StopwordList::StopwordList(const std::vector<std::string>& words) {
  for (const auto& w : words) {
    if (!w.empty()) words_.insert(casefold(w));
  }
}

namespace {

std::vector<std::string> parse_word_lines(std::istream& in) {
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' ||
                             line.back() == '\t')) {
      line.pop_back();
    }
    std::size_t b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    words.push_back(line.substr(b));
  }
  return words;
}

}  // namespace

const StopwordList& StopwordList::english() {
  static const StopwordList list = [] {
    std::istringstream in(kEmbeddedStopwords);
    return StopwordList(parse_word_lines(in));
  }();
  return list;
}

StopwordList StopwordList::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read stopword list: " + path);
  return StopwordList(parse_word_lines(in));
}

bool StopwordList::contains(std::string_view word) const {
  return words_.count(casefold(word)) > 0;
}

bool is_numeric_text(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  if (!s.empty() && s.back() == '%') s.remove_suffix(1);
  if (i >= s.size()) return false;
  bool need_digit = true;
  bool seen_digit = false;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (c >= '0' && c <= '9') {
      need_digit = false;
      seen_digit = true;
    } else if (c == '.' || c == ',') {
      if (need_digit && seen_digit) return false;  // "1..2"
      need_digit = true;
    } else {
      return false;
    }
  }
  return seen_digit && !need_digit;
}

TokenClass classify_token(std::string_view text, const StopwordList& stopwords) {
  const auto chars = decode_utf8(text);
  bool all_punct = !chars.empty();
  for (const auto& c : chars) {
    if (!is_punct_char(c.cp)) {
      all_punct = false;
      break;
    }
  }
  if (all_punct) return TokenClass::kPunct;
  if (is_numeric_text(text)) return TokenClass::kNumeric;
  if (stopwords.contains(text)) return TokenClass::kStopword;
  return TokenClass::kWord;
}

}  // namespace nerloop
