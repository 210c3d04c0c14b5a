#include "nerloop/lexicon.h"

#include <fstream>
#include <algorithm>
#include <stdexcept>

#include "nerloop/unicode.h"

namespace nerloop {

namespace {

constexpr char kKeySeparator = '\x1f';

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, begin);
    out.emplace_back(s.substr(begin, pos == std::string_view::npos
                                         ? std::string_view::npos
                                         : pos - begin));
    if (pos == std::string_view::npos) break;
    begin = pos + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  const std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const std::size_t e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string normalize_term(std::string_view term) {
  std::string out;
  bool pending_space = false;
  for (const auto& c : decode_utf8(term)) {
    if (is_space(c.cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    if (c.cp == 0xFFFD && c.byte_length == 1) {
      out.append(term.substr(c.byte_offset, 1));
    } else {
      append_utf8(out, fold_case(c.cp));
    }
  }
  return out;
}

std::string token_key(std::span<const Token> tokens) {
  std::string key;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) key.push_back(kKeySeparator);
    key += casefold(tokens[i].text);
  }
  return key;
}

void Lexicon::index(const std::string& normalized, const std::string& canonical,
                    bool via_alias) {
  const auto tokens = tokenize(normalized);
  if (tokens.empty()) return;
  auto [it, inserted] =
      keys_.try_emplace(token_key(tokens), KeyEntry{canonical, via_alias});
  // A primary name beats an alias that happens to share its key.
  if (!inserted && it->second.via_alias && !via_alias)
    it->second = KeyEntry{canonical, false};
  if (tokens.size() > max_key_tokens_) max_key_tokens_ = tokens.size();
}

bool Lexicon::add(std::string_view name, std::span<const std::string> aliases,
                  std::optional<std::string> code) {
  const std::string term = normalize_term(name);
  if (term.empty()) return false;
  if (terms_.insert(term).second) index(term, term, false);
  if (code && !code->empty() && !codes_.count(term)) codes_[term] = *code;
  for (const auto& raw : aliases) {
    const std::string alias = normalize_term(raw);
    if (alias.empty() || alias == term || aliases_.count(alias)) continue;
    aliases_[alias] = term;
    index(alias, term, true);
  }
  return true;
}

bool Lexicon::contains_term(std::string_view normalized) const {
  return terms_.count(std::string(normalized)) > 0;
}

bool Lexicon::contains_alias(std::string_view normalized) const {
  return aliases_.count(std::string(normalized)) > 0;
}

std::optional<std::string> Lexicon::canonical(std::string_view normalized) const {
  const std::string key(normalized);
  if (terms_.count(key)) return key;
  if (auto it = aliases_.find(key); it != aliases_.end()) return it->second;
  return std::nullopt;
}

std::optional<std::string> Lexicon::code(std::string_view term) const {
  if (auto it = codes_.find(std::string(term)); it != codes_.end())
    return it->second;
  return std::nullopt;
}

const Lexicon::KeyEntry* Lexicon::find_key(const std::string& token_key) const {
  auto it = keys_.find(token_key);
  return it == keys_.end() ? nullptr : &it->second;
}

LexiconLoad parse_lexicon(std::istream& in, const CodeFilter& filter) {
  LexiconLoad result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line[0] == '#') continue;
    auto fields = split(line, '\t');
    if (line_no == 1 && normalize_term(fields[0]) == "name") continue;
    ++result.rows;
    if (fields.size() > 3 || normalize_term(fields[0]).empty()) {
      ++result.malformed;
      result.warnings.push_back("line " + std::to_string(line_no) +
                                ": malformed row skipped");
      continue;
    }
    std::vector<std::string> aliases;
    if (fields.size() > 1 && !fields[1].empty()) {
      for (auto& a : split(fields[1], ';')) {
        if (!normalize_term(a).empty()) aliases.push_back(std::move(a));
      }
    }
    std::optional<std::string> code;
    if (fields.size() > 2) {
      std::string c = trim(fields[2]);
      if (!c.empty()) code = std::move(c);
    }
    if (filter && !filter(code)) {
      ++result.filtered;
      continue;
    }
    if (result.lexicon.contains_term(normalize_term(fields[0]))) {
      ++result.duplicates;
    } else {
      ++result.kept;
    }
    result.lexicon.add(fields[0], aliases, code);
  }
  return result;
}

LexiconLoad load_lexicon(const std::string& path, const CodeFilter& filter) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read lexicon: " + path);
  return parse_lexicon(in, filter);
}

void write_lexicon(const Lexicon& lexicon, const std::string& path) {
  std::map<std::string, std::vector<std::string>> by_term;
  for (const auto& [alias, term] : lexicon.aliases()) by_term[term].push_back(alias);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write lexicon: " + path);
  out << "name\taliases\tcode\n";
  for (const auto& term : lexicon.terms()) {
    out << term << '\t';
    const auto& aliases = by_term[term];
    for (std::size_t i = 0; i < aliases.size(); ++i) {
      if (i) out << ';';
      out << aliases[i];
    }
    out << '\t' << lexicon.code(term).value_or("") << '\n';
  }
}

std::vector<LexiconMatch> match_lexicon(std::span<const Token> tokens,
                                        const Lexicon& lexicon) {
  std::vector<std::string> folded;
  folded.reserve(tokens.size());
  for (const auto& t : tokens) folded.push_back(casefold(t.text));

  std::vector<LexiconMatch> out;
  const std::size_t max_len = lexicon.max_key_tokens();
  std::string key;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const std::size_t longest = std::min(max_len, tokens.size() - i);
    bool matched = false;
    for (std::size_t len = longest; len >= 1 && !matched; --len) {
      key = folded[i];
      for (std::size_t k = 1; k < len; ++k) {
        key.push_back(kKeySeparator);
        key += folded[i + k];
      }
      if (const auto* entry = lexicon.find_key(key)) {
        out.push_back({i, i + len - 1, entry->canonical, entry->via_alias});
        i += len;
        matched = true;
      }
    }
    if (!matched) ++i;
  }
  return out;
}

LabeledParagraph auto_label(const Paragraph& paragraph, const Lexicon& lexicon) {
  LabeledParagraph lp = make_labeled(paragraph, Provenance::kSilverLexicon);
  for (const auto& m : match_lexicon(lp.tokens, lexicon)) {
    lp.spans.push_back(make_span(lp.tokens, m.token_start, m.token_end));
  }
  return lp;
}

}  // namespace nerloop
