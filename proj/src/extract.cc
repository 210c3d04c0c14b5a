#include "nerloop/extract.h"

#include <algorithm>
#include <exception>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "nerloop/unicode.h"

namespace nerloop {

Balance classify_balanced(std::size_t count_a, std::size_t count_b) {
  const std::size_t lo = std::min(count_a, count_b);
  const std::size_t hi = std::max(count_a, count_b);
  if (lo == 0) return Balance::kImbalanced;
  return hi <= 10 * lo ? Balance::kBalanced : Balance::kImbalanced;
}

std::string normalize_entity(std::string_view surface) {
  const auto chars = decode_utf8(surface);
  std::size_t first = 0, last = chars.size();
  while (first < last && !is_word_char(chars[first].cp)) ++first;
  while (last > first && !is_word_char(chars[last - 1].cp)) --last;
  if (first == last) return {};
  const std::size_t b = chars[first].byte_offset;
  const std::size_t e = chars[last - 1].byte_offset + chars[last - 1].byte_length;
  return normalize_term(surface.substr(b, e - b));
}

void merge_tallies(TallyMap& into, const TallyMap& from) {
  for (const auto& [key, t] : from) {
    auto& dst = into[key];
    dst.surface = key;
    dst.count_a += t.count_a;
    dst.count_b += t.count_b;
    dst.documents.insert(t.documents.begin(), t.documents.end());
  }
}

SpanDecoder decoder_for(const TaggerModel& model) {
  return [&model](const Paragraph&, std::span<const Token> tokens) {
    return model.predict_spans(tokens);
  };
}

TallyMap tally_paragraphs(std::span<const Paragraph> paragraphs, const SpanDecoder& a,
                          const SpanDecoder& b, bool track_documents) {
  TallyMap out;
  for (const auto& p : paragraphs) {
    try {
      const auto tokens = tokenize(p.text);
      const auto offsets = char_offsets(p.text);
      auto count = [&](const SpanDecoder& decode, bool first_model) {
        for (const auto& s : decode(p, tokens)) {
          const auto bs = offsets[s.start], be = offsets[s.end];
          auto key = normalize_entity(std::string_view(p.text).substr(bs, be - bs));
          if (key.empty()) continue;
          auto& t = out[key];
          t.surface = key;
          ++(first_model ? t.count_a : t.count_b);
          if (track_documents) t.documents.insert(p.doc_id);
        }
      };
      count(a, true);
      count(b, false);
    } catch (const std::exception& e) {
      throw std::runtime_error("extraction failed in " + p.doc_id + "#" +
                               std::to_string(p.para_index) + ": " + e.what());
    }
  }
  return out;
}

std::vector<const EntityTally*> ExtractionReport::pool_all() const {
  std::vector<const EntityTally*> out;
  for (const auto& t : ranking) out.push_back(&t);
  return out;
}

std::vector<const EntityTally*> ExtractionReport::pool_balanced() const {
  std::vector<const EntityTally*> out;
  for (const auto& t : ranking) {
    if (classify_balanced(t) == Balance::kBalanced) out.push_back(&t);
  }
  return out;
}

ExtractionReport make_report(const TallyMap& tallies, std::size_t paragraphs) {
  ExtractionReport r;
  r.paragraphs = paragraphs;
  for (const auto& [key, t] : tallies) {
    if (t.total() > 0) r.ranking.push_back(t);
  }
  // Map order already sorts surfaces, so a stable sort by total is total.
  std::stable_sort(r.ranking.begin(), r.ranking.end(),
                   [](const EntityTally& x, const EntityTally& y) {
                     return x.total() > y.total();
                   });
  return r;
}

ExtractionReport extract_corpus(std::span<const Paragraph> paragraphs,
                                const TaggerModel& a, const TaggerModel& b,
                                std::size_t workers, bool track_documents) {
  return extract_corpus(paragraphs, decoder_for(a), decoder_for(b), workers,
                        track_documents);
}

ExtractionReport extract_corpus(std::span<const Paragraph> paragraphs,
                                const SpanDecoder& a, const SpanDecoder& b,
                                std::size_t workers, bool track_documents) {
  if (workers == 0) throw std::invalid_argument("workers must be >= 1");
  workers = std::min(workers, std::max<std::size_t>(1, paragraphs.size()));
  const std::size_t chunk = (paragraphs.size() + workers - 1) / workers;
  std::vector<TallyMap> shards(workers);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(paragraphs.size(), w * chunk);
    const std::size_t end = std::min(paragraphs.size(), begin + chunk);
    threads.emplace_back([&, w, begin, end] {
      try {
        shards[w] = tally_paragraphs(paragraphs.subspan(begin, end - begin), a, b,
                                     track_documents);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  TallyMap merged;
  for (const auto& s : shards) merge_tallies(merged, s);
  return make_report(merged, paragraphs.size());
}

void write_report(const ExtractionReport& report, std::ostream& out) {
  out << "surface\tcount_a\tcount_b\tbalanced\trank\n";
  std::size_t rank = 0;
  for (const auto& t : report.ranking) {
    out << t.surface << '\t' << t.count_a << '\t' << t.count_b << '\t'
        << (classify_balanced(t) == Balance::kBalanced ? "yes" : "no") << '\t'
        << ++rank << '\n';
  }
}

ExtractionReport read_report(std::istream& in) {
  ExtractionReport r;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("surface\t", 0) == 0) continue;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, '\t');) f.push_back(cell);
    if (f.size() < 3)
      throw std::runtime_error("report line " + std::to_string(line_no) +
                               ": expected surface, count_a, count_b");
    EntityTally t;
    t.surface = f[0];
    try {
      t.count_a = std::stoull(f[1]);
      t.count_b = std::stoull(f[2]);
    } catch (const std::exception&) {
      throw std::runtime_error("report line " + std::to_string(line_no) +
                               ": bad count");
    }
    r.ranking.push_back(std::move(t));
  }
  // Re-rank so a hand-edited file still yields a total order.
  TallyMap m;
  for (auto& t : r.ranking) merge_tallies(m, {{t.surface, t}});
  return make_report(m, 0);
}

Pool pool_from_string(std::string_view s) {
  if (s == "all" || s == "ALL") return Pool::kAll;
  if (s == "balanced" || s == "BALANCED") return Pool::kBalanced;
  throw std::invalid_argument("pool must be 'all' or 'balanced'");
}

MatchRates compare_reference(const ExtractionReport& report, const Lexicon& reference,
                             std::size_t top_k, Pool pool) {
  const auto candidates = pool == Pool::kAll ? report.pool_all() : report.pool_balanced();
  if (top_k > candidates.size())
    throw std::invalid_argument("top-k " + std::to_string(top_k) + " exceeds pool of " +
                                std::to_string(candidates.size()));
  std::set<std::string> words;
  auto add_words = [&](const std::string& name) {
    if (name.find(' ') == std::string::npos) return;
    std::stringstream ss(name);
    for (std::string w; ss >> w;) words.insert(w);
  };
  for (const auto& t : reference.terms()) add_words(t);
  for (const auto& [alias, canon] : reference.aliases()) add_words(alias);

  MatchRates r;
  r.top_k = top_k;
  for (std::size_t i = 0; i < top_k; ++i) {
    const auto& s = candidates[i]->surface;
    if (reference.contains_term(s) || reference.contains_alias(s)) {
      ++r.exact;
    } else if (words.count(s)) {
      ++r.partial;
    } else {
      r.unmatched.push_back(s);
    }
  }
  if (top_k > 0) {
    r.exact_rate = static_cast<double>(r.exact) / top_k;
    r.exact_plus_partial_rate = static_cast<double>(r.exact + r.partial) / top_k;
  }
  return r;
}

}  // namespace nerloop
