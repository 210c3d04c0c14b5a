#pragma once

#include <cstddef>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nerloop/corpus.h"
#include "nerloop/lexicon.h"
#include "nerloop/tagger.h"

namespace nerloop {

struct EntityTally {
  std::string surface;  // normalized
  std::size_t count_a = 0;
  std::size_t count_b = 0;
  std::set<std::string> documents;  // filled only when requested

  std::size_t total() const { return count_a + count_b; }
  friend bool operator==(const EntityTally&, const EntityTally&) = default;
};

enum class Balance { kBalanced, kImbalanced };

// Balanced iff both counts are at least 1 and the larger is at most ten
// times the smaller.
Balance classify_balanced(std::size_t count_a, std::size_t count_b);
inline Balance classify_balanced(const EntityTally& t) {
  return classify_balanced(t.count_a, t.count_b);
}

// Case-folds, strips leading and trailing non-word characters and collapses
// whitespace. "Sofosbuvir," -> "sofosbuvir".
std::string normalize_entity(std::string_view surface);

using TallyMap = std::map<std::string, EntityTally>;

void merge_tallies(TallyMap& into, const TallyMap& from);

// Anything that finds entity spans in a tokenized paragraph. Must be safe
// to call from several threads at once.
using SpanDecoder =
    std::function<std::vector<Span>(const Paragraph&, std::span<const Token>)>;

SpanDecoder decoder_for(const TaggerModel& model);

// Decodes every paragraph with both decoders.
TallyMap tally_paragraphs(std::span<const Paragraph> paragraphs, const SpanDecoder& a,
                          const SpanDecoder& b, bool track_documents = false);

struct ExtractionReport {
  std::size_t paragraphs = 0;
  // Every tallied entity, by total detections descending then surface.
  std::vector<EntityTally> ranking;

  std::vector<const EntityTally*> pool_all() const;
  std::vector<const EntityTally*> pool_balanced() const;
};

ExtractionReport make_report(const TallyMap& tallies, std::size_t paragraphs);

// Shards the paragraphs into `workers` contiguous ranges decoded in
// parallel. The report does not depend on `workers`. Errors name the
// paragraph that failed.
ExtractionReport extract_corpus(std::span<const Paragraph> paragraphs,
                                const SpanDecoder& a, const SpanDecoder& b,
                                std::size_t workers, bool track_documents = false);
ExtractionReport extract_corpus(std::span<const Paragraph> paragraphs,
                                const TaggerModel& a, const TaggerModel& b,
                                std::size_t workers, bool track_documents = false);

// Tab-separated: surface, count_a, count_b, balanced, rank.
void write_report(const ExtractionReport& report, std::ostream& out);
ExtractionReport read_report(std::istream& in);

enum class Pool { kAll, kBalanced };
Pool pool_from_string(std::string_view s);

struct MatchRates {
  std::size_t top_k = 0;
  std::size_t exact = 0;
  std::size_t partial = 0;
  double exact_rate = 0.0;
  double exact_plus_partial_rate = 0.0;
  std::vector<std::string> unmatched;  // candidates for manual review
};

// Over the top_k entities of the pool: exact when the surface is a
// reference name or alias, partial when it is one whole word of a
// multi-word name or alias. An empty reference yields zero rates. Throws
// std::invalid_argument when top_k exceeds the pool.
MatchRates compare_reference(const ExtractionReport& report, const Lexicon& reference,
                             std::size_t top_k, Pool pool);

}  // namespace nerloop
