#pragma once

#include <string>

#include "nerloop/extract.h"
#include "nerloop/lexicon.h"

namespace nerloop::testing {

// Extraction report and reference list laid out so that the top 100 of the
// ALL pool hold 77 exact and 9 partial matches, and the top 100 of the
// BALANCED pool hold 88 exact and 3 partial matches.
struct ReferenceFixture {
  ExtractionReport report;
  Lexicon reference;
};

inline std::string fixture_word(const char* kind, int i) {
  // Letters only, so normalization leaves it alone.
  std::string w = kind;
  w += static_cast<char>('a' + i / 26);
  w += static_cast<char>('a' + i % 26);
  return w;
}

inline ReferenceFixture reference_fixture() {
  ReferenceFixture f;
  int exact = 0, partial = 0, other = 0;
  std::size_t total = 2000;
  // kind: 'e' exact, 'p' partial, 'n' none.
  auto add = [&](char kind, bool balanced) {
    EntityTally t;
    const int i = kind == 'e' ? exact++ : kind == 'p' ? partial++ : other++;
    t.surface = fixture_word(kind == 'e' ? "exact" : kind == 'p' ? "part" : "other", i);
    // Strictly falling totals fix the ranking; balanced pairs stay within
    // a factor of ten, imbalanced ones are single-model.
    --total;
    if (balanced) {
      t.count_a = total / 2 + total % 2;
      t.count_b = total / 2;
    } else {
      t.count_a = total;
      t.count_b = 0;
    }
    if (kind == 'e') {
      // Every third exact match is listed as an alias.
      if (i % 3 == 0) {
        const std::string alias = t.surface;
        f.reference.add("canon" + t.surface, std::span(&alias, 1));
      } else {
        f.reference.add(t.surface);
      }
    } else if (kind == 'p') {
      f.reference.add(t.surface + " sodium");
    }
    f.report.ranking.push_back(t);
  };
  // Top 100 overall: 77 exact (70 balanced), 9 partial (2), 14 none (5).
  for (int i = 0; i < 100; ++i) {
    if (i < 77) add('e', i < 70);
    else if (i < 86) add('p', i < 79);
    else add('n', i < 91);
  }
  // Lower ranks complete the balanced pool: 18 exact, 1 partial, 4 none,
  // interleaved with imbalanced noise.
  for (int i = 0; i < 23; ++i) {
    add('n', false);
    add(i < 18 ? 'e' : i < 19 ? 'p' : 'n', true);
  }
  f.reference.add("unrelated compound");
  f.report.paragraphs = 0;
  return f;
}

}  // namespace nerloop::testing
