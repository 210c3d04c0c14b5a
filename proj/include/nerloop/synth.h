#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nerloop/annotations.h"
#include "nerloop/corpus.h"
#include "nerloop/lexicon.h"

namespace nerloop {

// Generator for drug-mention corpora with known ground truth. Names are
// built from syllables and pharmacological suffixes; some appear in the
// lexicon, the rest are only ever seen in context.
struct SynthConfig {
  std::size_t paragraphs = 5000;
  std::size_t paragraphs_per_doc = 5;
  std::size_t lexicon_terms = 300;
  std::size_t unlisted_terms = 100;
  double drug_paragraph_rate = 0.6;
  double unlisted_mention_rate = 0.25;
  std::uint64_t seed = 7;
};

struct SynthCorpus {
  std::vector<Document> documents;
  Lexicon lexicon;
  std::vector<std::string> listed;    // lexicon names
  std::vector<std::string> unlisted;  // drug names missing from the lexicon
  std::map<ParagraphKey, LabeledParagraph> truth;

  std::vector<Paragraph> paragraphs() const;
  // Gold labeling of every paragraph, in corpus order.
  std::vector<LabeledParagraph> gold() const;
};

SynthCorpus generate_synthetic(const SynthConfig& cfg);

}  // namespace nerloop
