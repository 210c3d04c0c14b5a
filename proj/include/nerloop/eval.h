#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nerloop/annotations.h"
#include "nerloop/tagger.h"
#include "nerloop/tokenizer.h"

namespace nerloop {

// Entity-level counts. A prediction that overlaps a gold span without
// matching it exactly is a false positive, and that gold span is then not a
// false negative, so tp + fn can be less than the number of gold spans.
struct EvalCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  // Diagnostics, not used by prf1: gold spans excused from FN by an
  // overlapping inexact prediction, and inexact predictions overlapping more
  // than one gold span.
  std::size_t boundary_overlaps = 0;
  std::size_t multi_gold_overlaps = 0;

  EvalCounts& operator+=(const EvalCounts& o);
  friend bool operator==(const EvalCounts&, const EvalCounts&) = default;
};

// Spans are compared by token range; both lists must index one tokenization.
EvalCounts score_entities(std::span<const Span> gold, std::span<const Span> pred);

// Throws std::invalid_argument if the paragraphs' texts differ.
EvalCounts score_paragraph(const LabeledParagraph& gold,
                           const LabeledParagraph& pred);

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Each ratio is 0 when its denominator is 0.
Prf1 prf1(const EvalCounts& c);

// Micro-averaged counts of a model's predictions against gold paragraphs.
EvalCounts evaluate_model(const TaggerModel& model,
                          std::span<const LabeledParagraph> gold);

struct FoldSpec {
  std::size_t k = 0;
  std::vector<std::size_t> fold_sizes;
  std::vector<std::size_t> assignments;  // item index -> fold id

  // Items of fold i, in dataset order.
  std::pair<std::size_t, std::size_t> range(std::size_t fold) const;
};

// Contiguous folds in dataset order: the first k - n % k folds hold n / k
// items, the remaining ones one more. Throws std::invalid_argument unless
// n >= k >= 2.
FoldSpec kfold_split(std::size_t n, std::size_t k);

struct FoldResult {
  std::size_t fold = 0;
  EvalCounts counts;
  Prf1 metrics;
};

struct KFoldReport {
  std::vector<FoldResult> folds;
  double mean_f1 = 0.0;
};

struct KFoldOptions {
  TrainConfig train;
  FeatureConfig features = FeatureConfig::full();
  std::shared_ptr<const Lexicon> lexicon;
  // Called with each fold's model before it is scored.
  std::function<void(std::size_t fold, const TaggerModel&)> on_model;
};

// Round i trains on every fold of train_set except i and tests on fold i of
// test_source. Fold i of train_set is never seen in round i. Per-fold seeds
// are train.seed + i. Throws std::invalid_argument on length mismatch.
KFoldReport kfold_run(std::span<const LabeledParagraph> train_set,
                      std::span<const LabeledParagraph> test_source,
                      std::size_t k, const KFoldOptions& options);

void write_kfold_table(const KFoldReport& report, std::ostream& out);

enum class ContextScope { kAroundIncorrect, kAroundCorrect };

const char* to_string(ContextScope scope);

struct ContextStats {
  std::size_t window = 0;
  bool include_stopwords = true;
  ContextScope scope = ContextScope::kAroundIncorrect;
  std::map<std::string, std::size_t> counts;
  std::size_t entities = 0;

  // Count descending, then token ascending.
  std::vector<std::pair<std::string, std::size_t>> ranked() const;
};

// A gold paragraph and a prediction over the same tokens.
struct ScoredParagraph {
  LabeledParagraph gold;
  std::vector<Span> predicted;
};

// For every entity in scope counts the tokens at most `window`
// positions before its first or after its last token. kAroundCorrect covers
// exactly matched predictions; kAroundIncorrect covers inexact predictions
// plus gold spans no prediction touches. The entity's own
// tokens are never counted; with include_stopwords false, STOPWORD and
// PUNCT tokens are dropped. Throws std::invalid_argument if window < 1.
ContextStats context_frequencies(std::span<const ScoredParagraph> data,
                                 std::size_t window, bool include_stopwords,
                                 ContextScope scope,
                                 const StopwordList& stopwords = StopwordList::english());

void write_frequency_table(const ContextStats& stats, std::size_t top,
                           std::ostream& out);

}  // namespace nerloop
