#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nerloop/annotations.h"
#include "nerloop/corpus.h"
#include "nerloop/lexicon.h"
#include "nerloop/tagger.h"

namespace nerloop {

struct LoopParams {
  std::size_t n0 = 278;  // bootstrap size
  std::size_t n = 120;   // paragraphs per review round
  std::size_t nt = 500;  // test set size
  double epsilon = 0.0;
  double conf_min = 0.45;
  double conf_max = 0.55;

  // Throws std::invalid_argument on zero sizes or a bad band.
  void check() const;
  friend bool operator==(const LoopParams&, const LoopParams&) = default;
};

enum class Phase { kA, kB, kC, kDone };
const char* to_string(Phase phase);
Phase phase_from_string(std::string_view s);

struct RoundRecord {
  std::size_t round = 0;
  Phase phase = Phase::kA;
  std::size_t presented = 0;  // paragraphs sent to the annotator
  std::size_t shortfall = 0;
  std::size_t cursor = 0;     // stream position after selection
  std::optional<double> f1;   // phase B: F1 on the 40% split; C: on T

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct LoopState {
  Phase phase = Phase::kA;
  LoopParams params;
  std::vector<LabeledParagraph> bootstrap;  // B, in acquisition order
  std::vector<LabeledParagraph> gold;       // G
  std::vector<LabeledParagraph> test;       // T
  std::size_t round = 0;                    // completed annotator rounds
  std::vector<std::pair<std::size_t, double>> f1_history;
  std::vector<RoundRecord> rounds;
  std::size_t cursor = 0;
  std::uint64_t stream_seed = kDefaultStreamSeed;
  std::uint64_t run_seed = 0;
  std::uint64_t corpus_digest = 0;
  std::string test_digest;  // set when phase C begins
  std::size_t guard_split = 0;  // size of the last phase-B training split
  bool exhausted = false;

  friend bool operator==(const LoopState&, const LoopState&) = default;
};

inline constexpr const char* kStateFormat = "nerloop-state";
inline constexpr int kStateVersion = 1;

nlohmann::ordered_json state_to_json(const LoopState& state);
LoopState state_from_json(const nlohmann::json& j);
// Atomic: writes a sibling temporary and renames it over `path`.
void save_state(const LoopState& state, const std::string& path);
LoopState load_state(const std::string& path);

std::uint64_t corpus_digest(std::span<const Paragraph> paragraphs);
std::string test_set_digest(std::span<const LabeledParagraph> test);

// Verifies one round of silver paragraphs. Must return the same paragraphs
// in the same order with corrected spans and GOLD provenance.
class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual std::vector<LabeledParagraph> verify(
      std::span<const LabeledParagraph> silver) = 0;
};

using TruthFn = std::function<std::vector<Span>(const LabeledParagraph&)>;

// Looks paragraphs up by (doc_id, para_index) and checks the text; throws
// std::out_of_range for paragraphs it does not know.
TruthFn truth_from_dataset(std::span<const LabeledParagraph> gold);

// Replaces the silver spans by the truth, then perturbs each true entity
// with probability error_rate by one of: dropping it, extending it by one
// token, or keeping it and adding a spurious one-token entity elsewhere.
// The noise for a paragraph depends only on (seed, doc_id, para_index).
class SimulatedAnnotator : public Annotator {
 public:
  SimulatedAnnotator(TruthFn truth, double error_rate, std::uint64_t seed);

  std::vector<LabeledParagraph> verify(
      std::span<const LabeledParagraph> silver) override;

  LabeledParagraph annotate(const LabeledParagraph& silver) const;
  std::size_t calls() const { return calls_; }

 private:
  TruthFn truth_;
  double error_rate_;
  std::uint64_t seed_;
  std::size_t calls_ = 0;
};

struct Selection {
  std::vector<LabeledParagraph> paragraphs;  // SILVER_MODEL
  std::size_t scanned = 0;
  std::size_t shortfall = 0;
  bool exhausted = false;
};

// True when some token's confidence lies in [conf_min, conf_max].
bool is_uncertain(std::span<const double> confidences, const LoopParams& params);

// Pulls from the stream until `count` paragraphs with an uncertain token are
// found or the stream ends. Skipped paragraphs are consumed.
Selection select_uncertain(const TaggerModel& model, CorpusStream& stream,
                           std::size_t count, const LoopParams& params);

struct LoopConfig {
  LoopParams params;
  TrainConfig train;
  FeatureConfig features = FeatureConfig::full();
  std::shared_ptr<const Lexicon> lexicon;  // also used as a feature
  std::uint64_t run_seed = 1;
  // Called after every annotator round and at every phase change.
  std::function<void(const LoopState&)> checkpoint;
  std::function<void(const std::string&)> log;
};

LoopState run_bootstrap(CorpusStream& stream, Annotator& annotator,
                        const LoopConfig& config);
void run_build_test_set(LoopState& state, CorpusStream& stream,
                        Annotator& annotator, const LoopConfig& config);
void run_build_labeled_set(LoopState& state, CorpusStream& stream,
                           Annotator& annotator, const LoopConfig& config);

// Runs phases A, B and C to DONE, or continues `resume` from its phase.
// Resuming checks that params, stream seed and corpus match the state.
LoopState run_workflow(CorpusStream& stream, Annotator& annotator,
                       const LoopConfig& config,
                       std::optional<LoopState> resume = std::nullopt);

// Phase-C stop rule: the latest F1 improved on the previous one by at most
// epsilon. False while fewer than two rounds have been scored.
bool should_stop(std::span<const std::pair<std::size_t, double>> history,
                 double epsilon);

// Training seed of a round.
std::uint64_t round_seed(std::uint64_t run_seed, std::size_t round);

}  // namespace nerloop
