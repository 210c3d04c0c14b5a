#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "nerloop/annotations.h"
#include "nerloop/crf.h"
#include "nerloop/features.h"
#include "nerloop/lexicon.h"

namespace nerloop {

// Feature string <-> dense id. Ids are assigned in first-seen order and are
// stored in checkpoints by position.
class FeatureTable {
 public:
  std::uint32_t intern(const std::string& name);
  std::optional<std::uint32_t> find(const std::string& name) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> names_;
};

struct TrainConfig {
  int max_epochs = 64;
  double l2 = 0.1;
  // AdaGrad base rate: step = rate * g / (sqrt(sum g^2) + 1e-8).
  double learning_rate = 0.1;
  std::size_t batch_size = 8;
  std::uint64_t seed = 42;
  // Held-out tail of the shuffled data when no validation set is given.
  double validation_split = 0.1;

  void check() const;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_validation_loss = std::numeric_limits<double>::infinity();
  std::vector<double> train_loss;       // per epoch: objective / #sequences
  std::vector<double> validation_loss;  // per epoch: mean NLL
  std::vector<std::string> warnings;
};

// Linear-chain CRF tagger over {B, I, O}. Immutable after training; decode
// and confidences are safe to call concurrently.
class TaggerModel {
 public:
  explicit TaggerModel(FeatureConfig config = FeatureConfig::full(),
                       std::shared_ptr<const Lexicon> lexicon = nullptr);

  const FeatureConfig& feature_config() const { return config_; }
  const std::shared_ptr<const Lexicon>& lexicon() const { return lexicon_; }
  const FeatureTable& feature_table() const { return table_; }
  const CrfParameters& parameters() const { return params_; }
  const TrainingMeta& training_meta() const { return meta_; }

  // Feature ids per token; features unseen in training are dropped.
  std::vector<std::vector<std::uint32_t>> compile(
      std::span<const Token> tokens) const;
  Lattice lattice(std::span<const Token> tokens) const;

  // Viterbi with O->I and start->I masked; always a valid sequence.
  IobSequence decode(std::span<const Token> tokens) const;
  Marginals marginals(std::span<const Token> tokens) const;
  // Per token, P(B) + P(I): the probability it belongs to an entity.
  std::vector<double> confidences(std::span<const Token> tokens) const;

  // Decoded spans (decode + iob_to_spans).
  std::vector<Span> predict_spans(std::span<const Token> tokens) const;

  nlohmann::ordered_json to_json() const;
  static TaggerModel from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static TaggerModel load(const std::string& path);

 private:
  friend TaggerModel train(std::span<const LabeledParagraph>, const TrainConfig&,
                           const FeatureConfig&, std::shared_ptr<const Lexicon>,
                           std::span<const LabeledParagraph>);

  FeatureConfig config_;
  std::shared_ptr<const Lexicon> lexicon_;
  FeatureTable table_;
  CrfParameters params_;
  TrainingMeta meta_;
};

inline constexpr const char* kCheckpointFormat = "nerloop-crf";
inline constexpr int kCheckpointVersion = 1;

// Minimizes the L2-regularized NLL with mini-batch AdaGrad, shuffling each
// epoch under cfg.seed, and returns the epoch with the lowest validation
// loss. When `validation` is empty the last validation_split of the
// shuffled data is held out instead (training loss is used when there is
// too little data to hold anything out). Throws std::invalid_argument on
// empty data.
TaggerModel train(std::span<const LabeledParagraph> data, const TrainConfig& cfg,
                  const FeatureConfig& features = FeatureConfig::full(),
                  std::shared_ptr<const Lexicon> lexicon = nullptr,
                  std::span<const LabeledParagraph> validation = {});

nlohmann::ordered_json lexicon_to_json(const Lexicon& lexicon);
Lexicon lexicon_from_json(const nlohmann::json& j);

}  // namespace nerloop
