#include "nerloop/tagger.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "nerloop/error.h"
#include "nerloop/rng.h"

namespace nerloop {

using nlohmann::json;
using nlohmann::ordered_json;

std::uint32_t FeatureTable::intern(const std::string& name) {
  auto [it, inserted] =
      ids_.try_emplace(name, static_cast<std::uint32_t>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

std::optional<std::uint32_t> FeatureTable::find(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

void TrainConfig::check() const {
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (!(l2 >= 0.0)) throw std::invalid_argument("l2 must be nonnegative");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(validation_split > 0.0 && validation_split < 1.0))
    throw std::invalid_argument("validation_split must lie in (0, 1)");
}

TaggerModel::TaggerModel(FeatureConfig config,
                         std::shared_ptr<const Lexicon> lexicon)
    : config_(std::move(config)), lexicon_(std::move(lexicon)) {}

std::vector<std::vector<std::uint32_t>> TaggerModel::compile(
    std::span<const Token> tokens) const {
  const auto strings = extract_features(tokens, lexicon_.get(), config_);
  std::vector<std::vector<std::uint32_t>> ids(strings.size());
  for (std::size_t t = 0; t < strings.size(); ++t) {
    for (const auto& s : strings[t]) {
      if (auto id = table_.find(s)) ids[t].push_back(*id);
    }
  }
  return ids;
}

Lattice TaggerModel::lattice(std::span<const Token> tokens) const {
  return build_lattice(params_, compile(tokens));
}

IobSequence TaggerModel::decode(std::span<const Token> tokens) const {
  if (tokens.empty()) return {};
  return viterbi(lattice(tokens));
}

Marginals TaggerModel::marginals(std::span<const Token> tokens) const {
  return forward_backward(lattice(tokens));
}

std::vector<double> TaggerModel::confidences(std::span<const Token> tokens) const {
  const Marginals m = marginals(tokens);
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    out[t] = std::clamp(m.at(t, Iob::B) + m.at(t, Iob::I), 0.0, 1.0);
  }
  return out;
}

std::vector<Span> TaggerModel::predict_spans(std::span<const Token> tokens) const {
  return iob_to_spans(tokens, decode(tokens)).spans;
}

ordered_json lexicon_to_json(const Lexicon& lexicon) {
  ordered_json j;
  j["terms"] = lexicon.terms();
  j["aliases"] = lexicon.aliases();
  j["codes"] = lexicon.codes();
  return j;
}

Lexicon lexicon_from_json(const json& j) {
  Lexicon lex;
  for (const auto& term : j.at("terms")) {
    const std::string t = term.get<std::string>();
    std::optional<std::string> code;
    if (j.contains("codes") && j["codes"].contains(t))
      code = j["codes"][t].get<std::string>();
    lex.add(t, {}, code);
  }
  if (j.contains("aliases")) {
    for (const auto& item : j["aliases"].items()) {
      const std::vector<std::string> alias{item.key()};
      lex.add(item.value().get<std::string>(), alias);
    }
  }
  return lex;
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

ordered_json TaggerModel::to_json() const {
  ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["labels"] = {"B", "I", "O"};
  ordered_json cfg;
  cfg["name"] = config_.name;
  cfg["templates"] = ordered_json::array();
  for (auto t : config_.templates) cfg["templates"].push_back(to_string(t));
  j["feature_config"] = cfg;
  j["features"] = table_.names();
  j["weights"] = std::vector<double>(params_.values.begin(),
                                     params_.values.begin() + params_.transition_offset());
  j["transitions"] = std::vector<double>(params_.values.begin() + params_.transition_offset(),
                                         params_.values.end());
  j["lexicon"] = lexicon_ ? lexicon_to_json(*lexicon_) : ordered_json(nullptr);
  ordered_json meta;
  meta["seed"] = meta_.seed;
  meta["epochs_run"] = meta_.epochs_run;
  meta["best_epoch"] = meta_.best_epoch;
  meta["best_validation_loss"] = finite_or_null(meta_.best_validation_loss);
  meta["train_loss"] = meta_.train_loss;
  meta["validation_loss"] = meta_.validation_loss;
  meta["warnings"] = meta_.warnings;
  j["training_meta"] = meta;
  return j;
}

TaggerModel TaggerModel::from_json(const json& j) {
  try {
    if (j.at("format") != kCheckpointFormat)
      throw FormatError("not a tagger checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw FormatError("unsupported checkpoint version " + j.at("version").dump());
    if (j.at("labels") != json({"B", "I", "O"}))
      throw FormatError("unexpected label set in checkpoint");
    FeatureConfig cfg;
    cfg.name = j.at("feature_config").at("name").get<std::string>();
    for (const auto& t : j.at("feature_config").at("templates"))
      cfg.templates.push_back(feature_template_from_string(t.get<std::string>()));
    std::shared_ptr<const Lexicon> lex;
    if (!j.at("lexicon").is_null())
      lex = std::make_shared<const Lexicon>(lexicon_from_json(j.at("lexicon")));

    TaggerModel model(std::move(cfg), std::move(lex));
    for (const auto& name : j.at("features")) model.table_.intern(name.get<std::string>());
    if (model.table_.size() != j.at("features").size())
      throw FormatError("duplicate feature names in checkpoint");
    model.params_ = CrfParameters(model.table_.size());
    const auto weights = j.at("weights").get<std::vector<double>>();
    const auto transitions = j.at("transitions").get<std::vector<double>>();
    if (weights.size() != model.params_.transition_offset() ||
        transitions.size() != kNumLabels * kNumLabels)
      throw FormatError("checkpoint weight table has the wrong size");
    std::copy(weights.begin(), weights.end(), model.params_.values.begin());
    std::copy(transitions.begin(), transitions.end(),
              model.params_.values.begin() + model.params_.transition_offset());

    const auto& meta = j.at("training_meta");
    model.meta_.seed = meta.at("seed").get<std::uint64_t>();
    model.meta_.epochs_run = meta.at("epochs_run").get<int>();
    model.meta_.best_epoch = meta.at("best_epoch").get<int>();
    model.meta_.best_validation_loss = number_or_inf(meta.at("best_validation_loss"));
    model.meta_.train_loss = meta.at("train_loss").get<std::vector<double>>();
    model.meta_.validation_loss = meta.at("validation_loss").get<std::vector<double>>();
    model.meta_.warnings = meta.at("warnings").get<std::vector<std::string>>();
    return model;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

void TaggerModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << to_json().dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

TaggerModel TaggerModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
  return from_json(j);
}

TaggerModel train(std::span<const LabeledParagraph> data, const TrainConfig& cfg,
                  const FeatureConfig& features,
                  std::shared_ptr<const Lexicon> lexicon,
                  std::span<const LabeledParagraph> validation) {
  cfg.check();
  if (data.empty()) throw std::invalid_argument("cannot train on an empty data set");

  TaggerModel model(features, std::move(lexicon));
  TrainingMeta& meta = model.meta_;
  meta.seed = cfg.seed;
  Rng rng(cfg.seed);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  std::vector<const LabeledParagraph*> train_lps;
  std::vector<const LabeledParagraph*> val_lps;
  if (!validation.empty()) {
    for (std::size_t i : order) train_lps.push_back(&data[i]);
    for (const auto& lp : validation) val_lps.push_back(&lp);
  } else {
    std::size_t held = 0;
    if (data.size() >= 2) {
      held = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(data.size() * cfg.validation_split)));
    }
    for (std::size_t k = 0; k < order.size(); ++k) {
      (k + held < order.size() ? train_lps : val_lps).push_back(&data[order[k]]);
    }
  }

  const Lexicon* lex = model.lexicon_.get();
  std::vector<CompiledSequence> train_seqs;
  bool any_entity = false;
  for (const auto* lp : train_lps) {
    CompiledSequence seq;
    seq.labels = spans_to_iob(*lp);
    any_entity = any_entity || !lp->spans.empty();
    for (auto& token_features : extract_features(lp->tokens, lex, features)) {
      auto& ids = seq.features.emplace_back();
      for (const auto& f : token_features) ids.push_back(model.table_.intern(f));
    }
    train_seqs.push_back(std::move(seq));
  }
  if (!any_entity)
    meta.warnings.push_back("training data contains no entities (all labels O)");

  std::vector<CompiledSequence> val_seqs;
  for (const auto* lp : val_lps) {
    val_seqs.push_back({model.compile(lp->tokens), spans_to_iob(*lp)});
  }

  CrfParameters params(model.table_.size());
  CrfParameters best = params;
  std::vector<double> accum(params.values.size(), 0.0);
  std::vector<double> grad(params.values.size(), 0.0);
  std::vector<std::size_t> batch_order(train_seqs.size());
  std::iota(batch_order.begin(), batch_order.end(), std::size_t{0});
  const double n_train = static_cast<double>(train_seqs.size());

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(batch_order);
    for (std::size_t b = 0; b < batch_order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(batch_order.size(), b + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = b; k < e; ++k)
        sequence_nll(params, train_seqs[batch_order[k]], grad);
      const double reg = cfg.l2 * static_cast<double>(e - b) / n_train;
      for (std::size_t p = 0; p < grad.size(); ++p) {
        const double g = grad[p] + reg * params.values[p];
        if (g == 0.0) continue;
        accum[p] += g * g;
        params.values[p] -= cfg.learning_rate * g / (std::sqrt(accum[p]) + 1e-8);
      }
    }

    const double train_loss = objective(params, train_seqs, cfg.l2) / n_train;
    double val_loss = train_loss;
    if (!val_seqs.empty()) {
      double total = 0.0;
      for (const auto& seq : val_seqs) total += sequence_nll(params, seq);
      val_loss = total / static_cast<double>(val_seqs.size());
    }
    meta.train_loss.push_back(train_loss);
    meta.validation_loss.push_back(val_loss);
    meta.epochs_run = epoch;
    if (val_loss < meta.best_validation_loss) {
      meta.best_validation_loss = val_loss;
      meta.best_epoch = epoch;
      best = params;
    }
  }
  if (meta.best_epoch == 0) best = params;  // every loss was NaN
  model.params_ = std::move(best);
  return model;
}

}  // namespace nerloop
