#include "nerloop/loop.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "nerloop/dataset.h"
#include "nerloop/error.h"
#include "nerloop/eval.h"
#include "nerloop/rng.h"

namespace nerloop {

using nlohmann::json;
using nlohmann::ordered_json;

void LoopParams::check() const {
  if (n0 == 0 || n == 0 || nt == 0)
    throw std::invalid_argument("n0, n and nt must be positive");
  if (!(conf_min >= 0 && conf_max <= 1 && conf_min <= conf_max))
    throw std::invalid_argument("confidence band must satisfy 0 <= min <= max <= 1");
  if (!std::isfinite(epsilon)) throw std::invalid_argument("epsilon must be finite");
}

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::kA: return "A";
    case Phase::kB: return "B";
    case Phase::kC: return "C";
    case Phase::kDone: return "DONE";
  }
  return "?";
}

Phase phase_from_string(std::string_view s) {
  if (s == "A") return Phase::kA;
  if (s == "B") return Phase::kB;
  if (s == "C") return Phase::kC;
  if (s == "DONE") return Phase::kDone;
  throw std::invalid_argument("unknown phase '" + std::string(s) + "'");
}

std::uint64_t round_seed(std::uint64_t run_seed, std::size_t round) {
  return mix_seed(run_seed, round);
}

bool should_stop(std::span<const std::pair<std::size_t, double>> history,
                 double epsilon) {
  if (history.size() < 2) return false;
  return history.back().second - history[history.size() - 2].second <= epsilon;
}

std::uint64_t corpus_digest(std::span<const Paragraph> paragraphs) {
  std::uint64_t h = hash_bytes("");
  for (const auto& p : paragraphs) {
    h = hash_bytes(p.doc_id, h);
    h = hash_bytes(std::to_string(p.para_index), h);
    h = hash_bytes(p.text, h);
    h = hash_bytes("\n", h);
  }
  return h;
}

std::string test_set_digest(std::span<const LabeledParagraph> test) {
  std::uint64_t h = hash_bytes("");
  for (const auto& lp : test) h = hash_bytes(to_jsonl_record(lp, {true}), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- state file ------------------------------------------------------------

namespace {

ordered_json records(std::span<const LabeledParagraph> lps) {
  ordered_json a = ordered_json::array();
  for (const auto& lp : lps) a.push_back(to_json(lp, {true}));
  return a;
}

std::vector<LabeledParagraph> records_from(const json& a) {
  std::vector<LabeledParagraph> out;
  for (const auto& r : a) out.push_back(labeled_from_json(r));
  return out;
}

}  // namespace

ordered_json state_to_json(const LoopState& s) {
  ordered_json j;
  j["format"] = kStateFormat;
  j["version"] = kStateVersion;
  j["phase"] = to_string(s.phase);
  j["params"] = {{"n0", s.params.n0},         {"n", s.params.n},
                 {"nt", s.params.nt},         {"epsilon", s.params.epsilon},
                 {"conf_min", s.params.conf_min}, {"conf_max", s.params.conf_max}};
  j["round"] = s.round;
  j["cursor"] = s.cursor;
  j["stream_seed"] = s.stream_seed;
  j["run_seed"] = s.run_seed;
  j["corpus_digest"] = s.corpus_digest;
  j["test_digest"] = s.test_digest;
  j["guard_split"] = s.guard_split;
  j["exhausted"] = s.exhausted;
  ordered_json hist = ordered_json::array();
  for (const auto& [r, f1] : s.f1_history) hist.push_back({r, f1});
  j["f1_history"] = hist;
  ordered_json rounds = ordered_json::array();
  for (const auto& r : s.rounds) {
    ordered_json o;
    o["round"] = r.round;
    o["phase"] = to_string(r.phase);
    o["presented"] = r.presented;
    o["shortfall"] = r.shortfall;
    o["cursor"] = r.cursor;
    o["f1"] = r.f1 ? ordered_json(*r.f1) : ordered_json(nullptr);
    rounds.push_back(o);
  }
  j["rounds"] = rounds;
  j["bootstrap"] = records(s.bootstrap);
  j["gold"] = records(s.gold);
  j["test"] = records(s.test);
  return j;
}

LoopState state_from_json(const json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != kStateFormat)
      throw FormatError("not a loop state file");
    if (j.at("version").get<int>() != kStateVersion)
      throw FormatError("unsupported state version " + j.at("version").dump());
    LoopState s;
    s.phase = phase_from_string(j.at("phase").get<std::string>());
    const auto& p = j.at("params");
    s.params.n0 = p.at("n0").get<std::size_t>();
    s.params.n = p.at("n").get<std::size_t>();
    s.params.nt = p.at("nt").get<std::size_t>();
    s.params.epsilon = p.at("epsilon").get<double>();
    s.params.conf_min = p.at("conf_min").get<double>();
    s.params.conf_max = p.at("conf_max").get<double>();
    s.params.check();
    s.round = j.at("round").get<std::size_t>();
    s.cursor = j.at("cursor").get<std::size_t>();
    s.stream_seed = j.at("stream_seed").get<std::uint64_t>();
    s.run_seed = j.at("run_seed").get<std::uint64_t>();
    s.corpus_digest = j.at("corpus_digest").get<std::uint64_t>();
    s.test_digest = j.at("test_digest").get<std::string>();
    s.guard_split = j.at("guard_split").get<std::size_t>();
    s.exhausted = j.at("exhausted").get<bool>();
    for (const auto& h : j.at("f1_history"))
      s.f1_history.emplace_back(h.at(0).get<std::size_t>(), h.at(1).get<double>());
    for (const auto& o : j.at("rounds")) {
      RoundRecord r;
      r.round = o.at("round").get<std::size_t>();
      r.phase = phase_from_string(o.at("phase").get<std::string>());
      r.presented = o.at("presented").get<std::size_t>();
      r.shortfall = o.at("shortfall").get<std::size_t>();
      r.cursor = o.at("cursor").get<std::size_t>();
      if (!o.at("f1").is_null()) r.f1 = o.at("f1").get<double>();
      s.rounds.push_back(r);
    }
    s.bootstrap = records_from(j.at("bootstrap"));
    s.gold = records_from(j.at("gold"));
    s.test = records_from(j.at("test"));
    if (!s.test_digest.empty() && test_set_digest(s.test) != s.test_digest)
      throw FormatError("test set does not match its recorded digest");
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed state: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("malformed state: ") + e.what());
  }
}

void save_state(const LoopState& state, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << state_to_json(state).dump() << '\n';
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoopState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) throw FormatError("state file " + path + " is not valid JSON");
  return state_from_json(j);
}

// ---- annotators ---------------------------------------------------------------

TruthFn truth_from_dataset(std::span<const LabeledParagraph> gold) {
  auto index = std::make_shared<std::map<ParagraphKey, LabeledParagraph>>();
  for (const auto& lp : gold) (*index)[key_of(lp.paragraph)] = lp;
  return [index](const LabeledParagraph& lp) {
    const auto it = index->find(key_of(lp.paragraph));
    if (it == index->end() || it->second.text() != lp.text())
      throw std::out_of_range("no truth for paragraph " + lp.paragraph.doc_id + "#" +
                              std::to_string(lp.paragraph.para_index));
    return it->second.spans;
  };
}

SimulatedAnnotator::SimulatedAnnotator(TruthFn truth, double error_rate,
                                       std::uint64_t seed)
    : truth_(std::move(truth)), error_rate_(error_rate), seed_(seed) {
  if (!(error_rate >= 0 && error_rate <= 1))
    throw std::invalid_argument("error_rate must lie in [0, 1]");
}

LabeledParagraph SimulatedAnnotator::annotate(const LabeledParagraph& silver) const {
  LabeledParagraph out = silver;
  out.provenance = Provenance::kGold;
  auto truth = truth_(silver);
  std::sort(truth.begin(), truth.end(),
            [](const Span& a, const Span& b) { return a.token_start < b.token_start; });
  const std::size_t n = silver.tokens.size();
  Rng rng(mix_seed(seed_, hash_bytes(silver.paragraph.doc_id,
                                     hash_bytes(std::to_string(silver.paragraph.para_index)))));

  // owner[t] = index into `kept` + 1, or 0 when free.
  std::vector<std::size_t> owner(n, 0);
  std::vector<std::pair<std::size_t, std::size_t>> kept;
  for (const auto& s : truth) {
    kept.emplace_back(s.token_start, s.token_end);
    for (std::size_t t = s.token_start; t <= s.token_end; ++t) owner[t] = kept.size();
  }
  std::vector<bool> dropped(kept.size(), false);
  std::vector<std::size_t> spurious;
  const std::size_t entities = kept.size();
  for (std::size_t i = 0; i < entities; ++i) {
    if (!rng.bernoulli(error_rate_)) continue;
    auto& [s, e] = kept[i];
    switch (rng.below(3)) {
      case 0:
        dropped[i] = true;
        for (std::size_t t = s; t <= e; ++t) owner[t] = 0;
        break;
      case 1:
        if (e + 1 < n && owner[e + 1] == 0) {
          owner[++e] = i + 1;
        } else if (s > 0 && owner[s - 1] == 0) {
          owner[--s] = i + 1;
        }
        break;
      default: {
        std::vector<std::size_t> free;
        for (std::size_t t = 0; t < n; ++t) {
          if (owner[t] == 0 && classify_token(silver.tokens[t].text) == TokenClass::kWord)
            free.push_back(t);
        }
        if (!free.empty()) {
          const std::size_t t = free[rng.below(free.size())];
          owner[t] = kept.size() + spurious.size() + 1;
          spurious.push_back(t);
        }
      }
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> final_spans;
  for (std::size_t i = 0; i < entities; ++i) {
    if (!dropped[i]) final_spans.push_back(kept[i]);
  }
  for (std::size_t t : spurious) final_spans.emplace_back(t, t);
  std::sort(final_spans.begin(), final_spans.end());
  out.spans.clear();
  for (const auto& [s, e] : final_spans) out.spans.push_back(make_span(out.tokens, s, e));
  validate(out);
  return out;
}

std::vector<LabeledParagraph> SimulatedAnnotator::verify(
    std::span<const LabeledParagraph> silver) {
  ++calls_;
  std::vector<LabeledParagraph> out;
  out.reserve(silver.size());
  for (const auto& lp : silver) out.push_back(annotate(lp));
  return out;
}

// ---- selection -----------------------------------------------------------------

bool is_uncertain(std::span<const double> confidences, const LoopParams& params) {
  return std::any_of(confidences.begin(), confidences.end(), [&](double c) {
    return c >= params.conf_min && c <= params.conf_max;
  });
}

Selection select_uncertain(const TaggerModel& model, CorpusStream& stream,
                           std::size_t count, const LoopParams& params) {
  Selection sel;
  while (sel.paragraphs.size() < count) {
    auto p = stream.next();
    if (!p) {
      sel.exhausted = true;
      break;
    }
    ++sel.scanned;
    LabeledParagraph lp = make_labeled(std::move(*p), Provenance::kSilverModel);
    if (!is_uncertain(model.confidences(lp.tokens), params)) continue;
    lp.spans = model.predict_spans(lp.tokens);
    sel.paragraphs.push_back(std::move(lp));
  }
  sel.shortfall = count - sel.paragraphs.size();
  return sel;
}

// ---- phases --------------------------------------------------------------------

namespace {

void say(const LoopConfig& cfg, const std::string& msg) {
  if (cfg.log) cfg.log(msg);
}

void checkpoint(const LoopConfig& cfg, LoopState& state, const CorpusStream& stream) {
  state.cursor = stream.cursor();
  if (cfg.checkpoint) cfg.checkpoint(state);
}

std::vector<LabeledParagraph> ask(Annotator& annotator,
                                  const std::vector<LabeledParagraph>& silver) {
  auto gold = annotator.verify(silver);
  if (gold.size() != silver.size())
    throw std::runtime_error("annotator returned " + std::to_string(gold.size()) +
                             " paragraphs for " + std::to_string(silver.size()));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].paragraph != silver[i].paragraph)
      throw std::runtime_error("annotator changed paragraph " + std::to_string(i) +
                               " of the round");
    gold[i].provenance = Provenance::kGold;
    validate(gold[i]);
  }
  return gold;
}

TrainConfig round_train(const LoopConfig& cfg, const LoopState& state) {
  TrainConfig t = cfg.train;
  t.seed = round_seed(state.run_seed, state.round);
  return t;
}

std::string fmt_f1(double f1) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.4f", f1);
  return buf;
}

void split_test_set(LoopState& state, const LoopConfig& cfg) {
  const std::size_t nt = std::min(state.params.nt, state.bootstrap.size());
  state.test.assign(state.bootstrap.begin(), state.bootstrap.begin() + nt);
  state.gold.assign(state.bootstrap.begin() + nt, state.bootstrap.end());
  state.test_digest = test_set_digest(state.test);
  if (state.guard_split == 0) state.guard_split = state.bootstrap.size() * 6 / 10;
  state.phase = Phase::kC;
  say(cfg, "phase B done: |T|=" + std::to_string(state.test.size()) +
               " |G|=" + std::to_string(state.gold.size()));
}

}  // namespace

LoopState run_bootstrap(CorpusStream& stream, Annotator& annotator,
                        const LoopConfig& config) {
  if (!config.lexicon) throw std::invalid_argument("bootstrap needs a lexicon");
  config.params.check();
  LoopState state;
  state.params = config.params;
  state.stream_seed = stream.seed();
  state.run_seed = config.run_seed;
  state.corpus_digest = corpus_digest(stream.paragraphs());

  std::vector<LabeledParagraph> silver;
  while (silver.size() < config.params.n0) {
    auto p = stream.next();
    if (!p) {
      state.exhausted = true;
      break;
    }
    auto lp = auto_label(*p, *config.lexicon);
    if (!lp.spans.empty()) silver.push_back(std::move(lp));
  }
  RoundRecord rec{0, Phase::kA, silver.size(), config.params.n0 - silver.size(),
                  stream.cursor(), std::nullopt};
  state.bootstrap = ask(annotator, silver);
  state.rounds.push_back(rec);
  state.round = 1;
  state.phase = Phase::kB;
  say(config, "phase A: bootstrap of " + std::to_string(state.bootstrap.size()) +
                  " paragraphs" + (state.exhausted ? " (stream exhausted)" : ""));
  checkpoint(config, state, stream);
  return state;
}

void run_build_test_set(LoopState& state, CorpusStream& stream, Annotator& annotator,
                        const LoopConfig& config) {
  if (state.phase != Phase::kB) throw std::logic_error("phase B entered out of order");
  if (state.bootstrap.empty())
    throw std::runtime_error("bootstrap is empty: no paragraph matched the lexicon");
  while (state.bootstrap.size() < state.params.nt && !state.exhausted) {
    const std::size_t split =
        std::max<std::size_t>(1, state.bootstrap.size() * 6 / 10);
    const std::span<const LabeledParagraph> b(state.bootstrap);
    const auto model = train(b.first(split), round_train(config, state), config.features,
                             config.lexicon, b.subspan(split));
    std::optional<double> f1;
    if (split < b.size()) f1 = prf1(evaluate_model(model, b.subspan(split))).f1;

    auto sel = select_uncertain(model, stream, state.params.n, state.params);
    state.guard_split = split;
    if (sel.paragraphs.empty()) {
      state.exhausted = true;
      break;
    }
    RoundRecord rec{state.round, Phase::kB, sel.paragraphs.size(), sel.shortfall,
                    stream.cursor(), f1};
    auto verified = ask(annotator, sel.paragraphs);
    state.bootstrap.insert(state.bootstrap.end(), verified.begin(), verified.end());
    state.rounds.push_back(rec);
    state.exhausted = sel.exhausted;
    ++state.round;
    say(config, "phase B round " + std::to_string(rec.round) + ": |B|=" +
                    std::to_string(state.bootstrap.size()) +
                    (f1 ? " split F1=" + fmt_f1(*f1) : std::string()));
    checkpoint(config, state, stream);
  }
  split_test_set(state, config);
  checkpoint(config, state, stream);
}

void run_build_labeled_set(LoopState& state, CorpusStream& stream,
                           Annotator& annotator, const LoopConfig& config) {
  if (state.phase != Phase::kC) throw std::logic_error("phase C entered out of order");
  while (true) {
    if (test_set_digest(state.test) != state.test_digest)
      throw std::logic_error("test set changed during phase C");
    std::optional<TaggerModel> model;
    std::optional<double> f1;
    if (state.gold.empty()) {
      // Nothing to train on yet: use the last phase-B training split for
      // selection only. It overlaps T, so no F1 is recorded for it.
      const std::size_t k = std::clamp<std::size_t>(state.guard_split, 1, state.test.size());
      if (state.test.empty()) {
        state.phase = Phase::kDone;
        break;
      }
      model.emplace(train(std::span(state.test).first(k), round_train(config, state),
                          config.features, config.lexicon));
      say(config, "phase C round " + std::to_string(state.round) +
                      ": G empty, selecting with the phase-B model");
    } else {
      model.emplace(train(state.gold, round_train(config, state), config.features,
                          config.lexicon));
      f1 = prf1(evaluate_model(*model, state.test)).f1;
      state.f1_history.emplace_back(state.round, *f1);
      const bool stop = should_stop(state.f1_history, state.params.epsilon);
      say(config, "phase C round " + std::to_string(state.round) + ": |G|=" +
                      std::to_string(state.gold.size()) + " F1 on T=" + fmt_f1(*f1));
      if (stop) {
        state.phase = Phase::kDone;
        break;
      }
    }
    auto sel = select_uncertain(*model, stream, state.params.n, state.params);
    if (sel.paragraphs.empty()) {
      state.exhausted = true;
      state.phase = Phase::kDone;
      say(config, "stream exhausted");
      break;
    }
    RoundRecord rec{state.round, Phase::kC, sel.paragraphs.size(), sel.shortfall,
                    stream.cursor(), f1};
    auto verified = ask(annotator, sel.paragraphs);
    state.gold.insert(state.gold.end(), verified.begin(), verified.end());
    state.rounds.push_back(rec);
    state.exhausted = sel.exhausted;
    ++state.round;
    checkpoint(config, state, stream);
  }
  checkpoint(config, state, stream);
}

LoopState run_workflow(CorpusStream& stream, Annotator& annotator,
                       const LoopConfig& config, std::optional<LoopState> resume) {
  config.params.check();
  LoopState state;
  if (resume) {
    state = std::move(*resume);
    if (!(state.params == config.params))
      throw std::invalid_argument("resume: loop parameters differ from the saved run");
    if (state.stream_seed != stream.seed())
      throw std::invalid_argument("resume: stream seed differs from the saved run");
    if (state.run_seed != config.run_seed)
      throw std::invalid_argument("resume: run seed differs from the saved run");
    if (state.corpus_digest != corpus_digest(stream.paragraphs()))
      throw std::invalid_argument("resume: corpus differs from the saved run");
    stream.seek(state.cursor);
    say(config, std::string("resuming in phase ") + to_string(state.phase) +
                    " at round " + std::to_string(state.round));
  } else {
    state = run_bootstrap(stream, annotator, config);
  }
  if (state.phase == Phase::kA)
    throw std::logic_error("saved state is in phase A; bootstrap never completed");
  if (state.phase == Phase::kB) run_build_test_set(state, stream, annotator, config);
  if (state.phase == Phase::kC) run_build_labeled_set(state, stream, annotator, config);
  return state;
}

}  // namespace nerloop
