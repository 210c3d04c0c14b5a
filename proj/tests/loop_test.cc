#include <gtest/gtest.h>

#include <random>

#include "nerloop/dataset.h"
#include "nerloop/error.h"
#include "nerloop/eval.h"
#include "nerloop/loop.h"
#include "nerloop/synth.h"
#include "test_util.h"

namespace nerloop {
namespace {

// Accepts the silver labels as they are, recording every round.
struct EchoAnnotator : Annotator {
  std::vector<std::vector<LabeledParagraph>> seen;
  std::vector<LabeledParagraph> verify(std::span<const LabeledParagraph> silver) override {
    seen.emplace_back(silver.begin(), silver.end());
    std::vector<LabeledParagraph> out(silver.begin(), silver.end());
    for (auto& lp : out) lp.provenance = Provenance::kGold;
    return out;
  }
};

// Forwards to another annotator and throws on call number `fail_on`.
struct CrashingAnnotator : Annotator {
  Annotator& inner;
  std::size_t fail_on;
  std::size_t calls = 0;
  CrashingAnnotator(Annotator& a, std::size_t k) : inner(a), fail_on(k) {}
  std::vector<LabeledParagraph> verify(std::span<const LabeledParagraph> silver) override {
    if (++calls == fail_on) throw std::runtime_error("reviewer walked away");
    return inner.verify(silver);
  }
};

const SynthCorpus& corpus() {
  static const SynthCorpus sc = [] {
    SynthConfig cfg;
    cfg.paragraphs = 1500;
    cfg.lexicon_terms = 120;
    cfg.unlisted_terms = 40;
    cfg.seed = 3;
    return generate_synthetic(cfg);
  }();
  return sc;
}

LoopConfig small_config() {
  LoopConfig cfg;
  cfg.params.n0 = 30;
  cfg.params.n = 15;
  cfg.params.nt = 60;
  cfg.train.max_epochs = 12;
  cfg.lexicon = std::make_shared<const Lexicon>(corpus().lexicon);
  cfg.run_seed = 17;
  return cfg;
}

TEST(LoopParams, DefaultsAndChecks) {
  LoopParams p;
  EXPECT_EQ(p.n0, 278u);
  EXPECT_EQ(p.n, 120u);
  EXPECT_EQ(p.nt, 500u);
  EXPECT_EQ(p.epsilon, 0.0);
  EXPECT_EQ(p.conf_min, 0.45);
  EXPECT_EQ(p.conf_max, 0.55);
  EXPECT_NO_THROW(p.check());
  p.conf_min = 0.6;
  EXPECT_THROW(p.check(), std::invalid_argument);
  p = {};
  p.nt = 0;
  EXPECT_THROW(p.check(), std::invalid_argument);
}

TEST(Selection, BandIsInclusive) {
  LoopParams p;
  EXPECT_TRUE(is_uncertain(std::vector{0.1, 0.50, 0.9}, p));
  EXPECT_TRUE(is_uncertain(std::vector{0.45}, p));
  EXPECT_TRUE(is_uncertain(std::vector{0.55}, p));
  EXPECT_FALSE(is_uncertain(std::vector{0.44, 0.56, 0.0, 1.0}, p));
  EXPECT_FALSE(is_uncertain(std::vector<double>{}, p));
}

TEST(Selection, ShortfallAndExhaustion) {
  // An untrained model puts every token at 2/3; blank paragraphs have no
  // tokens and never qualify.
  std::vector<Paragraph> ps;
  for (std::size_t i = 0; i < 200; ++i)
    ps.push_back({"d", i, i % 5 < 2 ? "some words here" : "   "});
  TaggerModel untrained;
  LoopParams band;
  CorpusStream s1(ps, 1);
  auto none = select_uncertain(untrained, s1, 10, band);
  EXPECT_TRUE(none.paragraphs.empty());
  EXPECT_TRUE(none.exhausted);
  EXPECT_EQ(none.scanned, 200u);

  band.conf_min = 0.6;
  band.conf_max = 0.7;
  CorpusStream s2(ps, 1);
  auto some = select_uncertain(untrained, s2, 120, band);
  EXPECT_EQ(some.paragraphs.size(), 80u);
  EXPECT_EQ(some.shortfall, 40u);
  EXPECT_TRUE(some.exhausted);
  for (const auto& lp : some.paragraphs) EXPECT_EQ(lp.provenance, Provenance::kSilverModel);

  CorpusStream s3(ps, 1);
  auto enough = select_uncertain(untrained, s3, 10, band);
  EXPECT_EQ(enough.paragraphs.size(), 10u);
  EXPECT_FALSE(enough.exhausted);
  EXPECT_EQ(s3.cursor(), enough.scanned);
}

TEST(StopRule, EpsilonSemantics) {
  using H = std::vector<std::pair<std::size_t, double>>;
  EXPECT_FALSE(should_stop(H{{1, .60}}, 0));
  EXPECT_FALSE(should_stop(H{{1, .60}, {2, .65}}, 0));
  EXPECT_TRUE(should_stop(H{{1, .60}, {2, .65}, {3, .65}}, 0));
  EXPECT_TRUE(should_stop(H{{1, .60}, {2, .59}}, 0));
  EXPECT_TRUE(should_stop(H{{1, .60}, {2, .62}}, 0.05));
}

TEST(SimulatedAnnotator, NoiseModel) {
  const auto gold = corpus().gold();
  const auto truth = truth_from_dataset(gold);
  SimulatedAnnotator perfect(truth, 0.0, 1);
  SimulatedAnnotator noisy(truth, 0.2, 1);
  SimulatedAnnotator all_wrong(truth, 1.0, 1);
  EXPECT_THROW(SimulatedAnnotator(truth, 1.5, 1), std::invalid_argument);

  EvalCounts noisy_counts, wrong_counts;
  std::size_t entities = 0, changed = 0;
  for (const auto& g : gold) {
    auto silver = make_labeled(g.paragraph, Provenance::kSilverModel);
    const auto p = perfect.annotate(silver);
    ASSERT_EQ(p.spans, g.spans);
    ASSERT_EQ(p.provenance, Provenance::kGold);
    const auto n = noisy.annotate(silver);
    ASSERT_EQ(n, noisy.annotate(silver));  // order independent
    noisy_counts += score_entities(g.spans, n.spans);
    wrong_counts += score_entities(g.spans, all_wrong.annotate(silver).spans);
    entities += g.spans.size();
    for (const auto& s : g.spans) {
      changed += std::find(n.spans.begin(), n.spans.end(), s) == n.spans.end();
    }
  }
  ASSERT_GT(entities, 1000u);
  // Drops and shifts remove a true span; adds keep it.
  const double removed = static_cast<double>(changed) / entities;
  EXPECT_NEAR(removed, 0.2 * 2 / 3, 0.03);
  EXPECT_EQ(wrong_counts.tp + wrong_counts.boundary_overlaps + wrong_counts.fn, entities);
  EXPECT_LT(prf1(wrong_counts).f1, prf1(noisy_counts).f1);
  EXPECT_THROW(perfect.annotate(make_labeled({"nope", 0, "x"}, Provenance::kGold)),
               std::out_of_range);
}

TEST(Bootstrap, PartialWhenLexiconMatchesRunOut) {
  Lexicon lex;
  lex.add("ribavirin");
  std::vector<Paragraph> ps = {{"a", 0, "Ribavirin helps."},
                               {"a", 1, "Nothing here."},
                               {"b", 0, "We gave ribavirin twice."},
                               {"b", 1, "Also nothing."},
                               {"c", 0, "ribavirin and more ribavirin"}};
  CorpusStream stream(ps, 5);
  EchoAnnotator echo;
  LoopConfig cfg;
  cfg.params.n0 = 5;
  cfg.lexicon = std::make_shared<const Lexicon>(lex);
  const auto state = run_bootstrap(stream, echo, cfg);
  EXPECT_EQ(state.bootstrap.size(), 3u);
  EXPECT_TRUE(state.exhausted);
  EXPECT_EQ(state.phase, Phase::kB);
  ASSERT_EQ(echo.seen.size(), 1u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_FALSE(echo.seen[0][i].spans.empty());
    EXPECT_EQ(echo.seen[0][i].provenance, Provenance::kSilverLexicon);
    EXPECT_EQ(state.bootstrap[i].spans, echo.seen[0][i].spans);
    EXPECT_EQ(state.bootstrap[i].provenance, Provenance::kGold);
  }
}

TEST(BuildTestSet, RoundArithmetic) {
  SynthConfig sc_cfg;
  sc_cfg.paragraphs = 1500;
  sc_cfg.drug_paragraph_rate = 0.9;
  const auto sc = generate_synthetic(sc_cfg);
  LoopConfig cfg;
  cfg.params.conf_min = 0.0;  // every paragraph qualifies
  cfg.params.conf_max = 1.0;
  cfg.train.max_epochs = 2;
  cfg.lexicon = std::make_shared<const Lexicon>(sc.lexicon);
  EchoAnnotator echo;
  CorpusStream stream(sc.paragraphs(), 9);
  auto state = run_bootstrap(stream, echo, cfg);
  ASSERT_EQ(state.bootstrap.size(), 278u);
  run_build_test_set(state, stream, echo, cfg);
  EXPECT_EQ(echo.seen.size(), 3u);  // bootstrap + two rounds
  EXPECT_EQ(state.bootstrap.size(), 518u);
  EXPECT_EQ(state.test.size(), 500u);
  EXPECT_EQ(state.gold.size(), 18u);
  EXPECT_EQ(state.phase, Phase::kC);
  for (std::size_t i = 0; i < 500; ++i) EXPECT_EQ(state.test[i], state.bootstrap[i]);

  // nt <= n0: no phase-B round at all.
  cfg.params.nt = 200;
  EchoAnnotator echo2;
  CorpusStream stream2(sc.paragraphs(), 9);
  auto s2 = run_bootstrap(stream2, echo2, cfg);
  run_build_test_set(s2, stream2, echo2, cfg);
  EXPECT_EQ(echo2.seen.size(), 1u);
  EXPECT_EQ(s2.test.size(), 200u);
  EXPECT_EQ(s2.gold.size(), 78u);
}

TEST(Workflow, CompletesAndIsDeterministic) {
  auto cfg = small_config();
  const auto gold = corpus().gold();
  auto run = [&] {
    SimulatedAnnotator ann(truth_from_dataset(gold), 0.2, 5);
    CorpusStream stream(corpus().paragraphs(), 42);
    return run_workflow(stream, ann, cfg);
  };
  const auto a = run();
  EXPECT_EQ(a.phase, Phase::kDone);
  EXPECT_EQ(a.test.size(), 60u);
  EXPECT_FALSE(a.gold.empty());
  EXPECT_FALSE(a.f1_history.empty());
  // One F1 per phase-C round trained on G: every scored entry but the last
  // led to a review round carrying the same score.
  for (std::size_t i = 0; i + 1 < a.f1_history.size(); ++i) {
    const auto [round, f1] = a.f1_history[i];
    const auto it = std::find_if(a.rounds.begin(), a.rounds.end(),
                                 [&](const RoundRecord& r) { return r.round == round; });
    ASSERT_NE(it, a.rounds.end());
    EXPECT_EQ(it->phase, Phase::kC);
    EXPECT_EQ(it->f1, f1);
  }
  std::size_t scored = 0;
  for (const auto& r : a.rounds) scored += r.phase == Phase::kC && r.f1.has_value();
  EXPECT_LE(a.f1_history.size() - scored, 1u);
  for (const auto& t : a.test) {
    for (const auto& g : a.gold) ASSERT_NE(key_of(t.paragraph), key_of(g.paragraph));
  }
  const auto b = run();
  EXPECT_EQ(state_to_json(a).dump(), state_to_json(b).dump());
}

TEST(Workflow, CheckpointSurvivesAnnotatorFailure) {
  auto cfg = small_config();
  const auto dir = testing::temp_dir("loop_ckpt");
  const auto path = (dir / "state.json").string();
  cfg.checkpoint = [&](const LoopState& s) { save_state(s, path); };
  SimulatedAnnotator inner(truth_from_dataset(corpus().gold()), 0.2, 5);
  CrashingAnnotator crash(inner, 2);
  CorpusStream stream(corpus().paragraphs(), 42);
  EXPECT_THROW(run_workflow(stream, crash, cfg), std::runtime_error);
  const auto saved = load_state(path);
  EXPECT_EQ(saved.phase, Phase::kB);
  EXPECT_EQ(saved.round, 1u);
  EXPECT_EQ(saved.bootstrap.size(), 30u);
  EXPECT_EQ(saved.rounds.size(), 1u);
}

void resume_matches(std::size_t crash_call) {
  auto cfg = small_config();
  const auto truth = truth_from_dataset(corpus().gold());
  SimulatedAnnotator ref_ann(truth, 0.2, 5);
  CorpusStream ref_stream(corpus().paragraphs(), 42);
  const auto reference = run_workflow(ref_stream, ref_ann, cfg);

  const auto dir = testing::temp_dir("loop_resume");
  const auto path = (dir / "state.json").string();
  cfg.checkpoint = [&](const LoopState& s) { save_state(s, path); };
  SimulatedAnnotator inner(truth, 0.2, 5);
  CrashingAnnotator crash(inner, crash_call);
  {
    CorpusStream stream(corpus().paragraphs(), 42);
    ASSERT_THROW(run_workflow(stream, crash, cfg), std::runtime_error);
  }
  SimulatedAnnotator fresh(truth, 0.2, 5);
  CorpusStream stream(corpus().paragraphs(), 42);
  const auto resumed = run_workflow(stream, fresh, cfg, load_state(path));
  EXPECT_EQ(state_to_json(resumed).dump(), state_to_json(reference).dump());
  // Completed rounds are not asked again.
  EXPECT_EQ(inner.calls() + fresh.calls(), ref_ann.calls());
}

TEST(Workflow, ResumeMidPhaseB) { resume_matches(3); }
TEST(Workflow, ResumeInPhaseC) { resume_matches(6); }

TEST(Workflow, ResumeRejectsMismatches) {
  auto cfg = small_config();
  SimulatedAnnotator ann(truth_from_dataset(corpus().gold()), 0.0, 5);
  CorpusStream stream(corpus().paragraphs(), 42);
  auto state = run_bootstrap(stream, ann, cfg);
  CorpusStream other_seed(corpus().paragraphs(), 43);
  EXPECT_THROW(run_workflow(other_seed, ann, cfg, state), std::invalid_argument);
  auto changed = cfg;
  changed.params.n = 16;
  CorpusStream same(corpus().paragraphs(), 42);
  EXPECT_THROW(run_workflow(same, ann, changed, state), std::invalid_argument);
  auto ps = corpus().paragraphs();
  ps.pop_back();
  CorpusStream shorter(ps, 42);
  EXPECT_THROW(run_workflow(shorter, ann, cfg, state), std::invalid_argument);
}

TEST(StateFile, RoundTripAndCorruption) {
  auto cfg = small_config();
  SimulatedAnnotator ann(truth_from_dataset(corpus().gold()), 0.2, 5);
  CorpusStream stream(corpus().paragraphs(), 42);
  const auto state = run_workflow(stream, ann, cfg);
  const auto dir = testing::temp_dir("loop_state");
  const auto path = (dir / "s.json").string();
  save_state(state, path);
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  const auto back = load_state(path);
  EXPECT_EQ(back, state);

  auto j = state_to_json(state);
  j["test"][0]["spans"] = nlohmann::ordered_json::array();
  testing::write_file(dir / "tampered.json", j.dump());
  if (!state.test[0].spans.empty()) {
    EXPECT_THROW(load_state((dir / "tampered.json").string()), FormatError);
  }
  testing::write_file(dir / "junk.json", "{\"format\": \"nerloop-state\"");
  EXPECT_THROW(load_state((dir / "junk.json").string()), FormatError);
  testing::write_file(dir / "v2.json", "{\"format\": \"nerloop-state\", \"version\": 2}");
  EXPECT_THROW(load_state((dir / "v2.json").string()), FormatError);
}

}  // namespace
}  // namespace nerloop
