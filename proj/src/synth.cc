#include "nerloop/synth.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>
#include <string_view>

#include "nerloop/rng.h"
#include "nerloop/unicode.h"
#include "nerloop/tokenizer.h"

namespace nerloop {

namespace {

constexpr std::array<std::string_view, 48> kSyllables = {
    "ab", "ac", "al", "am", "ar", "ba", "be", "ca", "ce", "da", "de", "di",
    "do", "el", "en", "fa", "fe", "flu", "ga", "ge", "hy", "ib", "im", "ka",
    "la", "le", "li", "lo", "ma", "me", "mi", "mo", "na", "ne", "ni", "pa",
    "pe", "pi", "pra", "qui", "ra", "re", "ri", "ro", "sa", "ta", "tra", "zo"};

constexpr std::array<std::string_view, 20> kSuffixes = {
    "vir",    "mab",     "cillin",  "mycin",  "azole",    "statin", "olol",
    "pril",   "sartan",  "tinib",   "quine",  "floxacin", "dronate", "setron",
    "tidine", "profen",  "azepam",  "oxetine", "triptan", "parin"};

// {D} drug, {N} number, {P} protein, {C} cell line, {L} place.
constexpr std::array<std::string_view, 24> kDrugTemplates = {
    "Patients received {D} at a dose of {N} mg daily.",
    "Treatment with {D} reduced viral load by {N}% within a week.",
    "{D} was administered intravenously for {N} days.",
    "We compared {D} and {D} in a randomized open-label trial.",
    "The combination of {D} with {D} showed synergistic activity against the virus.",
    "Resistance to {D} was observed in {N} clinical isolates.",
    "In vitro, {D} inhibited replication with an EC50 of {N} μM.",
    "A cohort of {N} subjects was given {D} or placebo.",
    "Docking studies suggest that {D} binds the main protease of the virus.",
    "{D} ({N} mg/kg) was well tolerated in mice.",
    "Clinical trials of {D} are ongoing in {L}.",
    "Prior use of {D} was associated with lower mortality.",
    "Several repurposed agents, including {D}, {D} and {D}, were screened.",
    "The half-life of {D} is approximately {N} hours.",
    "Adverse events were more frequent in the {D} arm.",
    "{D} reduced {P} expression in {C} cells.",
    "No benefit of {D} over standard care was found.",
    "Plasma concentrations of {D} exceeded the EC90 after {N} doses.",
    "Physicians prescribed {D} off-label to {N} patients.",
    "A loading dose of {D} was followed by maintenance therapy.",
    "The antiviral {D} shortened time to recovery.",
    "Pretreatment with {D} blocked {P} activation.",
    "Among hospitalized patients, {D} use was common.",
    "Guidelines recommend against {D} outside of trials."};

constexpr std::array<std::string_view, 20> kPlainTemplates = {
    "Cells were incubated at {N} °C for {N} hours.",
    "Expression of {P} was measured by qPCR.",
    "{C} cells were infected at an MOI of {N}.",
    "The {P} receptor mediates viral entry into host cells.",
    "Samples were collected from {N} hospitals in {L}.",
    "Mortality was {N}% in the control group.",
    "Figure {N} shows the distribution of confirmed cases.",
    "Symptoms included fever, cough and fatigue.",
    "{P} levels correlated with disease severity.",
    "The study was approved by the ethics committee of {L}.",
    "Patients were followed for {N} days after discharge.",
    "Binding of {P} to the spike protein was quantified.",
    "Viral RNA was extracted from {C} supernatants.",
    "The median age of the cohort was {N} years.",
    "Data were analysed with a mixed-effects model.",
    "Lockdown measures in {L} reduced transmission by {N}%.",
    "Serum {P} was elevated in severe cases.",
    "Imaging revealed bilateral ground-glass opacities.",
    "Statistical significance was set at p < 0.05.",
    "Transmission clusters were traced in {L}."};

constexpr std::array<std::string_view, 10> kProteins = {
    "ACE2", "TMPRSS2", "interleukin-6", "ferritin", "D-dimer",
    "TNF-α", "furin", "cathepsin L", "IFN-β", "CRP"};
constexpr std::array<std::string_view, 6> kCells = {
    "Vero E6", "Calu-3", "HEK293T", "Huh7", "A549", "Caco-2"};
constexpr std::array<std::string_view, 8> kPlaces = {
    "Wuhan", "Lombardy", "Seoul", "New York", "Madrid", "Tehran", "São Paulo", "Berlin"};

template <class A>
std::string_view pick(Rng& rng, const A& arr) {
  return arr[rng.below(arr.size())];
}

std::string make_name(Rng& rng) {
  std::string name;
  const std::size_t parts = 1 + rng.below(2);
  for (std::size_t i = 0; i < parts; ++i) name += pick(rng, kSyllables);
  // About one in twelve names is a two-word acid.
  if (rng.below(12) == 0) return name + "ic acid";
  return name + std::string(pick(rng, kSuffixes));
}

std::string number(Rng& rng) {
  switch (rng.below(3)) {
    case 0: return std::to_string(1 + rng.below(20));
    case 1: return std::to_string(10 * (1 + rng.below(60)));
    default: return std::to_string(rng.below(10)) + "." + std::to_string(rng.below(10));
  }
}

// Zipf-like pick so a few names dominate, as in real corpora.
std::size_t zipf(Rng& rng, std::size_t n) {
  const double u = rng.uniform();
  const auto i = static_cast<std::size_t>(std::pow(static_cast<double>(n), u)) - 1;
  return std::min(i, n - 1);
}

struct Built {
  std::string text;
  std::vector<std::pair<std::size_t, std::size_t>> drugs;  // byte ranges
};

void fill(std::string_view tmpl, Rng& rng, const SynthCorpus& sc,
          const SynthConfig& cfg, Built& out) {
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] != '{') {
      out.text += tmpl[i++];
      continue;
    }
    const char slot = tmpl[i + 1];
    i += 3;
    std::string value;
    if (slot == 'D') {
      const bool unlisted = !sc.unlisted.empty() && rng.bernoulli(cfg.unlisted_mention_rate);
      const auto& pool = unlisted ? sc.unlisted : sc.listed;
      value = pool[zipf(rng, pool.size())];
      const bool sentence_start = out.text.empty() || out.text.ends_with(". ");
      if (sentence_start) value[0] = static_cast<char>(value[0] - 'a' + 'A');
      out.drugs.emplace_back(out.text.size(), out.text.size() + value.size());
    } else if (slot == 'N') {
      value = number(rng);
    } else if (slot == 'P') {
      value = pick(rng, kProteins);
    } else if (slot == 'C') {
      value = pick(rng, kCells);
    } else {
      value = pick(rng, kPlaces);
    }
    out.text += value;
  }
}

}  // namespace

std::vector<Paragraph> SynthCorpus::paragraphs() const {
  std::vector<Paragraph> out;
  for (const auto& d : documents) {
    for (std::size_t i = 0; i < d.paragraphs.size(); ++i)
      out.push_back({d.doc_id, i, d.paragraphs[i]});
  }
  return out;
}

std::vector<LabeledParagraph> SynthCorpus::gold() const {
  std::vector<LabeledParagraph> out;
  for (const auto& p : paragraphs()) out.push_back(truth.at(key_of(p)));
  return out;
}

SynthCorpus generate_synthetic(const SynthConfig& cfg) {
  Rng rng(cfg.seed);
  SynthCorpus sc;
  std::set<std::string> seen;
  const auto& stop = StopwordList::english();
  while (seen.size() < cfg.lexicon_terms + cfg.unlisted_terms) {
    auto name = make_name(rng);
    if (stop.contains(name) || !seen.insert(name).second) continue;
    (sc.listed.size() < cfg.lexicon_terms ? sc.listed : sc.unlisted).push_back(name);
  }
  for (const auto& name : sc.listed) sc.lexicon.add(name);

  const std::size_t per_doc = std::max<std::size_t>(1, cfg.paragraphs_per_doc);
  for (std::size_t p = 0; p < cfg.paragraphs; ++p) {
    if (p % per_doc == 0) {
      char id[32];
      std::snprintf(id, sizeof id, "synth-%06zu", p / per_doc);
      sc.documents.push_back({id, {}});
    }
    Built b;
    const bool drug_para = rng.bernoulli(cfg.drug_paragraph_rate);
    const std::size_t sentences = 2 + rng.below(4);
    bool any_drug = false;
    for (std::size_t s = 0; s < sentences; ++s) {
      if (!b.text.empty()) b.text += ' ';
      // A drug paragraph gets at least one drug sentence, in its last slot
      // if nothing earlier drew one.
      const bool drug_sentence =
          drug_para && (rng.bernoulli(0.5) || (!any_drug && s + 1 == sentences));
      any_drug = any_drug || drug_sentence;
      fill(drug_sentence ? pick(rng, kDrugTemplates) : pick(rng, kPlainTemplates),
           rng, sc, cfg, b);
    }
    auto& doc = sc.documents.back();
    Paragraph para{doc.doc_id, doc.paragraphs.size(), b.text};
    doc.paragraphs.push_back(b.text);

    LabeledParagraph lp = make_labeled(para, Provenance::kGold);
    std::vector<Span> spans;
    // Tokens carry code-point offsets; the recorded ranges are bytes.
    const auto offsets = char_offsets(b.text);
    for (const auto& [bs, be] : b.drugs) {
      const auto cs = static_cast<std::size_t>(
          std::lower_bound(offsets.begin(), offsets.end(), bs) - offsets.begin());
      const auto ce = static_cast<std::size_t>(
          std::lower_bound(offsets.begin(), offsets.end(), be) - offsets.begin());
      std::size_t first = lp.tokens.size(), last = 0;
      for (std::size_t t = 0; t < lp.tokens.size(); ++t) {
        if (lp.tokens[t].start >= cs && lp.tokens[t].end <= ce) {
          first = std::min(first, t);
          last = t;
        }
      }
      spans.push_back(make_span(lp.tokens, first, last));
    }
    lp.spans = std::move(spans);
    validate(lp);
    sc.truth.emplace(key_of(para), std::move(lp));
  }
  return sc;
}

}  // namespace nerloop
