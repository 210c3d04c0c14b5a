#pragma once

// Test-only helpers: random fixtures and brute-force oracles that are kept
// independent of the library code paths they check.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "nerloop/annotations.h"
#include "nerloop/crf.h"

namespace nerloop::testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("nerloop_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Random paragraph text drawn from a word pool with punctuation, numbers and
// a few multi-byte words.
inline std::string random_text(std::mt19937_64& rng, std::size_t min_words = 1,
                               std::size_t max_words = 30) {
  static const std::vector<std::string> pool = {
      "Ribavirin", "was", "administered", "once", "daily", "sofosbuvir", ",",
      ".", "the", "patients", "received", "300", "mg", "2.5%", "once/day",
      "(", ")", "naïve", "µg", "α-interferon", "fusidic", "acid", "—", "IL-6",
      "of", "and", "Remdesivir", "inhibits", "RNA", "polymerase", "Vero",
      "cells", "E6", "it's", "1,000", "?", "!", "Treatment", "with", "ACE2"};
  std::uniform_int_distribution<std::size_t> count(min_words, max_words);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::uniform_int_distribution<int> gap(0, 9);
  std::string text;
  const std::size_t n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      const int g = gap(rng);
      text += g == 0 ? "  " : (g == 1 ? "" : " ");
    }
    text += pool[pick(rng)];
  }
  return text;
}

// Random non-overlapping spans over a tokenized paragraph.
inline std::vector<Span> random_spans(std::mt19937_64& rng,
                                      const std::vector<Token>& tokens) {
  std::vector<Span> spans;
  std::bernoulli_distribution open(0.25);
  std::uniform_int_distribution<std::size_t> len(1, 3);
  std::size_t i = 0;
  while (i < tokens.size()) {
    if (open(rng)) {
      const std::size_t last = std::min(tokens.size() - 1, i + len(rng) - 1);
      spans.push_back({tokens[i].start, tokens[last].end, i, last, "drug"});
      i = last + 2;
    } else {
      ++i;
    }
  }
  return spans;
}

inline LabeledParagraph random_labeled(std::mt19937_64& rng, std::size_t index) {
  LabeledParagraph lp =
      make_labeled({"doc" + std::to_string(index / 4), index % 4, random_text(rng)});
  lp.spans = random_spans(rng, lp.tokens);
  return lp;
}

// Every labeling of length n over {B, I, O}, in lexicographic order.
inline std::vector<IobSequence> all_labelings(std::size_t n) {
  std::vector<IobSequence> out;
  std::size_t total = 1;
  for (std::size_t k = 0; k < n; ++k) total *= 3;
  for (std::size_t code = 0; code < total; ++code) {
    IobSequence seq(n);
    std::size_t c = code;
    for (std::size_t k = 0; k < n; ++k) {
      seq[k] = static_cast<Iob>(c % 3);
      c /= 3;
    }
    out.push_back(seq);
  }
  return out;
}

// Direct score: sum of emissions and transitions along the path.
inline double brute_score(const Lattice& lat, const IobSequence& y) {
  double s = 0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    s += lat.emissions[t * 3 + static_cast<int>(y[t])];
    if (t) s += lat.transitions[static_cast<int>(y[t - 1]) * 3 + static_cast<int>(y[t])];
  }
  return s;
}

inline bool brute_valid(const IobSequence& y) {
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (y[t] == Iob::I && (t == 0 || y[t - 1] == Iob::O)) return false;
  }
  return true;
}

struct BruteForce {
  IobSequence best_valid;
  double best_valid_score = -std::numeric_limits<double>::infinity();
  std::vector<double> node;  // n x 3
  std::vector<double> edge;  // (n-1) x 9
  double log_z = 0;
};

// Enumerates all 3^n labelings: argmax among valid ones, and exact node and
// edge marginals of the unconstrained distribution.
inline BruteForce enumerate(const Lattice& lat) {
  BruteForce r;
  const std::size_t n = lat.length;
  const auto labelings = all_labelings(n);
  std::vector<double> scores;
  double max_score = -std::numeric_limits<double>::infinity();
  for (const auto& y : labelings) {
    const double s = brute_score(lat, y);
    scores.push_back(s);
    max_score = std::max(max_score, s);
    if (brute_valid(y) && s > r.best_valid_score) {
      r.best_valid_score = s;
      r.best_valid = y;
    }
  }
  double z = 0;
  for (double s : scores) z += std::exp(s - max_score);
  r.log_z = max_score + std::log(z);
  r.node.assign(n * 3, 0.0);
  r.edge.assign(n > 1 ? (n - 1) * 9 : 0, 0.0);
  for (std::size_t k = 0; k < labelings.size(); ++k) {
    const double p = std::exp(scores[k] - r.log_z);
    const auto& y = labelings[k];
    for (std::size_t t = 0; t < n; ++t) {
      r.node[t * 3 + static_cast<int>(y[t])] += p;
      if (t + 1 < n)
        r.edge[t * 9 + static_cast<int>(y[t]) * 3 + static_cast<int>(y[t + 1])] += p;
    }
  }
  return r;
}

inline Lattice random_lattice(std::mt19937_64& rng, std::size_t n, double scale = 2.0) {
  std::normal_distribution<double> w(0.0, scale);
  Lattice lat;
  lat.length = n;
  lat.emissions.resize(n * 3);
  for (auto& e : lat.emissions) e = w(rng);
  for (auto& t : lat.transitions) t = w(rng);
  return lat;
}

struct RandomInstance {
  CrfParameters params;
  std::vector<CompiledSequence> data;
};

inline RandomInstance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> num_features(1, 8);
  std::uniform_int_distribution<std::size_t> length(1, 6);
  std::uniform_int_distribution<int> label(0, 2);
  std::normal_distribution<double> weight(0.0, 1.0);
  std::bernoulli_distribution active(0.4);
  RandomInstance inst{CrfParameters(num_features(rng)), {}};
  for (auto& v : inst.params.values) v = weight(rng);
  const int sequences = 1 + static_cast<int>(rng() % 3);
  for (int s = 0; s < sequences; ++s) {
    CompiledSequence seq;
    const std::size_t n = length(rng);
    for (std::size_t t = 0; t < n; ++t) {
      auto& ids = seq.features.emplace_back();
      for (std::uint32_t f = 0; f < inst.params.num_features; ++f) {
        if (active(rng)) ids.push_back(f);
      }
      seq.labels.push_back(static_cast<Iob>(label(rng)));
    }
    inst.data.push_back(std::move(seq));
  }
  return inst;
}

struct GradientError {
  double componentwise = 0.0;  // max_k |a-n| / max(1, |a|, |n|)
  double normwise = 0.0;       // |a-n|_2 / max(|a|_2, |n|_2)
};

// Analytic objective gradient against central differences (h = 1e-5).
inline GradientError gradient_error(const RandomInstance& inst, double l2) {
  std::vector<double> analytic(inst.params.values.size(), 0.0);
  objective(inst.params, inst.data, l2, analytic);
  const double h = 1e-5;
  GradientError err;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  CrfParameters p = inst.params;
  for (std::size_t k = 0; k < p.values.size(); ++k) {
    const double saved = p.values[k];
    p.values[k] = saved + h;
    const double up = objective(p, inst.data, l2);
    p.values[k] = saved - h;
    const double down = objective(p, inst.data, l2);
    p.values[k] = saved;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(analytic[k] - numeric) /
                       std::max(1.0, std::max(std::abs(analytic[k]), std::abs(numeric)));
    err.componentwise = std::max(err.componentwise, rel);
    diff2 += (analytic[k] - numeric) * (analytic[k] - numeric);
    a2 += analytic[k] * analytic[k];
    n2 += numeric * numeric;
  }
  const double scale = std::sqrt(std::max({a2, n2, 1e-300}));
  err.normwise = std::sqrt(diff2) / scale;
  return err;
}

}  // namespace nerloop::testing
