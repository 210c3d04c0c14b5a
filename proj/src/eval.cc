#include "nerloop/eval.h"

#include <algorithm>
#include <iomanip>
#include <stdexcept>

namespace nerloop {

EvalCounts& EvalCounts::operator+=(const EvalCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  boundary_overlaps += o.boundary_overlaps;
  multi_gold_overlaps += o.multi_gold_overlaps;
  return *this;
}

namespace {

bool overlaps(const Span& a, const Span& b) {
  return a.token_start <= b.token_end && b.token_start <= a.token_end;
}

bool same_range(const Span& a, const Span& b) {
  return a.token_start == b.token_start && a.token_end == b.token_end;
}

}  // namespace

EvalCounts score_entities(std::span<const Span> gold, std::span<const Span> pred) {
  EvalCounts c;
  std::vector<bool> matched(gold.size(), false);
  std::vector<bool> excused(gold.size(), false);
  for (const auto& p : pred) {
    bool exact = false;
    for (std::size_t g = 0; g < gold.size(); ++g) {
      if (same_range(gold[g], p)) {
        matched[g] = true;
        exact = true;
        break;
      }
    }
    if (exact) {
      ++c.tp;
      continue;
    }
    ++c.fp;
    std::size_t touched = 0;
    for (std::size_t g = 0; g < gold.size(); ++g) {
      if (overlaps(gold[g], p)) {
        excused[g] = true;
        ++touched;
      }
    }
    if (touched > 1) ++c.multi_gold_overlaps;
  }
  for (std::size_t g = 0; g < gold.size(); ++g) {
    if (matched[g]) continue;
    if (excused[g]) {
      ++c.boundary_overlaps;
    } else {
      ++c.fn;
    }
  }
  return c;
}

EvalCounts score_paragraph(const LabeledParagraph& gold,
                           const LabeledParagraph& pred) {
  if (gold.text() != pred.text())
    throw std::invalid_argument("cannot score spans of different paragraphs");
  return score_entities(gold.spans, pred.spans);
}

Prf1 prf1(const EvalCounts& c) {
  Prf1 r;
  if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / (c.tp + c.fn);
  if (r.precision + r.recall > 0)
    r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

EvalCounts evaluate_model(const TaggerModel& model,
                          std::span<const LabeledParagraph> gold) {
  EvalCounts total;
  for (const auto& lp : gold) {
    total += score_entities(lp.spans, model.predict_spans(lp.tokens));
  }
  return total;
}

std::pair<std::size_t, std::size_t> FoldSpec::range(std::size_t fold) const {
  std::size_t begin = 0;
  for (std::size_t i = 0; i < fold; ++i) begin += fold_sizes[i];
  return {begin, begin + fold_sizes.at(fold)};
}

FoldSpec kfold_split(std::size_t n, std::size_t k) {
  if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
  if (n < k)
    throw std::invalid_argument("k-fold needs at least k items (n=" +
                                std::to_string(n) + ", k=" + std::to_string(k) + ")");
  FoldSpec spec;
  spec.k = k;
  const std::size_t small = k - n % k;
  for (std::size_t i = 0; i < k; ++i) {
    spec.fold_sizes.push_back(n / k + (i < small ? 0 : 1));
    spec.assignments.insert(spec.assignments.end(), spec.fold_sizes.back(), i);
  }
  return spec;
}

KFoldReport kfold_run(std::span<const LabeledParagraph> train_set,
                      std::span<const LabeledParagraph> test_source,
                      std::size_t k, const KFoldOptions& options) {
  if (train_set.size() != test_source.size())
    throw std::invalid_argument("k-fold data sets are not aligned (" +
                                std::to_string(train_set.size()) + " vs " +
                                std::to_string(test_source.size()) + " items)");
  const FoldSpec spec = kfold_split(train_set.size(), k);
  KFoldReport report;
  double f1_sum = 0.0;
  for (std::size_t fold = 0; fold < k; ++fold) {
    const auto [begin, end] = spec.range(fold);
    std::vector<LabeledParagraph> train_part;
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      if (i < begin || i >= end) train_part.push_back(train_set[i]);
    }
    TrainConfig cfg = options.train;
    cfg.seed = options.train.seed + fold;
    const TaggerModel model =
        train(train_part, cfg, options.features, options.lexicon);
    if (options.on_model) options.on_model(fold, model);
    FoldResult r;
    r.fold = fold;
    r.counts = evaluate_model(model, test_source.subspan(begin, end - begin));
    r.metrics = prf1(r.counts);
    f1_sum += r.metrics.f1;
    report.folds.push_back(r);
  }
  report.mean_f1 = f1_sum / static_cast<double>(k);
  return report;
}

void write_kfold_table(const KFoldReport& report, std::ostream& out) {
  out << "fold\tprecision\trecall\tf1\n" << std::fixed << std::setprecision(1);
  for (const auto& f : report.folds) {
    out << f.fold + 1 << '\t' << 100 * f.metrics.precision << '\t'
        << 100 * f.metrics.recall << '\t' << 100 * f.metrics.f1 << '\n';
  }
  out << "average\t\t\t" << 100 * report.mean_f1 << '\n';
  out.unsetf(std::ios::fixed);
}

const char* to_string(ContextScope scope) {
  return scope == ContextScope::kAroundCorrect ? "correct" : "incorrect";
}

std::vector<std::pair<std::string, std::size_t>> ContextStats::ranked() const {
  std::vector<std::pair<std::string, std::size_t>> out(counts.begin(), counts.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;  // map order already breaks ties by token
  });
  return out;
}

ContextStats context_frequencies(std::span<const ScoredParagraph> data,
                                 std::size_t window, bool include_stopwords,
                                 ContextScope scope,
                                 const StopwordList& stopwords) {
  if (window < 1) throw std::invalid_argument("context window must be >= 1");
  ContextStats stats;
  stats.window = window;
  stats.include_stopwords = include_stopwords;
  stats.scope = scope;
  for (const auto& item : data) {
    const auto& tokens = item.gold.tokens;
    auto visit = [&](const Span& e) {
      ++stats.entities;
      auto count = [&](std::size_t t) {
        const auto& text = tokens[t].text;
        if (!include_stopwords) {
          const auto kind = classify_token(text, stopwords);
          if (kind == TokenClass::kStopword || kind == TokenClass::kPunct) return;
        }
        ++stats.counts[text];
      };
      const std::size_t lo = e.token_start >= window ? e.token_start - window : 0;
      for (std::size_t t = lo; t < e.token_start; ++t) count(t);
      for (std::size_t t = e.token_end + 1;
           t <= e.token_end + window && t < tokens.size(); ++t)
        count(t);
    };
    const bool want_correct = scope == ContextScope::kAroundCorrect;
    for (const auto& p : item.predicted) {
      bool exact = false;
      for (const auto& g : item.gold.spans) exact = exact || same_range(g, p);
      if (exact == want_correct) visit(p);
    }
    // Missed gold entities (FN under the boundary rule) are incorrect too.
    if (!want_correct) {
      for (const auto& g : item.gold.spans) {
        bool touched = false;
        for (const auto& p : item.predicted) touched = touched || overlaps(g, p);
        if (!touched) visit(g);
      }
    }
  }
  return stats;
}

void write_frequency_table(const ContextStats& stats, std::size_t top,
                           std::ostream& out) {
  out << "rank\ttoken\tcount\n";
  std::size_t rank = 0;
  for (const auto& [token, n] : stats.ranked()) {
    if (rank == top) break;
    out << ++rank << '\t' << token << '\t' << n << '\n';
  }
}

}  // namespace nerloop
