#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nerloop/annotations.h"

namespace nerloop {

// Scores of a linear-chain CRF over the labels {B, I, O} for one sequence.
struct Lattice {
  std::size_t length = 0;
  std::vector<double> emissions;                    // length x 3, row-major
  std::array<double, kNumLabels * kNumLabels> transitions{};  // [from * 3 + to]

  double emission(std::size_t t, std::size_t y) const {
    return emissions[t * kNumLabels + y];
  }
  double transition(std::size_t from, std::size_t to) const {
    return transitions[from * kNumLabels + to];
  }
};

// Decoding forbids I at the start and O -> I. The probability model itself
// is unconstrained; only Viterbi applies the mask.
inline bool transition_allowed(Iob from, Iob to) {
  return !(from == Iob::O && to == Iob::I);
}
inline bool start_allowed(Iob label) { return label != Iob::I; }

double path_score(const Lattice& lattice, std::span<const Iob> labels);

struct Marginals {
  std::vector<double> node;  // length x 3: P(y_t = y)
  std::vector<double> edge;  // (length-1) x 9: P(y_t = a, y_{t+1} = b)
  double log_partition = 0.0;

  double at(std::size_t t, Iob y) const {
    return node[t * kNumLabels + static_cast<std::size_t>(y)];
  }
};

// Log-space forward-backward.
Marginals forward_backward(const Lattice& lattice);
double log_partition(const Lattice& lattice);

// Highest-scoring label sequence among the valid ones.
IobSequence viterbi(const Lattice& lattice);

// Flat parameter vector: num_features x 3 emission weights followed by the
// 3 x 3 transition block.
struct CrfParameters {
  std::size_t num_features = 0;
  std::vector<double> values;

  explicit CrfParameters(std::size_t features = 0)
      : num_features(features),
        values(features * kNumLabels + kNumLabels * kNumLabels, 0.0) {}

  std::size_t transition_offset() const { return num_features * kNumLabels; }
  double weight(std::uint32_t feature, std::size_t label) const {
    return values[feature * kNumLabels + label];
  }
  friend bool operator==(const CrfParameters&, const CrfParameters&) = default;
};

// A token sequence reduced to known feature ids, with optional gold labels.
struct CompiledSequence {
  std::vector<std::vector<std::uint32_t>> features;
  IobSequence labels;
};

Lattice build_lattice(const CrfParameters& params,
                      const std::vector<std::vector<std::uint32_t>>& features);

// Negative log-likelihood of seq.labels. If grad is non-empty its gradient
// is added into it (same layout as params.values).
double sequence_nll(const CrfParameters& params, const CompiledSequence& seq,
                    std::span<double> grad = {});

// Sum of sequence NLLs plus l2/2 * |w|^2, with gradient added into grad.
double objective(const CrfParameters& params,
                 std::span<const CompiledSequence> data, double l2,
                 std::span<double> grad = {});

}  // namespace nerloop
