#include "nerloop/crf.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nerloop {

namespace {

constexpr std::size_t L = kNumLabels;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const double* v, std::size_t n) {
  double m = kNegInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

std::vector<double> forward(const Lattice& lat) {
  const std::size_t n = lat.length;
  std::vector<double> alpha(n * L);
  for (std::size_t y = 0; y < L; ++y) alpha[y] = lat.emission(0, y);
  double terms[L];
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t y = 0; y < L; ++y) {
      for (std::size_t p = 0; p < L; ++p)
        terms[p] = alpha[(t - 1) * L + p] + lat.transition(p, y);
      alpha[t * L + y] = log_sum_exp(terms, L) + lat.emission(t, y);
    }
  }
  return alpha;
}

std::vector<double> backward(const Lattice& lat) {
  const std::size_t n = lat.length;
  std::vector<double> beta(n * L, 0.0);
  double terms[L];
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t y = 0; y < L; ++y) {
      for (std::size_t q = 0; q < L; ++q)
        terms[q] = lat.transition(y, q) + lat.emission(t + 1, q) +
                   beta[(t + 1) * L + q];
      beta[t * L + y] = log_sum_exp(terms, L);
    }
  }
  return beta;
}

}  // namespace

double path_score(const Lattice& lat, std::span<const Iob> labels) {
  double s = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const auto y = static_cast<std::size_t>(labels[t]);
    s += lat.emission(t, y);
    if (t > 0) s += lat.transition(static_cast<std::size_t>(labels[t - 1]), y);
  }
  return s;
}

double log_partition(const Lattice& lat) {
  if (lat.length == 0) return 0.0;
  const auto alpha = forward(lat);
  return log_sum_exp(&alpha[(lat.length - 1) * L], L);
}

Marginals forward_backward(const Lattice& lat) {
  Marginals m;
  const std::size_t n = lat.length;
  if (n == 0) return m;
  const auto alpha = forward(lat);
  const auto beta = backward(lat);
  m.log_partition = log_sum_exp(&alpha[(n - 1) * L], L);
  m.node.resize(n * L);
  for (std::size_t t = 0; t < n; ++t) {
    double total = 0.0;
    for (std::size_t y = 0; y < L; ++y) {
      const double p = std::exp(alpha[t * L + y] + beta[t * L + y] - m.log_partition);
      m.node[t * L + y] = p;
      total += p;
    }
    // Renormalize away accumulated rounding so each row sums to one.
    for (std::size_t y = 0; y < L; ++y) m.node[t * L + y] /= total;
  }
  if (n > 1) {
    m.edge.resize((n - 1) * L * L);
    for (std::size_t t = 0; t + 1 < n; ++t) {
      for (std::size_t a = 0; a < L; ++a) {
        for (std::size_t b = 0; b < L; ++b) {
          m.edge[(t * L + a) * L + b] =
              std::exp(alpha[t * L + a] + lat.transition(a, b) +
                       lat.emission(t + 1, b) + beta[(t + 1) * L + b] -
                       m.log_partition);
        }
      }
    }
  }
  return m;
}

IobSequence viterbi(const Lattice& lat) {
  const std::size_t n = lat.length;
  IobSequence out(n, Iob::O);
  if (n == 0) return out;
  std::vector<double> score(n * L, kNegInf);
  std::vector<std::size_t> back(n * L, 0);
  for (std::size_t y = 0; y < L; ++y) {
    if (start_allowed(static_cast<Iob>(y))) score[y] = lat.emission(0, y);
  }
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t y = 0; y < L; ++y) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t p = 0; p < L; ++p) {
        if (!transition_allowed(static_cast<Iob>(p), static_cast<Iob>(y)))
          continue;
        const double s = score[(t - 1) * L + p] + lat.transition(p, y);
        if (s > best) {
          best = s;
          arg = p;
        }
      }
      score[t * L + y] = best + lat.emission(t, y);
      back[t * L + y] = arg;
    }
  }
  std::size_t y = 0;
  for (std::size_t k = 1; k < L; ++k) {
    if (score[(n - 1) * L + k] > score[(n - 1) * L + y]) y = k;
  }
  for (std::size_t t = n; t-- > 0;) {
    out[t] = static_cast<Iob>(y);
    y = back[t * L + y];
  }
  return out;
}

Lattice build_lattice(const CrfParameters& params,
                      const std::vector<std::vector<std::uint32_t>>& features) {
  Lattice lat;
  lat.length = features.size();
  lat.emissions.assign(lat.length * L, 0.0);
  for (std::size_t t = 0; t < lat.length; ++t) {
    for (std::uint32_t f : features[t]) {
      const double* w = &params.values[f * L];
      for (std::size_t y = 0; y < L; ++y) lat.emissions[t * L + y] += w[y];
    }
  }
  std::copy_n(params.values.begin() + params.transition_offset(), L * L,
              lat.transitions.begin());
  return lat;
}

double sequence_nll(const CrfParameters& params, const CompiledSequence& seq,
                    std::span<double> grad) {
  if (seq.features.empty()) return 0.0;
  const Lattice lat = build_lattice(params, seq.features);
  const Marginals m = forward_backward(lat);
  const double nll = m.log_partition - path_score(lat, seq.labels);
  if (grad.empty()) return nll;

  const std::size_t n = lat.length;
  for (std::size_t t = 0; t < n; ++t) {
    const auto gold = static_cast<std::size_t>(seq.labels[t]);
    for (std::uint32_t f : seq.features[t]) {
      double* g = &grad[f * L];
      for (std::size_t y = 0; y < L; ++y) g[y] += m.node[t * L + y];
      g[gold] -= 1.0;
    }
  }
  double* g = &grad[params.transition_offset()];
  for (std::size_t t = 0; t + 1 < n; ++t) {
    for (std::size_t k = 0; k < L * L; ++k) g[k] += m.edge[t * L * L + k];
    g[static_cast<std::size_t>(seq.labels[t]) * L +
      static_cast<std::size_t>(seq.labels[t + 1])] -= 1.0;
  }
  return nll;
}

double objective(const CrfParameters& params,
                 std::span<const CompiledSequence> data, double l2,
                 std::span<double> grad) {
  double total = 0.0;
  for (const auto& seq : data) total += sequence_nll(params, seq, grad);
  double norm = 0.0;
  for (std::size_t k = 0; k < params.values.size(); ++k) {
    norm += params.values[k] * params.values[k];
    if (!grad.empty()) grad[k] += l2 * params.values[k];
  }
  return total + 0.5 * l2 * norm;
}

}  // namespace nerloop
