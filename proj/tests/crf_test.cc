#include "nerloop/crf.h"

#include <random>

#include <gtest/gtest.h>

#include "test_util.h"

namespace nerloop {
namespace {

TEST(CrfOracle, ViterbiMatchesExhaustiveArgmax) {
  std::mt19937_64 rng(11);
  for (int model = 0; model < 150; ++model) {
    for (std::size_t n = 1; n <= 8; ++n) {
      const Lattice lat = testing::random_lattice(rng, n);
      const auto brute = testing::enumerate(lat);
      const auto decoded = viterbi(lat);
      ASSERT_TRUE(is_valid(decoded));
      ASSERT_NEAR(path_score(lat, decoded), brute.best_valid_score, 1e-9);
      ASSERT_EQ(decoded, brute.best_valid);
    }
  }
}

TEST(CrfOracle, MarginalsMatchExhaustiveSums) {
  std::mt19937_64 rng(12);
  for (int model = 0; model < 150; ++model) {
    for (std::size_t n = 1; n <= 8; ++n) {
      const Lattice lat = testing::random_lattice(rng, n);
      const auto brute = testing::enumerate(lat);
      const auto m = forward_backward(lat);
      ASSERT_NEAR(m.log_partition, brute.log_z, 1e-9);
      ASSERT_NEAR(log_partition(lat), brute.log_z, 1e-9);
      for (std::size_t k = 0; k < brute.node.size(); ++k)
        ASSERT_NEAR(m.node[k], brute.node[k], 1e-9);
      for (std::size_t k = 0; k < brute.edge.size(); ++k)
        ASSERT_NEAR(m.edge[k], brute.edge[k], 1e-9);
      for (std::size_t t = 0; t < n; ++t) {
        ASSERT_NEAR(m.node[t * 3] + m.node[t * 3 + 1] + m.node[t * 3 + 2], 1.0, 1e-9);
      }
    }
  }
}

TEST(Crf, EmptyLattice) {
  Lattice lat;
  EXPECT_TRUE(viterbi(lat).empty());
  EXPECT_TRUE(forward_backward(lat).node.empty());
  EXPECT_EQ(log_partition(lat), 0.0);
}

// Zero weights: every labeling has score 0, so each node marginal is 1/3.
TEST(Crf, ZeroWeightsGiveUniformMarginals) {
  CrfParameters params(4);
  const std::vector<std::vector<std::uint32_t>> features{{0, 1}, {2}, {3}, {}};
  const auto m = forward_backward(build_lattice(params, features));
  for (double p : m.node) EXPECT_NEAR(p, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.log_partition, 4 * std::log(3.0), 1e-12);
}

TEST(CrfGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 150; ++i) {
    const auto inst = testing::random_instance(rng);
    const auto err = testing::gradient_error(inst, i % 2 ? 0.5 : 0.0);
    ASSERT_LE(err.componentwise, 1e-4) << "instance " << i;
    ASSERT_LE(err.normwise, 1e-4) << "instance " << i;
  }
}

TEST(CrfGradient, NllIsNonNegative) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 100; ++i) {
    const auto inst = testing::random_instance(rng);
    for (const auto& seq : inst.data) ASSERT_GE(sequence_nll(inst.params, seq), -1e-12);
  }
}

}  // namespace
}  // namespace nerloop
