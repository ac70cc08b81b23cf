#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "refertok/kmeans.hpp"
#include "support/helpers.hpp"
#include "support/reference_kmeans.hpp"

namespace refertok {
namespace {

using testsupport::clustered_tokens;
using testsupport::random_tokens;
using testsupport::reference_kmeans;

double total_sse(const TokenList& points, const KmeansResult& result) {
  double acc = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    acc += squared_distance(points[i], result.centroids[result.assignments[i]]);
  return acc;
}

TEST(KmeansCluster, MatchesIndependentReference) {
  DetRng meta(2024);
  for (int instance = 0; instance < 200; ++instance) {
    const std::size_t dim = 1 + meta.next_below(8);
    const std::size_t k = 1 + meta.next_below(10);
    const std::size_t count = k + meta.next_below(31);
    const std::size_t iters = 1 + meta.next_below(6);
    const std::uint64_t seed = meta.next_u64();

    DetRng gen(meta.next_u64());
    const TokenList points = random_tokens(gen, count, dim);

    const KmeansResult got = kmeans_cluster(points, k, iters, seed);
    const auto want = reference_kmeans(points, k, iters, seed);

    ASSERT_EQ(got.assignments, want.assignments)
        << "instance " << instance << " k=" << k << " count=" << count;
    ASSERT_EQ(got.centroids.size(), want.centroids.size());
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t d = 0; d < dim; ++d)
        ASSERT_NEAR(got.centroids[c][d], want.centroids[c][d], 1e-12)
            << "instance " << instance << " centroid " << c;
  }
}

TEST(KmeansCluster, OneDimensionalTwoClusterOracle) {
  const TokenList points = {{0.0}, {0.1}, {10.0}, {10.1}};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const KmeansResult r = kmeans_cluster(points, 2, 10, seed);
    std::vector<double> centres = {r.centroids[0][0], r.centroids[1][0]};
    std::sort(centres.begin(), centres.end());
    EXPECT_NEAR(centres[0], 0.05, 1e-9) << "seed " << seed;
    EXPECT_NEAR(centres[1], 10.05, 1e-9) << "seed " << seed;
  }
}

TEST(KmeansCluster, IdenticalPointsCollapseToThatPoint) {
  const Vec v = {1.5, -2.0, 0.25};
  const TokenList points(7, v);
  const KmeansResult r = kmeans_cluster(points, 3, 5, 99);
  for (const Vec& c : r.centroids) EXPECT_EQ(c, v);
}

TEST(KmeansCluster, SseNonIncreasingAcrossRounds) {
  DetRng meta(7);
  for (int instance = 0; instance < 40; ++instance) {
    DetRng gen(meta.next_u64());
    const std::size_t dim = 1 + meta.next_below(5);
    const std::size_t k = 2 + meta.next_below(5);
    const TokenList points =
        clustered_tokens(gen, k + 5 + meta.next_below(20), dim, k);
    const std::uint64_t seed = meta.next_u64();

    double prev = total_sse(points, kmeans_cluster(points, k, 1, seed));
    for (std::size_t iters = 2; iters <= 6; ++iters) {
      const double cur = total_sse(points, kmeans_cluster(points, k, iters, seed));
      EXPECT_LE(cur, prev + 1e-9) << "instance " << instance << " iters " << iters;
      prev = cur;
    }
  }
}

TEST(KmeansCluster, CentroidsAreMeansOfTheirMembers) {
  DetRng meta(31);
  for (int instance = 0; instance < 50; ++instance) {
    DetRng gen(meta.next_u64());
    const std::size_t dim = 1 + meta.next_below(6);
    const std::size_t k = 1 + meta.next_below(6);
    const TokenList points = random_tokens(gen, k + meta.next_below(25), dim);
    const KmeansResult r = kmeans_cluster(points, k, 4, meta.next_u64());

    std::vector<std::size_t> counts(k, 0);
    TokenList sums(k, Vec(dim, 0.0));
    for (std::size_t i = 0; i < points.size(); ++i) {
      ++counts[r.assignments[i]];
      for (std::size_t d = 0; d < dim; ++d)
        sums[r.assignments[i]][d] += points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      ASSERT_GT(counts[c], 0u) << "cluster " << c << " returned empty";
      for (std::size_t d = 0; d < dim; ++d)
        EXPECT_NEAR(r.centroids[c][d],
                    sums[c][d] / static_cast<double>(counts[c]), 1e-6);
    }
  }
}

TEST(KmeansCluster, RejectsBadArguments) {
  const TokenList points = {{0.0}, {1.0}};
  try {
    kmeans_cluster(points, 0, 3, 1);
    FAIL() << "expected InvalidConfig";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
  try {
    kmeans_cluster(points, 3, 3, 1);
    FAIL() << "expected InvalidConfig";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
  try {
    kmeans_cluster({{0.0}, {1.0, 2.0}}, 1, 3, 1);
    FAIL() << "expected DimMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimMismatch);
  }
}

TEST(AggregateKmeans, ExactCountPassesThroughUnchanged) {
  DetRng gen(5);
  const TokenList tokens = random_tokens(gen, 6, 4);
  const AggregationResult r = aggregate_kmeans(tokens, 6, 10, 123);
  EXPECT_EQ(r.tokens, tokens);
  EXPECT_FALSE(r.padded);
  EXPECT_EQ(r.pre_aggregation_count, 6u);
}

TEST(AggregateKmeans, UnderfullInputCyclePads) {
  DetRng gen(6);
  const TokenList tokens = random_tokens(gen, 3, 4);
  const AggregationResult r = aggregate_kmeans(tokens, 8, 10, 123);
  ASSERT_EQ(r.tokens.size(), 8u);
  EXPECT_TRUE(r.padded);
  EXPECT_EQ(r.pre_aggregation_count, 3u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(r.tokens[i], tokens[i % 3]);
}

TEST(AggregateKmeans, OverfullInputClustersToExactlyN) {
  DetRng gen(8);
  const TokenList tokens = clustered_tokens(gen, 40, 5, 4);
  const AggregationResult r = aggregate_kmeans(tokens, 4, 10, 55);
  EXPECT_EQ(r.tokens.size(), 4u);
  EXPECT_FALSE(r.padded);
  EXPECT_EQ(r.pre_aggregation_count, 40u);
  const KmeansResult direct = kmeans_cluster(tokens, 4, 10, 55);
  EXPECT_EQ(r.tokens, direct.centroids);
}

TEST(AggregateKmeans, RejectsDegenerateInputs) {
  try {
    aggregate_kmeans({}, 4, 10, 1);
    FAIL() << "expected EmptyInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
  }
  try {
    aggregate_kmeans({{1.0}}, 0, 10, 1);
    FAIL() << "expected InvalidConfig";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

}  // namespace
}  // namespace refertok
