#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "refertok/errors.hpp"
#include "refertok/linalg.hpp"
#include "refertok/rng.hpp"

namespace refertok {

struct KmeansResult {
  TokenList centroids;
  std::vector<std::size_t> assignments;
};

// Deterministic Lloyd iterations with fixed round count.
//
// Rules, all of which the output depends on:
//  - init picks k distinct point indices via DetRng::sample_indices;
//  - assignment minimises squared Euclidean distance, ties keep the
//    lowest centroid index (strict-less comparison);
//  - a cluster left empty after assignment is reseeded with the point
//    farthest from its own centroid, taken only from clusters that still
//    have at least two members, scanning empty clusters in ascending order;
//  - exactly `iters` assignment/update rounds run; there is no early-exit
//    convergence check, so the round count never depends on the data.
inline KmeansResult kmeans_cluster(const TokenList& points, std::size_t k,
                                   std::size_t iters, std::uint64_t seed) {
  if (k == 0) raise(ErrorKind::InvalidConfig, "kmeans requires k >= 1");
  if (points.size() < k)
    raise(ErrorKind::InvalidConfig, "kmeans needs at least k points");
  const std::size_t dim = points[0].size();
  for (const Vec& p : points)
    if (p.size() != dim)
      raise(ErrorKind::DimMismatch, "kmeans points differ in dimension");

  DetRng rng(seed);
  const std::vector<std::size_t> init = rng.sample_indices(points.size(), k);
  KmeansResult result;
  result.centroids.reserve(k);
  for (std::size_t idx : init) result.centroids.push_back(points[idx]);
  result.assignments.assign(points.size(), 0);

  std::vector<std::size_t> counts(k, 0);
  for (std::size_t round = 0; round < iters; ++round) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(points[i], result.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(points[i], result.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      result.assignments[i] = best;
    }

    counts.assign(k, 0);
    for (std::size_t a : result.assignments) ++counts[a];

    for (std::size_t empty = 0; empty < k; ++empty) {
      if (counts[empty] != 0) continue;
      std::size_t donor_point = points.size();
      double donor_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        const std::size_t owner = result.assignments[i];
        if (counts[owner] < 2) continue;
        const double d = squared_distance(points[i], result.centroids[owner]);
        if (d > donor_d) {
          donor_d = d;
          donor_point = i;
        }
      }
      if (donor_point == points.size()) continue;  // everything is singleton
      --counts[result.assignments[donor_point]];
      result.assignments[donor_point] = empty;
      counts[empty] = 1;
      result.centroids[empty] = points[donor_point];
    }

    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      Vec sum(dim, 0.0);
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (result.assignments[i] != c) continue;
        for (std::size_t d = 0; d < dim; ++d) sum[d] += points[i][d];
      }
      for (std::size_t d = 0; d < dim; ++d)
        result.centroids[c][d] = sum[d] / static_cast<double>(counts[c]);
    }
  }
  return result;
}

struct AggregationResult {
  TokenList tokens;  // exactly n entries
  std::size_t pre_aggregation_count = 0;
  bool padded = false;
};

// Reduces a token list to exactly n tokens. With more than n inputs the
// k-means centroids are returned in centroid-index order; with n or fewer
// the inputs pass through unclustered and are cycle-padded up to n.
inline AggregationResult aggregate_kmeans(const TokenList& tokens,
                                          std::size_t n, std::size_t iters,
                                          std::uint64_t seed) {
  if (n == 0) raise(ErrorKind::InvalidConfig, "aggregation needs n >= 1");
  if (tokens.empty()) raise(ErrorKind::EmptyInput, "no tokens to aggregate");

  AggregationResult out;
  out.pre_aggregation_count = tokens.size();
  if (tokens.size() <= n) {
    out.padded = tokens.size() < n;
    out.tokens = tokens;
    for (std::size_t i = tokens.size(); i < n; ++i)
      out.tokens.push_back(tokens[i % tokens.size()]);
    return out;
  }
  out.tokens = kmeans_cluster(tokens, n, iters, seed).centroids;
  return out;
}

}  // namespace refertok
