#pragma once

#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "refertok/errors.hpp"
#include "refertok/linalg.hpp"

namespace refertok {

// Pairwise cosine similarities of a token set. Diagonal is 1 by definition;
// off-diagonal entries are mirrored so the matrix is exactly symmetric.
inline Matrix cosine_matrix(const TokenList& tokens) {
  if (tokens.size() < 2)
    raise(ErrorKind::EmptyInput, "cosine_matrix needs at least 2 tokens");
  std::vector<double> norms(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    norms[i] = norm(tokens[i]);
    if (norms[i] == 0.0)
      raise(ErrorKind::ZeroNormToken,
            "token " + std::to_string(i) + " has zero norm");
  }
  Matrix m(tokens.size(), tokens.size());
  for (std::size_t a = 0; a < tokens.size(); ++a) {
    m.at(a, a) = 1.0;
    for (std::size_t b = a + 1; b < tokens.size(); ++b) {
      const double v = dot(tokens[a], tokens[b]) / (norms[a] * norms[b]);
      m.at(a, b) = v;
      m.at(b, a) = v;
    }
  }
  return m;
}

inline constexpr std::size_t kSimilarityBins = 40;

struct SimilarityStats {
  std::size_t count = 0;  // token pairs
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::size_t> histogram;  // kSimilarityBins bins over [-1, 1]
};

// Upper-triangle pairwise stats of one token list.
inline SimilarityStats pairwise_stats(const TokenList& tokens) {
  const Matrix m = cosine_matrix(tokens);
  SimilarityStats stats;
  stats.histogram.assign(kSimilarityBins, 0);
  stats.min = std::numeric_limits<double>::infinity();
  stats.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t a = 0; a < tokens.size(); ++a) {
    for (std::size_t b = a + 1; b < tokens.size(); ++b) {
      const double v = m.at(a, b);
      ++stats.count;
      sum += v;
      if (v < stats.min) stats.min = v;
      if (v > stats.max) stats.max = v;
      double pos = (v + 1.0) / 2.0 * static_cast<double>(kSimilarityBins);
      std::size_t bin = pos <= 0.0 ? 0 : static_cast<std::size_t>(pos);
      if (bin >= kSimilarityBins) bin = kSimilarityBins - 1;
      ++stats.histogram[bin];
    }
  }
  stats.mean = sum / static_cast<double>(stats.count);
  return stats;
}

inline std::pair<SimilarityStats, SimilarityStats> similarity_stats(
    const TokenList& before, const TokenList& after) {
  return {pairwise_stats(before), pairwise_stats(after)};
}

inline nlohmann::json stats_to_json(const SimilarityStats& s) {
  return nlohmann::json{{"count", s.count},
                        {"mean", s.mean},
                        {"min", s.min},
                        {"max", s.max},
                        {"histogram", s.histogram}};
}

// Plottable histogram rows for a before/after pair.
inline std::string similarity_csv(const SimilarityStats& before,
                                  const SimilarityStats& after) {
  std::ostringstream out;
  out << "bin_left,bin_right,count_before,count_after\n";
  const double width = 2.0 / static_cast<double>(kSimilarityBins);
  for (std::size_t b = 0; b < kSimilarityBins; ++b) {
    out << (-1.0 + width * static_cast<double>(b)) << ','
        << (-1.0 + width * static_cast<double>(b + 1)) << ','
        << before.histogram[b] << ',' << after.histogram[b] << '\n';
  }
  return out.str();
}

}  // namespace refertok
