#pragma once

#include <cstdint>
#include <vector>

#include "refertok/geometry.hpp"
#include "refertok/linalg.hpp"
#include "refertok/rng.hpp"

namespace refertok::testsupport {

inline BinaryMask rect_mask(std::size_t w, std::size_t h,
                            const BoundingBox& r) {
  BinaryMask mask(w, h);
  for (std::size_t y = r.y; y < r.y + r.h; ++y)
    for (std::size_t x = r.x; x < r.x + r.w; ++x) mask.set(y, x);
  return mask;
}

inline ImageBuffer constant_image(std::size_t w, std::size_t h,
                                  std::size_t channels, double value) {
  ImageBuffer img(w, h, channels);
  for (double& v : img.values) v = value;
  return img;
}

inline ImageBuffer random_image(DetRng& rng, std::size_t w, std::size_t h,
                                std::size_t channels = 3) {
  ImageBuffer img(w, h, channels);
  for (double& v : img.values) v = rng.next_double();
  return img;
}

inline BinaryMask random_mask(DetRng& rng, std::size_t w, std::size_t h,
                              double density) {
  BinaryMask mask(w, h);
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    mask.bits[i] = rng.next_double() < density ? 1 : 0;
  return mask;
}

// Random rectangle with an exact pixel area drawn from [lo, hi].
inline BoundingBox random_rect(DetRng& rng, std::size_t img_w,
                               std::size_t img_h, std::size_t min_w,
                               std::size_t max_w, std::size_t min_h,
                               std::size_t max_h) {
  const std::size_t w =
      min_w + static_cast<std::size_t>(rng.next_below(max_w - min_w + 1));
  const std::size_t h =
      min_h + static_cast<std::size_t>(rng.next_below(max_h - min_h + 1));
  const std::size_t x =
      static_cast<std::size_t>(rng.next_below(img_w - w + 1));
  const std::size_t y =
      static_cast<std::size_t>(rng.next_below(img_h - h + 1));
  return {x, y, w, h};
}

inline Vec random_token(DetRng& rng, std::size_t dim, double scale = 1.0) {
  Vec v(dim);
  for (double& x : v) x = rng.next_signed() * scale;
  return v;
}

inline TokenList random_tokens(DetRng& rng, std::size_t count,
                               std::size_t dim, double scale = 1.0) {
  TokenList tokens;
  tokens.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    tokens.push_back(random_token(rng, dim, scale));
  return tokens;
}

// Clustered synthetic tokens: `clusters` well-separated centers with tight
// jitter, cycling so every cluster is populated.
inline TokenList clustered_tokens(DetRng& rng, std::size_t count,
                                  std::size_t dim, std::size_t clusters,
                                  double separation = 10.0,
                                  double jitter = 0.05) {
  TokenList centers;
  for (std::size_t c = 0; c < clusters; ++c) {
    Vec center(dim, 0.0);
    for (std::size_t d = 0; d < dim; ++d)
      center[d] = rng.next_signed() * separation;
    centers.push_back(std::move(center));
  }
  TokenList tokens;
  for (std::size_t i = 0; i < count; ++i) {
    Vec t = centers[i % clusters];
    for (double& v : t) v += rng.next_signed() * jitter;
    tokens.push_back(std::move(t));
  }
  return tokens;
}

// Clustered tokens whose centers occupy disjoint coordinate blocks, so the
// cluster directions are exactly orthogonal: within-cluster cosine is 1 and
// cross-cluster cosine is 0 by construction. dim must be at least
// 2 * clusters so every block has width >= 2.
//
// Jitter defaults to zero so each cluster is a set of exact duplicates. That
// matters when the tokens feed k-means with k == clusters: duplicates always
// tie to the lowest-index centroid, so a doubly-seeded cluster empties one of
// its centroids and the reseed rule moves it to an unserved cluster. Perfect
// recovery is therefore guaranteed, whereas jittered copies can hold a
// split-cluster local optimum alive forever.
inline TokenList orthogonal_clustered_tokens(DetRng& rng, std::size_t clusters,
                                             std::size_t per_cluster,
                                             std::size_t dim,
                                             double separation = 10.0,
                                             double jitter = 0.0) {
  const std::size_t block = dim / clusters;
  TokenList centers;
  for (std::size_t c = 0; c < clusters; ++c) {
    Vec center(dim, 0.0);
    for (std::size_t d = c * block; d < (c + 1) * block; ++d)
      center[d] = separation * (0.5 + rng.next_double());
    centers.push_back(std::move(center));
  }
  TokenList tokens;
  for (std::size_t i = 0; i < clusters * per_cluster; ++i) {
    Vec t = centers[i % clusters];
    if (jitter != 0.0)
      for (double& v : t) v += rng.next_signed() * jitter;
    tokens.push_back(std::move(t));
  }
  return tokens;
}

}  // namespace refertok::testsupport
