#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "refertok/encoder.hpp"
#include "refertok/errors.hpp"
#include "refertok/geometry.hpp"
#include "refertok/kmeans.hpp"
#include "refertok/linalg.hpp"
#include "refertok/rng.hpp"

namespace refertok {

struct TokenizerConfig {
  std::size_t n = 32;        // object tokens per region, must stay < 100
  std::size_t k_iters = 10;  // clustering rounds
  double beta = 1.5;         // contextual padding factor
  std::uint64_t seed = 0;
  std::size_t embed_dim = 64;
  std::size_t out_dim = 64;
};

enum class Nonlinearity { Gelu, Identity };

inline const char* nonlinearity_name(Nonlinearity t) {
  return t == Nonlinearity::Gelu ? "gelu" : "identity";
}

inline Nonlinearity nonlinearity_from_name(const std::string& name) {
  if (name == "gelu") return Nonlinearity::Gelu;
  if (name == "identity") return Nonlinearity::Identity;
  raise(ErrorKind::FormatError, "unknown nonlinearity '" + name + "'");
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

struct ProjectionWeights {
  Matrix pos_linear;  // 2 -> embed_dim
  Vec pos_bias;
  Matrix mlp_w1;  // embed_dim -> hidden
  Vec mlp_b1;
  Matrix mlp_w2;  // hidden -> out_dim
  Vec mlp_b2;
  Nonlinearity nonlinearity = Nonlinearity::Gelu;
};

inline ProjectionWeights seeded_projection_weights(std::size_t embed_dim,
                                                   std::size_t out_dim,
                                                   std::uint64_t seed,
                                                   std::size_t hidden = 0) {
  if (hidden == 0) hidden = embed_dim;
  ProjectionWeights w;
  const double pos_scale = 1.0 / std::sqrt(2.0);
  const double w1_scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  const double w2_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  w.pos_linear = Matrix::random(2, embed_dim, seed_mix(seed, "pos"), pos_scale);
  w.pos_bias = Vec(embed_dim, 0.0);
  w.mlp_w1 = Matrix::random(embed_dim, hidden, seed_mix(seed, "w1"), w1_scale);
  w.mlp_b1 = Vec(hidden, 0.0);
  w.mlp_w2 = Matrix::random(hidden, out_dim, seed_mix(seed, "w2"), w2_scale);
  w.mlp_b2 = Vec(out_dim, 0.0);
  return w;
}

// One foreground grid cell with its embedding and token-grid coordinates.
struct CellToken {
  std::size_t i = 0;  // grid row
  std::size_t j = 0;  // grid column
  Vec features;
};

using CellTokenList = std::vector<CellToken>;

inline CellTokenList extract_masked_features(const FeatureMap& fr,
                                             const TokenMask& tmask) {
  if (fr.grid_h != tmask.grid_h || fr.grid_w != tmask.grid_w)
    raise(ErrorKind::DimMismatch, "feature map and token mask grids differ");
  CellTokenList out;
  for (std::size_t i = 0; i < fr.grid_h; ++i)
    for (std::size_t j = 0; j < fr.grid_w; ++j)
      if (tmask.at(i, j)) out.push_back({i, j, fr.cell_vec(i, j)});
  if (out.empty()) raise(ErrorKind::EmptyMask, "token mask selects no cells");
  return out;
}

struct PositionalGrid {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<std::pair<double, double>> entries;  // (p0, p1) row-major

  PositionalGrid() = default;
  PositionalGrid(std::size_t gh, std::size_t gw)
      : grid_h(gh), grid_w(gw), entries(gh * gw) {}

  const std::pair<double, double>& at(std::size_t i, std::size_t j) const {
    return entries[i * grid_w + j];
  }
};

// Relative position of lattice point (i, j) of the expanded crop, expressed
// in whole-image coordinates and normalised by the image extent. Values are
// clamped to [0,1]: when an edge-touching box is expanded, the raw expression
// can exceed the image extent by up to (beta-1) of the box size.
inline std::pair<double, double> positional_encoding(
    const BoundingBox& box, std::size_t exp_w, std::size_t exp_h,
    std::size_t img_w, std::size_t img_h, double i, double j) {
  if (img_w < 2 || img_h < 2)
    raise(ErrorKind::DegenerateImage,
          "positional encoding needs an image of at least 2x2");
  const auto clamp01 = [](double v) {
    return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  };
  const double p0 =
      ((j / static_cast<double>(exp_w)) * static_cast<double>(box.w) +
       static_cast<double>(box.x)) /
      static_cast<double>(img_w - 1);
  const double p1 =
      ((i / static_cast<double>(exp_h)) * static_cast<double>(box.h) +
       static_cast<double>(box.y)) /
      static_cast<double>(img_h - 1);
  return {clamp01(p0), clamp01(p1)};
}

// Per-pixel grid over the expanded crop lattice (0 <= i < exp_h,
// 0 <= j < exp_w).
inline PositionalGrid positional_grid(const BoundingBox& box, std::size_t exp_w,
                                      std::size_t exp_h, std::size_t img_w,
                                      std::size_t img_h) {
  PositionalGrid grid(exp_h, exp_w);
  for (std::size_t i = 0; i < exp_h; ++i)
    for (std::size_t j = 0; j < exp_w; ++j)
      grid.entries[i * exp_w + j] =
          positional_encoding(box, exp_w, exp_h, img_w, img_h,
                              static_cast<double>(i), static_cast<double>(j));
  return grid;
}

// Token-grid variant: one entry per patch cell of the expanded crop,
// sampled at the cell centre. Centres of ragged edge cells fall in the
// zero-padding beyond the crop, so the sampling point clamps to the crop
// interior first.
inline PositionalGrid positional_grid_for_patches(
    const BoundingBox& box, std::size_t exp_w, std::size_t exp_h,
    std::size_t img_w, std::size_t img_h, const PatchConfig& cfg) {
  const auto [gw, gh] = patch_grid(exp_w, exp_h, cfg);
  PositionalGrid grid(gh, gw);
  for (std::size_t gi = 0; gi < gh; ++gi) {
    for (std::size_t gj = 0; gj < gw; ++gj) {
      double ci = (static_cast<double>(gi) + 0.5) *
                      static_cast<double>(cfg.patch_h) -
                  0.5;
      double cj = (static_cast<double>(gj) + 0.5) *
                      static_cast<double>(cfg.patch_w) -
                  0.5;
      const double max_i = static_cast<double>(exp_h - 1);
      const double max_j = static_cast<double>(exp_w - 1);
      if (ci > max_i) ci = max_i;
      if (cj > max_j) cj = max_j;
      grid.entries[gi * gw + gj] =
          positional_encoding(box, exp_w, exp_h, img_w, img_h, ci, cj);
    }
  }
  return grid;
}

// Adds the projected positional pair to each masked cell embedding. Only
// foreground cells arrive here, so the mask selection has already happened.
inline TokenList fuse_position(const CellTokenList& cells,
                               const PositionalGrid& pg,
                               const ProjectionWeights& w) {
  if (w.pos_linear.rows != 2)
    raise(ErrorKind::DimMismatch, "pos_linear must map from 2 coordinates");
  TokenList out;
  out.reserve(cells.size());
  for (const CellToken& cell : cells) {
    if (cell.i >= pg.grid_h || cell.j >= pg.grid_w)
      raise(ErrorKind::DimMismatch, "cell outside positional grid");
    if (cell.features.size() != w.pos_linear.cols)
      raise(ErrorKind::DimMismatch, "feature dim does not match pos_linear");
    const auto& [p0, p1] = pg.at(cell.i, cell.j);
    Vec pos = affine({p0, p1}, w.pos_linear, w.pos_bias);
    out.push_back(add(cell.features, pos));
  }
  return out;
}

inline TokenList project_mlp(const TokenList& tokens,
                             const ProjectionWeights& w) {
  TokenList out;
  out.reserve(tokens.size());
  for (const Vec& t : tokens) {
    if (t.size() != w.mlp_w1.rows)
      raise(ErrorKind::DimMismatch, "token dim does not match mlp_w1");
    Vec h = affine(t, w.mlp_w1, w.mlp_b1);
    if (w.nonlinearity == Nonlinearity::Gelu)
      for (double& v : h) v = gelu(v);
    out.push_back(affine(h, w.mlp_w2, w.mlp_b2));
  }
  return out;
}

struct Provenance {
  std::size_t pre_aggregation_count = 0;
  bool padded = false;
  ScalePlan scale_plan;
};

struct ObjectTokenSet {
  TokenList tokens;  // exactly n entries of out_dim
  std::string object_id;
  std::optional<double> timestamp;
  Provenance provenance;
};

// End-to-end scale-adaptive object tokenizer: region-normalising resample,
// padded crop, stub or real encoding, masked extraction, positional fusion,
// k-means aggregation to n tokens, and the terminal MLP.
inline ObjectTokenSet tokenize_object(const ImageBuffer& image,
                                      const BinaryMask& mask,
                                      const TokenizerConfig& cfg,
                                      const ProjectionWeights& w,
                                      const Encoder& enc) {
  if (image.width != mask.width || image.height != mask.height)
    raise(ErrorKind::DimMismatch, "tokenize_object: image/mask dims differ");
  const PatchConfig& pc = enc.patch_config();

  const std::size_t area = mask_area(mask);
  if (area == 0) raise(ErrorKind::EmptyMask, "tokenize_object: empty mask");
  const ScalePlan plan = scale_ratio(area, pc.patch_area(), cfg.n);
  auto [scaled_img, scaled_mask] = resample_region(image, mask, plan);

  const BoundingBox box = bounding_box(scaled_mask);
  const BoundingBox padded =
      contextual_pad(box, scaled_img.width, scaled_img.height, cfg.beta);
  const ImageBuffer crop_img = crop(scaled_img, padded);
  const BinaryMask crop_msk = crop_mask(scaled_mask, padded);

  const FeatureMap fr = enc.encode(crop_img);
  const TokenMask tmask = grid_mask(crop_msk, pc);
  const CellTokenList cells = extract_masked_features(fr, tmask);

  // Positions live in the scaled frame: box, expansion, and image
  // dimensions all refer to the resampled coordinates.
  const PositionalGrid pg = positional_grid_for_patches(
      box, padded.w, padded.h, scaled_img.width, scaled_img.height, pc);
  const TokenList fused = fuse_position(cells, pg, w);

  const AggregationResult agg =
      aggregate_kmeans(fused, cfg.n, cfg.k_iters, seed_mix(cfg.seed, "kmeans"));

  ObjectTokenSet out;
  out.tokens = project_mlp(agg.tokens, w);
  out.provenance.pre_aggregation_count = agg.pre_aggregation_count;
  out.provenance.padded = agg.padded;
  out.provenance.scale_plan = plan;
  return out;
}

}  // namespace refertok
