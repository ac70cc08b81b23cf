#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "refertok/errors.hpp"
#include "refertok/geometry.hpp"
#include "refertok/linalg.hpp"
#include "refertok/rng.hpp"
#include "refertok/tensor_archive.hpp"

namespace refertok {

struct PatchConfig {
  std::size_t patch_h = 14;
  std::size_t patch_w = 14;
  std::size_t embed_dim = 64;

  std::size_t patch_area() const { return patch_h * patch_w; }
};

// Token grid of embeddings as produced by a vision encoder. Row-major cells,
// embed_dim contiguous values per cell.
struct FeatureMap {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t embed_dim = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(std::size_t gh, std::size_t gw, std::size_t d)
      : grid_h(gh), grid_w(gw), embed_dim(d), values(gh * gw * d, 0.0) {}

  std::size_t token_count() const { return grid_h * grid_w; }

  double* cell(std::size_t gy, std::size_t gx) {
    return values.data() + (gy * grid_w + gx) * embed_dim;
  }
  const double* cell(std::size_t gy, std::size_t gx) const {
    return values.data() + (gy * grid_w + gx) * embed_dim;
  }

  Vec cell_vec(std::size_t gy, std::size_t gx) const {
    const double* p = cell(gy, gx);
    return Vec(p, p + embed_dim);
  }

  // All cells as a token list, row-major.
  TokenList tokens() const {
    TokenList out;
    out.reserve(token_count());
    for (std::size_t gy = 0; gy < grid_h; ++gy)
      for (std::size_t gx = 0; gx < grid_w; ++gx) out.push_back(cell_vec(gy, gx));
    return out;
  }
};

// Foreground indicators at token-grid resolution.
struct TokenMask {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<std::uint8_t> bits;

  TokenMask() = default;
  TokenMask(std::size_t gh, std::size_t gw)
      : grid_h(gh), grid_w(gw), bits(gh * gw, 0) {}

  std::uint8_t at(std::size_t gy, std::size_t gx) const {
    return bits[gy * grid_w + gx];
  }
  void set(std::size_t gy, std::size_t gx, bool fg = true) {
    bits[gy * grid_w + gx] = fg ? 1 : 0;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += (b != 0);
    return n;
  }
};

// Token-grid dimensions for an image: ceil division, images are implicitly
// zero-padded to whole patches.
inline std::pair<std::size_t, std::size_t> patch_grid(std::size_t img_w,
                                                      std::size_t img_h,
                                                      const PatchConfig& cfg) {
  const std::size_t gw = (img_w + cfg.patch_w - 1) / cfg.patch_w;
  const std::size_t gh = (img_h + cfg.patch_h - 1) / cfg.patch_h;
  return {gw, gh};
}

// Deterministic stand-in for a vision encoder: each token embedding is
// P * flatten(patch), with P an embed_dim x (patch_h*patch_w*channels)
// matrix whose entries are drawn row-major from DetRng(seed) as
// next_signed() / sqrt(fan_in). Pixels are flattened row-major with
// interleaved channels; out-of-image pixels read as zero. The map is linear
// in the image and bit-reproducible for a given (image, cfg, seed).
inline FeatureMap encode_stub(const ImageBuffer& image, const PatchConfig& cfg,
                              std::uint64_t seed) {
  const auto [gw, gh] = patch_grid(image.width, image.height, cfg);
  const std::size_t fan_in = cfg.patch_area() * image.channels;
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));

  Matrix proj(cfg.embed_dim, fan_in);
  DetRng rng(seed);
  for (double& v : proj.data) v = rng.next_signed() * scale;

  FeatureMap out(gh, gw, cfg.embed_dim);
  std::vector<double> patch(fan_in);
  for (std::size_t gy = 0; gy < gh; ++gy) {
    for (std::size_t gx = 0; gx < gw; ++gx) {
      std::size_t k = 0;
      for (std::size_t py = 0; py < cfg.patch_h; ++py) {
        for (std::size_t px = 0; px < cfg.patch_w; ++px) {
          const std::size_t y = gy * cfg.patch_h + py;
          const std::size_t x = gx * cfg.patch_w + px;
          for (std::size_t c = 0; c < image.channels; ++c, ++k)
            patch[k] = (y < image.height && x < image.width) ? image.at(y, x, c) : 0.0;
        }
      }
      double* dst = out.cell(gy, gx);
      for (std::size_t r = 0; r < cfg.embed_dim; ++r) {
        const double* row = proj.data.data() + r * fan_in;
        double acc = 0.0;
        for (std::size_t i = 0; i < fan_in; ++i) acc += row[i] * patch[i];
        dst[r] = acc;
      }
    }
  }
  return out;
}

// Project a pixel mask onto the token grid. A cell is foreground iff any
// pixel it covers is foreground, so a nonempty pixel mask always yields a
// nonempty token mask.
inline TokenMask grid_mask(const BinaryMask& mask, const PatchConfig& cfg) {
  const auto [gw, gh] = patch_grid(mask.width, mask.height, cfg);
  TokenMask out(gh, gw);
  bool any = false;
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      any = true;
      out.set(y / cfg.patch_h, x / cfg.patch_w);
    }
  }
  if (!any) raise(ErrorKind::EmptyMask, "grid_mask of an all-zero mask");
  return out;
}

// Feature maps persist as a tensor archive with one field "features" of
// shape [grid_h, grid_w, embed_dim].
inline void save_feature_map(const std::string& path, const FeatureMap& map) {
  TensorArchive archive;
  archive.add("features", {map.grid_h, map.grid_w, map.embed_dim}, map.values);
  archive.save(path);
}

inline FeatureMap load_feature_map(const std::string& path,
                                   const PatchConfig& expected) {
  const TensorArchive archive = TensorArchive::load(path);
  const auto& f = archive.field("features");
  if (f.shape.size() != 3)
    raise(ErrorKind::FormatError,
          "'" + path + "': features must have rank 3, got rank " +
              std::to_string(f.shape.size()));
  if (f.shape[2] != expected.embed_dim)
    raise(ErrorKind::DimMismatch,
          "'" + path + "': embed_dim " + std::to_string(f.shape[2]) +
              " vs expected " + std::to_string(expected.embed_dim));
  FeatureMap map(f.shape[0], f.shape[1], f.shape[2]);
  map.values.assign(f.data.begin(), f.data.end());
  return map;
}

// Encoder handle used by the tokenizer and infusion pipelines.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual FeatureMap encode(const ImageBuffer& image) const = 0;
  virtual const PatchConfig& patch_config() const = 0;
};

class StubEncoder final : public Encoder {
 public:
  StubEncoder(PatchConfig cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {}

  FeatureMap encode(const ImageBuffer& image) const override {
    return encode_stub(image, cfg_, seed_);
  }
  const PatchConfig& patch_config() const override { return cfg_; }

 private:
  PatchConfig cfg_;
  std::uint64_t seed_;
};

// Serves one externally computed feature map. The requested grid must match
// what the map provides; anything else is a mismatch, not a silent resize.
class FixedFeatureEncoder final : public Encoder {
 public:
  FixedFeatureEncoder(PatchConfig cfg, FeatureMap map)
      : cfg_(cfg), map_(std::move(map)) {
    if (map_.embed_dim != cfg_.embed_dim)
      raise(ErrorKind::DimMismatch, "feature map embed_dim vs patch config");
  }

  FeatureMap encode(const ImageBuffer& image) const override {
    const auto [gw, gh] = patch_grid(image.width, image.height, cfg_);
    if (gw != map_.grid_w || gh != map_.grid_h)
      raise(ErrorKind::DimMismatch,
            "precomputed feature map is " + std::to_string(map_.grid_w) + "x" +
                std::to_string(map_.grid_h) + " tokens, image needs " +
                std::to_string(gw) + "x" + std::to_string(gh));
    return map_;
  }
  const PatchConfig& patch_config() const override { return cfg_; }

 private:
  PatchConfig cfg_;
  FeatureMap map_;
};

}  // namespace refertok
