#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "refertok/encoder.hpp"
#include "refertok/errors.hpp"
#include "refertok/geometry.hpp"
#include "refertok/linalg.hpp"
#include "refertok/rng.hpp"
#include "refertok/tokenizer.hpp"

namespace refertok {

struct AttentionWeights {
  std::size_t heads = 8;
  Matrix wq, wk, wv, wo;    // each d -> d
  Vec bq, bk, bv, bo;       // empty vector means no bias
  Vec ln_gamma, ln_beta;    // pre-norm affine, per dim

  std::size_t dim() const { return wq.rows; }
};

inline void validate_attention(const AttentionWeights& w) {
  const std::size_t d = w.wq.rows;
  if (d == 0 || w.heads == 0 || d % w.heads != 0)
    raise(ErrorKind::InvalidConfig, "attention dim must divide by heads");
  for (const Matrix* m : {&w.wq, &w.wk, &w.wv, &w.wo})
    if (m->rows != d || m->cols != d)
      raise(ErrorKind::DimMismatch, "attention projections must be d x d");
  for (const Vec* b : {&w.bq, &w.bk, &w.bv, &w.bo})
    if (!b->empty() && b->size() != d)
      raise(ErrorKind::DimMismatch, "attention bias length must be d");
  if (w.ln_gamma.size() != d || w.ln_beta.size() != d)
    raise(ErrorKind::DimMismatch, "norm affine length must be d");
}

inline AttentionWeights seeded_attention_weights(std::size_t d,
                                                 std::size_t heads,
                                                 std::uint64_t seed) {
  AttentionWeights w;
  w.heads = heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  w.wq = Matrix::random(d, d, seed_mix(seed, "wq"), scale);
  w.wk = Matrix::random(d, d, seed_mix(seed, "wk"), scale);
  w.wv = Matrix::random(d, d, seed_mix(seed, "wv"), scale);
  w.wo = Matrix::random(d, d, seed_mix(seed, "wo"), scale);
  w.ln_gamma = Vec(d, 1.0);
  w.ln_beta = Vec(d, 0.0);
  validate_attention(w);
  return w;
}

// Per-token standardisation over the embedding axis (population variance,
// epsilon 1e-5), then the affine map.
inline TokenList layer_norm(const TokenList& x, const Vec& gamma,
                            const Vec& beta) {
  constexpr double kEps = 1e-5;
  TokenList out;
  out.reserve(x.size());
  for (const Vec& t : x) {
    if (t.size() != gamma.size() || t.size() != beta.size())
      raise(ErrorKind::DimMismatch, "layer_norm affine length mismatch");
    double mean = 0.0;
    for (double v : t) mean += v;
    mean /= static_cast<double>(t.size());
    double var = 0.0;
    for (double v : t) var += (v - mean) * (v - mean);
    var /= static_cast<double>(t.size());
    const double inv = 1.0 / std::sqrt(var + kEps);
    Vec y(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
      y[i] = (t[i] - mean) * inv * gamma[i] + beta[i];
    out.push_back(std::move(y));
  }
  return out;
}

// Full attention intermediates, kept so tests can check the softmax rows
// and per-head convexity directly.
struct AttentionTrace {
  // probs[query][head][key], each row summing to 1
  std::vector<std::vector<Vec>> probs;
  TokenList head_concat;  // per query, pre-Wo
  TokenList output;
};

inline AttentionTrace cross_attention_trace(const TokenList& q,
                                            const TokenList& kv,
                                            const AttentionWeights& w) {
  validate_attention(w);
  const std::size_t d = w.dim();
  const std::size_t dh = d / w.heads;
  if (kv.empty()) raise(ErrorKind::EmptyInput, "attention needs keys");
  for (const Vec& t : q)
    if (t.size() != d) raise(ErrorKind::DimMismatch, "query dim != d");
  for (const Vec& t : kv)
    if (t.size() != d) raise(ErrorKind::DimMismatch, "key/value dim != d");

  TokenList keys, values;
  keys.reserve(kv.size());
  values.reserve(kv.size());
  for (const Vec& t : kv) {
    keys.push_back(affine(t, w.wk, w.bk));
    values.push_back(affine(t, w.wv, w.bv));
  }

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionTrace trace;
  trace.probs.reserve(q.size());
  trace.head_concat.reserve(q.size());
  trace.output.reserve(q.size());
  for (const Vec& qt : q) {
    const Vec qp = affine(qt, w.wq, w.bq);
    Vec concat(d, 0.0);
    std::vector<Vec> head_probs(w.heads);
    for (std::size_t h = 0; h < w.heads; ++h) {
      const std::size_t base = h * dh;
      Vec scores(kv.size());
      double zmax = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < kv.size(); ++i) {
        double z = 0.0;
        for (std::size_t c = 0; c < dh; ++c)
          z += qp[base + c] * keys[i][base + c];
        scores[i] = z * inv_sqrt;
        if (scores[i] > zmax) zmax = scores[i];
      }
      double total = 0.0;
      for (double& z : scores) {
        z = std::exp(z - zmax);
        total += z;
      }
      Vec& probs = head_probs[h];
      probs.resize(kv.size());
      for (std::size_t i = 0; i < kv.size(); ++i) probs[i] = scores[i] / total;
      for (std::size_t i = 0; i < kv.size(); ++i)
        for (std::size_t c = 0; c < dh; ++c)
          concat[base + c] += probs[i] * values[i][base + c];
    }
    trace.probs.push_back(std::move(head_probs));
    trace.head_concat.push_back(concat);
    trace.output.push_back(affine(concat, w.wo, w.bo));
  }
  return trace;
}

inline TokenList cross_attention(const TokenList& q, const TokenList& kv,
                                 const AttentionWeights& w) {
  return cross_attention_trace(q, kv, w).output;
}

struct InfusionConfig {
  double beta = 1.5;             // contextual padding of the local crop
  std::size_t local_grid = 16;   // F_l token grid edge (256 tokens)
  std::size_t global_grid = 24;  // F_g token grid edge (576 tokens)
};

namespace detail {

// Pre-norm residual cross-attention stage shared by both infusion steps.
inline TokenList residual_stage(const TokenList& t, const TokenList& context,
                                const AttentionWeights& w) {
  const TokenList normed = layer_norm(t, w.ln_gamma, w.ln_beta);
  const TokenList attended = cross_attention(normed, context, w);
  TokenList out;
  out.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    out.push_back(add(t[i], attended[i]));
  return out;
}

inline ImageBuffer resize_to_grid(const ImageBuffer& img, std::size_t grid,
                                  const PatchConfig& pc) {
  return resize_image(img, grid * pc.patch_w, grid * pc.patch_h);
}

}  // namespace detail

// T_l = T_R + Attn(LN(T_R), F_l, F_l) where F_l encodes the padded local
// crop resized to local_grid x local_grid tokens.
inline TokenList local_to_object(const ObjectTokenSet& tr,
                                 const ImageBuffer& image,
                                 const BinaryMask& mask,
                                 const AttentionWeights& w, const Encoder& enc,
                                 const InfusionConfig& cfg = {}) {
  if (image.width != mask.width || image.height != mask.height)
    raise(ErrorKind::DimMismatch, "local_to_object: image/mask dims differ");
  const BoundingBox box = bounding_box(mask);
  const BoundingBox padded =
      contextual_pad(box, image.width, image.height, cfg.beta);
  const ImageBuffer local = crop(image, padded);
  const FeatureMap fl = enc.encode(
      detail::resize_to_grid(local, cfg.local_grid, enc.patch_config()));
  return detail::residual_stage(tr.tokens, fl.tokens(), w);
}

struct FusedTokenSet {
  TokenList tokens;  // same count as the incoming T_R
  std::string source_object;
  std::optional<double> timestamp;
  std::vector<std::string> stages_applied;
};

// T_O = T_l + Attn(LN(T_l), F_g, F_g) where F_g encodes the whole image
// resized to global_grid x global_grid tokens.
inline FusedTokenSet global_to_object(const TokenList& tl,
                                      const ImageBuffer& image,
                                      const AttentionWeights& w,
                                      const Encoder& enc,
                                      const InfusionConfig& cfg = {}) {
  const FeatureMap fg = enc.encode(
      detail::resize_to_grid(image, cfg.global_grid, enc.patch_config()));
  FusedTokenSet out;
  out.tokens = detail::residual_stage(tl, fg.tokens(), w);
  out.stages_applied = {"global"};
  return out;
}

inline FusedTokenSet infuse(const ObjectTokenSet& tr, const ImageBuffer& image,
                            const BinaryMask& mask,
                            const AttentionWeights& w_local,
                            const AttentionWeights& w_global,
                            const Encoder& enc, const InfusionConfig& cfg = {}) {
  const TokenList tl = local_to_object(tr, image, mask, w_local, enc, cfg);
  FusedTokenSet out = global_to_object(tl, image, w_global, enc, cfg);
  out.source_object = tr.object_id;
  out.timestamp = tr.timestamp;
  out.stages_applied = {"local", "global"};
  return out;
}

enum class Framework { VisionObject, ObjectOnly };

inline const char* framework_name(Framework f) {
  return f == Framework::VisionObject ? "vision_object" : "object_only";
}

inline Framework framework_from_name(std::string name) {
  for (char& c : name)
    if (c == '-') c = '_';
  if (name == "vision_object") return Framework::VisionObject;
  if (name == "object_only") return Framework::ObjectOnly;
  raise(ErrorKind::InvalidConfig, "unknown framework '" + name + "'");
}

struct LayoutSegment {
  std::string label;  // sys | vision | text | object | timestamp
  std::size_t count = 0;
  std::string payload;  // object or archive reference, may be empty
};

struct SequenceLayout {
  std::vector<LayoutSegment> segments;

  std::size_t total() const {
    std::size_t sum = 0;
    for (const LayoutSegment& s : segments) sum += s.count;
    return sum;
  }
};

// Sinusoidal encoding: slot 2k holds sin(t * f_k), slot 2k+1 holds
// cos(t * f_k) with f_k = 10000^(-2k/dim).
inline Vec timestamp_embedding(double t, std::size_t dim) {
  if (t < 0.0)
    raise(ErrorKind::NegativeTimestamp, "timestamps must be nonnegative");
  if (dim == 0) raise(ErrorKind::InvalidConfig, "embedding dim must be >= 1");
  Vec v(dim, 0.0);
  for (std::size_t k = 0; 2 * k < dim; ++k) {
    const double freq =
        std::pow(10000.0, -2.0 * static_cast<double>(k) /
                              static_cast<double>(dim));
    v[2 * k] = std::sin(t * freq);
    if (2 * k + 1 < dim) v[2 * k + 1] = std::cos(t * freq);
  }
  return v;
}

// One frame's hand-off unit: tokens plus the labelled segments they occupy.
struct FrameFragment {
  TokenList tokens;
  std::vector<LayoutSegment> segments;
};

inline FrameFragment object_fragment(const TokenList& tokens,
                                     const std::string& object_id) {
  if (tokens.empty()) raise(ErrorKind::EmptyInput, "fragment needs tokens");
  FrameFragment frag;
  frag.tokens = tokens;
  frag.segments = {{"object", tokens.size(), object_id}};
  return frag;
}

inline FrameFragment timestamp_prefix(const TokenList& tokens, double t,
                                      const std::string& object_id) {
  if (tokens.empty()) raise(ErrorKind::EmptyInput, "fragment needs tokens");
  FrameFragment frag;
  frag.tokens.push_back(timestamp_embedding(t, tokens[0].size()));
  frag.tokens.insert(frag.tokens.end(), tokens.begin(), tokens.end());
  frag.segments = {{"timestamp", 1, object_id},
                   {"object", tokens.size(), object_id}};
  return frag;
}

inline SequenceLayout assemble_sequence(
    Framework framework, std::optional<std::size_t> vision_len,
    const std::vector<FrameFragment>& objects, std::size_t tx_len,
    std::size_t sys_len = 5) {
  SequenceLayout layout;
  layout.segments.push_back({"sys", sys_len, ""});
  if (framework == Framework::VisionObject) {
    if (!vision_len)
      raise(ErrorKind::MissingVision,
            "vision_object assembly needs vision tokens");
    layout.segments.push_back({"vision", *vision_len, ""});
  } else if (vision_len) {
    raise(ErrorKind::UnexpectedVision,
          "object_only assembly forbids vision tokens");
  }
  layout.segments.push_back({"text", tx_len, ""});
  for (const FrameFragment& frag : objects)
    layout.segments.insert(layout.segments.end(), frag.segments.begin(),
                           frag.segments.end());
  return layout;
}

}  // namespace refertok
