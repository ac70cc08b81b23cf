#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "refertok/infusion.hpp"
#include "refertok/tokenizer.hpp"
#include "support/attention_jacobian.hpp"
#include "support/helpers.hpp"

namespace refertok {
namespace {

using testsupport::random_image;
using testsupport::random_tokens;
using testsupport::rect_mask;

TEST(LayerNorm, TwoPointTokenStandardises) {
  const TokenList out = layer_norm({{1.0, 3.0}}, {1.0, 1.0}, {0.0, 0.0});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out[0][0], -1.0, 1e-4);
  EXPECT_NEAR(out[0][1], 1.0, 1e-4);
  EXPECT_EQ(out[0][0], -out[0][1]);
}

TEST(LayerNorm, ConstantTokenCollapsesToBeta) {
  const TokenList out =
      layer_norm({{4.0, 4.0, 4.0}}, {2.0, 2.0, 2.0}, {0.5, -0.5, 0.0});
  EXPECT_EQ(out[0], (Vec{0.5, -0.5, 0.0}));
}

TEST(LayerNorm, OutputHasZeroMeanUnitVariance) {
  DetRng rng(55);
  const TokenList tokens = random_tokens(rng, 20, 16, 3.0);
  const TokenList out = layer_norm(tokens, Vec(16, 1.0), Vec(16, 0.0));
  for (const Vec& t : out) {
    double mean = 0.0;
    for (double v : t) mean += v;
    mean /= 16.0;
    EXPECT_NEAR(mean, 0.0, 1e-9);
    double var = 0.0;
    for (double v : t) var += (v - mean) * (v - mean);
    var /= 16.0;
    EXPECT_GT(var, 0.99);
    EXPECT_LT(var, 1.0 + 1e-9);
  }
}

TEST(CrossAttention, SoftmaxRowsSumToOne) {
  DetRng rng(61);
  for (int it = 0; it < 20; ++it) {
    const std::size_t d = 8;
    const AttentionWeights w = seeded_attention_weights(d, 4, rng.next_u64());
    const TokenList q = random_tokens(rng, 3, d);
    const TokenList kv = random_tokens(rng, 5, d);
    const AttentionTrace trace = cross_attention_trace(q, kv, w);
    for (const auto& per_head : trace.probs)
      for (const Vec& row : per_head) {
        double sum = 0.0;
        for (double p : row) {
          EXPECT_GE(p, 0.0);
          sum += p;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
      }
  }
}

TEST(CrossAttention, PreProjectionOutputStaysInValueHull) {
  DetRng rng(62);
  const std::size_t d = 12;
  const std::size_t heads = 3;
  const AttentionWeights w = seeded_attention_weights(d, heads, 5);
  const TokenList q = random_tokens(rng, 4, d);
  const TokenList kv = random_tokens(rng, 6, d);

  TokenList values;
  for (const Vec& t : kv) values.push_back(affine(t, w.wv, w.bv));

  const AttentionTrace trace = cross_attention_trace(q, kv, w);
  const std::size_t dh = d / heads;
  for (const Vec& concat : trace.head_concat)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t c = 0; c < dh; ++c) {
        double lo = values[0][h * dh + c], hi = lo;
        for (const Vec& v : values) {
          lo = std::min(lo, v[h * dh + c]);
          hi = std::max(hi, v[h * dh + c]);
        }
        EXPECT_GE(concat[h * dh + c], lo - 1e-9);
        EXPECT_LE(concat[h * dh + c], hi + 1e-9);
      }
}

TEST(CrossAttention, SingleKeyIsExact) {
  DetRng rng(63);
  const std::size_t d = 8;
  const AttentionWeights w = seeded_attention_weights(d, 2, 9);
  const TokenList q = random_tokens(rng, 3, d);
  const TokenList kv = random_tokens(rng, 1, d);

  const AttentionTrace trace = cross_attention_trace(q, kv, w);
  const Vec value = affine(kv[0], w.wv, w.bv);
  for (std::size_t t = 0; t < q.size(); ++t) {
    for (const Vec& row : trace.probs[t]) {
      ASSERT_EQ(row.size(), 1u);
      EXPECT_EQ(row[0], 1.0);  // exact: exp(0)/exp(0)
    }
    EXPECT_EQ(trace.head_concat[t], value);
    EXPECT_EQ(trace.output[t], affine(value, w.wo, w.bo));
  }
}

TEST(CrossAttention, EqualScoresCollapseToExactUniform) {
  DetRng rng(64);
  const std::size_t d = 8;
  AttentionWeights w = seeded_attention_weights(d, 2, 10);
  w.wk = Matrix::zeros(d, d);  // all keys project to zero: scores all equal
  const TokenList q = random_tokens(rng, 2, d);
  const TokenList kv = random_tokens(rng, 4, d);

  const AttentionTrace trace = cross_attention_trace(q, kv, w);
  for (const auto& per_head : trace.probs)
    for (const Vec& row : per_head)
      for (double p : row) EXPECT_EQ(p, 0.25);  // exact: 1/4 is a power of two
}

TEST(CrossAttention, PermutationBehaviour) {
  DetRng rng(65);
  const std::size_t d = 8;
  const AttentionWeights w = seeded_attention_weights(d, 4, 20);
  const TokenList q = random_tokens(rng, 5, d);
  const TokenList kv = random_tokens(rng, 6, d);

  // Permuting queries permutes outputs bit-identically.
  TokenList q_rev = q;
  std::reverse(q_rev.begin(), q_rev.end());
  const TokenList out = cross_attention(q, kv, w);
  const TokenList out_rev = cross_attention(q_rev, kv, w);
  for (std::size_t i = 0; i < q.size(); ++i)
    EXPECT_EQ(out[i], out_rev[q.size() - 1 - i]);

  // Permuting keys changes only summation order.
  TokenList kv_rev = kv;
  std::reverse(kv_rev.begin(), kv_rev.end());
  const TokenList out_kv = cross_attention(q, kv_rev, w);
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t c = 0; c < d; ++c)
      EXPECT_NEAR(out[i][c], out_kv[i][c], 1e-9);
}

using testsupport::attention_jacobian_column;

TEST(CrossAttention, JacobianMatchesCentralDifferences) {
  DetRng rng(66);
  for (int cfg_i = 0; cfg_i < 5; ++cfg_i) {
    const std::size_t heads = 1 + rng.next_below(2);
    const std::size_t d = heads * (2 + rng.next_below(2));
    const AttentionWeights w = seeded_attention_weights(d, heads, rng.next_u64());
    const TokenList kv = random_tokens(rng, 2 + rng.next_below(4), d);
    const Vec query = testsupport::random_token(rng, d);

    const double h = 1e-5;
    for (std::size_t e = 0; e < d; ++e) {
      const Vec analytic = attention_jacobian_column(query, kv, w, e);
      Vec plus = query, minus = query;
      plus[e] += h;
      minus[e] -= h;
      const Vec f_plus = cross_attention({plus}, kv, w)[0];
      const Vec f_minus = cross_attention({minus}, kv, w)[0];
      for (std::size_t o = 0; o < d; ++o) {
        const double fd = (f_plus[o] - f_minus[o]) / (2.0 * h);
        const double scale =
            std::max({std::abs(analytic[o]), std::abs(fd), 1e-6});
        EXPECT_LE(std::abs(analytic[o] - fd), 1e-4 * scale)
            << "config " << cfg_i << " entry " << e << " output " << o;
      }
    }
  }
}

InfusionConfig tiny_infusion() {
  InfusionConfig cfg;
  cfg.local_grid = 2;
  cfg.global_grid = 3;
  return cfg;
}

ObjectTokenSet tiny_object_tokens(DetRng& rng, std::size_t count,
                                  std::size_t d) {
  ObjectTokenSet set;
  set.tokens = random_tokens(rng, count, d);
  set.object_id = "obj";
  return set;
}

TEST(Infusion, ZeroOutputProjectionIsExactIdentity) {
  DetRng rng(71);
  const std::size_t d = 8;
  const PatchConfig pc{4, 4, d};
  const StubEncoder enc(pc, 33);
  AttentionWeights w = seeded_attention_weights(d, 2, 3);
  w.wo = Matrix::zeros(d, d);

  const ImageBuffer image = random_image(rng, 24, 18);
  const BinaryMask mask = rect_mask(24, 18, {6, 5, 8, 7});
  const ObjectTokenSet tr = tiny_object_tokens(rng, 4, d);

  const TokenList local = local_to_object(tr, image, mask, w, enc, tiny_infusion());
  EXPECT_EQ(local, tr.tokens);

  const FusedTokenSet global = global_to_object(tr.tokens, image, w, enc,
                                                tiny_infusion());
  EXPECT_EQ(global.tokens, tr.tokens);

  const FusedTokenSet fused =
      infuse(tr, image, mask, w, w, enc, tiny_infusion());
  EXPECT_EQ(fused.tokens, tr.tokens);
}

TEST(Infusion, PreservesTokenCountAndMetadata) {
  DetRng rng(72);
  const std::size_t d = 8;
  const PatchConfig pc{4, 4, d};
  const StubEncoder enc(pc, 21);
  const AttentionWeights w_local = seeded_attention_weights(d, 4, 101);
  const AttentionWeights w_global = seeded_attention_weights(d, 4, 102);

  for (int it = 0; it < 20; ++it) {
    const std::size_t count = 1 + rng.next_below(6);
    ObjectTokenSet tr = tiny_object_tokens(rng, count, d);
    tr.object_id = "object-" + std::to_string(it);
    if (it % 2 == 0) tr.timestamp = 0.5 * it;

    const ImageBuffer image = random_image(rng, 30, 20);
    const BinaryMask mask = rect_mask(30, 20, {4, 3, 10, 8});
    const FusedTokenSet out =
        infuse(tr, image, mask, w_local, w_global, enc, tiny_infusion());

    EXPECT_EQ(out.tokens.size(), count);
    EXPECT_EQ(out.source_object, tr.object_id);
    EXPECT_EQ(out.timestamp, tr.timestamp);
    EXPECT_EQ(out.stages_applied,
              (std::vector<std::string>{"local", "global"}));
  }
}

TEST(Infusion, ContextGridsHaveConfiguredTokenCounts) {
  const std::size_t d = 8;
  const PatchConfig pc{4, 4, d};
  const StubEncoder enc(pc, 2);
  InfusionConfig cfg;
  cfg.local_grid = 16;
  cfg.global_grid = 24;

  DetRng rng(73);
  const ImageBuffer image = random_image(rng, 40, 30);
  const FeatureMap local = enc.encode(
      detail::resize_to_grid(image, cfg.local_grid, pc));
  EXPECT_EQ(local.token_count(), 256u);
  const FeatureMap global = enc.encode(
      detail::resize_to_grid(image, cfg.global_grid, pc));
  EXPECT_EQ(global.token_count(), 576u);
}

TEST(TimestampEmbedding, ZeroTimeAlternatesZeroOne) {
  EXPECT_EQ(timestamp_embedding(0.0, 6), (Vec{0, 1, 0, 1, 0, 1}));
  EXPECT_EQ(timestamp_embedding(0.0, 5), (Vec{0, 1, 0, 1, 0}));
}

TEST(TimestampEmbedding, MatchesFrozenSinusoids) {
  const Vec v = timestamp_embedding(2.5, 4);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_NEAR(v[0], 0.5984721441039565, 1e-12);
  EXPECT_NEAR(v[1], -0.8011436155469337, 1e-12);
  EXPECT_NEAR(v[2], 0.024997395914712332, 1e-12);
  EXPECT_NEAR(v[3], 0.9996875162757026, 1e-12);
}

TEST(TimestampEmbedding, RejectsBadArguments) {
  try {
    timestamp_embedding(-1.0, 4);
    FAIL() << "expected NegativeTimestamp";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NegativeTimestamp);
  }
  try {
    timestamp_embedding(1.0, 0);
    FAIL() << "expected InvalidConfig";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(Fragments, TimestampPrefixAddsOneToken) {
  DetRng rng(81);
  const TokenList tokens = random_tokens(rng, 3, 6);
  const FrameFragment frag = timestamp_prefix(tokens, 1.5, "obj");
  ASSERT_EQ(frag.tokens.size(), 4u);
  EXPECT_EQ(frag.tokens[0], timestamp_embedding(1.5, 6));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(frag.tokens[i + 1], tokens[i]);
  ASSERT_EQ(frag.segments.size(), 2u);
  EXPECT_EQ(frag.segments[0].label, "timestamp");
  EXPECT_EQ(frag.segments[0].count, 1u);
  EXPECT_EQ(frag.segments[1].label, "object");
  EXPECT_EQ(frag.segments[1].count, 3u);
}

TEST(AssembleSequence, TotalsMatchArithmetic) {
  DetRng rng(82);
  const TokenList obj_tokens = random_tokens(rng, 32, 4);

  const SequenceLayout object_only = assemble_sequence(
      Framework::ObjectOnly, std::nullopt,
      {object_fragment(obj_tokens, "a")}, 10, 5);
  EXPECT_EQ(object_only.total(), 47u);
  ASSERT_EQ(object_only.segments.size(), 3u);
  EXPECT_EQ(object_only.segments[0].label, "sys");
  EXPECT_EQ(object_only.segments[1].label, "text");
  EXPECT_EQ(object_only.segments[2].label, "object");

  const SequenceLayout vision = assemble_sequence(
      Framework::VisionObject, 1408, {object_fragment(obj_tokens, "a")}, 10, 5);
  EXPECT_EQ(vision.total(), 1455u);
  ASSERT_EQ(vision.segments.size(), 4u);
  EXPECT_EQ(vision.segments[1].label, "vision");
  EXPECT_EQ(vision.segments[1].count, 1408u);

  const SequenceLayout two = assemble_sequence(
      Framework::ObjectOnly, std::nullopt,
      {object_fragment(obj_tokens, "a"), object_fragment(obj_tokens, "b")}, 10,
      5);
  EXPECT_EQ(two.total(), 5u + 10u + 64u);
  EXPECT_EQ(two.segments[2].payload, "a");
  EXPECT_EQ(two.segments[3].payload, "b");
}

TEST(AssembleSequence, ThreeTimestampedFramesInTemporalOrder) {
  DetRng rng(83);
  const std::size_t n = 4;
  std::vector<FrameFragment> frames;
  for (int f = 0; f < 3; ++f)
    frames.push_back(
        timestamp_prefix(random_tokens(rng, n, 6), 0.5 * f, "obj"));
  const SequenceLayout layout =
      assemble_sequence(Framework::ObjectOnly, std::nullopt, frames, 7, 5);
  EXPECT_EQ(layout.total(), 5u + 7u + 3u * (n + 1));
  ASSERT_EQ(layout.segments.size(), 2u + 6u);
  for (int f = 0; f < 3; ++f) {
    EXPECT_EQ(layout.segments[2 + 2 * f].label, "timestamp");
    EXPECT_EQ(layout.segments[3 + 2 * f].label, "object");
  }
}

TEST(AssembleSequence, VisionPresenceIsEnforced) {
  DetRng rng(84);
  const std::vector<FrameFragment> objs = {
      object_fragment(random_tokens(rng, 2, 4), "a")};
  try {
    assemble_sequence(Framework::VisionObject, std::nullopt, objs, 3, 5);
    FAIL() << "expected MissingVision";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingVision);
  }
  try {
    assemble_sequence(Framework::ObjectOnly, 100, objs, 3, 5);
    FAIL() << "expected UnexpectedVision";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnexpectedVision);
  }
}

TEST(FrameworkNames, RoundTripAndNormalise) {
  EXPECT_EQ(framework_from_name("vision-object"), Framework::VisionObject);
  EXPECT_EQ(framework_from_name("vision_object"), Framework::VisionObject);
  EXPECT_EQ(framework_from_name("object-only"), Framework::ObjectOnly);
  EXPECT_STREQ(framework_name(Framework::ObjectOnly), "object_only");
  try {
    framework_from_name("both");
    FAIL() << "expected InvalidConfig";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

}  // namespace
}  // namespace refertok
