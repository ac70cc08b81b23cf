#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "refertok/encoder.hpp"
#include "refertok/errors.hpp"
#include "refertok/infusion.hpp"
#include "refertok/rng.hpp"
#include "refertok/serialization.hpp"
#include "refertok/tokenizer.hpp"

namespace refertok {

// One weight bundle comes either from a seed or from files, never both.
struct WeightSource {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> path;
};

struct FrameSpec {
  double t = 0.0;
  std::string mask;
};

struct ObjectSpec {
  std::string object_id;
  std::optional<std::string> mask;  // single-image form
  std::vector<FrameSpec> frames;    // video form

  bool is_video() const { return !frames.empty(); }
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t sys_len = 5;

  PatchConfig patch{14, 14, 64};
  WeightSource encoder_source;  // seed or feature-map archive

  TokenizerConfig tokenizer;          // seed filled from the global seed
  std::optional<std::string> projection_path;

  std::size_t heads = 8;
  WeightSource attention_local;
  WeightSource attention_global;

  InfusionConfig infusion;

  std::optional<std::string> model_dims_path;

  std::vector<ObjectSpec> objects;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> known,
                                const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (item.key() == k) ok = true;
    if (!ok)
      raise(ErrorKind::FormatError,
            where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
inline void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ObjectSpec parse_object_spec(const nlohmann::json& j,
                                    const std::string& origin) {
  detail::reject_unknown_keys(j, {"object_id", "mask", "frames"},
                              origin + " object");
  ObjectSpec spec;
  try {
    spec.object_id = j.at("object_id").get<std::string>();
    if (j.contains("mask")) spec.mask = j.at("mask").get<std::string>();
    if (j.contains("frames")) {
      for (const auto& f : j.at("frames"))
        spec.frames.push_back(
            {f.at("t").get<double>(), f.at("mask").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + origin + "': " + e.what());
  }
  if (spec.object_id.empty())
    raise(ErrorKind::InvalidConfig, "object_id must be nonempty");
  if (spec.mask.has_value() == spec.is_video())
    raise(ErrorKind::InvalidConfig,
          "object '" + spec.object_id + "' needs a mask or frames, not both");
  for (std::size_t i = 1; i < spec.frames.size(); ++i)
    if (spec.frames[i].t <= spec.frames[i - 1].t)
      raise(ErrorKind::InvalidConfig,
            "object '" + spec.object_id +
                "': frame timestamps must be strictly increasing");
  return spec;
}

inline WeightSource parse_weight_source(const nlohmann::json& j,
                                        const char* seed_key,
                                        const char* path_key,
                                        const std::string& where) {
  WeightSource src;
  if (j.contains(seed_key)) src.seed = j.at(seed_key).get<std::uint64_t>();
  if (j.contains(path_key)) src.path = j.at(path_key).get<std::string>();
  if (src.seed && src.path)
    raise(ErrorKind::InvalidConfig,
          where + ": '" + seed_key + "' and '" + path_key +
              "' are mutually exclusive");
  return src;
}

inline RunConfig parse_run_config(const nlohmann::json& j,
                                  const std::string& origin) {
  detail::reject_unknown_keys(j,
                              {"seed", "workers", "sys_len", "encoder",
                               "tokenizer", "attention", "infusion", "budget",
                               "objects"},
                              origin);
  RunConfig cfg;
  try {
    detail::read_opt(j, "seed", cfg.seed);
    detail::read_opt(j, "workers", cfg.workers);
    detail::read_opt(j, "sys_len", cfg.sys_len);

    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      detail::reject_unknown_keys(
          e, {"patch_h", "patch_w", "embed_dim", "seed", "feature_map"},
          origin + " encoder");
      detail::read_opt(e, "patch_h", cfg.patch.patch_h);
      detail::read_opt(e, "patch_w", cfg.patch.patch_w);
      detail::read_opt(e, "embed_dim", cfg.patch.embed_dim);
      cfg.encoder_source =
          parse_weight_source(e, "seed", "feature_map", origin + " encoder");
    }

    cfg.tokenizer.embed_dim = cfg.patch.embed_dim;
    cfg.tokenizer.out_dim = cfg.patch.embed_dim;
    if (j.contains("tokenizer")) {
      const auto& t = j.at("tokenizer");
      detail::reject_unknown_keys(
          t, {"n", "k_iters", "beta", "out_dim", "weights"},
          origin + " tokenizer");
      detail::read_opt(t, "n", cfg.tokenizer.n);
      detail::read_opt(t, "k_iters", cfg.tokenizer.k_iters);
      detail::read_opt(t, "beta", cfg.tokenizer.beta);
      detail::read_opt(t, "out_dim", cfg.tokenizer.out_dim);
      if (t.contains("weights"))
        cfg.projection_path = t.at("weights").get<std::string>();
    }

    if (j.contains("attention")) {
      const auto& a = j.at("attention");
      detail::reject_unknown_keys(a, {"heads", "seed", "local", "global"},
                              origin + " attention");
      detail::read_opt(a, "heads", cfg.heads);
      const bool has_paths = a.contains("local") || a.contains("global");
      if (a.contains("seed") && has_paths)
        raise(ErrorKind::InvalidConfig,
              origin + " attention: seed and weight paths are mutually "
                       "exclusive");
      if (has_paths) {
        if (!a.contains("local") || !a.contains("global"))
          raise(ErrorKind::InvalidConfig,
                origin + " attention: both local and global paths required");
        cfg.attention_local.path = a.at("local").get<std::string>();
        cfg.attention_global.path = a.at("global").get<std::string>();
      } else if (a.contains("seed")) {
        const auto s = a.at("seed").get<std::uint64_t>();
        cfg.attention_local.seed = seed_mix(s, "local");
        cfg.attention_global.seed = seed_mix(s, "global");
      }
    }

    if (j.contains("infusion")) {
      const auto& i = j.at("infusion");
      detail::reject_unknown_keys(i, {"beta", "local_grid", "global_grid"},
                              origin + " infusion");
      detail::read_opt(i, "beta", cfg.infusion.beta);
      detail::read_opt(i, "local_grid", cfg.infusion.local_grid);
      detail::read_opt(i, "global_grid", cfg.infusion.global_grid);
    }

    if (j.contains("budget")) {
      const auto& b = j.at("budget");
      detail::reject_unknown_keys(b, {"model"}, origin + " budget");
      if (b.contains("model"))
        cfg.model_dims_path = b.at("model").get<std::string>();
    }

    if (j.contains("objects"))
      for (const auto& o : j.at("objects"))
        cfg.objects.push_back(parse_object_spec(o, origin));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + origin + "': " + e.what());
  }

  if (cfg.tokenizer.n == 0 || cfg.tokenizer.n >= 100)
    raise(ErrorKind::InvalidConfig, "tokenizer n must satisfy 1 <= n < 100");
  if (cfg.tokenizer.k_iters == 0)
    raise(ErrorKind::InvalidConfig, "k_iters must be >= 1");
  if (cfg.tokenizer.beta < 1.0)
    raise(ErrorKind::InvalidConfig, "beta must be >= 1");
  if (cfg.workers == 0)
    raise(ErrorKind::InvalidConfig, "workers must be >= 1");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  return parse_run_config(json_from_file(path), path);
}

// Materialised bundle the commands actually run with.
struct Runtime {
  std::unique_ptr<Encoder> encoder;
  ProjectionWeights projection;
  AttentionWeights local;
  AttentionWeights global;
};

inline std::unique_ptr<Encoder> build_encoder(const RunConfig& cfg) {
  if (cfg.encoder_source.path) {
    FeatureMap map = load_feature_map(*cfg.encoder_source.path, cfg.patch);
    return std::make_unique<FixedFeatureEncoder>(cfg.patch, std::move(map));
  }
  const std::uint64_t seed = cfg.encoder_source.seed
                                 ? *cfg.encoder_source.seed
                                 : seed_mix(cfg.seed, "encoder");
  return std::make_unique<StubEncoder>(cfg.patch, seed);
}

inline Runtime build_runtime(const RunConfig& cfg) {
  Runtime rt;
  rt.encoder = build_encoder(cfg);
  rt.projection =
      cfg.projection_path
          ? load_projection_weights(*cfg.projection_path)
          : seeded_projection_weights(cfg.tokenizer.embed_dim,
                                      cfg.tokenizer.out_dim,
                                      seed_mix(cfg.seed, "projection"));
  const auto attention = [&](const WeightSource& src, const char* label) {
    if (src.path) return load_attention_weights(*src.path);
    const std::uint64_t seed =
        src.seed ? *src.seed : seed_mix(cfg.seed, label);
    return seeded_attention_weights(cfg.tokenizer.out_dim, cfg.heads, seed);
  };
  rt.local = attention(cfg.attention_local, "local");
  rt.global = attention(cfg.attention_global, "global");
  return rt;
}

}  // namespace refertok
