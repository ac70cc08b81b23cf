#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "refertok/errors.hpp"
#include "refertok/geometry.hpp"
#include "refertok/infusion.hpp"
#include "refertok/linalg.hpp"
#include "refertok/tensor_archive.hpp"
#include "refertok/tokenizer.hpp"

namespace refertok {

inline nlohmann::json json_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::IoError, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + path + "': " + e.what());
  }
  return j;
}

inline void json_to_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::IoError, "cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

namespace detail {

inline void add_matrix(TensorArchive& archive, const std::string& name,
                       const Matrix& m) {
  archive.add(name, {m.rows, m.cols}, m.data);
}

inline Matrix matrix_field(const TensorArchive& archive,
                           const std::string& name) {
  const auto& f = archive.field(name);
  if (f.shape.size() != 2)
    raise(ErrorKind::FormatError, "field '" + name + "' is not a matrix");
  Matrix m(f.shape[0], f.shape[1]);
  for (std::size_t i = 0; i < f.data.size(); ++i) m.data[i] = f.data[i];
  return m;
}

inline Vec vec_field(const TensorArchive& archive, const std::string& name) {
  const auto& f = archive.field(name);
  if (f.shape.size() != 1)
    raise(ErrorKind::FormatError, "field '" + name + "' is not a vector");
  return archive.field_values(name);
}

inline void add_tokens(TensorArchive& archive, const TokenList& tokens) {
  if (tokens.empty()) raise(ErrorKind::EmptyInput, "no tokens to save");
  Vec flat;
  flat.reserve(tokens.size() * tokens[0].size());
  for (const Vec& t : tokens) {
    if (t.size() != tokens[0].size())
      raise(ErrorKind::DimMismatch, "ragged token list");
    flat.insert(flat.end(), t.begin(), t.end());
  }
  archive.add("tokens", {tokens.size(), tokens[0].size()}, flat);
}

inline TokenList tokens_field(const TensorArchive& archive) {
  const auto& f = archive.field("tokens");
  if (f.shape.size() != 2)
    raise(ErrorKind::FormatError, "token field must have shape [n, dim]");
  TokenList tokens(f.shape[0], Vec(f.shape[1]));
  for (std::size_t t = 0; t < f.shape[0]; ++t)
    for (std::size_t c = 0; c < f.shape[1]; ++c)
      tokens[t][c] = f.data[t * f.shape[1] + c];
  return tokens;
}

}  // namespace detail

// Object tokens live in <base>.rtk with a <base>.json sidecar.
inline void save_object_tokens(const std::string& base,
                               const ObjectTokenSet& set) {
  TensorArchive archive;
  detail::add_tokens(archive, set.tokens);
  archive.save(base + ".rtk");

  nlohmann::json side;
  side["object_id"] = set.object_id;
  if (set.timestamp)
    side["timestamp"] = *set.timestamp;
  else
    side["timestamp"] = nullptr;
  side["n"] = set.tokens.size();
  side["padded"] = set.provenance.padded;
  side["pre_aggregation_count"] = set.provenance.pre_aggregation_count;
  side["scale"] = {{"s", set.provenance.scale_plan.s},
                   {"regime", scale_regime_name(set.provenance.scale_plan.regime)}};
  json_to_file(base + ".json", side);
}

inline ScaleRegime scale_regime_from_name(const std::string& name) {
  if (name == "upscale") return ScaleRegime::Upscale;
  if (name == "downscale") return ScaleRegime::Downscale;
  if (name == "identity") return ScaleRegime::Identity;
  raise(ErrorKind::FormatError, "unknown scale regime '" + name + "'");
}

inline ObjectTokenSet load_object_tokens(const std::string& base) {
  ObjectTokenSet set;
  set.tokens = detail::tokens_field(TensorArchive::load(base + ".rtk"));
  const nlohmann::json side = json_from_file(base + ".json");
  std::size_t claimed = 0;
  try {
    set.object_id = side.at("object_id").get<std::string>();
    if (!side.at("timestamp").is_null())
      set.timestamp = side.at("timestamp").get<double>();
    set.provenance.padded = side.at("padded").get<bool>();
    set.provenance.pre_aggregation_count =
        side.at("pre_aggregation_count").get<std::size_t>();
    set.provenance.scale_plan.s = side.at("scale").at("s").get<double>();
    set.provenance.scale_plan.regime =
        scale_regime_from_name(side.at("scale").at("regime").get<std::string>());
    claimed = side.at("n").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + base + ".json': " + e.what());
  }
  if (claimed != set.tokens.size())
    raise(ErrorKind::FormatError,
          "'" + base + "': sidecar token count disagrees with archive");
  return set;
}

inline void save_fused_tokens(const std::string& base,
                              const FusedTokenSet& set) {
  TensorArchive archive;
  detail::add_tokens(archive, set.tokens);
  archive.save(base + ".rtk");

  nlohmann::json side;
  side["source_object"] = set.source_object;
  if (set.timestamp)
    side["timestamp"] = *set.timestamp;
  else
    side["timestamp"] = nullptr;
  side["n"] = set.tokens.size();
  side["stages"] = set.stages_applied;
  json_to_file(base + ".json", side);
}

inline FusedTokenSet load_fused_tokens(const std::string& base) {
  FusedTokenSet set;
  set.tokens = detail::tokens_field(TensorArchive::load(base + ".rtk"));
  const nlohmann::json side = json_from_file(base + ".json");
  std::size_t claimed = 0;
  try {
    set.source_object = side.at("source_object").get<std::string>();
    if (!side.at("timestamp").is_null())
      set.timestamp = side.at("timestamp").get<double>();
    set.stages_applied =
        side.at("stages").get<std::vector<std::string>>();
    claimed = side.at("n").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + base + ".json': " + e.what());
  }
  if (claimed != set.tokens.size())
    raise(ErrorKind::FormatError,
          "'" + base + "': sidecar token count disagrees with archive");
  return set;
}

// Attention weights: one archive holding the parameters plus a manifest
// naming each projection's archive field.
inline void save_attention_weights(const std::string& base,
                                   const AttentionWeights& w) {
  TensorArchive archive;
  detail::add_matrix(archive, "wq", w.wq);
  detail::add_matrix(archive, "wk", w.wk);
  detail::add_matrix(archive, "wv", w.wv);
  detail::add_matrix(archive, "wo", w.wo);
  if (!w.bq.empty()) archive.add("bq", {w.bq.size()}, w.bq);
  if (!w.bk.empty()) archive.add("bk", {w.bk.size()}, w.bk);
  if (!w.bv.empty()) archive.add("bv", {w.bv.size()}, w.bv);
  if (!w.bo.empty()) archive.add("bo", {w.bo.size()}, w.bo);
  archive.add("ln_gamma", {w.ln_gamma.size()}, w.ln_gamma);
  archive.add("ln_beta", {w.ln_beta.size()}, w.ln_beta);
  archive.save(base + ".rtk");

  nlohmann::json manifest;
  manifest["heads"] = w.heads;
  manifest["archive"] =
      std::filesystem::path(base + ".rtk").filename().string();
  nlohmann::json fields;
  for (const char* name : {"wq", "wk", "wv", "wo", "ln_gamma", "ln_beta"})
    fields[name] = name;
  for (const char* name : {"bq", "bk", "bv", "bo"})
    if (archive.has(name)) fields[name] = name;
  manifest["projections"] = fields;
  json_to_file(base + ".json", manifest);
}

inline AttentionWeights load_attention_weights(const std::string& base) {
  const nlohmann::json manifest = json_from_file(base + ".json");
  std::string archive_name;
  AttentionWeights w;
  nlohmann::json fields;
  try {
    w.heads = manifest.at("heads").get<std::size_t>();
    archive_name = manifest.at("archive").get<std::string>();
    fields = manifest.at("projections");
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + base + ".json': " + e.what());
  }
  const std::filesystem::path archive_path =
      std::filesystem::path(base + ".json").parent_path() / archive_name;
  const TensorArchive archive = TensorArchive::load(archive_path.string());

  const auto field_name = [&](const char* key) -> std::optional<std::string> {
    if (!fields.contains(key)) return std::nullopt;
    return fields.at(key).get<std::string>();
  };
  const auto required = [&](const char* key) {
    const auto name = field_name(key);
    if (!name)
      raise(ErrorKind::FormatError,
            "'" + base + ".json': manifest lacks projection '" + key + "'");
    return detail::matrix_field(archive, *name);
  };
  w.wq = required("wq");
  w.wk = required("wk");
  w.wv = required("wv");
  w.wo = required("wo");
  if (const auto n = field_name("bq")) w.bq = detail::vec_field(archive, *n);
  if (const auto n = field_name("bk")) w.bk = detail::vec_field(archive, *n);
  if (const auto n = field_name("bv")) w.bv = detail::vec_field(archive, *n);
  if (const auto n = field_name("bo")) w.bo = detail::vec_field(archive, *n);
  const auto gamma = field_name("ln_gamma");
  const auto beta = field_name("ln_beta");
  if (!gamma || !beta)
    raise(ErrorKind::FormatError,
          "'" + base + ".json': manifest lacks the norm affine");
  w.ln_gamma = detail::vec_field(archive, *gamma);
  w.ln_beta = detail::vec_field(archive, *beta);
  validate_attention(w);
  return w;
}

inline void save_projection_weights(const std::string& base,
                                    const ProjectionWeights& w) {
  TensorArchive archive;
  detail::add_matrix(archive, "pos_linear", w.pos_linear);
  archive.add("pos_bias", {w.pos_bias.size()}, w.pos_bias);
  detail::add_matrix(archive, "mlp_w1", w.mlp_w1);
  archive.add("mlp_b1", {w.mlp_b1.size()}, w.mlp_b1);
  detail::add_matrix(archive, "mlp_w2", w.mlp_w2);
  archive.add("mlp_b2", {w.mlp_b2.size()}, w.mlp_b2);
  archive.save(base + ".rtk");

  nlohmann::json manifest;
  manifest["archive"] =
      std::filesystem::path(base + ".rtk").filename().string();
  manifest["nonlinearity"] = nonlinearity_name(w.nonlinearity);
  json_to_file(base + ".json", manifest);
}

inline ProjectionWeights load_projection_weights(const std::string& base) {
  const nlohmann::json manifest = json_from_file(base + ".json");
  std::string archive_name;
  ProjectionWeights w;
  try {
    archive_name = manifest.at("archive").get<std::string>();
    w.nonlinearity =
        nonlinearity_from_name(manifest.at("nonlinearity").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + base + ".json': " + e.what());
  }
  const std::filesystem::path archive_path =
      std::filesystem::path(base + ".json").parent_path() / archive_name;
  const TensorArchive archive = TensorArchive::load(archive_path.string());
  w.pos_linear = detail::matrix_field(archive, "pos_linear");
  w.pos_bias = detail::vec_field(archive, "pos_bias");
  w.mlp_w1 = detail::matrix_field(archive, "mlp_w1");
  w.mlp_b1 = detail::vec_field(archive, "mlp_b1");
  w.mlp_w2 = detail::matrix_field(archive, "mlp_w2");
  w.mlp_b2 = detail::vec_field(archive, "mlp_b2");
  return w;
}

inline nlohmann::json layout_to_json(const SequenceLayout& layout) {
  nlohmann::json j;
  j["segments"] = nlohmann::json::array();
  for (const LayoutSegment& s : layout.segments)
    j["segments"].push_back({{"label", s.label}, {"count", s.count}});
  j["total"] = layout.total();
  return j;
}

inline SequenceLayout layout_from_json(const nlohmann::json& j,
                                       const std::string& origin) {
  SequenceLayout layout;
  try {
    for (const auto& s : j.at("segments"))
      layout.segments.push_back({s.at("label").get<std::string>(),
                                 s.at("count").get<std::size_t>(), ""});
    if (j.at("total").get<std::size_t>() != layout.total())
      raise(ErrorKind::FormatError, "'" + origin + "': total disagrees");
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + origin + "': " + e.what());
  }
  return layout;
}

}  // namespace refertok
