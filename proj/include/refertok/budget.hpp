#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "refertok/errors.hpp"

namespace refertok {

struct ModelDims {
  std::string name;
  std::uint64_t d = 0;     // hidden size
  std::uint64_t d_kv = 0;  // key/value projection width
  std::uint64_t m = 0;     // FFN intermediate size
  std::vector<std::uint64_t> layers;  // per-layer multiplicity K_s
};

inline void validate_model_dims(const ModelDims& dims) {
  if (dims.d == 0 || dims.d_kv == 0 || dims.m == 0)
    raise(ErrorKind::InvalidConfig, "model dims must be positive");
  if (dims.layers.empty())
    raise(ErrorKind::InvalidConfig, "model needs at least one layer");
  for (std::uint64_t k : dims.layers)
    if (k == 0) raise(ErrorKind::InvalidConfig, "layer multiplicity must be >= 1");
}

inline ModelDims parse_model_dims(const nlohmann::json& j,
                                  const std::string& origin) {
  ModelDims dims;
  try {
    dims.name = j.at("name").get<std::string>();
    dims.d = j.at("d").get<std::uint64_t>();
    dims.d_kv = j.at("d_kv").get<std::uint64_t>();
    dims.m = j.at("m").get<std::uint64_t>();
    dims.layers = j.at("layers").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + origin + "': " + e.what());
  }
  validate_model_dims(dims);
  return dims;
}

inline ModelDims load_model_dims(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::IoError, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + path + "': " + e.what());
  }
  return parse_model_dims(j, path);
}

struct TokenCounts {
  std::uint64_t l_r = 0;   // region tokens
  std::uint64_t l_z = 0;   // vision tokens
  std::uint64_t l_zl = 0;  // local-to-object tokens
  std::uint64_t l_zg = 0;  // global-to-object tokens
};

using Flops = std::uint64_t;

namespace detail {

using Wide = unsigned __int128;

inline Flops narrow_flops(Wide v) {
  if (v > static_cast<Wide>(~std::uint64_t{0}))
    raise(ErrorKind::Overflow, "FLOPs count exceeds 64 bits");
  return static_cast<Flops>(v);
}

// Factors are capped at 2^32 so four-way products stay inside 128 bits.
inline void check_factor(std::uint64_t v, const char* what) {
  if (v >> 32)
    raise(ErrorKind::Overflow, std::string(what) + " exceeds 2^32");
}

inline Wide block_flops_wide(std::uint64_t n, const ModelDims& dims) {
  check_factor(n, "token count");
  check_factor(dims.d, "d");
  check_factor(dims.d_kv, "d_kv");
  check_factor(dims.m, "m");
  const Wide wn = n, wd = dims.d, wkv = dims.d_kv, wm = dims.m;
  return 2 * wn * wd * wd + 2 * wn * wd * wkv + 2 * wn * wn * wd +
         3 * wn * wd * wm;
}

inline Wide llm_flops_wide(std::uint64_t n, const ModelDims& dims) {
  const Wide block = block_flops_wide(n, dims);
  Wide total = 0;
  for (std::uint64_t k : dims.layers) {
    check_factor(k, "layer multiplicity");
    const Wide term = block * static_cast<Wide>(k);
    if (k != 0 && term / static_cast<Wide>(k) != block)
      raise(ErrorKind::Overflow, "FLOPs sum exceeds 128 bits");
    const Wide next = total + term;
    if (next < total) raise(ErrorKind::Overflow, "FLOPs sum exceeds 128 bits");
    total = next;
  }
  return total;
}

}  // namespace detail

// Per-block cost 2nd^2 + 2nd*d_kv + 2n^2*d + 3ndm, exact.
inline Flops block_flops(std::uint64_t n, const ModelDims& dims) {
  validate_model_dims(dims);
  return detail::narrow_flops(detail::block_flops_wide(n, dims));
}

// Vision-Object prefill: every layer attends over L_R + L_Z tokens.
inline Flops vision_object_flops(const TokenCounts& tc, const ModelDims& dims) {
  validate_model_dims(dims);
  return detail::narrow_flops(detail::llm_flops_wide(tc.l_r + tc.l_z, dims));
}

// Object-Only prefill: layers attend over L_R tokens only, plus the
// infusion cross-attention add-ons 2(L_R+L_ZL)d^2 + 2(L_R+L_ZG)d^2.
// The add-on runs once per processed frame, so video accounting passes
// frames > 1 while the LLM term is unchanged.
inline Flops object_only_flops(const TokenCounts& tc, const ModelDims& dims,
                               std::uint64_t frames = 1) {
  validate_model_dims(dims);
  if (frames == 0) raise(ErrorKind::InvalidConfig, "frames must be >= 1");
  detail::check_factor(frames, "frame count");
  const detail::Wide d = dims.d;
  const detail::Wide infusion =
      (2 * (static_cast<detail::Wide>(tc.l_r) + tc.l_zl) * d * d +
       2 * (static_cast<detail::Wide>(tc.l_r) + tc.l_zg) * d * d) *
      static_cast<detail::Wide>(frames);
  const detail::Wide total = detail::llm_flops_wide(tc.l_r, dims) + infusion;
  if (total < infusion) raise(ErrorKind::Overflow, "FLOPs sum exceeds 128 bits");
  return detail::narrow_flops(total);
}

struct BudgetReport {
  ModelDims dims;  // echoed so every report names its assumptions
  TokenCounts counts;
  std::uint64_t frames = 1;
  Flops vision_object = 0;
  Flops object_only = 0;
  double ratio = 0.0;  // vision_object / object_only
};

inline BudgetReport compare_frameworks(const TokenCounts& tc,
                                       const ModelDims& dims,
                                       std::uint64_t frames = 1) {
  BudgetReport report;
  report.dims = dims;
  report.counts = tc;
  report.frames = frames;
  report.vision_object = vision_object_flops(tc, dims);
  report.object_only = object_only_flops(tc, dims, frames);
  if (report.object_only > 0)
    report.ratio = static_cast<double>(report.vision_object) /
                   static_cast<double>(report.object_only);
  return report;
}

inline std::string budget_csv_header() {
  return "framework,L_R,L_Z,L_ZL,L_ZG,flops,flops_tera,ratio";
}

inline std::string budget_csv_rows(const BudgetReport& r) {
  std::ostringstream out;
  const auto row = [&](const char* fw, Flops flops) {
    out << fw << ',' << r.counts.l_r << ',' << r.counts.l_z << ','
        << r.counts.l_zl << ',' << r.counts.l_zg << ',' << flops << ','
        << static_cast<double>(flops) / 1e12 << ',' << r.ratio << '\n';
  };
  out.precision(6);
  row("vision_object", r.vision_object);
  row("object_only", r.object_only);
  return out.str();
}

inline nlohmann::json budget_to_json(const BudgetReport& r) {
  nlohmann::json j;
  j["model"] = {{"name", r.dims.name},
                {"d", r.dims.d},
                {"d_kv", r.dims.d_kv},
                {"m", r.dims.m},
                {"layers", r.dims.layers}};
  j["counts"] = {{"L_R", r.counts.l_r},
                 {"L_Z", r.counts.l_z},
                 {"L_ZL", r.counts.l_zl},
                 {"L_ZG", r.counts.l_zg}};
  j["frames"] = r.frames;
  j["vision_object"] = {{"flops", r.vision_object},
                        {"flops_tera",
                         static_cast<double>(r.vision_object) / 1e12}};
  j["object_only"] = {{"flops", r.object_only},
                      {"flops_tera",
                       static_cast<double>(r.object_only) / 1e12}};
  j["ratio"] = r.ratio;
  return j;
}

}  // namespace refertok
