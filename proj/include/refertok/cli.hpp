#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "refertok/analysis.hpp"
#include "refertok/budget.hpp"
#include "refertok/errors.hpp"
#include "refertok/infusion.hpp"
#include "refertok/mask_io.hpp"
#include "refertok/run_config.hpp"
#include "refertok/serialization.hpp"
#include "refertok/tokenizer.hpp"

namespace refertok {

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError:
      return 1;
    case ErrorKind::FormatError:
    case ErrorKind::InvalidConfig:
    case ErrorKind::DimMismatch:
    case ErrorKind::MissingVision:
    case ErrorKind::UnexpectedVision:
      return 2;
    default:
      return 3;  // pipeline failures
  }
}

namespace detail {

// Index-stealing pool. Jobs touch disjoint files and pure inputs, so the
// produced bytes cannot depend on the worker count; only the lowest-index
// failure is reported to keep diagnostics reproducible too.
template <typename Fn>
inline void run_jobs(std::size_t workers, std::size_t count, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = count;
  std::exception_ptr error;
  const std::size_t spawn = std::min(workers, count);
  std::vector<std::thread> pool;
  pool.reserve(spawn);
  for (std::size_t t = 0; t < spawn; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (i < failed_index) {
            failed_index = i;
            error = std::current_exception();
          }
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct Job {
  std::size_t object = 0;
  std::size_t frame = kNoFrame;  // kNoFrame marks the single-image form

  static constexpr std::size_t kNoFrame = static_cast<std::size_t>(-1);
};

inline std::vector<Job> build_jobs(const RunConfig& cfg) {
  if (cfg.objects.empty())
    raise(ErrorKind::EmptyInput, "config lists no objects");
  std::vector<Job> jobs;
  for (std::size_t o = 0; o < cfg.objects.size(); ++o) {
    if (cfg.objects[o].is_video()) {
      for (std::size_t f = 0; f < cfg.objects[o].frames.size(); ++f)
        jobs.push_back({o, f});
    } else {
      jobs.push_back({o, Job::kNoFrame});
    }
  }
  return jobs;
}

inline std::string job_base(const ObjectSpec& spec, std::size_t frame) {
  if (frame == Job::kNoFrame) return spec.object_id;
  std::ostringstream out;
  out << spec.object_id << ".f" << std::setw(3) << std::setfill('0') << frame;
  return out.str();
}

inline std::string job_mask_path(const ObjectSpec& spec, std::size_t frame) {
  return frame == Job::kNoFrame ? *spec.mask : spec.frames[frame].mask;
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) raise(ErrorKind::IoError, "cannot create '" + dir + "'");
}

inline std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace detail

// One ObjectTokenSet per object and frame, named <id>.tok or <id>.fNNN.tok.
inline void cmd_tokenize(const RunConfig& cfg, const std::string& image_path,
                         const std::string& out_dir) {
  const ImageBuffer image = load_image_png(image_path);
  const Runtime rt = build_runtime(cfg);
  const std::vector<detail::Job> jobs = detail::build_jobs(cfg);
  detail::ensure_dir(out_dir);

  detail::run_jobs(cfg.workers, jobs.size(), [&](std::size_t i) {
    const detail::Job& job = jobs[i];
    const ObjectSpec& spec = cfg.objects[job.object];
    const BinaryMask mask =
        load_mask(detail::job_mask_path(spec, job.frame));

    TokenizerConfig tok = cfg.tokenizer;
    tok.seed = seed_mix(cfg.seed, spec.object_id,
                        job.frame == detail::Job::kNoFrame ? 0 : job.frame);
    ObjectTokenSet set =
        tokenize_object(image, mask, tok, rt.projection, *rt.encoder);
    set.object_id = spec.object_id;
    if (job.frame != detail::Job::kNoFrame)
      set.timestamp = spec.frames[job.frame].t;
    save_object_tokens(
        detail::join(out_dir, detail::job_base(spec, job.frame) + ".tok"),
        set);
  });
}

// Runs the infusion stages over previously tokenized objects.
inline void cmd_infuse(const RunConfig& cfg, const std::string& image_path,
                       const std::string& in_dir, const std::string& out_dir) {
  const ImageBuffer image = load_image_png(image_path);
  const Runtime rt = build_runtime(cfg);
  const std::vector<detail::Job> jobs = detail::build_jobs(cfg);
  detail::ensure_dir(out_dir);

  detail::run_jobs(cfg.workers, jobs.size(), [&](std::size_t i) {
    const detail::Job& job = jobs[i];
    const ObjectSpec& spec = cfg.objects[job.object];
    const std::string base = detail::job_base(spec, job.frame);
    const ObjectTokenSet tr =
        load_object_tokens(detail::join(in_dir, base + ".tok"));
    const BinaryMask mask =
        load_mask(detail::job_mask_path(spec, job.frame));
    const FusedTokenSet fused =
        infuse(tr, image, mask, rt.local, rt.global, *rt.encoder,
               cfg.infusion);
    save_fused_tokens(detail::join(out_dir, base + ".fused"), fused);
  });
}

// Builds the framework token layout from stored archives.
inline void cmd_assemble(const RunConfig& cfg, Framework framework,
                         const std::string& in_dir,
                         const std::string& out_path, std::size_t tx_len,
                         std::optional<std::size_t> vision_len,
                         const std::string& kind) {
  if (kind != "fused" && kind != "tok")
    raise(ErrorKind::InvalidConfig, "--kind must be fused or tok");
  if (cfg.objects.empty())
    raise(ErrorKind::EmptyInput, "config lists no objects");

  const auto load_tokens = [&](const std::string& base)
      -> std::pair<TokenList, std::optional<double>> {
    if (kind == "fused") {
      FusedTokenSet set = load_fused_tokens(detail::join(in_dir, base));
      return {std::move(set.tokens), set.timestamp};
    }
    ObjectTokenSet set = load_object_tokens(detail::join(in_dir, base));
    return {std::move(set.tokens), set.timestamp};
  };
  const std::string ext = kind == "fused" ? ".fused" : ".tok";

  std::vector<FrameFragment> fragments;
  for (const ObjectSpec& spec : cfg.objects) {
    if (spec.is_video()) {
      for (std::size_t f = 0; f < spec.frames.size(); ++f) {
        auto [tokens, t] =
            load_tokens(detail::job_base(spec, f) + ext);
        fragments.push_back(timestamp_prefix(
            tokens, t.value_or(spec.frames[f].t), spec.object_id));
      }
    } else {
      auto [tokens, t] =
          load_tokens(detail::job_base(spec, detail::Job::kNoFrame) + ext);
      fragments.push_back(object_fragment(tokens, spec.object_id));
    }
  }

  const SequenceLayout layout = assemble_sequence(
      framework, vision_len, fragments, tx_len, cfg.sys_len);
  const auto parent = std::filesystem::path(out_path).parent_path();
  if (!parent.empty()) detail::ensure_dir(parent.string());
  json_to_file(out_path, layout_to_json(layout));
}

struct SweepSpec {
  std::string field;  // L_R | L_Z | L_ZL | L_ZG
  std::uint64_t from = 0;
  std::uint64_t to = 0;
  std::uint64_t step = 1;
};

inline SweepSpec parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  const auto dots = text.find("..");
  const auto colon = text.find(':', dots == std::string::npos ? 0 : dots);
  if (eq == std::string::npos || dots == std::string::npos ||
      colon == std::string::npos || dots < eq || colon < dots)
    raise(ErrorKind::InvalidConfig,
          "sweep must look like FIELD=from..to:step");
  SweepSpec spec;
  spec.field = text.substr(0, eq);
  try {
    spec.from = std::stoull(text.substr(eq + 1, dots - eq - 1));
    spec.to = std::stoull(text.substr(dots + 2, colon - dots - 2));
    spec.step = std::stoull(text.substr(colon + 1));
  } catch (const std::exception&) {
    raise(ErrorKind::InvalidConfig, "sweep bounds must be integers");
  }
  if (spec.field != "L_R" && spec.field != "L_Z" && spec.field != "L_ZL" &&
      spec.field != "L_ZG")
    raise(ErrorKind::InvalidConfig, "sweep field must be one of L_R, L_Z, "
                                    "L_ZL, L_ZG");
  if (spec.step == 0) raise(ErrorKind::InvalidConfig, "sweep step must be >= 1");
  if (spec.to < spec.from)
    raise(ErrorKind::InvalidConfig, "sweep range must be ascending");
  return spec;
}

inline void apply_sweep_value(TokenCounts& tc, const std::string& field,
                              std::uint64_t v) {
  if (field == "L_R") tc.l_r = v;
  else if (field == "L_Z") tc.l_z = v;
  else if (field == "L_ZL") tc.l_zl = v;
  else tc.l_zg = v;
}

inline void cmd_budget(const ModelDims& dims, const TokenCounts& counts,
                       std::uint64_t frames,
                       const std::optional<std::string>& sweep,
                       const std::string& format, std::ostream& out) {
  std::vector<TokenCounts> rows;
  if (sweep) {
    const SweepSpec spec = parse_sweep(*sweep);
    for (std::uint64_t v = spec.from;; v += spec.step) {
      TokenCounts tc = counts;
      apply_sweep_value(tc, spec.field, v);
      rows.push_back(tc);
      if (spec.to - v < spec.step) break;  // next value would pass the end
    }
  } else {
    rows.push_back(counts);
  }

  if (format == "json") {
    nlohmann::json arr = nlohmann::json::array();
    for (const TokenCounts& tc : rows)
      arr.push_back(budget_to_json(compare_frameworks(tc, dims, frames)));
    out << arr.dump(2) << '\n';
    return;
  }
  if (format != "csv")
    raise(ErrorKind::InvalidConfig, "--format must be csv or json");
  out << "# model=" << dims.name << " d=" << dims.d << " d_kv=" << dims.d_kv
      << " m=" << dims.m << " layers=" << dims.layers.size()
      << " frames=" << frames << '\n';
  out << budget_csv_header() << '\n';
  for (const TokenCounts& tc : rows)
    out << budget_csv_rows(compare_frameworks(tc, dims, frames));
}

inline void cmd_simstats(const std::string& before_base,
                         const std::string& after_base, std::ostream& out) {
  const TokenList before =
      detail::tokens_field(TensorArchive::load(before_base + ".rtk"));
  const TokenList after =
      detail::tokens_field(TensorArchive::load(after_base + ".rtk"));
  const auto [sb, sa] = similarity_stats(before, after);
  out << similarity_csv(sb, sa);
}

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Object-token pipeline: tokenize regions, infuse context, "
               "assemble framework layouts, and account token budgets"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  app.add_option("--config", config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  auto* workers_opt =
      app.add_option("--workers", workers, "override the worker count");
  auto* outdir_opt =
      app.add_option("--out-dir", out_dir, "output directory (default: out)");

  auto* tok = app.add_subcommand("tokenize", "mask -> object tokens");
  std::string tok_image;
  tok->add_option("--image", tok_image, "scene PNG")->required();
  tok->fallthrough();

  auto* inf = app.add_subcommand("infuse", "object tokens -> fused tokens");
  std::string inf_image, inf_in_dir;
  inf->add_option("--image", inf_image, "scene PNG")->required();
  inf->add_option("--in-dir", inf_in_dir, "token archives (default: out-dir)");
  inf->fallthrough();

  auto* asm_cmd = app.add_subcommand("assemble", "archives -> layout JSON");
  std::string asm_framework, asm_in_dir, asm_out, asm_kind = "fused";
  std::size_t asm_tx_len = 0;
  std::uint64_t asm_vision_len = 0;
  std::string asm_vision_features;
  asm_cmd->add_option("--framework", asm_framework,
                      "vision-object or object-only")
      ->required();
  asm_cmd->add_option("--text-len", asm_tx_len, "text token count")
      ->required();
  auto* vis_len_opt = asm_cmd->add_option("--vision-len", asm_vision_len,
                                          "vision token count");
  asm_cmd->add_option("--vision-features", asm_vision_features,
                      "count vision tokens from this archive")
      ->excludes(vis_len_opt);
  asm_cmd->add_option("--in-dir", asm_in_dir,
                      "token archives (default: out-dir)");
  asm_cmd->add_option("--out", asm_out, "layout path (default: "
                                        "<out-dir>/layout.json)");
  asm_cmd->add_option("--kind", asm_kind, "fused or tok (default: fused)");
  asm_cmd->fallthrough();

  auto* bud = app.add_subcommand("budget", "FLOPs accounting report");
  std::string bud_model, bud_format = "csv", bud_out;
  TokenCounts bud_counts;
  std::uint64_t bud_frames = 1;
  std::string bud_sweep;
  bud->add_option("--model", bud_model, "model dims JSON");
  bud->add_option("--l-r", bud_counts.l_r, "region tokens");
  bud->add_option("--l-z", bud_counts.l_z, "vision tokens");
  bud->add_option("--l-zl", bud_counts.l_zl, "local infusion tokens");
  bud->add_option("--l-zg", bud_counts.l_zg, "global infusion tokens");
  bud->add_option("--frames", bud_frames, "frames per video (default 1)");
  bud->add_option("--sweep", bud_sweep, "FIELD=from..to:step");
  bud->add_option("--format", bud_format, "csv or json (default csv)");
  bud->add_option("--out", bud_out, "report path (default: stdout)");
  bud->fallthrough();

  auto* sim = app.add_subcommand("simstats", "similarity histogram CSV");
  std::string sim_before, sim_after, sim_out;
  sim->add_option("--before", sim_before, "token archive base")->required();
  sim->add_option("--after", sim_after, "token archive base")->required();
  sim->add_option("--out", sim_out, "CSV path (default: stdout)");
  sim->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (workers_opt->count() > 0) {
      if (workers == 0)
        raise(ErrorKind::InvalidConfig, "workers must be >= 1");
      cfg.workers = workers;
    }

    if (*tok) {
      cmd_tokenize(cfg, tok_image, out_dir);
    } else if (*inf) {
      cmd_infuse(cfg, inf_image,
                 inf_in_dir.empty() ? out_dir : inf_in_dir, out_dir);
    } else if (*asm_cmd) {
      std::optional<std::size_t> vision_len;
      if (vis_len_opt->count() > 0) {
        vision_len = asm_vision_len;
      } else if (!asm_vision_features.empty()) {
        const auto& f =
            TensorArchive::load(asm_vision_features).field("features");
        if (f.shape.size() != 3)
          raise(ErrorKind::FormatError,
                "'" + asm_vision_features + "': features must be rank 3");
        vision_len = f.shape[0] * f.shape[1];
      }
      const std::string out_path =
          asm_out.empty() ? detail::join(out_dir, "layout.json") : asm_out;
      cmd_assemble(cfg, framework_from_name(asm_framework),
                   asm_in_dir.empty() ? out_dir : asm_in_dir, out_path,
                   asm_tx_len, vision_len, asm_kind);
    } else if (*bud) {
      std::string model_path = bud_model;
      if (model_path.empty() && cfg.model_dims_path)
        model_path = *cfg.model_dims_path;
      if (model_path.empty())
        raise(ErrorKind::InvalidConfig,
              "budget needs --model or a budget.model config entry");
      const ModelDims dims = load_model_dims(model_path);
      std::optional<std::string> sweep;
      if (!bud_sweep.empty()) sweep = bud_sweep;
      if (bud_out.empty()) {
        cmd_budget(dims, bud_counts, bud_frames, sweep, bud_format, std::cout);
      } else {
        std::ofstream out(bud_out, std::ios::binary);
        if (!out)
          raise(ErrorKind::IoError, "cannot open '" + bud_out + "' for writing");
        cmd_budget(dims, bud_counts, bud_frames, sweep, bud_format, out);
      }
    } else if (*sim) {
      if (sim_out.empty()) {
        cmd_simstats(sim_before, sim_after, std::cout);
      } else {
        std::ofstream out(sim_out, std::ios::binary);
        if (!out)
          raise(ErrorKind::IoError, "cannot open '" + sim_out + "' for writing");
        cmd_simstats(sim_before, sim_after, out);
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace refertok
