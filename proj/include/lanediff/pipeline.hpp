#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lanediff/diffusion.hpp"
#include "lanediff/metrics.hpp"
#include "lanediff/raster.hpp"
#include "lanediff/skeleton.hpp"

#ifndef LANEDIFF_VERSION
#define LANEDIFF_VERSION "0.0.0"
#endif

namespace lanediff {

inline constexpr const char* kVersion = LANEDIFF_VERSION;

struct ScheduleParams {
  int T = 1000;
  double start = -3.0;
  double end = 3.0;
  double tau = 1.0;

  VarianceSchedule build() const { return sigmoid_schedule(T, start, end, tau); }
};

struct TilingParams {
  int window = 1024;
  int stride = 512;
  int model_resolution = 256;

  /// Window and stride actually used on a w x h tile: both are clamped to the
  /// shorter tile side so small tiles become a single window.
  std::pair<int, int> effective(int w, int h) const {
    if (window < 1 || stride < 1 || model_resolution < 1) throw ParameterError("tiling sizes must be positive");
    const int win = std::min({window, w, h});
    return {win, std::min(stride, win)};
  }
};

/// Supplies the denoiser for one window; called concurrently.
using DenoiserSource = std::function<std::shared_ptr<const Denoiser>(const WindowOrigin& origin, int window)>;

inline DenoiserSource shared_denoiser(std::shared_ptr<const Denoiser> d) {
  return [d = std::move(d)](const WindowOrigin&, int) { return d; };
}

/// Oracle for tiles: each window gets an OracleDenoiser holding its own crop
/// of `target`, resized to model resolution.
inline DenoiserSource oracle_source(GrayRaster target, const VarianceSchedule& sched, int model_res) {
  auto shared_target = std::make_shared<const GrayRaster>(std::move(target));
  return [shared_target, sched, model_res](const WindowOrigin& o, int window) -> std::shared_ptr<const Denoiser> {
    const GrayRaster small = resize_bilinear(crop(*shared_target, o.x, o.y, window, window), model_res, model_res);
    return std::make_shared<OracleDenoiser>(to_model_range(small), sched);
  };
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Rethrows the
/// exception of the lowest failing index.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads < 1) throw ParameterError("thread count must be >= 1");
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t spawn = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (spawn <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(spawn);
    for (std::size_t t = 0; t < spawn; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Sliding-window refinement of a whole tile: every window is refined with
/// noise stream = its index, then windows are averaged where they overlap.
/// The result does not depend on `threads`.
inline GrayRaster refine_tile(const GrayRaster& unrefined, const GrayRaster& condition, const DenoiserSource& source,
                              const SamplerConfig& sampler, const VarianceSchedule& sched, const TilingParams& tiling,
                              int threads = 1) {
  require_same_shape(unrefined, condition, "refine_tile");
  sampler.validate(sched.T);
  const auto [win, stride] = tiling.effective(unrefined.width(), unrefined.height());
  const TileLayout layout = window_plan(unrefined.width(), unrefined.height(), win, stride);
  std::vector<PlacedWindow> windows(layout.origins.size());
  parallel_for(layout.origins.size(), threads, [&](std::size_t i) {
    const WindowOrigin o = layout.origins[i];
    const auto denoiser = source(o, win);
    const GrayRaster refined = refine_mask(crop(unrefined, o.x, o.y, win, win), crop(condition, o.x, o.y, win, win),
                                           *denoiser, sampler, sched, tiling.model_resolution, tiling.model_resolution,
                                           static_cast<std::uint64_t>(i));
    windows[i] = {o, refined};
  });
  return stitch_average(windows, layout);
}

struct PipelineConfig {
  bool refine = true;
  std::string denoiser_name = "none";
  ScheduleParams schedule;
  SamplerConfig sampler = [] {
    SamplerConfig s;
    s.partial_first_step = true;
    return s;
  }();
  TilingParams tiling;
  ExtractionParams extraction;
  EvalConfig eval;
  int threads = 1;
};

struct PipelineResult {
  GrayRaster refined;
  LaneGraph graph;
  std::optional<Evaluation> evaluation;
  MaskChangeStats pixel_change;
  std::size_t windows = 0;
};

/// mask -> optional tiled refinement -> extraction -> optional evaluation.
/// `timings` (if given) receives (stage, seconds) pairs. Errors are
/// rethrown with the failing stage prefixed.
inline PipelineResult run_pipeline(const GrayRaster& unrefined, const GrayRaster& condition, const LaneGraph* gt,
                                   const DenoiserSource* source, const PipelineConfig& cfg,
                                   std::vector<std::pair<std::string, double>>* timings = nullptr) {
  using clock = std::chrono::steady_clock;
  const auto timed = [&](const char* stage, auto&& fn) {
    const auto t0 = clock::now();
    try {
      fn();
    } catch (const ParameterError& e) {
      throw ParameterError(std::string(stage) + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(stage) + ": " + e.what());
    }
    if (timings) timings->emplace_back(stage, std::chrono::duration<double>(clock::now() - t0).count());
  };
  cfg.extraction.validate();
  cfg.eval.validate();
  PipelineResult r;
  if (cfg.refine) {
    if (!source) throw ParameterError("refinement requested without a denoiser");
    const VarianceSchedule sched = cfg.schedule.build();
    const auto [win, stride] = cfg.tiling.effective(unrefined.width(), unrefined.height());
    r.windows = window_plan(unrefined.width(), unrefined.height(), win, stride).origins.size();
    timed("refine", [&] { r.refined = refine_tile(unrefined, condition, *source, cfg.sampler, sched, cfg.tiling, cfg.threads); });
  } else {
    r.refined = clamp01(unrefined);
  }
  timed("extract", [&] { r.graph = extract(r.refined, cfg.extraction); });
  r.pixel_change = mask_change_stats(threshold(unrefined, cfg.extraction.alpha), threshold(r.refined, cfg.extraction.alpha));
  if (gt) {
    timed("evaluate", [&] { r.evaluation = evaluate(r.graph, *gt, cfg.eval); });
  }
  return r;
}

inline nlohmann::ordered_json to_json(const Scores& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

inline nlohmann::ordered_json to_json(const MaskChangeStats& s) {
  return {{"white_to_black", s.white_to_black},
          {"black_to_white", s.black_to_white},
          {"abs_diff", s.abs_diff},
          {"rel_white_to_black_pct", s.rel_white_to_black_pct},
          {"rel_black_to_white_pct", s.rel_black_to_white_pct}};
}

inline nlohmann::ordered_json to_json(const EvalConfig& c) {
  return {{"densify_spacing_px", c.densify_spacing_px},
          {"match_radius_px", c.match_radius_px},
          {"topo_radius_px", c.topo_radius_px},
          {"gsd_cm", c.gsd_cm},
          {"matching", to_string(c.matching)}};
}

inline nlohmann::ordered_json to_json(const ExtractionParams& p) {
  return {{"alpha", p.alpha},
          {"min_component_len_px", p.min_component_len_px},
          {"max_spur_len_px", p.max_spur_len_px},
          {"dp_epsilon_px", p.dp_epsilon_px}};
}

inline nlohmann::ordered_json to_json(const Evaluation& e) {
  return {{"geo", to_json(e.geo)},
          {"topo", to_json(e.topo)},
          {"counts", {{"pred_nodes", e.pred_nodes}, {"gt_nodes", e.gt_nodes}, {"matched", e.matched}}}};
}

inline nlohmann::ordered_json config_json(const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  j["refine"] = cfg.refine;
  j["denoiser"] = cfg.denoiser_name;
  j["schedule"] = {{"T", cfg.schedule.T}, {"start", cfg.schedule.start}, {"end", cfg.schedule.end}, {"tau", cfg.schedule.tau}};
  j["sampler"] = {{"steps", cfg.sampler.steps},
                  {"mode", to_string(cfg.sampler.mode)},
                  {"forward_steps", cfg.sampler.forward_steps},
                  {"seed", cfg.sampler.seed},
                  {"partial_first_step", cfg.sampler.partial_first_step}};
  j["tiling"] = {{"window", cfg.tiling.window},
                 {"stride", cfg.tiling.stride},
                 {"model_resolution", cfg.tiling.model_resolution}};
  j["extraction"] = to_json(cfg.extraction);
  j["evaluation"] = to_json(cfg.eval);
  return j;
}

/// Report with a deterministic key order. The thread count is left out and
/// timings are included only when provided, so reports without timings are
/// byte-stable across runs and thread counts.
inline nlohmann::ordered_json pipeline_report(const PipelineConfig& cfg, const PipelineResult& r,
                                              const nlohmann::ordered_json& inputs,
                                              const std::vector<std::pair<std::string, double>>* timings = nullptr) {
  nlohmann::ordered_json j;
  j["tool"] = {{"name", "lanediff"}, {"version", kVersion}};
  j["config"] = config_json(cfg);
  j["inputs"] = inputs;
  j["windows"] = r.windows;
  j["graph"] = {{"nodes", r.graph.node_count()}, {"edges", r.graph.edge_count()}};
  if (r.evaluation) {
    j["scores"] = {{"geo", to_json(r.evaluation->geo)}, {"topo", to_json(r.evaluation->topo)}};
    j["counts"] = to_json(*r.evaluation)["counts"];
  }
  j["pixel_change"] = to_json(r.pixel_change);
  if (timings) {
    nlohmann::ordered_json t = nlohmann::ordered_json::object();
    for (const auto& [stage, sec] : *timings) t[stage] = sec;
    j["timing_s"] = t;
  }
  return j;
}

}  // namespace lanediff
