#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lanediff/lanediff.hpp"

namespace fs = std::filesystem;
using namespace lanediff;
using json = nlohmann::ordered_json;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

/// Raised for bad flag values detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

void emit_json(const json& j, const std::string& path) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

/// Runs fn, prefixing runtime failures with the stage name.
template <class Fn>
auto tagged(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ParameterError&) {
    throw;
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(stage) + ": " + e.what());
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

struct ScheduleFlags {
  ScheduleParams p;
  void add(CLI::App* app) {
    app->add_option("--T", p.T, "Diffusion steps")->capture_default_str();
    app->add_option("--start", p.start, "Sigmoid schedule start")->capture_default_str();
    app->add_option("--end", p.end, "Sigmoid schedule end")->capture_default_str();
    app->add_option("--tau", p.tau, "Sigmoid schedule temperature")->capture_default_str();
  }
};

struct SamplerFlags {
  SamplerConfig cfg;
  std::string mode = "forward_steps";
  bool strict_grid = false;
  void add(CLI::App* app) {
    app->add_option("--S", cfg.steps, "Sampling steps over the full horizon (must divide T)")->capture_default_str();
    app->add_option("--mode", mode, "Starting latent: direct | gaussian_noise | forward_steps")->capture_default_str();
    app->add_option("--fs", cfg.forward_steps, "Forward noising steps for mode forward_steps")->capture_default_str();
    app->add_option("--seed", cfg.seed, "Noise seed")->capture_default_str();
    app->add_flag("--strict-grid", strict_grid, "Reject start steps that are not multiples of T/S");
  }
  SamplerConfig resolve() const {
    SamplerConfig c = cfg;
    c.mode = conditioning_from_string(mode);
    c.partial_first_step = !strict_grid;
    return c;
  }
};

struct TilingFlags {
  TilingParams p;
  void add(CLI::App* app) {
    app->add_option("--window", p.window, "Sliding window size in px")->capture_default_str();
    app->add_option("--stride", p.stride, "Sliding window stride in px")->capture_default_str();
    app->add_option("--model-res", p.model_resolution, "Model input resolution")->capture_default_str();
  }
};

struct ExtractFlags {
  ExtractionParams p;
  void add(CLI::App* app) {
    app->add_option("--alpha", p.alpha, "Binarization threshold")->capture_default_str();
    app->add_option("--min-component", p.min_component_len_px, "Drop components shorter than this (px)")
        ->capture_default_str();
    app->add_option("--max-spur", p.max_spur_len_px, "Remove spurs shorter than this (px)")->capture_default_str();
    app->add_option("--dp-eps", p.dp_epsilon_px, "Douglas-Peucker tolerance (px)")->capture_default_str();
  }
};

struct EvalFlags {
  EvalConfig cfg;
  std::string matching = "maximum";
  void add(CLI::App* app) {
    app->add_option("--r", cfg.match_radius_px, "Match radius (px)")->capture_default_str();
    app->add_option("--densify", cfg.densify_spacing_px, "Densification spacing (px)")->capture_default_str();
    app->add_option("--topo-radius", cfg.topo_radius_px, "TOPO subgraph radius (px)")->capture_default_str();
    app->add_option("--gsd", cfg.gsd_cm, "Ground sampling distance (cm/px)")->capture_default_str();
    app->add_option("--matching", matching, "maximum | greedy")->capture_default_str();
  }
  EvalConfig resolve() const {
    EvalConfig c = cfg;
    c.matching = matching_mode_from_string(matching);
    return c;
  }
};

struct SceneFlags {
  SceneParams p;
  void add(CLI::App* app) {
    app->add_option("--canvas", p.canvas_w, "Square canvas size in px")->capture_default_str();
    app->add_option("--min-lanes", p.min_lanes, "Minimum lanes per scene")->capture_default_str();
    app->add_option("--max-lanes", p.max_lanes, "Maximum lanes per scene")->capture_default_str();
    app->add_option("--gap-prob", p.gap_probability, "Gap probability per arclength slot")->capture_default_str();
    app->add_option("--blur", p.blur_sigma_px, "Gaussian blur sigma (px)")->capture_default_str();
    app->add_option("--speckle", p.speckle_rate, "Speckle rate per pixel")->capture_default_str();
  }
  SceneParams resolve(std::uint64_t seed) const {
    SceneParams s = p;
    s.canvas_h = s.canvas_w;
    s.seed = seed;
    return s;
  }
};

json scene_params_json(const SceneParams& p) {
  return {{"canvas_w", p.canvas_w},
          {"canvas_h", p.canvas_h},
          {"min_lanes", p.min_lanes},
          {"max_lanes", p.max_lanes},
          {"line_width_px", p.line_width_px},
          {"min_separation_px", p.min_separation_px},
          {"step_px", p.step_px},
          {"max_turn_deg", p.max_turn_deg},
          {"max_heading_dev_deg", p.max_heading_dev_deg},
          {"margin_px", p.margin_px},
          {"min_lane_len_px", p.min_lane_len_px},
          {"gap_probability", p.gap_probability},
          {"gap_spacing_px", p.gap_spacing_px},
          {"gap_len_min_px", p.gap_len_min_px},
          {"gap_len_max_px", p.gap_len_max_px},
          {"gap_residual_min", p.gap_residual_min},
          {"gap_residual_max", p.gap_residual_max},
          {"blur_sigma_px", p.blur_sigma_px},
          {"speckle_rate", p.speckle_rate},
          {"seed", p.seed}};
}

/// "oracle" (needs a target), "zero", or a toy weight file.
DenoiserSource load_denoiser(const std::string& spec, const std::optional<GrayRaster>& oracle_target,
                             const VarianceSchedule& sched, int model_res) {
  if (spec == "oracle") {
    if (!oracle_target) throw UsageError("--denoiser oracle needs a clean target (--target or --gt)");
    return oracle_source(*oracle_target, sched, model_res);
  }
  if (spec == "zero") return shared_denoiser(std::make_shared<ZeroDenoiser>());
  if (!fs::exists(spec)) throw UsageError("--denoiser: file does not exist: " + spec);
  return shared_denoiser(make_toy_denoiser(ToyNet::load(spec), sched));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lanediff: diffusion-refined lane graph extraction and evaluation"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  std::function<void()> action;

  // render
  {
    auto* cmd = app.add_subcommand("render", "Render a lane graph to a mask (and optional direction map)");
    static std::string gt, out, direction;
    static int width = 512, height = 512, line_width = 5;
    cmd->add_option("--gt", gt, "Lane graph JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output mask PNG")->required();
    cmd->add_option("--direction", direction, "Optional direction-map PNG");
    cmd->add_option("--width", width, "Canvas width")->capture_default_str();
    cmd->add_option("--height", height, "Canvas height")->capture_default_str();
    cmd->add_option("--line-width", line_width, "Line width in px")->capture_default_str();
    cmd->callback([&] {
      action = [] {
        const LaneGraph g = load_graph(gt);
        write_mask_png(render_graph_mask(g, width, height, line_width), out);
        if (!direction.empty()) write_direction_png(render_direction_map(g, width, height, line_width), direction);
      };
    });
  }

  // extract
  {
    auto* cmd = app.add_subcommand("extract", "Extract a lane graph from a probability mask");
    static std::string in, out;
    static ExtractFlags ex;
    cmd->add_option("--in", in, "Probability or binary mask PNG")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output graph JSON")->required();
    ex.add(cmd);
    cmd->callback([&] {
      action = [] { save_graph(extract(read_gray_png(in), ex.p), out); };
    });
  }

  // eval
  {
    auto* cmd = app.add_subcommand("eval", "Score a predicted graph against ground truth (GEO/TOPO)");
    static std::string pred, gt, report;
    static EvalFlags ev;
    cmd->add_option("--pred", pred, "Predicted graph JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--gt", gt, "Ground-truth graph JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--report", report, "Report JSON path (default stdout)");
    ev.add(cmd);
    cmd->callback([&] {
      action = [] {
        const EvalConfig cfg = ev.resolve();
        const Evaluation e = evaluate(load_graph(pred), load_graph(gt), cfg);
        json j;
        j["tool"] = {{"name", "lanediff"}, {"version", kVersion}};
        j["config"] = to_json(cfg);
        j["inputs"] = {{"pred", pred}, {"gt", gt}};
        j["scores"] = {{"geo", to_json(e.geo)}, {"topo", to_json(e.topo)}};
        j["counts"] = to_json(e)["counts"];
        emit_json(j, report);
      };
    });
  }

  // refine
  {
    auto* cmd = app.add_subcommand("refine", "Refine a mask by conditional DDIM sampling over sliding windows");
    static std::string mask, cond, target, denoiser = "oracle", out;
    static ScheduleFlags sc;
    static SamplerFlags sa;
    static TilingFlags ti;
    static int threads = 1;
    cmd->add_option("--mask", mask, "Unrefined mask PNG")->required()->check(CLI::ExistingFile);
    cmd->add_option("--cond", cond, "Condition PNG (default: the mask)")->check(CLI::ExistingFile);
    cmd->add_option("--target", target, "Clean target PNG for --denoiser oracle")->check(CLI::ExistingFile);
    cmd->add_option("--denoiser", denoiser, "oracle | zero | toy weight file")->capture_default_str();
    cmd->add_option("--out", out, "Refined mask PNG")->required();
    cmd->add_option("--threads", threads, "Worker threads")->capture_default_str();
    sc.add(cmd);
    sa.add(cmd);
    ti.add(cmd);
    cmd->callback([&] {
      action = [] {
        const VarianceSchedule sched = sc.p.build();
        const GrayRaster m = read_gray_png(mask);
        const GrayRaster c = cond.empty() ? m : read_gray_png(cond);
        std::optional<GrayRaster> t;
        if (!target.empty()) t = read_gray_png(target);
        const DenoiserSource src = load_denoiser(denoiser, t, sched, ti.p.model_resolution);
        write_gray_png(refine_tile(m, c, src, sa.resolve(), sched, ti.p, threads), out);
      };
    });
  }

  // synth
  {
    auto* cmd = app.add_subcommand("synth", "Generate synthetic scenes (gt.json, clean.png, corrupt.png, params.json)");
    static int n = 20;
    static std::uint64_t seed = 1;
    static std::string out_dir;
    static SceneFlags sf;
    cmd->add_option("--n", n, "Number of scenes")->capture_default_str();
    cmd->add_option("--seed", seed, "Collection seed")->capture_default_str();
    cmd->add_option("--out-dir", out_dir, "Output directory")->required();
    sf.add(cmd);
    cmd->callback([&] {
      action = [] {
        if (n < 1) throw ParameterError("--n must be >= 1");
        const SceneParams base = sf.resolve(seed);
        for (int i = 0; i < n; ++i) {
          const SceneParams p = nth_scene_params(base, static_cast<std::uint64_t>(i));
          const Scene s = gen_scene(p);
          char name[32];
          std::snprintf(name, sizeof name, "scene_%03d", i);
          const std::string dir = (fs::path(out_dir) / name).string();
          ensure_dir(dir);
          save_graph(s.gt, dir + "/gt.json");
          write_mask_png(s.clean, dir + "/clean.png");
          write_gray_png(corrupt_mask(s.clean, s.gt, p), dir + "/corrupt.png");
          json j = scene_params_json(p);
          j["collection_seed"] = seed;
          j["index"] = i;
          write_text(dir + "/params.json", j.dump(2) + "\n");
        }
      };
    });
  }

  // stats
  {
    auto* cmd = app.add_subcommand("stats", "Pixel-change statistics between two masks");
    static std::string before, after, report;
    static double alpha = 0.5;
    cmd->add_option("--before", before, "Source mask PNG")->required()->check(CLI::ExistingFile);
    cmd->add_option("--after", after, "Changed mask PNG")->required()->check(CLI::ExistingFile);
    cmd->add_option("--alpha", alpha, "Threshold applied to both masks")->capture_default_str();
    cmd->add_option("--report", report, "Report JSON path (default stdout)");
    cmd->callback([&] {
      action = [] {
        const auto s = mask_change_stats(threshold(read_gray_png(before), alpha), threshold(read_gray_png(after), alpha));
        json j;
        j["tool"] = {{"name", "lanediff"}, {"version", kVersion}};
        j["inputs"] = {{"before", before}, {"after", after}, {"alpha", alpha}};
        j["pixel_change"] = to_json(s);
        emit_json(j, report);
      };
    });
  }

  // train
  {
    auto* cmd = app.add_subcommand("train", "Train the toy denoiser on synthetic scenes");
    static int n = 200;
    static std::uint64_t seed = 1;
    static std::string out;
    static ToyTrainConfig tc;
    static ScheduleFlags sc;
    static SceneFlags sf;
    static int model_res = 256;
    cmd->add_option("--n", n, "Training scenes")->capture_default_str();
    cmd->add_option("--seed", seed, "Dataset and training seed")->capture_default_str();
    cmd->add_option("--steps", tc.steps, "Optimizer steps")->capture_default_str();
    cmd->add_option("--lr", tc.learning_rate, "Initial learning rate")->capture_default_str();
    cmd->add_option("--crop", tc.crop, "Training crop size at model resolution")->capture_default_str();
    cmd->add_option("--hidden", tc.hidden, "Hidden channels")->capture_default_str();
    cmd->add_option("--model-res", model_res, "Model resolution")->capture_default_str();
    cmd->add_option("--out", out, "Output weight file")->required();
    sc.add(cmd);
    sf.add(cmd);
    cmd->callback([&] {
      action = [] {
        const auto data = make_dataset(n, sf.resolve(seed), model_res, model_res);
        ToyTrainConfig cfg = tc;
        cfg.seed = seed;
        std::vector<double> trace;
        const ToyNet net = train_toy_denoiser(data, sc.p.build(), cfg, &trace);
        net.save(out);
        const std::size_t k = std::min<std::size_t>(500, trace.size() / 2);
        if (k > 0) {
          double first = 0, last = 0;
          for (std::size_t i = 0; i < k; ++i) {
            first += trace[i];
            last += trace[trace.size() - 1 - i];
          }
          std::printf("trained %d steps, %zu parameters; mean loss first %zu: %.5f, last %zu: %.5f\n", cfg.steps,
                      net.param_count(), k, first / k, k, last / k);
        }
      };
    });
  }

  // pipeline
  {
    auto* cmd = app.add_subcommand("pipeline", "Mask -> refine -> extract -> evaluate, with a JSON report");
    static std::string mask, cond, gt, denoiser = "oracle", out_dir;
    static bool no_refine = false, timing = false;
    static int threads = 1;
    static ScheduleFlags sc;
    static SamplerFlags sa;
    static TilingFlags ti;
    static ExtractFlags ex;
    static EvalFlags ev;
    cmd->add_option("--mask", mask, "Unrefined probability mask PNG")->required()->check(CLI::ExistingFile);
    cmd->add_option("--cond", cond, "Condition PNG (default: the mask)")->check(CLI::ExistingFile);
    cmd->add_option("--gt", gt, "Ground-truth graph JSON for evaluation and the oracle")->check(CLI::ExistingFile);
    cmd->add_option("--denoiser", denoiser, "oracle | zero | toy weight file")->capture_default_str();
    cmd->add_flag("--no-refine", no_refine, "Skip refinement");
    cmd->add_option("--threads", threads, "Worker threads for window refinement")->capture_default_str();
    cmd->add_flag("--timing", timing, "Include per-stage wall-clock timings in the report");
    cmd->add_option("--out-dir", out_dir, "Directory for refined.png, graph.json, report.json")->required();
    sc.add(cmd);
    sa.add(cmd);
    ti.add(cmd);
    ex.add(cmd);
    ev.add(cmd);
    cmd->callback([&] {
      action = [] {
        PipelineConfig cfg;
        cfg.refine = !no_refine;
        cfg.denoiser_name = no_refine ? "none" : denoiser;
        cfg.schedule = sc.p;
        cfg.sampler = sa.resolve();
        cfg.tiling = ti.p;
        cfg.extraction = ex.p;
        cfg.eval = ev.resolve();
        cfg.threads = threads;
        if (threads < 1) throw ParameterError("--threads must be >= 1");
        cfg.sampler.validate(cfg.schedule.T);

        const GrayRaster m = tagged("load", [] { return read_gray_png(mask); });
        const GrayRaster c = cond.empty() ? m : tagged("load", [] { return read_gray_png(cond); });
        std::optional<LaneGraph> truth;
        if (!gt.empty()) truth = tagged("load", [] { return load_graph(gt); });
        std::optional<DenoiserSource> src;
        if (cfg.refine) {
          const VarianceSchedule sched = cfg.schedule.build();
          std::optional<GrayRaster> target;
          if (truth) target = to_gray(render_graph_mask(*truth, m.width(), m.height()));
          src = tagged("load", [&] { return load_denoiser(denoiser, target, sched, cfg.tiling.model_resolution); });
        }
        std::vector<std::pair<std::string, double>> timings;
        const PipelineResult r =
            run_pipeline(m, c, truth ? &*truth : nullptr, src ? &*src : nullptr, cfg, timing ? &timings : nullptr);
        const json inputs = {{"mask", mask}, {"condition", cond.empty() ? mask : cond}, {"gt", gt},
                             {"tile", {m.width(), m.height()}}};
        const json report = pipeline_report(cfg, r, inputs, timing ? &timings : nullptr);
        tagged("write", [&] {
          ensure_dir(out_dir);
          write_gray_png(r.refined, (fs::path(out_dir) / "refined.png").string());
          save_graph(r.graph, (fs::path(out_dir) / "graph.json").string());
          emit_json(report, (fs::path(out_dir) / "report.json").string());
        });
        if (r.evaluation) {
          std::printf("GEO P %.4f R %.4f F1 %.4f | TOPO P %.4f R %.4f F1 %.4f\n", r.evaluation->geo.precision,
                      r.evaluation->geo.recall, r.evaluation->geo.f1, r.evaluation->topo.precision,
                      r.evaluation->topo.recall, r.evaluation->topo.f1);
        }
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    action();
  } catch (const UsageError& e) {
    std::cerr << "lanediff " << name << ": " << e.what() << "\n";
    return kUsageError;
  } catch (const ParameterError& e) {
    std::cerr << "lanediff " << name << ": invalid parameter: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "lanediff " << name << ": " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return 0;
}
