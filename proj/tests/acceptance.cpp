// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "lanediff/lanediff.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace lanediff;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Records the first failure; later checks are still evaluated but do not
/// overwrite the message.
struct Check {
  Outcome out;
  void expect(bool ok, const std::string& what) {
    if (!ok && out.pass) {
      out.pass = false;
      out.detail = what;
    }
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work_dir() {
  static const fs::path d = [] {
    fs::path p = fs::temp_directory_path() / ("lanediff_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

double max_abs_diff(const LatentGrid& a, const LatentGrid& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::pair<LaneGraph, LaneGraph> small_pair(CounterRng& rng, double spacing) {
  for (;;) {
    const auto make = [&] {
      return oracle::random_graph(rng, static_cast<int>(rng.uniform_int(1, 5)), static_cast<int>(rng.uniform_int(0, 2)),
                                  18.0, rng.bernoulli(0.7));
    };
    LaneGraph a = make(), b = make();
    if (densify(a, spacing).node_count() <= 10 && densify(b, spacing).node_count() <= 10) return {a, b};
  }
}

bool any_2x2_block(const BinaryMask& m) {
  for (int y = 0; y + 1 < m.height(); ++y)
    for (int x = 0; x + 1 < m.width(); ++x)
      if (m(x, y) && m(x + 1, y) && m(x, y + 1) && m(x + 1, y + 1)) return true;
  return false;
}

Outcome metric_oracle() {
  Check c;
  const auto t0 = Clock::now();
  CounterRng rng(101, 1);
  EvalConfig cfg;
  cfg.densify_spacing_px = 4;
  cfg.topo_radius_px = 12;
  for (int trial = 0; trial < 200; ++trial) {
    const auto [pred, gt] = small_pair(rng, cfg.densify_spacing_px);
    const LaneGraph pd = densify(pred, cfg.densify_spacing_px), gd = densify(gt, cfg.densify_spacing_px);
    const MatchResult m = geo_match(pred, gt, cfg);
    const int best = oracle::max_matching_size(pd.positions(), gd.positions(), cfg.match_radius_px);
    c.expect(static_cast<int>(m.pairs.size()) == best, fmt("trial %d: matching %zu vs exhaustive %d", trial,
                                                            m.pairs.size(), best));
    const Evaluation e = evaluate(pred, gt, cfg);
    const double gp = pd.node_count() ? double(best) / double(pd.node_count()) : 0.0;
    const double gr = gd.node_count() ? double(best) / double(gd.node_count()) : 0.0;
    const auto bf = oracle::topo_bruteforce(pd, gd, m.pairs, cfg.match_radius_px, cfg.topo_radius_px);
    const bool close = std::abs(e.geo.precision - gp) <= 1e-9 && std::abs(e.geo.recall - gr) <= 1e-9 &&
                       std::abs(e.geo.f1 - oracle::f1(gp, gr)) <= 1e-9 && std::abs(e.topo.precision - bf.p) <= 1e-9 &&
                       std::abs(e.topo.recall - bf.r) <= 1e-9 && std::abs(e.topo.f1 - bf.f1) <= 1e-9;
    c.expect(close, fmt("trial %d: scores differ from brute force", trial));
  }
  const double dt = seconds_since(t0);
  c.expect(dt < 10.0, fmt("runtime %.2f s", dt));
  if (c.out.pass) c.out.detail = fmt("200 pairs agree with exhaustive matching and brute-force TOPO (%.2f s)", dt);
  return c.out;
}

Outcome perfect_identity() {
  Check c;
  CounterRng rng(102, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const LaneGraph g = oracle::random_graph(rng, static_cast<int>(rng.uniform_int(2, 15)), 4, 400, true);
    const Evaluation e = evaluate(g, g);
    c.expect(e.geo == Scores{1.0, 1.0, 1.0} && e.topo == Scores{1.0, 1.0, 1.0}, fmt("graph %d not exactly 1", trial));
  }
  if (c.out.pass) c.out.detail = "50 connected graphs score exactly 1.0";
  return c.out;
}

Outcome round_trip() {
  Check c;
  SceneParams base;
  base.seed = 103;
  c.expect(base.min_separation_px > 2.0 * base.line_width_px, "scene separation not above twice the line width");
  double geo_min = 1, topo_min = 1, geo_sum = 0, topo_sum = 0;
  for (int i = 0; i < 50; ++i) {
    const Scene s = gen_scene(nth_scene_params(base, static_cast<std::uint64_t>(i)));
    const Evaluation e = evaluate(extract(to_gray(render_graph_mask(s.gt, base.canvas_w, base.canvas_h))), s.gt);
    geo_min = std::min(geo_min, e.geo.f1);
    topo_min = std::min(topo_min, e.topo.f1);
    geo_sum += e.geo.f1;
    topo_sum += e.topo.f1;
    c.expect(e.geo.f1 >= 0.95 && e.topo.f1 >= 0.90, fmt("scene %d: GEO F1 %.4f TOPO F1 %.4f", i, e.geo.f1, e.topo.f1));
  }
  const std::string summary = fmt("50 scenes: GEO F1 mean %.4f min %.4f, TOPO F1 mean %.4f min %.4f", geo_sum / 50,
                                  geo_min, topo_sum / 50, topo_min);
  c.out.detail = c.out.pass ? summary : c.out.detail + "; " + summary;
  return c.out;
}

Outcome thinning() {
  Check c;
  CounterRng rng(104, 1);
  for (int trial = 0; trial < 500; ++trial) {
    const BinaryMask m = oracle::random_blobs(rng, 48, 40, static_cast<int>(rng.uniform_int(1, 6)));
    const BinaryMask t = thin(m);
    c.expect(thin(t) == t, fmt("mask %d: not idempotent", trial));
    c.expect(!any_2x2_block(t), fmt("mask %d: 2x2 block remains", trial));
    c.expect(oracle::count_components8(t) == oracle::count_components8(m), fmt("mask %d: component count", trial));
  }
  if (c.out.pass) c.out.detail = "500 blob masks: idempotent, no 2x2 block, components preserved";
  return c.out;
}

Outcome ddim_exactness() {
  Check c;
  const VarianceSchedule sched = sigmoid_schedule();
  double worst = 0, worst_inv = 0;
  CounterRng rng(105, 1);
  for (int k = 0; k < 20; ++k) {
    const GrayRaster mask = to_gray(oracle::random_blobs(rng, 40, 32, 4));
    const LatentGrid clean = to_model_range(mask);
    const OracleDenoiser oracle(clean, sched);
    const LatentGrid eps = gaussian_grid(40, 32, 105, static_cast<std::uint64_t>(k));
    for (int steps : {10, 25, 50}) {
      SamplerConfig cfg;
      cfg.steps = steps;
      const LatentState start{forward_sample(clean, sched.T, eps, sched), sched.T};
      worst = std::max(worst, max_abs_diff(ddim_sample_latent(oracle, mask, start, cfg, sched), clean));
    }
    for (int t : {1, 100, 500, 900, 1000}) {
      worst_inv = std::max(worst_inv, max_abs_diff(predict_x0(forward_sample(clean, t, eps, sched), eps, t, sched), clean));
    }
  }
  c.expect(worst < 1e-5, fmt("DDIM reconstruction error %.3g", worst));
  c.expect(worst_inv < 1e-6, fmt("forward inversion error %.3g", worst_inv));
  if (c.out.pass) {
    c.out.detail = fmt("20 masks, S in {10,25,50}: max error %.3g; inversion max error %.3g", worst, worst_inv);
  }
  return c.out;
}

Outcome schedule() {
  Check c;
  const VarianceSchedule s = sigmoid_schedule(1000, -3, 3, 1);
  c.expect(s.alpha_bar(0) == 1.0, "alpha_bar(0) != 1");
  for (int t = 1; t <= s.T; ++t) {
    const double b = s.betas[static_cast<std::size_t>(t)];
    c.expect(s.alpha_bar(t) < s.alpha_bar(t - 1), fmt("alpha_bar not decreasing at %d", t));
    c.expect(b > 0.0 && b <= 0.999, fmt("beta_%d = %.17g", t, b));
  }
  std::ifstream in(LANEDIFF_TEST_DATA_DIR "/schedule_golden.json");
  c.expect(static_cast<bool>(in), "golden fixture missing");
  if (in) {
    const auto j = nlohmann::json::parse(in);
    double worst = 0;
    for (const auto& [t, v] : j.at("alpha_bar").items()) {
      worst = std::max(worst, std::abs(s.alpha_bar(std::stoi(t)) - v.get<double>()));
    }
    c.expect(j.at("alpha_bar").size() == 3 && worst <= 1e-10, fmt("golden mismatch %.3g", worst));
    if (c.out.pass) c.out.detail = fmt("monotone, betas in (0, 0.999], golden values within %.3g", worst);
  }
  return c.out;
}

Outcome conditioning() {
  Check c;
  const VarianceSchedule sched = sigmoid_schedule();
  CounterRng rng(107, 1);
  const GrayRaster mask = to_gray(oracle::random_blobs(rng, 400, 300, 8));
  c.expect(mask.size() >= 100000, "too few pixels");
  const LatentState fs0 = make_start_latent(mask, Conditioning::forward_steps, sched, 0, 1);
  c.expect(fs0.x == to_model_range(mask), "fs=0 latent differs from rescaled mask");
  const LatentState full = make_start_latent(mask, Conditioning::forward_steps, sched, 1000, 2);
  double mean = 0, sq = 0;
  for (double v : full.x) mean += v;
  mean /= static_cast<double>(full.x.size());
  for (double v : full.x) sq += (v - mean) * (v - mean);
  const double var = sq / static_cast<double>(full.x.size());
  c.expect(std::abs(mean) < 0.01 && var >= 0.97 && var <= 1.03, fmt("fs=1000 mean %.4f var %.4f", mean, var));
  const LatentState g1 = make_start_latent(mask, Conditioning::gaussian_noise, sched, 0, 77);
  const LatentState g2 = make_start_latent(mask, Conditioning::gaussian_noise, sched, 0, 77);
  c.expect(g1.x == g2.x, "gaussian_noise latent not reproducible");
  if (c.out.pass) {
    c.out.detail = fmt("fs=0 bit-exact; fs=1000 mean %.4f var %.4f over %zu px; gaussian_noise reproducible", mean, var,
                       full.x.size());
  }
  return c.out;
}

/// Toy denoiser training and the held-out comparison. Writes the trained
/// weights to `weights` for reuse by the determinism check.
Outcome toy_refinement(const fs::path& weights) {
  Check c;
  const auto t0 = Clock::now();
  SceneParams base;
  base.seed = 1;
  const auto data = make_dataset(200, base);
  const VarianceSchedule sched = sigmoid_schedule();
  ToyTrainConfig tc;
  tc.steps = 20000;
  const ToyNet net = train_toy_denoiser(data, sched, tc);
  net.save(weights.string());
  const auto den = make_toy_denoiser(net, sched);

  SamplerConfig sc;
  sc.forward_steps = 500;
  sc.partial_first_step = true;
  sc.seed = 7;
  SceneParams held = base;
  held.seed = 999;
  double ru = 0, pu = 0, rr = 0, pr = 0;
  const int n = 20;
  for (int i = 0; i < n; ++i) {
    const SceneParams p = nth_scene_params(held, static_cast<std::uint64_t>(i));
    const Scene s = gen_scene(p);
    const GrayRaster corrupt = corrupt_mask(s.clean, s.gt, p);
    const Evaluation before = evaluate(extract(corrupt), s.gt);
    const GrayRaster refined = refine_mask(corrupt, corrupt, *den, sc, sched, 256, 256, static_cast<std::uint64_t>(i));
    const Evaluation after = evaluate(extract(refined), s.gt);
    ru += before.geo.recall;
    pu += before.geo.precision;
    rr += after.geo.recall;
    pr += after.geo.precision;
  }
  ru /= n, pu /= n, rr /= n, pr /= n;
  const double dt = seconds_since(t0);
  c.out.detail = fmt("held-out mean recall %.4f -> %.4f, precision %.4f -> %.4f (%.0f s)", ru, rr, pu, pr, dt);
  c.expect(rr > ru, "recall did not increase: " + c.out.detail);
  c.expect(pu - pr <= 0.05, "precision dropped more than 0.05: " + c.out.detail);
  c.expect(dt < 1800.0, "over the 30 min budget: " + c.out.detail);
  return c.out;
}

Outcome tiling() {
  Check c;
  const TileLayout big = window_plan(4096, 4096, 1024, 512);
  c.expect(big.origins.size() == 49, fmt("%zu windows", big.origins.size()));
  const TileLayout t = window_plan(1536, 1536, 1024, 512);
  std::vector<PlacedWindow> constant;
  for (const auto& o : t.origins) constant.push_back({o, GrayRaster(1024, 1024, 0.3)});
  const GrayRaster flat = stitch_average(constant, t);
  c.expect(std::all_of(flat.begin(), flat.end(), [](double v) { return std::abs(v - 0.3) <= 1e-15; }),
           "constant windows not constant after stitching");
  c.expect(t.origins.size() == 4, "expected a 2x2 window layout");
  const double vals[] = {0.05, 0.4, 0.65, 0.9};
  std::vector<PlacedWindow> four;
  for (std::size_t i = 0; i < t.origins.size() && i < 4; ++i) four.push_back({t.origins[i], GrayRaster(1024, 1024, vals[i])});
  const GrayRaster out = stitch_average(four, t);
  const double expect = (vals[0] + vals[1] + vals[2] + vals[3]) / 4.0;
  double worst = 0;
  for (int y = 512; y < 1024; ++y)
    for (int x = 512; x < 1024; ++x) worst = std::max(worst, std::abs(out(x, y) - expect));
  c.expect(worst <= 1e-12, fmt("overlap error %.3g", worst));
  if (c.out.pass) c.out.detail = fmt("49 windows on 4096^2; constant stitch exact; 4-way overlap error %.3g", worst);
  return c.out;
}

Outcome pixel_stats() {
  Check c;
  CounterRng rng(110, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = static_cast<int>(rng.uniform_int(1, 64)), h = static_cast<int>(rng.uniform_int(1, 64));
    BinaryMask a(w, h), b(w, h);
    const double pa = rng.uniform(), pb = rng.uniform();
    for (auto& v : a) v = rng.bernoulli(pa);
    for (auto& v : b) v = rng.bernoulli(pb);
    std::size_t w2b = 0, b2w = 0, white = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        white += a(x, y);
        w2b += a(x, y) && !b(x, y);
        b2w += !a(x, y) && b(x, y);
      }
    const std::size_t black = a.size() - white;
    MaskChangeStats naive;
    naive.white_to_black = w2b;
    naive.black_to_white = b2w;
    naive.abs_diff = w2b > b2w ? w2b - b2w : b2w - w2b;
    naive.rel_white_to_black_pct = white ? 100.0 * double(w2b) / double(white) : 0.0;
    naive.rel_black_to_white_pct = black ? 100.0 * double(b2w) / double(black) : 0.0;
    const MaskChangeStats s = mask_change_stats(a, b);
    c.expect(s == naive, fmt("pair %d differs from the pixel loop", trial));
    const MaskChangeStats r = mask_change_stats(b, a);
    c.expect(r.white_to_black == s.black_to_white && r.black_to_white == s.white_to_black && r.abs_diff == s.abs_diff,
             fmt("pair %d: swap symmetry broken", trial));
  }
  if (c.out.pass) c.out.detail = "100 random pairs match the pixel loop exactly; swap symmetry holds";
  return c.out;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(LANEDIFF_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism(const fs::path& weights) {
  Check c;
  const fs::path dir = work_dir() / "determinism";
  fs::create_directories(dir);
  const fs::path log = dir / "cli.log";
  c.expect(run_cli("synth --n 1 --seed 111 --out-dir " + (dir / "scenes").string(), log) == 0, "synth failed: " + slurp(log));
  const fs::path scene = dir / "scenes" / "scene_000";
  // Toy denoiser over overlapping windows, and the oracle as a second source.
  const std::string denoiser = fs::exists(weights) ? weights.string() : "oracle";
  const std::string common = "pipeline --mask " + (scene / "corrupt.png").string() + " --gt " + (scene / "gt.json").string() +
                             " --window 256 --stride 128 --seed 3 --S 25 --fs 500";
  const char* files[] = {"refined.png", "graph.json", "report.json"};
  int runs = 0;
  for (const std::string& den : {denoiser, std::string("oracle")}) {
    std::string reference[3];
    for (int threads : {1, 1, 2, 4}) {
      const fs::path out = dir / ("run" + std::to_string(runs++));
      const int code = run_cli(common + " --denoiser " + den + " --threads " + std::to_string(threads) + " --out-dir " +
                                   out.string(),
                               log);
      c.expect(code == 0, "pipeline failed: " + slurp(log));
      for (int f = 0; f < 3; ++f) {
        const std::string bytes = slurp(out / files[f]);
        c.expect(!bytes.empty(), std::string("empty ") + files[f]);
        if (reference[f].empty()) {
          reference[f] = bytes;
        } else {
          c.expect(bytes == reference[f], std::string(files[f]) + " differs at threads=" + std::to_string(threads) +
                                              " with denoiser " + den);
        }
      }
    }
  }
  if (c.out.pass) {
    c.out.detail = fmt("%d runs (toy and oracle, threads 1,1,2,4): reports and PNGs byte-identical", runs);
  }
  return c.out;
}

}  // namespace

int main() {
  const fs::path weights = work_dir() / "toy.bin";
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, metric_oracle},
      {2, perfect_identity},
      {3, round_trip},
      {4, thinning},
      {5, ddim_exactness},
      {6, schedule},
      {7, conditioning},
      {8, [&] { return toy_refinement(weights); }},
      {9, tiling},
      {10, pixel_stats},
      {11, [&] { return determinism(weights); }},
  };
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %d: %s\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(work_dir());
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
