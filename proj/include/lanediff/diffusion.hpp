#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lanediff/errors.hpp"
#include "lanediff/grid.hpp"
#include "lanediff/raster.hpp"
#include "lanediff/rng.hpp"

namespace lanediff {

/// beta, alpha = 1 - beta and alpha_bar = prod(alpha) indexed by timestep.
/// Index 0 is the clean state: beta[0] = 0, alpha_bar[0] = 1.
struct VarianceSchedule {
  int T = 0;
  double start = 0.0;
  double end = 0.0;
  double tau = 0.0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  double alpha_bar(int t) const {
    if (t < 0 || t > T) throw ParameterError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
    return alpha_bars[static_cast<std::size_t>(t)];
  }
  double signal_scale(int t) const { return std::sqrt(alpha_bar(t)); }
  double noise_scale(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Sigmoid schedule: alpha_bar follows a rescaled, inverted logistic curve on
/// [start, end]; betas are the step ratios clipped to 0.999 and alpha_bar is
/// rebuilt as their cumulative product.
inline VarianceSchedule sigmoid_schedule(int T = 1000, double start = -3.0, double end = 3.0, double tau = 1.0) {
  if (T < 1) throw ParameterError("schedule length T must be >= 1");
  if (!(tau > 0.0)) throw ParameterError("schedule tau must be positive");
  if (!(start < end)) throw ParameterError("schedule start must be below end");
  VarianceSchedule s{T, start, end, tau, {}, {}, {}};
  const double v_start = sigmoid(start / tau);
  const double v_end = sigmoid(end / tau);
  std::vector<double> raw(static_cast<std::size_t>(T) + 1);
  for (int k = 0; k <= T; ++k) {
    const double u = static_cast<double>(k) / T;
    raw[static_cast<std::size_t>(k)] = (v_end - sigmoid((u * (end - start) + start) / tau)) / (v_end - v_start);
  }
  const double raw0 = raw[0];
  for (auto& r : raw) r /= raw0;

  s.betas.assign(static_cast<std::size_t>(T) + 1, 0.0);
  s.alphas.assign(static_cast<std::size_t>(T) + 1, 1.0);
  s.alpha_bars.assign(static_cast<std::size_t>(T) + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    const auto i = static_cast<std::size_t>(t);
    double beta = 1.0 - raw[i] / raw[i - 1];
    beta = std::min(beta, 0.999);
    if (!(beta > 0.0)) throw ParameterError("schedule produced a non-positive beta at t=" + std::to_string(t));
    s.betas[i] = beta;
    s.alphas[i] = 1.0 - beta;
    s.alpha_bars[i] = s.alpha_bars[i - 1] * s.alphas[i];
  }
  return s;
}

/// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
inline LatentGrid forward_sample(const LatentGrid& x0, int t, const LatentGrid& eps, const VarianceSchedule& sched) {
  require_same_shape(x0, eps, "forward_sample");
  const double a = sched.signal_scale(t);
  const double b = sched.noise_scale(t);
  LatentGrid out(x0.width(), x0.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

/// Clean-sample estimate implied by an epsilon prediction at step t.
inline LatentGrid predict_x0(const LatentGrid& x_t, const LatentGrid& eps, int t, const VarianceSchedule& sched) {
  require_same_shape(x_t, eps, "predict_x0");
  const double a = sched.signal_scale(t);
  const double b = sched.noise_scale(t);
  LatentGrid out(x_t.width(), x_t.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - b * eps[i]) / a;
  return out;
}

/// Deterministic DDIM update (sigma = 0) from t to t_prev < t.
inline LatentGrid ddim_step(const LatentGrid& x_t, const LatentGrid& eps_pred, int t, int t_prev,
                            const VarianceSchedule& sched) {
  if (!(t_prev >= 0 && t_prev < t && t <= sched.T)) {
    throw ParameterError("ddim_step requires 0 <= t_prev < t <= T (got t=" + std::to_string(t) +
                         ", t_prev=" + std::to_string(t_prev) + ")");
  }
  require_same_shape(x_t, eps_pred, "ddim_step");
  const double a = sched.signal_scale(t), b = sched.noise_scale(t);
  const double a_prev = sched.signal_scale(t_prev), b_prev = sched.noise_scale(t_prev);
  LatentGrid out(x_t.width(), x_t.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0 = (x_t[i] - b * eps_pred[i]) / a;
    out[i] = a_prev * x0 + b_prev * eps_pred[i];
  }
  return out;
}

/// Maps [0,1] raster values to model range [-1,1].
inline LatentGrid to_model_range(const GrayRaster& r) {
  LatentGrid out(r.width(), r.height());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = 2.0 * r[i] - 1.0;
  return out;
}

/// Clamps to [-1,1] and maps back to [0,1].
inline GrayRaster from_model_range(const LatentGrid& x) {
  GrayRaster out(x.width(), x.height());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (std::clamp(x[i], -1.0, 1.0) + 1.0) / 2.0;
  return out;
}

/// Standard normal field; pixel i uses counter i of (seed, stream).
inline LatentGrid gaussian_grid(int w, int h, std::uint64_t seed, std::uint64_t stream) {
  const CounterRng rng(seed, stream);
  LatentGrid out(w, h);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.normal_at(i);
  return out;
}

enum class Conditioning { direct, gaussian_noise, forward_steps };

inline const char* to_string(Conditioning c) {
  switch (c) {
    case Conditioning::direct: return "direct";
    case Conditioning::gaussian_noise: return "gaussian_noise";
    case Conditioning::forward_steps: return "forward_steps";
  }
  return "?";
}

inline Conditioning conditioning_from_string(const std::string& s) {
  if (s == "direct") return Conditioning::direct;
  if (s == "gaussian_noise") return Conditioning::gaussian_noise;
  if (s == "forward_steps") return Conditioning::forward_steps;
  throw ParameterError("unknown conditioning mode '" + s + "' (expected direct|gaussian_noise|forward_steps)");
}

struct SamplerConfig {
  /// Number of sampling steps S over the full horizon; delta = T / S.
  int steps = 25;
  Conditioning mode = Conditioning::forward_steps;
  int forward_steps = 500;
  std::uint64_t seed = 0;
  /// When the start timestep is not a multiple of delta, take one shorter
  /// first step onto the delta grid instead of rejecting the start.
  bool partial_first_step = false;

  int delta(int T) const {
    if (steps < 1 || T % steps != 0) {
      throw ParameterError("sampling steps S=" + std::to_string(steps) + " must divide T=" + std::to_string(T));
    }
    return T / steps;
  }

  void validate(int T) const {
    (void)delta(T);
    if (mode == Conditioning::forward_steps && (forward_steps < 0 || forward_steps > T)) {
      throw ParameterError("forward steps FS=" + std::to_string(forward_steps) + " outside [0, " + std::to_string(T) + "]");
    }
  }
};

struct LatentState {
  LatentGrid x;
  int t = 0;
};

/// Builds the starting latent from an unrefined mask. The mask is mapped to
/// [-1,1]; noise (when used) comes from CounterRng(seed, stream).
inline LatentState make_start_latent(const GrayRaster& mask, Conditioning mode, const VarianceSchedule& sched, int fs,
                                     std::uint64_t seed, std::uint64_t stream = 0) {
  LatentGrid x = to_model_range(mask);
  switch (mode) {
    case Conditioning::direct:
      return {std::move(x), sched.T};
    case Conditioning::gaussian_noise: {
      const LatentGrid eps = gaussian_grid(x.width(), x.height(), seed, stream);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += eps[i];
      return {std::move(x), sched.T};
    }
    case Conditioning::forward_steps: {
      if (fs < 0 || fs > sched.T) {
        throw ParameterError("forward steps FS=" + std::to_string(fs) + " outside [0, " + std::to_string(sched.T) + "]");
      }
      if (fs == 0) return {std::move(x), 0};
      const LatentGrid eps = gaussian_grid(x.width(), x.height(), seed, stream);
      return {forward_sample(x, fs, eps, sched), fs};
    }
  }
  throw ParameterError("invalid conditioning mode");
}

/// Epsilon predictor eps(x_t, condition, t). Implementations must be safe to
/// call concurrently.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual LatentGrid predict_eps(const LatentGrid& x_t, const GrayRaster& condition, int t) const = 0;
};

/// Test oracle: knows the clean latent and returns the exact forward noise.
class OracleDenoiser final : public Denoiser {
 public:
  OracleDenoiser(LatentGrid clean, const VarianceSchedule& sched) : clean_(std::move(clean)), alpha_bars_(sched.alpha_bars) {}

  LatentGrid predict_eps(const LatentGrid& x_t, const GrayRaster&, int t) const override {
    require_same_shape(x_t, clean_, "oracle denoiser");
    if (t <= 0 || static_cast<std::size_t>(t) >= alpha_bars_.size()) {
      throw ParameterError("oracle denoiser needs 0 < t <= T");
    }
    const double a = std::sqrt(alpha_bars_[static_cast<std::size_t>(t)]);
    const double b = std::sqrt(1.0 - alpha_bars_[static_cast<std::size_t>(t)]);
    LatentGrid eps(x_t.width(), x_t.height());
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = (x_t[i] - a * clean_[i]) / b;
    return eps;
  }

 private:
  LatentGrid clean_;
  std::vector<double> alpha_bars_;
};

class ZeroDenoiser final : public Denoiser {
 public:
  LatentGrid predict_eps(const LatentGrid& x_t, const GrayRaster&, int) const override {
    return LatentGrid(x_t.width(), x_t.height(), 0.0);
  }
};

/// Predictor of v = sqrt(ab) eps - sqrt(1-ab) x0.
class VelocityPredictor {
 public:
  virtual ~VelocityPredictor() = default;
  virtual LatentGrid predict_v(const LatentGrid& x_t, const GrayRaster& condition, int t) const = 0;
};

/// Exposes a v-predictor through the epsilon contract:
/// eps = sqrt(1-ab) x_t + sqrt(ab) v.
class VelocityAdapter final : public Denoiser {
 public:
  VelocityAdapter(std::shared_ptr<const VelocityPredictor> inner, const VarianceSchedule& sched)
      : inner_(std::move(inner)), alpha_bars_(sched.alpha_bars) {}

  LatentGrid predict_eps(const LatentGrid& x_t, const GrayRaster& condition, int t) const override {
    const LatentGrid v = inner_->predict_v(x_t, condition, t);
    require_same_shape(x_t, v, "velocity adapter");
    const double ab = alpha_bars_.at(static_cast<std::size_t>(t));
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    LatentGrid eps(x_t.width(), x_t.height());
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = b * x_t[i] + a * v[i];
    return eps;
  }

 private:
  std::shared_ptr<const VelocityPredictor> inner_;
  std::vector<double> alpha_bars_;
};

/// Descending timesteps visited from `start_t` to 0 on the delta grid.
inline std::vector<int> ddim_timesteps(int start_t, const SamplerConfig& cfg, const VarianceSchedule& sched) {
  const int delta = cfg.delta(sched.T);
  if (start_t < 0 || start_t > sched.T) throw ParameterError("start timestep outside [0, T]");
  if (start_t % delta != 0 && !cfg.partial_first_step) {
    throw ParameterError("start timestep " + std::to_string(start_t) + " is not a multiple of delta=" +
                         std::to_string(delta));
  }
  std::vector<int> ts{start_t};
  for (int t = (start_t / delta) * delta; t >= 0; t -= delta) {
    if (t != start_t) ts.push_back(t);
  }
  return ts;
}

/// Runs the deterministic DDIM trajectory and returns the final latent x_0
/// without clamping.
inline LatentGrid ddim_sample_latent(const Denoiser& denoiser, const GrayRaster& condition, const LatentState& start,
                                     const SamplerConfig& cfg, const VarianceSchedule& sched) {
  const auto ts = ddim_timesteps(start.t, cfg, sched);
  LatentGrid x = start.x;
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const LatentGrid eps = denoiser.predict_eps(x, condition, ts[k]);
    require_same_shape(x, eps, "denoiser output");
    x = ddim_step(x, eps, ts[k], ts[k + 1], sched);
  }
  return x;
}

/// DDIM sampling mapped back to a [0,1] raster.
inline GrayRaster ddim_sample(const Denoiser& denoiser, const GrayRaster& condition, const LatentState& start,
                              const SamplerConfig& cfg, const VarianceSchedule& sched) {
  return from_model_range(ddim_sample_latent(denoiser, condition, start, cfg, sched));
}

/// Mean squared error between true and predicted noise.
inline double diffusion_loss(const LatentGrid& eps, const LatentGrid& eps_pred) {
  require_same_shape(eps, eps_pred, "diffusion_loss");
  if (eps.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double d = eps[i] - eps_pred[i];
    sum += d * d;
  }
  return sum / static_cast<double>(eps.size());
}

/// Resize to model resolution, build the start latent, sample, and resize
/// back. `stream` selects the noise stream (one per window).
inline GrayRaster refine_mask(const GrayRaster& unrefined, const GrayRaster& condition, const Denoiser& denoiser,
                              const SamplerConfig& cfg, const VarianceSchedule& sched, int model_w = 256,
                              int model_h = 256, std::uint64_t stream = 0) {
  cfg.validate(sched.T);
  require_same_shape(unrefined, condition, "refine_mask");
  const GrayRaster small_mask = resize_bilinear(unrefined, model_w, model_h);
  const GrayRaster small_cond = resize_bilinear(condition, model_w, model_h);
  const LatentState start = make_start_latent(small_mask, cfg.mode, sched, cfg.forward_steps, cfg.seed, stream);
  const GrayRaster refined = ddim_sample(denoiser, small_cond, start, cfg, sched);
  return clamp01(resize_bilinear(refined, unrefined.width(), unrefined.height()));
}

}  // namespace lanediff
