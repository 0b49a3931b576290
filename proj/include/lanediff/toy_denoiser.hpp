#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lanediff/diffusion.hpp"
#include "lanediff/errors.hpp"
#include "lanediff/grid.hpp"
#include "lanediff/rng.hpp"

namespace lanediff {

/// One training example at model resolution: the clean mask to recover and
/// the unrefined mask the model is conditioned on, both in [0,1].
struct TrainingPair {
  GrayRaster target;
  GrayRaster condition;
};

namespace toy {

/// Same-padded 2D convolution over channel-major planes.
struct ConvSpec {
  int in = 0;
  int out = 0;
  int k = 0;
  int dilation = 1;

  std::size_t weight_count() const { return static_cast<std::size_t>(in) * out * k * k; }
  std::size_t param_count() const { return weight_count() + static_cast<std::size_t>(out); }
};

// Input planes: x_t, 2c-1, sqrt(ab_t), sqrt(1-ab_t).
inline constexpr int kInputChannels = 4;

inline std::vector<ConvSpec> architecture(int hidden) {
  return {{kInputChannels, hidden, 5, 1}, {hidden, hidden, 5, 2}, {hidden, 1, 3, 1}};
}

inline void conv_forward(const ConvSpec& c, const double* params, const std::vector<double>& in, int w, int h,
                         std::vector<double>& out) {
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  out.assign(plane * c.out, 0.0);
  const double* bias = params + c.weight_count();
  for (int o = 0; o < c.out; ++o) {
    double* dst_plane = out.data() + plane * o;
    std::fill(dst_plane, dst_plane + plane, bias[o]);
    for (int i = 0; i < c.in; ++i) {
      const double* src_plane = in.data() + plane * i;
      for (int ky = 0; ky < c.k; ++ky) {
        const int dy = (ky - c.k / 2) * c.dilation;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < c.k; ++kx) {
          const int dx = (kx - c.k / 2) * c.dilation;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const double wt = params[((static_cast<std::size_t>(o) * c.in + i) * c.k + ky) * c.k + kx];
          for (int y = y0; y < y1; ++y) {
            double* dst = dst_plane + static_cast<std::size_t>(y) * w;
            const double* src = src_plane + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) dst[x] += wt * src[x];
          }
        }
      }
    }
  }
}

/// Accumulates parameter gradients into `grad` and, when `grad_in` is
/// non-null, writes the gradient with respect to the input.
inline void conv_backward(const ConvSpec& c, const double* params, const std::vector<double>& in, int w, int h,
                          const std::vector<double>& grad_out, double* grad, std::vector<double>* grad_in) {
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  if (grad_in) grad_in->assign(plane * c.in, 0.0);
  double* grad_bias = grad + c.weight_count();
  for (int o = 0; o < c.out; ++o) {
    const double* g_plane = grad_out.data() + plane * o;
    double sum = 0.0;
    for (std::size_t p = 0; p < plane; ++p) sum += g_plane[p];
    grad_bias[o] += sum;
    for (int i = 0; i < c.in; ++i) {
      const double* src_plane = in.data() + plane * i;
      double* gi_plane = grad_in ? grad_in->data() + plane * i : nullptr;
      for (int ky = 0; ky < c.k; ++ky) {
        const int dy = (ky - c.k / 2) * c.dilation;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < c.k; ++kx) {
          const int dx = (kx - c.k / 2) * c.dilation;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const std::size_t wi = ((static_cast<std::size_t>(o) * c.in + i) * c.k + ky) * c.k + kx;
          const double wt = params[wi];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* g = g_plane + static_cast<std::size_t>(y) * w;
            const double* src = src_plane + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) acc += g[x] * src[x];
            if (gi_plane) {
              double* gi = gi_plane + static_cast<std::size_t>(y + dy) * w + dx;
              for (int x = x0; x < x1; ++x) gi[x] += wt * g[x];
            }
          }
          grad[wi] += acc;
        }
      }
    }
  }
}

}  // namespace toy

/// Small dilated convolutional network predicting v from (x_t, condition, t).
/// Three conv layers, tanh between them; receptive field 15x15.
class ToyNet {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr std::array<char, 8> kMagic{'L', 'D', 'T', 'O', 'Y', 'N', 'E', 'T'};

  explicit ToyNet(int hidden = 8) : hidden_(hidden), layers_(toy::architecture(hidden)) {
    if (hidden < 1) throw ParameterError("hidden channel count must be >= 1");
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.param_count();
    params_.assign(n, 0.0);
  }

  /// Uniform fan-in scaled initialization; biases start at zero.
  static ToyNet initialized(std::uint64_t seed, int hidden = 8) {
    ToyNet net(hidden);
    CounterRng rng(seed, 0x70f);
    std::size_t off = 0;
    for (std::size_t li = 0; li < net.layers_.size(); ++li) {
      const auto& l = net.layers_[li];
      const double fan_in = static_cast<double>(l.in) * l.k * l.k;
      double bound = std::sqrt(3.0 / fan_in);
      if (li + 1 == net.layers_.size()) bound *= 0.1;
      for (std::size_t i = 0; i < l.weight_count(); ++i) net.params_[off + i] = rng.uniform(-bound, bound);
      off += l.param_count();
    }
    return net;
  }

  int hidden() const { return hidden_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  const std::vector<toy::ConvSpec>& layers() const { return layers_; }

  friend bool operator==(const ToyNet& a, const ToyNet& b) { return a.hidden_ == b.hidden_ && a.params_ == b.params_; }

  /// Activations kept for the backward pass.
  struct Trace {
    int w = 0;
    int h = 0;
    std::vector<std::vector<double>> inputs;  // input to each layer
    std::vector<double> output;
  };

  static std::vector<double> make_input(const LatentGrid& x_t, const GrayRaster& condition, double signal,
                                        double noise) {
    require_same_shape(x_t, condition, "toy denoiser input");
    const std::size_t plane = x_t.size();
    std::vector<double> in(plane * toy::kInputChannels);
    for (std::size_t p = 0; p < plane; ++p) {
      in[p] = x_t[p];
      in[plane + p] = 2.0 * condition[p] - 1.0;
      in[2 * plane + p] = signal;
      in[3 * plane + p] = noise;
    }
    return in;
  }

  void forward(std::vector<double> input, int w, int h, Trace& tr) const {
    tr.w = w;
    tr.h = h;
    tr.inputs.resize(layers_.size());
    tr.inputs[0] = std::move(input);
    std::size_t off = 0;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      std::vector<double>& out = li + 1 < layers_.size() ? tr.inputs[li + 1] : tr.output;
      toy::conv_forward(layers_[li], params_.data() + off, tr.inputs[li], w, h, out);
      if (li + 1 < layers_.size()) {
        for (double& v : out) v = std::tanh(v);
      }
      off += layers_[li].param_count();
    }
  }

  /// Backpropagates d(loss)/d(output) and accumulates into grad.
  void backward(const Trace& tr, std::vector<double> grad_out, std::vector<double>& grad) const {
    grad.resize(params_.size(), 0.0);
    std::vector<std::size_t> offsets(layers_.size());
    std::size_t off = 0;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      offsets[li] = off;
      off += layers_[li].param_count();
    }
    std::vector<double> grad_in;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const bool need_input_grad = li > 0;
      toy::conv_backward(layers_[li], params_.data() + offsets[li], tr.inputs[li], tr.w, tr.h, grad_out,
                         grad.data() + offsets[li], need_input_grad ? &grad_in : nullptr);
      if (!need_input_grad) break;
      // inputs[li] = tanh(pre), so d pre = d in * (1 - in^2).
      const auto& act = tr.inputs[li];
      for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in[i] *= 1.0 - act[i] * act[i];
      grad_out.swap(grad_in);
    }
  }

  LatentGrid predict_v(const LatentGrid& x_t, const GrayRaster& condition, double signal, double noise) const {
    Trace tr;
    forward(make_input(x_t, condition, signal, noise), x_t.width(), x_t.height(), tr);
    return LatentGrid(x_t.width(), x_t.height(), std::move(tr.output));
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out.write(kMagic.data(), kMagic.size());
    write_u32(out, kFormatVersion);
    write_u32(out, static_cast<std::uint32_t>(hidden_));
    write_u64(out, params_.size());
    for (double v : params_) write_u64(out, std::bit_cast<std::uint64_t>(v));
    if (!out) throw ParseError("failed writing " + path);
  }

  static ToyNet load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open toy denoiser weights " + path);
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw ParseError(path + ": not a toy denoiser weight file");
    const std::uint32_t version = read_u32(in, path);
    if (version != kFormatVersion) throw ParseError(path + ": unsupported format version " + std::to_string(version));
    const std::uint32_t hidden = read_u32(in, path);
    if (hidden < 1 || hidden > 1024) throw ParseError(path + ": implausible hidden width");
    ToyNet net(static_cast<int>(hidden));
    const std::uint64_t count = read_u64(in, path);
    if (count != net.params_.size()) {
      throw ParseError(path + ": parameter count " + std::to_string(count) + " does not match architecture (" +
                       std::to_string(net.params_.size()) + ")");
    }
    for (double& v : net.params_) v = std::bit_cast<double>(read_u64(in, path));
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError(path + ": trailing bytes");
    return net;
  }

 private:
  static void write_u32(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  static void write_u64(std::ostream& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  static std::uint64_t read_le(std::istream& in, int bytes, const std::string& path) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      const int c = in.get();
      if (c == std::char_traits<char>::eof()) throw ParseError(path + ": truncated weight file");
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
  }
  static std::uint32_t read_u32(std::istream& in, const std::string& path) {
    return static_cast<std::uint32_t>(read_le(in, 4, path));
  }
  static std::uint64_t read_u64(std::istream& in, const std::string& path) { return read_le(in, 8, path); }

  int hidden_;
  std::vector<toy::ConvSpec> layers_;
  std::vector<double> params_;
};

/// Adapts ToyNet to the v-predictor interface using schedule noise levels.
class ToyVelocity final : public VelocityPredictor {
 public:
  ToyVelocity(ToyNet net, const VarianceSchedule& sched) : net_(std::move(net)), sched_(sched) {}
  LatentGrid predict_v(const LatentGrid& x_t, const GrayRaster& condition, int t) const override {
    return net_.predict_v(x_t, condition, sched_.signal_scale(t), sched_.noise_scale(t));
  }
  const ToyNet& net() const { return net_; }

 private:
  ToyNet net_;
  VarianceSchedule sched_;
};

inline std::shared_ptr<const Denoiser> make_toy_denoiser(ToyNet net, const VarianceSchedule& sched) {
  return std::make_shared<VelocityAdapter>(std::make_shared<ToyVelocity>(std::move(net), sched), sched);
}

/// One noised crop: everything needed to evaluate the loss deterministically.
struct TrainingSample {
  LatentGrid x_t;
  GrayRaster condition;
  LatentGrid eps;
  double signal = 1.0;
  double noise = 0.0;
};

/// Epsilon-MSE of the v-parametrized network on one sample; fills grad
/// (resized and zeroed) with d(loss)/d(params).
inline double toy_loss_and_grad(const ToyNet& net, const TrainingSample& s, std::vector<double>* grad) {
  ToyNet::Trace tr;
  net.forward(ToyNet::make_input(s.x_t, s.condition, s.signal, s.noise), s.x_t.width(), s.x_t.height(), tr);
  const std::size_t n = s.x_t.size();
  std::vector<double> g(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double eps_hat = s.noise * s.x_t[i] + s.signal * tr.output[i];
    const double d = eps_hat - s.eps[i];
    loss += d * d;
    g[i] = 2.0 * d * s.signal / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (grad) {
    grad->assign(net.param_count(), 0.0);
    net.backward(tr, std::move(g), *grad);
  }
  return loss;
}

struct ToyTrainConfig {
  int steps = 20000;
  double learning_rate = 2e-3;
  int crop = 48;
  std::uint64_t seed = 0;
  int hidden = 8;
  /// Learning rate decays linearly to this fraction over the run.
  double final_lr_fraction = 0.1;
};

/// Draws the training sample for `step` from the dataset; a pure function of
/// (seed, step).
inline TrainingSample draw_training_sample(const std::vector<TrainingPair>& data, const VarianceSchedule& sched,
                                           int crop_size, std::uint64_t seed, std::uint64_t step) {
  CounterRng rng(seed, 0x100000 + step);
  const auto& pair = data[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(data.size()) - 1))];
  const int cw = std::min(crop_size, pair.target.width());
  const int ch = std::min(crop_size, pair.target.height());
  const int x0 = static_cast<int>(rng.uniform_int(0, pair.target.width() - cw));
  const int y0 = static_cast<int>(rng.uniform_int(0, pair.target.height() - ch));
  const int t = static_cast<int>(rng.uniform_int(1, sched.T));
  TrainingSample s;
  s.signal = sched.signal_scale(t);
  s.noise = sched.noise_scale(t);
  s.condition = crop(pair.condition, x0, y0, cw, ch);
  const LatentGrid clean = to_model_range(crop(pair.target, x0, y0, cw, ch));
  s.eps = LatentGrid(cw, ch);
  for (auto& v : s.eps) v = rng.normal();
  s.x_t = forward_sample(clean, t, s.eps, sched);
  return s;
}

/// Adam on the epsilon loss, one crop per step. Deterministic given the
/// dataset and config. `loss_trace`, if given, receives each step's loss.
inline ToyNet train_toy_denoiser(const std::vector<TrainingPair>& data, const VarianceSchedule& sched,
                                 const ToyTrainConfig& cfg, std::vector<double>* loss_trace = nullptr,
                                 const ToyNet* init = nullptr) {
  if (data.empty()) throw ParameterError("training dataset is empty");
  if (cfg.steps < 0) throw ParameterError("training steps must be >= 0");
  if (cfg.crop < 4) throw ParameterError("training crop must be >= 4 px");
  if (!(cfg.learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
  for (const auto& p : data) require_same_shape(p.target, p.condition, "training pair");

  ToyNet net = init ? *init : ToyNet::initialized(cfg.seed, cfg.hidden);
  const std::size_t n = net.param_count();
  std::vector<double> m(n, 0.0), v(n, 0.0), grad;
  constexpr double b1 = 0.9, b2 = 0.999, tiny = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  auto params = net.params();
  for (int step = 0; step < cfg.steps; ++step) {
    const TrainingSample s = draw_training_sample(data, sched, cfg.crop, cfg.seed, static_cast<std::uint64_t>(step));
    const double loss = toy_loss_and_grad(net, s, &grad);
    if (loss_trace) loss_trace->push_back(loss);
    const double frac = cfg.steps > 1 ? static_cast<double>(step) / (cfg.steps - 1) : 0.0;
    const double lr = cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * frac);
    b1t *= b1;
    b2t *= b2;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * grad[i];
      v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / (1 - b1t)) / (std::sqrt(v[i] / (1 - b2t)) + tiny);
    }
  }
  return net;
}

}  // namespace lanediff
