#include "embench/robustness.hpp"

#include <algorithm>
#include <cmath>

namespace embench {

double cross_entropy(std::span<const double> logits, int y, std::vector<double>* dlogits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  if (dlogits) {
    dlogits->resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
      (*dlogits)[k] = std::exp(logits[k] - lse) - (static_cast<int>(k) == y ? 1.0 : 0.0);
    }
  }
  return lse - logits[static_cast<std::size_t>(y)];
}

namespace {

void check_label(int y, std::size_t num_classes) {
  if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
    throw Error(ErrorCode::kInvalidArgument, "label " + std::to_string(y) + " out of range");
  }
}

void check_input(std::span<const double> x, std::size_t expected) {
  if (x.size() != expected) {
    throw Error(ErrorCode::kShapeMismatch,
                "input size " + std::to_string(x.size()) + " != expected " + std::to_string(expected));
  }
}

}  // namespace

// ---- LinearPipeline --------------------------------------------------------

LinearPipeline::LinearPipeline(std::size_t num_classes, std::size_t input_size, std::vector<double> weights,
                               std::vector<double> bias)
    : num_classes_(num_classes), input_size_(input_size), weights_(std::move(weights)), bias_(std::move(bias)) {
  if (weights_.size() != num_classes_ * input_size_ || bias_.size() != num_classes_) {
    throw Error(ErrorCode::kShapeMismatch, "linear pipeline parameter shapes");
  }
}

std::vector<double> LinearPipeline::forward(std::span<const double> x) const {
  check_input(x, input_size_);
  std::vector<double> z(bias_);
  for (std::size_t c = 0; c < num_classes_; ++c)
    for (std::size_t j = 0; j < input_size_; ++j) z[c] += weights_[c * input_size_ + j] * x[j];
  return z;
}

LossGradient LinearPipeline::loss_gradient(std::span<const double> x, int y) const {
  check_label(y, num_classes_);
  auto z = forward(x);
  std::vector<double> dz;
  LossGradient out;
  out.loss = cross_entropy(z, y, &dz);
  out.grad.assign(input_size_, 0.0);
  for (std::size_t c = 0; c < num_classes_; ++c)
    for (std::size_t j = 0; j < input_size_; ++j) out.grad[j] += dz[c] * weights_[c * input_size_ + j];
  return out;
}

// ---- ToyBackbone -------------------------------------------------------------

ToyBackbone::ToyBackbone(const ToyBackboneConfig& cfg) : cfg_(cfg) {
  if (cfg.height < 1 || cfg.width < 1 || cfg.channels < 1 || cfg.filters < 1 || cfg.hidden < 1 ||
      cfg.features < 1) {
    throw Error(ErrorCode::kInvalidArgument, "toy backbone dimensions must be positive");
  }
  CounterRng rng(derive_key(cfg.seed, "toy_backbone"));
  auto fill = [&rng](std::vector<double>& v, std::size_t n, double scale) {
    v.resize(n);
    for (auto& e : v) e = scale * rng.normal();
  };
  const auto fan_conv = static_cast<double>(9 * cfg.channels);
  fill(conv_w_, cfg.filters * 9 * cfg.channels, 1.0 / std::sqrt(fan_conv));
  fill(conv_b_, cfg.filters, 0.1);
  fill(w1_, cfg.hidden * cfg.filters, 1.0 / std::sqrt(static_cast<double>(cfg.filters)));
  fill(b1_, cfg.hidden, 0.1);
  fill(w2_, cfg.features * cfg.hidden, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
  fill(b2_, cfg.features, 0.1);
}

ToyBackbone::Activations ToyBackbone::run(std::span<const double> x) const {
  check_input(x, input_size());
  const std::size_t h = cfg_.height, w = cfg_.width, ch = cfg_.channels, nf = cfg_.filters;
  Activations a;
  a.conv.assign(h * w * nf, 0.0);
  a.pooled.assign(nf, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      for (std::size_t f = 0; f < nf; ++f) {
        double s = conv_b_[f];
        for (int dy = -1; dy <= 1; ++dy) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const auto sx = static_cast<std::ptrdiff_t>(xx) + dx;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            const double* kw = conv_w_.data() + ((f * 3 + static_cast<std::size_t>(dy + 1)) * 3 +
                                                 static_cast<std::size_t>(dx + 1)) * ch;
            const double* px = x.data() + (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * ch;
            for (std::size_t c = 0; c < ch; ++c) s += kw[c] * px[c];
          }
        }
        const double t = std::tanh(s);
        a.conv[(y * w + xx) * nf + f] = t;
        a.pooled[f] += t;
      }
    }
  }
  for (auto& p : a.pooled) p /= static_cast<double>(h * w);
  a.hidden.assign(cfg_.hidden, 0.0);
  for (std::size_t j = 0; j < cfg_.hidden; ++j) {
    double s = b1_[j];
    for (std::size_t f = 0; f < nf; ++f) s += w1_[j * nf + f] * a.pooled[f];
    a.hidden[j] = std::tanh(s);
  }
  a.out.assign(cfg_.features, 0.0);
  for (std::size_t o = 0; o < cfg_.features; ++o) {
    double s = b2_[o];
    for (std::size_t j = 0; j < cfg_.hidden; ++j) s += w2_[o * cfg_.hidden + j] * a.hidden[j];
    a.out[o] = s;
  }
  return a;
}

std::vector<double> ToyBackbone::features(std::span<const double> x) const { return run(x).out; }

std::vector<double> ToyBackbone::backward(std::span<const double> x, std::span<const double> grad_features) const {
  if (grad_features.size() != cfg_.features) throw Error(ErrorCode::kShapeMismatch, "feature gradient size");
  const auto a = run(x);
  const std::size_t h = cfg_.height, w = cfg_.width, ch = cfg_.channels, nf = cfg_.filters, nh = cfg_.hidden;
  std::vector<double> g_hpre(nh, 0.0);
  for (std::size_t j = 0; j < nh; ++j) {
    double s = 0.0;
    for (std::size_t o = 0; o < cfg_.features; ++o) s += w2_[o * nh + j] * grad_features[o];
    g_hpre[j] = s * (1.0 - a.hidden[j] * a.hidden[j]);
  }
  std::vector<double> g_pool(nf, 0.0);
  for (std::size_t f = 0; f < nf; ++f)
    for (std::size_t j = 0; j < nh; ++j) g_pool[f] += w1_[j * nf + f] * g_hpre[j];
  const double inv_p = 1.0 / static_cast<double>(h * w);

  std::vector<double> gx(x.size(), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      for (std::size_t f = 0; f < nf; ++f) {
        const double t = a.conv[(y * w + xx) * nf + f];
        const double g_pre = g_pool[f] * inv_p * (1.0 - t * t);
        for (int dy = -1; dy <= 1; ++dy) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const auto sx = static_cast<std::ptrdiff_t>(xx) + dx;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            const double* kw = conv_w_.data() + ((f * 3 + static_cast<std::size_t>(dy + 1)) * 3 +
                                                 static_cast<std::size_t>(dx + 1)) * ch;
            double* gp = gx.data() + (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * ch;
            for (std::size_t c = 0; c < ch; ++c) gp[c] += kw[c] * g_pre;
          }
        }
      }
    }
  }
  return gx;
}

// ---- ProbedPipeline -------------------------------------------------------------

ProbedPipeline::ProbedPipeline(ToyBackbone backbone, LinearModel probe)
    : backbone_(std::move(backbone)), probe_(std::move(probe)) {
  if (probe_.dim != backbone_.feature_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "probe dim " + std::to_string(probe_.dim) + " != backbone feature dim " +
                                               std::to_string(backbone_.feature_dim()));
  }
}

std::vector<double> ProbedPipeline::forward(std::span<const double> x) const {
  auto f = backbone_.features(x);
  std::vector<double> z(probe_.bias);
  for (std::size_t c = 0; c < probe_.num_classes; ++c)
    for (std::size_t j = 0; j < probe_.dim; ++j) z[c] += probe_.weights[c * probe_.dim + j] * f[j];
  return z;
}

LossGradient ProbedPipeline::loss_gradient(std::span<const double> x, int y) const {
  check_label(y, probe_.num_classes);
  auto z = forward(x);
  std::vector<double> dz;
  LossGradient out;
  out.loss = cross_entropy(z, y, &dz);
  std::vector<double> gf(probe_.dim, 0.0);
  for (std::size_t c = 0; c < probe_.num_classes; ++c)
    for (std::size_t j = 0; j < probe_.dim; ++j) gf[j] += dz[c] * probe_.weights[c * probe_.dim + j];
  out.grad = backbone_.backward(x, gf);
  return out;
}

EmbeddingSet extract_features(const ToyBackbone& backbone, const std::vector<std::vector<double>>& inputs,
                              const std::vector<std::string>& ids) {
  if (inputs.size() != ids.size()) throw Error(ErrorCode::kMisaligned, "inputs and ids differ in length");
  std::vector<float> data;
  data.reserve(inputs.size() * backbone.feature_dim());
  for (const auto& x : inputs) {
    for (double v : backbone.features(x)) data.push_back(static_cast<float>(v));
  }
  return EmbeddingSet(ids, backbone.feature_dim(), std::move(data));
}

// ---- PGD ------------------------------------------------------------------------

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw Error(ErrorCode::kInvalidArgument, "epsilon must be >= 0");
  if (num_steps < 1) throw Error(ErrorCode::kInvalidArgument, "num_steps must be >= 1");
  if (alpha && !(*alpha >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be >= 0");
  if (!(alpha_divisor > 0.0)) throw Error(ErrorCode::kInvalidArgument, "alpha_divisor must be > 0");
  if (max_samples < 1) throw Error(ErrorCode::kInvalidArgument, "max_samples must be >= 1");
}

const std::vector<double>& default_epsilons() {
  static const std::vector<double> eps{0.25e-3, 1.5e-3, 35e-3};
  return eps;
}

AttackResult pgd_attack(const DifferentiablePipeline& pipe, std::span<const double> x, int y,
                        const AttackConfig& cfg) {
  cfg.validate();
  check_input(x, pipe.input_size());
  const double eps = cfg.epsilon, alpha = cfg.step_size();
  const double lo = pipe.input_min(), hi = pipe.input_max();
  const std::size_t n = x.size();

  AttackResult res;
  res.delta.assign(n, 0.0);
  std::vector<double> delta(n, 0.0), xa(x.begin(), x.end());
  for (auto& v : xa) v = std::clamp(v, lo, hi);
  auto lg = pipe.loss_gradient(xa, y);
  res.loss_clean = lg.loss;
  res.loss_adv = lg.loss;
  res.x_adv = xa;

  for (std::size_t t = 0; t < cfg.num_steps; ++t) {
    if (lg.grad.size() != n) throw Error(ErrorCode::kShapeMismatch, "pipeline gradient has wrong size");
    double linf = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = lg.grad[i];
      if (!std::isfinite(g)) {
        throw Error(ErrorCode::kNonFiniteGradient, "non-finite gradient at step " + std::to_string(t));
      }
      const double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
      double d = std::clamp(delta[i] + alpha * s, -eps, eps);
      // intersect with the input domain
      const double xi = std::clamp(x[i] + d, lo, hi);
      d = std::clamp(xi - x[i], -eps, eps);
      delta[i] = d;
      xa[i] = xi;
      linf = std::max(linf, std::abs(d));
    }
    res.step_linf.push_back(linf);
    lg = pipe.loss_gradient(xa, y);
    if (!std::isfinite(lg.loss)) throw Error(ErrorCode::kNonFiniteGradient, "non-finite loss during attack");
    if (lg.loss > res.loss_adv) {
      res.loss_adv = lg.loss;
      res.x_adv = xa;
      res.delta = delta;
    }
  }
  return res;
}

namespace {

int argmax(const std::vector<double>& z) {
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

}  // namespace

F1DropResult f1_drop(const DifferentiablePipeline& pipe, const std::vector<std::vector<double>>& inputs,
                     const std::vector<int>& labels, const std::vector<double>& epsilons, const AttackConfig& cfg) {
  cfg.validate();
  if (inputs.empty()) throw Error(ErrorCode::kEmptyInput, "no samples to attack");
  if (inputs.size() != labels.size()) throw Error(ErrorCode::kMisaligned, "inputs and labels differ in length");
  const std::size_t n = inputs.size();
  const auto c = static_cast<int>(pipe.num_classes());

  F1DropResult res;
  CounterRng rng(derive_key(cfg.seed, "f1_drop"));
  auto perm = random_permutation(n, rng);
  perm.resize(std::min(n, cfg.max_samples));
  std::sort(perm.begin(), perm.end());
  res.subsample = perm;

  const std::size_t threads = pipe.concurrent_safe() ? cfg.threads : 1;
  std::vector<int> y_true(perm.size()), clean(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) y_true[i] = labels[perm[i]];
  parallel_for(perm.size(), threads, [&](std::size_t i) {
    auto x = inputs[perm[i]];
    for (auto& v : x) v = std::clamp(v, pipe.input_min(), pipe.input_max());
    clean[i] = argmax(pipe.forward(x));
  });
  res.f1_clean = f1_score(PredictionSet(y_true, clean, c));

  for (double eps : epsilons) {
    AttackConfig ecfg = cfg;
    ecfg.epsilon = eps;
    std::vector<int> adv(perm.size());
    parallel_for(perm.size(), threads, [&](std::size_t i) {
      auto r = pgd_attack(pipe, inputs[perm[i]], labels[perm[i]], ecfg);
      adv[i] = argmax(pipe.forward(r.x_adv));
    });
    F1DropPoint p;
    p.epsilon = eps;
    p.f1_adv = f1_score(PredictionSet(y_true, adv, c));
    p.delta_f1 = res.f1_clean - p.f1_adv;
    res.points.push_back(p);
  }
  return res;
}

}  // namespace embench
