#pragma once

// l-infinity PGD against a differentiable classification pipeline, plus a
// small analytic backbone that stands in for a real feature extractor.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "embench/trainers.hpp"

namespace embench {

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad;  // d(cross-entropy)/dx, same size as x
};

class DifferentiablePipeline {
 public:
  virtual ~DifferentiablePipeline() = default;

  virtual std::size_t input_size() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual std::vector<double> forward(std::span<const double> x) const = 0;
  virtual LossGradient loss_gradient(std::span<const double> x, int y) const = 0;
  // false: the engine never calls this pipeline from two threads at once
  virtual bool concurrent_safe() const { return true; }
  virtual double input_min() const { return 0.0; }
  virtual double input_max() const { return 1.0; }
};

// Cross-entropy of softmax(logits) at label y; writes dL/dlogits when asked.
double cross_entropy(std::span<const double> logits, int y, std::vector<double>* dlogits = nullptr);

// logits = W x + b
class LinearPipeline : public DifferentiablePipeline {
 public:
  LinearPipeline(std::size_t num_classes, std::size_t input_size, std::vector<double> weights,
                 std::vector<double> bias);

  std::size_t input_size() const override { return input_size_; }
  std::size_t num_classes() const override { return num_classes_; }
  std::vector<double> forward(std::span<const double> x) const override;
  LossGradient loss_gradient(std::span<const double> x, int y) const override;
  void set_input_range(double lo, double hi) {
    lo_ = lo;
    hi_ = hi;
  }
  double input_min() const override { return lo_; }
  double input_max() const override { return hi_; }

 private:
  std::size_t num_classes_, input_size_;
  std::vector<double> weights_, bias_;
  double lo_ = 0.0, hi_ = 1.0;
};

struct ToyBackboneConfig {
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t channels = 3;
  std::size_t filters = 4;
  std::size_t hidden = 8;
  std::size_t features = 4;
  std::uint64_t seed = 0;
};

// 3x3 same-padded convolution -> tanh -> global average pool -> dense -> tanh -> dense.
// Input is channel-last (H x W x C), values in [0, 1].
class ToyBackbone {
 public:
  explicit ToyBackbone(const ToyBackboneConfig& cfg);

  const ToyBackboneConfig& config() const { return cfg_; }
  std::size_t input_size() const { return cfg_.height * cfg_.width * cfg_.channels; }
  std::size_t feature_dim() const { return cfg_.features; }

  std::vector<double> features(std::span<const double> x) const;
  // Vector-Jacobian product: d(<grad_features, f(x)>)/dx.
  std::vector<double> backward(std::span<const double> x, std::span<const double> grad_features) const;

 private:
  struct Activations {
    std::vector<double> conv;  // tanh(conv), H*W*F
    std::vector<double> pooled;
    std::vector<double> hidden;  // tanh output
    std::vector<double> out;
  };
  Activations run(std::span<const double> x) const;

  ToyBackboneConfig cfg_;
  std::vector<double> conv_w_;  // F x 3 x 3 x C
  std::vector<double> conv_b_;
  std::vector<double> w1_, b1_;  // hidden x F
  std::vector<double> w2_, b2_;  // features x hidden
};

// c(x) = probe(backbone(x))
class ProbedPipeline : public DifferentiablePipeline {
 public:
  ProbedPipeline(ToyBackbone backbone, LinearModel probe);

  std::size_t input_size() const override { return backbone_.input_size(); }
  std::size_t num_classes() const override { return probe_.num_classes; }
  std::vector<double> forward(std::span<const double> x) const override;
  LossGradient loss_gradient(std::span<const double> x, int y) const override;

  const ToyBackbone& backbone() const { return backbone_; }
  const LinearModel& probe() const { return probe_; }

 private:
  ToyBackbone backbone_;
  LinearModel probe_;
};

// Backbone features for a batch of inputs, as an EmbeddingSet for probe training.
EmbeddingSet extract_features(const ToyBackbone& backbone, const std::vector<std::vector<double>>& inputs,
                              const std::vector<std::string>& ids);

struct AttackConfig {
  double epsilon = 1.5e-3;
  std::size_t num_steps = 5;
  // step size; epsilon / alpha_divisor when unset
  std::optional<double> alpha;
  double alpha_divisor = 2.5;
  std::size_t max_samples = 10000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  double step_size() const { return alpha ? *alpha : epsilon / alpha_divisor; }
  void validate() const;
};

// Default budgets: 0.25e-3, 1.5e-3, 35e-3.
const std::vector<double>& default_epsilons();

struct AttackResult {
  std::vector<double> x_adv;
  std::vector<double> delta;
  // max |δ_t| after each step
  std::vector<double> step_linf;
  double loss_clean = 0.0;
  double loss_adv = 0.0;
};

// δ_0 = 0, δ_{t+1} = clamp(δ_t + α sign(∇L), ±ε), then x + δ clamped to the
// input range. Returns the highest-loss iterate (δ_0 included).
AttackResult pgd_attack(const DifferentiablePipeline& pipe, std::span<const double> x, int y, const AttackConfig& cfg);

struct F1DropPoint {
  double epsilon = 0.0;
  double f1_adv = 0.0;
  double delta_f1 = 0.0;
};

struct F1DropResult {
  std::vector<std::size_t> subsample;
  double f1_clean = 0.0;
  std::vector<F1DropPoint> points;
};

// ΔF1(ε) = F1_clean − F1_adv(ε) on one seeded subsample of min(N, max_samples).
F1DropResult f1_drop(const DifferentiablePipeline& pipe, const std::vector<std::vector<double>>& inputs,
                     const std::vector<int>& labels, const std::vector<double>& epsilons, const AttackConfig& cfg);

}  // namespace embench
