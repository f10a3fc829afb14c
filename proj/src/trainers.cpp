#include "embench/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace embench {

using nlohmann::json;

// ---- Adam ----------------------------------------------------------------------

Adam::Adam(std::size_t size, AdamConfig cfg) : cfg_(cfg), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "Adam parameter size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

// ---- config --------------------------------------------------------------------

void TrainConfig::validate() const {
  if (lr_grid.empty() || wd_grid.empty()) throw Error(ErrorCode::kInvalidArgument, "hyperparameter grids must be nonempty");
  if (epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  for (double lr : lr_grid)
    if (!(lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rates must be > 0");
  for (double wd : wd_grid)
    if (!(wd >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "weight decays must be >= 0");
}

std::string TrainConfig::fingerprint() const {
  json j{{"adam", {adam.beta1, adam.beta2, adam.eps}},
         {"batch_size", batch_size},
         {"epochs", epochs},
         {"lr_grid", lr_grid},
         {"wd_grid", wd_grid},
         {"seed", seed},
         {"background_weight", background_weight}};
  return sha256_hex(j.dump()).substr(0, 16);
}

TrainConfig TrainConfig::segmentation_defaults() {
  TrainConfig cfg;
  cfg.batch_size = 32;
  return cfg;
}

// ---- linear probe ----------------------------------------------------------------

LinearModel LinearModel::zeros(std::size_t num_classes, std::size_t dim) {
  LinearModel m;
  m.num_classes = num_classes;
  m.dim = dim;
  m.weights.assign(num_classes * dim, 0.0);
  m.bias.assign(num_classes, 0.0);
  return m;
}

void LinearModel::logits(std::span<const float> x, std::span<double> out) const {
  for (std::size_t c = 0; c < num_classes; ++c) {
    double s = bias[c];
    const double* w = weights.data() + c * dim;
    for (std::size_t j = 0; j < dim; ++j) s += w[j] * static_cast<double>(x[j]);
    out[c] = s;
  }
}

void softmax_inplace(std::span<double> z) {
  double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

void check_linear_compat(const LinearModel& model, const LabeledEmbeddings& data) {
  if (model.dim != data.set.dim()) {
    throw Error(ErrorCode::kShapeMismatch, "model dim " + std::to_string(model.dim) + " != embedding dim " +
                                               std::to_string(data.set.dim()));
  }
}

// loss plus (optionally) gradient, float64 accumulation in row order
double linear_pass(const LinearModel& model, const LabeledEmbeddings& data, std::span<const std::size_t> rows,
                   LinearGradient* grad) {
  check_linear_compat(model, data);
  std::vector<std::size_t> owned;
  if (rows.empty()) {
    owned = all_rows(data.count());
    rows = owned;
  }
  const std::size_t c = model.num_classes, d = model.dim;
  if (grad) {
    grad->weights.assign(c * d, 0.0);
    grad->bias.assign(c, 0.0);
  }
  std::vector<double> p(c);
  double loss = 0.0;
  for (std::size_t r : rows) {
    auto x = data.set.row(r);
    const auto y = static_cast<std::size_t>(data.labels[r]);
    model.logits(x, p);
    double mx = *std::max_element(p.begin(), p.end());
    double lse = 0.0;
    for (double v : p) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    loss += lse - p[y];
    if (grad) {
      for (std::size_t k = 0; k < c; ++k) {
        double g = std::exp(p[k] - lse) - (k == y ? 1.0 : 0.0);
        grad->bias[k] += g;
        double* gw = grad->weights.data() + k * d;
        for (std::size_t j = 0; j < d; ++j) gw[j] += g * static_cast<double>(x[j]);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  if (grad) {
    for (auto& v : grad->weights) v *= inv;
    for (auto& v : grad->bias) v *= inv;
    grad->loss = loss * inv;
  }
  return loss * inv;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

template <typename Model, typename TrainFn, typename ScoreFn>
std::pair<Model, std::vector<GridPointResult>> grid_search(const TrainConfig& cfg, TrainFn train_one, ScoreFn score) {
  cfg.validate();
  std::vector<std::pair<double, double>> points;
  for (double lr : cfg.lr_grid)
    for (double wd : cfg.wd_grid) points.emplace_back(lr, wd);
  std::vector<std::optional<Model>> models(points.size());
  std::vector<GridPointResult> results(points.size());
  parallel_for(points.size(), cfg.threads, [&](std::size_t i) {
    auto [lr, wd] = points[i];
    results[i].lr = lr;
    results[i].weight_decay = wd;
    try {
      models[i] = train_one(lr, wd);
      results[i].val_score = score(*models[i]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDiverged) throw;
      results[i].diverged = true;
      results[i].message = e.what();
    }
  });
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (results[i].diverged) continue;
    if (!best || results[i].val_score > results[*best].val_score) best = i;
  }
  if (!best) throw Error(ErrorCode::kDiverged, "every grid point diverged");
  return {std::move(*models[*best]), std::move(results)};
}

}  // namespace

double cross_entropy_loss(const LinearModel& model, const LabeledEmbeddings& data, std::span<const std::size_t> rows) {
  return linear_pass(model, data, rows, nullptr);
}

LinearGradient cross_entropy_gradient(const LinearModel& model, const LabeledEmbeddings& data,
                                      std::span<const std::size_t> rows) {
  LinearGradient g;
  linear_pass(model, data, rows, &g);
  return g;
}

LinearModel train_linear(const LabeledEmbeddings& train, double lr, double weight_decay, const TrainConfig& cfg,
                         TrainTrace* trace) {
  train.validate();
  if (train.count() == 0) throw Error(ErrorCode::kEmptyInput, "training set is empty");
  auto model = LinearModel::zeros(static_cast<std::size_t>(train.num_classes), train.set.dim());
  model.lr = lr;
  model.weight_decay = weight_decay;
  model.fingerprint = cfg.fingerprint();
  Adam opt_w(model.weights.size(), cfg.adam);
  Adam opt_b(model.bias.size(), cfg.adam);
  const std::size_t n = train.count();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    CounterRng rng(derive_key(cfg.seed, epoch));
    auto perm = random_permutation(n, rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::span<const std::size_t> batch(perm.data() + start, std::min(cfg.batch_size, n - start));
      LinearGradient g = cross_entropy_gradient(model, train, batch);
      if (!std::isfinite(g.loss) || !all_finite(g.weights)) {
        throw Error(ErrorCode::kDiverged, "non-finite loss at epoch " + std::to_string(epoch));
      }
      opt_w.step(model.weights, g.weights, lr);
      opt_b.step(model.bias, g.bias, lr);
      // decoupled decay on weights only
      if (weight_decay > 0.0) {
        const double shrink = 1.0 - lr * weight_decay;
        for (auto& w : model.weights) w *= shrink;
      }
    }
    if (!all_finite(model.weights) || !all_finite(model.bias)) {
      throw Error(ErrorCode::kDiverged, "non-finite parameters at epoch " + std::to_string(epoch));
    }
    if (trace) trace->epoch_loss.push_back(cross_entropy_loss(model, train));
  }
  return model;
}

LinearProbeResult train_linear_probe(const LabeledEmbeddings& train, const LabeledEmbeddings& val,
                                     const TrainConfig& cfg) {
  train.validate();
  val.validate();
  std::vector<bool> seen(static_cast<std::size_t>(train.num_classes), false);
  std::size_t distinct = 0;
  for (int l : train.labels) {
    if (!seen[static_cast<std::size_t>(l)]) {
      seen[static_cast<std::size_t>(l)] = true;
      ++distinct;
    }
  }
  if (distinct < 2) throw Error(ErrorCode::kInvalidArgument, "linear probe needs at least two classes in train");
  auto [model, grid] = grid_search<LinearModel>(
      cfg, [&](double lr, double wd) { return train_linear(train, lr, wd, cfg); },
      [&](const LinearModel& m) { return f1_score(predict(m, val)); });
  return {std::move(model), std::move(grid)};
}

PredictionSet predict(const LinearModel& model, const LabeledEmbeddings& data) {
  check_linear_compat(model, data);
  const std::size_t c = model.num_classes;
  std::vector<double> probs(data.count() * c);
  for (std::size_t i = 0; i < data.count(); ++i) {
    std::span<double> row(probs.data() + i * c, c);
    model.logits(data.set.row(i), row);
    softmax_inplace(row);
  }
  return PredictionSet(data.labels, std::move(probs), static_cast<int>(c));
}

void save_linear_model(const LinearModel& model, const std::string& emb_path, const std::string& sidecar_path) {
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < model.num_classes; ++c) ids.push_back("class_" + std::to_string(c));
  std::vector<float> w(model.weights.begin(), model.weights.end());
  write_embedding_file(emb_path, EmbeddingSet(ids, model.dim, std::move(w)));
  json j{{"bias", model.bias},
         {"fingerprint", model.fingerprint},
         {"lr", model.lr},
         {"weight_decay", model.weight_decay},
         {"num_classes", model.num_classes},
         {"dim", model.dim}};
  std::ofstream out(sidecar_path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + sidecar_path);
  out << j.dump(2) << '\n';
}

LinearModel load_linear_model(const std::string& emb_path, const std::string& sidecar_path) {
  auto w = read_embedding_file(emb_path);
  std::ifstream in(sidecar_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + sidecar_path);
  json j = json::parse(in);
  LinearModel m;
  m.num_classes = w.count();
  m.dim = w.dim();
  m.weights.assign(w.data().begin(), w.data().end());
  m.bias = j.at("bias").get<std::vector<double>>();
  if (m.bias.size() != m.num_classes) throw Error(ErrorCode::kShapeMismatch, "bias length != class count");
  m.fingerprint = j.value("fingerprint", std::string());
  m.lr = j.value("lr", 0.0);
  m.weight_decay = j.value("weight_decay", 0.0);
  return m;
}

// ---- segmentation -------------------------------------------------------------

SegHead SegHead::zeros(std::size_t num_classes, std::size_t dim, double scale) {
  SegHead h;
  h.num_classes = num_classes;
  h.dim = dim;
  h.class_tokens.assign(num_classes * dim, 0.0);
  h.bias.assign(num_classes, 0.0);
  h.scale = scale;
  return h;
}

BilinearUpsampler::BilinearUpsampler(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w)
    : in_h_(in_h), in_w_(in_w), out_h_(out_h), out_w_(out_w), taps_(out_h * out_w * 4) {
  auto axis = [](std::size_t in, std::size_t out, std::size_t dst) {
    double scale = static_cast<double>(in) / static_cast<double>(out);
    double src = std::max(0.0, (static_cast<double>(dst) + 0.5) * scale - 0.5);
    auto i0 = std::min(static_cast<std::size_t>(src), in - 1);
    std::size_t i1 = std::min(i0 + 1, in - 1);
    double frac = src - static_cast<double>(i0);
    if (i0 == i1) frac = 0.0;
    return std::tuple<std::size_t, std::size_t, double>(i0, i1, frac);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    auto [y0, y1, fy] = axis(in_h, out_h, y);
    for (std::size_t x = 0; x < out_w; ++x) {
      auto [x0, x1, fx] = axis(in_w, out_w, x);
      Tap* t = &taps_[(y * out_w + x) * 4];
      t[0] = {static_cast<std::uint32_t>(y0 * in_w + x0), (1 - fy) * (1 - fx)};
      t[1] = {static_cast<std::uint32_t>(y0 * in_w + x1), (1 - fy) * fx};
      t[2] = {static_cast<std::uint32_t>(y1 * in_w + x0), fy * (1 - fx)};
      t[3] = {static_cast<std::uint32_t>(y1 * in_w + x1), fy * fx};
    }
  }
}

std::vector<double> BilinearUpsampler::apply(std::span<const double> in, std::size_t channels) const {
  std::vector<double> out(out_size() * channels, 0.0);
  for (std::size_t p = 0; p < out_size(); ++p) {
    for (const auto& t : taps(p)) {
      if (t.weight == 0.0) continue;
      for (std::size_t c = 0; c < channels; ++c) out[p * channels + c] += t.weight * in[t.src * channels + c];
    }
  }
  return out;
}

namespace {

// Dice statistics are linear in the upsampled map, so the mask is pulled back
// to token resolution once: I_c = sum_t P[t,c] * gt[t,c], S_c = sum_t P[t,c] * wsum[t].
struct SegTargets {
  std::size_t tokens = 0, classes = 0;
  std::vector<double> gt;    // rows x tokens x classes
  std::vector<double> gsum;  // rows x classes
  std::vector<double> wsum;  // tokens
};

void check_seg_compat(const SegHead& head, const TokenEmbeddingSet& tokens, const SegMaskSet& masks) {
  if (head.dim != tokens.dim()) throw Error(ErrorCode::kShapeMismatch, "head dim != token dim");
  if (head.num_classes != static_cast<std::size_t>(masks.num_classes())) {
    throw Error(ErrorCode::kShapeMismatch, "head classes != mask classes");
  }
  if (tokens.ids() != masks.ids()) throw Error(ErrorCode::kMisaligned, "tokens and masks are not id-aligned");
  if (masks.height() % tokens.grid_h() != 0 || masks.width() % tokens.grid_w() != 0) {
    throw Error(ErrorCode::kShapeMismatch, "token grid does not divide mask resolution");
  }
}

SegTargets prepare_targets(const TokenEmbeddingSet& tokens, const SegMaskSet& masks, std::span<const std::size_t> rows) {
  BilinearUpsampler up(tokens.grid_h(), tokens.grid_w(), masks.height(), masks.width());
  SegTargets t;
  t.tokens = tokens.tokens();
  t.classes = static_cast<std::size_t>(masks.num_classes());
  t.gt.assign(rows.size() * t.tokens * t.classes, 0.0);
  t.gsum.assign(rows.size() * t.classes, 0.0);
  t.wsum.assign(t.tokens, 0.0);
  for (std::size_t p = 0; p < up.out_size(); ++p)
    for (const auto& tap : up.taps(p)) t.wsum[tap.src] += tap.weight;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto m = masks.mask(rows[r]);
    double* gt = t.gt.data() + r * t.tokens * t.classes;
    for (std::size_t p = 0; p < up.out_size(); ++p) {
      const std::size_t c = m[p];
      t.gsum[r * t.classes + c] += 1.0;
      for (const auto& tap : up.taps(p)) gt[tap.src * t.classes + c] += tap.weight;
    }
  }
  return t;
}

void token_probs(const SegHead& head, std::span<const float> z, std::size_t tokens, std::span<double> out) {
  const std::size_t c = head.num_classes, d = head.dim;
  for (std::size_t t = 0; t < tokens; ++t) {
    const float* zt = z.data() + t * d;
    std::span<double> row = out.subspan(t * c, c);
    for (std::size_t k = 0; k < c; ++k) {
      const double* q = head.class_tokens.data() + k * d;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += q[j] * static_cast<double>(zt[j]);
      row[k] = head.scale * s + head.bias[k];
    }
    softmax_inplace(row);
  }
}

// rows index into tokens/masks; targets built for the same rows in order.
double seg_pass(const SegHead& head, const TokenEmbeddingSet& tokens, std::span<const std::size_t> rows,
                const SegTargets& targets, std::span<const std::size_t> target_rows, double smooth, SegGradient* grad) {
  const std::size_t c = head.num_classes, d = head.dim, nt = targets.tokens;
  std::vector<double> probs(rows.size() * nt * c);
  std::vector<double> inter(c, 0.0), psum(c, 0.0), gsum(c, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::span<double> p(probs.data() + r * nt * c, nt * c);
    token_probs(head, tokens.sample(rows[r]), nt, p);
    const double* gt = targets.gt.data() + target_rows[r] * nt * c;
    for (std::size_t t = 0; t < nt; ++t) {
      for (std::size_t k = 0; k < c; ++k) {
        inter[k] += p[t * c + k] * gt[t * c + k];
        psum[k] += p[t * c + k] * targets.wsum[t];
      }
    }
    for (std::size_t k = 0; k < c; ++k) gsum[k] += targets.gsum[target_rows[r] * c + k];
  }
  std::vector<double> num(c), den(c);
  double mean_dice = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    num[k] = 2.0 * inter[k] + smooth;
    den[k] = psum[k] + gsum[k] + smooth;
    mean_dice += num[k] / den[k];
  }
  mean_dice /= static_cast<double>(c);
  const double loss = 1.0 - mean_dice;
  if (!grad) return loss;

  grad->loss = loss;
  grad->class_tokens.assign(c * d, 0.0);
  grad->bias.assign(c, 0.0);
  std::vector<double> dp(c), dl(c);
  const double inv_c = 1.0 / static_cast<double>(c);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double* p = probs.data() + r * nt * c;
    const double* gt = targets.gt.data() + target_rows[r] * nt * c;
    auto z = tokens.sample(rows[r]);
    for (std::size_t t = 0; t < nt; ++t) {
      double dot_pd = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        dp[k] = -inv_c * (2.0 * gt[t * c + k] * den[k] - num[k] * targets.wsum[t]) / (den[k] * den[k]);
        dot_pd += p[t * c + k] * dp[k];
      }
      const float* zt = z.data() + t * d;
      for (std::size_t k = 0; k < c; ++k) {
        dl[k] = p[t * c + k] * (dp[k] - dot_pd);
        grad->bias[k] += dl[k];
        double* gq = grad->class_tokens.data() + k * d;
        const double s = head.scale * dl[k];
        for (std::size_t j = 0; j < d; ++j) gq[j] += s * static_cast<double>(zt[j]);
      }
    }
  }
  return loss;
}

}  // namespace

double seg_dice_loss(const SegHead& head, const TokenEmbeddingSet& tokens, const SegMaskSet& masks,
                     std::span<const std::size_t> rows, double smooth) {
  check_seg_compat(head, tokens, masks);
  std::vector<std::size_t> owned;
  if (rows.empty()) {
    owned = all_rows(tokens.count());
    rows = owned;
  }
  auto targets = prepare_targets(tokens, masks, rows);
  auto local = all_rows(rows.size());
  return seg_pass(head, tokens, rows, targets, local, smooth, nullptr);
}

SegGradient seg_dice_gradient(const SegHead& head, const TokenEmbeddingSet& tokens, const SegMaskSet& masks,
                              std::span<const std::size_t> rows, double smooth) {
  check_seg_compat(head, tokens, masks);
  std::vector<std::size_t> owned;
  if (rows.empty()) {
    owned = all_rows(tokens.count());
    rows = owned;
  }
  auto targets = prepare_targets(tokens, masks, rows);
  auto local = all_rows(rows.size());
  SegGradient g;
  seg_pass(head, tokens, rows, targets, local, smooth, &g);
  return g;
}

SegHead train_seg_single(const TokenEmbeddingSet& tokens, const SegMaskSet& masks, double lr, double weight_decay,
                         const TrainConfig& cfg, TrainTrace* trace) {
  auto head = SegHead::zeros(static_cast<std::size_t>(masks.num_classes()), tokens.dim());
  check_seg_compat(head, tokens, masks);
  head.lr = lr;
  head.weight_decay = weight_decay;
  head.fingerprint = cfg.fingerprint();
  // small deterministic init breaks the class symmetry of an all-zero start
  CounterRng init(derive_key(cfg.seed, "seg_head_init"));
  const double init_scale = 0.01 / std::sqrt(static_cast<double>(tokens.dim()));
  for (auto& v : head.class_tokens) v = init_scale * init.normal();

  const std::size_t n = tokens.count();
  auto rows = all_rows(n);
  auto targets = prepare_targets(tokens, masks, rows);
  Adam opt_q(head.class_tokens.size(), cfg.adam);
  Adam opt_b(head.bias.size(), cfg.adam);
  SegGradient g;
  std::vector<std::size_t> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    CounterRng rng(derive_key(cfg.seed, epoch));
    auto perm = random_permutation(n, rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      batch.assign(perm.begin() + static_cast<std::ptrdiff_t>(start),
                   perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + cfg.batch_size)));
      seg_pass(head, tokens, batch, targets, batch, 1.0, &g);
      if (!std::isfinite(g.loss) || !all_finite(g.class_tokens)) {
        throw Error(ErrorCode::kDiverged, "non-finite Dice loss at epoch " + std::to_string(epoch));
      }
      opt_q.step(head.class_tokens, g.class_tokens, lr);
      opt_b.step(head.bias, g.bias, lr);
      if (weight_decay > 0.0) {
        const double shrink = 1.0 - lr * weight_decay;
        for (auto& w : head.class_tokens) w *= shrink;
      }
    }
    if (trace) trace->epoch_loss.push_back(seg_pass(head, tokens, rows, targets, rows, 1.0, nullptr));
  }
  return head;
}

SegProbeResult train_seg_head(const TokenEmbeddingSet& train_tokens, const SegMaskSet& train_masks,
                              const TokenEmbeddingSet& val_tokens, const SegMaskSet& val_masks,
                              const TrainConfig& cfg) {
  auto [head, grid] = grid_search<SegHead>(
      cfg, [&](double lr, double wd) { return train_seg_single(train_tokens, train_masks, lr, wd, cfg); },
      [&](const SegHead& h) {
        auto pred = predict(h, val_tokens, val_masks.height(), val_masks.width(), val_masks.background());
        return segmentation_score(pred, val_masks, cfg.background_weight).dice;
      });
  return {std::move(head), std::move(grid)};
}

SegMaskSet predict(const SegHead& head, const TokenEmbeddingSet& tokens, std::size_t mask_h, std::size_t mask_w,
                   int background) {
  if (head.dim != tokens.dim()) throw Error(ErrorCode::kShapeMismatch, "head dim != token dim");
  BilinearUpsampler up(tokens.grid_h(), tokens.grid_w(), mask_h, mask_w);
  const std::size_t c = head.num_classes, nt = tokens.tokens();
  std::vector<std::uint8_t> out(tokens.count() * mask_h * mask_w);
  std::vector<double> p(nt * c);
  for (std::size_t i = 0; i < tokens.count(); ++i) {
    token_probs(head, tokens.sample(i), nt, p);
    auto u = up.apply(p, c);
    for (std::size_t px = 0; px < up.out_size(); ++px) {
      const double* row = u.data() + px * c;
      out[i * up.out_size() + px] = static_cast<std::uint8_t>(std::max_element(row, row + c) - row);
    }
  }
  return SegMaskSet(tokens.ids(), mask_h, mask_w, static_cast<int>(c), background, std::move(out));
}

}  // namespace embench
