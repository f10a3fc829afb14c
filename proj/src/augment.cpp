#include "embench/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace embench {

namespace {

constexpr std::size_t kMinSide = 8;

struct KindName {
  TransformKind kind;
  const char* name;
};

constexpr KindName kKinds[] = {
    {TransformKind::kCrop, "crop"},         {TransformKind::kElastic, "elastic"},
    {TransformKind::kDilation, "dilation"}, {TransformKind::kErosion, "erosion"},
    {TransformKind::kOpening, "opening"},   {TransformKind::kClosing, "closing"},
    {TransformKind::kBlur, "blur"},         {TransformKind::kJitter, "jitter"},
    {TransformKind::kTranslate, "translate"}, {TransformKind::kCutout, "cutout"},
    {TransformKind::kHed, "hed"},           {TransformKind::kFlip, "flip"},
    {TransformKind::kRotate, "rotate"},     {TransformKind::kGamma, "gamma"},
};

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Reflect-101 index into [0, n): -1 -> 1, n -> n-2.
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

double reflect_coord(double v, double n) {
  if (n <= 1.0) return 0.0;
  const double period = 2.0 * (n - 1.0);
  v = std::fmod(v, period);
  if (v < 0) v += period;
  return v <= n - 1.0 ? v : period - v;
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable blur of a single-channel double plane with reflect-101 borders.
std::vector<double> blur_plane(const std::vector<double>& in, std::size_t h, std::size_t w,
                               const std::vector<double>& kernel) {
  const auto r = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
  std::vector<double> tmp(in.size()), out(in.size());
  for (std::ptrdiff_t y = 0; y < hh; ++y)
    for (std::ptrdiff_t x = 0; x < ww; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t k = -r; k <= r; ++k)
        s += kernel[static_cast<std::size_t>(k + r)] * in[static_cast<std::size_t>(y * ww + reflect_index(x + k, ww))];
      tmp[static_cast<std::size_t>(y * ww + x)] = s;
    }
  for (std::ptrdiff_t y = 0; y < hh; ++y)
    for (std::ptrdiff_t x = 0; x < ww; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t k = -r; k <= r; ++k)
        s += kernel[static_cast<std::size_t>(k + r)] * tmp[static_cast<std::size_t>(reflect_index(y + k, hh) * ww + x)];
      out[static_cast<std::size_t>(y * ww + x)] = s;
    }
  return out;
}

void check_size(const Image& img) {
  if (img.height < kMinSide || img.width < kMinSide) {
    throw Error(ErrorCode::kImageTooSmall, std::to_string(img.height) + "x" + std::to_string(img.width) +
                                               " image is smaller than " + std::to_string(kMinSide) + "x" +
                                               std::to_string(kMinSide));
  }
  if (img.pixels.size() != img.height * img.width * 3) {
    throw Error(ErrorCode::kShapeMismatch, "pixel buffer does not match image size");
  }
}

template <typename Pick>
Image morph(const Image& img, int k, Pick pick) {
  if (k < 1 || k % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "kernel size must be odd and positive");
  const int r = k / 2;
  const auto h = static_cast<int>(img.height), w = static_cast<int>(img.width);
  // separable: a square window is a row pass followed by a column pass
  Image tmp(img.height, img.width), out(img.height, img.width);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        std::uint8_t v = img.at(y, x, c);
        for (int dx = std::max(0, x - r); dx <= std::min(w - 1, x + r); ++dx) v = pick(v, img.at(y, dx, c));
        tmp.at(y, x, c) = v;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        std::uint8_t v = tmp.at(y, x, c);
        for (int dy = std::max(0, y - r); dy <= std::min(h - 1, y + r); ++dy) v = pick(v, tmp.at(dy, x, c));
        out.at(y, x, c) = v;
      }
  return out;
}

double gray(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0.0;
  if (d == 0) {
    h = 0;
  } else if (mx == r) {
    h = std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = (b - r) / d + 2.0;
  } else {
    h = (r - g) / d + 4.0;
  }
  h /= 6.0;
  if (h < 0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = h * 6.0;
  const int i = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

}  // namespace

const std::vector<TransformKind>& all_transform_kinds() {
  static const std::vector<TransformKind> kinds = [] {
    std::vector<TransformKind> v;
    for (const auto& k : kKinds) v.push_back(k.kind);
    return v;
  }();
  return kinds;
}

const char* to_string(TransformKind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k.name;
  return "unknown";
}

TransformKind parse_transform_kind(std::string_view name) {
  for (const auto& k : kKinds)
    if (name == k.name) return k.kind;
  throw Error(ErrorCode::kUnknownKind, "unknown transform '" + std::string(name) + "'");
}

std::uint64_t transform_seed(std::uint64_t global_seed, std::string_view sample_id, TransformKind kind) {
  return derive_key(global_seed, sample_id, to_string(kind));
}

// ---- specs ---------------------------------------------------------------------------

TransformSpec sample_spec(TransformKind kind, std::uint64_t seed, const AugmentKnobs& knobs) {
  CounterRng rng(derive_key(seed, "transform", to_string(kind)));
  TransformSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  switch (kind) {
    case TransformKind::kCrop:
      spec.params = CropParams{static_cast<int>(rng.below(5))};
      break;
    case TransformKind::kElastic:
      spec.params = ElasticParams{250.0, 6.0, rng.next_u64()};
      break;
    case TransformKind::kDilation:
    case TransformKind::kErosion:
    case TransformKind::kOpening:
    case TransformKind::kClosing:
      spec.params = MorphParams{rng.below(2) == 0 ? 3 : 5};
      break;
    case TransformKind::kBlur:
      spec.params = BlurParams{15, knobs.blur_sigma};
      break;
    case TransformKind::kJitter: {
      JitterParams p;
      p.brightness = rng.uniform(0.5, 1.5);
      p.contrast = rng.uniform(0.5, 1.5);
      p.saturation = rng.uniform(0.5, 1.5);
      p.hue = rng.uniform(-0.35, 0.35);
      spec.params = p;
      break;
    }
    case TransformKind::kTranslate: {
      TranslateParams p;
      p.dx = rng.uniform(-0.2, 0.2);
      p.dy = rng.uniform(-0.2, 0.2);
      p.scale = rng.uniform(0.8, 1.2);
      p.shear = rng.uniform(-1.0, 1.0);
      spec.params = p;
      break;
    }
    case TransformKind::kCutout: {
      CutoutParams p;
      p.side = rng.uniform(0.1, 0.5);
      p.x = rng.uniform();
      p.y = rng.uniform();
      spec.params = p;
      break;
    }
    case TransformKind::kHed: {
      HedParams p;
      const double s = knobs.hed_sigma;
      for (std::size_t c = 0; c < 3; ++c) {
        p.alpha[c] = rng.uniform(1.0 - s, 1.0 + s);
        p.beta[c] = rng.uniform(-s, s);
      }
      spec.params = p;
      break;
    }
    case TransformKind::kFlip:
      spec.params = FlipParams{rng.below(2) == 0};
      break;
    case TransformKind::kRotate:
      spec.params = RotateParams{1 + static_cast<int>(rng.below(3))};
      break;
    case TransformKind::kGamma:
      spec.params = GammaParams{rng.uniform(0.5, 1.5)};
      break;
  }
  return spec;
}

void TransformSpec::validate() const {
  auto bad = [this](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, std::string(to_string(kind)) + ": " + what);
  };
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, CropParams>) {
          if (p.anchor < 0 || p.anchor > 4) bad("anchor outside 0..4");
        } else if constexpr (std::is_same_v<P, ElasticParams>) {
          if (!(p.alpha >= 0) || !(p.sigma > 0)) bad("alpha must be >= 0 and sigma > 0");
        } else if constexpr (std::is_same_v<P, MorphParams>) {
          if (p.kernel != 3 && p.kernel != 5) bad("kernel must be 3 or 5");
        } else if constexpr (std::is_same_v<P, BlurParams>) {
          if (p.kernel != 15 || !(p.sigma > 0)) bad("kernel must be 15 with sigma > 0");
        } else if constexpr (std::is_same_v<P, JitterParams>) {
          if (!in(p.brightness, 0.5, 1.5) || !in(p.contrast, 0.5, 1.5) || !in(p.saturation, 0.5, 1.5) ||
              !in(p.hue, -0.35, 0.35))
            bad("jitter factor out of range");
        } else if constexpr (std::is_same_v<P, TranslateParams>) {
          if (!in(p.dx, -0.2, 0.2) || !in(p.dy, -0.2, 0.2) || !in(p.scale, 0.8, 1.2) || !in(p.shear, -1.0, 1.0))
            bad("affine parameter out of range");
        } else if constexpr (std::is_same_v<P, CutoutParams>) {
          if (!in(p.side, 0.1, 0.5) || !in(p.x, 0.0, 1.0) || !in(p.y, 0.0, 1.0)) bad("cutout parameter out of range");
        } else if constexpr (std::is_same_v<P, HedParams>) {
          for (std::size_t c = 0; c < 3; ++c)
            if (!in(p.alpha[c], 0.0, 2.0) || !in(p.beta[c], -1.0, 1.0)) bad("stain perturbation out of range");
        } else if constexpr (std::is_same_v<P, RotateParams>) {
          if (p.quarter_turns < 1 || p.quarter_turns > 3) bad("quarter turns must be 1..3");
        } else if constexpr (std::is_same_v<P, GammaParams>) {
          if (!in(p.gamma, 0.5, 1.5)) bad("gamma out of [0.5, 1.5]");
        }
      },
      params);
}

nlohmann::json TransformSpec::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}, {"seed", seed}};
  std::visit(
      [&j](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, CropParams>) {
          j["anchor"] = p.anchor;
        } else if constexpr (std::is_same_v<P, ElasticParams>) {
          j["alpha"] = p.alpha;
          j["sigma"] = p.sigma;
          j["field_seed"] = p.field_seed;
        } else if constexpr (std::is_same_v<P, MorphParams>) {
          j["kernel"] = p.kernel;
        } else if constexpr (std::is_same_v<P, BlurParams>) {
          j["kernel"] = p.kernel;
          j["sigma"] = p.sigma;
        } else if constexpr (std::is_same_v<P, JitterParams>) {
          j["brightness"] = p.brightness;
          j["contrast"] = p.contrast;
          j["saturation"] = p.saturation;
          j["hue"] = p.hue;
        } else if constexpr (std::is_same_v<P, TranslateParams>) {
          j["dx"] = p.dx;
          j["dy"] = p.dy;
          j["scale"] = p.scale;
          j["shear"] = p.shear;
        } else if constexpr (std::is_same_v<P, CutoutParams>) {
          j["side"] = p.side;
          j["x"] = p.x;
          j["y"] = p.y;
        } else if constexpr (std::is_same_v<P, HedParams>) {
          j["alpha"] = p.alpha;
          j["beta"] = p.beta;
        } else if constexpr (std::is_same_v<P, FlipParams>) {
          j["horizontal"] = p.horizontal;
        } else if constexpr (std::is_same_v<P, RotateParams>) {
          j["quarter_turns"] = p.quarter_turns;
        } else if constexpr (std::is_same_v<P, GammaParams>) {
          j["gamma"] = p.gamma;
        }
      },
      params);
  return j;
}

// ---- transforms ---------------------------------------------------------------------

Image crop(const Image& img, int anchor) {
  const std::size_t s = std::min(img.height, img.width) / 2;
  std::size_t y0 = 0, x0 = 0;
  switch (anchor) {
    case 0: break;
    case 1: x0 = img.width - s; break;
    case 2: y0 = img.height - s; break;
    case 3: y0 = img.height - s, x0 = img.width - s; break;
    case 4: y0 = (img.height - s) / 2, x0 = (img.width - s) / 2; break;
    default: throw Error(ErrorCode::kInvalidArgument, "crop anchor must be 0..4");
  }
  Image out(s, s);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

Image elastic(const Image& img, const ElasticParams& p) {
  const std::size_t h = img.height, w = img.width;
  CounterRng rng(p.field_seed);
  std::vector<double> nx(h * w), ny(h * w);
  for (auto& v : nx) v = rng.uniform(-1.0, 1.0);
  for (auto& v : ny) v = rng.uniform(-1.0, 1.0);
  int ksize = static_cast<int>(8 * p.sigma + 1);
  if (ksize % 2 == 0) ++ksize;
  const auto kernel = gaussian_kernel(ksize, p.sigma);
  nx = blur_plane(nx, h, w, kernel);
  ny = blur_plane(ny, h, w, kernel);
  // amplitude is relative to the image side: normalized offsets α/H scaled to pixels
  const double sx = p.alpha / static_cast<double>(h) * static_cast<double>(w) / 2.0;
  const double sy = p.alpha / static_cast<double>(w) * static_cast<double>(h) / 2.0;
  Image out(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = reflect_coord(static_cast<double>(x) + sx * nx[y * w + x], static_cast<double>(w));
      const double fy = reflect_coord(static_cast<double>(y) + sy * ny[y * w + x], static_cast<double>(h));
      const auto x0 = std::min(static_cast<std::size_t>(fx), w - 1), y0 = std::min(static_cast<std::size_t>(fy), h - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double ax = fx - static_cast<double>(x0), ay = fy - static_cast<double>(y0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = (1 - ay) * ((1 - ax) * img.at(y0, x0, c) + ax * img.at(y0, x1, c)) +
                         ay * ((1 - ax) * img.at(y1, x0, c) + ax * img.at(y1, x1, c));
        out.at(y, x, c) = to_u8(v);
      }
    }
  }
  return out;
}

Image dilate(const Image& img, int k) {
  return morph(img, k, [](std::uint8_t a, std::uint8_t b) { return std::max(a, b); });
}

Image erode(const Image& img, int k) {
  return morph(img, k, [](std::uint8_t a, std::uint8_t b) { return std::min(a, b); });
}

Image opening(const Image& img, int k) { return dilate(erode(img, k), k); }
Image closing(const Image& img, int k) { return erode(dilate(img, k), k); }

Image gaussian_blur(const Image& img, int kernel, double sigma) {
  if (kernel < 1 || kernel % 2 == 0 || !(sigma > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "blur kernel must be odd and sigma > 0");
  }
  if (static_cast<std::size_t>(kernel / 2) >= std::min(img.height, img.width)) {
    throw Error(ErrorCode::kImageTooSmall, "image smaller than blur kernel radius");
  }
  const auto k = gaussian_kernel(kernel, sigma);
  Image out(img.height, img.width);
  std::vector<double> plane(img.height * img.width);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.pixels[i * 3 + c];
    auto b = blur_plane(plane, img.height, img.width, k);
    for (std::size_t i = 0; i < plane.size(); ++i) out.pixels[i * 3 + c] = to_u8(b[i]);
  }
  return out;
}

Image color_jitter(const Image& img, const JitterParams& p) {
  const std::size_t n = img.height * img.width;
  std::vector<double> f(img.pixels.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = img.pixels[i] / 255.0;
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };

  for (auto& v : f) v = clamp01(v * p.brightness);

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += gray(f[i * 3], f[i * 3 + 1], f[i * 3 + 2]);
  mean /= static_cast<double>(n);
  for (auto& v : f) v = clamp01(p.contrast * v + (1.0 - p.contrast) * mean);

  for (std::size_t i = 0; i < n; ++i) {
    const double g = gray(f[i * 3], f[i * 3 + 1], f[i * 3 + 2]);
    for (std::size_t c = 0; c < 3; ++c) f[i * 3 + c] = clamp01(p.saturation * f[i * 3 + c] + (1.0 - p.saturation) * g);
  }

  if (p.hue != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      double h, s, v;
      rgb_to_hsv(f[i * 3], f[i * 3 + 1], f[i * 3 + 2], h, s, v);
      h = std::fmod(h + p.hue + 1.0, 1.0);
      hsv_to_rgb(h, s, v, f[i * 3], f[i * 3 + 1], f[i * 3 + 2]);
    }
  }
  Image out(img.height, img.width);
  for (std::size_t i = 0; i < f.size(); ++i) out.pixels[i] = to_u8(f[i] * 255.0);
  return out;
}

Image affine(const Image& img, const TranslateParams& p) {
  const double w = static_cast<double>(img.width), h = static_cast<double>(img.height);
  const double cx = w / 2.0, cy = h / 2.0;
  const double tx = p.dx * w, ty = p.dy * h;
  // forward map: q = c + t + scale * [[1, tan(shear)], [0, 1]] (p - c)
  const double sh = std::tan(p.shear * std::numbers::pi / 180.0);
  const double inv_s = 1.0 / p.scale;
  Image out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double qx = static_cast<double>(x) + 0.5 - cx - tx;
      const double qy = static_cast<double>(y) + 0.5 - cy - ty;
      const double uy = qy * inv_s;
      const double ux = qx * inv_s - sh * uy;
      const double sx = std::floor(ux + cx), sy = std::floor(uy + cy);
      if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
      for (std::size_t c = 0; c < 3; ++c)
        out.at(y, x, c) = img.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), c);
    }
  }
  return out;
}

std::size_t cutout_side(const Image& img, double side_fraction) {
  const double m = static_cast<double>(std::min(img.height, img.width));
  const auto lo = static_cast<long>(std::ceil(0.1 * m)), hi = static_cast<long>(std::floor(0.5 * m));
  return static_cast<std::size_t>(std::clamp(std::lround(side_fraction * m), lo, hi));
}

Image cutout(const Image& img, const CutoutParams& p) {
  const std::size_t s = cutout_side(img, p.side);
  const std::size_t x0 = std::min(img.width - s, static_cast<std::size_t>(p.x * static_cast<double>(img.width - s + 1)));
  const std::size_t y0 =
      std::min(img.height - s, static_cast<std::size_t>(p.y * static_cast<double>(img.height - s + 1)));
  Image out = img;
  for (std::size_t y = y0; y < y0 + s; ++y)
    for (std::size_t x = x0; x < x0 + s; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = 0;
  return out;
}

const std::array<std::array<double, 3>, 3>& rgb_from_hed() {
  static const std::array<std::array<double, 3>, 3> m{{{0.65, 0.70, 0.29}, {0.07, 0.99, 0.11}, {0.27, 0.57, 0.78}}};
  return m;
}

const std::array<std::array<double, 3>, 3>& hed_from_rgb() {
  static const std::array<std::array<double, 3>, 3> inv = [] {
    const auto& a = rgb_from_hed();
    std::array<std::array<double, 3>, 3> r{};
    const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                       a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                       a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        // cofactor of (j, i)
        const int r0 = (j + 1) % 3, r1 = (j + 2) % 3, c0 = (i + 1) % 3, c1 = (i + 2) % 3;
        r[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / det;
      }
    return r;
  }();
  return inv;
}

Image hed_perturb(const Image& img, const HedParams& p) {
  const auto& to_hed = hed_from_rgb();
  const auto& to_rgb = rgb_from_hed();
  const double log_adjust = std::log(1e-6);
  Image out(img.height, img.width);
  const std::size_t n = img.height * img.width;
  for (std::size_t i = 0; i < n; ++i) {
    double od[3], stain[3] = {0, 0, 0};
    for (std::size_t c = 0; c < 3; ++c) od[c] = std::log(std::max(img.pixels[i * 3 + c] / 255.0, 1e-6)) / log_adjust;
    // row vector times matrix
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t c = 0; c < 3; ++c) stain[k] += od[c] * to_hed[c][k];
    for (std::size_t k = 0; k < 3; ++k) stain[k] = p.alpha[k] * stain[k] + p.beta[k];
    for (std::size_t c = 0; c < 3; ++c) {
      double log_rgb = 0.0;
      for (std::size_t k = 0; k < 3; ++k) log_rgb += stain[k] * to_rgb[k][c];
      out.pixels[i * 3 + c] = to_u8(std::exp(log_rgb * log_adjust) * 255.0);
    }
  }
  return out;
}

Image flip(const Image& img, bool horizontal) {
  Image out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::size_t sy = horizontal ? y : img.height - 1 - y;
      const std::size_t sx = horizontal ? img.width - 1 - x : x;
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  return out;
}

Image rotate90(const Image& img, int quarter_turns) {
  const int t = ((quarter_turns % 4) + 4) % 4;
  if (t == 0) return img;
  // one counter-clockwise quarter turn: out(y, x) = in(x, W - 1 - y)
  Image out(img.width, img.height);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(x, img.width - 1 - y, c);
  return rotate90(out, t - 1);
}

Image gamma_correct(const Image& img, double gamma) {
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) lut[static_cast<std::size_t>(v)] = to_u8(255.0 * std::pow(v / 255.0, gamma));
  Image out = img;
  for (auto& v : out.pixels) v = lut[v];
  return out;
}

Image invert(const Image& img) {
  Image out = img;
  for (auto& v : out.pixels) v = static_cast<std::uint8_t>(255 - v);
  return out;
}

Image apply(const Image& img, const TransformSpec& spec) {
  check_size(img);
  spec.validate();
  auto as = [&spec]<typename P>() -> const P& {
    if (auto* p = std::get_if<P>(&spec.params)) return *p;
    throw Error(ErrorCode::kInvalidArgument, std::string("parameters do not match transform ") + to_string(spec.kind));
  };
  switch (spec.kind) {
    case TransformKind::kCrop: return crop(img, as.operator()<CropParams>().anchor);
    case TransformKind::kElastic: return elastic(img, as.operator()<ElasticParams>());
    case TransformKind::kDilation: return dilate(img, as.operator()<MorphParams>().kernel);
    case TransformKind::kErosion: return erode(img, as.operator()<MorphParams>().kernel);
    case TransformKind::kOpening: return opening(img, as.operator()<MorphParams>().kernel);
    case TransformKind::kClosing: return closing(img, as.operator()<MorphParams>().kernel);
    case TransformKind::kBlur: {
      const auto& p = as.operator()<BlurParams>();
      return gaussian_blur(img, p.kernel, p.sigma);
    }
    case TransformKind::kJitter: return color_jitter(img, as.operator()<JitterParams>());
    case TransformKind::kTranslate: return affine(img, as.operator()<TranslateParams>());
    case TransformKind::kCutout: return cutout(img, as.operator()<CutoutParams>());
    case TransformKind::kHed: return hed_perturb(img, as.operator()<HedParams>());
    case TransformKind::kFlip: return flip(img, as.operator()<FlipParams>().horizontal);
    case TransformKind::kRotate: return rotate90(img, as.operator()<RotateParams>().quarter_turns);
    case TransformKind::kGamma: return gamma_correct(img, as.operator()<GammaParams>().gamma);
  }
  throw Error(ErrorCode::kUnknownKind, "unhandled transform");
}

std::vector<double> to_unit_floats(const Image& img) {
  std::vector<double> out(img.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.pixels[i] / 255.0;
  return out;
}

}  // namespace embench
