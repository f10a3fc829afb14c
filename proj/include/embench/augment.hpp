#pragma once

// Stochastic image transformations for embedding invariance tests. Every
// transform is a pure function of (image, spec); sampling a spec is a pure
// function of (kind, seed).

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "embench/common.hpp"
#include "json.hpp"

namespace embench {

// 8-bit RGB, row-major, channel-last.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w * 3, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  bool operator==(const Image&) const = default;
};

enum class TransformKind {
  kCrop,
  kElastic,
  kDilation,
  kErosion,
  kOpening,
  kClosing,
  kBlur,
  kJitter,
  kTranslate,
  kCutout,
  kHed,
  kFlip,
  kRotate,
  kGamma,
};

const std::vector<TransformKind>& all_transform_kinds();
const char* to_string(TransformKind kind);
// Throws kUnknownKind.
TransformKind parse_transform_kind(std::string_view name);

struct CropParams {
  // 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right, 4 center
  int anchor = 4;
};
struct ElasticParams {
  double alpha = 250.0;
  double sigma = 6.0;
  std::uint64_t field_seed = 0;
};
struct MorphParams {
  int kernel = 3;
};
struct BlurParams {
  int kernel = 15;
  double sigma = 3.0;
};
struct JitterParams {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;
};
struct TranslateParams {
  // shifts as fractions of width / height, |dx| <= 0.2
  double dx = 0.0;
  double dy = 0.0;
  double scale = 1.0;
  // degrees
  double shear = 0.0;
};
struct CutoutParams {
  // side as a fraction of min(H, W)
  double side = 0.1;
  // top-left corner as a fraction of the free range
  double x = 0.0;
  double y = 0.0;
};
struct HedParams {
  std::array<double, 3> alpha{1.0, 1.0, 1.0};
  std::array<double, 3> beta{0.0, 0.0, 0.0};
};
struct FlipParams {
  bool horizontal = true;
};
struct RotateParams {
  int quarter_turns = 1;
};
struct GammaParams {
  double gamma = 1.0;
};

using TransformParams = std::variant<CropParams, ElasticParams, MorphParams, BlurParams, JitterParams, TranslateParams,
                                     CutoutParams, HedParams, FlipParams, RotateParams, GammaParams>;

struct TransformSpec {
  TransformKind kind = TransformKind::kFlip;
  TransformParams params = FlipParams{};
  std::uint64_t seed = 0;

  // Throws kInvalidArgument when parameters fall outside the sampling ranges.
  void validate() const;
  nlohmann::json to_json() const;
};

struct AugmentKnobs {
  double hed_sigma = 0.05;
  double blur_sigma = 3.0;
};

TransformSpec sample_spec(TransformKind kind, std::uint64_t seed, const AugmentKnobs& knobs = {});

// Seed for one (sample, transform) pair under a global seed.
std::uint64_t transform_seed(std::uint64_t global_seed, std::string_view sample_id, TransformKind kind);

// Throws kImageTooSmall when H or W < 8.
Image apply(const Image& img, const TransformSpec& spec);

// Primitives (also used by apply).
Image crop(const Image& img, int anchor);
Image elastic(const Image& img, const ElasticParams& p);
Image dilate(const Image& img, int k);
Image erode(const Image& img, int k);
Image opening(const Image& img, int k);
Image closing(const Image& img, int k);
Image gaussian_blur(const Image& img, int kernel, double sigma);
Image color_jitter(const Image& img, const JitterParams& p);
Image affine(const Image& img, const TranslateParams& p);
Image cutout(const Image& img, const CutoutParams& p);
Image hed_perturb(const Image& img, const HedParams& p);
Image flip(const Image& img, bool horizontal);
Image rotate90(const Image& img, int quarter_turns);
Image gamma_correct(const Image& img, double gamma);
Image invert(const Image& img);

// Cutout square side in pixels for an image.
std::size_t cutout_side(const Image& img, double side_fraction);

// Stain matrices (rows: haematoxylin, eosin, DAB in RGB optical density).
const std::array<std::array<double, 3>, 3>& rgb_from_hed();
const std::array<std::array<double, 3>, 3>& hed_from_rgb();

// PNG I/O (RGB or RGBA/gray converted to RGB on read).
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

// Flattens to [0, 1] doubles, channel-last, for differentiable pipelines.
std::vector<double> to_unit_floats(const Image& img);

}  // namespace embench
