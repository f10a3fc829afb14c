#include <png.h>

#include "embench/augment.hpp"

namespace embench {

Image read_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::kIo, "cannot read PNG " + path + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Image out(image.height, image.width);
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::kIo, "cannot decode PNG " + path + ": " + msg);
  }
  return out;
}

void write_png(const std::string& path, const Image& img) {
  if (img.pixels.size() != img.height * img.width * 3) {
    throw Error(ErrorCode::kShapeMismatch, "pixel buffer does not match image size");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, "cannot write PNG " + path + ": " + image.message);
  }
}

}  // namespace embench
