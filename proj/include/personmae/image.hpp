#pragma once

#include "personmae/types.hpp"

#include <filesystem>

namespace personmae {

/// Interleaved H x W x C image with values in [0, 1].
/// Row y of `data` holds pixels (y, 0..W-1), channels contiguous per pixel.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> data;

  Image() = default;
  Image(int h, int w, int c = 3) : height(h), width(w), channels(c), data(h, w * c) { data.setZero(); }

  double& at(int y, int x, int c) { return data(y, x * channels + c); }
  double at(int y, int x, int c) const { return data(y, x * channels + c); }

  bool operator==(const Image& other) const {
    return height == other.height && width == other.width && channels == other.channels &&
           (data == other.data).all();
  }
};

/// Bilinear resize with half-pixel centres and edge clamping.
/// Resizing to the same size is the identity.
Image resize_bilinear(const Image& image, int out_height, int out_width);

Image flip_horizontal(const Image& image);

/// Copies the window [top, top+height) x [left, left+width); the window must lie inside the image.
Image crop(const Image& image, int top, int left, int height, int width);

/// Reads PNG or JPEG into a 3-channel image. Throws std::runtime_error if undecodable.
Image read_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG, rounding clamp(v, 0, 1) * 255.
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace personmae
