#include "personmae/image.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

namespace personmae {
namespace {

struct AxisSample {
  int lo;
  int hi;
  double frac;
};

std::vector<AxisSample> axis_samples(int in_size, int out_size) {
  std::vector<AxisSample> samples(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const int lo = static_cast<int>(std::floor(src));
    samples[i] = {lo, std::min(lo + 1, in_size - 1), src - lo};
  }
  return samples;
}

Image from_rgb8(const std::vector<unsigned char>& buffer, int height, int width) {
  Image image(height, width, 3);
  for (int y = 0; y < height; ++y) {
    for (int k = 0; k < width * 3; ++k) {
      image.data(y, k) = buffer[static_cast<std::size_t>(y) * width * 3 + k] / 255.0;
    }
  }
  return image;
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw std::runtime_error(fmt::format("cannot decode PNG {}: {}", path.string(), png.message));
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    throw std::runtime_error(fmt::format("cannot decode PNG {}: {}", path.string(), png.message));
  }
  return from_rgb8(buffer, static_cast<int>(png.height), static_cast<int>(png.width));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr info) {
  auto* manager = reinterpret_cast<JpegErrorManager*>(info->err);
  std::longjmp(manager->jump, 1);
}

Image read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) {
    throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  }
  jpeg_decompress_struct info{};
  JpegErrorManager error{};
  info.err = jpeg_std_error(&error.base);
  error.base.error_exit = jpeg_error_exit;
  // Locals touched after setjmp returns must not live in registers.
  std::vector<unsigned char> buffer;
  int height = 0;
  int width = 0;
  if (setjmp(error.jump)) {
    jpeg_destroy_decompress(&info);
    throw std::runtime_error(fmt::format("cannot decode JPEG {}", path.string()));
  }
  jpeg_create_decompress(&info);
  jpeg_stdio_src(&info, file.get());
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  height = static_cast<int>(info.output_height);
  width = static_cast<int>(info.output_width);
  buffer.resize(static_cast<std::size_t>(height) * width * 3);
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = buffer.data() + static_cast<std::size_t>(info.output_scanline) * width * 3;
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return from_rgb8(buffer, height, width);
}

}  // namespace

Image resize_bilinear(const Image& image, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) {
    throw std::invalid_argument("resize target must be at least 1x1");
  }
  const auto rows = axis_samples(image.height, out_height);
  const auto cols = axis_samples(image.width, out_width);
  const int c = image.channels;
  Image out(out_height, out_width, c);
  for (int y = 0; y < out_height; ++y) {
    const auto& r = rows[y];
    for (int x = 0; x < out_width; ++x) {
      const auto& s = cols[x];
      for (int ch = 0; ch < c; ++ch) {
        const double top = image.at(r.lo, s.lo, ch) + (image.at(r.lo, s.hi, ch) - image.at(r.lo, s.lo, ch)) * s.frac;
        const double bottom = image.at(r.hi, s.lo, ch) + (image.at(r.hi, s.hi, ch) - image.at(r.hi, s.lo, ch)) * s.frac;
        out.at(y, x, ch) = top + (bottom - top) * r.frac;
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width, image.channels);
  for (int x = 0; x < image.width; ++x) {
    const int src = image.width - 1 - x;
    out.data.middleCols(x * image.channels, image.channels) = image.data.middleCols(src * image.channels, image.channels);
  }
  return out;
}

Image crop(const Image& image, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > image.height || left + width > image.width) {
    throw std::invalid_argument(fmt::format("crop window ({}, {}, {}, {}) outside {}x{} image", top, left, height,
                                            width, image.height, image.width));
  }
  Image out(height, width, image.channels);
  out.data = image.data.block(top, left * image.channels, height, width * image.channels);
  return out;
}

Image read_image(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".png") {
    return read_png(path);
  }
  if (ext == ".jpg" || ext == ".jpeg") {
    return read_jpeg(path);
  }
  throw std::runtime_error(fmt::format("unsupported image extension: {}", path.string()));
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 3) {
    throw std::invalid_argument("write_png expects a 3-channel image");
  }
  std::vector<unsigned char> buffer(static_cast<std::size_t>(image.height) * image.width * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int k = 0; k < image.width * 3; ++k) {
      const double v = std::clamp(image.data(y, k), 0.0, 1.0);
      buffer[static_cast<std::size_t>(y) * image.width * 3 + k] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error(fmt::format("cannot write PNG {}: {}", path.string(), png.message));
  }
}

}  // namespace personmae
