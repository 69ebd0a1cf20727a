#pragma once

// 8-bit RGB PNG I/O. Values map to [0, 1] by division by 255 on read and by
// round-half-up of v * 255 on write.

#include <png.h>

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fcs/errors.hpp"
#include "fcs/file_util.hpp"
#include "fcs/image.hpp"

namespace fcs {

inline std::uint8_t quantize_channel(double v) {
  return std::uint8_t(std::clamp(std::floor(v * 255.0 + 0.5), 0.0, 255.0));
}

template <typename Scalar>
std::vector<std::uint8_t> to_rgb8(const Image<Scalar>& img) {
  std::vector<std::uint8_t> bytes(std::size_t(img.size()));
  for (Eigen::Index i = 0; i < img.size(); ++i) bytes[std::size_t(i)] = quantize_channel(double(img.values[i]));
  return bytes;
}

template <typename Scalar>
Image<Scalar> from_rgb8(const std::vector<std::uint8_t>& bytes, int height, int width) {
  Image<Scalar> img(height, width);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.values[i] = Scalar(bytes[std::size_t(i)]) / Scalar(255);
  return img;
}

inline void write_png_rgb8(const std::vector<std::uint8_t>& bytes, int height, int width, const std::filesystem::path& path) {
  create_parent_directories(path);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(width);
  image.height = png_uint_32(height);
  image.format = PNG_FORMAT_RGB;
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  if (!png_image_write_to_file(&image, tmp.c_str(), 0, bytes.data(), 0, nullptr))
    fail(Errc::io_error, "cannot write " + path.string() + ": " + image.message);
  replace_file(tmp, path);
}

template <typename Scalar>
void write_png(const Image<Scalar>& img, const std::filesystem::path& path) {
  write_png_rgb8(to_rgb8(img), img.height, img.width, path);
}

template <typename Scalar>
Image<Scalar> read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    fail(Errc::io_error, "cannot read " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(Errc::io_error, "cannot decode " + path.string() + ": " + image.message);
  }
  return from_rgb8<Scalar>(bytes, int(image.height), int(image.width));
}

/// Scatter plot of 2-D points colored by integer group, written as PNG.
inline void write_scatter_png(const Eigen::MatrixXd& coords, const std::vector<int>& groups, const std::filesystem::path& path,
                              int size = 512) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 12> kPalette = {{{31, 119, 180},  {255, 127, 14}, {44, 160, 44},
                                                                            {214, 39, 40},   {148, 103, 189}, {140, 86, 75},
                                                                            {227, 119, 194}, {127, 127, 127}, {188, 189, 34},
                                                                            {23, 190, 207},  {0, 0, 128},    {128, 128, 0}}};
  std::vector<std::uint8_t> px(std::size_t(size) * size * 3, 255);
  if (coords.rows() > 0) {
    const Eigen::Vector2d lo = coords.colwise().minCoeff(), hi = coords.colwise().maxCoeff();
    const Eigen::Vector2d span = (hi - lo).cwiseMax(1e-12);
    const double margin = 12.0, extent = size - 2 * margin;
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
      const int cx = int(std::lround(margin + (coords(i, 0) - lo.x()) / span.x() * extent));
      const int cy = int(std::lround(margin + (1.0 - (coords(i, 1) - lo.y()) / span.y()) * extent));
      const auto& color = kPalette[std::size_t(groups.empty() ? 0 : groups[std::size_t(i)]) % kPalette.size()];
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int x = cx + dx, y = cy + dy;
          if (x < 0 || y < 0 || x >= size || y >= size || dx * dx + dy * dy > 5) continue;
          for (int c = 0; c < 3; ++c) px[(std::size_t(y) * size + x) * 3 + c] = color[c];
        }
    }
  }
  write_png_rgb8(px, size, size, path);
}

}  // namespace fcs
