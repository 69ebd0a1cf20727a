#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fcs/errors.hpp"
#include "fcs/rng.hpp"

namespace fcs {

inline constexpr int kMinImageSide = 32;

/// Interleaved H x W x 3 float image, values nominally in [0, 1].
template <typename Scalar>
struct Image {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  int height = 0;
  int width = 0;
  Vec values;

  Image() = default;
  Image(int h, int w) : height(h), width(w), values(Vec::Zero(Eigen::Index(h) * w * 3)) {}

  Eigen::Index size() const { return values.size(); }
  Eigen::Index pixels() const { return Eigen::Index(height) * width; }
  static Eigen::Index index(int width, int y, int x, int c) { return (Eigen::Index(y) * width + x) * 3 + c; }

  Scalar& at(int y, int x, int c) { return values[index(width, y, x, c)]; }
  Scalar at(int y, int x, int c) const { return values[index(width, y, x, c)]; }

  bool same_shape(const Image& other) const { return height == other.height && width == other.width; }

  template <typename Other>
  Image<Other> cast() const {
    Image<Other> out;
    out.height = height;
    out.width = width;
    out.values = values.template cast<Other>();
    return out;
  }
};

template <typename Scalar>
bool values_in_unit_range(const Image<Scalar>& img) {
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const Scalar v = img.values[i];
    if (!std::isfinite(v) || v < Scalar(0) || v > Scalar(1)) return false;
  }
  return true;
}

/// Enforces the invariants of any image entering the pipeline.
template <typename Scalar>
void require_pipeline_image(const Image<Scalar>& img, const std::string& what = "image") {
  if (img.height < kMinImageSide || img.width < kMinImageSide)
    fail(Errc::invalid_input, what + " must be at least 32x32, got " + std::to_string(img.height) + "x" +
                                  std::to_string(img.width));
  if (img.size() != img.pixels() * 3) fail(Errc::invalid_input, what + " has inconsistent storage");
  if (!values_in_unit_range(img)) fail(Errc::invalid_input, what + " has values outside [0, 1]");
}

/// Procedural content image: smooth gradients, a few soft blobs and stripes.
/// Used for desk-scale fixtures where no photographs are available.
template <typename Scalar>
Image<Scalar> synthetic_content(std::uint64_t seed, int height, int width) {
  Rng rng(derive_seed(seed, "synthetic-content"));
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.3 + 0.4 * uniform01(rng);
    gx[c] = 0.4 * (uniform01(rng) - 0.5);
    gy[c] = 0.4 * (uniform01(rng) - 0.5);
  }
  struct Blob { double cx, cy, r, amp[3]; };
  Blob blobs[3];
  for (auto& b : blobs) {
    b.cx = uniform01(rng);
    b.cy = uniform01(rng);
    b.r = 0.08 + 0.2 * uniform01(rng);
    for (double& a : b.amp) a = 0.5 * (uniform01(rng) - 0.5);
  }
  const double freq = 2.0 + 6.0 * uniform01(rng);
  const double angle = std::numbers::pi * uniform01(rng);
  const double stripe = 0.08 * uniform01(rng);

  Image<Scalar> img(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width, v = (y + 0.5) / height;
      const double s = stripe * std::sin(2 * std::numbers::pi * freq * (u * std::cos(angle) + v * std::sin(angle)));
      for (int c = 0; c < 3; ++c) {
        double val = base[c] + gx[c] * (u - 0.5) + gy[c] * (v - 0.5) + s;
        for (const auto& b : blobs) {
          const double d2 = (u - b.cx) * (u - b.cx) + (v - b.cy) * (v - b.cy);
          val += b.amp[c] * std::exp(-d2 / (2 * b.r * b.r));
        }
        img.at(y, x, c) = Scalar(std::clamp(val, 0.02, 0.98));
      }
    }
  }
  return img;
}

}  // namespace fcs
