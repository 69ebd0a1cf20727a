#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

#include "fcs/errors.hpp"
#include "fcs/image.hpp"
#include "fcs/resample.hpp"
#include "fcs/rng.hpp"

namespace fcs {

/// Patch sampling for the patch-wise directional loss.
struct PatchConfig {
  int n_patches = 16;
  int patch_size = 128;
  double tau = 0.7;         // threshold below which a patch contributes zero
  double distortion = 0.5;  // perspective strength in [0, 1]
  std::uint64_t seed = 0;

  void validate() const {
    if (n_patches < 1) fail(Errc::invalid_config, "n_patches must be positive");
    if (patch_size < 1) fail(Errc::invalid_config, "patch_size must be positive");
    if (!(tau >= 0.0)) fail(Errc::invalid_config, "tau must be >= 0");
    if (!(distortion >= 0.0 && distortion <= 1.0)) fail(Errc::invalid_config, "distortion must lie in [0, 1]");
  }
};

struct CropRect {
  int x0 = 0, y0 = 0, size = 0;
  bool operator==(const CropRect&) const = default;
};

template <typename Scalar>
struct PatchSet {
  std::vector<Image<Scalar>> patches;
  std::vector<CropRect> rects;
  std::uint64_t seed = 0;
};

using Corners = std::array<Eigen::Vector2d, 4>;

/// Homography H (h33 = 1) with H * src[k] ~ dst[k], from the 8x8 linear
/// system of the four correspondences.
inline Eigen::Matrix3d solve_homography(const Corners& src, const Corners& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int k = 0; k < 4; ++k) {
    const double x = src[k].x(), y = src[k].y(), u = dst[k].x(), v = dst[k].y();
    a.row(2 * k) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * k + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b[2 * k] = u;
    b[2 * k + 1] = v;
  }
  const Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (lu.rank() < 8) fail(Errc::numeric_error, "degenerate corner correspondence");
  const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  Eigen::Matrix3d m;
  m << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0;
  return m;
}

/// Corners in pixel-center coordinates, clockwise from top-left.
inline Corners rect_corners(int height, int width) {
  return {Eigen::Vector2d(0, 0), Eigen::Vector2d(width - 1, 0), Eigen::Vector2d(width - 1, height - 1),
          Eigen::Vector2d(0, height - 1)};
}

inline bool convex_quad(const Corners& q) {
  int sign = 0;
  for (int k = 0; k < 4; ++k) {
    const Eigen::Vector2d e1 = q[(k + 1) % 4] - q[k], e2 = q[(k + 2) % 4] - q[(k + 1) % 4];
    const double cross = e1.x() * e2.y() - e1.y() * e2.x();
    if (std::abs(cross) < 1e-9) return false;
    const int s = cross > 0 ? 1 : -1;
    if (sign != 0 && s != sign) return false;
    sign = s;
  }
  return true;
}

struct PerspectiveWarp {
  Eigen::Matrix3d src_to_dst = Eigen::Matrix3d::Identity();
  bool identity = true;

  Eigen::Matrix3d dst_to_src() const { return identity ? Eigen::Matrix3d::Identity() : Eigen::Matrix3d(src_to_dst.inverse()); }
};

/// Moves every corner of a height x width patch by up to distortion * side / 2
/// per axis and solves for the homography. Degenerate draws are resampled a
/// bounded number of times.
inline PerspectiveWarp sample_perspective(int height, int width, double distortion, std::uint64_t seed) {
  if (!(distortion >= 0.0 && distortion <= 1.0)) fail(Errc::invalid_config, "distortion must lie in [0, 1]");
  if (distortion == 0.0) return {};
  const Corners src = rect_corners(height, width);
  const double dx = distortion * width / 2.0, dy = distortion * height / 2.0;
  Rng rng(derive_seed(seed, "perspective"));
  constexpr int kMaxAttempts = 16;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Corners dst = src;
    for (auto& c : dst) {
      c.x() += dx * (2.0 * uniform01(rng) - 1.0);
      c.y() += dy * (2.0 * uniform01(rng) - 1.0);
    }
    if (!convex_quad(dst)) continue;
    try {
      const Eigen::Matrix3d h = solve_homography(src, dst);
      if (std::abs(h.determinant()) < 1e-9) continue;
      return {h, false};
    } catch (const Error&) {
      continue;
    }
  }
  fail(Errc::numeric_error, "could not draw a non-degenerate perspective after 16 attempts");
}

/// Crop rectangle of patch `index`; every patch index reads its own RNG substream.
inline CropRect sample_crop(int height, int width, int size, std::uint64_t seed, int index) {
  if (size > std::min(height, width) || size < 1)
    fail(Errc::invalid_config, "patch size " + std::to_string(size) + " does not fit a " + std::to_string(height) + "x" +
                                   std::to_string(width) + " image");
  Rng rng(derive_seed(seed, fnv1a64("crop"), std::uint64_t(index)));
  return {uniform_index(rng, width - size + 1), uniform_index(rng, height - size + 1), size};
}

inline std::uint64_t perspective_seed(std::uint64_t seed, int index) {
  return derive_seed(seed, fnv1a64("warp"), std::uint64_t(index));
}

template <typename Scalar>
PatchSet<Scalar> random_crops(const Image<Scalar>& img, int n, int size, std::uint64_t seed) {
  if (n < 0) fail(Errc::invalid_config, "patch count must be non-negative");
  PatchSet<Scalar> set;
  set.seed = seed;
  for (int i = 0; i < n; ++i) {
    const CropRect r = sample_crop(img.height, img.width, size, seed, i);
    set.rects.push_back(r);
    set.patches.push_back(ResamplePlan<Scalar>::crop(img.height, img.width, r.x0, r.y0, r.size).apply(img));
  }
  return set;
}

/// Bilinear perspective resampling with zero padding; distortion 0 returns
/// the input unchanged.
template <typename Scalar>
Image<Scalar> random_perspective(const Image<Scalar>& patch, double distortion, std::uint64_t seed) {
  const PerspectiveWarp warp = sample_perspective(patch.height, patch.width, distortion, seed);
  if (warp.identity) return patch;
  return ResamplePlan<Scalar>::warped_window(patch.height, patch.width, 0, 0, patch.height, patch.width, warp.dst_to_src())
      .apply(patch);
}

/// Linear maps from a height x width image to each augmented patch: crop i
/// followed by perspective warp i. Equivalent to random_crops then
/// random_perspective(patch_i, distortion, perspective_seed(seed, i)).
template <typename Scalar>
std::vector<ResamplePlan<Scalar>> patch_plans(int height, int width, const PatchConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<ResamplePlan<Scalar>> plans;
  plans.reserve(std::size_t(cfg.n_patches));
  for (int i = 0; i < cfg.n_patches; ++i) {
    const CropRect r = sample_crop(height, width, cfg.patch_size, seed, i);
    const PerspectiveWarp w = sample_perspective(r.size, r.size, cfg.distortion, perspective_seed(seed, i));
    plans.push_back(ResamplePlan<Scalar>::warped_window(height, width, r.x0, r.y0, r.size, r.size, w.dst_to_src()));
  }
  return plans;
}

}  // namespace fcs
