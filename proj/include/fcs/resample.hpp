#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "fcs/image.hpp"

namespace fcs {

/// A linear resampling operator stored as a sparse matrix over pixels
/// (identical weights for every channel). Forward application and its exact
/// transpose are both provided, so gradients can be pulled back through crops,
/// warps and resizes.
template <typename Scalar>
class ResamplePlan {
 public:
  int in_height = 0, in_width = 0, out_height = 0, out_width = 0;

  /// Output = bilinear resize (half-pixel centers, edge clamping).
  static ResamplePlan bilinear_resize(int in_h, int in_w, int out_h, int out_w) {
    ResamplePlan plan(in_h, in_w, out_h, out_w);
    const double sy_scale = double(in_h) / out_h, sx_scale = double(in_w) / out_w;
    for (int y = 0; y < out_h; ++y) {
      const double sy = std::clamp((y + 0.5) * sy_scale - 0.5, 0.0, double(in_h - 1));
      for (int x = 0; x < out_w; ++x) {
        const double sx = std::clamp((x + 0.5) * sx_scale - 0.5, 0.0, double(in_w - 1));
        plan.add_bilinear(sx, sy, 0, 0, in_w, in_h);
        plan.row_start_.push_back(int(plan.source_.size()));
      }
    }
    return plan;
  }

  /// Output is a win_h x win_w window (top-left at x0, y0 of the input) whose
  /// pixel p shows the window sampled at dst_to_src * p. Samples falling
  /// outside the window read as zero.
  static ResamplePlan warped_window(int in_h, int in_w, int x0, int y0, int win_h, int win_w,
                                    const Eigen::Matrix3d& dst_to_src) {
    if (x0 < 0 || y0 < 0 || x0 + win_w > in_w || y0 + win_h > in_h)
      fail(Errc::invalid_config, "sampling window lies outside the source image");
    ResamplePlan plan(in_h, in_w, win_h, win_w);
    for (int y = 0; y < win_h; ++y) {
      for (int x = 0; x < win_w; ++x) {
        const Eigen::Vector3d q = dst_to_src * Eigen::Vector3d(x, y, 1.0);
        if (std::abs(q.z()) > 1e-12) plan.add_bilinear(q.x() / q.z(), q.y() / q.z(), x0, y0, win_w, win_h);
        plan.row_start_.push_back(int(plan.source_.size()));
      }
    }
    return plan;
  }

  /// Plain crop: output pixel (y, x) = input (y0 + y, x0 + x).
  static ResamplePlan crop(int in_h, int in_w, int x0, int y0, int size) {
    return warped_window(in_h, in_w, x0, y0, size, size, Eigen::Matrix3d::Identity());
  }

  Image<Scalar> apply(const Image<Scalar>& in) const {
    Image<Scalar> out(out_height, out_width);
    apply_into(in, out.values.data());
    return out;
  }

  /// Writes out_height * out_width * 3 values starting at `out`.
  void apply_into(const Image<Scalar>& in, Scalar* out) const {
    const Scalar* src = in.values.data();
    const int n = out_height * out_width;
    for (int p = 0; p < n; ++p) {
      Scalar r = 0, g = 0, b = 0;
      for (int k = row_start_[p]; k < row_start_[p + 1]; ++k) {
        const Scalar w = weight_[k];
        const Scalar* s = src + 3 * Eigen::Index(source_[k]);
        r += w * s[0];
        g += w * s[1];
        b += w * s[2];
      }
      out[3 * p] = r;
      out[3 * p + 1] = g;
      out[3 * p + 2] = b;
    }
  }

  /// grad_in += Plan^T * grad_out.
  void accumulate_transpose(const Scalar* grad_out, Image<Scalar>& grad_in) const {
    Scalar* dst = grad_in.values.data();
    const int n = out_height * out_width;
    for (int p = 0; p < n; ++p) {
      for (int k = row_start_[p]; k < row_start_[p + 1]; ++k) {
        const Scalar w = weight_[k];
        Scalar* d = dst + 3 * Eigen::Index(source_[k]);
        d[0] += w * grad_out[3 * p];
        d[1] += w * grad_out[3 * p + 1];
        d[2] += w * grad_out[3 * p + 2];
      }
    }
  }

  std::size_t tap_count() const { return source_.size(); }

 private:
  ResamplePlan(int in_h, int in_w, int out_h, int out_w)
      : in_height(in_h), in_width(in_w), out_height(out_h), out_width(out_w) {
    row_start_.reserve(std::size_t(out_h) * out_w + 1);
    row_start_.push_back(0);
    source_.reserve(std::size_t(out_h) * out_w * 4);
    weight_.reserve(std::size_t(out_h) * out_w * 4);
  }

  // Bilinear taps for a sample at (sx, sy) in window coordinates; taps outside
  // the window_w x window_h window are dropped (zero padding), zero-weight taps
  // are skipped so integer positions reproduce the source exactly.
  void add_bilinear(double sx, double sy, int x0, int y0, int window_w, int window_h) {
    const double fx0 = std::floor(sx), fy0 = std::floor(sy);
    const int ix = int(fx0), iy = int(fy0);
    const double fx = sx - fx0, fy = sy - fy0;
    const double wx[2] = {1.0 - fx, fx}, wy[2] = {1.0 - fy, fy};
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = wy[dy] * wx[dx];
        const int px = ix + dx, py = iy + dy;
        if (w == 0.0 || px < 0 || py < 0 || px >= window_w || py >= window_h) continue;
        source_.push_back((y0 + py) * in_width + (x0 + px));
        weight_.push_back(Scalar(w));
      }
    }
  }

  std::vector<int> row_start_;
  std::vector<int> source_;
  std::vector<Scalar> weight_;
};

}  // namespace fcs
