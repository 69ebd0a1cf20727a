#pragma once

#include <Eigen/Core>

#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcs/errors.hpp"
#include "fcs/image.hpp"
#include "fcs/resample.hpp"
#include "fcs/rng.hpp"

namespace fcs {

inline constexpr int kEmbedDim = 512;
inline constexpr int kStyleDim = 100;
inline constexpr int kEmbedGrid = 32;
inline constexpr std::uint64_t kToyBackendSeed = 0x5eed;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Lowercased whitespace tokens.
inline std::vector<std::string> tokenize(std::string_view prompt) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : prompt) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(char(std::tolower(c)));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

/// Joint text/image embedder. Outputs are unit-norm and deterministic;
/// implementations are immutable after construction.
template <typename Scalar>
class EmbedderBackend {
 public:
  using CotangentFn = std::function<Mat<Scalar>(const Mat<Scalar>& embeddings)>;

  virtual ~EmbedderBackend() = default;

  virtual int dim() const = 0;
  virtual std::string fingerprint() const = 0;
  virtual Vec<Scalar> embed_text(std::string_view prompt) const = 0;

  /// One unit-norm column per image.
  virtual Mat<Scalar> embed_images(std::span<const Image<Scalar>> images) const = 0;

  /// Reverse-mode pass: embeds `images`, obtains dL/d(embeddings) from
  /// `cotangent`, and writes dL/d(image) into `image_grads`. Returns the
  /// embeddings.
  virtual Mat<Scalar> embed_images_vjp(std::span<const Image<Scalar>> images, const CotangentFn& cotangent,
                                       std::vector<Image<Scalar>>& image_grads) const = 0;

  Vec<Scalar> embed_image(const Image<Scalar>& image) const {
    return embed_images(std::span<const Image<Scalar>>(&image, 1)).col(0);
  }
};

/// Style application network: (content, style embedding) -> stylized image.
template <typename Scalar>
class StylizerBackend {
 public:
  virtual ~StylizerBackend() = default;

  virtual int style_dim() const = 0;
  virtual std::string fingerprint() const = 0;
  virtual Image<Scalar> apply(const Image<Scalar>& content, const Vec<Scalar>& style) const = 0;

  /// Gradient of <grad_out, apply(content, style)> with respect to style.
  virtual Vec<Scalar> apply_vjp(const Image<Scalar>& content, const Vec<Scalar>& style,
                                const Image<Scalar>& grad_out) const = 0;
};

/// Embedder whose image branch is resize-to-grid, center, project, normalize,
/// and whose text branch sums per-token vectors and normalizes. Subclasses
/// choose where token vectors and the projection come from.
template <typename Scalar>
class LinearEmbedder : public EmbedderBackend<Scalar> {
 public:
  using typename EmbedderBackend<Scalar>::CotangentFn;

  int dim() const override { return int(projection_.rows()); }

  Vec<Scalar> embed_text(std::string_view prompt) const override {
    const auto tokens = tokenize(prompt);
    if (tokens.empty()) fail(Errc::invalid_input, "prompt is empty");
    Vec<double> sum = Vec<double>::Zero(dim());
    for (const auto& t : tokens) sum += token_vector(t);
    const double n = sum.norm();
    if (!(n > 1e-12)) fail(Errc::numeric_error, "token vectors of '" + std::string(prompt) + "' cancel out");
    return (sum / n).template cast<Scalar>();
  }

  Mat<Scalar> embed_images(std::span<const Image<Scalar>> images) const override {
    Mat<Scalar> z = projection_ * features(images);
    for (Eigen::Index j = 0; j < z.cols(); ++j) z.col(j) /= column_norm(z, j);
    return z;
  }

  Mat<Scalar> embed_images_vjp(std::span<const Image<Scalar>> images, const CotangentFn& cotangent,
                               std::vector<Image<Scalar>>& image_grads) const override {
    const Mat<Scalar> feats = features(images);
    Mat<Scalar> e = projection_ * feats;
    Vec<Scalar> norms(e.cols());
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      norms[j] = column_norm(e, j);
      e.col(j) /= norms[j];
    }
    Mat<Scalar> g = cotangent(e);
    // d(z/|z|) = (I - e e^T) dz / |z|
    for (Eigen::Index j = 0; j < e.cols(); ++j) g.col(j) = (g.col(j) - e.col(j) * e.col(j).dot(g.col(j))) / norms[j];
    const Mat<Scalar> grad_feats = projection_.transpose() * g;

    image_grads.resize(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      image_grads[i] = Image<Scalar>(images[i].height, images[i].width);
      const auto plan = ResamplePlan<Scalar>::bilinear_resize(images[i].height, images[i].width, grid_, grid_);
      plan.accumulate_transpose(grad_feats.col(Eigen::Index(i)).data(), image_grads[i]);
    }
    return e;
  }

  const Mat<Scalar>& projection() const { return projection_; }
  int grid() const { return grid_; }

 protected:
  LinearEmbedder(Mat<Scalar> projection, int grid) : projection_(std::move(projection)), grid_(grid) {}

  /// Unit-norm (or at least nonzero) vector for one lowercase token.
  virtual Vec<double> token_vector(const std::string& token) const = 0;

 private:
  static Scalar column_norm(const Mat<Scalar>& z, Eigen::Index j) {
    const Scalar n = z.col(j).norm();
    if (!(n > Scalar(0))) fail(Errc::numeric_error, "image embedding has zero norm");
    return n;
  }

  Mat<Scalar> features(std::span<const Image<Scalar>> images) const {
    const Eigen::Index fdim = Eigen::Index(grid_) * grid_ * 3;
    Mat<Scalar> feats(fdim, Eigen::Index(images.size()));
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto plan = ResamplePlan<Scalar>::bilinear_resize(images[i].height, images[i].width, grid_, grid_);
      plan.apply_into(images[i], feats.col(Eigen::Index(i)).data());
    }
    feats.array() -= Scalar(0.5);
    return feats;
  }

  Mat<Scalar> projection_;
  int grid_;
};

/// Deterministic stand-in for a joint text/image embedder. Token vectors come
/// from a seeded hash, the image projection from a seeded Gaussian matrix.
template <typename Scalar>
class ToyEmbedder final : public LinearEmbedder<Scalar> {
 public:
  explicit ToyEmbedder(std::uint64_t seed = kToyBackendSeed, int dim = kEmbedDim)
      : LinearEmbedder<Scalar>(make_projection(seed, dim), kEmbedGrid), seed_(seed) {}

  std::string fingerprint() const override {
    return "toy-embedder seed=" + std::to_string(seed_) + " dim=" + std::to_string(this->dim()) +
           " grid=" + std::to_string(kEmbedGrid);
  }

  /// A token's vector is the embedding of a hashed low-frequency color
  /// signature (per-channel offset plus cosine fields of total order <= 3) on
  /// the embedding grid, so text directions are reachable by images.
  Vec<double> token_vector(const std::string& token) const override {
    Rng rng(derive_seed(seed_, "token:" + token));
    const int g = kEmbedGrid;
    Eigen::VectorXd pattern = Eigen::VectorXd::Zero(Eigen::Index(g) * g * 3);
    for (int c = 0; c < 3; ++c) {
      for (int py = 0; py <= 3; ++py) {
        for (int px = 0; px + py <= 3; ++px) {
          const double coeff = normal01(rng) / (1.0 + px + py);
          for (int y = 0; y < g; ++y) {
            const double cy = std::cos(std::numbers::pi * py * (y + 0.5) / g);
            for (int x = 0; x < g; ++x)
              pattern[(Eigen::Index(y) * g + x) * 3 + c] += coeff * cy * std::cos(std::numbers::pi * px * (x + 0.5) / g);
          }
        }
      }
    }
    const Vec<double> v = (this->projection() * pattern.cast<Scalar>()).template cast<double>();
    return v / v.norm();
  }

 private:
  static Mat<Scalar> make_projection(std::uint64_t seed, int dim) {
    const Eigen::Index fdim = Eigen::Index(kEmbedGrid) * kEmbedGrid * 3;
    Rng rng(derive_seed(seed, "image-projection"));
    const double scale = 1.0 / std::sqrt(double(fdim));
    Mat<Scalar> p(dim, fdim);
    for (Eigen::Index j = 0; j < fdim; ++j)
      for (Eigen::Index i = 0; i < dim; ++i) p(i, j) = Scalar(normal01(rng) * scale);
    return p;
  }

  std::uint64_t seed_;
};

/// Parameters of the parametric field stylizer. The 100-d style vector is
/// split into gain (3), bias (3), sinusoidal texture (4: amplitude, two
/// frequencies, phase) and 90 components mapped linearly onto low-frequency
/// per-channel cosine fields.
struct FieldStylizerParams {
  static constexpr int kBasis = 4;  // cosine orders per axis
  static constexpr int kFieldCoeffs = 3 * kBasis * kBasis;
  static constexpr int kFieldInputs = kStyleDim - 10;

  double gain_scale = 1.0;
  double bias_scale = 0.5;
  double amplitude_scale = 0.25;
  double frequency_scale = 4.0;
  double phase_scale = std::numbers::pi;
  double clamp_sharpness = 4.0;
  Eigen::MatrixXd field_map = Eigen::MatrixXd::Zero(kFieldCoeffs, kFieldInputs);
};

/// Differentiable stylizer: smooth_clamp(gain * content + bias + texture + field).
/// A zero style vector yields smooth_clamp(content).
template <typename Scalar>
class FieldStylizer : public StylizerBackend<Scalar> {
 public:
  FieldStylizer(FieldStylizerParams params, std::string fingerprint)
      : p_(std::move(params)), field_map_(p_.field_map.cast<Scalar>()), fingerprint_(std::move(fingerprint)) {
    if (p_.field_map.rows() != FieldStylizerParams::kFieldCoeffs || p_.field_map.cols() != FieldStylizerParams::kFieldInputs)
      fail(Errc::shape_mismatch, "field map must be 48x90");
  }

  int style_dim() const override { return kStyleDim; }
  std::string fingerprint() const override { return fingerprint_; }
  const FieldStylizerParams& params() const { return p_; }

  Scalar smooth_clamp(Scalar v) const {
    return Scalar(1) / (Scalar(1) + std::exp(-Scalar(p_.clamp_sharpness) * (v - Scalar(0.5))));
  }

  Image<Scalar> apply(const Image<Scalar>& content, const Vec<Scalar>& style) const override {
    check_style(style);
    Image<Scalar> out(content.height, content.width);
    const Fields f = fields(content.height, content.width, style);
    for (int y = 0; y < content.height; ++y)
      for (int x = 0; x < content.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = smooth_clamp(pre_activation(f, content, style, y, x, c));
    return out;
  }

  Vec<Scalar> apply_vjp(const Image<Scalar>& content, const Vec<Scalar>& style,
                        const Image<Scalar>& grad_out) const override {
    check_style(style);
    if (!grad_out.same_shape(content)) fail(Errc::shape_mismatch, "gradient image shape differs from content");
    const Fields f = fields(content.height, content.width, style);
    const Scalar k(p_.clamp_sharpness);
    const Scalar amp = Scalar(p_.amplitude_scale) * style[6];
    const Scalar two_pi = Scalar(2 * std::numbers::pi);
    const int h = content.height, w = content.width, nb = FieldStylizerParams::kBasis;

    Vec<Scalar> grad = Vec<Scalar>::Zero(kStyleDim);
    Vec<Scalar> grad_coeffs = Vec<Scalar>::Zero(FieldStylizerParams::kFieldCoeffs);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Eigen::Index pix = Eigen::Index(y) * w + x;
        Scalar g_tex = 0;
        for (int c = 0; c < 3; ++c) {
          const Scalar s = smooth_clamp(pre_activation(f, content, style, y, x, c));
          const Scalar g = grad_out.at(y, x, c) * k * s * (Scalar(1) - s);
          grad[c] += g * Scalar(p_.gain_scale) * content.at(y, x, c);
          grad[3 + c] += g * Scalar(p_.bias_scale);
          g_tex += g;
          for (int by = 0; by < nb; ++by)
            for (int bx = 0; bx < nb; ++bx)
              grad_coeffs[(c * nb + by) * nb + bx] += g * f.basis_y(by, y) * f.basis_x(bx, x);
        }
        const Scalar theta = f.theta[pix];
        grad[6] += g_tex * Scalar(p_.amplitude_scale) * std::sin(theta);
        const Scalar dtheta = g_tex * amp * std::cos(theta);
        grad[7] += dtheta * two_pi * Scalar(p_.frequency_scale) * f.u[x];
        grad[8] += dtheta * two_pi * Scalar(p_.frequency_scale) * f.v[y];
        grad[9] += dtheta * Scalar(p_.phase_scale);
      }
    }
    grad.tail(FieldStylizerParams::kFieldInputs) = field_map_.transpose() * grad_coeffs;
    return grad;
  }

 private:
  struct Fields {
    Vec<Scalar> u, v;                 // normalized coordinates per column / row
    Mat<Scalar> basis_x, basis_y;     // cos(pi * order * (i + 0.5) / n)
    Vec<Scalar> theta;                // texture phase per pixel
    Mat<Scalar> field;                // pixels x 3
  };

  void check_style(const Vec<Scalar>& style) const {
    if (style.size() != kStyleDim)
      fail(Errc::invalid_input, "style embedding must have 100 components, got " + std::to_string(style.size()));
    if (!style.allFinite()) fail(Errc::invalid_input, "style embedding is not finite");
  }

  Fields fields(int h, int w, const Vec<Scalar>& style) const {
    const int nb = FieldStylizerParams::kBasis;
    Fields f;
    f.u.resize(w);
    f.v.resize(h);
    for (int x = 0; x < w; ++x) f.u[x] = Scalar(x) / Scalar(w);
    for (int y = 0; y < h; ++y) f.v[y] = Scalar(y) / Scalar(h);
    f.basis_x.resize(nb, w);
    f.basis_y.resize(nb, h);
    for (int b = 0; b < nb; ++b) {
      for (int x = 0; x < w; ++x) f.basis_x(b, x) = Scalar(std::cos(std::numbers::pi * b * (x + 0.5) / w));
      for (int y = 0; y < h; ++y) f.basis_y(b, y) = Scalar(std::cos(std::numbers::pi * b * (y + 0.5) / h));
    }
    const Scalar two_pi = Scalar(2 * std::numbers::pi);
    const Scalar fx = Scalar(p_.frequency_scale) * style[7], fy = Scalar(p_.frequency_scale) * style[8];
    const Scalar phase = Scalar(p_.phase_scale) * style[9];
    f.theta.resize(Eigen::Index(h) * w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) f.theta[Eigen::Index(y) * w + x] = two_pi * (fx * f.u[x] + fy * f.v[y]) + phase;

    const Vec<Scalar> coeffs = field_map_ * style.tail(FieldStylizerParams::kFieldInputs);
    f.field = Mat<Scalar>::Zero(Eigen::Index(h) * w, 3);
    for (int c = 0; c < 3; ++c) {
      // separable: field(y, x) = sum_by basis_y(by, y) * (sum_bx coeff * basis_x(bx, x))
      Mat<Scalar> cm(nb, nb);
      for (int by = 0; by < nb; ++by)
        for (int bx = 0; bx < nb; ++bx) cm(by, bx) = coeffs[(c * nb + by) * nb + bx];
      const Mat<Scalar> grid = f.basis_y.transpose() * cm * f.basis_x;  // h x w
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) f.field(Eigen::Index(y) * w + x, c) = grid(y, x);
    }
    return f;
  }

  Scalar pre_activation(const Fields& f, const Image<Scalar>& content, const Vec<Scalar>& style, int y, int x,
                        int c) const {
    const Eigen::Index pix = Eigen::Index(y) * content.width + x;
    const Scalar gain = Scalar(1) + Scalar(p_.gain_scale) * style[c];
    const Scalar bias = Scalar(p_.bias_scale) * style[3 + c];
    const Scalar tex = Scalar(p_.amplitude_scale) * style[6] * std::sin(f.theta[pix]);
    return gain * content.at(y, x, c) + bias + tex + f.field(pix, c);
  }

  FieldStylizerParams p_;
  Mat<Scalar> field_map_;
  std::string fingerprint_;
};

inline FieldStylizerParams toy_stylizer_params(std::uint64_t seed = kToyBackendSeed) {
  FieldStylizerParams p;
  Rng rng(derive_seed(seed, "field-map"));
  const double scale = 0.25 / std::sqrt(double(FieldStylizerParams::kFieldInputs));
  for (Eigen::Index j = 0; j < p.field_map.cols(); ++j)
    for (Eigen::Index i = 0; i < p.field_map.rows(); ++i) p.field_map(i, j) = normal01(rng) * scale;
  return p;
}

/// Deterministic stand-in for a pretrained style application network.
template <typename Scalar>
class ToyStylizer final : public FieldStylizer<Scalar> {
 public:
  explicit ToyStylizer(std::uint64_t seed = kToyBackendSeed)
      : FieldStylizer<Scalar>(toy_stylizer_params(seed), "toy-stylizer seed=" + std::to_string(seed)) {}
};

}  // namespace fcs
