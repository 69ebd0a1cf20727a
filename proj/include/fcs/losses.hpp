#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fcs/augmentation.hpp"
#include "fcs/backends.hpp"
#include "fcs/errors.hpp"

namespace fcs {

inline constexpr const char* kDefaultSourceText = "A photo";
inline constexpr double kMinDirectionNorm = 1e-12;

struct LossWeights {
  double lambda_dir = 5e2;
  double lambda_patch = 9e3;
  double lambda_dis = 1.0;

  void validate() const {
    for (double w : {lambda_dir, lambda_patch, lambda_dis})
      if (!std::isfinite(w) || w < 0.0) fail(Errc::invalid_config, "loss weights must be finite and non-negative");
  }
};

struct LossParts {
  double dir = 0.0;
  double patch = 0.0;
  double dis = 0.0;
};

/// Weighted sum of the directional, patch and distribution terms.
inline double total_loss(const LossParts& parts, const LossWeights& w) {
  const std::pair<const char*, double> named[] = {{"dir", parts.dir}, {"patch", parts.patch}, {"dis", parts.dis}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v)) fail(Errc::numeric_error, std::string("loss term '") + name + "' is not finite");
  return w.lambda_dir * parts.dir + w.lambda_patch * parts.patch + w.lambda_dis * parts.dis;
}

/// One minus cosine similarity between an image and a text embedding.
template <typename Scalar>
Scalar clip_distance(const Vec<Scalar>& image_embedding, const Vec<Scalar>& text_embedding) {
  if (image_embedding.size() != text_embedding.size()) fail(Errc::invalid_input, "embedding dimensions differ");
  const Scalar ni = image_embedding.norm(), nt = text_embedding.norm();
  if (!(ni > Scalar(0)) || !(nt > Scalar(0))) fail(Errc::invalid_input, "zero-norm embedding");
  return Scalar(1) - image_embedding.dot(text_embedding) / (ni * nt);
}

/// 1 - cos(image_dir, text_dir). A vanishing image direction yields 1 with a
/// zero gradient; a vanishing text direction is an error.
template <typename Scalar>
Scalar directional_loss(const Vec<Scalar>& image_dir, const Vec<Scalar>& text_dir, Vec<Scalar>* grad_image_dir = nullptr) {
  if (image_dir.size() != text_dir.size()) fail(Errc::invalid_input, "direction dimensions differ");
  const Scalar nt = text_dir.norm();
  if (!(nt >= Scalar(kMinDirectionNorm)))
    fail(Errc::degenerate_direction, "style and source texts embed to the same point");
  const Scalar ni = image_dir.norm();
  if (!(ni >= Scalar(kMinDirectionNorm))) {
    if (grad_image_dir) *grad_image_dir = Vec<Scalar>::Zero(image_dir.size());
    return Scalar(1);
  }
  const Vec<Scalar> t_hat = text_dir / nt;
  const Scalar cos = image_dir.dot(t_hat) / ni;
  if (grad_image_dir) *grad_image_dir = -(t_hat - cos * image_dir / ni) / ni;
  return Scalar(1) - cos;
}

inline double threshold_reject(double loss, double tau) { return loss < tau ? 0.0 : loss; }

template <typename Scalar>
Vec<Scalar> text_direction(const EmbedderBackend<Scalar>& embedder, const std::string& style_text,
                           const std::string& source_text = kDefaultSourceText) {
  if (tokenize(source_text).empty()) fail(Errc::invalid_config, "source text must be non-empty");
  return embedder.embed_text(style_text) - embedder.embed_text(source_text);
}

/// Diagnostic: distance between the stylized image and the style text.
template <typename Scalar>
Scalar global_loss(const Image<Scalar>& stylized, const std::string& style_text, const EmbedderBackend<Scalar>& embedder) {
  return clip_distance<Scalar>(embedder.embed_image(stylized), embedder.embed_text(style_text));
}

template <typename Scalar>
Scalar directional_loss(const Image<Scalar>& content, const Image<Scalar>& stylized, const std::string& style_text,
                        const std::string& source_text, const EmbedderBackend<Scalar>& embedder) {
  if (!content.same_shape(stylized)) fail(Errc::shape_mismatch, "content and stylized images differ in shape");
  const Vec<Scalar> dt = text_direction(embedder, style_text, source_text);
  const Image<Scalar> pair[] = {stylized, content};
  const Mat<Scalar> e = embedder.embed_images(pair);
  return directional_loss<Scalar>(Vec<Scalar>(e.col(0) - e.col(1)), dt);
}

/// Unthresholded per-patch directional losses: patch i is the crop/perspective
/// view i of the stylized image, compared against the full content image.
template <typename Scalar>
std::vector<Scalar> patch_directional_losses(const Image<Scalar>& content, const Image<Scalar>& stylized,
                                             const std::string& style_text, const std::string& source_text,
                                             const EmbedderBackend<Scalar>& embedder, const PatchConfig& cfg) {
  if (!content.same_shape(stylized)) fail(Errc::shape_mismatch, "content and stylized images differ in shape");
  const Vec<Scalar> dt = text_direction(embedder, style_text, source_text);
  const auto plans = patch_plans<Scalar>(stylized.height, stylized.width, cfg, cfg.seed);
  std::vector<Image<Scalar>> images;
  images.reserve(plans.size() + 1);
  images.push_back(content);
  for (const auto& p : plans) images.push_back(p.apply(stylized));
  const Mat<Scalar> e = embedder.embed_images(images);
  std::vector<Scalar> losses;
  for (Eigen::Index i = 1; i < e.cols(); ++i) losses.push_back(directional_loss<Scalar>(Vec<Scalar>(e.col(i) - e.col(0)), dt));
  return losses;
}

/// Mean over patches of the threshold-rejected per-patch directional loss.
template <typename Scalar>
Scalar patch_loss(const Image<Scalar>& content, const Image<Scalar>& stylized, const std::string& style_text,
                  const std::string& source_text, const EmbedderBackend<Scalar>& embedder, const PatchConfig& cfg) {
  const auto losses = patch_directional_losses(content, stylized, style_text, source_text, embedder, cfg);
  double sum = 0.0;
  for (Scalar l : losses) sum += threshold_reject(double(l), cfg.tau);
  return Scalar(sum / double(losses.size()));
}

}  // namespace fcs
