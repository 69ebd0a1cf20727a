#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fcs/augmentation.hpp"
#include "fcs/backends.hpp"
#include "fcs/distribution.hpp"
#include "fcs/losses.hpp"
#include "fcs/pretrained.hpp"

namespace fcs {

/// Per-prompt constants: text embedding and text direction.
template <typename Scalar>
struct QueryContext {
  std::string prompt;
  Vec<Scalar> text_embedding;
  Vec<Scalar> text_direction;
};

/// Per-content constants: the image and its embedding.
template <typename Scalar>
struct ContentContext {
  Image<Scalar> image;
  Vec<Scalar> embedding;
};

template <typename Scalar>
struct ObjectiveValue {
  LossParts parts;
  double total = 0.0;
  std::vector<double> patch_losses;  // unthresholded
  Vec<Scalar> grad_style;            // empty unless requested
};

/// The training objective as a function of the style embedding:
/// lambda_dir * L_dir + lambda_patch * L_patch + lambda_dis * L_dis, with the
/// stylizer and embedder frozen. Without a distribution the L_dis term is 0.
template <typename Scalar>
class StyleObjective {
 public:
  StyleObjective(Backends<Scalar> backends, std::shared_ptr<const StyleDistribution> distribution, LossWeights weights,
                 PatchConfig patch, std::string source_text = kDefaultSourceText)
      : backends_(std::move(backends)),
        distribution_(std::move(distribution)),
        weights_(weights),
        patch_(patch),
        source_text_(std::move(source_text)) {
    weights_.validate();
    patch_.validate();
    if (tokenize(source_text_).empty()) fail(Errc::invalid_config, "source text must be non-empty");
  }

  const Backends<Scalar>& backends() const { return backends_; }
  const LossWeights& weights() const { return weights_; }
  const PatchConfig& patch_config() const { return patch_; }
  const StyleDistribution* distribution() const { return distribution_.get(); }
  const std::string& source_text() const { return source_text_; }

  QueryContext<Scalar> query(const std::string& prompt) const {
    QueryContext<Scalar> q;
    q.prompt = prompt;
    q.text_embedding = backends_.embedder->embed_text(prompt);
    q.text_direction = q.text_embedding - backends_.embedder->embed_text(source_text_);
    if (!(q.text_direction.norm() >= Scalar(kMinDirectionNorm)))
      fail(Errc::degenerate_direction, "prompt '" + prompt + "' embeds to the source text");
    return q;
  }

  ContentContext<Scalar> content(Image<Scalar> image) const {
    require_pipeline_image(image, "content image");
    if (patch_.patch_size > std::min(image.height, image.width))
      fail(Errc::invalid_config, "patch size " + std::to_string(patch_.patch_size) + " exceeds content image " +
                                     std::to_string(image.height) + "x" + std::to_string(image.width));
    ContentContext<Scalar> c;
    c.embedding = backends_.embedder->embed_image(image);
    c.image = std::move(image);
    return c;
  }

  ObjectiveValue<Scalar> evaluate(const Vec<Scalar>& style, const QueryContext<Scalar>& q, const ContentContext<Scalar>& c,
                                  std::uint64_t patch_seed, bool with_grad) const {
    ObjectiveValue<Scalar> out;
    const Image<Scalar> stylized = backends_.stylizer->apply(c.image, style);
    const bool use_patches = weights_.lambda_patch > 0.0;
    std::vector<ResamplePlan<Scalar>> plans;
    if (use_patches) plans = patch_plans<Scalar>(stylized.height, stylized.width, patch_, patch_seed);

    std::vector<Image<Scalar>> views;
    views.reserve(plans.size() + 1);
    views.push_back(stylized);
    for (const auto& p : plans) views.push_back(p.apply(stylized));

    // Fills out.parts.dir/patch and returns dL/d(embeddings).
    auto cotangent = [&](const Mat<Scalar>& e) {
      Mat<Scalar> g = Mat<Scalar>::Zero(e.rows(), e.cols());
      Vec<Scalar> grad;
      out.parts.dir = double(directional_loss<Scalar>(Vec<Scalar>(e.col(0) - c.embedding), q.text_direction, &grad));
      g.col(0) = Scalar(weights_.lambda_dir) * grad;
      double patch_sum = 0.0;
      const Scalar scale = Scalar(weights_.lambda_patch / double(std::max<std::size_t>(plans.size(), 1)));
      for (std::size_t i = 0; i < plans.size(); ++i) {
        const Eigen::Index col = Eigen::Index(i) + 1;
        const double l = double(directional_loss<Scalar>(Vec<Scalar>(e.col(col) - c.embedding), q.text_direction, &grad));
        out.patch_losses.push_back(l);
        const double r = threshold_reject(l, patch_.tau);
        patch_sum += r;
        if (r != 0.0) g.col(col) = scale * grad;
      }
      out.parts.patch = plans.empty() ? 0.0 : patch_sum / double(plans.size());
      return g;
    };

    if (with_grad) {
      std::vector<Image<Scalar>> view_grads;
      backends_.embedder->embed_images_vjp(views, cotangent, view_grads);
      Image<Scalar> grad_stylized = std::move(view_grads[0]);
      for (std::size_t i = 0; i < plans.size(); ++i) plans[i].accumulate_transpose(view_grads[i + 1].values.data(), grad_stylized);
      out.grad_style = backends_.stylizer->apply_vjp(c.image, style, grad_stylized);
    } else {
      cotangent(backends_.embedder->embed_images(views));
    }

    if (distribution_ && weights_.lambda_dis > 0.0) {
      const Eigen::VectorXd s = style.template cast<double>();
      out.parts.dis = distribution_->mahalanobis(s);
      if (with_grad) out.grad_style += (weights_.lambda_dis * distribution_->mahalanobis_gradient(s)).template cast<Scalar>();
    }
    out.total = total_loss(out.parts, weights_);
    return out;
  }

 private:
  Backends<Scalar> backends_;
  std::shared_ptr<const StyleDistribution> distribution_;
  LossWeights weights_;
  PatchConfig patch_;
  std::string source_text_;
};

}  // namespace fcs
