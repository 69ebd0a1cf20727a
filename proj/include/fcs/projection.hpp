#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fcs/errors.hpp"
#include "fcs/rng.hpp"

namespace fcs {

struct PcaResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // d x k, orthonormal columns
  Eigen::MatrixXd coords;      // n x k
  Eigen::VectorXd variances;   // k

  /// Rows of the rank-k reconstruction.
  Eigen::MatrixXd reconstruct() const { return (coords * components.transpose()).rowwise() + mean.transpose(); }
};

/// Principal component projection of the rows of `points`. Each component is
/// sign-normalized so its largest-magnitude entry is positive.
inline PcaResult pca(const Eigen::MatrixXd& points, int k = 2) {
  if (points.rows() < 3) fail(Errc::insufficient_data, "projection needs at least 3 points, got " + std::to_string(points.rows()));
  if (k < 1 || k > points.cols()) fail(Errc::invalid_config, "cannot keep " + std::to_string(k) + " components");
  PcaResult r;
  r.mean = points.colwise().mean().transpose();
  const Eigen::MatrixXd centered = points.rowwise() - r.mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / double(points.rows() - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) fail(Errc::numeric_error, "eigendecomposition failed");
  const Eigen::Index d = points.cols();
  r.components.resize(d, k);
  r.variances.resize(k);
  for (int j = 0; j < k; ++j) {  // eigenvalues come in increasing order
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - j);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    r.components.col(j) = v;
    r.variances[j] = eig.eigenvalues()[d - 1 - j];
  }
  r.coords = centered * r.components;
  return r;
}

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  std::uint64_t seed = 0;
};

namespace detail {

inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * x * x.transpose()).colwise() + sq;
  d.rowwise() += sq.transpose();
  return d.cwiseMax(0.0);
}

/// Symmetrized joint probabilities with per-point bandwidths found by
/// bisection on the entropy.
inline Eigen::MatrixXd joint_probabilities(const Eigen::MatrixXd& dist2, double perplexity) {
  const Eigen::Index n = dist2.rows();
  const double target = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    Eigen::VectorXd row(n);
    for (int it = 0; it < 200; ++it) {
      double sum = 0.0, weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * dist2(i, j));
        sum += row[j];
        weighted += row[j] * dist2(i, j);
      }
      if (sum <= 0.0) {  // bandwidth too narrow
        hi = beta;
        beta = (lo + hi) / 2.0;
        continue;
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
    p.row(i) = row.transpose();
  }
  p = (p + p.transpose()) / (2.0 * double(n));
  return p.cwiseMax(1e-12);
}

}  // namespace detail

/// Exact (O(n^2) per iteration) t-SNE to two dimensions. Perplexity is
/// clamped to (n - 1) / 3 for small inputs.
inline Eigen::MatrixXd tsne(const Eigen::MatrixXd& points, TsneOptions opts = {}) {
  const Eigen::Index n = points.rows();
  if (n < 3) fail(Errc::insufficient_data, "projection needs at least 3 points, got " + std::to_string(n));
  if (!(opts.perplexity > 0.0)) fail(Errc::invalid_config, "perplexity must be positive");
  const double perplexity = std::min(opts.perplexity, double(n - 1) / 3.0);

  Eigen::MatrixXd p = detail::joint_probabilities(detail::squared_distances(points), perplexity);
  p.diagonal().setZero();

  Rng rng(derive_seed(opts.seed, "tsne"));
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < 2; ++k) y(i, k) = 1e-2 * normal01(rng);
  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2), gains = Eigen::MatrixXd::Ones(n, 2);

  for (int iter = 0; iter < opts.iterations; ++iter) {
    const double exaggeration = iter < opts.exaggeration_iterations ? opts.early_exaggeration : 1.0;
    const double momentum = iter < opts.exaggeration_iterations ? 0.5 : 0.8;
    Eigen::MatrixXd num = (1.0 + detail::squared_distances(y).array()).inverse().matrix();
    num.diagonal().setZero();
    const double z = num.sum();
    // grad_i = 4 sum_j (exag * p_ij - q_ij) num_ij (y_i - y_j)
    const Eigen::MatrixXd w = ((exaggeration * p).array() - num.array() / z).matrix().cwiseProduct(num);
    const Eigen::MatrixXd grad = 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int k = 0; k < 2; ++k) {
        const bool same_sign = (grad(i, k) > 0) == (velocity(i, k) > 0);
        gains(i, k) = std::max(same_sign ? gains(i, k) * 0.8 : gains(i, k) + 0.2, 0.01);
        velocity(i, k) = momentum * velocity(i, k) - opts.learning_rate * gains(i, k) * grad(i, k);
      }
    }
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

/// keyword -> group label, e.g. `flames fire`. The last whitespace-separated
/// field is the group; everything before it is the (possibly multi-word)
/// keyword.
using KeywordGroups = std::vector<std::pair<std::string, std::string>>;

inline KeywordGroups parse_keyword_groups(const std::string& text, const std::string& origin = "groups") {
  KeywordGroups out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream words(line);
    std::vector<std::string> w;
    for (std::string t; words >> t;) w.push_back(t);
    if (w.empty() || w[0][0] == '#') continue;
    if (w.size() < 2) fail(Errc::parse_error, origin + ":" + std::to_string(lineno) + ": expected '<keyword> <group>'");
    std::string kw = w[0];
    for (std::size_t i = 1; i + 1 < w.size(); ++i) kw += " " + w[i];
    out.emplace_back(std::move(kw), w.back());
  }
  return out;
}

/// Group of the longest keyword occurring in `prompt` as whole words;
/// `fallback` when none does.
inline std::string keyword_group(const std::string& prompt, const KeywordGroups& groups, const std::string& fallback = "other") {
  const std::string padded = " " + prompt + " ";
  std::size_t best = 0;
  std::string label = fallback;
  for (const auto& [kw, group] : groups)
    if (kw.size() > best && padded.find(" " + kw + " ") != std::string::npos) {
      best = kw.size();
      label = group;
    }
  return label;
}

}  // namespace fcs
