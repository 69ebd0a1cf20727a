#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "fcs/array_file.hpp"
#include "fcs/errors.hpp"

namespace fcs {

inline constexpr const char* kDistributionMagic = "FCSDIST";
inline constexpr int kDistributionVersion = 1;
inline constexpr double kDefaultRidge = 1e-6;

/// Multivariate normal summary of a style-embedding corpus. Only the
/// quadratic form is used as a penalty; no log-determinant or normalizer.
class StyleDistribution {
 public:
  StyleDistribution() = default;

  /// Columns of `samples` are embeddings. Sample mean, 1/(n-1) covariance,
  /// Cholesky factor of covariance + ridge * I.
  static StyleDistribution fit(const Eigen::MatrixXd& samples, double ridge = kDefaultRidge) {
    if (samples.cols() < 2) fail(Errc::insufficient_data, "need at least 2 embeddings, got " + std::to_string(samples.cols()));
    if (!(ridge >= 0.0)) fail(Errc::invalid_config, "ridge must be non-negative");
    if (!samples.allFinite()) fail(Errc::invalid_input, "embeddings contain non-finite values");
    const Eigen::VectorXd mean = samples.rowwise().mean();
    const Eigen::MatrixXd centered = samples.colwise() - mean;
    Eigen::MatrixXd cov = (centered * centered.transpose()) / double(samples.cols() - 1);
    cov = (0.5 * (cov + cov.transpose())).eval();
    return from_moments(mean, cov, ridge, int(samples.cols()));
  }

  static StyleDistribution fit(const std::vector<Eigen::VectorXd>& embeddings, double ridge = kDefaultRidge) {
    if (embeddings.size() < 2) fail(Errc::insufficient_data, "need at least 2 embeddings, got " + std::to_string(embeddings.size()));
    Eigen::MatrixXd m(embeddings.front().size(), Eigen::Index(embeddings.size()));
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      if (embeddings[i].size() != m.rows()) fail(Errc::shape_mismatch, "embeddings have differing dimensions");
      m.col(Eigen::Index(i)) = embeddings[i];
    }
    return fit(m, ridge);
  }

  static StyleDistribution from_moments(Eigen::VectorXd mean, Eigen::MatrixXd cov, double ridge, int n) {
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) fail(Errc::shape_mismatch, "covariance does not match mean");
    StyleDistribution d;
    d.mean_ = std::move(mean);
    d.cov_ = std::move(cov);
    d.ridge_ = ridge;
    d.n_ = n;
    Eigen::MatrixXd reg = d.cov_;
    reg.diagonal().array() += ridge;
    d.llt_.compute(reg);
    if (d.llt_.info() != Eigen::Success || !(d.llt_.matrixL().toDenseMatrix().diagonal().array() > 0.0).all())
      fail(Errc::singular_covariance, "covariance + ridge * I is not positive definite (ridge " + std::to_string(ridge) + ")");
    return d;
  }

  int dim() const { return int(mean_.size()); }
  int sample_count() const { return n_; }
  double ridge() const { return ridge_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }

  /// (x - mean)^T (cov + ridge I)^{-1} (x - mean), via two triangular solves.
  double mahalanobis(const Eigen::VectorXd& x) const {
    check(x);
    const Eigen::VectorXd z = llt_.matrixL().solve(x - mean_);
    return z.squaredNorm();
  }

  /// 2 (cov + ridge I)^{-1} (x - mean).
  Eigen::VectorXd mahalanobis_gradient(const Eigen::VectorXd& x) const {
    check(x);
    return 2.0 * llt_.solve(x - mean_);
  }

  void save(const std::filesystem::path& path, const std::string& source = "") const {
    ArrayFile file;
    file.magic = kDistributionMagic;
    file.version = kDistributionVersion;
    std::ostringstream r;
    r << std::setprecision(17) << ridge_;
    file.meta = {{"dim", std::to_string(dim())}, {"n", std::to_string(n_)}, {"ridge", r.str()}};
    if (!source.empty()) file.meta.emplace_back("source", source);
    NamedArray m{"mean", DType::f64, {dim()}, std::vector<double>(mean_.data(), mean_.data() + mean_.size())};
    NamedArray c{"covariance", DType::f64, {dim(), dim()}, {}};
    c.values.reserve(std::size_t(cov_.size()));
    for (Eigen::Index i = 0; i < cov_.rows(); ++i)
      for (Eigen::Index j = 0; j < cov_.cols(); ++j) c.values.push_back(cov_(i, j));
    file.arrays = {std::move(m), std::move(c)};
    write_array_file(file, path);
  }

  /// `expected_dim` <= 0 accepts any dimension.
  static StyleDistribution load(const std::filesystem::path& path, int expected_dim = 100, std::string* source = nullptr) {
    const ArrayFile file = read_array_file(path, kDistributionMagic, kDistributionVersion);
    int dim = 0, n = 0;
    double ridge = 0;
    try {
      dim = std::stoi(file.meta_value("dim").value_or(""));
      n = std::stoi(file.meta_value("n").value_or(""));
      ridge = std::stod(file.meta_value("ridge").value_or(""));
    } catch (const std::exception&) {
      fail(Errc::format_error, "distribution header lacks dim/n/ridge");
    }
    if (expected_dim > 0 && dim != expected_dim)
      fail(Errc::format_error, "distribution has dimension " + std::to_string(dim) + ", expected " + std::to_string(expected_dim));
    const NamedArray* m = file.find("mean");
    const NamedArray* c = file.find("covariance");
    if (!m || !c || m->shape != std::vector<std::int64_t>{dim} || c->shape != std::vector<std::int64_t>{dim, dim})
      fail(Errc::format_error, "distribution arrays do not match dimension " + std::to_string(dim));
    Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(m->values.data(), dim);
    Eigen::MatrixXd cov(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) cov(i, j) = c->values[std::size_t(i) * dim + j];
    if (source) *source = file.meta_value("source").value_or("");
    return from_moments(std::move(mean), std::move(cov), ridge, n);
  }

 private:
  void check(const Eigen::VectorXd& x) const {
    if (x.size() != mean_.size())
      fail(Errc::invalid_input, "embedding has " + std::to_string(x.size()) + " components, distribution has " + std::to_string(dim()));
  }

  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  double ridge_ = kDefaultRidge;
  int n_ = 0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace fcs
