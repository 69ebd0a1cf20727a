#pragma once

// Adapters for exported pretrained models. A model bundle is an FCSMODEL
// array file; the embedder bundle carries a token table plus an image
// projection, the stylizer bundle carries the field-map weights and scales of
// the parametric stylizer.

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>

#include "fcs/array_file.hpp"
#include "fcs/backends.hpp"

namespace fcs {

inline constexpr const char* kModelMagic = "FCSMODEL";
inline constexpr int kModelVersion = 1;

/// Resolves a locator (plain path or file:// URI). Relative paths that do not
/// exist are retried under $FCS_CACHE_DIR. Any failure is backend_unavailable.
inline std::filesystem::path resolve_model_locator(const std::string& locator) {
  if (locator.empty()) fail(Errc::backend_unavailable, "no model locator given");
  std::string path = locator;
  if (const auto scheme = locator.find("://"); scheme != std::string::npos) {
    if (locator.rfind("file://", 0) != 0)
      fail(Errc::backend_unavailable, "unsupported locator scheme in '" + locator + "' (only file paths and file:// URIs)");
    path = locator.substr(7);
  }
  std::filesystem::path p(path);
  if (std::filesystem::exists(p)) return p;
  if (p.is_relative()) {
    if (const char* cache = std::getenv("FCS_CACHE_DIR"); cache && *cache) {
      const auto cached = std::filesystem::path(cache) / p;
      if (std::filesystem::exists(cached)) return cached;
    }
  }
  fail(Errc::backend_unavailable, "model not found at '" + locator + "'");
}

inline ArrayFile load_model_bundle(const std::string& locator, const std::string& kind) {
  const auto path = resolve_model_locator(locator);
  ArrayFile file;
  try {
    file = read_array_file(path, kModelMagic, kModelVersion);
  } catch (const Error& e) {
    fail(Errc::backend_unavailable, "cannot load '" + locator + "': " + e.what());
  }
  if (file.meta_value("kind") != kind)
    fail(Errc::backend_unavailable, "'" + locator + "' is not a " + kind + " bundle");
  return file;
}

template <typename Scalar>
class PretrainedEmbedder final : public LinearEmbedder<Scalar> {
 public:
  PretrainedEmbedder(Mat<Scalar> projection, int grid, std::unordered_map<std::string, Vec<double>> vocab,
                     std::string fingerprint)
      : LinearEmbedder<Scalar>(std::move(projection), grid), vocab_(std::move(vocab)), fingerprint_(std::move(fingerprint)) {}

  std::string fingerprint() const override { return fingerprint_; }

  Vec<double> token_vector(const std::string& token) const override {
    const auto it = vocab_.find(token);
    if (it == vocab_.end()) fail(Errc::invalid_input, "token '" + token + "' is not in the embedder vocabulary");
    return it->second;
  }

 private:
  std::unordered_map<std::string, Vec<double>> vocab_;
  std::string fingerprint_;
};

template <typename Scalar>
std::shared_ptr<const EmbedderBackend<Scalar>> pretrained_embedder_adapter(const std::string& locator) {
  const ArrayFile file = load_model_bundle(locator, "embedder");
  const NamedArray* proj = file.find("image_projection");
  const NamedArray* table = file.find("token_table");
  const auto vocab_line = file.meta_value("vocab");
  if (!proj || !table || !vocab_line || proj->shape.size() != 2 || table->shape.size() != 2)
    fail(Errc::backend_unavailable, "'" + locator + "' lacks image_projection/token_table/vocab");
  const auto dim = proj->shape[0];
  const auto fdim = proj->shape[1];
  const int grid = int(std::lround(std::sqrt(double(fdim) / 3.0)));
  if (dim != kEmbedDim || table->shape[1] != dim || Eigen::Index(grid) * grid * 3 != fdim)
    fail(Errc::backend_unavailable, "'" + locator + "' has incompatible shapes (embedding dimension must be 512)");

  Mat<Scalar> projection(dim, fdim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < fdim; ++j) projection(i, j) = Scalar(proj->values[std::size_t(i * fdim + j)]);

  const auto tokens = tokenize(*vocab_line);
  if (std::int64_t(tokens.size()) != table->shape[0])
    fail(Errc::backend_unavailable, "'" + locator + "' vocabulary size does not match token table");
  std::unordered_map<std::string, Vec<double>> vocab;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    Vec<double> v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = table->values[t * std::size_t(dim) + std::size_t(i)];
    vocab.emplace(tokens[t], std::move(v));
  }
  return std::make_shared<PretrainedEmbedder<Scalar>>(std::move(projection), grid, std::move(vocab),
                                                      "pretrained-embedder " + file.meta_value("name").value_or(locator));
}

template <typename Scalar>
std::shared_ptr<const StylizerBackend<Scalar>> pretrained_stylizer_adapter(const std::string& locator) {
  const ArrayFile file = load_model_bundle(locator, "stylizer");
  const NamedArray* map = file.find("field_map");
  const NamedArray* scales = file.find("scales");
  if (!map || !scales || scales->values.size() != 6 ||
      map->shape != std::vector<std::int64_t>{FieldStylizerParams::kFieldCoeffs, FieldStylizerParams::kFieldInputs})
    fail(Errc::backend_unavailable, "'" + locator + "' is not a 100-d style application bundle");
  FieldStylizerParams p;
  p.gain_scale = scales->values[0];
  p.bias_scale = scales->values[1];
  p.amplitude_scale = scales->values[2];
  p.frequency_scale = scales->values[3];
  p.phase_scale = scales->values[4];
  p.clamp_sharpness = scales->values[5];
  for (Eigen::Index i = 0; i < p.field_map.rows(); ++i)
    for (Eigen::Index j = 0; j < p.field_map.cols(); ++j)
      p.field_map(i, j) = map->values[std::size_t(i * p.field_map.cols() + j)];
  return std::make_shared<FieldStylizer<Scalar>>(std::move(p),
                                                 "pretrained-stylizer " + file.meta_value("name").value_or(locator));
}

/// Exports the toy embedder restricted to `vocabulary` as a model bundle.
inline void export_embedder_bundle(const ToyEmbedder<double>& embedder, const std::vector<std::string>& vocabulary,
                                   const std::filesystem::path& path, const std::string& name) {
  ArrayFile file;
  file.magic = kModelMagic;
  file.version = kModelVersion;
  std::string vocab_line;
  for (const auto& t : vocabulary) vocab_line += (vocab_line.empty() ? "" : " ") + t;
  file.meta = {{"kind", "embedder"}, {"name", name}, {"vocab", vocab_line}};
  const auto& proj = embedder.projection();
  NamedArray p{"image_projection", DType::f32, {proj.rows(), proj.cols()}, {}};
  p.values.reserve(std::size_t(proj.size()));
  for (Eigen::Index i = 0; i < proj.rows(); ++i)
    for (Eigen::Index j = 0; j < proj.cols(); ++j) p.values.push_back(double(float(proj(i, j))));
  NamedArray table{"token_table", DType::f32, {std::int64_t(vocabulary.size()), embedder.dim()}, {}};
  for (const auto& t : vocabulary) {
    const Vec<double> v = embedder.token_vector(t);
    for (Eigen::Index i = 0; i < v.size(); ++i) table.values.push_back(double(float(v[i])));
  }
  file.arrays = {std::move(p), std::move(table)};
  write_array_file(file, path);
}

inline void export_stylizer_bundle(const FieldStylizerParams& params, const std::filesystem::path& path,
                                   const std::string& name) {
  ArrayFile file;
  file.magic = kModelMagic;
  file.version = kModelVersion;
  file.meta = {{"kind", "stylizer"}, {"name", name}};
  NamedArray map{"field_map", DType::f64, {params.field_map.rows(), params.field_map.cols()}, {}};
  for (Eigen::Index i = 0; i < params.field_map.rows(); ++i)
    for (Eigen::Index j = 0; j < params.field_map.cols(); ++j) map.values.push_back(params.field_map(i, j));
  NamedArray scales{"scales", DType::f64, {6},
                    {params.gain_scale, params.bias_scale, params.amplitude_scale, params.frequency_scale,
                     params.phase_scale, params.clamp_sharpness}};
  file.arrays = {std::move(map), std::move(scales)};
  write_array_file(file, path);
}

/// Backend selection shared by the pipeline and the CLI.
struct BackendOptions {
  std::string kind = "toy";  // toy | pretrained
  std::string embedder_model;
  std::string stylizer_model;
  std::uint64_t toy_seed = kToyBackendSeed;
};

template <typename Scalar>
struct Backends {
  std::shared_ptr<const EmbedderBackend<Scalar>> embedder;
  std::shared_ptr<const StylizerBackend<Scalar>> stylizer;

  std::string fingerprint() const { return embedder->fingerprint() + "; " + stylizer->fingerprint(); }
};

template <typename Scalar>
Backends<Scalar> make_backends(const BackendOptions& opts) {
  if (opts.kind == "toy")
    return {std::make_shared<ToyEmbedder<Scalar>>(opts.toy_seed), std::make_shared<ToyStylizer<Scalar>>(opts.toy_seed)};
  if (opts.kind == "pretrained")
    return {pretrained_embedder_adapter<Scalar>(opts.embedder_model), pretrained_stylizer_adapter<Scalar>(opts.stylizer_model)};
  fail(Errc::invalid_config, "unknown backend '" + opts.kind + "' (expected toy or pretrained)");
}

}  // namespace fcs
