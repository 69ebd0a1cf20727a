#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>

#include "fcs/array_file.hpp"
#include "fcs/backends.hpp"
#include "fcs/errors.hpp"
#include "fcs/rng.hpp"

namespace fcs {

inline constexpr int kHidden1 = 256;
inline constexpr int kHidden2 = 128;
inline constexpr double kLeakySlope = 0.2;

enum class TrainingStage { initialized, pretrained, integrated, finetuned };

inline std::string_view to_string(TrainingStage s) {
  switch (s) {
    case TrainingStage::initialized: return "initialized";
    case TrainingStage::pretrained: return "pretrained";
    case TrainingStage::integrated: return "integrated";
    case TrainingStage::finetuned: return "finetuned";
  }
  return "initialized";
}

inline TrainingStage parse_stage(std::string_view s) {
  for (auto st : {TrainingStage::initialized, TrainingStage::pretrained, TrainingStage::integrated, TrainingStage::finetuned})
    if (to_string(st) == s) return st;
  fail(Errc::corrupt_file, "unknown training stage '" + std::string(s) + "'");
}

/// The six parameter arrays of the 512 -> 256 -> 128 -> 100 network. Weights
/// are stored (out x in).
template <typename Scalar>
struct NetParams {
  static constexpr int kArrays = 6;
  static constexpr std::array<const char*, kArrays> kNames = {"layer1.weight", "layer1.bias", "layer2.weight",
                                                              "layer2.bias",   "layer3.weight", "layer3.bias"};
  static constexpr std::array<std::array<int, 2>, kArrays> kShapes = {
      {{kHidden1, kEmbedDim}, {kHidden1, 1}, {kHidden2, kHidden1}, {kHidden2, 1}, {kStyleDim, kHidden2}, {kStyleDim, 1}}};

  Mat<Scalar> w1, w2, w3;
  Vec<Scalar> b1, b2, b3;

  static NetParams zeros() {
    NetParams p;
    p.w1 = Mat<Scalar>::Zero(kHidden1, kEmbedDim);
    p.b1 = Vec<Scalar>::Zero(kHidden1);
    p.w2 = Mat<Scalar>::Zero(kHidden2, kHidden1);
    p.b2 = Vec<Scalar>::Zero(kHidden2);
    p.w3 = Mat<Scalar>::Zero(kStyleDim, kHidden2);
    p.b3 = Vec<Scalar>::Zero(kStyleDim);
    return p;
  }

  static constexpr std::size_t count() {
    std::size_t n = 0;
    for (const auto& s : kShapes) n += std::size_t(s[0]) * std::size_t(s[1]);
    return n;
  }

  /// Flat column-major view of array i.
  Eigen::Map<Vec<Scalar>> flat(int i) {
    Scalar* d = nullptr;
    switch (i) {
      case 0: d = w1.data(); break;
      case 1: d = b1.data(); break;
      case 2: d = w2.data(); break;
      case 3: d = b2.data(); break;
      case 4: d = w3.data(); break;
      default: d = b3.data(); break;
    }
    return Eigen::Map<Vec<Scalar>>(d, Eigen::Index(kShapes[i][0]) * kShapes[i][1]);
  }
  Eigen::Map<const Vec<Scalar>> flat(int i) const {
    auto& self = const_cast<NetParams&>(*this);
    const auto m = self.flat(i);
    return Eigen::Map<const Vec<Scalar>>(m.data(), m.size());
  }

  bool operator==(const NetParams& o) const {
    for (int i = 0; i < kArrays; ++i)
      if (flat(i) != o.flat(i)) return false;
    return true;
  }

  template <typename Other>
  NetParams<Other> cast() const {
    return {w1.template cast<Other>(), w2.template cast<Other>(), w3.template cast<Other>(),
            b1.template cast<Other>(), b2.template cast<Other>(), b3.template cast<Other>()};
  }
};

/// Selects which parameter arrays an optimizer may update.
struct ParamMask {
  std::array<bool, 6> trainable{true, true, true, true, true, true};

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (int i = 0; i < 6; ++i)
      if (trainable[i]) n += std::size_t(NetParams<double>::kShapes[i][0]) * NetParams<double>::kShapes[i][1];
    return n;
  }
  bool lower_layers_frozen() const { return !trainable[0] && !trainable[1] && !trainable[2] && !trainable[3]; }

  template <typename Scalar>
  void apply(NetParams<Scalar>& grads) const {
    for (int i = 0; i < 6; ++i)
      if (!trainable[i]) grads.flat(i).setZero();
  }
};

inline ParamMask all_parameters() { return {}; }

/// Only the last affine layer (128 -> 100) is trainable.
inline ParamMask finetune_mask() { return ParamMask{{false, false, false, false, true, true}}; }

template <typename Scalar>
struct ForwardTape {
  Mat<Scalar> input, a1, h1, a2, h2, out;
};

/// Text-style prediction network: 512 -> 256 -> 128 -> 100 with leaky-ReLU
/// (slope 0.2) hidden activations and a tanh output.
template <typename Scalar>
class TextStyleNet {
 public:
  NetParams<Scalar> params = NetParams<Scalar>::zeros();
  TrainingStage stage = TrainingStage::initialized;

  static constexpr std::size_t parameter_count() { return NetParams<Scalar>::count(); }

  /// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
  static TextStyleNet init(std::uint64_t seed) {
    TextStyleNet net;
    Rng rng(derive_seed(seed, "textstyle-init"));
    auto fill = [&rng](Mat<Scalar>& w) {
      const double bound = 1.0 / std::sqrt(double(w.cols()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = Scalar(dist(rng));
    };
    fill(net.params.w1);
    fill(net.params.w2);
    fill(net.params.w3);
    return net;
  }

  Vec<Scalar> forward(const Vec<Scalar>& text_embedding) const {
    check_input(text_embedding.rows());
    return forward_tape(text_embedding).out.col(0);
  }

  /// Columns are samples.
  Mat<Scalar> forward_batch(const Mat<Scalar>& inputs) const { return forward_tape(inputs).out; }

  ForwardTape<Scalar> forward_tape(const Mat<Scalar>& inputs) const {
    check_input(inputs.rows());
    ForwardTape<Scalar> t;
    t.input = inputs;
    t.a1 = (params.w1 * inputs).colwise() + params.b1;
    t.h1 = t.a1.unaryExpr(&leaky);
    t.a2 = (params.w2 * t.h1).colwise() + params.b2;
    t.h2 = t.a2.unaryExpr(&leaky);
    t.out = ((params.w3 * t.h2).colwise() + params.b3).unaryExpr(&bounded_tanh);
    return t;
  }

  /// Gradients of sum_ij grad_out(i, j) * out(i, j) with respect to the
  /// parameters; arrays outside `mask` are left zero.
  NetParams<Scalar> backward(const ForwardTape<Scalar>& t, const Mat<Scalar>& grad_out,
                             const ParamMask& mask = all_parameters()) const {
    NetParams<Scalar> g = NetParams<Scalar>::zeros();
    const Mat<Scalar> d3 = grad_out.cwiseProduct((Scalar(1) - t.out.array().square()).matrix());
    if (mask.trainable[4]) g.w3.noalias() = d3 * t.h2.transpose();
    if (mask.trainable[5]) g.b3 = d3.rowwise().sum();
    if (mask.lower_layers_frozen()) return g;

    const Mat<Scalar> d2 = (params.w3.transpose() * d3).cwiseProduct(t.a2.unaryExpr(&leaky_slope));
    if (mask.trainable[2]) g.w2.noalias() = d2 * t.h1.transpose();
    if (mask.trainable[3]) g.b2 = d2.rowwise().sum();
    if (!mask.trainable[0] && !mask.trainable[1]) return g;

    const Mat<Scalar> d1 = (params.w2.transpose() * d2).cwiseProduct(t.a1.unaryExpr(&leaky_slope));
    if (mask.trainable[0]) g.w1.noalias() = d1 * t.input.transpose();
    if (mask.trainable[1]) g.b1 = d1.rowwise().sum();
    return g;
  }

  template <typename Other>
  TextStyleNet<Other> cast() const {
    TextStyleNet<Other> n;
    n.params = params.template cast<Other>();
    n.stage = stage;
    return n;
  }

 private:
  static void check_input(Eigen::Index rows) {
    if (rows != kEmbedDim)
      fail(Errc::invalid_input, "text embedding must have 512 components, got " + std::to_string(rows));
  }
  static Scalar leaky(Scalar v) { return v > Scalar(0) ? v : Scalar(kLeakySlope) * v; }
  static Scalar leaky_slope(Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(kLeakySlope); }
  // tanh can round to +-1 for large inputs; keep outputs strictly inside (-1, 1).
  static Scalar bounded_tanh(Scalar v) {
    constexpr Scalar lim = Scalar(1) - std::numeric_limits<Scalar>::epsilon();
    return std::clamp(std::tanh(v), -lim, lim);
  }
};

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kCheckpointMagic = "FCSNET";
inline constexpr int kCheckpointVersion = 1;

template <typename Scalar>
struct Checkpoint {
  TextStyleNet<Scalar> net;
  std::string fingerprint;
};

/// Parameters are written as float32; nets trained in float round-trip
/// bit-exactly.
template <typename Scalar>
void save_checkpoint(const TextStyleNet<Scalar>& net, const std::filesystem::path& path, const std::string& fingerprint = "") {
  ArrayFile file;
  file.magic = kCheckpointMagic;
  file.version = kCheckpointVersion;
  file.meta = {{"stage", std::string(to_string(net.stage))}, {"fingerprint", fingerprint}};
  for (int i = 0; i < NetParams<Scalar>::kArrays; ++i) {
    const auto& shape = NetParams<Scalar>::kShapes[i];
    NamedArray a{NetParams<Scalar>::kNames[i], DType::f32, {shape[0], shape[1]}, {}};
    if (shape[1] == 1) a.shape = {shape[0]};
    // row-major on disk
    const auto flat = net.params.flat(i);
    a.values.resize(std::size_t(flat.size()));
    for (int r = 0; r < shape[0]; ++r)
      for (int c = 0; c < shape[1]; ++c)
        a.values[std::size_t(r) * shape[1] + c] = double(float(flat[Eigen::Index(c) * shape[0] + r]));
    file.arrays.push_back(std::move(a));
  }
  write_array_file(file, path);
}

template <typename Scalar>
Checkpoint<Scalar> parse_checkpoint(const std::string& bytes) {
  const ArrayFile file = parse_array_file(bytes, kCheckpointMagic, kCheckpointVersion);
  Checkpoint<Scalar> ck;
  ck.net.stage = parse_stage(file.meta_value("stage").value_or("initialized"));
  ck.fingerprint = file.meta_value("fingerprint").value_or("");
  for (int i = 0; i < NetParams<Scalar>::kArrays; ++i) {
    const auto& shape = NetParams<Scalar>::kShapes[i];
    const NamedArray* a = file.find(NetParams<Scalar>::kNames[i]);
    if (!a) fail(Errc::corrupt_file, std::string("checkpoint lacks array ") + NetParams<Scalar>::kNames[i]);
    const std::vector<std::int64_t> want = shape[1] == 1 ? std::vector<std::int64_t>{shape[0]}
                                                         : std::vector<std::int64_t>{shape[0], shape[1]};
    if (a->shape != want || a->dtype != DType::f32)
      fail(Errc::shape_mismatch, std::string("array ") + NetParams<Scalar>::kNames[i] + " has shape " +
                                     detail::shape_string(a->shape) + ", expected " + detail::shape_string(want));
    auto flat = ck.net.params.flat(i);
    for (int r = 0; r < shape[0]; ++r)
      for (int c = 0; c < shape[1]; ++c)
        flat[Eigen::Index(c) * shape[0] + r] = Scalar(a->values[std::size_t(r) * shape[1] + c]);
  }
  return ck;
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint<Scalar>(read_file(path));
}

}  // namespace fcs
