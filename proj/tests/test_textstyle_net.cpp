#include <cmath>

#include "fcs/optim.hpp"
#include "fcs/textstyle_net.hpp"
#include "test_support.hpp"

namespace fcs {
namespace {

double leaky_oracle(double v) { return v > 0 ? v : 0.2 * v; }

// Three affine layers written as plain loops over the stored weights.
std::vector<double> direct_forward(const NetParams<double>& p, const std::vector<double>& x) {
  std::vector<double> h1(256), h2(128), out(100);
  for (int i = 0; i < 256; ++i) {
    double s = p.b1[i];
    for (int j = 0; j < 512; ++j) s += p.w1(i, j) * x[std::size_t(j)];
    h1[std::size_t(i)] = leaky_oracle(s);
  }
  for (int i = 0; i < 128; ++i) {
    double s = p.b2[i];
    for (int j = 0; j < 256; ++j) s += p.w2(i, j) * h1[std::size_t(j)];
    h2[std::size_t(i)] = leaky_oracle(s);
  }
  for (int i = 0; i < 100; ++i) {
    double s = p.b3[i];
    for (int j = 0; j < 128; ++j) s += p.w3(i, j) * h2[std::size_t(j)];
    out[std::size_t(i)] = std::tanh(s);
  }
  return out;
}

Eigen::VectorXd random_unit(std::mt19937_64& rng) {
  Eigen::VectorXd v = test::random_vector(rng, kEmbedDim);
  return v / v.norm();
}

TEST(TextStyleNet, ParameterCountsFollowLayerShapes) {
  EXPECT_EQ(TextStyleNet<float>::parameter_count(), 512u * 256 + 256 + 256 * 128 + 128 + 128 * 100 + 100);
  EXPECT_EQ(TextStyleNet<double>::parameter_count(), 177124u);
  std::size_t n = 0;
  const auto p = NetParams<double>::zeros();
  for (int i = 0; i < NetParams<double>::kArrays; ++i) n += std::size_t(p.flat(i).size());
  EXPECT_EQ(n, 177124u);
  EXPECT_EQ(finetune_mask().trainable_count(), 12900u);
  EXPECT_EQ(all_parameters().trainable_count(), 177124u);
}

TEST(TextStyleNet, ZeroNetworkMapsToZero) {
  TextStyleNet<double> net;
  net.params = NetParams<double>::zeros();
  EXPECT_EQ(net.forward(Vec<double>::Zero(kEmbedDim)), Vec<double>::Zero(kStyleDim));
}

TEST(TextStyleNet, MatchesDirectEvaluation) {
  std::mt19937_64 rng(1);
  for (std::uint64_t seed : {0ull, 7ull, 12345ull}) {
    const auto net = TextStyleNet<double>::init(seed);
    const Eigen::VectorXd x = random_unit(rng);
    const auto expected = direct_forward(net.params, std::vector<double>(x.data(), x.data() + x.size()));
    const auto got = net.forward(x);
    for (int i = 0; i < kStyleDim; ++i) EXPECT_NEAR(got[i], expected[std::size_t(i)], 1e-6);
    // Also with larger weights, where the leaky branch and tanh saturation matter.
    auto big = net;
    big.params.w1 *= 8.0;
    big.params.b2.setConstant(-0.3);
    const auto e2 = direct_forward(big.params, std::vector<double>(x.data(), x.data() + x.size()));
    const auto g2 = big.forward(x);
    for (int i = 0; i < kStyleDim; ++i) EXPECT_NEAR(g2[i], e2[std::size_t(i)], 1e-6);
  }
}

TEST(TextStyleNet, OutputsStayStrictlyInsideUnitInterval) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    auto net = TextStyleNet<float>::init(std::uint64_t(trial));
    if (trial % 10 == 0) net.params.w3 *= 1e4f;  // saturate tanh
    Vec<float> x = random_unit(rng).cast<float>();
    if (trial % 3 == 0) x *= 1e3f;
    const auto y = net.forward(x);
    ASSERT_TRUE(y.allFinite());
    ASSERT_LT(y.cwiseAbs().maxCoeff(), 1.0f) << "trial " << trial;
  }
  auto net = TextStyleNet<double>::init(3);
  net.params.w3 *= 1e6;
  EXPECT_LT(net.forward(random_unit(rng)).cwiseAbs().maxCoeff(), 1.0);
}

TEST(TextStyleNet, InitIsSeeded) {
  const auto a = TextStyleNet<double>::init(5), b = TextStyleNet<double>::init(5), c = TextStyleNet<double>::init(6);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_FALSE(a.params == c.params);
  EXPECT_EQ(a.stage, TrainingStage::initialized);
  const auto zero = TextStyleNet<double>::init(0);
  Vec<double> e0 = Vec<double>::Zero(kEmbedDim);
  e0[0] = 1.0;
  const auto y = zero.forward(e0);
  EXPECT_TRUE(y.allFinite());
  EXPECT_LT(y.cwiseAbs().maxCoeff(), 1.0);
  // fan-in scaled uniform bounds
  EXPECT_LE(a.params.w1.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(512.0));
  EXPECT_LE(a.params.w2.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(256.0));
  EXPECT_LE(a.params.w3.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(128.0));
}

TEST(TextStyleNet, RejectsWrongInputDimension) {
  const auto net = TextStyleNet<double>::init(1);
  try {
    net.forward(Vec<double>::Zero(511));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_input);
  }
}

TEST(TextStyleNet, BatchForwardMatchesSingle) {
  std::mt19937_64 rng(4);
  const auto net = TextStyleNet<double>::init(4);
  Mat<double> x(kEmbedDim, 5);
  for (int j = 0; j < 5; ++j) x.col(j) = random_unit(rng);
  const auto batch = net.forward_batch(x);
  for (int j = 0; j < 5; ++j) EXPECT_LT((batch.col(j) - net.forward(x.col(j))).norm(), 1e-14);
}

// Gradient of sum(outputs) over a 10-sample batch against central differences,
// for every parameter. Perturbing a first-layer weight only changes one row of
// the first pre-activation, so its effect is propagated with a rank-one update.
TEST(TextStyleNet, BackwardMatchesFiniteDifferencesForEveryParameter) {
  std::mt19937_64 rng(5);
  auto net = TextStyleNet<double>::init(9);
  net.params.b1 = test::random_vector(rng, kHidden1, 0.05);
  net.params.b2 = test::random_vector(rng, kHidden2, 0.05);
  net.params.b3 = test::random_vector(rng, kStyleDim, 0.05);
  Mat<double> x(kEmbedDim, 10);
  for (int j = 0; j < 10; ++j) x.col(j) = random_unit(rng);
  const auto tape = net.forward_tape(x);
  const auto grads = net.backward(tape, Mat<double>::Ones(kStyleDim, 10));
  const double h = 1e-6;

  auto leaky = [](const Mat<double>& a) { return Mat<double>(a.unaryExpr([](double v) { return leaky_oracle(v); })); };
  auto head = [&](const NetParams<double>& p, const Mat<double>& a2) {
    return ((p.w3 * leaky(a2)).colwise() + p.b3).array().tanh().sum();
  };
  auto from_a1 = [&](const NetParams<double>& p, const Mat<double>& a1) {
    return head(p, (p.w2 * leaky(a1)).colwise() + p.b2);
  };

  // Layers 2 and 3 by full re-evaluation from the cached first activation.
  for (int i : {2, 3, 4, 5}) {
    NetParams<double> p = net.params;
    auto flat = p.flat(i);
    Eigen::VectorXd numeric(flat.size());
    for (Eigen::Index k = 0; k < flat.size(); ++k) {
      const double orig = flat[k];
      flat[k] = orig + h;
      const double fp = from_a1(p, tape.a1);
      flat[k] = orig - h;
      const double fm = from_a1(p, tape.a1);
      flat[k] = orig;
      numeric[k] = (fp - fm) / (2 * h);
    }
    EXPECT_LT(test::relative_error(grads.flat(i), numeric), 1e-4) << NetParams<double>::kNames[i];
  }

  // Layer 1: weight (r, c) shifts row r of a1 by h * x(c, :); bias r by h.
  const Mat<double> h1 = leaky(tape.a1);
  auto shifted = [&](int r, const Eigen::RowVectorXd& delta) {
    const Eigen::RowVectorXd row = tape.a1.row(r) + delta;
    const Eigen::RowVectorXd dh = row.unaryExpr([](double v) { return leaky_oracle(v); }) - h1.row(r);
    return head(net.params, tape.a2 + net.params.w2.col(r) * dh);
  };
  Mat<double> gw1(kHidden1, kEmbedDim);
  Eigen::VectorXd gb1(kHidden1);
  for (int r = 0; r < kHidden1; ++r) {
    for (int c = 0; c < kEmbedDim; ++c)
      gw1(r, c) = (shifted(r, h * x.row(c)) - shifted(r, -h * x.row(c))) / (2 * h);
    const Eigen::RowVectorXd ones = Eigen::RowVectorXd::Constant(10, h);
    gb1[r] = (shifted(r, ones) - shifted(r, -ones)) / (2 * h);
  }
  EXPECT_LT(test::relative_error(Eigen::Map<const Eigen::VectorXd>(grads.w1.data(), grads.w1.size()),
                                 Eigen::Map<const Eigen::VectorXd>(gw1.data(), gw1.size())),
            1e-4);
  EXPECT_LT(test::relative_error(grads.b1, gb1), 1e-4);
}

TEST(TextStyleNet, InputPerturbationIsBoundedBySpectralNorms) {
  std::mt19937_64 rng(6);
  const auto net = TextStyleNet<double>::init(11);
  auto spectral = [](const Mat<double>& w) { return Eigen::JacobiSVD<Mat<double>>(w).singularValues()[0]; };
  const double c = spectral(net.params.w1) * spectral(net.params.w2) * spectral(net.params.w3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = random_unit(rng);
    Eigen::VectorXd d = test::random_vector(rng, kEmbedDim);
    d *= 1e-6 / d.norm();
    EXPECT_LE((net.forward(x + d) - net.forward(x)).norm(), c * 1e-6 * (1 + 1e-9));
  }
}

TEST(ParamMask, FinetuneMaskZeroesLowerLayerGradients) {
  std::mt19937_64 rng(7);
  const auto net = TextStyleNet<double>::init(2);
  const auto tape = net.forward_tape(random_unit(rng));
  const Mat<double> g_out = test::random_vector(rng, kStyleDim);
  const auto full = net.backward(tape, g_out);
  const auto masked = net.backward(tape, g_out, finetune_mask());
  EXPECT_TRUE(masked.w1.isZero(0));
  EXPECT_TRUE(masked.b1.isZero(0));
  EXPECT_TRUE(masked.w2.isZero(0));
  EXPECT_TRUE(masked.b2.isZero(0));
  EXPECT_EQ(masked.w3, full.w3);
  EXPECT_EQ(masked.b3, full.b3);
  EXPECT_FALSE(full.w1.isZero(0));
  EXPECT_TRUE(finetune_mask().lower_layers_frozen());
}

TEST(ParamMask, MaskedAdamNeverTouchesFrozenLayers) {
  std::mt19937_64 rng(8);
  auto net = TextStyleNet<float>::init(3);
  const auto before = net.params;
  Adam<float> adam({.lr = 1e-2}, finetune_mask());
  auto grads = NetParams<float>::zeros();
  for (int i = 0; i < NetParams<float>::kArrays; ++i) grads.flat(i).setConstant(1.0f);
  for (int step = 0; step < 100; ++step) adam.step(net.params, grads);
  EXPECT_EQ(net.params.w1, before.w1);
  EXPECT_EQ(net.params.b1, before.b1);
  EXPECT_EQ(net.params.w2, before.w2);
  EXPECT_EQ(net.params.b2, before.b2);
  EXPECT_NE(net.params.w3, before.w3);
}

TEST(TrainingStageTag, RoundTripsThroughText) {
  for (auto s : {TrainingStage::initialized, TrainingStage::pretrained, TrainingStage::integrated, TrainingStage::finetuned})
    EXPECT_EQ(parse_stage(to_string(s)), s);
  EXPECT_THROW(parse_stage("warm"), Error);
}

class CheckpointFiles : public ::testing::Test {
 protected:
  test::TempDir dir;
};

TEST_F(CheckpointFiles, FloatRoundTripIsBitExact) {
  std::mt19937_64 rng(9);
  auto net = TextStyleNet<float>::init(21);
  net.params.b3 = test::random_vector(rng, kStyleDim).cast<float>();
  net.stage = TrainingStage::integrated;
  save_checkpoint(net, dir / "a.fcsnet", "toy-embedder; toy-stylizer");
  const auto ck = load_checkpoint<float>(dir / "a.fcsnet");
  EXPECT_TRUE(ck.net.params == net.params);
  EXPECT_EQ(ck.net.stage, TrainingStage::integrated);
  EXPECT_EQ(ck.fingerprint, "toy-embedder; toy-stylizer");
  const Vec<float> x = random_unit(rng).cast<float>();
  EXPECT_EQ(ck.net.forward(x), net.forward(x));
  // Saving again gives identical bytes.
  save_checkpoint(ck.net, dir / "b.fcsnet", "toy-embedder; toy-stylizer");
  EXPECT_EQ(read_file(dir / "a.fcsnet"), read_file(dir / "b.fcsnet"));
}

TEST_F(CheckpointFiles, HeaderNamesEveryArray) {
  save_checkpoint(TextStyleNet<float>::init(1), dir / "a.fcsnet");
  const std::string bytes = read_file(dir / "a.fcsnet");
  EXPECT_EQ(bytes.rfind("FCSNET v1\n", 0), 0u);
  EXPECT_NE(bytes.find("array layer1.weight f32 256x512 0\n"), std::string::npos);
  EXPECT_NE(bytes.find("array layer3.bias f32 100 "), std::string::npos);
  const auto payload = bytes.size() - (bytes.find("end\n") + 4);
  EXPECT_EQ(payload, 177124u * 4);
}

TEST_F(CheckpointFiles, DoubleNetsRoundTripToFloatPrecision) {
  const auto net = TextStyleNet<double>::init(22);
  save_checkpoint(net, dir / "d.fcsnet");
  const auto ck = load_checkpoint<double>(dir / "d.fcsnet");
  for (int i = 0; i < NetParams<double>::kArrays; ++i)
    EXPECT_LT((ck.net.params.flat(i) - net.params.flat(i)).cwiseAbs().maxCoeff(), 1e-7);
}

TEST_F(CheckpointFiles, TruncatedFileIsCorrupt) {
  save_checkpoint(TextStyleNet<float>::init(1), dir / "a.fcsnet");
  const std::string bytes = read_file(dir / "a.fcsnet");
  for (std::size_t keep : {bytes.size() - 1, bytes.size() / 2, std::size_t(20), std::size_t(0)}) {
    try {
      parse_checkpoint<float>(bytes.substr(0, keep));
      FAIL() << keep;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::corrupt_file) << keep;
    }
  }
}

TEST_F(CheckpointFiles, ShapeEditedFileIsShapeMismatch) {
  save_checkpoint(TextStyleNet<float>::init(1), dir / "a.fcsnet");
  std::string bytes = read_file(dir / "a.fcsnet");
  const std::string from = "layer1.weight f32 256x512", to = "layer1.weight f32 512x256";
  bytes.replace(bytes.find(from), from.size(), to);
  try {
    parse_checkpoint<float>(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape_mismatch);
  }
}

TEST_F(CheckpointFiles, WrongMagicOrVersionIsRejected) {
  save_checkpoint(TextStyleNet<float>::init(1), dir / "a.fcsnet");
  const std::string bytes = read_file(dir / "a.fcsnet");
  try {
    parse_checkpoint<float>("FCSNEX" + bytes.substr(6));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::corrupt_file);
  }
  try {
    parse_checkpoint<float>("FCSNET v2" + bytes.substr(9));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::version_mismatch);
  }
}

TEST_F(CheckpointFiles, MissingFileIsIoError) {
  try {
    load_checkpoint<float>(dir / "missing.fcsnet");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io_error);
  }
}

}  // namespace
}  // namespace fcs
