#include "cb2cf/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

namespace cb2cf::nn {
namespace {

MatrixXd random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

TEST(Dense, ZeroWeightsGiveZeroOutputAndInputGrad) {
  Rng rng(1);
  Dense layer("d", 3, 2, false, rng);
  layer.weight.value.setZero();
  const VectorXd x = VectorXd::Random(3);
  EXPECT_TRUE(layer.forward(x).isZero(0.0));
  EXPECT_TRUE(layer.backward(x, VectorXd::Ones(2)).isZero(0.0));
}

TEST(Dense, IdentityWeightsPassInputThrough) {
  Rng rng(1);
  Dense layer("d", 4, 4, false, rng);
  layer.weight.value.setIdentity();
  const VectorXd x = VectorXd::LinSpaced(4, -1.0, 2.0);
  EXPECT_EQ(layer.forward(x), x);
}

TEST(Dense, RejectsShapeMismatch) {
  Rng rng(1);
  Dense layer("d", 3, 2, false, rng);
  EXPECT_THROW(layer.forward(VectorXd::Zero(4)), std::invalid_argument);
}

TEST(Dense, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  Dense layer("d", 3, 4, false, rng);
  layer.bias.value = random_matrix(4, 1, rng);
  MatrixXd x = random_matrix(3, 1, rng);
  const VectorXd r = random_matrix(4, 1, rng);
  auto loss = [&] { return r.dot(layer.forward(x.col(0))); };

  layer.weight.zero_grad();
  layer.bias.zero_grad();
  const MatrixXd dx = layer.backward(x.col(0), r);
  MatrixXd* values[] = {&layer.weight.value, &layer.bias.value, &x};
  const MatrixXd analytic[] = {layer.weight.grad, layer.bias.grad, dx};
  EXPECT_LT(grad_check(loss, values, analytic), 1e-6);
}

TEST(Conv1dMaxPool, ZeroInputZeroBiasGivesZero) {
  Rng rng(3);
  Conv1dMaxPool conv("c", 3, 3, 4, false, rng);
  const RowMatrix x = RowMatrix::Zero(6, 4);
  EXPECT_TRUE(conv.forward(x, nullptr).isZero(0.0));
}

TEST(Conv1dMaxPool, FilterEqualToWindowPoolsItsSquaredNorm) {
  Rng rng(4);
  RowMatrix x = RowMatrix::Zero(8, 2);
  x.middleRows(3, 3) = random_matrix(3, 2, rng);
  Conv1dMaxPool conv("c", 1, 3, 2, false, rng);
  for (Index k = 0; k < 3; ++k) conv.weight.value.block(0, 2 * k, 1, 2) = x.row(3 + k);
  Conv1dMaxPool::Cache cache;
  const VectorXd pooled = conv.forward(x, &cache);
  // Oracle: direct sum of squares over the planted window.
  double sq = 0.0;
  for (Index r = 3; r < 6; ++r)
    for (Index c = 0; c < 2; ++c) sq += x(r, c) * x(r, c);
  EXPECT_NEAR(pooled(0), sq, 1e-12);
  EXPECT_EQ(cache.argmax[0], 3);
}

TEST(Conv1dMaxPool, RejectsShortInput) {
  Rng rng(5);
  Conv1dMaxPool conv("c", 2, 3, 4, false, rng);
  EXPECT_THROW(conv.forward(RowMatrix::Zero(2, 4), nullptr), std::invalid_argument);
}

TEST(Conv1dMaxPool, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  Conv1dMaxPool conv("c", 2, 3, 4, false, rng);
  conv.bias.value = random_matrix(2, 1, rng);
  MatrixXd x_dense = random_matrix(8, 4, rng);
  const VectorXd r = random_matrix(2, 1, rng);
  auto as_rows = [&] { return RowMatrix(x_dense); };
  auto loss = [&] { return r.dot(conv.forward(as_rows(), nullptr)); };

  conv.weight.zero_grad();
  conv.bias.zero_grad();
  Conv1dMaxPool::Cache cache;
  const RowMatrix x = as_rows();
  conv.forward(x, &cache);
  RowMatrix dx = RowMatrix::Zero(8, 4);
  conv.backward(x, cache, r, &dx);

  MatrixXd* values[] = {&conv.weight.value, &conv.bias.value, &x_dense};
  const MatrixXd analytic[] = {conv.weight.grad, conv.bias.grad, MatrixXd(dx)};
  EXPECT_LT(grad_check(loss, values, analytic), 1e-6);

  // Each filter's gradient reaches exactly one window position.
  for (Index f = 0; f < 2; ++f) {
    RowMatrix single = RowMatrix::Zero(8, 4);
    VectorXd df = VectorXd::Zero(2);
    df(f) = 1.0;
    Conv1dMaxPool copy = conv;
    copy.backward(x, cache, df, &single);
    int nonzero_rows = 0;
    for (Index t = 0; t < 8; ++t) nonzero_rows += single.row(t).isZero(0.0) ? 0 : 1;
    EXPECT_EQ(nonzero_rows, 3);
  }
}

TEST(Conv1dMaxPool, ZeroTailShortcutMatchesFullEvaluation) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Conv1dMaxPool conv("c", 5, 3, 3, false, rng);
    conv.bias.value = random_matrix(5, 1, rng);
    const Index active = trial % 9;
    RowMatrix x = RowMatrix::Zero(10, 3);
    if (active > 0) x.topRows(active) = random_matrix(active, 3, rng);
    Conv1dMaxPool::Cache full, partial;
    const VectorXd a = conv.forward(x, &full);
    const VectorXd b = conv.forward(x, &partial, active);
    EXPECT_EQ(a, b);
    EXPECT_EQ(full.argmax, partial.argmax);
  }
}

TEST(Relu, ValuesAndMask) {
  VectorXd x(3);
  x << -1, 0, 2;
  VectorXd expected(3);
  expected << 0, 0, 2;
  EXPECT_EQ(relu(x), expected);
  VectorXd mask(3);
  mask << 0, 0, 1;
  EXPECT_EQ(relu_grad(x, VectorXd::Ones(3)), mask);
}

TEST(Relu, GradientMatchesFiniteDifferencesAwayFromZero) {
  Rng rng(8);
  MatrixXd x = random_matrix(6, 1, rng);
  for (Index i = 0; i < x.size(); ++i)
    if (std::abs(x(i)) < 0.1) x(i) = 0.5;
  const VectorXd r = random_matrix(6, 1, rng);
  auto loss = [&] { return r.dot(relu(x.col(0))); };
  MatrixXd* values[] = {&x};
  const MatrixXd analytic[] = {relu_grad(x.col(0), r)};
  EXPECT_LT(grad_check(loss, values, analytic), 1e-6);
}

TEST(Dropout, IdentityCases) {
  Rng rng(9);
  const VectorXd x = VectorXd::LinSpaced(10, 1.0, 10.0);
  EXPECT_EQ(dropout(x, 0.0, rng, Mode::kTrain), x);
  EXPECT_EQ(dropout(x, 0.0, rng, Mode::kEval), x);
  EXPECT_EQ(dropout(x, 0.7, rng, Mode::kEval), x);
  EXPECT_THROW(dropout(x, 1.0, rng, Mode::kTrain), std::invalid_argument);
}

TEST(Dropout, EmpiricalKeepRateAndScale) {
  Rng rng(10);
  const VectorXd x = VectorXd::Ones(100000);
  const VectorXd out = dropout(x, 0.2, rng, Mode::kTrain);
  const double kept = static_cast<double>((out.array() != 0.0).count()) / 100000.0;
  EXPECT_NEAR(kept, 0.8, 0.01);
  for (Index i = 0; i < 100; ++i)
    if (out(i) != 0.0) EXPECT_DOUBLE_EQ(out(i), 1.25);
}

TEST(MseLoss, KnownValuesAndGradient) {
  const VectorXd a = VectorXd::LinSpaced(40, -1.0, 1.0);
  EXPECT_EQ(mse_loss(a, a).value, 0.0);
  EXPECT_DOUBLE_EQ(mse_loss(a + VectorXd::Ones(40), a).value, 1.0);
  EXPECT_THROW(mse_loss(a, VectorXd::Zero(3)), std::invalid_argument);

  Rng rng(11);
  MatrixXd pred = random_matrix(7, 1, rng);
  const VectorXd target = random_matrix(7, 1, rng);
  auto loss = [&] { return mse_loss(pred.col(0), target).value; };
  MatrixXd* values[] = {&pred};
  const MatrixXd analytic[] = {mse_loss(pred.col(0), target).grad};
  EXPECT_LT(grad_check(loss, values, analytic), 1e-6);
}

TEST(L2Penalty, KnownValuesAndGradient) {
  Param w("w", 1, 1, true);
  w.value(0, 0) = 2.0;
  Param* params[] = {&w};
  EXPECT_EQ(l2_penalty(params, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(l2_penalty(params, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(w.grad(0, 0), 4.0);

  Rng rng(12);
  Param a("a", 3, 2, true), b("b", 2, 1, false);
  a.value = random_matrix(3, 2, rng);
  b.value = random_matrix(2, 1, rng);
  Param* both[] = {&a, &b};
  l2_penalty(both, 0.3);
  EXPECT_TRUE(b.grad.isZero(0.0));  // unregularized params untouched
  auto loss = [&] { return l2_penalty(both, 0.3, false); };
  MatrixXd* values[] = {&a.value};
  const MatrixXd analytic[] = {a.grad};
  EXPECT_LT(grad_check(loss, values, analytic), 1e-8);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  Param p("p", 2, 2, false);
  p.value << 1, 2, 3, 4;
  const MatrixXd before = p.value;
  Adam adam({&p});
  adam.step();
  EXPECT_EQ(adam.timestep(), 1u);
  EXPECT_EQ(p.value, before);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Param p("p", 3, 1, false);
  p.grad << 0.5, -20.0, 1e-3;
  Adam adam({&p}, AdamConfig{.learning_rate = 0.01});
  adam.step();
  // Closed form at t = 1: m_hat = g, v_hat = g^2, step = lr g / (|g| + eps).
  EXPECT_NEAR(p.value(0), -0.01, 1e-9);
  EXPECT_NEAR(p.value(1), 0.01, 1e-9);
  EXPECT_NEAR(p.value(2), -0.01 * 1e-3 / (1e-3 + 1e-8), 1e-12);
}

TEST(Adam, MinimizesQuadratic) {
  Param w("w", 2, 1, false);
  w.value << 3.0, -2.0;
  Adam adam({&w}, AdamConfig{.learning_rate = 0.1});
  for (int i = 0; i < 200; ++i) {
    w.zero_grad();
    w.grad = 2.0 * w.value;
    adam.step();
  }
  EXPECT_LT(w.value.norm(), 0.1);
}

TEST(Adam, SparseParamsUpdateOnlyTouchedRows) {
  Param e("e", 4, 2, false);
  e.sparse = true;
  e.value.setOnes();
  e.touch(2);
  e.grad.row(2) << 1.0, -1.0;
  Adam adam({&e}, AdamConfig{.learning_rate = 0.5});
  adam.step();
  EXPECT_EQ(e.value.row(0), Eigen::RowVector2d(1, 1));
  EXPECT_NE(e.value.row(2), Eigen::RowVector2d(1, 1));
  e.zero_grad();
  EXPECT_TRUE(e.grad.isZero(0.0));
  EXPECT_TRUE(e.touched.empty());
}

TEST(GradCheck, StackOfConvPoolDenseRelu) {
  Rng rng(13);
  Conv1dMaxPool conv("c", 4, 3, 5, true, rng);
  Dense hidden("h", 4, 6, true, rng);
  Dense out("o", 6, 3, false, rng);
  conv.bias.value = random_matrix(4, 1, rng, 0.1);
  hidden.bias.value = random_matrix(6, 1, rng, 0.1);
  MatrixXd x_dense = random_matrix(9, 5, rng);
  const VectorXd target = random_matrix(3, 1, rng);

  auto forward = [&](Conv1dMaxPool::Cache* cache, VectorXd* pooled, VectorXd* h) {
    const RowMatrix x = x_dense;
    const VectorXd p = conv.forward(x, cache);
    const VectorXd a = relu(p);
    const VectorXd z = hidden.forward(a);
    const VectorXd y = out.forward(relu(z));
    if (pooled) *pooled = p;
    if (h) *h = z;
    return y;
  };
  auto loss = [&] { return mse_loss(forward(nullptr, nullptr, nullptr), target).value; };

  Conv1dMaxPool::Cache cache;
  VectorXd p, z;
  const VectorXd y = forward(&cache, &p, &z);
  const auto l = mse_loss(y, target);
  for (Param* prm : {&conv.weight, &conv.bias, &hidden.weight, &hidden.bias, &out.weight, &out.bias})
    prm->zero_grad();
  const VectorXd dz = relu_grad(z, out.backward(relu(z), l.grad));
  const VectorXd dp = relu_grad(p, hidden.backward(relu(p), dz));
  const RowMatrix x = x_dense;
  RowMatrix dx = RowMatrix::Zero(9, 5);
  conv.backward(x, cache, dp, &dx);

  MatrixXd* values[] = {&conv.weight.value, &conv.bias.value, &hidden.weight.value,
                        &hidden.bias.value, &out.weight.value, &out.bias.value, &x_dense};
  const MatrixXd analytic[] = {conv.weight.grad, conv.bias.grad, hidden.weight.grad,
                               hidden.bias.grad, out.weight.grad, out.bias.grad, MatrixXd(dx)};
  EXPECT_LT(grad_check(loss, values, analytic), 1e-4);
}

TEST(Tensors, ContainerRoundTripIsBitExact) {
  Rng rng(14);
  std::vector<NamedTensor> tensors = {{"a", random_matrix(3, 4, rng)}, {"b.bias", random_matrix(5, 1, rng)},
                                      {"empty", MatrixXd(0, 3)}};
  tensors[0].value(0, 0) = 1.0 / 3.0;
  const auto path = std::filesystem::temp_directory_path() / "cb2cf_tensors_test.bin";
  save_tensors(path, R"({"k":1})", tensors);
  const auto file = load_tensors(path);
  EXPECT_EQ(file.version, 1u);
  EXPECT_EQ(file.metadata, R"({"k":1})");
  ASSERT_EQ(file.tensors.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(file.tensors[i].name, tensors[i].name);
    EXPECT_EQ(file.tensors[i].value.rows(), tensors[i].value.rows());
    EXPECT_EQ(file.tensors[i].value.cols(), tensors[i].value.cols());
    EXPECT_TRUE(file.tensors[i].value == tensors[i].value);
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace cb2cf::nn
