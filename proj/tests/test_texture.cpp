#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "tldr/error.hpp"
#include "tldr/texture.hpp"

using namespace tldr;

namespace {

Tensor random_features(const Shape& shape, std::mt19937_64& rng) {
  Tensor t(shape);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : t.data()) v = n(rng);
  return t;
}

// G[i][j] = sum_p F_i(p) F_j(p) / (C H W), one batch item.
double gram_entry(const Tensor& f, std::size_t b, std::size_t i, std::size_t j) {
  const std::size_t c = f.dim(1), hw = f.dim(2) * f.dim(3);
  double s = 0.0;
  for (std::size_t p = 0; p < hw; ++p) s += f[(b * c + i) * hw + p] * f[(b * c + j) * hw + p];
  return s / static_cast<double>(c * hw);
}

}  // namespace

TEST(Gram, MatchesDoubleLoop) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor f = random_features({2, 1 + rng() % 5, 1 + rng() % 4, 1 + rng() % 4}, rng);
    Tape tape;
    const Tensor g = gram(tape.constant(f)).value();
    const std::size_t c = f.dim(1);
    ASSERT_EQ(g.shape(), (Shape{2, c, c}));
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) EXPECT_NEAR(g[(b * c + i) * c + j], gram_entry(f, b, i, j), 1e-12);
  }
}

TEST(Gram, SymmetricAndPositiveSemidefinite) {
  std::mt19937_64 rng(2);
  const Tensor f = random_features({1, 6, 3, 3}, rng);
  Tape tape;
  const Tensor g = gram(tape.constant(f)).value();
  Eigen::MatrixXd m(6, 6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_EQ(g[i * 6 + j], g[j * 6 + i]);
      m(i, j) = g[i * 6 + j];
    }
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff(), -1e-8);
}

TEST(Gram, UnbatchedInput) {
  Tape tape;
  const Tensor f({2, 1, 2}, {1, 2, 3, 4});
  const Tensor g = gram(tape.constant(f)).value();
  // C H W = 4: [[5, 11], [11, 25]] / 4
  EXPECT_EQ(g, Tensor({2, 2}, {1.25, 2.75, 2.75, 6.25}));
}

TEST(Gram, RejectsBadRank) {
  Tape tape;
  EXPECT_THROW(gram(tape.constant(Tensor({3, 3}))), DimensionError);
}

TEST(RsmMask, StrictThreshold) {
  const Tensor sr = Tensor::from({0.2, 0.3, 0.5, -1.0});
  const Tensor s = Tensor::from({0.1, 0.2, 0.1, -1.0});
  const Mask m = rsm_mask(sr, s, 0.1);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(m.values[i], (sr[i] - s[i]) > 0.1 ? 1.0 : 0.0);
  EXPECT_EQ(m.values[2], 1.0);
  EXPECT_EQ(m.values[3], 0.0);
  EXPECT_EQ(rsm_mask(Tensor::from({1.0}), Tensor::from({0.9}), 0.1 + 1e-12).values[0], 0.0);
}

TEST(RsmMask, ShapeMismatch) {
  EXPECT_THROW(rsm_mask(Tensor({2, 2}), Tensor({4}), 0.1), DimensionError);
}

TEST(RsmMask, InfiniteTauSilencesGeneralizationLoss) {
  std::mt19937_64 rng(4);
  Tape tape;
  const Var gr = gram(tape.constant(random_features({1, 4, 3, 3}, rng)));
  const Var gsr = gram(tape.variable(random_features({1, 4, 3, 3}, rng)));
  const Var gs = gram(tape.constant(random_features({1, 4, 3, 3}, rng)));
  const std::vector<Mask> masks{rsm_mask(gsr.value(), gs.value(), std::numeric_limits<double>::infinity())};
  const std::vector<Var> a{gr}, b{gsr};
  const std::vector<double> v{1.0};
  EXPECT_EQ(texture_gen_loss(a, b, masks, v).value().item(), 0.0);
}

TEST(LayerWeights, FivePowers) {
  const auto w = default_layer_weights(4);
  ASSERT_EQ(w.size(), 4u);
  EXPECT_DOUBLE_EQ(w[0], 5e-3);
  EXPECT_DOUBLE_EQ(w[1], 5e-4);
  EXPECT_DOUBLE_EQ(w[2], 5e-5);
  EXPECT_DOUBLE_EQ(w[3], 5e-6);
}

TEST(TextureLosses, ZeroWhenGramsAgree) {
  std::mt19937_64 rng(5);
  Tape tape;
  const Tensor f = random_features({2, 3, 4, 4}, rng);
  const std::vector<Var> a{gram(tape.constant(f))}, b{gram(tape.variable(f))};
  const std::vector<double> u{1.0};
  EXPECT_EQ(texture_reg_loss(a, b, u).value().item(), 0.0);
  const std::vector<Mask> m{full_mask(a[0].shape())};
  EXPECT_EQ(texture_gen_loss(a, b, m, u).value().item(), 0.0);
}

TEST(TextureLosses, WeightedFrobeniusSum) {
  Tape tape;
  const std::vector<Var> ref{tape.constant(Tensor({1, 2, 2}, {1, 0, 0, 1})),
                             tape.constant(Tensor({1, 1, 1}, {2}))};
  const std::vector<Var> task{tape.variable(Tensor({1, 2, 2}, {0, 0, 0, 0})),
                              tape.variable(Tensor({1, 1, 1}, {-1}))};
  const std::vector<double> u{2.0, 0.5};
  EXPECT_NEAR(texture_reg_loss(ref, task, u).value().item(), 2.0 * std::sqrt(2.0) + 0.5 * 3.0, 1e-15);
}

TEST(TextureLosses, ReferenceGramsGetNoGradient) {
  std::mt19937_64 rng(6);
  Tape tape;
  const Var fr = tape.variable(random_features({1, 3, 2, 2}, rng));
  const Var ft = tape.variable(random_features({1, 3, 2, 2}, rng));
  const std::vector<Var> a{gram(fr)}, b{gram(ft)};
  const std::vector<double> u{1.0};
  const Gradients g = tape.backward(texture_reg_loss(a, b, u));
  EXPECT_FALSE(g.contains(fr));
  EXPECT_TRUE(g.contains(ft));
}

TEST(TextureLosses, MaskSelectsEntries) {
  Tape tape;
  const std::vector<Var> gs{tape.constant(Tensor({2, 2}, {1, 2, 3, 4}))};
  const std::vector<Var> gsr{tape.constant(Tensor({2, 2}, {0, 0, 0, 0}))};
  const std::vector<Mask> m{{Tensor({2, 2}, {0, 1, 0, 1}), 0.1}};
  const std::vector<double> v{1.0};
  EXPECT_NEAR(texture_gen_loss(gs, gsr, m, v).value().item(), std::sqrt(4.0 + 16.0), 1e-15);
}

TEST(TextureLosses, LayerCountMismatch) {
  Tape tape;
  const std::vector<Var> one{tape.constant(Tensor({1, 1, 1}))};
  const std::vector<double> two{1.0, 2.0};
  EXPECT_THROW(texture_reg_loss(one, one, two), ContractError);
}

TEST(TextureLosses, RawConsistencyNormalisesBySize) {
  Tape tape;
  const std::vector<Var> a{tape.constant(Tensor::full({1, 2, 2, 2}, 1.0))};
  const std::vector<Var> b{tape.constant(Tensor({1, 2, 2, 2}))};
  const std::vector<double> w{1.0};
  EXPECT_NEAR(raw_feature_consistency(a, b, w).value().item(), std::sqrt(8.0) / 8.0, 1e-15);
}

TEST(MmdIdentity, GramDistanceIsScaledPolynomialMmd) {
  // With unnormalised grams over N positions, ||G_a - G_b||^2 = N^2 MMD^2
  // under k(x, y) = (x . y)^2 on the per-position channel vectors.
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = 3 + trial % 3, n = 16;
    const Tensor fa = random_features({1, c, 4, 4}, rng), fb = random_features({1, c, 4, 4}, rng);
    Tape tape;
    const double scale = static_cast<double>(c * n);
    const Tensor d = ops::sub(gram(tape.constant(fa)), gram(tape.constant(fb))).value();
    double lhs = 0.0;
    for (double v : d.data()) lhs += v * v * scale * scale;
    auto k = [&](const Tensor& x, std::size_t i, const Tensor& y, std::size_t j) {
      double dot = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) dot += x[ch * n + i] * y[ch * n + j];
      return dot * dot;
    };
    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        kaa += k(fa, i, fa, j);
        kbb += k(fb, i, fb, j);
        kab += k(fa, i, fb, j);
      }
    const double nn = static_cast<double>(n * n);
    const double mmd2 = kaa / nn + kbb / nn - 2.0 * kab / nn;
    EXPECT_NEAR(lhs / (nn * mmd2), 1.0, 1e-9);
  }
}

TEST(GramCsv, HeaderAndRows) {
  std::ostringstream s;
  write_gram_csv(s, Tensor({2, 2}, {1, 2, 2, 4}), 3);
  EXPECT_EQ(s.str(), "# layer=3,channels=2,normalization=CHW\n1,2\n2,4\n");
}
