#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "tldr/analyze.hpp"
#include "tldr/error.hpp"

using namespace tldr;

namespace {

StylePool small_pool(std::uint64_t seed, std::size_t n, std::size_t size) {
  std::vector<Tensor> images;
  for (const auto& s : generate_style_pool(seed, n, size, size)) images.push_back(s.image);
  return StylePool(images);
}

}  // namespace

TEST(Miou, HandComputedCase) {
  // Class 0: tp 2, fp 0, fn 1 -> 2/3. Class 1: tp 1, fp 1, fn 0 -> 1/2.
  ConfusionMatrix cm(2);
  const std::vector<int> truth{0, 0, 0, 1};
  const std::vector<int> pred{0, 0, 1, 1};
  cm.add(truth, pred);
  const IouReport r = miou(cm);
  EXPECT_DOUBLE_EQ(r.per_class[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.per_class[1], 0.5);
  EXPECT_DOUBLE_EQ(r.mean, 7.0 / 12.0);
}

TEST(Miou, AbsentClassIsSkipped) {
  ConfusionMatrix cm(3);
  cm.add(0, 0, 4);
  cm.add(1, 0, 4);
  const IouReport r = miou(cm);
  EXPECT_TRUE(std::isnan(r.per_class[2]));
  EXPECT_DOUBLE_EQ(r.mean, 0.25);
  EXPECT_THROW(miou(ConfusionMatrix(3)), DegenerateInputError);
}

TEST(Miou, IgnoredPixelsAndBadLabels) {
  ConfusionMatrix cm(2);
  const std::vector<int> truth{0, 255, 1};
  const std::vector<int> pred{0, 1, 1};
  cm.add(truth, pred);
  EXPECT_EQ(cm.total(), 2u);
  const std::vector<int> bad{0, 2, 1};
  EXPECT_THROW(cm.add(bad, pred), LabelError);
  const std::vector<int> short_pred{0};
  EXPECT_THROW(cm.add(truth, short_pred), DimensionError);
}

TEST(Miou, MatchesBruteForceOnRandomMaps) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 5);
    const std::size_t n = 20 + rng() % 200;
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng() % k);
      pred[i] = rng() % 3 == 0 ? static_cast<int>(rng() % k) : truth[i];
    }
    ConfusionMatrix cm(k);
    cm.add(truth, pred);
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < k; ++c) {
      std::size_t inter = 0, uni = 0;
      for (std::size_t i = 0; i < n; ++i) {
        inter += truth[i] == c && pred[i] == c;
        uni += truth[i] == c || pred[i] == c;
      }
      if (uni == 0) continue;
      sum += static_cast<double>(inter) / static_cast<double>(uni);
      ++counted;
    }
    EXPECT_NEAR(miou(cm).mean, sum / counted, 1e-12);
  }
}

TEST(MiLowerBound, KnownValues) {
  const std::vector<double> a{1, 2, 3, 4};
  const std::vector<double> orth{1, -1, -1, 1};  // corr(a, orth) = 0
  EXPECT_NEAR(mi_lower_bound(a, orth), 0.0, 1e-15);
  EXPECT_NEAR(mi_lower_bound(a, a), -0.5 * std::log(1e-8), 1e-9);
  // corr = 1/2 gives 1/2 ln 2.
  const std::vector<double> x{1, 0, -1};
  const std::vector<double> y{1, -1, 0};
  EXPECT_NEAR(mi_lower_bound(x, y), 0.5 * std::log(2.0), 1e-12);
}

TEST(MiLowerBound, SymmetricAndAffineInvariant) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(30), b(30), c(30);
    for (std::size_t i = 0; i < 30; ++i) {
      a[i] = n(rng);
      b[i] = 0.5 * a[i] + n(rng);
      c[i] = 3.0 * b[i] - 7.0;
    }
    EXPECT_NEAR(mi_lower_bound(a, b), mi_lower_bound(b, a), 1e-12);
    EXPECT_NEAR(mi_lower_bound(a, b), mi_lower_bound(a, c), 1e-10);
  }
}

TEST(MiLowerBound, Errors) {
  const std::vector<double> a{1, 2, 3};
  const std::vector<double> b{1, 2};
  const std::vector<double> flat{2, 2, 2};
  const std::vector<double> one{1};
  EXPECT_THROW(mi_lower_bound(a, b), DimensionError);
  EXPECT_THROW(mi_lower_bound(a, flat), DegenerateInputError);
  EXPECT_THROW(mi_lower_bound(one, one), DegenerateInputError);
}

TEST(PairSet, SharesContentAndStyleAsDescribed) {
  const DomainSpec domain = default_source_spec(2, 32, 32);
  const StylePool pool = small_pool(2, 6, 32);
  const PairSet a = build_pair_set(domain, pool, 3, 9);
  const PairSet b = build_pair_set(domain, pool, 3, 9);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const PairSet::Entry& e = a.entries[i];
    EXPECT_EQ(e.anchor, b.entries[i].anchor);
    EXPECT_NE(e.anchor, e.texture_partner);
    EXPECT_NE(e.anchor, e.shape_partner);
    EXPECT_NE(e.texture_partner, e.unrelated);
    EXPECT_EQ(e.anchor.shape(), (Shape{3, 32, 32}));
  }
}

TEST(Dimensionality, PercentagesSumToHundred) {
  const DomainSpec domain = default_source_spec(1, 32, 32);
  const PairSet pairs = build_pair_set(domain, small_pool(1, 6, 32), 4, 2);
  const Encoder enc = build_encoder({});
  const auto dims = dimensionality(enc, pairs, 512, 0);
  ASSERT_EQ(dims.size(), kEncoderStages);
  for (const auto& d : dims) {
    EXPECT_NEAR(d.texture_percent + d.shape_percent + d.residual_percent, 100.0, 1e-9);
    EXPECT_GE(d.texture_percent, 0.0);
    EXPECT_GE(d.shape_percent, 0.0);
  }
  const auto again = dimensionality(enc, pairs, 512, 0);
  EXPECT_EQ(again[1].texture_score, dims[1].texture_score);
}

TEST(Dimensionality, IdenticalImagesSplitEvenly) {
  const Tensor img = generate_sample(default_source_spec(0, 32, 32), 0).image;
  PairSet pairs;
  for (int i = 0; i < 2; ++i) pairs.entries.push_back({img, img, img, img});
  for (const auto& d : dimensionality(build_encoder({}), pairs)) {
    EXPECT_NEAR(d.texture_percent, 100.0 / 3.0, 1e-9);
    EXPECT_NEAR(d.shape_percent, 100.0 / 3.0, 1e-9);
  }
}

TEST(Evaluate, DeterministicAndChecksClassCount) {
  const DomainSpec domain = default_source_spec(4, 32, 32);
  const Encoder enc = build_encoder({});
  const Decoder dec = build_decoder(decoder_config_for(enc.config(), 5, 1));
  const Evaluation a = evaluate(enc, dec, domain, 3);
  const Evaluation b = evaluate(enc, dec, domain, 3);
  EXPECT_EQ(a.confusion, b.confusion);
  EXPECT_EQ(a.confusion.total(), 3u * 32 * 32);
  EXPECT_EQ(a.domain, domain.name);
  EXPECT_EQ(a.class_names.size(), 5u);
  const Decoder wrong = build_decoder(decoder_config_for(enc.config(), 4, 1));
  EXPECT_THROW(evaluate(enc, wrong, domain, 3), ConfigError);
}

TEST(Evaluate, PredictionsAreValidLabels) {
  const DomainSpec domain = default_source_spec(4, 32, 32);
  const Encoder enc = build_encoder({});
  const Decoder dec = build_decoder(decoder_config_for(enc.config(), 5, 1));
  const std::vector<Tensor> images{generate_sample(domain, 0).image};
  const auto labels = predict_labels(enc, dec, images);
  ASSERT_EQ(labels.size(), 1u);
  ASSERT_EQ(labels[0].size(), 32u * 32u);
  for (int l : labels[0]) {
    EXPECT_GE(l, 0);
    EXPECT_LT(l, 5);
  }
}

TEST(Reports, CsvLayouts) {
  Evaluation e;
  e.domain = "target1";
  e.class_names = {"a", "b"};
  e.confusion = ConfusionMatrix(2);
  e.confusion.add(0, 0, 3);
  e.confusion.add(1, 0, 1);
  e.iou = miou(e.confusion);
  std::ostringstream c, r;
  write_confusion_csv(c, e);
  write_class_report(r, e);
  EXPECT_EQ(c.str(), "truth\\pred,a,b\na,3,0\nb,1,0\n");
  EXPECT_EQ(r.str().substr(0, r.str().find('\n')), "domain,class,iou");
  EXPECT_NE(r.str().find("target1,mean,"), std::string::npos);
}
