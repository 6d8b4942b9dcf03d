#include <gtest/gtest.h>

#include <set>

#include "tldr/error.hpp"
#include "tldr/synthdata.hpp"

using namespace tldr;

TEST(SourceSpec, FiveClassesWithTextureOnlyPair) {
  const DomainSpec spec = default_source_spec(0);
  ASSERT_EQ(spec.num_classes(), 5u);
  EXPECT_EQ(spec.classes[kBandA].shape, spec.classes[kBandB].shape);
  EXPECT_NO_THROW(validate(spec));
}

TEST(SourceSpec, ValidateRejectsDegenerateSpecs) {
  DomainSpec spec = default_source_spec(0);
  DomainSpec few = spec;
  few.classes.resize(2);
  EXPECT_THROW(validate(few), ConfigError);
  DomainSpec same = spec;
  same.classes[kBandB].texture = same.classes[kBandA].texture;
  same.classes[kBandB].shape = ShapeFamily::horizontal_band;
  // The remaining families are all distinct, so no texture-only pair is left.
  for (std::size_t k = 0; k < same.classes.size(); ++k) {
    if (k != kBandA && k != kBandB && same.classes[k].shape == ShapeFamily::horizontal_band) {
      same.classes[k].shape = ShapeFamily::ellipse;
    }
  }
  EXPECT_THROW(validate(same), ConfigError);
}

TEST(Samples, DeterministicPerIndex) {
  const DomainSpec spec = default_source_spec(4);
  const SegSample a = generate_sample(spec, 17);
  const SegSample b = generate_sample(spec, 17);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.label, b.label);
  EXPECT_NE(generate_sample(spec, 18).image, a.image);
}

TEST(Samples, ShapesAndRanges) {
  const DomainSpec spec = default_source_spec(2, 48, 32);
  std::set<int> seen;
  for (std::size_t i = 0; i < 20; ++i) {
    const SegSample s = generate_sample(spec, i);
    EXPECT_EQ(s.image.shape(), (Shape{3, 48, 32}));
    ASSERT_EQ(s.label.size(), 48u * 32u);
    for (double v : s.image.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (int l : s.label) {
      EXPECT_GE(l, 0);
      EXPECT_LT(l, 5);
      seen.insert(l);
    }
  }
  EXPECT_EQ(seen.size(), 5u);
}

TEST(Samples, ShiftKeepsLayout) {
  const auto [source, targets] = make_domain_pair(3);
  const SegSample a = generate_sample(targets[0], 5);
  const SegSample b = render_unshifted(targets[0], 5);
  EXPECT_EQ(a.label, b.label);
  EXPECT_NE(a.image, b.image);
}

TEST(DomainPair, TargetsShareClassesButShiftAppearance) {
  DomainPairOptions opts;
  opts.num_targets = 4;
  const auto [source, targets] = make_domain_pair(11, opts);
  ASSERT_EQ(targets.size(), 4u);
  for (const DomainSpec& t : targets) {
    EXPECT_EQ(t.num_classes(), source.num_classes());
    for (std::size_t k = 0; k < t.num_classes(); ++k) {
      EXPECT_EQ(t.classes[k].name, source.classes[k].name);
      EXPECT_EQ(t.classes[k].shape, source.classes[k].shape);
    }
    EXPECT_GE(std::abs(t.shift.hue_rotation), 0.5);
    EXPECT_NO_THROW(validate(t));
  }
  const auto again = make_domain_pair(11, opts);
  EXPECT_EQ(to_json(again.second[2]), to_json(targets[2]));
}

TEST(DomainSpecJson, RoundTrip) {
  const auto [source, targets] = make_domain_pair(5);
  const DomainSpec back = domain_spec_from_json(to_json(targets[1]));
  EXPECT_EQ(to_json(back), to_json(targets[1]));
  EXPECT_EQ(generate_sample(back, 3).image, generate_sample(targets[1], 3).image);
  EXPECT_THROW(domain_spec_from_json(nlohmann::json{{"name", 3}}), ConfigError);
}

TEST(StylePool, DeterministicAndVaried) {
  const auto a = generate_style_pool(1, 4, 32, 32);
  const auto b = generate_style_pool(1, 4, 32, 32);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a[i].image, b[i].image);
  EXPECT_NE(a[0].image, a[1].image);
}

TEST(ClassPatch, FilledWithOneTexture) {
  const DomainSpec spec = default_source_spec(0);
  const Tensor p = render_class_patch(spec, kBandA, 16, 3);
  EXPECT_EQ(p.shape(), (Shape{3, 16, 16}));
  EXPECT_EQ(render_class_patch(spec, kBandA, 16, 3), p);
  EXPECT_THROW(render_class_patch(spec, 9, 16, 3), std::out_of_range);
}
