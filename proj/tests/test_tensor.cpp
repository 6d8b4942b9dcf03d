#include <gtest/gtest.h>

#include <sstream>

#include "tldr/error.hpp"
#include "tldr/serialize.hpp"
#include "tldr/tensor.hpp"

using namespace tldr;

TEST(Tensor, DefaultIsScalarZero) {
  Tensor t;
  EXPECT_EQ(t.rank(), 0u);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(t.item(), 0.0);
}

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_EQ(t[4], 5.0);
  EXPECT_EQ(shape_str(t.shape()), "[2x3]");
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor t = Tensor::from({1, 2, 3, 4});
  Tensor r = t.reshaped({2, 2});
  EXPECT_EQ(r.shape(), (Shape{2, 2}));
  EXPECT_EQ(r.storage(), t.storage());
  EXPECT_THROW(t.reshaped({3}), DimensionError);
}

TEST(Tensor, ItemNeedsSingleElement) {
  EXPECT_THROW(Tensor::from({1, 2}).item(), DimensionError);
}

TEST(Tensor, FiniteCheck) {
  Tensor t = Tensor::full({3}, 1.0);
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
}

TEST(Serialize, TensorRoundTripIsExact) {
  Tensor t({2, 2, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 1.0 / (1.0 + static_cast<double>(i)) - 0.3;
  std::stringstream s;
  write_tensor(s, t);
  std::size_t offset = 0;
  Tensor back = read_tensor(s, offset);
  EXPECT_EQ(back, t);
  EXPECT_EQ(offset, s.str().size());
}

TEST(Serialize, TruncatedRecordReportsOffset) {
  std::stringstream s;
  write_tensor(s, Tensor::full({4}, 2.0));
  std::string bytes = s.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream cut(bytes);
  std::size_t offset = 0;
  try {
    read_tensor(cut, offset);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset(), 0u);
    EXPECT_LE(e.offset(), bytes.size());
  }
}

TEST(Serialize, U32IsLittleEndian) {
  std::stringstream s;
  write_u32(s, 0x01020304u);
  const std::string b = s.str();
  ASSERT_EQ(b.size(), 4u);
  EXPECT_EQ(static_cast<unsigned char>(b[0]), 0x04);
  EXPECT_EQ(static_cast<unsigned char>(b[3]), 0x01);
  std::size_t offset = 0;
  EXPECT_EQ(read_u32(s, offset), 0x01020304u);
}
