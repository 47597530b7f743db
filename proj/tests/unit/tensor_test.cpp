#include "bitsearch/error.hpp"
#include "bitsearch/rng.hpp"
#include "bitsearch/tensor.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <set>

using namespace bitsearch;

TEST(Tensor, SizeMatchesShapeProduct) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(shape_size({2, 3, 4}), 24u);
  EXPECT_EQ(shape_to_string({2, 3, 4}), "[2x3x4]");
}

TEST(Tensor, RejectsDataOfWrongLength) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, ReshapeKeepsDataAndRejectsNewSize) {
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.values(), t.values());
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(Tensor, SliceRowsCopiesLeadingAxisRange) {
  Tensor t({3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor s = t.slice_rows(1, 2);
  EXPECT_EQ(s.shape(), (Shape{2, 2}));
  EXPECT_EQ(s.values(), (std::vector<double>{3, 4, 5, 6}));
  EXPECT_THROW(t.slice_rows(2, 2), DimensionError);
}

TEST(Tensor, AllFiniteDetectsNanAndInf) {
  Tensor t({2});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, ChildStreamsAreDistinctAndStable) {
  EXPECT_NE(child_seed(1, "init"), child_seed(1, "data"));
  EXPECT_NE(child_seed(1, "init"), child_seed(2, "init"));
  EXPECT_EQ(child_seed(1, "init"), child_seed(1, "init"));
  // Frozen so that a change to the derivation is caught.
  EXPECT_EQ(mix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Rng, UniformBelowStaysInRange) {
  Rng rng(7);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const auto k = rng.below(5);
    EXPECT_LT(k, 5u);
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 5u);
}

TEST(Rng, NormalHasUnitMoments) {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(3);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  rng.shuffle(v.begin(), v.end());
  std::multiset<int> s(v.begin(), v.end());
  EXPECT_EQ(s, (std::multiset<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}
