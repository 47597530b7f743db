#include "bitsearch/error.hpp"
#include "bitsearch/pareto.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace bitsearch;
using namespace bitsearch::testing;

namespace {

ParetoPoint pt(double quant, double acc, std::vector<int> bits = {}) {
  return ParetoPoint{QuantAssignment(std::move(bits)), quant, acc};
}

// O(n^2) reference: keep every point no other point dominates, then drop
// exact duplicates the same way the frontier does.
std::set<std::pair<double, double>> brute_frontier(const std::vector<ParetoPoint>& pts) {
  std::set<std::pair<double, double>> out;
  for (const auto& p : pts) {
    bool dominated = false;
    for (const auto& q : pts) {
      if (q.quant <= p.quant && q.acc >= p.acc && (q.quant < p.quant || q.acc > p.acc)) {
        dominated = true;
        break;
      }
    }
    if (!dominated) out.emplace(p.quant, p.acc);
  }
  return out;
}

std::vector<ParetoPoint> random_cloud(Rng& rng, std::size_t n, bool coarse) {
  std::vector<ParetoPoint> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i].assignment = QuantAssignment({static_cast<int>(i)});
    if (coarse) {
      pts[i].quant = static_cast<double>(rng.below(8) + 1) / 8.0;
      pts[i].acc = static_cast<double>(rng.below(11)) / 10.0;
    } else {
      pts[i].quant = rng.uniform(0.0, 1.0);
      pts[i].acc = rng.uniform(0.0, 1.0);
    }
  }
  return pts;
}

NetworkSpec spec_with(std::size_t layers) {
  std::vector<std::size_t> widths(layers, 4);
  return build_spec(dense_arch(3, widths));
}

}  // namespace

TEST(Dominance, Examples) {
  EXPECT_TRUE(is_dominated(pt(0.6, 0.8), pt(0.5, 0.9)));
  EXPECT_FALSE(is_dominated(pt(0.5, 0.9), pt(0.5, 0.9)));
  EXPECT_FALSE(is_dominated(pt(0.3, 0.7), pt(0.5, 0.9)));
  EXPECT_TRUE(is_dominated(pt(0.5, 0.8), pt(0.5, 0.9)));
}

TEST(Frontier, Examples) {
  auto single = pareto_frontier({pt(0.4, 0.7)});
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].quant, 0.4);

  auto two = pareto_frontier({pt(0.5, 0.9), pt(0.6, 0.8)});
  ASSERT_EQ(two.size(), 1u);
  EXPECT_EQ(two[0].quant, 0.5);

  auto three = pareto_frontier({pt(0.5, 0.9), pt(0.3, 0.7), pt(0.4, 0.85)});
  ASSERT_EQ(three.size(), 3u);
  EXPECT_EQ(three[0].quant, 0.3);
  EXPECT_EQ(three[2].quant, 0.5);
}

TEST(Frontier, EmptyInputThrows) { EXPECT_THROW(pareto_frontier({}), Error); }

TEST(Frontier, DuplicatesKeepSmallestAssignment) {
  auto f = pareto_frontier({pt(0.5, 0.9, {4, 2}), pt(0.5, 0.9, {2, 4})});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].assignment, QuantAssignment({2, 4}));
}

TEST(Frontier, MatchesQuadraticOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const auto n = static_cast<std::size_t>(rng.below(400) + 1);
    const auto pts = random_cloud(rng, n, trial % 2 == 0);
    const auto front = pareto_frontier(pts);
    std::set<std::pair<double, double>> got;
    for (const auto& p : front) got.emplace(p.quant, p.acc);
    EXPECT_EQ(got.size(), front.size());
    EXPECT_EQ(got, brute_frontier(pts));
  }
}

TEST(Frontier, NoMemberDominatesAnother) {
  Rng rng(5);
  const auto front = pareto_frontier(random_cloud(rng, 500, false));
  for (const auto& p : front)
    for (const auto& q : front) EXPECT_FALSE(is_dominated(p, q));
  EXPECT_TRUE(std::is_sorted(front.begin(), front.end(),
                             [](const auto& a, const auto& b) { return a.quant < b.quant; }));
}

TEST(Frontier, PermutationInvariant) {
  Rng rng(8);
  auto pts = random_cloud(rng, 300, true);
  const auto ref = pareto_frontier(pts);
  for (int i = 0; i < 5; ++i) {
    rng.shuffle(pts.begin(), pts.end());
    const auto again = pareto_frontier(pts);
    ASSERT_EQ(again.size(), ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
      EXPECT_EQ(again[k].assignment, ref[k].assignment);
      EXPECT_EQ(again[k].quant, ref[k].quant);
      EXPECT_EQ(again[k].acc, ref[k].acc);
    }
  }
}

TEST(Enumerate, CountsAndOrder) {
  const AccuracyFn oracle = [](const QuantAssignment& a) { return a.average_bits() / 8.0; };
  const auto two = enumerate_space(spec_with(2), {2, 8}, CostParams{}, oracle);
  ASSERT_EQ(two.size(), 4u);
  EXPECT_EQ(two[0].assignment, QuantAssignment({2, 2}));
  EXPECT_EQ(two[1].assignment, QuantAssignment({2, 8}));
  EXPECT_EQ(two[3].assignment, QuantAssignment({8, 8}));

  const auto four = enumerate_space(spec_with(4), {2, 4, 8}, CostParams{}, oracle);
  ASSERT_EQ(four.size(), 81u);
  for (const auto& p : four) {
    const auto& b = p.assignment.bits;
    if (std::all_of(b.begin(), b.end(), [&](int x) { return x == b[0]; })) {
      EXPECT_DOUBLE_EQ(p.quant, b[0] / 8.0);
    }
  }
}

TEST(Enumerate, ParallelMatchesSerial) {
  const AccuracyFn oracle = [](const QuantAssignment& a) { return 1.0 / a.average_bits(); };
  const auto serial = enumerate_space(spec_with(4), {2, 4, 8}, CostParams{}, oracle);
  const auto parallel = enumerate_space(spec_with(4), {2, 4, 8}, CostParams{}, oracle, {10000, 4});
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].assignment, parallel[i].assignment);
    EXPECT_EQ(serial[i].acc, parallel[i].acc);
  }
}

TEST(Enumerate, CapIsEnforced) {
  const AccuracyFn oracle = [](const QuantAssignment&) { return 1.0; };
  EXPECT_THROW(enumerate_space(spec_with(6), {2, 3, 4, 5, 6, 7, 8}, CostParams{}, oracle, {1000, 1}),
               SpaceTooLargeError);
  EXPECT_EQ(space_size(4, 3, 100), 81u);
  EXPECT_EQ(space_size(40, 7, 10000), 10001u);
}

TEST(Enumerate, DivergedPointsScoreZero) {
  const AccuracyFn oracle = [](const QuantAssignment& a) -> double {
    if (a[0] == 2) throw TrainingDivergedError(0, "diverged");
    return 0.9;
  };
  const auto pts = enumerate_space(spec_with(2), {2, 8}, CostParams{}, oracle);
  EXPECT_EQ(pts[0].acc, 0.0);
  EXPECT_EQ(pts[3].acc, 0.9);
}

TEST(Validate, FrontierMemberPassesAtZeroTolerance) {
  const auto front = pareto_frontier({pt(0.3, 0.7), pt(0.4, 0.85), pt(0.5, 0.9)});
  const auto r = validate_solution(pt(0.4, 0.85), front, 0.0, 0.0);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.nearest.quant, 0.4);
  EXPECT_EQ(r.quant_gap, 0.0);
}

TEST(Validate, DominatedBeyondToleranceFails) {
  const auto front = pareto_frontier({pt(0.25, 0.99), pt(0.5, 1.0)});
  EXPECT_FALSE(validate_solution(pt(1.0, 1.0), front, 0.0, 0.0).pass);
  EXPECT_FALSE(validate_solution(pt(0.4, 0.9), front, 0.05, 0.005).pass);
}

TEST(Validate, WithinToleranceBandPasses) {
  const auto front = pareto_frontier({pt(0.25, 0.99), pt(0.5, 1.0)});
  const auto r = validate_solution(pt(0.29, 0.986), front, 0.05, 0.005);
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.quant_gap, 0.04, 1e-12);
  EXPECT_NEAR(r.acc_gap, 0.004, 1e-12);
}
