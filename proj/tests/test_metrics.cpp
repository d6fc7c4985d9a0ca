#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "tversky/metrics.hpp"

using namespace tversky;
using namespace tversky::metrics;

namespace {

Tensor vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

}  // namespace

TEST(Binarize, ThresholdIsInclusive) {
  EXPECT_EQ(binarize(vec({0.5, 0.49999, 0.9})).values(), (std::vector<double>{1, 0, 1}));
  EXPECT_EQ(binarize(vec({0.0, 0.0})).sum(), 0.0);
  EXPECT_EQ(binarize(vec({0.0, 0.3, 1.0}), 0.0).sum(), 3.0);
  EXPECT_THROW(binarize(vec({0.5}), 1.5), ConfigError);
}

TEST(Confusion, HandCount) {
  EXPECT_EQ(confusion(vec({1, 1, 0, 1, 0}), vec({1, 0, 0, 1, 1})), (ConfusionCounts{2, 1, 1, 1}));
  const Tensor g = vec({1, 0, 1, 1, 0, 0});
  const auto same = confusion(g, g);
  EXPECT_EQ(same.fp + same.fn, 0u);
  Tensor inv = g;
  for (double& v : inv.data()) v = 1.0 - v;
  const auto opposite = confusion(inv, g);
  EXPECT_EQ(opposite.tp + opposite.tn, 0u);
  EXPECT_THROW(confusion(vec({1}), vec({1, 0})), ConfigError);
}

TEST(Scores, KnownCounts) {
  const ConfusionCounts c{5, 3, 2, 10};
  EXPECT_NEAR(dsc(c), 10.0 / 15.0, 1e-15);
  EXPECT_NEAR(f2(c), 25.0 / 36.0, 1e-15);
  EXPECT_NEAR(sensitivity(c), 5.0 / 7.0, 1e-15);
  EXPECT_NEAR(specificity(c), 10.0 / 13.0, 1e-15);
  EXPECT_NEAR(precision(c), 5.0 / 8.0, 1e-15);
  EXPECT_NEAR(jaccard(c), 0.5, 1e-15);
}

TEST(Scores, PerfectAndMissed) {
  const ConfusionCounts perfect{4, 0, 0, 7};
  EXPECT_EQ(dsc(perfect), 1.0);
  EXPECT_EQ(f2(perfect), 1.0);
  EXPECT_EQ(sensitivity(perfect), 1.0);
  EXPECT_EQ(specificity(perfect), 1.0);
  const ConfusionCounts missed{0, 2, 3, 5};
  EXPECT_EQ(dsc(missed), 0.0);
  EXPECT_EQ(f2(missed), 0.0);
  EXPECT_EQ(sensitivity(missed), 0.0);
}

TEST(Scores, EmptyDenominatorsScoreOne) {
  const ConfusionCounts nothing{0, 0, 0, 9};
  EXPECT_EQ(dsc(nothing), 1.0);
  EXPECT_EQ(f2(nothing), 1.0);
  EXPECT_EQ(sensitivity(nothing), 1.0);
  EXPECT_EQ(precision(nothing), 1.0);
  EXPECT_EQ(specificity(ConfusionCounts{3, 0, 0, 0}), 1.0);
}

TEST(Scores, MatchBruteForceOnRandomVolumes) {
  std::mt19937_64 rng(31);
  std::bernoulli_distribution coin(0.2);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor p({3, 4, 5}), g({3, 4, 5});
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = coin(rng);
      g[i] = coin(rng);
    }
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      tp += p[i] * g[i];
      fp += p[i] * (1 - g[i]);
      fn += (1 - p[i]) * g[i];
      tn += (1 - p[i]) * (1 - g[i]);
    }
    const auto c = confusion(p, g);
    ASSERT_EQ(c, (ConfusionCounts{std::uint64_t(tp), std::uint64_t(fp), std::uint64_t(fn), std::uint64_t(tn)}));
    if (tp + fp + fn > 0) {
      EXPECT_NEAR(dsc(c), 2 * tp / (2 * tp + fp + fn), 1e-15);
      EXPECT_NEAR(f2(c), 5 * tp / (5 * tp + 4 * fn + fp), 1e-15);
    }
  }
}

TEST(PrCurve, WorkedExample) {
  const auto curve = pr_curve(vec({0.9, 0.8, 0.7, 0.3}), vec({1, 1, 0, 1}));
  ASSERT_EQ(curve.points.size(), 4u);
  const double expect_p[] = {1.0, 1.0, 2.0 / 3.0, 0.75};
  const double expect_r[] = {1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(curve.points[k].precision, expect_p[k], 1e-12);
    EXPECT_NEAR(curve.points[k].recall, expect_r[k], 1e-12);
  }
  EXPECT_NEAR(curve.apr, 11.0 / 12.0, 1e-12);
  EXPECT_NEAR(curve.apr, 0.9167, 1e-4);
}

TEST(PrCurve, PerfectRankingAndTies) {
  EXPECT_DOUBLE_EQ(pr_curve(vec({0.9, 0.8, 0.2, 0.1}), vec({1, 1, 0, 0})).apr, 1.0);
  const auto flat = pr_curve(vec({0.4, 0.4, 0.4, 0.4, 0.4}), vec({1, 0, 0, 1, 0}));
  ASSERT_EQ(flat.points.size(), 1u);
  EXPECT_NEAR(flat.apr, 0.4, 1e-15);
}

TEST(PrCurve, TrapezoidRule) {
  const auto curve = pr_curve(vec({0.9, 0.8, 0.7, 0.3}), vec({1, 1, 0, 1}), AreaRule::trapezoid);
  // segments: (0..1/3 at 1), (1/3..2/3 at 1), flat, (2/3..1 from 2/3 to 3/4)
  EXPECT_NEAR(curve.apr, 1.0 / 3 + 1.0 / 3 + (1.0 / 3) * (2.0 / 3 + 0.75) / 2, 1e-12);
}

TEST(PrCurve, Errors) {
  EXPECT_THROW(pr_curve(vec({0.2, 0.3}), vec({0, 0})), ConfigError);
  EXPECT_THROW(pr_curve(vec({NAN, 0.3}), vec({1, 0})), NumericError);
}

TEST(PrCurve, OperatingPointMatchesBinarizedCounts) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor s({200}), g({200});
  for (std::size_t i = 0; i < 200; ++i) {
    s[i] = std::round(u(rng) * 50) / 50;
    g[i] = u(rng) < 0.3 ? 1.0 : 0.0;
  }
  const auto curve = pr_curve(s, g);
  for (double t : {0.0, 0.1, 0.5, 0.74, 0.98, 1.0}) {
    const auto c = confusion(binarize(s, t), g);
    const auto p = curve.at_threshold(t);
    EXPECT_NEAR(p.recall, sensitivity(c), 1e-15) << t;
    EXPECT_NEAR(p.precision, precision(c), 1e-15) << t;
  }
}

TEST(PrCsv, RoundTripWithSixDecimals) {
  const auto curve = pr_curve(vec({0.9, 0.8, 0.7, 0.3}), vec({1, 1, 0, 1}));
  std::ostringstream os;
  write_pr_csv(os, curve);
  EXPECT_EQ(os.str(),
            "threshold,precision,recall\n"
            "0.900000,1.000000,0.333333\n"
            "0.800000,1.000000,0.666667\n"
            "0.700000,0.666667,0.666667\n"
            "0.300000,0.750000,1.000000\n");
  const auto path = (std::filesystem::temp_directory_path() / "tversky_pr_roundtrip.csv").string();
  write_pr_csv(path, curve);
  const auto back = read_pr_csv(path);
  ASSERT_EQ(back.size(), 4u);
  EXPECT_NEAR(back[2].precision, 2.0 / 3.0, 1e-6);
  std::ofstream(path) << "a,b\n";
  EXPECT_THROW(read_pr_csv(path), IoError);
  std::filesystem::remove(path);
}
