// Prompt sampling and moment-identity oracles.

#include <cmath>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "mamba_icl/task_gen.hpp"

using namespace mamba_icl;

TEST(Prompt, ShapesAtDefaultSize) {
  Rng rng = make_stream(1);
  const PromptInstance p = sample_prompt(4, 50, rng);
  EXPECT_EQ(p.xs.rows(), 4);
  EXPECT_EQ(p.xs.cols(), 50);
  EXPECT_EQ(p.ys.size(), 50);
  EXPECT_EQ(p.x_q.size(), 4);
  EXPECT_EQ(p.tokens.rows(), 5);
  EXPECT_EQ(p.tokens.cols(), 51);
}

TEST(Prompt, LabelsAndTokenLayout) {
  Rng rng = make_stream(2);
  const PromptInstance p = sample_prompt(3, 7, rng);
  for (int i = 0; i < 7; ++i) {
    EXPECT_EQ(p.ys[i], p.w.dot(p.xs.col(i)));
    EXPECT_EQ(p.tokens.col(i).head(3), p.xs.col(i));
    EXPECT_EQ(p.tokens(3, i), p.ys[i]);
  }
  EXPECT_EQ(p.y_q, p.w.dot(p.x_q));
  EXPECT_EQ(p.tokens.col(7).head(3), p.x_q);
  EXPECT_EQ(p.tokens(3, 7), 0.0);
}

TEST(Prompt, SmallestInstance) {
  Vec w(1), xq(1);
  Mat xs(1, 1);
  w << 2.0;
  xs << 3.0;
  xq << -1.5;
  const PromptInstance p = make_prompt(w, xs, xq);
  ASSERT_EQ(p.tokens.cols(), 2);
  EXPECT_DOUBLE_EQ(p.tokens(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(p.tokens(1, 0), 6.0);
  EXPECT_DOUBLE_EQ(p.tokens(0, 1), -1.5);
  EXPECT_DOUBLE_EQ(p.tokens(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(p.y_q, -3.0);
}

TEST(Prompt, SameSeedSameData) {
  Rng a = make_stream(7, 3), b = make_stream(7, 3), c = make_stream(7, 4);
  const auto pa = sample_prompts(3, 5, 4, a);
  const auto pb = sample_prompts(3, 5, 4, b);
  const auto pc = sample_prompts(3, 5, 4, c);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(pa[i].tokens, pb[i].tokens);
  EXPECT_NE(pa[0].tokens, pc[0].tokens);
}

TEST(Prompt, RejectsBadSizes) {
  Rng rng = make_stream(0);
  EXPECT_THROW(sample_prompt(0, 5, rng), ConfigError);
  EXPECT_THROW(sample_prompt(3, 0, rng), ConfigError);
  EXPECT_THROW(sample_prompts(3, 5, -1, rng), ConfigError);
  EXPECT_THROW(make_prompt(Vec::Zero(2), Mat::Zero(3, 4), Vec::Zero(2)),
               DimensionError);
}

TEST(Sums, DecayFactorHalvesOverN) {
  for (int n : {1, 7, 50, 300}) EXPECT_NEAR(std::pow(decay_factor(n), n), 0.5, 1e-14);
  EXPECT_NEAR(decay_factor(50), 0.986232704493359, 1e-14);
}

TEST(Sums, GeometricSumsMatchLoops) {
  const double a = decay_factor(13);
  double s1 = 0, s2 = 0;
  for (int i = 0; i < 13; ++i) {
    s1 += std::pow(a, i + 1);
    s2 += std::pow(a, 2 * i + 2);
  }
  const GeometricSums g = geometric_sums(a, 13);
  EXPECT_NEAR(g.s1, s1, 1e-12);
  EXPECT_NEAR(g.s2, s2, 1e-12);
}

TEST(Sums, ContextWeightsFavourRecentTokens) {
  Rng rng = make_stream(3);
  const PromptInstance p = sample_prompt(2, 6, rng);
  const double a = decay_factor(6);
  Vec s = Vec::Zero(2);
  double v = 0, y = 0;
  for (int l = 1; l <= 6; ++l) {
    const double wt = std::pow(a, 6 - l + 1);
    s += wt * p.ys[l - 1] * p.xs.col(l - 1);
    v += wt * p.ys[l - 1] * p.ys[l - 1];
    y += wt * p.ys[l - 1];
  }
  const ContextSums c = weighted_context_sums(p, a);
  EXPECT_LT((c.s - s).norm(), 1e-12);
  EXPECT_NEAR(c.v, v, 1e-12);
  EXPECT_NEAR(c.y, y, 1e-12);
}

TEST(Moments, SecondAndFourthAtDimensionFour) {
  Rng rng = make_stream(11);
  const OracleReport r = mc_moment_oracle(4, 1000000, rng);
  EXPECT_TRUE(r.passed()) << "worst z " << r.worst_z();
  for (const auto& e : r.entries) {
    if (e.quantity == "E[y^2]") EXPECT_DOUBLE_EQ(e.closed_form, 4.0);
    if (e.quantity == "E[y^4]") EXPECT_DOUBLE_EQ(e.closed_form, 72.0);
  }
}

TEST(Moments, FourthMomentAtDimensionTwo) {
  Rng rng = make_stream(12);
  const OracleReport r = mc_moment_oracle(2, 400000, rng);
  EXPECT_TRUE(r.passed());
  bool seen = false;
  for (const auto& e : r.entries)
    if (e.quantity == "E[y^4]") {
      seen = true;
      EXPECT_DOUBLE_EQ(e.closed_form, 24.0);
    }
  EXPECT_TRUE(seen);
}

TEST(Moments, ErrorShrinksWithSampleCount) {
  // Mean |error| over repeats should roughly halve when M is quadrupled.
  auto mean_err = [](std::int64_t m) {
    double total = 0;
    for (int rep = 0; rep < 40; ++rep) {
      Rng rng = make_stream(500 + rep, static_cast<std::uint64_t>(m));
      const OracleReport r = mc_moment_oracle(3, m, rng);
      for (const auto& e : r.entries)
        if (e.quantity == "E[y^2]") total += std::abs(e.estimate - e.closed_form);
    }
    return total / 40;
  };
  const double ratio = mean_err(8000) / mean_err(2000);
  EXPECT_GT(ratio, 0.3);
  EXPECT_LT(ratio, 0.8);
}

TEST(Sequence, FourthMomentSingleTokenIsNineAlphaSquared) {
  // d = N = 1: v = alpha y^2, so E[v^2] = alpha^2 E[y^4] = 9 alpha^2.
  const double a = decay_factor(1);
  EXPECT_NEAR(weighted_fourth_moment(1, 1), 9 * a * a, 1e-14);
  EXPECT_NEAR(weighted_fourth_moment_uncorrelated(1, 1), 9 * a * a, 1e-14);
  Rng rng = make_stream(4);
  double acc = 0;
  const int m = 400000;
  NormalSampler z(rng);
  for (int i = 0; i < m; ++i) {
    const double y = z() * z();
    acc += a * a * y * y * y * y;
  }
  EXPECT_NEAR(acc / m, 9 * a * a, 0.05);
}

TEST(Sequence, FourthMomentBruteForce) {
  // Sum over (i, j) of alpha^(i+j+2) E[y_i^2 y_j^2] with E = 3d(d+2) on the
  // diagonal and d(d+2) (shared w) off it.
  for (int d : {2, 3, 5}) {
    for (int n : {2, 4, 9}) {
      const double a = decay_factor(n);
      double corr = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          corr += std::pow(a, i + j + 2) *
                  (i == j ? 3.0 * d * (d + 2) : 1.0 * d * (d + 2));
      EXPECT_NEAR(weighted_fourth_moment(d, n), corr, 1e-9 * corr);
      EXPECT_LT(weighted_fourth_moment_uncorrelated(d, n), corr);
    }
  }
}

TEST(Sequence, IdentitiesHoldAndPublishedVariantIsFlagged) {
  Rng rng = make_stream(21);
  const OracleReport r = mc_sequence_oracle(2, 4, 400000, rng);
  EXPECT_TRUE(r.passed()) << "worst z " << r.worst_z();
  std::set<std::string> gating;
  int informational = 0;
  for (const auto& e : r.entries) {
    if (e.informational) {
      ++informational;
      EXPECT_FALSE(e.pass) << e.quantity;
    } else {
      gating.insert(e.quantity.substr(0, e.quantity.find('(')));
      EXPECT_TRUE(e.pass) << e.quantity << " est " << e.estimate << " cf "
                          << e.closed_form;
    }
  }
  EXPECT_EQ(gating.size(), 9u);
  EXPECT_EQ(informational, 1);
}

TEST(Sequence, ZeroMeanIdentityHasZeroClosedForm) {
  Rng rng = make_stream(22);
  const OracleReport r = mc_sequence_oracle(3, 6, 50000, rng);
  for (const auto& e : r.entries)
    if (e.quantity.rfind("E[sum a_i y_i w]", 0) == 0 ||
        e.quantity.rfind("E[sum a_i a_j y_i^2 y_j]", 0) == 0)
      EXPECT_EQ(e.closed_form, 0.0);
}

TEST(Sequence, RejectsBadArguments) {
  Rng rng = make_stream(0);
  EXPECT_THROW(mc_sequence_oracle(0, 4, 100, rng), ConfigError);
  EXPECT_THROW(mc_moment_oracle(2, 0, rng), ConfigError);
}
