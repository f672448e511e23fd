#include <cmath>

#include "attnflow/error.hpp"
#include "attnflow/eval.hpp"
#include "gtest/gtest.h"
#include "json.hpp"
#include "testing/generators.hpp"
#include "testing/oracles.hpp"

namespace attnflow {
namespace {

using testing::Rng;

TEST(Spearman, PerfectAndReversed) {
  const std::vector<double> x{1, 2, 3};
  EXPECT_EQ(spearman(x, std::vector<double>{10, 20, 30}), 1.0);
  EXPECT_EQ(spearman(x, std::vector<double>{3, 2, 1}), -1.0);
}

TEST(Spearman, TiesMatchOracle) {
  const std::vector<double> x{1, 2, 2, 4};
  const std::vector<double> y{4, 3, 2, 1};
  // -3 / sqrt(10), from the rank-then-Pearson oracle.
  constexpr double kFrozen = -0.9486832980505139;
  EXPECT_NEAR(testing::spearman_oracle(x, y), kFrozen, 1e-15);
  EXPECT_NEAR(*spearman(x, y), kFrozen, 1e-12);
}

TEST(Spearman, TiedTenElementVector) {
  const std::vector<double> x{17, 86, 60, 77, 47, 3, 70, 47, 88, 92};
  const std::vector<double> y{70, 29, 85, 61, 80, 34, 60, 31, 73, 66};
  constexpr double kFrozen = 0.024316221747202587;
  EXPECT_NEAR(testing::spearman_oracle(x, y), kFrozen, 1e-15);
  EXPECT_NEAR(*spearman(x, y), kFrozen, 1e-12);
}

TEST(Spearman, AverageRanks) {
  EXPECT_EQ(average_ranks(std::vector<double>{3, 1, 3, 2, 3}), (std::vector<double>{4, 1, 4, 2, 4}));
  EXPECT_EQ(average_ranks(std::vector<double>{5, 5}), (std::vector<double>{1.5, 1.5}));
}

TEST(Spearman, ConstantInputIsUndefined) {
  EXPECT_FALSE(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}).has_value());
  EXPECT_FALSE(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 0}).has_value());
}

TEST(Spearman, Errors) {
  try {
    spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
  try {
    spearman(std::vector<double>{1}, std::vector<double>{1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooShort);
  }
  EXPECT_THROW(spearman(std::vector<double>{1, NAN}, std::vector<double>{1, 2}), Error);
}

TEST(Spearman, RandomVectorsMatchOracle) {
  Rng rng(1);
  std::uniform_int_distribution<int> small(0, 5);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng() % 20;
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = small(rng);
    for (auto& v : y) v = small(rng);
    const auto rho = spearman(x, y);
    const auto rx = testing::counting_ranks(x);
    const auto ry = testing::counting_ranks(y);
    const bool constant = std::all_of(rx.begin(), rx.end(), [&](double r) { return r == rx[0]; }) ||
                          std::all_of(ry.begin(), ry.end(), [&](double r) { return r == ry[0]; });
    ASSERT_EQ(rho.has_value(), !constant);
    if (rho) {
      EXPECT_NEAR(*rho, testing::spearman_oracle(x, y), 1e-12);
      EXPECT_GE(*rho, -1.0);
      EXPECT_LE(*rho, 1.0);
    }
  }
}

TEST(Spearman, InvariantUnderPositiveAffineMaps) {
  Rng rng(2);
  std::uniform_int_distribution<int> value(-50, 50);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 3 + rng() % 15;
    std::vector<double> x(n), y(n), z(n);
    for (auto& v : x) v = value(rng);
    for (auto& v : y) v = value(rng);
    const double a = scale(rng);
    const double b = scale(rng) - 5.0;
    for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i] + b;
    EXPECT_EQ(spearman(z, y), spearman(x, y));
    const auto xy = spearman(x, y);
    const auto yx = spearman(y, x);
    ASSERT_EQ(xy.has_value(), yx.has_value());
    if (xy) EXPECT_NEAR(*xy, *yx, 1e-12);
  }
}

AttentionBundle bundle_with_importance(Rng& rng, std::size_t n, const std::string& id) {
  AttentionBundle b = testing::random_bundle(rng, {3, 2, n, 0, false, false});
  b.metadata = {{"sample_id", id}};
  return b;
}

TEST(CorrelateCorpus, IdenticalAttributionGivesOne) {
  Rng rng(3);
  AttentionBundle b = bundle_with_importance(rng, 6, "only");
  const AttributionMap raw = token_attribution_raw(b, 3, 0);
  b.importance.push_back({"blank_out", std::vector<float>(raw.values.begin(), raw.values.end())});
  const auto reports = correlate_corpus(std::span(&b, 1), Method::kRaw, "blank_out", 0);
  ASSERT_EQ(reports.size(), 3u);
  const CorrelationReport& last = reports[2];
  EXPECT_EQ(last.layer, 3u);
  EXPECT_EQ(last.count, 1u);
  EXPECT_DOUBLE_EQ(last.mean, 1.0);
  EXPECT_EQ(last.std_dev, 0.0);
  EXPECT_EQ(last.per_sample.front().first, "only");
}

TEST(CorrelateCorpus, OppositeSamplesAverageToZero) {
  Rng rng(4);
  std::vector<AttentionBundle> corpus{bundle_with_importance(rng, 5, "a"), bundle_with_importance(rng, 5, "b")};
  for (std::size_t i = 0; i < 2; ++i) {
    const AttributionMap raw = token_attribution_raw(corpus[i], 2, 0);
    std::vector<float> imp;
    for (double v : raw.values) imp.push_back(static_cast<float>(i == 0 ? v : -v));
    corpus[i].importance.push_back({"g", imp});
  }
  const auto reports = correlate_corpus(corpus, Method::kRaw, "g", 0);
  EXPECT_DOUBLE_EQ(reports[1].per_sample[0].second, 1.0);
  EXPECT_DOUBLE_EQ(reports[1].per_sample[1].second, -1.0);
  EXPECT_DOUBLE_EQ(reports[1].mean, 0.0);
  EXPECT_DOUBLE_EQ(reports[1].std_dev, 1.0);
}

TEST(CorrelateCorpus, ConstantAttributionIsExcludedNotNan) {
  AttentionBundle uniform = testing::bundle_from_layers({Matrix::Constant(4, 4, 0.25)});
  uniform.importance.push_back({"g", {0.1f, 0.4f, 0.2f, 0.3f}});
  uniform.metadata = {{"sample_id", "flat"}};
  Rng rng(5);
  AttentionBundle other = testing::random_bundle(rng, {1, 1, 4, 0, false, false});
  other.importance.push_back({"g", {0.0f, 0.3f, 0.2f, 0.1f}});
  const std::vector<AttentionBundle> corpus{uniform, other};
  for (Method m : {Method::kRaw, Method::kRollout, Method::kFlow}) {
    const auto reports = correlate_corpus(corpus, m, "g", 0);
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_EQ(reports[0].degenerate, (std::vector<std::string>{"flat"})) << to_string(m);
    EXPECT_EQ(reports[0].count, 1u);
    EXPECT_FALSE(std::isnan(reports[0].mean));
    EXPECT_FALSE(std::isnan(reports[0].std_dev));
  }
}

TEST(CorrelateCorpus, SourcePositionExclusionIsAFlag) {
  // Position 0 holds the largest attribution and the smallest importance;
  // dropping it turns a mixed ranking into a perfect one.
  Matrix w(3, 3);
  w << 0.6, 0.3, 0.1, 0.2, 0.6, 0.2, 0.2, 0.2, 0.6;
  AttentionBundle b = testing::bundle_from_layers({w});
  b.importance.push_back({"g", {-1.0f, 0.5f, 0.2f}});
  const auto excluded = correlate_corpus(std::span(&b, 1), Method::kRaw, "g", 0);
  EXPECT_DOUBLE_EQ(excluded[0].mean, 1.0);
  CorpusOptions options;
  options.exclude_source = false;
  const auto included = correlate_corpus(std::span(&b, 1), Method::kRaw, "g", 0, options);
  EXPECT_LT(included[0].mean, 1.0);
}

TEST(CorrelateCorpus, MissingImportanceListsBundles) {
  Rng rng(6);
  std::vector<AttentionBundle> corpus{bundle_with_importance(rng, 4, "has"), bundle_with_importance(rng, 4, "lacks")};
  corpus[0].importance.push_back({"g", {0, 1, 2, 3}});
  try {
    correlate_corpus(corpus, Method::kRollout, "g", 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingImportance);
    EXPECT_NE(std::string(e.what()).find("lacks"), std::string::npos);
    EXPECT_EQ(std::string(e.what()).find("has,"), std::string::npos);
  }
  corpus[1].importance.push_back({"g", {0, 1, 2, 3}});
  EXPECT_THROW(correlate_corpus(corpus, Method::kRollout, "g", 4), Error);
}

TEST(CorrelateCorpus, ReportStatisticsAreRecomputable) {
  Rng rng(7);
  auto corpus = testing::trend_corpus(rng, {20, 3, 2, 6, 0.2});
  for (const auto& r : correlate_corpus(corpus, Method::kFlow, "target", 0)) {
    EXPECT_EQ(r.count, r.per_sample.size());
    double sum = 0.0;
    for (const auto& [id, rho] : r.per_sample) {
      EXPECT_GE(rho, -1.0);
      EXPECT_LE(rho, 1.0);
      sum += rho;
    }
    const double mean = sum / static_cast<double>(r.count);
    double sq = 0.0;
    for (const auto& [id, rho] : r.per_sample) sq += (rho - mean) * (rho - mean);
    EXPECT_NEAR(r.mean, mean, 1e-12);
    EXPECT_NEAR(r.std_dev, std::sqrt(sq / static_cast<double>(r.count)), 1e-12);
  }
}

TEST(CorrelateCorpus, RolloutBeatsRawOnSyntheticCorpus) {
  Rng rng(8);
  const auto corpus = testing::trend_corpus(rng, {});
  const auto raw = correlate_corpus(corpus, Method::kRaw, "target", 0);
  const auto roll = correlate_corpus(corpus, Method::kRollout, "target", 0);
  double raw_mean = 0.0, roll_mean = 0.0;
  for (std::size_t l = 0; l < raw.size(); ++l) {
    raw_mean += raw[l].mean;
    roll_mean += roll[l].mean;
  }
  EXPECT_GT(roll_mean, raw_mean);
  EXPECT_GT(roll.back().mean, raw.back().mean);
}

TEST(CorrelateCorpus, ThreadedMatchesSequential) {
  Rng rng(9);
  const auto corpus = testing::trend_corpus(rng, {12, 3, 2, 5, 0.1});
  CorpusOptions threaded;
  threaded.threads = 3;
  const auto a = correlate_corpus(corpus, Method::kFlow, "target", 0);
  const auto b = correlate_corpus(corpus, Method::kFlow, "target", 0, threaded);
  for (std::size_t l = 0; l < a.size(); ++l) {
    EXPECT_EQ(a[l].per_sample, b[l].per_sample);
    EXPECT_EQ(a[l].mean, b[l].mean);
  }
}

TEST(Reports, TableAndJsonLayout) {
  std::vector<CorrelationReport> reports;
  for (Method m : {Method::kRaw, Method::kRollout}) {
    for (std::size_t l = 1; l <= 2; ++l) {
      CorrelationReport r;
      r.method = m;
      r.layer = l;
      r.per_sample = {{"s0", 0.5}, {"s1", m == Method::kRaw ? -0.5 : 0.5}};
      summarize(r);
      reports.push_back(r);
    }
  }
  EXPECT_EQ(reports_to_table(reports),
            "                L1         L2\n"
            "Raw      0.00±0.50  0.00±0.50\n"
            "Rollout  0.50±0.00  0.50±0.00\n");
  const auto j = nlohmann::json::parse(reports_to_json(reports));
  ASSERT_EQ(j.size(), 4u);
  EXPECT_EQ(j[0]["method"], "raw");
  EXPECT_EQ(j[3]["layer"], 2);
  EXPECT_EQ(j[3]["count"], 2);
  EXPECT_EQ(j[2]["per_sample"][1]["sample_id"], "s1");
}

}  // namespace
}  // namespace attnflow
