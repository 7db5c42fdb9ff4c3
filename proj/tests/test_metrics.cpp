#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dtsforge/error.hpp"
#include "dtsforge/metrics.hpp"
#include "dtsforge/random.hpp"
#include "support.hpp"

using namespace dtsforge;

namespace {

std::vector<std::pair<std::string, int>> cohort(int negatives, int positives) {
  std::vector<std::pair<std::string, int>> out;
  for (int i = 0; i < negatives; ++i) out.emplace_back("n" + std::to_string(i), 0);
  for (int i = 0; i < positives; ++i) out.emplace_back("d" + std::to_string(i), 1);
  return out;
}

void expect_balanced(const FoldAssignment& f, const std::vector<std::pair<std::string, int>>& patients) {
  ASSERT_EQ(f.fold.size(), patients.size());
  for (int label : {0, 1}) {
    std::vector<int> counts(f.k, 0);
    for (const auto& [id, l] : patients)
      if (l == label) ++counts[f.fold.at(id)];
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*hi - *lo, 1) << "label " << label;
  }
  std::set<std::string> seen;
  for (int k = 0; k < f.k; ++k)
    for (const auto& id : f.members(k)) EXPECT_TRUE(seen.insert(id).second) << id;
  EXPECT_EQ(seen.size(), patients.size());
}

}  // namespace

TEST(Confusion, PerfectAndInverted) {
  LabelMap truth, inverted;
  for (int i = 0; i < 10; ++i) {
    truth["p" + std::to_string(i)] = i < 4;
    inverted["p" + std::to_string(i)] = i >= 4;
  }
  EXPECT_EQ(confusion(truth, truth), (ConfusionMatrix{4, 6, 0, 0}));
  const auto c = confusion(inverted, truth);
  EXPECT_EQ(c.tp, 0);
  EXPECT_EQ(c.tn, 0);
}

TEST(Confusion, MatchesTallyOracle) {
  Rng rng(30);
  LabelMap pred, truth;
  long tp = 0, tn = 0, fp = 0, fn = 0;
  for (int i = 0; i < 100; ++i) {
    const std::string id = "p" + std::to_string(i);
    const int p = rng.bernoulli(0.5), t = rng.bernoulli(0.4);
    pred[id] = p;
    truth[id] = t;
    tp += p && t;
    tn += !p && !t;
    fp += p && !t;
    fn += !p && t;
  }
  EXPECT_EQ(confusion(pred, truth), (ConfusionMatrix{tp, tn, fp, fn}));
}

TEST(Confusion, MismatchIsError) { EXPECT_THROW(confusion({{"a", 1}}, {{"b", 1}}), Error); }

TEST(Metrics, PerfectMatrix) {
  const auto r = metrics({50, 50, 0, 0});
  for (Metric m : kAllMetrics) EXPECT_EQ(r.get(m), 1.0) << metric_name(m);
}

TEST(Metrics, Definitions) {
  const auto r = metrics({3, 5, 2, 1});
  EXPECT_DOUBLE_EQ(*r.accuracy, 8.0 / 11.0);
  EXPECT_DOUBLE_EQ(*r.sensitivity, 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(*r.specificity, 5.0 / 7.0);
  EXPECT_DOUBLE_EQ(*r.precision, 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(*r.f1, 2.0 * 0.6 * 0.75 / 1.35);
  EXPECT_DOUBLE_EQ(*r.balanced, (0.75 + 5.0 / 7.0) / 2.0);
}

TEST(Metrics, ZeroDenominatorsAreUndefined) {
  const auto r = metrics({0, 5, 0, 0});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_FALSE(r.sensitivity);
  EXPECT_FALSE(r.precision);
  EXPECT_FALSE(r.f1);
  EXPECT_FALSE(r.balanced);
  EXPECT_EQ(r.specificity, 1.0);
  EXPECT_THROW(metrics({}), InvalidArgument);
  EXPECT_EQ(format_metric(r.f1), "n/a");
}

TEST(Metrics, F1Fixtures) {
  EXPECT_NEAR(f1_score(0.752, 0.698), 0.724, 0.0005);
  EXPECT_NEAR(f1_score(0.847, 0.782), 0.813, 0.0005);
}

TEST(MetricsProperty, DefinedValuesInUnitInterval) {
  Rng rng(44);
  for (int trial = 0; trial < 500; ++trial) {
    ConfusionMatrix c{static_cast<long>(rng.below(5)), static_cast<long>(rng.below(5)),
                      static_cast<long>(rng.below(5)), static_cast<long>(rng.below(5))};
    if (c.total() == 0) continue;
    const auto r = metrics(c);
    for (Metric m : kAllMetrics)
      if (auto v = r.get(m)) { ASSERT_TRUE(*v >= 0.0 && *v <= 1.0); }
    ASSERT_EQ(r.f1.has_value(), r.precision.has_value() && r.sensitivity.has_value() &&
                                    *r.precision + *r.sensitivity > 0.0);
  }
}

TEST(Aggregate, HandComputedMeanAndPopulationStd) {
  std::vector<MetricReport> reports(3);
  const double values[3] = {0.8, 0.9, 1.0};
  for (int i = 0; i < 3; ++i) reports[i].accuracy = values[i];
  const auto s = aggregate(reports);
  ASSERT_TRUE(s.at(Metric::accuracy));
  EXPECT_NEAR(s.at(Metric::accuracy)->mean, 0.9, 1e-12);
  EXPECT_NEAR(s.at(Metric::accuracy)->std, std::sqrt(0.02 / 3.0), 1e-12);
  EXPECT_NEAR(s.at(Metric::accuracy)->std, 0.0816, 5e-5);
  EXPECT_FALSE(s.at(Metric::f1));
}

TEST(Aggregate, SingleAndIdenticalReports) {
  const auto r = metrics({3, 5, 2, 1});
  const auto one = aggregate({r});
  EXPECT_EQ(one.at(Metric::precision)->mean, *r.precision);
  EXPECT_EQ(one.at(Metric::precision)->std, 0.0);
  const auto same = aggregate({r, r, r});
  for (Metric m : kAllMetrics) EXPECT_NEAR(same.at(m)->std, 0.0, 1e-15);
  EXPECT_THROW(aggregate({}), InvalidArgument);
}

TEST(Aggregate, UndefinedInAnyFoldIsUndefined) {
  const auto s = aggregate({metrics({3, 5, 2, 1}), metrics({0, 5, 0, 0})});
  EXPECT_FALSE(s.at(Metric::sensitivity));
  EXPECT_TRUE(s.at(Metric::specificity));
}

TEST(Folds, NinePatientsGetTwoNegativesAndOnePositiveEach) {
  const auto patients = cohort(6, 3);
  const auto f = stratified_folds(patients, 3, 1);
  for (int k = 0; k < 3; ++k) {
    int neg = 0, pos = 0;
    for (const auto& id : f.members(k)) (f.label.at(id) ? pos : neg)++;
    EXPECT_EQ(neg, 2);
    EXPECT_EQ(pos, 1);
  }
}

TEST(Folds, DeterministicForSeedAndOrderIndependent) {
  auto patients = cohort(20, 11);
  const auto a = stratified_folds(patients, 3, 9);
  std::reverse(patients.begin(), patients.end());
  const auto b = stratified_folds(patients, 3, 9);
  EXPECT_EQ(a.fold, b.fold);
  const auto c = stratified_folds(patients, 3, 10);
  EXPECT_NE(a.fold, c.fold);
}

TEST(Folds, LargeCohortShapes) {
  for (int positives : {242, 206}) {
    const auto patients = cohort(500, positives);
    for (int k : {3, 5}) {
      const auto f = stratified_folds(patients, k, 2024);
      expect_balanced(f, patients);
      // Overall fold sizes differ by at most one too.
      std::vector<std::size_t> sizes;
      for (int i = 0; i < k; ++i) sizes.push_back(f.members(i).size());
      const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
      EXPECT_LE(*hi - *lo, 1u);
    }
  }
}

TEST(FoldsProperty, BalancedPartitionOnRandomCohorts) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(5));
    const auto patients = cohort(k + static_cast<int>(rng.below(40)), k + static_cast<int>(rng.below(40)));
    expect_balanced(stratified_folds(patients, k, rng.next()), patients);
  }
}

TEST(Folds, Errors) {
  EXPECT_THROW(stratified_folds(cohort(5, 2), 3, 1), InvalidArgument);
  EXPECT_THROW(stratified_folds(cohort(5, 5), 0, 1), InvalidArgument);
  auto dup = cohort(3, 3);
  dup.push_back(dup.front());
  EXPECT_THROW(stratified_folds(dup, 3, 1), InvalidArgument);
}

TEST(Overlap, Fixtures) {
  Mask2D a(4, 1), b(4, 1);
  a.pixels = {1, 1, 0, 0};
  EXPECT_EQ(seg_overlap(a, a).jaccard, 1.0);
  EXPECT_EQ(seg_overlap(a, a).dice, 1.0);
  b.pixels = {0, 0, 1, 1};
  EXPECT_EQ(seg_overlap(a, b).jaccard, 0.0);
  EXPECT_EQ(seg_overlap(a, b).dice, 0.0);
  b.pixels = {0, 1, 1, 0};
  EXPECT_DOUBLE_EQ(seg_overlap(a, b).jaccard, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(seg_overlap(a, b).dice, 0.5);
  const Mask2D empty(4, 1);
  EXPECT_EQ(seg_overlap(empty, empty).jaccard, 1.0);
  EXPECT_EQ(seg_overlap(empty, empty).dice, 1.0);
  EXPECT_THROW(seg_overlap(a, Mask2D(2, 2)), InvalidArgument);
}

TEST(OverlapProperty, DiceJaccardIdentity) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(30)), h = 1 + static_cast<int>(rng.below(30));
    const auto a = testing_support::random_mask(rng, w, h, rng.uniform());
    const auto b = testing_support::random_mask(rng, w, h, rng.uniform());
    const auto o = seg_overlap(a, b);
    ASSERT_NEAR(o.dice, 2.0 * o.jaccard / (1.0 + o.jaccard), 1e-12);
  }
}

TEST(Labels, RoundTrip) {
  testing_support::TempDir dir("labels");
  const LabelMap labels{{"p000", 0}, {"p001", 1}};
  write_labels(dir / "t.csv", labels);
  EXPECT_EQ(read_labels(dir / "t.csv"), labels);
}
