#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dtsforge/image.hpp"

namespace dtsforge {

/// Binary label per patient id (1 = abnormal / positive).
using LabelMap = std::map<std::string, int>;

struct ConfusionMatrix {
  long tp = 0, tn = 0, fp = 0, fn = 0;

  long total() const { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Tallies predictions against truth; the two maps must cover the same patients.
ConfusionMatrix confusion(const LabelMap& predicted, const LabelMap& truth);

enum class Metric { accuracy, sensitivity, specificity, precision, f1, balanced };
inline constexpr std::array<Metric, 6> kAllMetrics{Metric::accuracy,  Metric::sensitivity, Metric::specificity,
                                                   Metric::precision, Metric::f1,          Metric::balanced};
std::string_view metric_name(Metric m);

/// A metric with a zero denominator is std::nullopt.
/// balanced is the mean of sensitivity and specificity.
struct MetricReport {
  std::optional<double> accuracy, sensitivity, specificity, precision, f1, balanced;

  std::optional<double> get(Metric m) const;
};

MetricReport metrics(const ConfusionMatrix& c);

/// Harmonic mean of precision and sensitivity.
double f1_score(double precision, double sensitivity);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

/// Per-metric mean and std. A metric undefined in any report is undefined in the result.
std::map<Metric, std::optional<Summary>> aggregate(const std::vector<MetricReport>& reports);

/// "n/a" for undefined values, shortest round-trip text otherwise.
std::string format_metric(const std::optional<double>& value);

struct FoldAssignment {
  int k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, int> fold;   // patient id -> fold in [0, k)
  LabelMap label;

  std::vector<std::string> members(int f) const;
};

/// Per class: ids sorted, shuffled with the seed, dealt round-robin starting where
/// the previous class stopped, so per-class and overall fold sizes differ by at most 1.
FoldAssignment stratified_folds(const std::vector<std::pair<std::string, int>>& patients, int k, std::uint64_t seed);

struct Overlap {
  double jaccard = 0.0;
  double dice = 0.0;
};

/// Jaccard |A∩B|/|A∪B| and Dice 2|A∩B|/(|A|+|B|); both are 1 for two empty masks.
Overlap seg_overlap(const Mask2D& pred, const Mask2D& ref);

/// patient_id,label CSV.
LabelMap read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const LabelMap& labels);

}  // namespace dtsforge
