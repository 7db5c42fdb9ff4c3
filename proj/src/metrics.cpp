#include "dtsforge/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dtsforge/csv.hpp"
#include "dtsforge/error.hpp"
#include "dtsforge/random.hpp"

namespace dtsforge {

ConfusionMatrix confusion(const LabelMap& predicted, const LabelMap& truth) {
  if (predicted.size() != truth.size()) throw InvalidArgument("prediction and truth cover different patient sets");
  ConfusionMatrix c;
  for (const auto& [id, p] : predicted) {
    const auto it = truth.find(id);
    if (it == truth.end()) throw InvalidArgument("no truth label for patient '" + id + "'");
    const bool pos = p != 0, actual = it->second != 0;
    if (pos && actual) ++c.tp;
    else if (!pos && !actual) ++c.tn;
    else if (pos) ++c.fp;
    else ++c.fn;
  }
  return c;
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::sensitivity: return "sensitivity";
    case Metric::specificity: return "specificity";
    case Metric::precision: return "precision";
    case Metric::f1: return "f1";
    case Metric::balanced: return "balanced";
  }
  return "?";
}

std::optional<double> MetricReport::get(Metric m) const {
  switch (m) {
    case Metric::accuracy: return accuracy;
    case Metric::sensitivity: return sensitivity;
    case Metric::specificity: return specificity;
    case Metric::precision: return precision;
    case Metric::f1: return f1;
    case Metric::balanced: return balanced;
  }
  return std::nullopt;
}

namespace {
std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

double f1_score(double precision, double sensitivity) {
  if (precision + sensitivity == 0.0) return 0.0;
  return 2.0 * precision * sensitivity / (precision + sensitivity);
}

MetricReport metrics(const ConfusionMatrix& c) {
  if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) throw InvalidArgument("confusion counts must be non-negative");
  if (c.total() == 0) throw InvalidArgument("confusion matrix is empty");
  MetricReport r;
  r.accuracy = ratio(c.tp + c.tn, c.total());
  r.sensitivity = ratio(c.tp, c.tp + c.fn);
  r.specificity = ratio(c.tn, c.tn + c.fp);
  r.precision = ratio(c.tp, c.tp + c.fp);
  if (r.precision && r.sensitivity && *r.precision + *r.sensitivity > 0.0)
    r.f1 = f1_score(*r.precision, *r.sensitivity);
  if (r.sensitivity && r.specificity) r.balanced = 0.5 * (*r.sensitivity + *r.specificity);
  return r;
}

std::map<Metric, std::optional<Summary>> aggregate(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw InvalidArgument("cannot aggregate an empty report list");
  std::map<Metric, std::optional<Summary>> out;
  for (Metric m : kAllMetrics) {
    std::vector<double> values;
    for (const auto& r : reports)
      if (auto v = r.get(m)) values.push_back(*v);
    if (values.size() != reports.size()) {
      out[m] = std::nullopt;
      continue;
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    out[m] = Summary{mean, std::sqrt(var)};
  }
  return out;
}

std::string format_metric(const std::optional<double>& value) { return value ? format_real(*value) : "n/a"; }

std::vector<std::string> FoldAssignment::members(int f) const {
  std::vector<std::string> ids;
  for (const auto& [id, fold_index] : fold)
    if (fold_index == f) ids.push_back(id);
  return ids;
}

FoldAssignment stratified_folds(const std::vector<std::pair<std::string, int>>& patients, int k, std::uint64_t seed) {
  if (k <= 0) throw InvalidArgument("fold count must be positive");
  FoldAssignment out;
  out.k = k;
  out.seed = seed;
  std::map<int, std::vector<std::string>> by_class;
  for (const auto& [id, label] : patients) {
    if (!out.label.emplace(id, label).second) throw InvalidArgument("duplicate patient id '" + id + "'");
    by_class[label].push_back(id);
  }
  Rng rng(seed);
  int next = 0;
  for (auto& [label, ids] : by_class) {
    if (static_cast<int>(ids.size()) < k)
      throw InvalidArgument("class " + std::to_string(label) + " has " + std::to_string(ids.size()) +
                            " patients, fewer than k = " + std::to_string(k));
    std::sort(ids.begin(), ids.end());
    rng.shuffle(ids);
    for (const auto& id : ids) {
      out.fold[id] = next;
      next = (next + 1) % k;
    }
  }
  return out;
}

Overlap seg_overlap(const Mask2D& pred, const Mask2D& ref) {
  if (!pred.same_shape(ref)) throw InvalidArgument("masks differ in size");
  long a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.pixels[i] != 0, r = ref.pixels[i] != 0;
    a += p;
    b += r;
    both += p && r;
  }
  const long either = a + b - both;
  if (either == 0) return {1.0, 1.0};
  return {static_cast<double>(both) / static_cast<double>(either),
          2.0 * static_cast<double>(both) / static_cast<double>(a + b)};
}

LabelMap read_labels(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t id_col = t.column("patient_id"), label_col = t.column("label");
  LabelMap labels;
  for (const auto& row : t.rows) {
    const long label = parse_int(row[label_col], path.string());
    if (label != 0 && label != 1) throw FormatError(path.string() + ": label must be 0 or 1");
    if (!labels.emplace(row[id_col], static_cast<int>(label)).second)
      throw FormatError(path.string() + ": duplicate patient '" + row[id_col] + "'");
  }
  return labels;
}

void write_labels(const std::filesystem::path& path, const LabelMap& labels) {
  CsvTable t{{"patient_id", "label"}, {}};
  for (const auto& [id, label] : labels) t.rows.push_back({id, std::to_string(label)});
  write_csv(path, t);
}

}  // namespace dtsforge
