#include "dtsforge/ensemble.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "dtsforge/csv.hpp"
#include "dtsforge/error.hpp"

namespace dtsforge {

void EnsembleRule::validate() const {
  if (n < 1) throw InvalidArgument("ensemble n must be positive");
  if (a < 1 || a > n) throw InvalidArgument("ensemble a must lie in [1, n], got " + name());
}

int VoteVector::k() const { return std::accumulate(votes.begin(), votes.end(), 0); }

Decision decide(const VoteVector& votes, const EnsembleRule& rule) {
  rule.validate();
  if (static_cast<int>(votes.votes.size()) != rule.n)
    throw InvalidArgument("patient '" + votes.patient_id + "' has " + std::to_string(votes.votes.size()) +
                          " votes, rule " + rule.name() + " needs " + std::to_string(rule.n));
  return votes.k() >= rule.a ? Decision::positive : Decision::negative;
}

Decision majority_vote(const VoteVector& votes) {
  return 2 * votes.k() > static_cast<int>(votes.votes.size()) ? Decision::positive : Decision::negative;
}

std::vector<ViewPrediction> read_predictions(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t c_id = t.column("patient_id"), c_angle = t.column("view_angle_deg"),
                    c_prob = t.column("prob_abnormal"), c_label = t.column("label"), c_cut = t.column("cutoff");
  std::vector<ViewPrediction> preds;
  preds.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::string where = path.string() + " record " + std::to_string(i + 1);
    ViewPrediction p{row[c_id], parse_real(row[c_angle], where), parse_real(row[c_prob], where),
                     static_cast<int>(parse_int(row[c_label], where)), parse_real(row[c_cut], where)};
    if (p.patient_id.empty()) throw FormatError(where + ": empty patient id");
    if (p.prob_abnormal < 0.0 || p.prob_abnormal > 1.0) throw FormatError(where + ": probability outside [0, 1]");
    if (p.label != 0 && p.label != 1) throw FormatError(where + ": label must be 0 or 1");
    if (p.label != (p.prob_abnormal >= p.cutoff ? 1 : 0))
      throw FormatError(where + ": label disagrees with probability " + row[c_prob] + " at cutoff " + row[c_cut]);
    preds.push_back(std::move(p));
  }
  return preds;
}

void write_predictions(const std::filesystem::path& path, const std::vector<ViewPrediction>& preds) {
  CsvTable t{{"patient_id", "view_angle_deg", "prob_abnormal", "label", "cutoff"}, {}};
  for (const auto& p : preds)
    t.rows.push_back({p.patient_id, format_real(p.view_angle_deg), format_real(p.prob_abnormal),
                      std::to_string(p.label), format_real(p.cutoff)});
  write_csv(path, t);
}

std::vector<VoteVector> group_votes(const std::vector<ViewPrediction>& preds, std::vector<double> angles) {
  std::map<std::string, std::map<double, int>> by_patient;
  for (const auto& p : preds) {
    if (!by_patient[p.patient_id].emplace(p.view_angle_deg, p.label).second)
      throw FormatError("duplicate prediction for patient '" + p.patient_id + "' at angle " +
                        format_real(p.view_angle_deg));
  }
  if (angles.empty()) {
    std::set<double> all;
    for (const auto& [id, views] : by_patient)
      for (const auto& [angle, label] : views) all.insert(angle);
    angles.assign(all.begin(), all.end());
  }
  std::sort(angles.begin(), angles.end());
  if (std::adjacent_find(angles.begin(), angles.end()) != angles.end())
    throw InvalidArgument("requested view angles must be distinct");

  std::vector<VoteVector> out;
  out.reserve(by_patient.size());
  for (const auto& [id, views] : by_patient) {
    VoteVector v{id, angles, {}};
    for (double angle : angles) {
      const auto it = views.find(angle);
      if (it == views.end())
        throw FormatError("patient '" + id + "' has no prediction at angle " + format_real(angle));
      v.votes.push_back(it->second);
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<VoteVector> ingest_predictions(const std::filesystem::path& path, const std::vector<double>& angles) {
  return group_votes(read_predictions(path), angles);
}

LabelMap decide_all(const std::vector<VoteVector>& votes, const EnsembleRule& rule) {
  LabelMap out;
  for (const auto& v : votes) out[v.patient_id] = decide(v, rule) == Decision::positive ? 1 : 0;
  return out;
}

std::vector<SweepRow> sweep_a(const std::vector<VoteVector>& votes, const LabelMap& truth, int n) {
  std::vector<SweepRow> rows;
  for (int a = 1; a <= n; ++a) {
    const EnsembleRule rule{n, a};
    const ConfusionMatrix c = confusion(decide_all(votes, rule), truth);
    rows.push_back({rule, c, metrics(c)});
  }
  return rows;
}

}  // namespace dtsforge
