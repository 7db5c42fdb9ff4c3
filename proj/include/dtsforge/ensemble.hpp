#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dtsforge/metrics.hpp"

namespace dtsforge {

inline constexpr double kDefaultCutoff = 0.5;

/// One per-view classifier output. label is 1 iff prob_abnormal >= cutoff.
struct ViewPrediction {
  std::string patient_id;
  double view_angle_deg = 0.0;
  double prob_abnormal = 0.0;
  int label = 0;
  double cutoff = kDefaultCutoff;

  friend bool operator==(const ViewPrediction&, const ViewPrediction&) = default;
};

/// Positive iff at least a of the n views are positive.
struct EnsembleRule {
  int n = 5;
  int a = 2;

  void validate() const;
  std::string name() const { return std::to_string(n) + "/" + std::to_string(a); }
};

/// Per-patient votes ordered by increasing view angle.
struct VoteVector {
  std::string patient_id;
  std::vector<double> angles;
  std::vector<int> votes;

  int k() const;
};

enum class Decision { negative, positive };

Decision decide(const VoteVector& votes, const EnsembleRule& rule);

/// Positive iff K > n/2; an even-n tie is negative.
Decision majority_vote(const VoteVector& votes);

std::vector<ViewPrediction> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, const std::vector<ViewPrediction>& preds);

/// Groups predictions by patient. With a non-empty angle list only those views are
/// used and every patient must have each of them; otherwise every patient must have
/// the same angle set. Missing or repeated (patient, angle) pairs are errors.
std::vector<VoteVector> group_votes(const std::vector<ViewPrediction>& preds, std::vector<double> angles = {});

/// read_predictions followed by group_votes.
std::vector<VoteVector> ingest_predictions(const std::filesystem::path& path, const std::vector<double>& angles = {});

/// Ensemble decision per patient as a 0/1 label map.
LabelMap decide_all(const std::vector<VoteVector>& votes, const EnsembleRule& rule);

struct SweepRow {
  EnsembleRule rule;
  ConfusionMatrix confusion;
  MetricReport report;
};

/// decide for every a in [1, n] scored against truth.
std::vector<SweepRow> sweep_a(const std::vector<VoteVector>& votes, const LabelMap& truth, int n);

}  // namespace dtsforge
