#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dtsforge/bed_removal.hpp"
#include "dtsforge/ensemble.hpp"
#include "dtsforge/phantom.hpp"
#include "dtsforge/projection.hpp"
#include "dtsforge/scorer.hpp"

namespace dtsforge {

enum class Stage { phantom, strip_bed, resample, project, score, ensemble, metrics, overlays };
inline constexpr Stage kAllStages[] = {Stage::phantom, Stage::strip_bed, Stage::resample, Stage::project,
                                       Stage::score,   Stage::ensemble,  Stage::metrics,  Stage::overlays};

std::string stage_name(Stage s);
Stage parse_stage(const std::string& name);

enum class ScorerKind { threshold, external };

/// Everything a pipeline run needs. Serialized as one JSON document; keys mirror
/// the field names and every key is optional.
struct PipelineConfig {
  std::filesystem::path out_dir = "out";
  /// Existing cohort (truth.csv plus one directory per patient); when empty the
  /// phantom stage generates one under out_dir/cohort.
  std::filesystem::path cohort_dir;
  int n_normal = 20;
  int n_abnormal = 20;
  std::uint64_t seed = 7;
  CohortOptions cohort;

  BedRemovalConfig bed;
  double resample_mm = 1.0;
  ProjectionGeometry geometry;
  AttenuationModel attenuation;
  double mask_min_path_mm = 1.0;
  int display_pixels = 512;

  ScorerKind scorer = ScorerKind::threshold;
  ScorerConfig scorer_config;
  std::filesystem::path external_preds;

  EnsembleRule rule{5, 2};
  int folds = 3;
  bool overlays = true;
  Stage start_at = Stage::phantom;

  /// rule.n must equal the number of views; external scoring needs a prediction file.
  void validate() const;

  std::filesystem::path effective_cohort_dir() const;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void save_pipeline_config(const PipelineConfig& config, const std::filesystem::path& path);

/// One row of metrics.csv: an N/A rule scored per fold and aggregated.
struct RuleResult {
  EnsembleRule rule;
  std::vector<double> angles;
  ConfusionMatrix pooled;
  std::vector<MetricReport> per_fold;
  std::map<Metric, std::optional<Summary>> summary;
};

struct PipelineResult {
  std::vector<RuleResult> rules;
};

/// Runs the stages from config.start_at onward. Each stage reads its inputs from
/// files written by earlier stages, so a run can resume at any stage. Errors are
/// rethrown as Error with the stage (and patient, when relevant) in the message.
PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log = nullptr);

/// Rules reported by the pipeline: 1/1 on the frontal view, 3/a over -60/0/+60 when
/// those views exist among more than three, and n/a for every a over all views.
std::vector<std::pair<EnsembleRule, std::vector<double>>> reported_rules(const ProjectionGeometry& geometry);

}  // namespace dtsforge
