#include "dtsforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>

#include "json.hpp"

#include "dtsforge/cam.hpp"
#include "dtsforge/csv.hpp"
#include "dtsforge/error.hpp"
#include "dtsforge/parallel.hpp"

namespace dtsforge {

namespace fs = std::filesystem;
using nlohmann::json;

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::phantom: return "phantom";
    case Stage::strip_bed: return "strip-bed";
    case Stage::resample: return "resample";
    case Stage::project: return "project";
    case Stage::score: return "score";
    case Stage::ensemble: return "ensemble";
    case Stage::metrics: return "metrics";
    case Stage::overlays: return "overlays";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : kAllStages)
    if (stage_name(s) == name) return s;
  throw InvalidArgument("unknown stage '" + name + "'");
}

void PipelineConfig::validate() const {
  geometry.validate();
  bed.validate();
  rule.validate();
  scorer_config.validate();
  if (rule.n != static_cast<int>(geometry.view_angles_deg.size()))
    throw InvalidArgument("ensemble rule " + rule.name() + " does not match the " +
                          std::to_string(geometry.view_angles_deg.size()) + " configured views");
  if (!(resample_mm > 0.0)) throw InvalidArgument("resample spacing must be positive");
  if (!(mask_min_path_mm > 0.0)) throw InvalidArgument("mask minimum path must be positive");
  if (display_pixels <= 0) throw InvalidArgument("display size must be positive");
  if (folds < 1) throw InvalidArgument("fold count must be positive");
  if (n_normal < 0 || n_abnormal < 0) throw InvalidArgument("cohort counts must be non-negative");
  if (scorer == ScorerKind::external && external_preds.empty())
    throw InvalidArgument("external scoring needs a prediction file");
}

fs::path PipelineConfig::effective_cohort_dir() const { return cohort_dir.empty() ? out_dir / "cohort" : cohort_dir; }

namespace {

json to_json(const PipelineConfig& c) {
  const auto& g = c.geometry;
  const auto& s = c.scorer_config;
  return json{
      {"out_dir", c.out_dir.string()},
      {"cohort_dir", c.cohort_dir.string()},
      {"n_normal", c.n_normal},
      {"n_abnormal", c.n_abnormal},
      {"seed", c.seed},
      {"cohort",
       {{"dims", c.cohort.grid.dims},
        {"spacing_mm", c.cohort.grid.spacing},
        {"occluded_fraction", c.cohort.occluded_fraction},
        {"source_distance_mm", c.cohort.source_distance_mm},
        {"block_depth_mm", c.cohort.block_depth_mm}}},
      {"bed",
       {{"threshold_hu", c.bed.threshold_hu},
        {"median_kernel", c.bed.median_kernel},
        {"erode_radius", c.bed.erode_radius},
        {"dilate_radius", c.bed.dilate_radius}}},
      {"resample_mm", c.resample_mm},
      {"geometry",
       {{"sod_mm", g.sod_mm},
        {"sid_mm", g.sid_mm},
        {"oid_mm", g.oid_mm},
        {"detector_size_mm", g.detector_size_mm},
        {"detector_pixels", g.detector_pixels},
        {"view_angles_deg", g.view_angles_deg}}},
      {"mu_water_per_mm", c.attenuation.mu_water_per_mm},
      {"mask_min_path_mm", c.mask_min_path_mm},
      {"display_pixels", c.display_pixels},
      {"scorer", c.scorer == ScorerKind::threshold ? "threshold" : "external"},
      {"scorer_config",
       {{"inner_half_mm", s.inner_half_mm},
        {"side_offset_mm", s.side_offset_mm},
        {"anisotropy_weight", s.anisotropy_weight},
        {"response_cutoff", s.response_cutoff},
        {"response_width", s.response_width},
        {"saturation", s.saturation},
        {"saturation_margin_mm", s.saturation_margin_mm},
        {"min_directions", s.min_directions},
        {"decision_cutoff", s.decision_cutoff}}},
      {"external_preds", c.external_preds.string()},
      {"rule", {{"n", c.rule.n}, {"a", c.rule.a}}},
      {"folds", c.folds},
      {"overlays", c.overlays},
      {"start_at", stage_name(c.start_at)}};
}

template <typename T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void take_path(const json& j, const char* key, fs::path& field) {
  if (j.contains(key)) field = j.at(key).get<std::string>();
}

}  // namespace

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  PipelineConfig c;
  try {
    const json j = json::parse(in);
    take_path(j, "out_dir", c.out_dir);
    take_path(j, "cohort_dir", c.cohort_dir);
    take(j, "n_normal", c.n_normal);
    take(j, "n_abnormal", c.n_abnormal);
    take(j, "seed", c.seed);
    if (j.contains("cohort")) {
      const json& k = j.at("cohort");
      Dims3 dims = c.cohort.grid.dims;
      Vec3 spacing = c.cohort.grid.spacing;
      take(k, "dims", dims);
      take(k, "spacing_mm", spacing);
      c.cohort.grid = GridGeometry::centered(dims, spacing);
      take(k, "occluded_fraction", c.cohort.occluded_fraction);
      take(k, "source_distance_mm", c.cohort.source_distance_mm);
      take(k, "block_depth_mm", c.cohort.block_depth_mm);
    }
    if (j.contains("bed")) {
      const json& b = j.at("bed");
      take(b, "threshold_hu", c.bed.threshold_hu);
      take(b, "median_kernel", c.bed.median_kernel);
      take(b, "erode_radius", c.bed.erode_radius);
      take(b, "dilate_radius", c.bed.dilate_radius);
    }
    take(j, "resample_mm", c.resample_mm);
    if (j.contains("geometry")) {
      const json& g = j.at("geometry");
      take(g, "sod_mm", c.geometry.sod_mm);
      take(g, "sid_mm", c.geometry.sid_mm);
      take(g, "oid_mm", c.geometry.oid_mm);
      take(g, "detector_size_mm", c.geometry.detector_size_mm);
      take(g, "detector_pixels", c.geometry.detector_pixels);
      take(g, "view_angles_deg", c.geometry.view_angles_deg);
    }
    take(j, "mu_water_per_mm", c.attenuation.mu_water_per_mm);
    take(j, "mask_min_path_mm", c.mask_min_path_mm);
    take(j, "display_pixels", c.display_pixels);
    if (j.contains("scorer")) {
      const std::string kind = j.at("scorer").get<std::string>();
      if (kind != "threshold" && kind != "external") throw FormatError("unknown scorer '" + kind + "'");
      c.scorer = kind == "threshold" ? ScorerKind::threshold : ScorerKind::external;
    }
    if (j.contains("scorer_config")) {
      const json& s = j.at("scorer_config");
      take(s, "inner_half_mm", c.scorer_config.inner_half_mm);
      take(s, "side_offset_mm", c.scorer_config.side_offset_mm);
      take(s, "anisotropy_weight", c.scorer_config.anisotropy_weight);
      take(s, "response_cutoff", c.scorer_config.response_cutoff);
      take(s, "response_width", c.scorer_config.response_width);
      take(s, "saturation", c.scorer_config.saturation);
      take(s, "saturation_margin_mm", c.scorer_config.saturation_margin_mm);
      take(s, "min_directions", c.scorer_config.min_directions);
      take(s, "decision_cutoff", c.scorer_config.decision_cutoff);
    }
    take_path(j, "external_preds", c.external_preds);
    if (j.contains("rule")) {
      take(j.at("rule"), "n", c.rule.n);
      take(j.at("rule"), "a", c.rule.a);
    }
    take(j, "folds", c.folds);
    take(j, "overlays", c.overlays);
    if (j.contains("start_at")) c.start_at = parse_stage(j.at("start_at").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return c;
}

void save_pipeline_config(const PipelineConfig& config, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

std::vector<std::pair<EnsembleRule, std::vector<double>>> reported_rules(const ProjectionGeometry& geometry) {
  std::vector<double> all = geometry.view_angles_deg;
  std::sort(all.begin(), all.end());
  auto has = [&all](double a) { return std::find(all.begin(), all.end(), a) != all.end(); };
  std::vector<std::pair<EnsembleRule, std::vector<double>>> rules;
  if (has(0.0) && all.size() > 1) rules.push_back({{1, 1}, {0.0}});
  if (all.size() > 3 && has(-60.0) && has(0.0) && has(60.0))
    for (int a = 1; a <= 3; ++a) rules.push_back({{3, a}, {-60.0, 0.0, 60.0}});
  const int n = static_cast<int>(all.size());
  for (int a = 1; a <= n; ++a) rules.push_back({{n, a}, all});
  return rules;
}

namespace {

struct Patient {
  std::string id;
  int label;
  fs::path cohort;  // phantom files
  fs::path work;    // pipeline outputs
};

class Runner {
 public:
  Runner(const PipelineConfig& cfg, std::ostream* log) : cfg_(cfg), log_(log) {}

  PipelineResult run() {
    cfg_.validate();
    fs::create_directories(cfg_.out_dir);
    save_pipeline_config(cfg_, cfg_.out_dir / "config.json");
    PipelineResult result;
    for (Stage s : kAllStages) {
      if (s < cfg_.start_at) continue;
      if (s == Stage::overlays && !cfg_.overlays) continue;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        run_stage(s, result);
      } catch (const std::exception& e) {
        throw Error("stage " + stage_name(s) + ": " + e.what());
      }
      if (log_) {
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        *log_ << "[" << stage_name(s) << "] done in " << dt.count() << " s\n";
      }
    }
    return result;
  }

 private:
  void run_stage(Stage s, PipelineResult& result) {
    switch (s) {
      case Stage::phantom: return phantom();
      case Stage::strip_bed: return per_patient([this](const Patient& p) { strip(p); });
      case Stage::resample: return per_patient([this](const Patient& p) { resample(p); });
      case Stage::project: return per_patient([this](const Patient& p) { project(p); });
      case Stage::score: return score();
      case Stage::ensemble: return ensemble();
      case Stage::metrics: result = metrics(); return;
      case Stage::overlays: return per_patient([this](const Patient& p) { overlay(p); });
    }
  }

  std::vector<Patient> patients() const {
    const fs::path cohort = cfg_.effective_cohort_dir();
    const LabelMap truth = read_labels(cohort / "truth.csv");
    std::vector<Patient> out;
    for (const auto& [id, label] : truth) out.push_back({id, label, cohort / id, cfg_.out_dir / "patients" / id});
    return out;
  }

  template <typename F>
  void per_patient(F&& body) {
    const auto list = patients();
    parallel_for(list.size(), [&](std::size_t i) {
      try {
        body(list[i]);
      } catch (const std::exception& e) {
        throw Error("patient " + list[i].id + ": " + e.what());
      }
    });
  }

  void phantom() {
    if (!cfg_.cohort_dir.empty()) {
      if (!fs::exists(cfg_.cohort_dir / "truth.csv"))
        throw FormatError("cohort " + cfg_.cohort_dir.string() + " has no truth.csv");
      return;
    }
    generate_cohort(cfg_.effective_cohort_dir(), cfg_.n_normal, cfg_.n_abnormal, cfg_.seed, cfg_.cohort);
  }

  void strip(const Patient& p) {
    fs::create_directories(p.work);
    const auto r = strip_bed(load_volume(p.cohort / "ct.json"), cfg_.bed);
    save_volume(r.subject, p.work / "subject.json");
    save_binary_volume(r.mask, p.work / "subject_mask.json");
  }

  void resample(const Patient& p) {
    save_volume(resample_isotropic(load_volume(p.work / "subject.json"), cfg_.resample_mm), p.work / "iso.json");
    save_binary_volume(resample_isotropic(load_binary_volume(p.cohort / "lung_truth.json"), cfg_.resample_mm),
                       p.work / "lung_iso.json");
  }

  void project(const Patient& p) {
    for (const char* dir : {"proj", "masks", "display"}) fs::create_directories(p.work / dir);
    const CtVolume iso = load_volume(p.work / "iso.json");
    const BinaryVolume lung = load_binary_volume(p.work / "lung_iso.json");
    const AttenuationVolume mu = AttenuationVolume::from_ct(iso, cfg_.attenuation);
    const AttenuationVolume lung_mu = AttenuationVolume::from_mask(lung);
    for (double angle : cfg_.geometry.view_angles_deg) {
      const std::string tag = angle_tag(angle);
      const ProjectionImage view{integrate_rays(mu, cfg_.geometry, angle), angle, cfg_.geometry, ImageKind::intensity};
      save_projection(view, p.work / "proj" / (tag + ".pgm"));
      write_pgm(to_display(view, cfg_.display_pixels, cfg_.display_pixels), p.work / "display" / (tag + ".pgm"));
      ProjectionImage mask{integrate_rays(lung_mu, cfg_.geometry, angle), angle, cfg_.geometry, ImageKind::mask};
      for (float& v : mask.pixels.pixels) v = v > cfg_.mask_min_path_mm ? 1.0f : 0.0f;
      save_projection(mask, p.work / "masks" / (tag + ".pgm"));
    }
  }

  void score() {
    const fs::path preds_path = cfg_.out_dir / "preds.csv";
    if (cfg_.scorer == ScorerKind::external) {
      write_predictions(preds_path, read_predictions(cfg_.external_preds));
      return;
    }
    const auto list = patients();
    std::vector<std::vector<ViewPrediction>> per(list.size());
    parallel_for(list.size(), [&](std::size_t i) {
      const Patient& p = list[i];
      try {
        for (double angle : cfg_.geometry.view_angles_deg) {
          const std::string tag = angle_tag(angle);
          const ProjectionImage view = load_projection(p.work / "proj" / (tag + ".pgm"));
          const ProjectionImage mask = load_projection(p.work / "masks" / (tag + ".pgm"));
          per[i].push_back(threshold_scorer(view, mask, cfg_.scorer_config, p.id));
        }
      } catch (const std::exception& e) {
        throw Error("patient " + p.id + ": " + e.what());
      }
    });
    std::vector<ViewPrediction> all;
    for (auto& v : per) all.insert(all.end(), v.begin(), v.end());
    write_predictions(preds_path, all);
  }

  void ensemble() {
    const auto list = patients();
    std::vector<std::pair<std::string, int>> ids;
    for (const auto& p : list) ids.emplace_back(p.id, p.label);
    const FoldAssignment folds = stratified_folds(ids, cfg_.folds, cfg_.seed);
    CsvTable fold_table{{"patient_id", "label", "fold"}, {}};
    for (const auto& [id, f] : folds.fold)
      fold_table.rows.push_back({id, std::to_string(folds.label.at(id)), std::to_string(f)});
    write_csv(cfg_.out_dir / "folds.csv", fold_table);

    const auto preds = read_predictions(cfg_.out_dir / "preds.csv");
    for (const auto& [rule, angles] : reported_rules(cfg_.geometry)) {
      CsvTable t{{"patient_id", "k", "n", "a", "label"}, {}};
      for (const auto& v : group_votes(preds, angles))
        t.rows.push_back({v.patient_id, std::to_string(v.k()), std::to_string(rule.n), std::to_string(rule.a),
                          decide(v, rule) == Decision::positive ? "1" : "0"});
      write_csv(cfg_.out_dir / ("decisions_" + std::to_string(rule.n) + "_" + std::to_string(rule.a) + ".csv"), t);
    }
  }

  PipelineResult metrics() {
    const LabelMap truth = read_labels(cfg_.effective_cohort_dir() / "truth.csv");
    const CsvTable fold_table = read_csv(cfg_.out_dir / "folds.csv");
    std::map<std::string, int> fold_of;
    int k = 0;
    for (const auto& row : fold_table.rows) {
      const int f = static_cast<int>(parse_int(row[fold_table.column("fold")], "folds.csv"));
      fold_of[row[fold_table.column("patient_id")]] = f;
      k = std::max(k, f + 1);
    }

    PipelineResult result;
    CsvTable out{{"rule", "n", "a", "angles", "tp", "tn", "fp", "fn"}, {}};
    for (Metric m : kAllMetrics) {
      out.header.push_back(std::string(metric_name(m)) + "_mean");
      out.header.push_back(std::string(metric_name(m)) + "_std");
    }
    CsvTable per_fold{{"rule", "fold", "tp", "tn", "fp", "fn"}, {}};
    for (Metric m : kAllMetrics) per_fold.header.push_back(std::string(metric_name(m)));

    for (const auto& [rule, angles] : reported_rules(cfg_.geometry)) {
      const CsvTable d =
          read_csv(cfg_.out_dir / ("decisions_" + std::to_string(rule.n) + "_" + std::to_string(rule.a) + ".csv"));
      LabelMap decided;
      for (const auto& row : d.rows)
        decided[row[d.column("patient_id")]] = static_cast<int>(parse_int(row[d.column("label")], "decisions"));

      RuleResult r{rule, angles, confusion(decided, truth), {}, {}};
      for (int f = 0; f < k; ++f) {
        LabelMap fold_pred, fold_truth;
        for (const auto& [id, fi] : fold_of) {
          if (fi != f) continue;
          fold_pred[id] = decided.at(id);
          fold_truth[id] = truth.at(id);
        }
        const ConfusionMatrix c = confusion(fold_pred, fold_truth);
        r.per_fold.push_back(metrics_of(c));
        std::vector<std::string> row{rule.name(), std::to_string(f), std::to_string(c.tp), std::to_string(c.tn),
                                     std::to_string(c.fp), std::to_string(c.fn)};
        for (Metric m : kAllMetrics) row.push_back(format_metric(r.per_fold.back().get(m)));
        per_fold.rows.push_back(std::move(row));
      }
      r.summary = aggregate(r.per_fold);

      std::string angle_list;
      for (double a : angles) angle_list += (angle_list.empty() ? "" : " ") + format_real(a);
      std::vector<std::string> row{rule.name(),          std::to_string(rule.n), std::to_string(rule.a),
                                   angle_list,           std::to_string(r.pooled.tp), std::to_string(r.pooled.tn),
                                   std::to_string(r.pooled.fp), std::to_string(r.pooled.fn)};
      for (Metric m : kAllMetrics) {
        const auto& s = r.summary.at(m);
        row.push_back(s ? format_real(s->mean) : "n/a");
        row.push_back(s ? format_real(s->std) : "n/a");
      }
      out.rows.push_back(std::move(row));
      result.rules.push_back(std::move(r));
    }
    write_csv(cfg_.out_dir / "metrics.csv", out);
    write_csv(cfg_.out_dir / "metrics_per_fold.csv", per_fold);
    return result;
  }

  static MetricReport metrics_of(const ConfusionMatrix& c) { return dtsforge::metrics(c); }

  void overlay(const Patient& p) {
    fs::create_directories(p.work / "overlay");
    for (double angle : cfg_.geometry.view_angles_deg) {
      const std::string tag = angle_tag(angle);
      const ProjectionImage view = load_projection(p.work / "proj" / (tag + ".pgm"));
      const ProjectionImage mask = load_projection(p.work / "masks" / (tag + ".pgm"));
      const ActivationMap act = activation_from_image(lesion_response(view, cfg_.scorer_config), angle, p.id);
      write_activation(p.work / "overlay" / (tag + ".act"), act);
      const ActivationMap refined = refine(act, align_mask(mask, act.h, act.w));
      const Gray8 base = read_pgm8(p.work / "display" / (tag + ".pgm"));
      const FeatureMask base_mask = align_mask(mask, base.height, base.width);
      write_ppm(render_overlay(refined, base, ChannelReduce::mean, &base_mask), p.work / "overlay" / (tag + ".ppm"));
    }
  }

  PipelineConfig cfg_;
  std::ostream* log_;
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log) { return Runner(config, log).run(); }

}  // namespace dtsforge
