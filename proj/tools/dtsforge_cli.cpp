#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dtsforge/bed_removal.hpp"
#include "dtsforge/cam.hpp"
#include "dtsforge/csv.hpp"
#include "dtsforge/ensemble.hpp"
#include "dtsforge/error.hpp"
#include "dtsforge/metrics.hpp"
#include "dtsforge/phantom.hpp"
#include "dtsforge/pipeline.hpp"
#include "dtsforge/projection.hpp"
#include "dtsforge/scorer.hpp"
#include "dtsforge/volume.hpp"

namespace fs = std::filesystem;
using namespace dtsforge;

namespace {

std::vector<double> parse_angles(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_real(item, "--views"));
  return out;
}

ProjectionGeometry geometry_for(const std::string& geometry_path, const std::string& views, int pixels) {
  ProjectionGeometry g = geometry_path.empty() ? ProjectionGeometry{} : load_geometry(geometry_path);
  if (!views.empty()) g.view_angles_deg = parse_angles(views);
  if (pixels > 0) g.detector_pixels = {pixels, pixels};
  g.validate();
  return g;
}

void print_report_row(const std::string& name, const ConfusionMatrix& c, const MetricReport& r) {
  std::cout << name << ',' << c.tp << ',' << c.tn << ',' << c.fp << ',' << c.fn;
  for (Metric m : kAllMetrics) std::cout << ',' << format_metric(r.get(m));
  std::cout << '\n';
}

void print_report_header() {
  std::cout << "rule,tp,tn,fp,fn";
  for (Metric m : kAllMetrics) std::cout << ',' << metric_name(m);
  std::cout << '\n';
}

ProjectionImage mask_from_pgm(const fs::path& path) {
  const Gray16 raw = read_pgm(path);
  ProjectionImage m;
  m.kind = ImageKind::mask;
  m.pixels = Image<float>(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.size(); ++i) m.pixels.pixels[i] = raw.pixels[i] > 0 ? 1.0f : 0.0f;
  return m;
}

Mask2D binary_from_pgm(const fs::path& path) {
  const Gray16 raw = read_pgm(path);
  Mask2D m(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.size(); ++i) m.pixels[i] = raw.pixels[i] > 0;
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual chest tomosynthesis from CT volumes, with the N/A ensemble diagnosis harness"};
  app.require_subcommand(1);

  // phantom
  std::string spec_path, out_dir;
  auto* phantom = app.add_subcommand("phantom", "Voxelize one phantom spec");
  phantom->add_option("--spec", spec_path, "Phantom spec JSON")->required();
  phantom->add_option("--out-dir", out_dir, "Output directory")->required();

  // phantom-cohort
  int n_normal = 10, n_abnormal = 10;
  std::uint64_t seed = 7;
  double occluded_fraction = 1.0;
  auto* cohort = app.add_subcommand("phantom-cohort", "Generate a seeded phantom cohort with truth.csv");
  cohort->add_option("--normal", n_normal)->capture_default_str();
  cohort->add_option("--abnormal", n_abnormal)->capture_default_str();
  cohort->add_option("--seed", seed)->capture_default_str();
  cohort->add_option("--occluded-fraction", occluded_fraction, "Share of lesions hidden behind a dense block in the frontal view")
      ->capture_default_str();
  cohort->add_option("--out-dir", out_dir)->required();

  // strip-bed
  std::string in_path, out_path, mask_out;
  BedRemovalConfig bed;
  auto* strip = app.add_subcommand("strip-bed", "Remove the scanning bed slice by slice");
  strip->add_option("--in", in_path)->required();
  strip->add_option("--out", out_path)->required();
  strip->add_option("--mask-out", mask_out);
  strip->add_option("--threshold", bed.threshold_hu)->capture_default_str();
  strip->add_option("--median", bed.median_kernel)->capture_default_str();
  strip->add_option("--erode", bed.erode_radius)->capture_default_str();
  strip->add_option("--dilate", bed.dilate_radius)->capture_default_str();

  // resample
  double target_mm = 1.0;
  bool binary = false;
  auto* resample = app.add_subcommand("resample", "Trilinear resampling to isotropic spacing");
  resample->add_option("--in", in_path)->required();
  resample->add_option("--out", out_path)->required();
  resample->add_option("--target", target_mm, "Target spacing in mm")->capture_default_str();
  resample->add_flag("--binary", binary, "Input is a binary mask");

  // project
  std::string views, geometry_path, mask_in, mask_out_dir, display_dir;
  int pixels = 0, display_pixels = 512;
  double mu_water = 0.02, min_path = 1.0;
  auto* project = app.add_subcommand("project", "Cone-beam projections of a subject volume");
  project->add_option("--in", in_path)->required();
  project->add_option("--out-dir", out_dir)->required();
  project->add_option("--views", views, "Comma-separated angles in degrees");
  project->add_option("--geometry", geometry_path, "Geometry JSON");
  project->add_option("--pixels", pixels, "Detector pixels per side (overrides geometry)");
  project->add_option("--mu-water", mu_water)->capture_default_str();
  project->add_option("--mask-in", mask_in, "Binary lung volume to project alongside");
  project->add_option("--mask-out-dir", mask_out_dir);
  project->add_option("--min-path", min_path, "Mask path threshold in mm")->capture_default_str();
  project->add_option("--display-dir", display_dir, "Also write equalized 8-bit display images");
  project->add_option("--display-pixels", display_pixels)->capture_default_str();

  // project-mask
  auto* project_mask = app.add_subcommand("project-mask", "Per-view binary masks of a binary volume");
  project_mask->add_option("--in", in_path)->required();
  project_mask->add_option("--out-dir", out_dir)->required();
  project_mask->add_option("--views", views);
  project_mask->add_option("--geometry", geometry_path);
  project_mask->add_option("--pixels", pixels);
  project_mask->add_option("--min-path", min_path)->capture_default_str();

  // score
  std::string proj_dir, mask_dir, patient_id, preds_path;
  bool append = false;
  ScorerConfig scorer;
  auto* score = app.add_subcommand("score", "Threshold scorer over a patient's projections");
  score->add_option("--proj-dir", proj_dir)->required();
  score->add_option("--mask-dir", mask_dir, "Projected lung masks with matching file names");
  score->add_option("--patient", patient_id)->required();
  score->add_option("--out", preds_path)->required();
  score->add_flag("--append", append, "Append to an existing prediction file");
  score->add_option("--cutoff", scorer.decision_cutoff)->capture_default_str();
  score->add_option("--response-cutoff", scorer.response_cutoff)->capture_default_str();

  // ensemble / sweep-a
  std::string truth_path, decided_out;
  int n = 5, a = 2;
  auto* ens = app.add_subcommand("ensemble", "Apply an N/A rule to per-view predictions");
  ens->add_option("--preds", preds_path)->required();
  ens->add_option("--truth", truth_path);
  ens->add_option("--n", n)->capture_default_str();
  ens->add_option("--a", a)->capture_default_str();
  ens->add_option("--views", views, "Views to use (default: all in the file)");
  ens->add_option("--out", decided_out, "Write patient_id,label decisions");
  auto* sweep = app.add_subcommand("sweep-a", "Metrics for every A in 1..N");
  sweep->add_option("--preds", preds_path)->required();
  sweep->add_option("--truth", truth_path)->required();
  sweep->add_option("--n", n)->capture_default_str();
  sweep->add_option("--views", views);

  // metrics / seg-eval / folds
  auto* met = app.add_subcommand("metrics", "Classification metrics of patient-level decisions");
  met->add_option("--preds", preds_path, "patient_id,label CSV")->required();
  met->add_option("--truth", truth_path)->required();
  std::string pred_mask, ref_mask;
  auto* seg = app.add_subcommand("seg-eval", "Jaccard and Dice of two mask images");
  seg->add_option("--pred", pred_mask)->required();
  seg->add_option("--ref", ref_mask)->required();
  std::string patients_path;
  int k = 3;
  std::uint64_t fold_seed = 17;
  auto* folds = app.add_subcommand("folds", "Stratified k-fold assignment");
  folds->add_option("--patients", patients_path)->required();
  folds->add_option("--k", k)->capture_default_str();
  folds->add_option("--seed", fold_seed)->capture_default_str();
  folds->add_option("--out", out_path);

  // refine-cam
  std::string act_path, base_path, reduce = "mean";
  auto* cam = app.add_subcommand("refine-cam", "Mask an activation map and render the overlay");
  cam->add_option("--act", act_path)->required();
  cam->add_option("--mask", mask_in)->required();
  cam->add_option("--base", base_path)->required();
  cam->add_option("--out", out_path)->required();
  cam->add_option("--reduce", reduce)->check(CLI::IsMember({"mean", "max"}))->capture_default_str();
  cam->add_option("--act-out", decided_out, "Also write the refined activation map");

  // pipeline
  std::string config_path, start_at, scorer_kind, external_preds;
  auto* pipe = app.add_subcommand("pipeline", "End-to-end run on a phantom cohort");
  pipe->add_option("--config", config_path, "Pipeline config JSON");
  pipe->add_option("--out-dir", out_dir);
  pipe->add_option("--cohort-dir", in_path, "Use an existing cohort");
  pipe->add_option("--start-at", start_at, "Resume at this stage");
  pipe->add_option("--seed", seed);
  pipe->add_option("--normal", n_normal);
  pipe->add_option("--abnormal", n_abnormal);
  pipe->add_option("--n", n);
  pipe->add_option("--a", a);
  pipe->add_option("--views", views);
  pipe->add_option("--pixels", pixels);
  pipe->add_option("--scorer", scorer_kind)->check(CLI::IsMember({"threshold", "external"}));
  pipe->add_option("--preds", external_preds, "Prediction file for the external scorer");
  pipe->add_flag("--no-overlays", binary, "Skip overlay rendering");

  CLI11_PARSE(app, argc, argv);

  try {
    if (phantom->parsed()) {
      const PhantomSpec spec = load_phantom_spec(spec_path);
      write_phantom(generate(spec), spec, out_dir);
    } else if (cohort->parsed()) {
      CohortOptions opt;
      opt.occluded_fraction = occluded_fraction;
      const auto entries = generate_cohort(out_dir, n_normal, n_abnormal, seed, opt);
      std::cout << entries.size() << " phantoms written to " << out_dir << '\n';
    } else if (strip->parsed()) {
      const auto r = strip_bed(load_volume(in_path), bed);
      save_volume(r.subject, out_path);
      if (!mask_out.empty()) save_binary_volume(r.mask, mask_out);
    } else if (resample->parsed()) {
      if (binary)
        save_binary_volume(resample_isotropic(load_binary_volume(in_path), target_mm), out_path);
      else
        save_volume(resample_isotropic(load_volume(in_path), target_mm), out_path);
    } else if (project->parsed()) {
      const ProjectionGeometry g = geometry_for(geometry_path, views, pixels);
      fs::create_directories(out_dir);
      save_geometry(g, fs::path(out_dir) / "geometry.json");
      for (const auto& view : project_all_views(load_volume(in_path), g, AttenuationModel{mu_water})) {
        save_projection(view, fs::path(out_dir) / (angle_tag(view.view_angle_deg) + ".pgm"));
        if (!display_dir.empty()) {
          fs::create_directories(display_dir);
          write_pgm(to_display(view, display_pixels, display_pixels),
                    fs::path(display_dir) / (angle_tag(view.view_angle_deg) + ".pgm"));
        }
      }
      if (!mask_in.empty()) {
        if (mask_out_dir.empty()) throw InvalidArgument("--mask-in needs --mask-out-dir");
        fs::create_directories(mask_out_dir);
        const BinaryVolume lung = load_binary_volume(mask_in);
        for (double angle : g.view_angles_deg)
          save_projection(project_binary_mask(lung, g, angle, min_path),
                          fs::path(mask_out_dir) / (angle_tag(angle) + ".pgm"));
      }
    } else if (project_mask->parsed()) {
      const ProjectionGeometry g = geometry_for(geometry_path, views, pixels);
      fs::create_directories(out_dir);
      const BinaryVolume mask = load_binary_volume(in_path);
      for (double angle : g.view_angles_deg)
        save_projection(project_binary_mask(mask, g, angle, min_path), fs::path(out_dir) / (angle_tag(angle) + ".pgm"));
    } else if (score->parsed()) {
      std::vector<ViewPrediction> preds;
      if (append && fs::exists(preds_path)) preds = read_predictions(preds_path);
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(proj_dir))
        if (e.path().extension() == ".pgm") files.push_back(e.path());
      std::vector<ViewPrediction> mine;
      for (const auto& f : files) {
        const ProjectionImage view = load_projection(f);
        mine.push_back(mask_dir.empty() ? threshold_scorer(view, scorer, patient_id)
                                        : threshold_scorer(view, load_projection(fs::path(mask_dir) / f.filename()),
                                                           scorer, patient_id));
      }
      std::sort(mine.begin(), mine.end(),
                [](const ViewPrediction& x, const ViewPrediction& y) { return x.view_angle_deg < y.view_angle_deg; });
      preds.insert(preds.end(), mine.begin(), mine.end());
      write_predictions(preds_path, preds);
      for (const auto& p : mine)
        std::cout << p.patient_id << ' ' << angle_tag(p.view_angle_deg) << " prob=" << p.prob_abnormal
                  << " label=" << p.label << '\n';
    } else if (ens->parsed()) {
      const EnsembleRule rule{n, a};
      rule.validate();
      const auto votes = ingest_predictions(preds_path, views.empty() ? std::vector<double>{} : parse_angles(views));
      const LabelMap decided = decide_all(votes, rule);
      if (!decided_out.empty()) write_labels(decided_out, decided);
      if (!truth_path.empty()) {
        const ConfusionMatrix c = confusion(decided, read_labels(truth_path));
        print_report_header();
        print_report_row(rule.name(), c, metrics(c));
      } else {
        std::cout << "patient_id,k,label\n";
        for (const auto& v : votes) std::cout << v.patient_id << ',' << v.k() << ',' << decided.at(v.patient_id) << '\n';
      }
    } else if (sweep->parsed()) {
      const auto votes = ingest_predictions(preds_path, views.empty() ? std::vector<double>{} : parse_angles(views));
      print_report_header();
      for (const auto& row : sweep_a(votes, read_labels(truth_path), n))
        print_report_row(row.rule.name(), row.confusion, row.report);
    } else if (met->parsed()) {
      const ConfusionMatrix c = confusion(read_labels(preds_path), read_labels(truth_path));
      print_report_header();
      print_report_row("-", c, metrics(c));
    } else if (seg->parsed()) {
      const Overlap o = seg_overlap(binary_from_pgm(pred_mask), binary_from_pgm(ref_mask));
      std::cout << "js,iou,dice\n"
                << format_real(o.jaccard) << ',' << format_real(o.jaccard) << ',' << format_real(o.dice) << '\n';
    } else if (folds->parsed()) {
      std::vector<std::pair<std::string, int>> ids;
      for (const auto& [id, label] : read_labels(patients_path)) ids.emplace_back(id, label);
      const FoldAssignment f = stratified_folds(ids, k, fold_seed);
      CsvTable t{{"patient_id", "label", "fold"}, {}};
      for (const auto& [id, fold] : f.fold) t.rows.push_back({id, std::to_string(f.label.at(id)), std::to_string(fold)});
      if (out_path.empty()) {
        std::cout << "patient_id,label,fold\n";
        for (const auto& r : t.rows) std::cout << r[0] << ',' << r[1] << ',' << r[2] << '\n';
      } else {
        write_csv(out_path, t);
      }
    } else if (cam->parsed()) {
      const ActivationMap act = read_activation(act_path);
      const ProjectionImage mask = mask_from_pgm(mask_in);
      const ActivationMap refined = refine(act, align_mask(mask, act.h, act.w));
      if (!decided_out.empty()) write_activation(decided_out, refined);
      const Gray8 base = read_pgm8(base_path);
      const FeatureMask base_mask = align_mask(mask, base.height, base.width);
      write_ppm(render_overlay(refined, base, reduce == "max" ? ChannelReduce::max : ChannelReduce::mean, &base_mask),
                out_path);
    } else if (pipe->parsed()) {
      PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_pipeline_config(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (!in_path.empty()) cfg.cohort_dir = in_path;
      if (!start_at.empty()) cfg.start_at = parse_stage(start_at);
      if (pipe->count("--seed")) cfg.seed = seed;
      if (pipe->count("--normal")) cfg.n_normal = n_normal;
      if (pipe->count("--abnormal")) cfg.n_abnormal = n_abnormal;
      if (!views.empty()) {
        cfg.geometry.view_angles_deg = parse_angles(views);
        cfg.rule.n = static_cast<int>(cfg.geometry.view_angles_deg.size());
        cfg.rule.a = std::min(cfg.rule.a, cfg.rule.n);
      }
      if (pipe->count("--n")) cfg.rule.n = n;
      if (pipe->count("--a")) cfg.rule.a = a;
      if (pixels > 0) cfg.geometry.detector_pixels = {pixels, pixels};
      if (scorer_kind == "external") cfg.scorer = ScorerKind::external;
      if (scorer_kind == "threshold") cfg.scorer = ScorerKind::threshold;
      if (!external_preds.empty()) cfg.external_preds = external_preds;
      if (binary) cfg.overlays = false;
      const PipelineResult r = run_pipeline(cfg, &std::cerr);
      std::cout << "rule,sensitivity,specificity,accuracy\n";
      for (const auto& rr : r.rules) {
        auto mean = [&rr](Metric m) {
          const auto& s = rr.summary.at(m);
          return s ? format_real(s->mean) : std::string("n/a");
        };
        std::cout << rr.rule.name() << ',' << mean(Metric::sensitivity) << ',' << mean(Metric::specificity) << ','
                  << mean(Metric::accuracy) << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << app.get_subcommands().front()->get_name() << ": error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
