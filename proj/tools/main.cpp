#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "loftsim/harness.hpp"

namespace fs = std::filesystem;
using namespace loftsim;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 0;
  bool full_scale = false;
  int set = 0;
};

CLI::Option* add_common(CLI::App* sub, CommonOpts& opts) {
  sub->add_option("--config", opts.config_path,
                  "Scenario config file (ini)")
      ->check(CLI::ExistingFile);
  sub->add_option("--out", opts.out_dir, "Output directory")
      ->capture_default_str();
  sub->add_flag("--paper-scale", opts.full_scale,
                "Full-length profile (1000 s runs, unscaled refresh cycles)");
  return sub->add_option("--seed", opts.seed, "Override the scenario seed");
}

ScenarioConfig base_config(const CommonOpts& opts, const CLI::Option* seed_opt) {
  ScenarioConfig base = opts.full_scale ? full_scale_scenario() : ScenarioConfig{};
  if (!opts.config_path.empty())
    base = scenario_from_ini(IniConfig::load(opts.config_path), base);
  if (seed_opt->count() > 0) base.seed = opts.seed;
  if (opts.set > 0) {
    base.background_set = opts.set;
    base.attack_set = opts.set;
  }
  return base;
}

void write_text(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json run_summary(const ExperimentResult& r) {
  nlohmann::json j;
  j["capacity"] = r.capacity;
  j["first_full_s"] =
      r.first_full_s ? nlohmann::json(*r.first_full_s) : nlohmann::json();
  j["total_overflows"] = r.total_overflows;
  j["mean_utilization_pct"] = r.mean_utilization_pct;
  j["dataset_rows"] = r.rows.size();
  j["normal_rows"] = r.normal_row_count;
  j["attack_rows"] = r.attack_row_count;
  j["detection_cycles"] = r.reports.size();
  size_t blocked = 0;
  for (const auto& [ip, e] : r.blacklist.entries) blocked += e.blocked;
  j["blocked_sources"] = blocked;
  j["packets_sent"] = r.packets_sent;
  j["packets_dropped"] = r.packets_dropped;
  return j;
}

int cmd_simulate(const CommonOpts& opts, const CLI::Option* seed_opt,
                 bool detector, bool no_attack) {
  ScenarioConfig cfg = base_config(opts, seed_opt);
  if (detector) cfg.detector_enabled = true;
  if (no_attack) cfg.attack_enabled = false;
  ExperimentResult r = run_scenario(cfg);

  const fs::path dir(opts.out_dir);
  std::vector<std::string> files;
  write_text(dir / "occupancy.csv", occupancy_to_csv(r));
  files.push_back("occupancy.csv");
  if (cfg.attack_enabled) {
    write_text(dir / "plan.json", plan_to_json(r.plan) + "\n");
    files.push_back("plan.json");
  }
  nlohmann::json j = run_summary(r);
  j["out_dir"] = opts.out_dir;
  j["files"] = files;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_recon(const CommonOpts& opts, const CLI::Option* seed_opt) {
  ScenarioConfig cfg = base_config(opts, seed_opt);
  validate(cfg);
  TopologySpec topo =
      default_topology(size_t(resolved_capacity(cfg)), cfg.idle_timeout_s);
  topo.controller_penalty_ms = cfg.controller_penalty_ms;
  topo.rtt_jitter_frac = cfg.rtt_jitter_frac;
  Simulator sim(topo, cfg.seed + 7);
  const std::vector<MatchField> candidates = {
      MatchField::SrcIp, MatchField::DstIp, MatchField::SrcPort,
      MatchField::DstPort, MatchField::Proto};
  ProbeResult probe = infer_match_fields(sim, sim.host_index("h1"),
                                         sim.host_index("h8"), candidates, 5);
  TimeoutEstimate estimate = estimate_idle_timeout(
      sim, sim.host_index("h1"), sim.host_index("h8"), 0.05, 50,
      std::max(60, int(cfg.idle_timeout_s) + 10), 10);
  std::string report = recon_report_json(probe, estimate);
  if (report.empty() || report.back() != '\n') report += '\n';
  write_text(fs::path(opts.out_dir) / "recon.json", report);
  std::cout << report;
  return 0;
}

int cmd_build_dataset(const CommonOpts& opts, const CLI::Option* seed_opt) {
  ScenarioConfig cfg = base_config(opts, seed_opt);
  std::vector<ExperimentResult> runs;
  DatasetBuild ds = build_dataset(cfg, &runs);
  const fs::path dir(opts.out_dir);
  write_text(dir / "dataset.csv", dataset_to_csv(ds.rows));
  nlohmann::json plans = nlohmann::json::array();
  for (const ExperimentResult& r : runs)
    plans.push_back(nlohmann::json::parse(plan_to_json(r.plan)));
  write_text(dir / "plans.json", plans.dump(2) + "\n");

  nlohmann::json j;
  j["rows"] = ds.rows.size();
  j["normal_rows"] = ds.normal_count;
  j["attack_rows"] = ds.attack_count;
  j["out_dir"] = opts.out_dir;
  j["files"] = {"dataset.csv", "plans.json"};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_train(const CommonOpts& opts, const CLI::Option* seed_opt,
              const std::string& dataset_path, bool rfecv, int folds) {
  ScenarioConfig cfg = base_config(opts, seed_opt);
  fs::path data = dataset_path.empty() ? fs::path(opts.out_dir) / "dataset.csv"
                                       : fs::path(dataset_path);
  std::vector<FeatureVector> rows = dataset_from_csv(read_text(data));
  DataMatrix m = DataMatrix::from_vectors(rows);

  nlohmann::json j;
  j["rows"] = rows.size();
  std::vector<int> features;
  if (rfecv) {
    RfecvResult sel = rfecv_select(m, cfg.classifier, folds, 1);
    features = sel.selected;
    nlohmann::json r;
    r["selected"] = nlohmann::json::array();
    for (int f : sel.selected)
      r["selected"].push_back(FeatureVector::predictor_names()[size_t(f)]);
    r["ranking"] = sel.ranking;
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& [count, acc] : sel.curve)
      curve.push_back({{"features", count}, {"cv_accuracy", acc}});
    r["curve"] = curve;
    j["rfecv"] = r;
  }
  TrainedModel model =
      features.empty()
          ? train_classifier(m, cfg.classifier)
          : train_classifier(select_columns(m, features), cfg.classifier,
                             features);
  write_text(fs::path(opts.out_dir) / "model.json", model_to_json(model));

  nlohmann::json importance;
  for (size_t i = 0; i < model.feature_indices.size(); ++i)
    importance[FeatureVector::predictor_names()[size_t(
        model.feature_indices[i])]] = model.importance[i];
  j["importance"] = importance;
  j["trees"] = model.trees.size();
  j["out_dir"] = opts.out_dir;
  j["files"] = {"model.json"};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& opts, const CLI::Option* seed_opt,
                 const std::string& dataset_path) {
  ScenarioConfig cfg = base_config(opts, seed_opt);
  fs::path data = dataset_path.empty() ? fs::path(opts.out_dir) / "dataset.csv"
                                       : fs::path(dataset_path);
  std::vector<FeatureVector> rows = dataset_from_csv(read_text(data));
  EvaluationResult ev = evaluate_splits(rows, cfg.classifier);
  std::string metrics = metrics_to_json(ev);
  write_text(fs::path(opts.out_dir) / "metrics.json", metrics);
  std::cout << metrics;
  return 0;
}

int cmd_full(const CommonOpts& opts, const CLI::Option* seed_opt) {
  ScenarioConfig cfg = base_config(opts, seed_opt);
  FullRunResult full = run_full(cfg);
  std::vector<std::string> files = export_artifacts(full, opts.out_dir);

  const SplitResult& best = full.evaluation.splits.at(full.evaluation.best_index);
  nlohmann::json j;
  j["out_dir"] = opts.out_dir;
  j["files"] = files;
  j["dataset_rows"] = full.dataset.rows.size();
  j["accuracy"] = best.metrics.accuracy;
  j["f1"] = best.metrics.f1;
  j["fpr"] = best.metrics.fpr;
  j["fnr"] = best.metrics.fnr;
  j["classification_rate_per_s"] = best.metrics.classification_rate_per_s;
  j["defended"] = run_summary(full.defended);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-table overflow attack and defense simulator"};
  app.require_subcommand(1);

  CommonOpts sim_opts, recon_opts, data_opts, train_opts, eval_opts, full_opts;
  bool detector = false, no_attack = false, rfecv = false;
  int folds = 5;
  std::string train_dataset, eval_dataset;

  CLI::App* sim = app.add_subcommand(
      "simulate", "Replay one scenario and export its occupancy series");
  CLI::Option* sim_seed = add_common(sim, sim_opts);
  sim->add_option("--set", sim_opts.set, "Experiment setting 1..4")
      ->check(CLI::Range(1, 4));
  sim->add_flag("--detector", detector, "Enable detection and mitigation");
  sim->add_flag("--no-attack", no_attack, "Background traffic only");

  CLI::App* rec = app.add_subcommand(
      "recon", "Probe match fields and idle timeout from an attacker host");
  CLI::Option* rec_seed = add_common(rec, recon_opts);

  CLI::App* build = app.add_subcommand(
      "build-dataset", "Run all four settings and export the labeled dataset");
  CLI::Option* build_seed = add_common(build, data_opts);

  CLI::App* train = app.add_subcommand(
      "train", "Train the classifier on an exported dataset");
  CLI::Option* train_seed = add_common(train, train_opts);
  train->add_option("--dataset", train_dataset,
                    "Dataset csv (default <out>/dataset.csv)");
  train->add_flag("--rfecv", rfecv, "Select features before training");
  train->add_option("--folds", folds, "Cross-validation folds for --rfecv")
      ->check(CLI::Range(2, 20));

  CLI::App* eval = app.add_subcommand(
      "evaluate", "Score train/test splits of an exported dataset");
  CLI::Option* eval_seed = add_common(eval, eval_opts);
  eval->add_option("--dataset", eval_dataset,
                   "Dataset csv (default <out>/dataset.csv)");

  CLI::App* full = app.add_subcommand(
      "full", "Reconnaissance, dataset, training, evaluation, defended replay");
  CLI::Option* full_seed = add_common(full, full_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    nlohmann::json err{{"error", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_opts, sim_seed, detector, no_attack);
    if (rec->parsed()) return cmd_recon(recon_opts, rec_seed);
    if (build->parsed()) return cmd_build_dataset(data_opts, build_seed);
    if (train->parsed())
      return cmd_train(train_opts, train_seed, train_dataset, rfecv, folds);
    if (eval->parsed()) return cmd_evaluate(eval_opts, eval_seed, eval_dataset);
    if (full->parsed()) return cmd_full(full_opts, full_seed);
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
