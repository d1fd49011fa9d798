#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loftsim/config.hpp"
#include "loftsim/flora.hpp"
#include "loftsim/gbdt.hpp"
#include "loftsim/netsim.hpp"
#include "loftsim/recon.hpp"
#include "loftsim/traffic.hpp"

namespace loftsim {

// The four experiment settings: table capacity paired with the aggregate
// background packet rate, and attack refresh-cycle ranges paired with the
// new-rules-per-cycle count.
struct BackgroundSetting {
  int capacity = 0;
  double packet_rate_pps = 0;
};

struct AttackSetting {
  double af_min = 0;
  double af_max = 0;
  int anp = 0;
};

extern const std::array<BackgroundSetting, 4> kBackgroundSettings;
extern const std::array<AttackSetting, 4> kAttackSettings;

// One experiment scenario. Defaults are the desk profile: short runs with
// the attack refresh cycles, analyzer duration threshold and flow lengths
// compressed so the same table geometry plays out in 200 simulated seconds.
struct ScenarioConfig {
  int background_set = 1;  // 1..4, selects capacity and background rate
  int attack_set = 1;      // 1..4, selects af range and anp
  int capacity = 0;        // 0 takes the background set's capacity
  double run_length_s = 200;
  double attack_start_s = 60;
  bool attack_enabled = true;
  bool detector_enabled = false;
  uint64_t seed = 1;
  int monitored_switch = 0;  // the core switch in the default topology

  double packets_per_flow = 6;
  double mean_flow_lifetime_s = 10;
  double long_lived_fraction = 0.001;
  double long_lived_lifetime_s = 40;
  double idle_timeout_s = 20;
  double controller_penalty_ms = 50;
  double rtt_jitter_frac = 0.05;

  double af_scale = 0.2;  // multiplies the attack set's af range and step
  double spoofed_fraction = 0.5;

  double occupancy_threshold_pct = 80;
  double duration_threshold_s = 20;
  double crs_threshold_pct = 50;
  double elephant_byte_threshold = 0;  // 0 picks the p95 of each verdict set
  int block_after_evictions = 3;

  BoostConfig classifier;
};

// Full-length profile: 1000 s runs, attack at 300 s, unscaled refresh
// cycles, 50-packet flows, 100 s analyzer duration threshold.
ScenarioConfig full_scale_scenario();

// Applies keys from [topology] [background] [attack] [detector] [classifier]
// on top of base. Unknown keys are ignored; bad values throw.
ScenarioConfig scenario_from_ini(const IniConfig& ini, ScenarioConfig base = {});
IniConfig scenario_to_ini(const ScenarioConfig& cfg);

// Throws std::invalid_argument describing the first violated bound.
void validate(const ScenarioConfig& cfg);

int resolved_capacity(const ScenarioConfig& cfg);
BackgroundProfile background_profile(const ScenarioConfig& cfg);
AttackPlan attack_plan(const ScenarioConfig& cfg);

// Ground truth for source verification: each host ingress port may only
// source the /24 of its attached host.
PrefixMap ingress_prefixes(const TopologySpec& topo, const Simulator& sim);

struct ExperimentResult {
  ScenarioConfig config;
  int capacity = 0;
  AttackPlan plan;  // zeroed when the attack is disabled

  // Monitored switch, sampled at each whole second 1..run_length_s.
  std::vector<int> normal_rules;
  std::vector<int> attack_rules;
  uint64_t total_overflows = 0;
  std::optional<double> first_full_s;
  double mean_utilization_pct = 0;

  // One row per distinct rule key seen on the monitored switch, in first
  // seen order, holding the key's most recent per-second observation.
  std::vector<FeatureVector> rows;
  size_t normal_row_count = 0;
  size_t attack_row_count = 0;

  Blacklist blacklist;
  std::vector<DetectionReport> reports;
  uint64_t packets_sent = 0;
  uint64_t packets_dropped = 0;
};

// Builds the topology, wires the traffic generators, replays the scenario
// second by second and, when the detector is on, screens, classifies and
// mitigates each second the analyzer fires. model may be null; with the
// detector on, a null model trains a stand-in from a detector-off rehearsal
// of the same scenario (seed offset) first.
ExperimentResult run_scenario(const ScenarioConfig& cfg,
                              const TrainedModel* model = nullptr);

struct DatasetBuild {
  std::vector<FeatureVector> rows;  // set by set, first seen order
  std::vector<int> set_of_row;      // 1..4, parallel to rows
  size_t normal_count = 0;
  size_t attack_count = 0;
};

// Runs all four settings detector-off (set i seeded base.seed + 1000 * (i-1))
// and concatenates their rows. When runs is given, the per-set results are
// stored there.
DatasetBuild build_dataset(const ScenarioConfig& base,
                           std::vector<ExperimentResult>* runs = nullptr);

// Header: flow_id,src_ip,duration_s,pkt_count,byte_count,mean_dur_src,
// mean_pkt_src,mean_byte_src,cv_dur_src,cv_pkt_src,cv_byte_src,paf_s,
// crs_pct,psi,label
std::string dataset_to_csv(const std::vector<FeatureVector>& rows);
std::vector<FeatureVector> dataset_from_csv(const std::string& text);

std::string occupancy_to_csv(const ExperimentResult& result);

struct SplitResult {
  double train_fraction = 0;
  ConfusionCounts confusion;
  Metrics metrics;
};

struct EvaluationResult {
  std::vector<SplitResult> splits;  // train fractions 0.8, 0.75, 0.7, 0.65, 0.6
  size_t best_index = 0;            // highest test accuracy
  TrainedModel best_model;
};

// Trains and scores one model per stratified train/test split (the split
// shuffle is seeded from the classifier seed, so reruns match). The best
// split also gets a throughput measurement: the median over five timed
// prediction passes on its test rows, in rows per second. Throughput is
// wall-clock and is the one number here that varies between reruns.
EvaluationResult evaluate_splits(const std::vector<FeatureVector>& rows,
                                 const BoostConfig& config);

std::string metrics_to_json(const EvaluationResult& eval);

struct FullRunResult {
  ScenarioConfig base;
  std::vector<ExperimentResult> sets;  // four detector-off runs
  DatasetBuild dataset;
  EvaluationResult evaluation;
  TrainedModel deployed_model;  // trained on the whole dataset
  ExperimentResult defended;    // base setting, detector on, fresh seed
  std::string recon_json;
};

// The whole pipeline: reconnaissance probe, four dataset runs, split
// evaluation, full-dataset model, defended replay.
FullRunResult run_full(const ScenarioConfig& base);

// Writes occupancy_set1..4.csv, occupancy_defended.csv, dataset.csv,
// metrics.json, model.json, plans.json, recon.json, config.ini and
// manifest.json (which lists every other file) into out_dir, creating it if
// needed. Returns the written file names, manifest last. Throws
// std::runtime_error when a file cannot be written.
std::vector<std::string> export_artifacts(const FullRunResult& result,
                                          const std::string& out_dir);

}  // namespace loftsim
