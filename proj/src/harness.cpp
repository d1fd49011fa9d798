#include "loftsim/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

namespace loftsim {

const std::array<BackgroundSetting, 4> kBackgroundSettings = {{
    {1500, 250},
    {2000, 300},
    {2500, 400},
    {3000, 600},
}};

const std::array<AttackSetting, 4> kAttackSettings = {{
    {4, 8, 20},
    {8, 12, 40},
    {12, 16, 60},
    {16, 19, 80},
}};

ScenarioConfig full_scale_scenario() {
  ScenarioConfig cfg;
  cfg.run_length_s = 1000;
  cfg.attack_start_s = 300;
  cfg.packets_per_flow = 50;
  cfg.long_lived_lifetime_s = 200;
  cfg.af_scale = 1.0;
  cfg.duration_threshold_s = 100;
  return cfg;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

ScenarioConfig scenario_from_ini(const IniConfig& ini, ScenarioConfig base) {
  ScenarioConfig c = base;
  c.capacity = int(ini.get_int("topology", "capacity", c.capacity));
  c.run_length_s = ini.get_double("topology", "run_length_s", c.run_length_s);
  c.monitored_switch =
      int(ini.get_int("topology", "monitored_switch", c.monitored_switch));
  c.idle_timeout_s = ini.get_double("topology", "idle_timeout_s", c.idle_timeout_s);
  c.controller_penalty_ms =
      ini.get_double("topology", "controller_penalty_ms", c.controller_penalty_ms);
  c.rtt_jitter_frac =
      ini.get_double("topology", "rtt_jitter_frac", c.rtt_jitter_frac);
  c.seed = uint64_t(ini.get_int("topology", "seed", int64_t(c.seed)));

  c.background_set = int(ini.get_int("background", "set", c.background_set));
  c.packets_per_flow =
      ini.get_double("background", "packets_per_flow", c.packets_per_flow);
  c.mean_flow_lifetime_s = ini.get_double("background", "mean_flow_lifetime_s",
                                          c.mean_flow_lifetime_s);
  c.long_lived_fraction = ini.get_double("background", "long_lived_fraction",
                                         c.long_lived_fraction);
  c.long_lived_lifetime_s = ini.get_double("background", "long_lived_lifetime_s",
                                           c.long_lived_lifetime_s);

  c.attack_set = int(ini.get_int("attack", "set", c.attack_set));
  c.attack_enabled = ini.get_bool("attack", "enabled", c.attack_enabled);
  c.attack_start_s = ini.get_double("attack", "start_s", c.attack_start_s);
  c.af_scale = ini.get_double("attack", "af_scale", c.af_scale);
  c.spoofed_fraction =
      ini.get_double("attack", "spoofed_fraction", c.spoofed_fraction);

  c.detector_enabled = ini.get_bool("detector", "enabled", c.detector_enabled);
  c.occupancy_threshold_pct = ini.get_double(
      "detector", "occupancy_threshold_pct", c.occupancy_threshold_pct);
  c.duration_threshold_s = ini.get_double("detector", "duration_threshold_s",
                                          c.duration_threshold_s);
  c.crs_threshold_pct =
      ini.get_double("detector", "crs_threshold_pct", c.crs_threshold_pct);
  c.elephant_byte_threshold = ini.get_double(
      "detector", "elephant_byte_threshold", c.elephant_byte_threshold);
  c.block_after_evictions = int(
      ini.get_int("detector", "block_after_evictions", c.block_after_evictions));

  BoostConfig& b = c.classifier;
  b.tree_count = int(ini.get_int("classifier", "trees", b.tree_count));
  b.max_depth = int(ini.get_int("classifier", "max_depth", b.max_depth));
  b.learning_rate =
      ini.get_double("classifier", "learning_rate", b.learning_rate);
  b.l2_leaf_reg = ini.get_double("classifier", "l2_leaf_reg", b.l2_leaf_reg);
  b.subsample = ini.get_double("classifier", "subsample", b.subsample);
  b.ordered = ini.get_bool("classifier", "ordered", b.ordered);
  b.seed = uint64_t(ini.get_int("classifier", "seed", int64_t(b.seed)));
  b.prob_threshold =
      ini.get_double("classifier", "prob_threshold", b.prob_threshold);
  b.max_bins = int(ini.get_int("classifier", "max_bins", b.max_bins));
  return c;
}

IniConfig scenario_to_ini(const ScenarioConfig& cfg) {
  IniConfig ini;
  ini.set("topology", "capacity", std::to_string(cfg.capacity));
  ini.set("topology", "run_length_s", format_double(cfg.run_length_s));
  ini.set("topology", "monitored_switch", std::to_string(cfg.monitored_switch));
  ini.set("topology", "idle_timeout_s", format_double(cfg.idle_timeout_s));
  ini.set("topology", "controller_penalty_ms",
          format_double(cfg.controller_penalty_ms));
  ini.set("topology", "rtt_jitter_frac", format_double(cfg.rtt_jitter_frac));
  ini.set("topology", "seed", std::to_string(cfg.seed));

  ini.set("background", "set", std::to_string(cfg.background_set));
  ini.set("background", "packets_per_flow", format_double(cfg.packets_per_flow));
  ini.set("background", "mean_flow_lifetime_s",
          format_double(cfg.mean_flow_lifetime_s));
  ini.set("background", "long_lived_fraction",
          format_double(cfg.long_lived_fraction));
  ini.set("background", "long_lived_lifetime_s",
          format_double(cfg.long_lived_lifetime_s));

  ini.set("attack", "set", std::to_string(cfg.attack_set));
  ini.set("attack", "enabled", cfg.attack_enabled ? "true" : "false");
  ini.set("attack", "start_s", format_double(cfg.attack_start_s));
  ini.set("attack", "af_scale", format_double(cfg.af_scale));
  ini.set("attack", "spoofed_fraction", format_double(cfg.spoofed_fraction));

  ini.set("detector", "enabled", cfg.detector_enabled ? "true" : "false");
  ini.set("detector", "occupancy_threshold_pct",
          format_double(cfg.occupancy_threshold_pct));
  ini.set("detector", "duration_threshold_s",
          format_double(cfg.duration_threshold_s));
  ini.set("detector", "crs_threshold_pct", format_double(cfg.crs_threshold_pct));
  ini.set("detector", "elephant_byte_threshold",
          format_double(cfg.elephant_byte_threshold));
  ini.set("detector", "block_after_evictions",
          std::to_string(cfg.block_after_evictions));

  const BoostConfig& b = cfg.classifier;
  ini.set("classifier", "trees", std::to_string(b.tree_count));
  ini.set("classifier", "max_depth", std::to_string(b.max_depth));
  ini.set("classifier", "learning_rate", format_double(b.learning_rate));
  ini.set("classifier", "l2_leaf_reg", format_double(b.l2_leaf_reg));
  ini.set("classifier", "subsample", format_double(b.subsample));
  ini.set("classifier", "ordered", b.ordered ? "true" : "false");
  ini.set("classifier", "seed", std::to_string(b.seed));
  ini.set("classifier", "prob_threshold", format_double(b.prob_threshold));
  ini.set("classifier", "max_bins", std::to_string(b.max_bins));
  return ini;
}

void validate(const ScenarioConfig& cfg) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("scenario: " + what);
  };
  if (cfg.background_set < 1 || cfg.background_set > 4)
    fail("background set must be 1..4");
  if (cfg.attack_set < 1 || cfg.attack_set > 4) fail("attack set must be 1..4");
  if (cfg.capacity < 0) fail("capacity must be >= 0");
  if (!(cfg.run_length_s >= 1) || cfg.run_length_s != std::floor(cfg.run_length_s))
    fail("run length must be a whole positive number of seconds");
  if (cfg.attack_enabled &&
      !(cfg.attack_start_s >= 0 && cfg.attack_start_s < cfg.run_length_s))
    fail("attack start must fall inside the run");
  if (cfg.monitored_switch < 0 || cfg.monitored_switch > 3)
    fail("monitored switch must be 0..3");
  if (!(cfg.packets_per_flow > 1)) fail("packets per flow must exceed 1");
  if (!(cfg.mean_flow_lifetime_s > 0)) fail("mean flow lifetime must be positive");
  if (cfg.long_lived_fraction < 0 || cfg.long_lived_fraction > 1)
    fail("long lived fraction must be in [0,1]");
  if (!(cfg.long_lived_lifetime_s > 0))
    fail("long lived lifetime must be positive");
  if (!(cfg.idle_timeout_s > 0)) fail("idle timeout must be positive");
  if (!(cfg.controller_penalty_ms > 0)) fail("controller penalty must be positive");
  if (cfg.rtt_jitter_frac < 0) fail("rtt jitter must be >= 0");
  if (!(cfg.af_scale > 0)) fail("af scale must be positive");
  if (cfg.spoofed_fraction < 0 || cfg.spoofed_fraction > 1)
    fail("spoofed fraction must be in [0,1]");
  if (!(cfg.occupancy_threshold_pct > 0 && cfg.occupancy_threshold_pct <= 100))
    fail("occupancy threshold must be in (0,100]");
  if (cfg.duration_threshold_s < 0) fail("duration threshold must be >= 0");
  if (cfg.crs_threshold_pct < 0 || cfg.crs_threshold_pct > 100)
    fail("crs threshold must be in [0,100]");
  if (cfg.elephant_byte_threshold < 0)
    fail("elephant byte threshold must be >= 0");
  if (cfg.block_after_evictions < 1)
    fail("block after evictions must be >= 1");
}

int resolved_capacity(const ScenarioConfig& cfg) {
  if (cfg.capacity > 0) return cfg.capacity;
  if (cfg.background_set < 1 || cfg.background_set > 4)
    throw std::invalid_argument("scenario: background set must be 1..4");
  return kBackgroundSettings[size_t(cfg.background_set - 1)].capacity;
}

BackgroundProfile background_profile(const ScenarioConfig& cfg) {
  if (cfg.background_set < 1 || cfg.background_set > 4)
    throw std::invalid_argument("scenario: background set must be 1..4");
  const BackgroundSetting& set = kBackgroundSettings[size_t(cfg.background_set - 1)];
  BackgroundProfile p;
  p.flow_arrival_rate = set.packet_rate_pps / cfg.packets_per_flow;
  p.mean_flow_lifetime_s = cfg.mean_flow_lifetime_s;
  p.long_lived_fraction = cfg.long_lived_fraction;
  p.long_lived_lifetime_s = cfg.long_lived_lifetime_s;
  p.per_flow_packet_rate = (cfg.packets_per_flow - 1) / cfg.mean_flow_lifetime_s;
  return p;
}

AttackPlan attack_plan(const ScenarioConfig& cfg) {
  if (cfg.attack_set < 1 || cfg.attack_set > 4)
    throw std::invalid_argument("scenario: attack set must be 1..4");
  const AttackSetting& a = kAttackSettings[size_t(cfg.attack_set - 1)];
  return plan_attack(double(resolved_capacity(cfg)), background_profile(cfg),
                     a.af_min * cfg.af_scale, a.af_max * cfg.af_scale, a.anp,
                     cfg.idle_timeout_s, cfg.af_scale);
}

PrefixMap ingress_prefixes(const TopologySpec& topo, const Simulator& sim) {
  PrefixMap map;
  for (size_t h = 0; h < topo.hosts.size(); ++h) {
    uint16_t port = sim.host_ingress_port(int(h));
    map[port].push_back(Prefix{topo.hosts[h].ip & 0xffffff00u, 24});
  }
  return map;
}

namespace {

struct FlowMonitor {
  FieldSet fields;
  CrsHistogram population;
  std::unordered_map<MatchKey, CrsHistogram, MatchKeyHash> flows;
};

}  // namespace

ExperimentResult run_scenario(const ScenarioConfig& cfg,
                              const TrainedModel* model) {
  validate(cfg);
  ExperimentResult result;
  result.config = cfg;
  const int capacity = resolved_capacity(cfg);
  result.capacity = capacity;

  TopologySpec topo = default_topology(size_t(capacity), cfg.idle_timeout_s);
  topo.controller_penalty_ms = cfg.controller_penalty_ms;
  topo.rtt_jitter_frac = cfg.rtt_jitter_frac;

  std::vector<TrafficSource> sources;
  sources.push_back(generate_background(topo, background_profile(cfg), cfg.seed,
                                        0.0, cfg.run_length_s));
  if (cfg.attack_enabled) {
    result.plan = attack_plan(cfg);
    sources.push_back(generate_attack(topo, result.plan, cfg.seed + 1,
                                      cfg.attack_start_s, cfg.run_length_s,
                                      cfg.spoofed_fraction));
  }

  TrainedModel bootstrap;
  if (cfg.detector_enabled && model == nullptr) {
    ScenarioConfig rehearsal = cfg;
    rehearsal.detector_enabled = false;
    rehearsal.seed = cfg.seed + 17;
    ExperimentResult pre = run_scenario(rehearsal, nullptr);
    bootstrap = train_classifier(DataMatrix::from_vectors(pre.rows), cfg.classifier);
    model = &bootstrap;
  }

  Simulator sim(topo, cfg.seed + 2);
  const int monitored = cfg.monitored_switch;
  FlowMonitor monitor;
  monitor.fields = sim.table(monitored).enabled_fields();
  const PrefixMap prefixes = ingress_prefixes(topo, sim);

  const size_t seconds = size_t(llround(cfg.run_length_s));
  result.normal_rules.assign(seconds, 0);
  result.attack_rules.assign(seconds, 0);

  std::unordered_map<MatchKey, size_t, MatchKeyHash> row_index;
  double util_sum = 0;
  MitigationConfig mcfg;
  mcfg.elephant_byte_threshold = cfg.elephant_byte_threshold;
  mcfg.block_after_evictions = cfg.block_after_evictions;

  sim.on_packet = [&](const PacketEvent& ev, bool, const std::vector<int>& path) {
    if (std::find(path.begin(), path.end(), monitored) == path.end()) return;
    const FlowRule* rule = sim.table(monitored).find(ev.key);
    if (rule == nullptr) return;
    PacketRecord rec;
    rec.src_ip = ev.key.src_ip;
    rec.dst_ip = ev.key.dst_ip;
    rec.size = ev.bytes;
    rec.payload = ev.payload_bytes;
    rec.entropy_bits = ev.payload_entropy_bits;
    rec.age_s = ev.time - rule->install_time;
    monitor.flows[masked_key(ev.key, monitor.fields)].add(rec);
    monitor.population.add(rec);
  };

  sim.on_eviction = [&](int sw, const EvictionRecord& evr) {
    if (sw != monitored) return;
    auto it = monitor.flows.find(masked_key(evr.key, monitor.fields));
    if (it == monitor.flows.end()) return;
    subtract_histogram(monitor.population, it->second);
    monitor.flows.erase(it);
  };

  const CrsHistogram empty_hist;
  sim.on_second = [&](double s) {
    SnapshotFrame frame;
    frame.time = s;
    frame.rows = sim.table(monitored).snapshot(s);
    const size_t idx = size_t(llround(s)) - 1;
    if (idx >= seconds) return;

    int normal = 0, attack = 0;
    for (const SnapshotRow& row : frame.rows)
      (row.origin == Origin::Attack ? attack : normal)++;
    result.normal_rules[idx] = normal;
    result.attack_rules[idx] = attack;
    util_sum += 100.0 * double(frame.rows.size()) / double(capacity);
    if (!result.first_full_s && frame.rows.size() >= size_t(capacity))
      result.first_full_s = s;

    std::vector<double> crs(frame.rows.size(), 0.0);
    for (size_t i = 0; i < frame.rows.size(); ++i) {
      auto it = monitor.flows.find(masked_key(frame.rows[i].key, monitor.fields));
      const CrsHistogram& flow =
          it == monitor.flows.end() ? empty_hist : it->second;
      crs[i] = crs_from_histograms(flow, monitor.population);
    }
    std::vector<FeatureVector> fvs = extract_features(frame, crs, prefixes);
    for (const FeatureVector& fv : fvs) {
      MatchKey mk = masked_key(fv.key, monitor.fields);
      auto [it, inserted] = row_index.try_emplace(mk, result.rows.size());
      if (inserted)
        result.rows.push_back(fv);
      else
        result.rows[it->second] = fv;
    }

    if (!cfg.detector_enabled) return;
    AnalyzerResult screened =
        analyze_table(frame.rows, capacity, cfg.occupancy_threshold_pct,
                      cfg.duration_threshold_s);
    if (!screened.active) return;
    std::vector<Verdict> verdicts;
    for (const FeatureVector& fv : fvs) {
      if (!admission_gate(fv, cfg.idle_timeout_s, cfg.crs_threshold_pct))
        continue;
      Prediction p = predict_flow(*model, fv);
      if (!p.attack) continue;
      Verdict v;
      v.key = fv.key;
      v.src_ip = fv.src_ip;
      v.probability = p.probability;
      v.attack = true;
      v.byte_count = fv.byte_count;
      v.psi = fv.psi;
      verdicts.push_back(v);
    }
    if (verdicts.empty()) return;
    DetectionReport report =
        mitigate(sim.table(monitored), result.blacklist, verdicts, s, mcfg);
    for (uint32_t ip : report.newly_blocked) sim.block_source(ip);
    result.reports.push_back(std::move(report));
  };

  RunOptions opts;
  opts.monitored_switch = monitored;
  opts.collect_trace = false;
  opts.collect_snapshots = false;
  RunResult rr = sim.run_until(cfg.run_length_s, sources, opts);

  result.total_overflows = sim.table(monitored).total_overflows();
  for (const EvictionRecord& evr : sim.table(monitored).eviction_log()) {
    if (evr.cause != EvictionCause::FifoReplacement) continue;
    if (!result.first_full_s || evr.time < *result.first_full_s)
      result.first_full_s = evr.time;
    break;
  }
  result.mean_utilization_pct = util_sum / double(seconds);
  for (const FeatureVector& fv : result.rows)
    (fv.label == 1 ? result.attack_row_count : result.normal_row_count)++;
  result.packets_sent = rr.packets_sent;
  result.packets_dropped = rr.packets_dropped;
  return result;
}

DatasetBuild build_dataset(const ScenarioConfig& base,
                           std::vector<ExperimentResult>* runs) {
  DatasetBuild out;
  if (runs) runs->clear();
  for (int set = 1; set <= 4; ++set) {
    ScenarioConfig cfg = base;
    cfg.background_set = set;
    cfg.attack_set = set;
    cfg.detector_enabled = false;
    cfg.seed = base.seed + uint64_t(1000 * (set - 1));
    ExperimentResult res = run_scenario(cfg, nullptr);
    for (const FeatureVector& fv : res.rows) {
      out.rows.push_back(fv);
      out.set_of_row.push_back(set);
      (fv.label == 1 ? out.attack_count : out.normal_count)++;
    }
    if (runs) runs->push_back(std::move(res));
  }
  return out;
}

namespace {

constexpr const char* kDatasetHeader =
    "flow_id,src_ip,duration_s,pkt_count,byte_count,mean_dur_src,mean_pkt_src,"
    "mean_byte_src,cv_dur_src,cv_pkt_src,cv_byte_src,paf_s,crs_pct,psi,label";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_double_field(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw std::invalid_argument("dataset csv: bad number: " + s);
  return v;
}

}  // namespace

std::string dataset_to_csv(const std::vector<FeatureVector>& rows) {
  std::string out = kDatasetHeader;
  out += "\n";
  char buf[512];
  for (const FeatureVector& fv : rows) {
    std::snprintf(
        buf, sizeof buf,
        "%llu,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,"
        "%.10g,%d,%d\n",
        static_cast<unsigned long long>(fv.flow_id),
        ip_to_string(fv.src_ip).c_str(), fv.duration_s, fv.pkt_count,
        fv.byte_count, fv.mean_dur_src, fv.mean_pkt_src, fv.mean_byte_src,
        fv.cv_dur_src, fv.cv_pkt_src, fv.cv_byte_src, fv.paf_s, fv.crs_pct,
        fv.psi ? 1 : 0, fv.label);
    out += buf;
  }
  return out;
}

std::vector<FeatureVector> dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("dataset csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kDatasetHeader)
    throw std::invalid_argument("dataset csv: unexpected header: " + line);
  std::vector<FeatureVector> rows;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 15)
      throw std::invalid_argument("dataset csv: line " +
                                  std::to_string(line_no) + ": expected 15 fields");
    FeatureVector fv;
    fv.flow_id = std::strtoull(f[0].c_str(), nullptr, 10);
    fv.src_ip = ip_from_string(f[1]);
    fv.key.src_ip = fv.src_ip;
    fv.duration_s = parse_double_field(f[2]);
    fv.pkt_count = parse_double_field(f[3]);
    fv.byte_count = parse_double_field(f[4]);
    fv.mean_dur_src = parse_double_field(f[5]);
    fv.mean_pkt_src = parse_double_field(f[6]);
    fv.mean_byte_src = parse_double_field(f[7]);
    fv.cv_dur_src = parse_double_field(f[8]);
    fv.cv_pkt_src = parse_double_field(f[9]);
    fv.cv_byte_src = parse_double_field(f[10]);
    fv.paf_s = parse_double_field(f[11]);
    fv.crs_pct = parse_double_field(f[12]);
    fv.psi = parse_double_field(f[13]) != 0;
    fv.label = int(parse_double_field(f[14]));
    rows.push_back(fv);
  }
  return rows;
}

std::string occupancy_to_csv(const ExperimentResult& result) {
  std::string out = "time_s,normal_rules,attack_rules,capacity\n";
  char buf[128];
  for (size_t i = 0; i < result.normal_rules.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%d,%d,%d\n", i + 1,
                  result.normal_rules[i], result.attack_rules[i],
                  result.capacity);
    out += buf;
  }
  return out;
}

EvaluationResult evaluate_splits(const std::vector<FeatureVector>& rows,
                                 const BoostConfig& config) {
  std::array<std::vector<size_t>, 2> by_class;
  for (size_t i = 0; i < rows.size(); ++i) {
    int label = rows[i].label;
    if (label != 0 && label != 1)
      throw std::domain_error("evaluate: labels must be 0 or 1");
    by_class[size_t(label)].push_back(i);
  }
  if (by_class[0].size() < 2 || by_class[1].size() < 2)
    throw std::domain_error("evaluate: need at least two rows of each class");

  static constexpr std::array<double, 5> kFractions = {0.80, 0.75, 0.70, 0.65,
                                                       0.60};
  EvaluationResult out;
  double best_acc = -1;
  std::vector<size_t> best_test;
  for (size_t fi = 0; fi < kFractions.size(); ++fi) {
    const double frac = kFractions[fi];
    std::mt19937_64 rng(config.seed * 1000003ULL + fi);
    std::vector<size_t> train_idx, test_idx;
    for (int cls : {0, 1}) {
      std::vector<size_t> idx = by_class[size_t(cls)];
      std::shuffle(idx.begin(), idx.end(), rng);
      size_t n_train = size_t(llround(frac * double(idx.size())));
      n_train = std::min(std::max<size_t>(n_train, 1), idx.size() - 1);
      train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
      test_idx.insert(test_idx.end(), idx.begin() + n_train, idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    std::vector<FeatureVector> train_rows;
    train_rows.reserve(train_idx.size());
    for (size_t i : train_idx) train_rows.push_back(rows[i]);
    TrainedModel model =
        train_classifier(DataMatrix::from_vectors(train_rows), config);

    std::vector<int> y_true, y_pred;
    y_true.reserve(test_idx.size());
    y_pred.reserve(test_idx.size());
    for (size_t i : test_idx) {
      y_true.push_back(rows[i].label);
      y_pred.push_back(predict_flow(model, rows[i]).attack ? 1 : 0);
    }
    SplitResult sr;
    sr.train_fraction = frac;
    sr.confusion = count_confusion(y_true, y_pred);
    sr.metrics = compute_metrics(sr.confusion);
    out.splits.push_back(sr);
    if (sr.metrics.accuracy > best_acc) {
      best_acc = sr.metrics.accuracy;
      out.best_index = fi;
      out.best_model = std::move(model);
      best_test = test_idx;
    }
  }

  std::vector<std::vector<double>> xs;
  xs.reserve(best_test.size());
  for (size_t i : best_test) {
    auto p = rows[i].predictors();
    xs.emplace_back(p.begin(), p.end());
  }
  std::vector<double> rates;
  double sink = 0;
  for (int pass = 0; pass < 5; ++pass) {
    auto t0 = std::chrono::steady_clock::now();
    for (const std::vector<double>& x : xs) sink += out.best_model.predict_proba(x);
    auto t1 = std::chrono::steady_clock::now();
    double secs = std::chrono::duration<double>(t1 - t0).count();
    rates.push_back(double(xs.size()) / std::max(secs, 1e-9));
  }
  std::sort(rates.begin(), rates.end());
  double rate = rates[rates.size() / 2];
  // sink keeps the timed loop observable to the optimizer
  if (!(sink >= 0)) rate = 0;
  out.splits[out.best_index].metrics.classification_rate_per_s = rate;
  return out;
}

namespace {

nlohmann::json split_to_json(const SplitResult& s) {
  nlohmann::json o;
  o["train_fraction"] = s.train_fraction;
  o["accuracy"] = s.metrics.accuracy;
  o["precision"] = s.metrics.precision;
  o["recall"] = s.metrics.recall;
  o["f1"] = s.metrics.f1;
  o["fpr"] = s.metrics.fpr;
  o["fnr"] = s.metrics.fnr;
  o["confusion"] = {{"tp", s.confusion.tp},
                    {"fp", s.confusion.fp},
                    {"fn", s.confusion.fn},
                    {"tn", s.confusion.tn}};
  return o;
}

}  // namespace

std::string metrics_to_json(const EvaluationResult& eval) {
  const SplitResult& best = eval.splits.at(eval.best_index);
  nlohmann::json j = split_to_json(best);
  j.erase("train_fraction");
  j["best_train_fraction"] = best.train_fraction;
  j["classification_rate_per_s"] = best.metrics.classification_rate_per_s;
  nlohmann::json arr = nlohmann::json::array();
  for (const SplitResult& s : eval.splits) arr.push_back(split_to_json(s));
  j["splits"] = arr;
  return j.dump(2) + "\n";
}

FullRunResult run_full(const ScenarioConfig& base) {
  validate(base);
  FullRunResult out;
  out.base = base;

  TopologySpec topo =
      default_topology(size_t(resolved_capacity(base)), base.idle_timeout_s);
  topo.controller_penalty_ms = base.controller_penalty_ms;
  topo.rtt_jitter_frac = base.rtt_jitter_frac;
  Simulator recon_sim(topo, base.seed + 7);
  const int src = recon_sim.host_index("h1");
  const int dst = recon_sim.host_index("h8");
  const std::vector<MatchField> candidates = {
      MatchField::SrcIp, MatchField::DstIp, MatchField::SrcPort,
      MatchField::DstPort, MatchField::Proto};
  ProbeResult probe = infer_match_fields(recon_sim, src, dst, candidates, 5);
  TimeoutEstimate estimate = estimate_idle_timeout(
      recon_sim, src, dst, 0.05, 50, std::max(60, int(base.idle_timeout_s) + 10),
      10);
  out.recon_json = recon_report_json(probe, estimate);

  out.dataset = build_dataset(base, &out.sets);
  out.evaluation = evaluate_splits(out.dataset.rows, base.classifier);
  out.deployed_model =
      train_classifier(DataMatrix::from_vectors(out.dataset.rows), base.classifier);

  ScenarioConfig defended = base;
  defended.detector_enabled = true;
  defended.seed = base.seed + 5000;
  out.defended = run_scenario(defended, &out.deployed_model);
  return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::vector<std::string> export_artifacts(const FullRunResult& result,
                                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::string> files;
  auto emit = [&](const std::string& name, const std::string& content) {
    write_file(dir / name, content);
    files.push_back(name);
  };

  for (size_t i = 0; i < result.sets.size(); ++i)
    emit("occupancy_set" + std::to_string(i + 1) + ".csv",
         occupancy_to_csv(result.sets[i]));
  emit("occupancy_defended.csv", occupancy_to_csv(result.defended));
  emit("dataset.csv", dataset_to_csv(result.dataset.rows));
  emit("metrics.json", metrics_to_json(result.evaluation));
  emit("model.json", model_to_json(result.deployed_model));
  nlohmann::json plans = nlohmann::json::array();
  for (const ExperimentResult& s : result.sets)
    plans.push_back(nlohmann::json::parse(plan_to_json(s.plan)));
  emit("plans.json", plans.dump(2) + "\n");
  std::string recon = result.recon_json;
  if (recon.empty() || recon.back() != '\n') recon += '\n';
  emit("recon.json", recon);
  emit("config.ini", scenario_to_ini(result.base).to_string());

  nlohmann::json manifest;
  manifest["files"] = files;
  manifest["seed"] = result.base.seed;
  nlohmann::json set_seeds = nlohmann::json::array();
  for (size_t i = 0; i < result.sets.size(); ++i)
    set_seeds.push_back(result.sets[i].config.seed);
  manifest["seeds"] = {{"recon", result.base.seed + 7},
                       {"sets", set_seeds},
                       {"defended", result.defended.config.seed}};
  manifest["config_ini"] = scenario_to_ini(result.base).to_string();
  manifest["dataset_rows"] = result.dataset.rows.size();
  manifest["normal_rows"] = result.dataset.normal_count;
  manifest["attack_rows"] = result.dataset.attack_count;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  files.push_back("manifest.json");
  return files;
}

}  // namespace loftsim
