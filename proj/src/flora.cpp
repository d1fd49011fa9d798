#include "loftsim/flora.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace loftsim {

namespace {

double h2(double p) {
  if (p <= 0 || p >= 1) return 0;
  return -p * std::log2(p) - (1 - p) * std::log2(1 - p);
}

double entropy_of_counts(const std::unordered_map<int, uint64_t>& counts,
                         uint64_t total) {
  double h = 0;
  for (const auto& [value, c] : counts) {
    if (c == 0) continue;
    const double p = double(c) / double(total);
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace

std::array<double, FeatureVector::kPredictors> FeatureVector::predictors()
    const {
  return {duration_s,   pkt_count,   byte_count, mean_dur_src,
          mean_pkt_src, mean_byte_src, cv_dur_src, cv_pkt_src,
          cv_byte_src,  paf_s,       crs_pct,    psi ? 1.0 : 0.0};
}

const std::array<const char*, FeatureVector::kPredictors>&
FeatureVector::predictor_names() {
  static const std::array<const char*, kPredictors> names = {
      "duration_s",   "pkt_count",     "byte_count", "mean_dur_src",
      "mean_pkt_src", "mean_byte_src", "cv_dur_src", "cv_pkt_src",
      "cv_byte_src",  "paf_s",         "crs_pct",    "psi"};
  return names;
}

AnalyzerResult analyze_table(const std::vector<SnapshotRow>& rows, int capacity,
                             double occupancy_threshold_pct,
                             double duration_threshold_s) {
  if (capacity <= 0) throw std::invalid_argument("analyze_table: capacity");
  AnalyzerResult r;
  const double occupancy_pct = 100.0 * double(rows.size()) / double(capacity);
  if (occupancy_pct < occupancy_threshold_pct) return r;
  r.active = true;
  for (size_t i = 0; i < rows.size(); ++i)
    if (rows[i].duration_s > duration_threshold_s) r.suspicious.push_back(i);
  return r;
}

double compute_paf(const std::vector<double>& arrival_times,
                   double rule_duration_s) {
  if (arrival_times.size() < 2) return rule_duration_s;
  return (arrival_times.back() - arrival_times.front()) /
         double(arrival_times.size() - 1);
}

double compute_paf(double first_arrival, double last_arrival, uint64_t packets,
                   double rule_duration_s) {
  if (packets < 2) return rule_duration_s;
  return (last_arrival - first_arrival) / double(packets - 1);
}

double shannon_entropy(const std::vector<double>& distribution) {
  double sum = 0;
  for (double p : distribution) {
    if (p < 0) throw std::domain_error("shannon_entropy: negative probability");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw std::domain_error("shannon_entropy: probabilities must sum to 1");
  double h = 0;
  for (double p : distribution)
    if (p > 0) h -= p * std::log2(p);
  return h;
}

double information_gain(const std::vector<int>& labels,
                        const std::vector<int>& attribute) {
  if (labels.empty()) throw std::domain_error("information_gain: empty input");
  if (labels.size() != attribute.size())
    throw std::invalid_argument("information_gain: length mismatch");

  const uint64_t n = labels.size();
  std::unordered_map<int, uint64_t> label_counts;
  for (int l : labels) ++label_counts[l];
  const double h_all = entropy_of_counts(label_counts, n);

  std::unordered_map<int, std::unordered_map<int, uint64_t>> partitions;
  std::unordered_map<int, uint64_t> partition_sizes;
  for (size_t i = 0; i < labels.size(); ++i) {
    ++partitions[attribute[i]][labels[i]];
    ++partition_sizes[attribute[i]];
  }

  double h_cond = 0;
  for (const auto& [value, counts] : partitions) {
    const uint64_t size = partition_sizes[value];
    h_cond += (double(size) / double(n)) * entropy_of_counts(counts, size);
  }
  return h_all - h_cond;
}

int64_t crs_bin(CrsAttribute attr, const PacketRecord& p) {
  switch (attr) {
    case CrsAttribute::SrcIp:
      return int64_t(p.src_ip);
    case CrsAttribute::DstIp:
      return int64_t(p.dst_ip);
    case CrsAttribute::PacketSize:
      return int64_t(p.size / 64);
    case CrsAttribute::PayloadSize:
      return int64_t(p.payload / 64);
    case CrsAttribute::PayloadEntropy:
      return int64_t(std::floor(std::clamp(p.entropy_bits, 0.0, 8.0) * 4.0));
    case CrsAttribute::AgeAtArrival:
      return std::min<int64_t>(int64_t(std::max(0.0, p.age_s) / 4.0), 63);
  }
  return 0;
}

void CrsHistogram::add(const PacketRecord& packet) {
  for (size_t a = 0; a < kCrsAttributes; ++a)
    ++bins[a][crs_bin(CrsAttribute(a), packet)];
  ++packets;
}

void subtract_histogram(CrsHistogram& population, const CrsHistogram& flow) {
  if (flow.packets > population.packets)
    throw std::invalid_argument("subtract_histogram: flow exceeds population");
  for (size_t a = 0; a < kCrsAttributes; ++a) {
    for (const auto& [bin, count] : flow.bins[a]) {
      auto it = population.bins[a].find(bin);
      if (it == population.bins[a].end() || it->second < count)
        throw std::invalid_argument("subtract_histogram: flow not contained");
      it->second -= count;
      if (it->second == 0) population.bins[a].erase(it);
    }
  }
  population.packets -= flow.packets;
}

double crs_from_histograms(const CrsHistogram& flow,
                           const CrsHistogram& population) {
  const uint64_t n = population.packets;
  const uint64_t nf = flow.packets;
  if (n < 2 || nf == 0 || nf >= n) return 0;

  const double q = double(nf) / double(n);
  const double hq = h2(q);
  if (hq <= 0) return 0;

  double total = 0;
  for (size_t a = 0; a < kCrsAttributes; ++a) {
    double ig = hq;
    for (const auto& [bin, nfb] : flow.bins[a]) {
      auto it = population.bins[a].find(bin);
      if (it == population.bins[a].end() || it->second < nfb)
        throw std::invalid_argument("crs_from_histograms: flow not contained");
      const double share = double(nfb) / double(it->second);
      ig -= (double(it->second) / double(n)) * h2(share);
    }
    total += std::clamp(ig, 0.0, hq);
  }
  return std::clamp(100.0 * total / (double(kCrsAttributes) * hq), 0.0, 100.0);
}

double compute_crs(const std::vector<PacketRecord>& flow_packets,
                   const std::vector<PacketRecord>& population) {
  CrsHistogram flow, all;
  for (const auto& p : flow_packets) flow.add(p);
  for (const auto& p : population) all.add(p);
  return crs_from_histograms(flow, all);
}

bool Prefix::contains(uint32_t ip) const {
  if (length <= 0) return true;
  const uint32_t mask = length >= 32 ? 0xffffffffu : ~(0xffffffffu >> length);
  return (ip & mask) == (base & mask);
}

Prefix Prefix::parse(const std::string& cidr) {
  const auto slash = cidr.find('/');
  if (slash == std::string::npos)
    throw std::invalid_argument("Prefix: missing /length in " + cidr);
  Prefix p;
  p.base = ip_from_string(cidr.substr(0, slash));
  const std::string len = cidr.substr(slash + 1);
  if (len.empty() || len.find_first_not_of("0123456789") != std::string::npos)
    throw std::invalid_argument("Prefix: bad length in " + cidr);
  p.length = std::stoi(len);
  if (p.length < 0 || p.length > 32)
    throw std::invalid_argument("Prefix: length out of range in " + cidr);
  return p;
}

bool check_spoofed(uint32_t src_ip, uint16_t in_port,
                   const PrefixMap& prefixes) {
  auto it = prefixes.find(in_port);
  if (it == prefixes.end())
    throw std::invalid_argument("check_spoofed: no allocation for ingress port");
  for (const Prefix& p : it->second)
    if (p.contains(src_ip)) return false;
  return true;
}

std::vector<FeatureVector> extract_features(const SnapshotFrame& frame,
                                            const std::vector<double>& crs_pct,
                                            const PrefixMap& prefixes) {
  if (!crs_pct.empty() && crs_pct.size() != frame.rows.size())
    throw std::invalid_argument("extract_features: crs size mismatch");

  struct GroupStats {
    double n = 0;
    double dur = 0, dur2 = 0;
    double pkt = 0, pkt2 = 0;
    double bytes = 0, bytes2 = 0;
  };
  std::unordered_map<uint32_t, GroupStats> groups;
  for (const auto& row : frame.rows) {
    auto& g = groups[row.key.src_ip];
    const double d = row.duration_s;
    const double p = double(row.packet_count);
    const double b = double(row.byte_count);
    g.n += 1;
    g.dur += d;
    g.dur2 += d * d;
    g.pkt += p;
    g.pkt2 += p * p;
    g.bytes += b;
    g.bytes2 += b * b;
  }

  auto cv = [](double sum, double sum2, double n) {
    const double mean = sum / n;
    if (mean == 0) return 0.0;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    return std::sqrt(var) / mean;
  };

  std::vector<FeatureVector> out;
  out.reserve(frame.rows.size());
  for (size_t i = 0; i < frame.rows.size(); ++i) {
    const auto& row = frame.rows[i];
    const auto& g = groups[row.key.src_ip];
    FeatureVector fv;
    fv.key = row.key;
    fv.flow_id = MatchKeyHash{}(row.key);
    fv.src_ip = row.key.src_ip;
    fv.duration_s = row.duration_s;
    fv.pkt_count = double(row.packet_count);
    fv.byte_count = double(row.byte_count);
    fv.mean_dur_src = g.dur / g.n;
    fv.mean_pkt_src = g.pkt / g.n;
    fv.mean_byte_src = g.bytes / g.n;
    fv.cv_dur_src = g.n > 1 ? cv(g.dur, g.dur2, g.n) : 0.0;
    fv.cv_pkt_src = g.n > 1 ? cv(g.pkt, g.pkt2, g.n) : 0.0;
    fv.cv_byte_src = g.n > 1 ? cv(g.bytes, g.bytes2, g.n) : 0.0;
    fv.paf_s = compute_paf(row.install_time, row.last_match_time,
                           row.packet_count, row.duration_s);
    fv.crs_pct = crs_pct.empty() ? 0.0 : crs_pct[i];
    fv.psi = prefixes.empty()
                 ? false
                 : check_spoofed(row.key.src_ip, row.key.in_port, prefixes);
    fv.label = row.origin == Origin::Attack ? 1 : 0;
    out.push_back(fv);
  }
  return out;
}

bool admission_gate(const FeatureVector& fv, double idle_timeout_s,
                    double crs_threshold_pct) {
  return fv.paf_s < idle_timeout_s || fv.crs_pct < crs_threshold_pct || fv.psi;
}

DetectionReport mitigate(FlowTable& table, Blacklist& blacklist,
                         const std::vector<Verdict>& verdicts, double now,
                         const MitigationConfig& cfg) {
  if (cfg.block_after_evictions < 1)
    throw std::invalid_argument("mitigate: block_after_evictions");

  DetectionReport report;
  report.time = now;
  report.verdicts = verdicts;
  report.occupancy_before = table.size();

  double threshold = cfg.elephant_byte_threshold;
  if (threshold <= 0 && !verdicts.empty()) {
    std::vector<double> bytes;
    bytes.reserve(verdicts.size());
    for (const auto& v : verdicts) bytes.push_back(v.byte_count);
    std::sort(bytes.begin(), bytes.end());
    const size_t idx = std::min(
        bytes.size() - 1,
        size_t(std::ceil(0.95 * double(bytes.size()))) - 1);
    threshold = bytes[idx];
  }

  for (const auto& v : verdicts) {
    if (!v.attack) continue;
    if (v.byte_count > threshold && !v.psi) {
      report.protected_elephants.push_back(v.key);
      continue;
    }
    if (!table.evict(v.key, now, EvictionCause::Mitigation)) continue;
    report.evicted.push_back(v.key);
    auto& e = blacklist.entries[v.src_ip];
    if (e.eviction_count == 0) e.first_seen = now;
    ++e.eviction_count;
    e.last_seen = now;
    if (!e.blocked && e.eviction_count >= cfg.block_after_evictions) {
      e.blocked = true;
      report.newly_blocked.push_back(v.src_ip);
    }
  }
  report.occupancy_after = table.size();
  return report;
}

}  // namespace loftsim
