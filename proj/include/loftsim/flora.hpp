#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "loftsim/netsim.hpp"

namespace loftsim {

// One rule's detection features. The 12 predictors, in fixed order, are:
// duration_s, pkt_count, byte_count, mean_dur_src, mean_pkt_src,
// mean_byte_src, cv_dur_src, cv_pkt_src, cv_byte_src, paf_s, crs_pct, psi.
struct FeatureVector {
  MatchKey key;
  uint64_t flow_id = 0;
  uint32_t src_ip = 0;
  double duration_s = 0;
  double pkt_count = 0;
  double byte_count = 0;
  double mean_dur_src = 0;
  double mean_pkt_src = 0;
  double mean_byte_src = 0;
  double cv_dur_src = 0;
  double cv_pkt_src = 0;
  double cv_byte_src = 0;
  double paf_s = 0;
  double crs_pct = 0;
  bool psi = false;
  int label = -1;  // 0 normal, 1 attack, -1 unknown

  static constexpr size_t kPredictors = 12;
  std::array<double, kPredictors> predictors() const;
  static const std::array<const char*, kPredictors>& predictor_names();
};

struct AnalyzerResult {
  bool active = false;
  std::vector<size_t> suspicious;  // indices into the snapshot rows
};

// Screens a snapshot: inactive below the occupancy threshold (percent of
// capacity), otherwise flags rules resident longer than duration_threshold_s.
AnalyzerResult analyze_table(const std::vector<SnapshotRow>& rows, int capacity,
                             double occupancy_threshold_pct = 80,
                             double duration_threshold_s = 100);

// Mean gap between consecutive packet arrivals; rules with fewer than two
// arrivals report their residence time instead.
double compute_paf(const std::vector<double>& arrival_times,
                   double rule_duration_s);
double compute_paf(double first_arrival, double last_arrival, uint64_t packets,
                   double rule_duration_s);

// -sum p log2 p over a probability distribution (validated to sum to 1).
double shannon_entropy(const std::vector<double>& distribution);

// Entropy of `labels` minus its expected entropy after partitioning by
// `attribute` values.
double information_gain(const std::vector<int>& labels,
                        const std::vector<int>& attribute);

// Attributes scored when judging how separable one flow's packets are from
// the rest of the live traffic.
enum class CrsAttribute : uint8_t {
  SrcIp = 0,
  DstIp,
  PacketSize,
  PayloadSize,
  PayloadEntropy,
  AgeAtArrival,
};
inline constexpr size_t kCrsAttributes = 6;

struct PacketRecord {
  uint32_t src_ip = 0;
  uint32_t dst_ip = 0;
  uint64_t size = 0;
  uint64_t payload = 0;
  double entropy_bits = 0;
  double age_s = 0;  // flow age when the packet arrived
};

// Discretization shared by both score paths below.
int64_t crs_bin(CrsAttribute attr, const PacketRecord& packet);

// Per-attribute bin counts for one packet population.
struct CrsHistogram {
  std::array<std::unordered_map<int64_t, uint64_t>, kCrsAttributes> bins;
  uint64_t packets = 0;

  void add(const PacketRecord& packet);
};

// Removes a flow's counts from a population histogram (used when a rule is
// evicted and its packets leave the live window).
void subtract_histogram(CrsHistogram& population, const CrsHistogram& flow);

// Normalized cumulative information gain, in percent, of a membership split
// (this flow's packets vs everyone else's) over the six attributes. The flow
// histogram must be contained in the population histogram. Returns 0 for
// populations with fewer than two flows' worth of packets.
double crs_from_histograms(const CrsHistogram& flow,
                           const CrsHistogram& population);

// Convenience path: builds both histograms, then scores. `population` must
// include the flow's own packets.
double compute_crs(const std::vector<PacketRecord>& flow_packets,
                   const std::vector<PacketRecord>& population);

// CIDR prefix. parse accepts "a.b.c.d/len".
struct Prefix {
  uint32_t base = 0;
  int length = 0;
  bool contains(uint32_t ip) const;
  static Prefix parse(const std::string& cidr);
};

// Allocated source prefixes per ingress port.
using PrefixMap = std::map<uint16_t, std::vector<Prefix>>;

// True when src_ip falls outside every prefix allocated to its ingress port.
// Throws std::invalid_argument for a port with no allocation entry.
bool check_spoofed(uint32_t src_ip, uint16_t in_port, const PrefixMap& prefixes);

// Builds one FeatureVector per snapshot row. crs_pct supplies the content
// relevance score per row (empty means 0 for every row); per-source means and
// coefficients of variation are computed over rows sharing a source address
// within this frame. An empty prefix map disables the spoof check (psi stays
// false). The ground-truth label travels along for dataset building; nothing
// here predicts.
std::vector<FeatureVector> extract_features(const SnapshotFrame& frame,
                                            const std::vector<double>& crs_pct,
                                            const PrefixMap& prefixes);

// Screening filter deciding which rules are worth classifying: short packet
// gaps, low content relevance, or a spoofed source all qualify.
bool admission_gate(const FeatureVector& fv, double idle_timeout_s,
                    double crs_threshold_pct = 50);

struct BlacklistEntry {
  int eviction_count = 0;
  bool blocked = false;
  double first_seen = 0;
  double last_seen = 0;
};

struct Blacklist {
  std::map<uint32_t, BlacklistEntry> entries;
};

struct Verdict {
  MatchKey key;
  uint32_t src_ip = 0;
  double probability = 0;
  bool attack = false;
  double byte_count = 0;
  bool psi = false;
};

struct MitigationConfig {
  // 0 selects the 95th percentile of the verdict set's byte counts
  double elephant_byte_threshold = 0;
  int block_after_evictions = 3;
};

struct DetectionReport {
  double time = 0;
  std::vector<Verdict> verdicts;
  std::vector<MatchKey> evicted;
  std::vector<MatchKey> protected_elephants;
  std::vector<uint32_t> newly_blocked;
  size_t occupancy_before = 0;
  size_t occupancy_after = 0;
};

// Evicts rules with attack verdicts (skipping high-volume rules from
// verified sources), counts evictions per source address, and marks sources
// for blocking once they reach the configured eviction count.
DetectionReport mitigate(FlowTable& table, Blacklist& blacklist,
                         const std::vector<Verdict>& verdicts, double now,
                         const MitigationConfig& cfg);

}  // namespace loftsim
