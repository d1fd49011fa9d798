#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "loftsim/flowtable.hpp"

namespace loftsim {

enum class HostRole : uint8_t { Legitimate, Attacker };

struct TopologySpec {
  struct SwitchSpec {
    std::string name;
    size_t capacity = 1500;
    FieldSet match_fields = FieldSet::of({MatchField::SrcIp, MatchField::DstIp,
                                          MatchField::SrcPort, MatchField::DstPort,
                                          MatchField::Proto});
    double idle_timeout_s = 20.0;
  };
  struct HostSpec {
    std::string name;
    int attach_switch = 0;
    double link_latency_ms = 1.0;
    HostRole role = HostRole::Legitimate;
    uint32_t ip = 0;
  };
  struct SwitchLink {
    int a = 0, b = 0;
    double latency_ms = 1.0;
  };

  std::vector<SwitchSpec> switches;
  std::vector<HostSpec> hosts;
  std::vector<SwitchLink> switch_links;
  double controller_penalty_ms = 50.0;
  double rtt_jitter_frac = 0.05;  // sigma as a fraction of the base RTT
  // recorded only; latency already captures the data plane we model
  double switch_link_gbps = 1.0;
  double host_link_gbps = 5.0;
};

// Three-level tree: one core switch, three edge switches, eight hosts.
// h1, h3, h6 are the attackers.
TopologySpec default_topology(size_t capacity = 1500, double idle_timeout_s = 20.0);

struct PacketEvent {
  double time = 0;
  int src_host = 0;
  MatchKey key;
  uint64_t bytes = 64;
  uint64_t payload_bytes = 24;
  double payload_entropy_bits = 6.0;
  Origin origin = Origin::Legitimate;
};

struct RttSample {
  double rtt_ms = 0;
  double send_time = 0;
  bool truth_miss = false;  // ground truth for test oracles only
};

enum class Disposition : uint8_t { Hit, Miss, Dropped };
const char* to_string(Disposition d);

struct TraceRow {
  double time = 0;
  int src_host = 0;
  MatchKey key;
  uint64_t bytes = 0;
  Disposition disposition = Disposition::Hit;
  double rtt_ms = 0;
  int path_switches = 0;
};

struct SnapshotFrame {
  double time = 0;
  std::vector<SnapshotRow> rows;
};

struct TrafficSource {
  std::string name;
  std::vector<PacketEvent> events;  // must be sorted by time
};

struct RunOptions {
  int monitored_switch = 0;
  bool collect_trace = true;
  bool collect_snapshots = false;
};

struct RunResult {
  std::vector<TraceRow> trace;
  std::vector<SnapshotFrame> snapshots;  // monitored switch, one per second
  uint64_t packets_sent = 0;
  uint64_t packets_dropped = 0;
  uint64_t misses = 0;
  uint64_t install_attempts = 0;
};

// Deterministic single-path packet-level simulator with a controller miss
// penalty on first-hop table misses.
class Simulator {
public:
  Simulator(TopologySpec spec, uint64_t seed);

  const TopologySpec& spec() const { return spec_; }
  double now() const { return clock_; }

  FlowTable& table(int switch_index) { return *tables_.at(size_t(switch_index)); }
  const FlowTable& table(int switch_index) const {
    return *tables_.at(size_t(switch_index));
  }
  size_t switch_count() const { return tables_.size(); }

  int host_index(const std::string& name) const;
  int host_by_ip(uint32_t ip) const;  // -1 when unknown
  uint16_t host_ingress_port(int host) const;
  // switches traversed from src host to dst host, first hop first
  const std::vector<int>& path_switches(int src_host, int dst_host) const;
  double path_one_way_ms(int src_host, int dst_host) const;

  // Ingress blacklist enforcement.
  void block_source(uint32_t src_ip);
  bool is_blocked(uint32_t src_ip) const;
  const std::vector<uint32_t>& blocked_sources() const { return blocked_list_; }

  // Advances the clock, firing ticks (and on_second) at each crossed second.
  void advance_to(double t);

  // Injects one packet at event.time (>= now). Stamps key.in_port from the
  // sender, routes by dst_ip, installs on a first-hop miss along the whole
  // path. Throws on unknown destination or time regression.
  RttSample send_packet(const PacketEvent& event);

  // Called after the ticks of each whole second s, before events in [s, s+1).
  std::function<void(double)> on_second;
  // Fired for every eviction on any switch (idle, fifo, mitigation).
  std::function<void(int sw, const EvictionRecord&)> on_eviction;
  // Fired for every delivered packet after table updates. sw_path = switches hit.
  std::function<void(const PacketEvent&, bool miss, const std::vector<int>& sw_path)>
      on_packet;

  // Merges the sources by (time, source order, sequence) and plays them until
  // t_end, ticking every second. Event times must be < t_end.
  RunResult run_until(double t_end, const std::vector<TrafficSource>& sources,
                      const RunOptions& opts = {});

  uint64_t total_install_attempts() const { return install_attempts_; }

private:
  void flush_evictions();
  double jitter(double base_ms);

  TopologySpec spec_;
  std::vector<std::unique_ptr<FlowTable>> tables_;
  std::vector<size_t> eviction_cursor_;
  std::vector<std::vector<std::vector<int>>> switch_paths_;  // [from sw][to sw]
  mutable std::vector<std::vector<int>> host_paths_;         // cache, host pair -> switches
  std::vector<uint32_t> blocked_list_;
  std::mt19937_64 rng_;
  double clock_ = 0;
  int64_t next_tick_ = 1;
  uint64_t install_attempts_ = 0;
};

/// CSV with header: time_s,host,src_ip,dst_ip,sport,dport,proto,bytes,hit_or_miss,rtt_ms
std::string trace_to_csv(const std::vector<TraceRow>& trace,
                         const TopologySpec& spec);
std::vector<PacketEvent> trace_from_csv(const std::string& csv,
                                        const TopologySpec& spec);

}  // namespace loftsim
