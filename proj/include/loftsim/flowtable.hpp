#pragma once

#include <cstdint>
#include <list>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace loftsim {

enum class Protocol : uint8_t { Tcp = 6, Udp = 17, Icmp = 1 };

const char* to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);

uint32_t make_ip(unsigned a, unsigned b, unsigned c, unsigned d);
std::string ip_to_string(uint32_t ip);
uint32_t ip_from_string(const std::string& s);

enum class MatchField : uint8_t { SrcIp = 0, DstIp, SrcPort, DstPort, Proto, InPort };

const char* to_string(MatchField f);

// Which header fields a switch actually matches on.
class FieldSet {
public:
  FieldSet() = default;
  static FieldSet all();
  static FieldSet of(std::initializer_list<MatchField> fields);

  FieldSet& set(MatchField f);
  FieldSet& clear(MatchField f);
  bool test(MatchField f) const;
  int count() const;
  bool operator==(const FieldSet&) const = default;

  std::vector<MatchField> to_list() const;
  std::string to_string() const;

private:
  uint8_t bits_ = 0;
};

struct MatchKey {
  uint32_t src_ip = 0;
  uint32_t dst_ip = 0;
  uint16_t src_port = 0;
  uint16_t dst_port = 0;
  Protocol protocol = Protocol::Tcp;
  uint16_t in_port = 0;

  bool operator==(const MatchKey&) const = default;
};

// Key with every disabled field zeroed, so equality respects the switch config.
MatchKey masked_key(const MatchKey& k, FieldSet enabled);

struct MatchKeyHash {
  size_t operator()(const MatchKey& k) const;
};

std::string to_string(const MatchKey& k);

enum class Origin : uint8_t { Legitimate = 0, Attack = 1 };
const char* to_string(Origin o);

enum class EvictionCause : uint8_t { IdleTimeout, FifoReplacement, Mitigation };
const char* to_string(EvictionCause c);

struct FlowRule {
  MatchKey key;
  double install_time = 0;
  double last_match_time = 0;
  uint64_t packet_count = 0;
  uint64_t byte_count = 0;
  double idle_timeout = 0;
  Origin origin = Origin::Legitimate;  // ground truth; never consulted by lookups
};

struct EvictionRecord {
  double time = 0;
  MatchKey key;
  EvictionCause cause = EvictionCause::IdleTimeout;
  Origin origin = Origin::Legitimate;
};

struct SnapshotRow {
  MatchKey key;
  double install_time = 0;
  double last_match_time = 0;
  double duration_s = 0;
  uint64_t packet_count = 0;
  uint64_t byte_count = 0;
  Origin origin = Origin::Legitimate;
};

enum class InstallStatus : uint8_t { Installed, Replaced, Rejected };

struct InstallOutcome {
  InstallStatus status = InstallStatus::Installed;
  std::optional<MatchKey> evicted;  // set when a FIFO replacement happened
};

// Fixed-capacity flow table with FIFO replacement and idle-timeout expiry.
class FlowTable {
public:
  FlowTable(size_t capacity, FieldSet enabled_fields);

  // Throws std::invalid_argument on duplicate key or non-positive timeout.
  InstallOutcome install_rule(const MatchKey& key, double now, double idle_timeout,
                              Origin origin);

  // Hit updates counters and last_match_time; miss leaves the table untouched.
  bool match_packet(const MatchKey& key, uint64_t bytes, double now);

  // Evicts every rule idle for at least its timeout. Returns evicted keys
  // in installation order.
  std::vector<MatchKey> tick(double now);

  // Targeted removal (defense path). Returns false when the key is absent.
  bool evict(const MatchKey& key, double now, EvictionCause cause);

  std::vector<SnapshotRow> snapshot(double now) const;

  bool contains(const MatchKey& key) const;
  const FlowRule* find(const MatchKey& key) const;

  size_t size() const { return rules_.size(); }
  size_t capacity() const { return capacity_; }
  uint64_t total_overflows() const { return total_overflows_; }
  uint64_t total_installed() const { return total_installed_; }
  FieldSet enabled_fields() const { return enabled_; }
  const std::vector<EvictionRecord>& eviction_log() const { return eviction_log_; }

  // Rules in installation order.
  const std::list<FlowRule>& rules() const { return rules_; }

private:
  void remove_rule(std::list<FlowRule>::iterator it, double now, EvictionCause cause);

  size_t capacity_;
  FieldSet enabled_;
  std::list<FlowRule> rules_;  // front = oldest installed
  std::unordered_map<MatchKey, std::list<FlowRule>::iterator, MatchKeyHash> index_;
  std::vector<EvictionRecord> eviction_log_;
  uint64_t total_overflows_ = 0;
  uint64_t total_installed_ = 0;
};

// CSV with header: time_s,flow_id,src_ip,dst_ip,src_port,dst_port,proto,in_port,
// duration_s,pkt_count,byte_count,origin
std::string snapshot_to_csv(const std::vector<SnapshotRow>& rows, double time_s);

}  // namespace loftsim
