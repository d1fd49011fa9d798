#include "loftsim/flowtable.hpp"

#include <sstream>
#include <stdexcept>

namespace loftsim {

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::Tcp: return "TCP";
    case Protocol::Udp: return "UDP";
    case Protocol::Icmp: return "ICMP";
  }
  return "?";
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "TCP" || s == "tcp") return Protocol::Tcp;
  if (s == "UDP" || s == "udp") return Protocol::Udp;
  if (s == "ICMP" || s == "icmp") return Protocol::Icmp;
  throw std::invalid_argument("unknown protocol: " + s);
}

uint32_t make_ip(unsigned a, unsigned b, unsigned c, unsigned d) {
  return (a << 24) | (b << 16) | (c << 8) | d;
}

std::string ip_to_string(uint32_t ip) {
  std::ostringstream os;
  os << ((ip >> 24) & 0xff) << '.' << ((ip >> 16) & 0xff) << '.' << ((ip >> 8) & 0xff)
     << '.' << (ip & 0xff);
  return os.str();
}

uint32_t ip_from_string(const std::string& s) {
  unsigned a, b, c, d;
  char dot;
  std::istringstream is(s);
  if (!(is >> a >> dot >> b >> dot >> c >> dot >> d) || a > 255 || b > 255 || c > 255 ||
      d > 255) {
    throw std::invalid_argument("bad IPv4 literal: " + s);
  }
  return make_ip(a, b, c, d);
}

const char* to_string(MatchField f) {
  switch (f) {
    case MatchField::SrcIp: return "src_ip";
    case MatchField::DstIp: return "dst_ip";
    case MatchField::SrcPort: return "src_port";
    case MatchField::DstPort: return "dst_port";
    case MatchField::Proto: return "protocol";
    case MatchField::InPort: return "in_port";
  }
  return "?";
}

FieldSet FieldSet::all() {
  FieldSet s;
  s.bits_ = 0x3f;
  return s;
}

FieldSet FieldSet::of(std::initializer_list<MatchField> fields) {
  FieldSet s;
  for (MatchField f : fields) s.set(f);
  return s;
}

FieldSet& FieldSet::set(MatchField f) {
  bits_ |= uint8_t(1u << unsigned(f));
  return *this;
}

FieldSet& FieldSet::clear(MatchField f) {
  bits_ &= uint8_t(~(1u << unsigned(f)));
  return *this;
}

bool FieldSet::test(MatchField f) const { return bits_ & (1u << unsigned(f)); }

int FieldSet::count() const {
  int n = 0;
  for (unsigned i = 0; i < 6; ++i)
    if (bits_ & (1u << i)) ++n;
  return n;
}

std::vector<MatchField> FieldSet::to_list() const {
  std::vector<MatchField> out;
  for (unsigned i = 0; i < 6; ++i)
    if (bits_ & (1u << i)) out.push_back(MatchField(i));
  return out;
}

std::string FieldSet::to_string() const {
  std::string out;
  for (MatchField f : to_list()) {
    if (!out.empty()) out += ',';
    out += loftsim::to_string(f);
  }
  return out;
}

MatchKey masked_key(const MatchKey& k, FieldSet enabled) {
  MatchKey m;
  if (enabled.test(MatchField::SrcIp)) m.src_ip = k.src_ip;
  if (enabled.test(MatchField::DstIp)) m.dst_ip = k.dst_ip;
  if (enabled.test(MatchField::SrcPort)) m.src_port = k.src_port;
  if (enabled.test(MatchField::DstPort)) m.dst_port = k.dst_port;
  if (enabled.test(MatchField::Proto)) m.protocol = k.protocol;
  else m.protocol = Protocol::Tcp;
  if (enabled.test(MatchField::InPort)) m.in_port = k.in_port;
  return m;
}

size_t MatchKeyHash::operator()(const MatchKey& k) const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  mix(k.src_ip);
  mix(k.dst_ip);
  mix((uint64_t(k.src_port) << 32) | k.dst_port);
  mix((uint64_t(uint8_t(k.protocol)) << 16) | k.in_port);
  return size_t(h);
}

std::string to_string(const MatchKey& k) {
  std::ostringstream os;
  os << ip_to_string(k.src_ip) << ':' << k.src_port << '>' << ip_to_string(k.dst_ip)
     << ':' << k.dst_port << '/' << to_string(k.protocol) << "@p" << k.in_port;
  return os.str();
}

const char* to_string(Origin o) {
  return o == Origin::Attack ? "attack" : "normal";
}

const char* to_string(EvictionCause c) {
  switch (c) {
    case EvictionCause::IdleTimeout: return "idle_timeout";
    case EvictionCause::FifoReplacement: return "fifo_replacement";
    case EvictionCause::Mitigation: return "mitigation";
  }
  return "?";
}

FlowTable::FlowTable(size_t capacity, FieldSet enabled_fields)
    : capacity_(capacity), enabled_(enabled_fields) {}

void FlowTable::remove_rule(std::list<FlowRule>::iterator it, double now,
                            EvictionCause cause) {
  eviction_log_.push_back({now, it->key, cause, it->origin});
  index_.erase(masked_key(it->key, enabled_));
  rules_.erase(it);
}

InstallOutcome FlowTable::install_rule(const MatchKey& key, double now,
                                       double idle_timeout, Origin origin) {
  if (idle_timeout <= 0) throw std::invalid_argument("idle_timeout must be positive");
  MatchKey mk = masked_key(key, enabled_);
  if (index_.count(mk)) {
    throw std::invalid_argument("duplicate rule install: " + to_string(key));
  }
  InstallOutcome out;
  if (capacity_ == 0) {
    out.status = InstallStatus::Rejected;
    return out;
  }
  if (rules_.size() >= capacity_) {
    auto oldest = rules_.begin();
    out.status = InstallStatus::Replaced;
    out.evicted = oldest->key;
    ++total_overflows_;
    remove_rule(oldest, now, EvictionCause::FifoReplacement);
  }
  FlowRule r;
  r.key = key;
  r.install_time = now;
  r.last_match_time = now;
  r.packet_count = 0;
  r.byte_count = 0;
  r.idle_timeout = idle_timeout;
  r.origin = origin;
  rules_.push_back(r);
  index_.emplace(mk, std::prev(rules_.end()));
  ++total_installed_;
  return out;
}

bool FlowTable::match_packet(const MatchKey& key, uint64_t bytes, double now) {
  auto it = index_.find(masked_key(key, enabled_));
  if (it == index_.end()) return false;
  FlowRule& r = *it->second;
  r.packet_count += 1;
  r.byte_count += bytes;
  r.last_match_time = now;
  return true;
}

std::vector<MatchKey> FlowTable::tick(double now) {
  std::vector<MatchKey> evicted;
  for (auto it = rules_.begin(); it != rules_.end();) {
    if (now - it->last_match_time >= it->idle_timeout) {
      evicted.push_back(it->key);
      auto dead = it++;
      remove_rule(dead, now, EvictionCause::IdleTimeout);
    } else {
      ++it;
    }
  }
  return evicted;
}

bool FlowTable::evict(const MatchKey& key, double now, EvictionCause cause) {
  auto it = index_.find(masked_key(key, enabled_));
  if (it == index_.end()) return false;
  remove_rule(it->second, now, cause);
  return true;
}

std::vector<SnapshotRow> FlowTable::snapshot(double now) const {
  std::vector<SnapshotRow> rows;
  rows.reserve(rules_.size());
  for (const FlowRule& r : rules_) {
    rows.push_back({r.key, r.install_time, r.last_match_time, now - r.install_time,
                    r.packet_count, r.byte_count, r.origin});
  }
  return rows;
}

bool FlowTable::contains(const MatchKey& key) const {
  return index_.count(masked_key(key, enabled_)) > 0;
}

const FlowRule* FlowTable::find(const MatchKey& key) const {
  auto it = index_.find(masked_key(key, enabled_));
  return it == index_.end() ? nullptr : &*it->second;
}

std::string snapshot_to_csv(const std::vector<SnapshotRow>& rows, double time_s) {
  std::ostringstream os;
  os << "time_s,flow_id,src_ip,dst_ip,src_port,dst_port,proto,in_port,duration_s,"
        "pkt_count,byte_count,origin\n";
  size_t id = 0;
  char buf[64];
  for (const SnapshotRow& r : rows) {
    snprintf(buf, sizeof buf, "%.3f", time_s);
    os << buf << ",r" << id++ << ',' << ip_to_string(r.key.src_ip) << ','
       << ip_to_string(r.key.dst_ip) << ',' << r.key.src_port << ',' << r.key.dst_port
       << ',' << to_string(r.key.protocol) << ',' << r.key.in_port << ',';
    snprintf(buf, sizeof buf, "%.3f", r.duration_s);
    os << buf << ',' << r.packet_count << ',' << r.byte_count << ','
       << to_string(r.origin) << '\n';
  }
  return os.str();
}

}  // namespace loftsim
