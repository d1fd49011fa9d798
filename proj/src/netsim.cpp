#include "loftsim/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <sstream>
#include <stdexcept>

namespace loftsim {

const char* to_string(Disposition d) {
  switch (d) {
    case Disposition::Hit: return "hit";
    case Disposition::Miss: return "miss";
    case Disposition::Dropped: return "dropped";
  }
  return "?";
}

TopologySpec default_topology(size_t capacity, double idle_timeout_s) {
  TopologySpec t;
  for (const char* name : {"s1", "s2", "s3", "s4"}) {
    TopologySpec::SwitchSpec sw;
    sw.name = name;
    sw.capacity = capacity;
    sw.idle_timeout_s = idle_timeout_s;
    t.switches.push_back(sw);
  }
  // star around the core s1
  t.switch_links = {{0, 1, 1.0}, {0, 2, 1.0}, {0, 3, 1.0}};

  struct H {
    const char* name;
    int sw;
    HostRole role;
  };
  const H hosts[] = {
      {"h1", 1, HostRole::Attacker},   {"h2", 1, HostRole::Legitimate},
      {"h3", 1, HostRole::Attacker},   {"h4", 2, HostRole::Legitimate},
      {"h5", 2, HostRole::Legitimate}, {"h6", 2, HostRole::Attacker},
      {"h7", 3, HostRole::Legitimate}, {"h8", 3, HostRole::Legitimate},
  };
  unsigned i = 1;
  for (const H& h : hosts) {
    TopologySpec::HostSpec hs;
    hs.name = h.name;
    hs.attach_switch = h.sw;
    hs.role = h.role;
    hs.link_latency_ms = 1.0;
    hs.ip = make_ip(10, 0, i, 1);
    t.hosts.push_back(hs);
    ++i;
  }
  return t;
}

namespace {

// BFS shortest path over the switch graph; neighbors visited in ascending
// index so equal-length ties resolve toward lower indices.
std::vector<std::vector<int>> shortest_paths_from(
    int src, const std::vector<std::vector<int>>& adj) {
  size_t n = adj.size();
  std::vector<int> parent(n, -1), dist(n, -1);
  std::deque<int> q{src};
  dist[size_t(src)] = 0;
  while (!q.empty()) {
    int u = q.front();
    q.pop_front();
    for (int v : adj[size_t(u)]) {
      if (dist[size_t(v)] < 0) {
        dist[size_t(v)] = dist[size_t(u)] + 1;
        parent[size_t(v)] = u;
        q.push_back(v);
      }
    }
  }
  std::vector<std::vector<int>> paths(n);
  for (size_t d = 0; d < n; ++d) {
    if (dist[d] < 0) continue;
    std::vector<int> p;
    for (int v = int(d); v != -1; v = parent[size_t(v)]) p.push_back(v);
    std::reverse(p.begin(), p.end());
    paths[d] = std::move(p);
  }
  return paths;
}

}  // namespace

Simulator::Simulator(TopologySpec spec, uint64_t seed)
    : spec_(std::move(spec)), rng_(seed) {
  if (spec_.switches.empty()) throw std::invalid_argument("topology has no switches");
  if (spec_.controller_penalty_ms < 0 || spec_.rtt_jitter_frac < 0)
    throw std::invalid_argument("negative penalty or jitter");

  size_t n = spec_.switches.size();
  std::vector<std::vector<int>> adj(n);
  for (const auto& l : spec_.switch_links) {
    if (l.a < 0 || l.b < 0 || size_t(l.a) >= n || size_t(l.b) >= n || l.a == l.b)
      throw std::invalid_argument("switch link endpoint out of range");
    if (l.latency_ms <= 0) throw std::invalid_argument("link latency must be positive");
    adj[size_t(l.a)].push_back(l.b);
    adj[size_t(l.b)].push_back(l.a);
  }
  for (auto& v : adj) std::sort(v.begin(), v.end());

  for (const auto& sw : spec_.switches) {
    if (sw.idle_timeout_s <= 0)
      throw std::invalid_argument("switch idle timeout must be positive");
    tables_.push_back(std::make_unique<FlowTable>(sw.capacity, sw.match_fields));
  }
  eviction_cursor_.assign(n, 0);

  switch_paths_.resize(n);
  for (size_t s = 0; s < n; ++s) switch_paths_[s] = shortest_paths_from(int(s), adj);
  for (size_t s = 0; s < n; ++s)
    for (size_t d = 0; d < n; ++d)
      if (switch_paths_[s][d].empty())
        throw std::invalid_argument("switch graph is not connected");

  std::map<std::string, int> names;
  std::map<uint32_t, int> ips;
  for (size_t h = 0; h < spec_.hosts.size(); ++h) {
    const auto& hs = spec_.hosts[h];
    if (hs.attach_switch < 0 || size_t(hs.attach_switch) >= n)
      throw std::invalid_argument("host attached to missing switch: " + hs.name);
    if (hs.link_latency_ms <= 0)
      throw std::invalid_argument("host link latency must be positive");
    if (!names.emplace(hs.name, int(h)).second)
      throw std::invalid_argument("duplicate host name: " + hs.name);
    if (!ips.emplace(hs.ip, int(h)).second)
      throw std::invalid_argument("duplicate host ip: " + ip_to_string(hs.ip));
  }
  host_paths_.assign(spec_.hosts.size() * spec_.hosts.size(), {});
}

int Simulator::host_index(const std::string& name) const {
  for (size_t h = 0; h < spec_.hosts.size(); ++h)
    if (spec_.hosts[h].name == name) return int(h);
  throw std::invalid_argument("unknown host: " + name);
}

int Simulator::host_by_ip(uint32_t ip) const {
  for (size_t h = 0; h < spec_.hosts.size(); ++h)
    if (spec_.hosts[h].ip == ip) return int(h);
  return -1;
}

uint16_t Simulator::host_ingress_port(int host) const {
  if (host < 0 || size_t(host) >= spec_.hosts.size())
    throw std::invalid_argument("bad host index");
  return uint16_t(host + 1);
}

const std::vector<int>& Simulator::path_switches(int src_host, int dst_host) const {
  size_t idx = size_t(src_host) * spec_.hosts.size() + size_t(dst_host);
  std::vector<int>& cached = host_paths_.at(idx);
  if (cached.empty()) {
    int a = spec_.hosts.at(size_t(src_host)).attach_switch;
    int b = spec_.hosts.at(size_t(dst_host)).attach_switch;
    cached = switch_paths_[size_t(a)][size_t(b)];
  }
  return cached;
}

double Simulator::path_one_way_ms(int src_host, int dst_host) const {
  const std::vector<int>& path = path_switches(src_host, dst_host);
  double lat = spec_.hosts.at(size_t(src_host)).link_latency_ms +
               spec_.hosts.at(size_t(dst_host)).link_latency_ms;
  for (size_t i = 0; i + 1 < path.size(); ++i) {
    bool found = false;
    for (const auto& l : spec_.switch_links) {
      if ((l.a == path[i] && l.b == path[i + 1]) ||
          (l.b == path[i] && l.a == path[i + 1])) {
        lat += l.latency_ms;
        found = true;
        break;
      }
    }
    if (!found) throw std::logic_error("path uses a missing link");
  }
  return lat;
}

void Simulator::block_source(uint32_t src_ip) {
  if (!is_blocked(src_ip)) blocked_list_.push_back(src_ip);
}

bool Simulator::is_blocked(uint32_t src_ip) const {
  return std::find(blocked_list_.begin(), blocked_list_.end(), src_ip) !=
         blocked_list_.end();
}

void Simulator::flush_evictions() {
  if (!on_eviction) {
    for (size_t s = 0; s < tables_.size(); ++s)
      eviction_cursor_[s] = tables_[s]->eviction_log().size();
    return;
  }
  for (size_t s = 0; s < tables_.size(); ++s) {
    const auto& log = tables_[s]->eviction_log();
    while (eviction_cursor_[s] < log.size()) {
      on_eviction(int(s), log[eviction_cursor_[s]]);
      ++eviction_cursor_[s];
    }
  }
}

double Simulator::jitter(double base_ms) {
  double sigma = spec_.rtt_jitter_frac * base_ms;
  if (sigma <= 0) return 0;
  std::normal_distribution<double> d(0.0, sigma);
  double v = d(rng_);
  return std::clamp(v, -3 * sigma, 3 * sigma);
}

void Simulator::advance_to(double t) {
  while (double(next_tick_) <= t) {
    double s = double(next_tick_);
    for (auto& tab : tables_) tab->tick(s);
    flush_evictions();
    if (on_second) on_second(s);
    ++next_tick_;
  }
  if (t > clock_) clock_ = t;
}

RttSample Simulator::send_packet(const PacketEvent& event) {
  if (event.time < clock_ - 1e-9)
    throw std::logic_error("packet sent in the past");
  advance_to(event.time);

  PacketEvent ev = event;
  ev.key.in_port = host_ingress_port(ev.src_host);

  int dst = host_by_ip(ev.key.dst_ip);
  if (dst < 0)
    throw std::runtime_error("no route to " + ip_to_string(ev.key.dst_ip));

  const std::vector<int>& path = path_switches(ev.src_host, dst);
  bool miss = !tables_[size_t(path[0])]->contains(ev.key);
  for (int sw : path) {
    FlowTable& tab = *tables_[size_t(sw)];
    if (!tab.contains(ev.key)) {
      ++install_attempts_;
      tab.install_rule(ev.key, ev.time, spec_.switches[size_t(sw)].idle_timeout_s,
                       ev.origin);
    }
    tab.match_packet(ev.key, ev.bytes, ev.time);
  }
  flush_evictions();

  double base = 2.0 * path_one_way_ms(ev.src_host, dst);
  double rtt = base + (miss ? spec_.controller_penalty_ms : 0.0) + jitter(base);
  if (on_packet) on_packet(ev, miss, path);
  return {rtt, ev.time, miss};
}

RunResult Simulator::run_until(double t_end, const std::vector<TrafficSource>& sources,
                               const RunOptions& opts) {
  RunResult res;
  uint64_t installs_before = install_attempts_;

  auto user_hook = on_second;
  on_second = [&](double s) {
    if (opts.collect_snapshots) {
      res.snapshots.push_back(
          {s, tables_.at(size_t(opts.monitored_switch))->snapshot(s)});
    }
    if (user_hook) user_hook(s);
  };

  std::vector<size_t> cursor(sources.size(), 0);
  for (;;) {
    int best = -1;
    for (size_t s = 0; s < sources.size(); ++s) {
      if (cursor[s] >= sources[s].events.size()) continue;
      if (best < 0 ||
          sources[s].events[cursor[s]].time <
              sources[size_t(best)].events[cursor[size_t(best)]].time)
        best = int(s);
    }
    if (best < 0) break;
    const PacketEvent& ev = sources[size_t(best)].events[cursor[size_t(best)]++];
    if (ev.time >= t_end) continue;  // outside the run window

    if (is_blocked(ev.key.src_ip)) {
      ++res.packets_dropped;
      advance_to(ev.time);
      if (opts.collect_trace) {
        TraceRow row;
        row.time = ev.time;
        row.src_host = ev.src_host;
        row.key = ev.key;
        row.key.in_port = host_ingress_port(ev.src_host);
        row.bytes = ev.bytes;
        row.disposition = Disposition::Dropped;
        res.trace.push_back(row);
      }
      continue;
    }

    RttSample s = send_packet(ev);
    ++res.packets_sent;
    if (s.truth_miss) ++res.misses;
    if (opts.collect_trace) {
      TraceRow row;
      row.time = ev.time;
      row.src_host = ev.src_host;
      row.key = ev.key;
      row.key.in_port = host_ingress_port(ev.src_host);
      row.bytes = ev.bytes;
      row.disposition = s.truth_miss ? Disposition::Miss : Disposition::Hit;
      row.rtt_ms = s.rtt_ms;
      row.path_switches = int(path_switches(ev.src_host, host_by_ip(ev.key.dst_ip)).size());
      res.trace.push_back(row);
    }
  }

  advance_to(t_end);
  on_second = user_hook;
  res.install_attempts = install_attempts_ - installs_before;
  return res;
}

std::string trace_to_csv(const std::vector<TraceRow>& trace, const TopologySpec& spec) {
  std::ostringstream os;
  os << "time_s,host,src_ip,dst_ip,sport,dport,proto,bytes,hit_or_miss,rtt_ms\n";
  char buf[64];
  for (const TraceRow& r : trace) {
    snprintf(buf, sizeof buf, "%.6f", r.time);
    os << buf << ',' << spec.hosts.at(size_t(r.src_host)).name << ','
       << ip_to_string(r.key.src_ip) << ',' << ip_to_string(r.key.dst_ip) << ','
       << r.key.src_port << ',' << r.key.dst_port << ',' << to_string(r.key.protocol)
       << ',' << r.bytes << ',' << to_string(r.disposition) << ',';
    snprintf(buf, sizeof buf, "%.3f", r.rtt_ms);
    os << buf << '\n';
  }
  return os.str();
}

std::vector<PacketEvent> trace_from_csv(const std::string& csv,
                                        const TopologySpec& spec) {
  std::map<std::string, int> host_idx;
  for (size_t h = 0; h < spec.hosts.size(); ++h) host_idx[spec.hosts[h].name] = int(h);

  std::vector<PacketEvent> events;
  std::istringstream is(csv);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("time_s,", 0) == 0) continue;  // header
    }
    std::istringstream ls(line);
    std::string fld;
    std::vector<std::string> f;
    while (std::getline(ls, fld, ',')) f.push_back(fld);
    if (f.size() < 10) throw std::invalid_argument("short trace row: " + line);
    PacketEvent ev;
    ev.time = std::stod(f[0]);
    auto it = host_idx.find(f[1]);
    if (it == host_idx.end()) throw std::invalid_argument("unknown host in trace: " + f[1]);
    ev.src_host = it->second;
    ev.key.src_ip = ip_from_string(f[2]);
    ev.key.dst_ip = ip_from_string(f[3]);
    ev.key.src_port = uint16_t(std::stoul(f[4]));
    ev.key.dst_port = uint16_t(std::stoul(f[5]));
    ev.key.protocol = protocol_from_string(f[6]);
    ev.bytes = std::stoull(f[7]);
    ev.payload_bytes = ev.bytes > 40 ? ev.bytes - 40 : 0;
    events.push_back(ev);
  }
  return events;
}

}  // namespace loftsim
