#include "loftsim/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace loftsim {

namespace {

double clamp_entropy(double bits) { return std::min(8.0, std::max(0.0, bits)); }

}  // namespace

std::string plan_to_json(const AttackPlan& plan) {
  nlohmann::json j;
  j["af_min"] = plan.af_min;
  j["af_max"] = plan.af_max;
  j["anp"] = plan.anp;
  j["rpr"] = plan.rpr;
  j["mri"] = plan.mri;
  j["c"] = plan.c;
  j["c_used"] = plan.c_used;
  j["d_total"] = plan.d_total;
  return j.dump(2);
}

double compute_used_capacity(double ports, double flows_per_s_per_port,
                             double t_idle) {
  if (ports < 0 || flows_per_s_per_port < 0 || t_idle < 0)
    throw std::invalid_argument("compute_used_capacity: negative input");
  return ports * flows_per_s_per_port * t_idle;
}

double compute_mri(double anp, double af) {
  if (af <= 0) throw std::domain_error("compute_mri: af must be positive");
  return anp / af;
}

double compute_attack_duration(double c, double c_used, double mri) {
  if (mri <= 0)
    throw std::domain_error("compute_attack_duration: mri must be positive");
  if (c < c_used)
    throw std::domain_error("compute_attack_duration: c_used exceeds capacity");
  return (c - c_used) / mri;
}

AttackPlan plan_attack(double capacity, const BackgroundProfile& background,
                       double af_min, double af_max, int anp,
                       double idle_timeout_s, double af_step) {
  if (capacity <= 0) throw std::invalid_argument("plan_attack: capacity");
  if (anp <= 0) throw std::invalid_argument("plan_attack: anp");
  if (af_step <= 0) throw std::invalid_argument("plan_attack: af_step");
  if (af_min <= 0 || af_min > af_max)
    throw std::invalid_argument("plan_attack: bad af range");
  if (af_max >= idle_timeout_s)
    throw std::invalid_argument(
        "plan_attack: af_max must stay below the idle timeout");

  AttackPlan plan;
  plan.af_min = af_min;
  plan.af_max = af_max;
  plan.af_step = af_step;
  plan.anp = anp;
  plan.c = capacity;
  plan.c_used = compute_used_capacity(1.0, background.flow_arrival_rate,
                                      idle_timeout_s);
  if (plan.c_used >= capacity)
    throw std::domain_error("plan_attack: background alone fills the table");
  plan.mri = compute_mri(double(anp), (af_min + af_max) / 2.0);
  plan.d_total = compute_attack_duration(plan.c, plan.c_used, plan.mri);
  plan.rpr = std::ceil((plan.c - plan.c_used) / af_min);
  return plan;
}

TrafficSource generate_background(const TopologySpec& topo,
                                  const BackgroundProfile& profile,
                                  uint64_t seed, double t_start, double t_end) {
  if (profile.flow_arrival_rate < 0 || profile.mean_flow_lifetime_s <= 0 ||
      profile.per_flow_packet_rate <= 0 ||
      profile.long_lived_fraction < 0 || profile.long_lived_fraction > 1 ||
      profile.packet_size_min < 40 ||
      profile.packet_size_min > profile.packet_size_max)
    throw std::invalid_argument("generate_background: bad profile");
  if (topo.hosts.size() < 2)
    throw std::invalid_argument("generate_background: need at least two hosts");
  // benign load is sourced by benign hosts; compromised hosts only answer
  std::vector<size_t> sources;
  for (size_t i = 0; i < topo.hosts.size(); ++i)
    if (topo.hosts[i].role == HostRole::Legitimate) sources.push_back(i);
  if (sources.empty())
    throw std::invalid_argument("generate_background: no legitimate hosts");

  TrafficSource src;
  src.name = "background";
  if (profile.flow_arrival_rate == 0 || t_end <= t_start) return src;

  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> arrival(profile.flow_arrival_rate);
  std::exponential_distribution<double> lifetime(
      1.0 / profile.mean_flow_lifetime_s);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<size_t> source_pick(0, sources.size() - 1);
  std::uniform_int_distribution<size_t> host_pick(0, topo.hosts.size() - 1);
  std::uniform_int_distribution<uint64_t> size_pick(profile.packet_size_min,
                                                    profile.packet_size_max);
  const double gap_mean = 1.0 / profile.per_flow_packet_rate;
  std::normal_distribution<double> gap(gap_mean, 0.25 * gap_mean);
  std::normal_distribution<double> entropy(6.5, 0.8);

  std::vector<uint16_t> next_port(topo.hosts.size(), 1024);

  double t = t_start + arrival(rng);
  while (t < t_end) {
    size_t a = sources[source_pick(rng)];
    size_t b = host_pick(rng);
    if (b == a) b = (b + 1) % topo.hosts.size();

    double life = unit(rng) < profile.long_lived_fraction
                      ? profile.long_lived_lifetime_s
                      : lifetime(rng);

    MatchKey key;
    key.src_ip = topo.hosts[a].ip;
    key.dst_ip = topo.hosts[b].ip;
    key.src_port = next_port[a]++;
    key.dst_port = 80;
    key.protocol = Protocol::Tcp;

    double pt = t;
    const double flow_end = t + life;
    while (pt <= flow_end && pt < t_end) {
      PacketEvent ev;
      ev.time = pt;
      ev.src_host = int(a);
      ev.key = key;
      ev.bytes = size_pick(rng);
      ev.payload_bytes = ev.bytes - 40;
      ev.payload_entropy_bits = clamp_entropy(entropy(rng));
      ev.origin = Origin::Legitimate;
      src.events.push_back(ev);
      pt += std::max(0.001, gap(rng));
    }

    t += arrival(rng);
  }

  std::stable_sort(src.events.begin(), src.events.end(),
                   [](const PacketEvent& x, const PacketEvent& y) {
                     return x.time < y.time;
                   });
  return src;
}

TrafficSource generate_attack(const TopologySpec& topo, const AttackPlan& plan,
                              uint64_t seed, double t_start, double t_end,
                              double spoofed_fraction) {
  if (plan.rpr <= 0 || plan.anp <= 0 || plan.af_step <= 0)
    throw std::invalid_argument("generate_attack: incomplete plan");
  if (spoofed_fraction < 0 || spoofed_fraction > 1)
    throw std::invalid_argument("generate_attack: spoofed_fraction");

  std::vector<int> attackers;
  for (size_t i = 0; i < topo.hosts.size(); ++i)
    if (topo.hosts[i].role == HostRole::Attacker) attackers.push_back(int(i));
  if (attackers.empty())
    throw std::invalid_argument("generate_attack: no attacker hosts");

  std::vector<int> victims;
  for (size_t i = 0; i < topo.hosts.size(); ++i)
    if (topo.hosts[i].role == HostRole::Legitimate) victims.push_back(int(i));
  if (victims.empty())
    throw std::invalid_argument("generate_attack: no legitimate hosts");

  TrafficSource src;
  src.name = "attack";
  if (t_end <= t_start) return src;

  std::mt19937_64 rng(seed);
  const int af_lo = int(std::lround(plan.af_min / plan.af_step));
  const int af_hi = int(std::lround(plan.af_max / plan.af_step));
  std::uniform_int_distribution<int> af_pick(af_lo, af_hi);
  std::uniform_int_distribution<uint64_t> size_pick(64, 1500);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> entropy(1.0, 0.3);

  std::vector<uint32_t> spoof_pool;
  for (unsigned k = 0; k < 32; ++k) spoof_pool.push_back(make_ip(172, 16, k, 1));
  for (unsigned k = 0; k < 32; ++k)
    spoof_pool.push_back(make_ip(192, 168, k, 1));

  const size_t budget =
      size_t(std::max<long long>(0, std::llround(plan.c - plan.c_used)));
  const double pace = 1.0 / plan.rpr;

  struct AttackKey {
    PacketEvent tmpl;
  };
  std::deque<AttackKey> live;
  size_t key_counter = 0, spoof_cursor = 0, victim_cursor = 0;
  uint16_t sport = 40000, dport = 20000;

  double cycle_start = t_start;
  while (cycle_start < t_end) {
    const double af = af_pick(rng) * plan.af_step;

    while (live.size() > budget) live.pop_front();

    double t = cycle_start;
    for (const auto& k : live) {
      if (t >= t_end) break;
      PacketEvent ev = k.tmpl;
      ev.time = t;
      src.events.push_back(ev);
      t += pace;
    }

    const double remainder = cycle_start + af - t;
    const double spread = std::max(remainder / (plan.anp + 1), pace);
    for (int i = 0; i < plan.anp; ++i) {
      t += spread;
      if (t >= t_end) break;

      const int owner = attackers[key_counter % attackers.size()];
      const int owner_edge = topo.hosts[size_t(owner)].attach_switch;
      int victim = victims[victim_cursor % victims.size()];
      for (size_t tries = 0;
           topo.hosts[size_t(victim)].attach_switch == owner_edge &&
           tries < victims.size();
           ++tries) {
        ++victim_cursor;
        victim = victims[victim_cursor % victims.size()];
      }
      ++victim_cursor;

      PacketEvent ev;
      ev.time = t;
      ev.src_host = owner;
      ev.key.src_ip = unit(rng) < spoofed_fraction
                          ? spoof_pool[spoof_cursor++ % spoof_pool.size()]
                          : topo.hosts[size_t(owner)].ip;
      ev.key.dst_ip = topo.hosts[size_t(victim)].ip;
      ev.key.src_port = sport++;
      ev.key.dst_port = dport++;
      ev.key.protocol = Protocol::Tcp;
      ev.bytes = size_pick(rng);
      ev.payload_bytes = ev.bytes - 40;
      ev.payload_entropy_bits = clamp_entropy(entropy(rng));
      ev.origin = Origin::Attack;
      src.events.push_back(ev);
      live.push_back(AttackKey{ev});
      ++key_counter;
    }

    cycle_start = std::max(cycle_start + af, t + pace);
  }
  return src;
}

}  // namespace loftsim
