#pragma once

#include <cstdint>
#include <string>

#include "loftsim/netsim.hpp"

namespace loftsim {

// Parameters of one flow-table exhaustion campaign against a single switch.
// af is the refresh cycle length in seconds, drawn per cycle from
// {af_min, af_min + af_step, ..., af_max}; anp is the number of new rules
// introduced per cycle; rpr caps the instantaneous send rate.
struct AttackPlan {
  double af_min = 4;
  double af_max = 8;
  double af_step = 1;
  int anp = 20;
  double rpr = 0;      // packets/second ceiling
  double mri = 0;      // rules/second
  double c = 0;        // target table capacity
  double c_used = 0;   // entries the background is expected to hold
  double d_total = 0;  // seconds until the table fills at rate mri
};

std::string plan_to_json(const AttackPlan& plan);

// Statistical shape of the legitimate traffic mix.
struct BackgroundProfile {
  double flow_arrival_rate = 25;     // flows/second, aggregate
  double mean_flow_lifetime_s = 10;  // exponential mean
  double long_lived_fraction = 0.001;
  double long_lived_lifetime_s = 200;
  uint64_t packet_size_min = 64;
  uint64_t packet_size_max = 1500;
  double per_flow_packet_rate = 1.0;  // packets/second within a flow
};

// Rules a background load is expected to pin in a table: rules arrive at
// `flows_per_s_per_port` on each of `ports` ports and live `t_idle` seconds
// past their last packet.
double compute_used_capacity(double ports, double flows_per_s_per_port,
                             double t_idle);

// Mean rate of table growth for an attacker adding `anp` rules per `af`-second
// cycle.
double compute_mri(double anp, double af);

// Seconds to grow from c_used to c at mri rules/second.
double compute_attack_duration(double c, double c_used, double mri);

// Derives the full campaign: c_used from the background profile, mri from the
// af-range midpoint, d_total from the remaining capacity, rpr from the refresh
// load at the shortest cycle. Throws std::invalid_argument when the cycle
// range cannot beat the idle timeout (rules would expire between refreshes)
// and std::domain_error when the background alone already fills the table.
AttackPlan plan_attack(double capacity, const BackgroundProfile& background,
                       double af_min, double af_max, int anp,
                       double idle_timeout_s, double af_step = 1.0);

// Poisson flow arrivals over [t_start, t_end); every flow gets a unique
// 5-tuple between two distinct random hosts, an exponential lifetime (a
// long_lived_fraction of flows is pinned at long_lived_lifetime_s instead),
// and packets at Gaussian inter-arrival gaps. Events are time sorted.
TrafficSource generate_background(const TopologySpec& topo,
                                  const BackgroundProfile& profile,
                                  uint64_t seed, double t_start, double t_end);

// Low-rate table-exhaustion stream: per cycle, one refresh packet per live
// attack rule (paced 1/rpr from the cycle start, stable key order), then anp
// new unique keys spread over the cycle remainder. Keys are owned round-robin
// by the attacker hosts; a spoofed_fraction of keys carries a source address
// from an unallocated pool instead of the owner's. Victims rotate over
// legitimate hosts on other edge switches. Only the newest
// round(c - c_used) keys are refreshed; older ones are abandoned.
TrafficSource generate_attack(const TopologySpec& topo, const AttackPlan& plan,
                              uint64_t seed, double t_start, double t_end,
                              double spoofed_fraction = 0.5);

}  // namespace loftsim
