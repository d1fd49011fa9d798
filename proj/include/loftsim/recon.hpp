#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loftsim/netsim.hpp"

namespace loftsim {

struct AnovaResult {
  double f = 0;
  double p = 1;
  bool degenerate = false;  // zero within-group variance, nonzero between
};

// One-way analysis of variance over two or more sample groups. Throws
// std::domain_error for fewer than two groups, an empty group, or when the
// total sample count does not exceed the group count.
AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

// I_x(a, b), evaluated with a continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

// P(F <= f) for an F distribution with (d1, d2) degrees of freedom.
double f_distribution_cdf(double f, double d1, double d2);

// Outcome of probing which header fields a switch keys its rules on: the
// probe installs a baseline rule, then re-sends the baseline packet with one
// field changed at a time and compares the reply time against the miss (t0)
// and hit (t1) baselines.
struct ProbeResult {
  FieldSet inferred;
  double t0_ms = 0;  // mean reply time when no rule exists
  double t1_ms = 0;  // mean reply time against an installed rule
  std::map<MatchField, double> t2_ms;  // mean reply time per mutated field
  int repetitions = 0;
};

// Runs the field-inference probe from src_host towards dst_host, mutating
// each candidate field in turn, `repetitions` times with fresh baseline keys.
// A field is reported as matched when its mutated probes look miss-like
// (mean nearer t0 than t1). Throws std::invalid_argument for an empty or
// unmutable candidate list and std::runtime_error when miss and hit replies
// are statistically indistinguishable.
ProbeResult infer_match_fields(Simulator& sim, int src_host, int dst_host,
                               const std::vector<MatchField>& candidates,
                               int repetitions = 5);

struct TimeoutEstimate {
  std::optional<double> t_idle_s;
  std::vector<std::pair<double, double>> rtt_series;  // (interval s, rtt ms)
  double p_value = 1;
  double alpha = 0.05;
  int repetitions = 0;
  bool degenerate = false;
};

// Estimates a switch's idle timeout by re-sending one flow's packet at
// intervals growing one second at a time until the reply turns miss-like,
// repeated with fresh keys. The estimate is the smallest expiring interval
// over all repetitions and is reported only when a two-group analysis of
// variance separates hit-like from miss-like reply times at `alpha`.
TimeoutEstimate estimate_idle_timeout(Simulator& sim, int src_host,
                                      int dst_host, double alpha = 0.05,
                                      int max_iter = 50, int max_int = 60,
                                      int repetitions = 10);

// {inferred_fields, t0_ms, t1_ms, t_idle_estimate_s, p_value, n}
std::string recon_report_json(const ProbeResult& probe,
                              const TimeoutEstimate& estimate);

}  // namespace loftsim
