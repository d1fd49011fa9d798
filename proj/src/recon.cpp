#include "loftsim/recon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace loftsim {

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// Lentz-style continued fraction for the incomplete beta function.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1;
  const double qam = a - 1;
  double c = 1;
  double d = 1 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0 || b <= 0)
    throw std::domain_error("regularized_incomplete_beta: a, b must be > 0");
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  const double log_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                        a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(log_bt);
  if (x < (a + 1) / (a + b + 2)) return bt * beta_continued_fraction(a, b, x) / a;
  return 1 - bt * beta_continued_fraction(b, a, 1 - x) / b;
}

double f_distribution_cdf(double f, double d1, double d2) {
  if (d1 <= 0 || d2 <= 0)
    throw std::domain_error("f_distribution_cdf: degrees of freedom");
  if (f <= 0) return 0;
  const double x = d1 * f / (d1 * f + d2);
  return regularized_incomplete_beta(d1 / 2, d2 / 2, x);
}

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
  const size_t k = groups.size();
  if (k < 2) throw std::domain_error("anova_oneway: need at least two groups");
  size_t n_total = 0;
  double grand_sum = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw std::domain_error("anova_oneway: empty group");
    n_total += g.size();
    grand_sum = std::accumulate(g.begin(), g.end(), grand_sum);
  }
  if (n_total <= k)
    throw std::domain_error("anova_oneway: more samples than groups required");

  const double grand_mean = grand_sum / double(n_total);
  double ssb = 0, ssw = 0;
  for (const auto& g : groups) {
    const double m = mean_of(g);
    ssb += double(g.size()) * (m - grand_mean) * (m - grand_mean);
    for (double v : g) ssw += (v - m) * (v - m);
  }

  AnovaResult r;
  const double d1 = double(k - 1);
  const double d2 = double(n_total - k);
  if (ssb <= 0) {
    r.f = 0;
    r.p = 1;
    return r;
  }
  if (ssw <= 0) {
    r.f = std::numeric_limits<double>::infinity();
    r.p = 0;
    r.degenerate = true;
    return r;
  }
  r.f = (ssb / d1) / (ssw / d2);
  r.p = 1 - f_distribution_cdf(r.f, d1, d2);
  return r;
}

namespace {

// Fields a prober can vary freely. Physical ingress is excluded: it is fixed
// by where the prober sits.
MatchKey mutate_field(const Simulator& sim, const MatchKey& base, MatchField f,
                      int dst_host) {
  MatchKey k = base;
  switch (f) {
    case MatchField::SrcIp:
      k.src_ip = base.src_ip + 0x10000;
      break;
    case MatchField::DstIp: {
      const auto& hosts = sim.spec().hosts;
      int alt = -1;
      const int dst_edge = hosts[size_t(dst_host)].attach_switch;
      for (size_t h = 0; h < hosts.size(); ++h) {
        if (int(h) == dst_host || hosts[h].ip == base.dst_ip) continue;
        if (hosts[h].attach_switch == dst_edge) {
          alt = int(h);
          break;
        }
        if (alt < 0) alt = int(h);
      }
      if (alt < 0)
        throw std::runtime_error("infer_match_fields: no alternate target");
      k.dst_ip = hosts[size_t(alt)].ip;
      break;
    }
    case MatchField::SrcPort:
      k.src_port = uint16_t(base.src_port + 1000);
      break;
    case MatchField::DstPort:
      k.dst_port = uint16_t(base.dst_port + 1000);
      break;
    case MatchField::Proto:
      k.protocol = base.protocol == Protocol::Udp ? Protocol::Tcp : Protocol::Udp;
      break;
    case MatchField::InPort:
      throw std::invalid_argument(
          "infer_match_fields: ingress port is not probe-mutable");
  }
  return k;
}

double aligned_start(const Simulator& sim, double not_before = 0) {
  return std::floor(std::max(sim.now(), not_before)) + 1.0;
}

}  // namespace

ProbeResult infer_match_fields(Simulator& sim, int src_host, int dst_host,
                               const std::vector<MatchField>& candidates,
                               int repetitions) {
  if (candidates.empty())
    throw std::invalid_argument("infer_match_fields: no candidate fields");
  if (repetitions < 1)
    throw std::invalid_argument("infer_match_fields: repetitions");
  for (MatchField f : candidates)
    if (f == MatchField::InPort)
      throw std::invalid_argument(
          "infer_match_fields: ingress port is not probe-mutable");

  // Repetitions are spaced apart by more than any plausible idle timeout so
  // rules left by earlier probes have expired even when the switch ignores
  // every field this repetition varies.
  constexpr double kRepSpacingS = 60;

  std::vector<double> t0, t1;
  std::map<MatchField, std::vector<double>> t2;
  uint16_t next_port = 50000;

  for (int rep = 0; rep < repetitions; ++rep) {
    // vary every mutable field per repetition so earlier rules cannot answer
    // this repetition's baseline under reduced match configurations
    MatchKey base;
    base.src_ip = sim.spec().hosts[size_t(src_host)].ip + 0x100u * unsigned(rep);
    base.dst_ip = sim.spec().hosts[size_t(dst_host)].ip;
    base.src_port = next_port++;
    base.dst_port = uint16_t(9000 + rep);
    base.protocol = Protocol::Tcp;

    double t = aligned_start(sim, rep == 0 ? 0 : sim.now() + kRepSpacingS);
    PacketEvent ev;
    ev.src_host = src_host;
    ev.key = base;
    ev.time = t;
    t0.push_back(sim.send_packet(ev).rtt_ms);

    ev.time = t += 1;
    t1.push_back(sim.send_packet(ev).rtt_ms);

    for (MatchField f : candidates) {
      PacketEvent probe;
      probe.src_host = src_host;
      probe.key = mutate_field(sim, base, f, dst_host);
      probe.time = t += 1;
      t2[f].push_back(sim.send_packet(probe).rtt_ms);
    }
  }

  const double m0 = mean_of(t0);
  const double m1 = mean_of(t1);
  double var = 0;
  for (double v : t0) var += (v - m0) * (v - m0);
  for (double v : t1) var += (v - m1) * (v - m1);
  const double pooled_sd = std::sqrt(var / double(t0.size() + t1.size()));
  const double margin = 3.0 * pooled_sd / std::sqrt(double(repetitions));
  if (m0 <= m1 + margin)
    throw std::runtime_error("infer_match_fields: miss/hit indistinguishable");

  ProbeResult result;
  result.t0_ms = m0;
  result.t1_ms = m1;
  result.repetitions = repetitions;
  for (const auto& [field, samples] : t2) {
    const double m2 = mean_of(samples);
    result.t2_ms[field] = m2;
    if (std::fabs(m2 - m0) < std::fabs(m2 - m1)) result.inferred.set(field);
  }
  return result;
}

TimeoutEstimate estimate_idle_timeout(Simulator& sim, int src_host,
                                      int dst_host, double alpha, int max_iter,
                                      int max_int, int repetitions) {
  if (alpha <= 0 || alpha >= 1)
    throw std::invalid_argument("estimate_idle_timeout: alpha");
  if (max_iter < 3 || max_int < 1 || repetitions < 1)
    throw std::invalid_argument("estimate_idle_timeout: bounds");

  TimeoutEstimate est;
  est.alpha = alpha;
  est.repetitions = repetitions;

  // Baselines anchor the hit/miss classification; sweep probes are then
  // pooled by their class for the significance test.
  std::vector<double> miss_base, hit_base, miss_pool, hit_pool;
  std::optional<double> best;
  uint16_t next_port = 51000;

  for (int rep = 0; rep < repetitions; ++rep) {
    MatchKey key;
    key.src_ip = sim.spec().hosts[size_t(src_host)].ip + 0x100u * unsigned(rep);
    key.dst_ip = sim.spec().hosts[size_t(dst_host)].ip;
    key.src_port = next_port++;
    key.dst_port = 9998;
    key.protocol = Protocol::Tcp;

    PacketEvent ev;
    ev.src_host = src_host;
    ev.key = key;

    // space repetitions past the search bound so the previous repetition's
    // reinstalled rule has expired for any timeout the sweep could report
    double t = aligned_start(
        sim, rep == 0 ? 0 : sim.now() + double(max_int) + 1);
    ev.time = t;
    miss_base.push_back(sim.send_packet(ev).rtt_ms);

    ev.time = t += 1;
    const double t1 = sim.send_packet(ev).rtt_ms;
    hit_base.push_back(t1);
    est.rtt_series.emplace_back(1.0, t1);

    const double m0 = mean_of(miss_base);
    const double m1 = mean_of(hit_base);
    int probes = 2;
    for (int interval = 2; interval <= max_int && probes < max_iter;
         ++interval, ++probes) {
      ev.time = t += interval;
      const double rtt = sim.send_packet(ev).rtt_ms;
      est.rtt_series.emplace_back(double(interval), rtt);
      if (std::fabs(rtt - m0) < std::fabs(rtt - m1)) {
        miss_pool.push_back(rtt);
        if (!best || double(interval) < *best) best = double(interval);
        break;
      }
      hit_pool.push_back(rtt);
    }
  }

  miss_pool.insert(miss_pool.end(), miss_base.begin(), miss_base.end());
  hit_pool.insert(hit_pool.end(), hit_base.begin(), hit_base.end());
  if (!miss_pool.empty() && !hit_pool.empty() &&
      miss_pool.size() + hit_pool.size() > 2) {
    AnovaResult a = anova_oneway({miss_pool, hit_pool});
    est.p_value = a.p;
    est.degenerate = a.degenerate;
    if (a.p <= alpha && best) est.t_idle_s = best;
  }
  return est;
}

std::string recon_report_json(const ProbeResult& probe,
                              const TimeoutEstimate& estimate) {
  nlohmann::json j;
  auto fields = nlohmann::json::array();
  for (MatchField f : probe.inferred.to_list()) fields.push_back(to_string(f));
  j["inferred_fields"] = fields;
  j["t0_ms"] = probe.t0_ms;
  j["t1_ms"] = probe.t1_ms;
  if (estimate.t_idle_s)
    j["t_idle_estimate_s"] = *estimate.t_idle_s;
  else
    j["t_idle_estimate_s"] = nullptr;
  j["p_value"] = estimate.p_value;
  j["n"] = estimate.repetitions;
  return j.dump(2);
}

}  // namespace loftsim
