#include "loftsim/flora.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <unordered_map>
#include <vector>

#include "doctest.h"

using namespace loftsim;

namespace {

SnapshotRow make_row(uint32_t src_ip, double duration, uint64_t packets,
                     uint64_t bytes, Origin origin = Origin::Legitimate,
                     uint16_t in_port = 1) {
  SnapshotRow r;
  r.key.src_ip = src_ip;
  r.key.dst_ip = make_ip(10, 0, 7, 1);
  r.key.src_port = uint16_t(1024 + src_ip % 1000);
  r.key.dst_port = 80;
  r.key.protocol = Protocol::Tcp;
  r.key.in_port = in_port;
  r.install_time = 0;
  r.last_match_time = duration;
  r.duration_s = duration;
  r.packet_count = packets;
  r.byte_count = bytes;
  r.origin = origin;
  return r;
}

PacketRecord pkt(uint32_t src, uint32_t dst, uint64_t size, uint64_t payload,
                 double entropy, double age) {
  return PacketRecord{src, dst, size, payload, entropy, age};
}

// Slow, obviously-correct entropy over label counts; used as the oracle.
double oracle_entropy(const std::vector<int>& labels) {
  std::unordered_map<int, int> counts;
  for (int l : labels) ++counts[l];
  double h = 0;
  for (const auto& [v, c] : counts) {
    double p = double(c) / double(labels.size());
    h -= p * std::log2(p);
  }
  return h;
}

double oracle_information_gain(const std::vector<int>& labels,
                               const std::vector<int>& attr) {
  double h = oracle_entropy(labels);
  std::set<int> values(attr.begin(), attr.end());
  for (int v : values) {
    std::vector<int> part;
    for (size_t i = 0; i < labels.size(); ++i)
      if (attr[i] == v) part.push_back(labels[i]);
    h -= (double(part.size()) / double(labels.size())) * oracle_entropy(part);
  }
  return h;
}

// Per-flow membership scoring done the slow way, straight from packet lists.
double oracle_crs(const std::vector<PacketRecord>& flow,
                  const std::vector<PacketRecord>& population) {
  if (population.size() < 2 || flow.empty() ||
      flow.size() >= population.size())
    return 0;
  std::vector<int> labels;
  for (const auto& p : population) {
    bool member = false;
    for (const auto& f : flow)
      if (f.src_ip == p.src_ip && f.dst_ip == p.dst_ip && f.size == p.size &&
          f.payload == p.payload && f.entropy_bits == p.entropy_bits &&
          f.age_s == p.age_s) {
        member = true;
        break;
      }
    labels.push_back(member ? 1 : 0);
  }
  // membership must key on identity, not field equality; callers in this
  // file keep flow packets distinguishable from the rest
  double h = oracle_entropy(labels);
  if (h <= 0) return 0;
  double total = 0;
  for (size_t a = 0; a < kCrsAttributes; ++a) {
    std::vector<int> attr;
    for (const auto& p : population)
      attr.push_back(int(crs_bin(CrsAttribute(a), p)));
    total += std::clamp(oracle_information_gain(labels, attr), 0.0, h);
  }
  return 100.0 * total / (double(kCrsAttributes) * h);
}

MatchKey key_for(uint32_t src_ip, uint16_t sport) {
  MatchKey k;
  k.src_ip = src_ip;
  k.dst_ip = make_ip(10, 0, 7, 1);
  k.src_port = sport;
  k.dst_port = 80;
  k.protocol = Protocol::Udp;
  k.in_port = 1;
  return k;
}

}  // namespace

TEST_CASE("analyzer stays inactive below the occupancy threshold") {
  std::vector<SnapshotRow> rows;
  for (int i = 0; i < 40; ++i)
    rows.push_back(make_row(make_ip(10, 0, 0, 1) + i, 150.0, 5, 320));
  auto r = analyze_table(rows, 100);
  CHECK_FALSE(r.active);
  CHECK(r.suspicious.empty());
}

TEST_CASE("analyzer flags long-resident rules once active") {
  std::vector<SnapshotRow> rows;
  rows.push_back(make_row(make_ip(10, 0, 0, 1), 150.0, 5, 320));
  rows.push_back(make_row(make_ip(10, 0, 0, 2), 50.0, 5, 320));
  rows.push_back(make_row(make_ip(10, 0, 0, 3), 120.0, 5, 320));
  for (int i = 0; i < 92; ++i)
    rows.push_back(make_row(make_ip(10, 0, 1, 1) + i, 10.0, 5, 320));
  auto r = analyze_table(rows, 100);
  CHECK(r.active);
  REQUIRE(r.suspicious.size() == 2);
  CHECK(r.suspicious[0] == 0);
  CHECK(r.suspicious[1] == 2);
}

TEST_CASE("analyzer active with nothing suspicious when durations are short") {
  std::vector<SnapshotRow> rows;
  for (int i = 0; i < 90; ++i)
    rows.push_back(make_row(make_ip(10, 0, 0, 1) + i, 99.0, 5, 320));
  auto r = analyze_table(rows, 100);
  CHECK(r.active);
  CHECK(r.suspicious.empty());
  CHECK_THROWS_AS(analyze_table(rows, 0), std::invalid_argument);
}

TEST_CASE("packet arrival frequency is the mean inter-arrival gap") {
  CHECK(compute_paf({0, 6, 12, 18}, 99.0) == doctest::Approx(6.0));
  CHECK(compute_paf({0, 17.5}, 99.0) == doctest::Approx(17.5));
  CHECK(compute_paf({4.0}, 37.0) == doctest::Approx(37.0));
  CHECK(compute_paf({}, 37.0) == doctest::Approx(37.0));

  std::vector<double> periodic;
  for (int i = 0; i < 50; ++i) periodic.push_back(3.25 * i);
  CHECK(compute_paf(periodic, 0.0) == doctest::Approx(3.25));

  CHECK(compute_paf(0.0, 18.0, 4, 99.0) == doctest::Approx(6.0));
  CHECK(compute_paf(5.0, 5.0, 1, 37.0) == doctest::Approx(37.0));
  CHECK(compute_paf(0.0, 0.0, 0, 12.0) == doctest::Approx(12.0));
}

TEST_CASE("paf overloads agree on shared inputs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> gap(0.01, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> times{0.0};
    int n = 2 + int(rng() % 20);
    for (int i = 1; i < n; ++i) times.push_back(times.back() + gap(rng));
    double a = compute_paf(times, 1234.0);
    double b = compute_paf(times.front(), times.back(), times.size(), 1234.0);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("shannon entropy hand values") {
  CHECK(shannon_entropy({0.5, 0.5}) == doctest::Approx(1.0));
  CHECK(shannon_entropy({1.0}) == doctest::Approx(0.0));
  CHECK(shannon_entropy({0.25, 0.25, 0.25, 0.25}) == doctest::Approx(2.0));
  CHECK(shannon_entropy({0.5, 0.5, 0.0}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(shannon_entropy({0.5, 0.4}), std::domain_error);
  CHECK_THROWS_AS(shannon_entropy({-0.5, 1.5}), std::domain_error);
}

TEST_CASE("information gain hand values") {
  CHECK(information_gain({1, 1, 0, 0}, {7, 7, 9, 9}) == doctest::Approx(1.0));
  CHECK(information_gain({1, 1, 0, 0}, {5, 5, 5, 5}) == doctest::Approx(0.0));
  CHECK(information_gain({1, 1, 0, 0}, {1, 2, 3, 4}) == doctest::Approx(1.0));
  CHECK(information_gain({1, 0, 1, 0}, {7, 7, 9, 9}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(information_gain({}, {}), std::domain_error);
  CHECK_THROWS_AS(information_gain({1, 0}, {1}), std::invalid_argument);
}

TEST_CASE("entropy and gain match a brute-force oracle on random data") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 1 + int(rng() % 64);
    int label_card = 1 + int(rng() % 4);
    int attr_card = 1 + int(rng() % 6);
    std::vector<int> labels, attr;
    for (int i = 0; i < n; ++i) {
      labels.push_back(int(rng() % label_card));
      attr.push_back(int(rng() % attr_card));
    }
    double ig = information_gain(labels, attr);
    double h = oracle_entropy(labels);
    CHECK(ig == doctest::Approx(oracle_information_gain(labels, attr))
                    .epsilon(1e-9));
    CHECK(ig >= -1e-12);
    CHECK(ig <= h + 1e-12);
    CHECK(h <= std::log2(double(label_card)) + 1e-12);

    std::unordered_map<int, int> counts;
    for (int l : labels) ++counts[l];
    std::vector<double> dist;
    for (const auto& [v, c] : counts) dist.push_back(double(c) / n);
    CHECK(shannon_entropy(dist) == doctest::Approx(h).epsilon(1e-9));
  }
}

TEST_CASE("crs is 100 when a flow is separable on every attribute") {
  std::vector<PacketRecord> a{pkt(1, 1, 100, 60, 2.0, 0.0)};
  std::vector<PacketRecord> b{pkt(2, 2, 200, 200, 7.0, 10.0)};
  std::vector<PacketRecord> all = a;
  all.insert(all.end(), b.begin(), b.end());
  CHECK(compute_crs(a, all) == doctest::Approx(100.0));
  CHECK(compute_crs(b, all) == doctest::Approx(100.0));
}

TEST_CASE("crs is 0 when the flow is indistinguishable from the rest") {
  std::vector<PacketRecord> a{pkt(1, 1, 100, 60, 2.0, 0.0)};
  std::vector<PacketRecord> all{pkt(1, 1, 100, 60, 2.0, 0.0),
                                pkt(1, 1, 100, 60, 2.0, 0.0)};
  CHECK(compute_crs(a, all) == doctest::Approx(0.0));
}

TEST_CASE("crs is 50 when half the attributes separate the flow") {
  // separable on src, dst and size; identical payload, entropy and age bins
  std::vector<PacketRecord> a{pkt(1, 1, 100, 60, 2.0, 0.0)};
  std::vector<PacketRecord> b{pkt(2, 2, 200, 60, 2.0, 0.0)};
  std::vector<PacketRecord> all = a;
  all.insert(all.end(), b.begin(), b.end());
  CHECK(compute_crs(a, all) == doctest::Approx(50.0));
}

TEST_CASE("crs degenerate inputs score 0") {
  std::vector<PacketRecord> a{pkt(1, 1, 100, 60, 2.0, 0.0)};
  CHECK(compute_crs(a, a) == doctest::Approx(0.0));
  CHECK(compute_crs({}, a) == doctest::Approx(0.0));
  CHECK(compute_crs({}, {}) == doctest::Approx(0.0));
}

TEST_CASE("crs binning boundaries") {
  CHECK(crs_bin(CrsAttribute::PacketSize, pkt(0, 0, 63, 0, 0, 0)) == 0);
  CHECK(crs_bin(CrsAttribute::PacketSize, pkt(0, 0, 64, 0, 0, 0)) == 1);
  CHECK(crs_bin(CrsAttribute::PayloadSize, pkt(0, 0, 0, 127, 0, 0)) == 1);
  CHECK(crs_bin(CrsAttribute::PayloadEntropy, pkt(0, 0, 0, 0, 1.99, 0)) == 7);
  CHECK(crs_bin(CrsAttribute::PayloadEntropy, pkt(0, 0, 0, 0, 2.0, 0)) == 8);
  CHECK(crs_bin(CrsAttribute::PayloadEntropy, pkt(0, 0, 0, 0, 8.0, 0)) == 32);
  CHECK(crs_bin(CrsAttribute::AgeAtArrival, pkt(0, 0, 0, 0, 0, 3.9)) == 0);
  CHECK(crs_bin(CrsAttribute::AgeAtArrival, pkt(0, 0, 0, 0, 0, 4.0)) == 1);
  CHECK(crs_bin(CrsAttribute::AgeAtArrival, pkt(0, 0, 0, 0, 0, 1e9)) == 63);
  CHECK(crs_bin(CrsAttribute::SrcIp, pkt(77, 0, 0, 0, 0, 0)) == 77);
  CHECK(crs_bin(CrsAttribute::DstIp, pkt(0, 88, 0, 0, 0, 0)) == 88);
}

TEST_CASE("histogram scoring matches the packet-list oracle") {
  std::mt19937_64 rng(2025);
  for (int trial = 0; trial < 100; ++trial) {
    int flows = 2 + int(rng() % 5);
    std::vector<std::vector<PacketRecord>> per_flow(flows);
    std::vector<PacketRecord> population;
    for (int f = 0; f < flows; ++f) {
      int n = 1 + int(rng() % 6);
      for (int i = 0; i < n; ++i) {
        // src ip doubles as a flow tag so the oracle's membership test
        // never collides across flows
        PacketRecord p = pkt(uint32_t(1000 + f), uint32_t(rng() % 3),
                             64 * (rng() % 4), 60 * (rng() % 3),
                             double(rng() % 9), double(rng() % 12));
        per_flow[f].push_back(p);
        population.push_back(p);
      }
    }
    for (int f = 0; f < flows; ++f) {
      double fast = compute_crs(per_flow[f], population);
      double slow = oracle_crs(per_flow[f], population);
      CHECK(fast == doctest::Approx(slow).epsilon(1e-9));
    }
  }
}

TEST_CASE("subtracting a flow histogram leaves the remainder's histogram") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PacketRecord> flow, rest;
    for (int i = 0; i < 8; ++i)
      flow.push_back(pkt(1, uint32_t(rng() % 2), 64 * (rng() % 3),
                         60 * (rng() % 2), double(rng() % 8),
                         double(rng() % 10)));
    for (int i = 0; i < 12; ++i)
      rest.push_back(pkt(2, uint32_t(rng() % 2), 64 * (rng() % 3),
                         60 * (rng() % 2), double(rng() % 8),
                         double(rng() % 10)));

    CrsHistogram hf, hr, hall;
    for (const auto& p : flow) {
      hf.add(p);
      hall.add(p);
    }
    for (const auto& p : rest) {
      hr.add(p);
      hall.add(p);
    }
    subtract_histogram(hall, hf);
    CHECK(hall.packets == hr.packets);
    for (size_t a = 0; a < kCrsAttributes; ++a) {
      CHECK(hall.bins[a].size() == hr.bins[a].size());
      for (const auto& [bin, count] : hr.bins[a]) {
        REQUIRE(hall.bins[a].count(bin) == 1);
        CHECK(hall.bins[a].at(bin) == count);
      }
    }
  }

  CrsHistogram big, small;
  small.add(pkt(1, 1, 1, 1, 1, 1));
  CHECK_THROWS_AS(subtract_histogram(big, small), std::invalid_argument);
}

TEST_CASE("prefix parsing and matching") {
  Prefix p = Prefix::parse("10.0.0.0/24");
  CHECK(p.base == make_ip(10, 0, 0, 0));
  CHECK(p.length == 24);
  CHECK(p.contains(make_ip(10, 0, 0, 5)));
  CHECK(p.contains(make_ip(10, 0, 0, 255)));
  CHECK_FALSE(p.contains(make_ip(10, 0, 1, 5)));
  CHECK_FALSE(p.contains(make_ip(192, 168, 1, 1)));

  Prefix host = Prefix::parse("10.0.3.1/32");
  CHECK(host.contains(make_ip(10, 0, 3, 1)));
  CHECK_FALSE(host.contains(make_ip(10, 0, 3, 2)));

  Prefix any = Prefix::parse("0.0.0.0/0");
  CHECK(any.contains(make_ip(8, 8, 8, 8)));

  CHECK_THROWS_AS(Prefix::parse("10.0.0.0"), std::invalid_argument);
  CHECK_THROWS_AS(Prefix::parse("10.0.0.0/33"), std::invalid_argument);
  CHECK_THROWS_AS(Prefix::parse("10.0.0.0/x"), std::invalid_argument);
}

TEST_CASE("spoof check consults the ingress port's allocation") {
  PrefixMap prefixes;
  prefixes[1] = {Prefix::parse("10.0.0.0/24")};
  prefixes[2] = {Prefix::parse("10.0.1.0/24"), Prefix::parse("10.0.2.0/24")};

  CHECK_FALSE(check_spoofed(make_ip(10, 0, 0, 5), 1, prefixes));
  CHECK(check_spoofed(make_ip(192, 168, 1, 1), 1, prefixes));
  CHECK(check_spoofed(make_ip(10, 0, 1, 5), 1, prefixes));
  CHECK_FALSE(check_spoofed(make_ip(10, 0, 2, 9), 2, prefixes));
  CHECK_THROWS_AS(check_spoofed(make_ip(10, 0, 0, 5), 9, prefixes),
                  std::invalid_argument);
}

TEST_CASE("feature extraction computes per-source statistics") {
  SnapshotFrame frame;
  frame.time = 100;
  // one source with two rules, one singleton source
  auto r1 = make_row(make_ip(10, 0, 0, 1), 10.0, 5, 500);
  auto r2 = make_row(make_ip(10, 0, 0, 1), 30.0, 15, 1500);
  r2.key.src_port = 2000;
  auto r3 = make_row(make_ip(10, 0, 5, 1), 8.0, 2, 128, Origin::Attack);
  frame.rows = {r1, r2, r3};

  auto fvs = extract_features(frame, {}, {});
  REQUIRE(fvs.size() == 3);

  CHECK(fvs[0].mean_dur_src == doctest::Approx(20.0));
  CHECK(fvs[0].mean_pkt_src == doctest::Approx(10.0));
  CHECK(fvs[0].mean_byte_src == doctest::Approx(1000.0));
  CHECK(fvs[0].cv_dur_src == doctest::Approx(0.5));
  CHECK(fvs[1].cv_dur_src == doctest::Approx(0.5));
  CHECK(fvs[0].cv_pkt_src == doctest::Approx(0.5));
  CHECK(fvs[0].cv_byte_src == doctest::Approx(0.5));
  CHECK(fvs[2].cv_dur_src == doctest::Approx(0.0));
  CHECK(fvs[2].mean_dur_src == doctest::Approx(8.0));

  CHECK(fvs[0].duration_s == doctest::Approx(10.0));
  CHECK(fvs[0].pkt_count == doctest::Approx(5.0));
  CHECK(fvs[0].byte_count == doctest::Approx(500.0));
  // 5 packets over a 10 s residence: mean gap 2.5
  CHECK(fvs[0].paf_s == doctest::Approx(2.5));
  // 2 packets, installed at 0, last matched at 8
  CHECK(fvs[2].paf_s == doctest::Approx(8.0));

  CHECK(fvs[0].crs_pct == doctest::Approx(0.0));
  CHECK_FALSE(fvs[0].psi);
  CHECK(fvs[0].label == 0);
  CHECK(fvs[2].label == 1);
  CHECK(fvs[0].flow_id == MatchKeyHash{}(r1.key));

  auto crs = std::vector<double>{10.0, 20.0, 95.0};
  auto with_crs = extract_features(frame, crs, {});
  CHECK(with_crs[2].crs_pct == doctest::Approx(95.0));
  CHECK_THROWS_AS(extract_features(frame, {1.0}, {}), std::invalid_argument);
}

TEST_CASE("feature extraction wires the spoof check through") {
  SnapshotFrame frame;
  auto genuine = make_row(make_ip(10, 0, 0, 1), 5.0, 3, 192);
  auto spoofed = make_row(make_ip(172, 16, 0, 1), 5.0, 3, 192, Origin::Attack);
  frame.rows = {genuine, spoofed};

  PrefixMap prefixes;
  prefixes[1] = {Prefix::parse("10.0.0.0/16")};

  auto fvs = extract_features(frame, {}, prefixes);
  CHECK_FALSE(fvs[0].psi);
  CHECK(fvs[1].psi);

  auto names = FeatureVector::predictor_names();
  auto values = fvs[1].predictors();
  REQUIRE(names.size() == FeatureVector::kPredictors);
  REQUIRE(values.size() == FeatureVector::kPredictors);
  CHECK(std::string(names[0]) == "duration_s");
  CHECK(std::string(names[9]) == "paf_s");
  CHECK(std::string(names[11]) == "psi");
  CHECK(values[11] == doctest::Approx(1.0));
  CHECK(values[0] == doctest::Approx(5.0));
}

TEST_CASE("admission gate truth table") {
  FeatureVector fv;
  fv.paf_s = 30.0;
  fv.crs_pct = 80.0;
  fv.psi = false;
  CHECK_FALSE(admission_gate(fv, 20.0));

  fv.paf_s = 19.9;
  CHECK(admission_gate(fv, 20.0));
  fv.paf_s = 30.0;

  fv.crs_pct = 49.9;
  CHECK(admission_gate(fv, 20.0));
  fv.crs_pct = 80.0;

  fv.psi = true;
  CHECK(admission_gate(fv, 20.0));

  fv.psi = false;
  fv.crs_pct = 50.0;
  CHECK_FALSE(admission_gate(fv, 20.0));
  CHECK(admission_gate(fv, 20.0, 60.0));
  fv.paf_s = 20.0;
  CHECK_FALSE(admission_gate(fv, 20.0));
}

TEST_CASE("mitigation evicts attack verdicts and never touches normal ones") {
  FlowTable table(100, FieldSet::all());
  std::vector<Verdict> verdicts;
  for (int i = 0; i < 30; ++i) {
    MatchKey k = key_for(make_ip(10, 0, 0, 1) + i, uint16_t(1024 + i));
    bool attack = i < 20;
    table.install_rule(k, 0.0, 20.0,
                       attack ? Origin::Attack : Origin::Legitimate);
    Verdict v;
    v.key = k;
    v.src_ip = k.src_ip;
    v.attack = attack;
    v.byte_count = 100.0;
    verdicts.push_back(v);
  }

  Blacklist bl;
  MitigationConfig cfg;
  cfg.elephant_byte_threshold = 1e9;
  auto report = mitigate(table, bl, verdicts, 50.0, cfg);

  CHECK(report.occupancy_before == 30);
  CHECK(report.occupancy_after == 10);
  CHECK(report.evicted.size() == 20);
  CHECK(report.protected_elephants.empty());
  for (const auto& rec : table.eviction_log()) {
    CHECK(rec.cause == EvictionCause::Mitigation);
    CHECK(rec.origin == Origin::Attack);
  }
  for (int i = 20; i < 30; ++i)
    CHECK(table.contains(key_for(make_ip(10, 0, 0, 1) + i, uint16_t(1024 + i))));
  CHECK(bl.entries.size() == 20);
  for (const auto& [ip, e] : bl.entries) CHECK(e.eviction_count == 1);
}

TEST_CASE("mitigation spares high-volume rules from verified sources") {
  FlowTable table(100, FieldSet::all());
  std::vector<Verdict> verdicts;
  // 40 mice plus one elephant: p95 of the window sits at mouse volume
  for (int i = 0; i < 41; ++i) {
    MatchKey k = key_for(make_ip(10, 0, 0, 1) + i, uint16_t(1024 + i));
    table.install_rule(k, 0.0, 20.0, Origin::Attack);
    Verdict v;
    v.key = k;
    v.src_ip = k.src_ip;
    v.attack = true;
    v.byte_count = i == 0 ? 50000.0 : 100.0;
    v.psi = false;
    verdicts.push_back(v);
  }
  // a spoofed source never earns elephant protection
  MatchKey spoofed = key_for(make_ip(172, 16, 0, 1), 9999);
  table.install_rule(spoofed, 0.0, 20.0, Origin::Attack);
  Verdict v;
  v.key = spoofed;
  v.src_ip = spoofed.src_ip;
  v.attack = true;
  v.byte_count = 90000.0;
  v.psi = true;
  verdicts.push_back(v);

  Blacklist bl;
  auto report = mitigate(table, bl, verdicts, 10.0, MitigationConfig{});

  REQUIRE(report.protected_elephants.size() == 1);
  CHECK(report.protected_elephants[0] == verdicts[0].key);
  CHECK(table.contains(verdicts[0].key));
  CHECK_FALSE(table.contains(spoofed));
  CHECK(report.evicted.size() == 41);
  CHECK(bl.entries.count(verdicts[0].src_ip) == 0);
}

TEST_CASE("mitigation honors an explicit elephant threshold") {
  FlowTable table(10, FieldSet::all());
  MatchKey k = key_for(make_ip(10, 0, 0, 9), 4000);
  table.install_rule(k, 0.0, 20.0, Origin::Attack);
  Verdict v;
  v.key = k;
  v.src_ip = k.src_ip;
  v.attack = true;
  v.byte_count = 5000.0;

  Blacklist bl;
  MitigationConfig cfg;
  cfg.elephant_byte_threshold = 4999.0;
  auto report = mitigate(table, bl, {v}, 1.0, cfg);
  CHECK(report.evicted.empty());
  CHECK(report.protected_elephants.size() == 1);
  CHECK(table.contains(k));

  cfg.elephant_byte_threshold = 5000.0;
  report = mitigate(table, bl, {v}, 2.0, cfg);
  CHECK(report.evicted.size() == 1);
  CHECK_FALSE(table.contains(k));
}

TEST_CASE("repeat offenders get blocked exactly once") {
  Blacklist bl;
  MitigationConfig cfg;
  cfg.elephant_byte_threshold = 1e9;
  uint32_t src = make_ip(10, 0, 0, 42);

  int block_events = 0;
  for (int round = 0; round < 5; ++round) {
    FlowTable table(10, FieldSet::all());
    MatchKey k = key_for(src, uint16_t(3000 + round));
    table.install_rule(k, round, 20.0, Origin::Attack);
    Verdict v;
    v.key = k;
    v.src_ip = src;
    v.attack = true;
    v.byte_count = 100.0;
    auto report = mitigate(table, bl, {v}, double(round), cfg);
    block_events += int(report.newly_blocked.size());
    CHECK(bl.entries.at(src).eviction_count == round + 1);
    if (round + 1 >= cfg.block_after_evictions)
      CHECK(bl.entries.at(src).blocked);
    else
      CHECK_FALSE(bl.entries.at(src).blocked);
  }
  CHECK(block_events == 1);
  CHECK(bl.entries.at(src).first_seen == doctest::Approx(0.0));
  CHECK(bl.entries.at(src).last_seen == doctest::Approx(4.0));
}

TEST_CASE("mitigation ignores verdicts for rules no longer present") {
  FlowTable table(10, FieldSet::all());
  Blacklist bl;
  Verdict v;
  v.key = key_for(make_ip(10, 0, 0, 50), 6000);
  v.src_ip = v.key.src_ip;
  v.attack = true;
  v.byte_count = 10.0;
  MitigationConfig cfg;
  cfg.elephant_byte_threshold = 1e9;
  auto report = mitigate(table, bl, {v}, 3.0, cfg);
  CHECK(report.evicted.empty());
  CHECK(bl.entries.empty());
  CHECK(report.occupancy_before == 0);
  CHECK(report.occupancy_after == 0);
  CHECK_THROWS_AS(
      mitigate(table, bl, {}, 3.0, MitigationConfig{0.0, 0}),
      std::invalid_argument);
}

TEST_CASE("auto elephant threshold is the 95th percentile of the window") {
  FlowTable table(200, FieldSet::all());
  Blacklist bl;
  std::vector<Verdict> verdicts;
  // byte counts 1..100: p95 = 95, so only rules above 95 bytes survive
  for (int i = 1; i <= 100; ++i) {
    MatchKey k = key_for(make_ip(10, 1, 0, 1) + i, uint16_t(1024 + i));
    table.install_rule(k, 0.0, 20.0, Origin::Attack);
    Verdict v;
    v.key = k;
    v.src_ip = k.src_ip;
    v.attack = true;
    v.byte_count = double(i);
    verdicts.push_back(v);
  }
  auto report = mitigate(table, bl, verdicts, 4.0, MitigationConfig{});
  CHECK(report.protected_elephants.size() == 5);
  CHECK(report.evicted.size() == 95);
}

TEST_CASE("oracle mitigation sweep keeps normal traffic untouched") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    FlowTable table(300, FieldSet::all());
    Blacklist bl;
    std::vector<Verdict> verdicts;
    size_t attack_n = 0;
    for (int i = 0; i < 120; ++i) {
      bool attack = rng() % 2 == 0;
      MatchKey k = key_for(make_ip(10, 2, 0, 1) + i, uint16_t(1024 + i));
      table.install_rule(k, 0.0, 20.0,
                         attack ? Origin::Attack : Origin::Legitimate);
      Verdict v;
      v.key = k;
      v.src_ip = k.src_ip;
      v.attack = attack;
      v.byte_count = double(rng() % 1000);
      v.psi = rng() % 4 == 0;
      verdicts.push_back(v);
      attack_n += attack;
    }
    MitigationConfig cfg;
    cfg.elephant_byte_threshold = 1e9;
    auto report = mitigate(table, bl, verdicts, 9.0, cfg);
    CHECK(report.evicted.size() == attack_n);
    CHECK(report.occupancy_before - report.occupancy_after == attack_n);
    for (const auto& rec : table.eviction_log())
      CHECK(rec.origin == Origin::Attack);
  }
}
