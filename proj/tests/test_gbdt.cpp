#include "loftsim/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

using namespace loftsim;

namespace {

// diagonally separated two-feature points with a 0.1 margin band removed
DataMatrix separable_toy(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DataMatrix m;
  m.columns.resize(2);
  while (m.labels.size() < n) {
    double x0 = u(rng), x1 = u(rng);
    double margin = x0 + x1 - 1.0;
    if (std::fabs(margin) < 0.1) continue;
    m.columns[0].push_back(x0);
    m.columns[1].push_back(x1);
    m.labels.push_back(margin > 0 ? 1 : 0);
  }
  return m;
}

BoostConfig small_config(uint64_t seed = 7) {
  BoostConfig c;
  c.tree_count = 60;
  c.max_depth = 3;
  c.learning_rate = 0.3;
  c.subsample = 1.0;
  c.seed = seed;
  return c;
}

std::vector<double> row_of(const DataMatrix& m, size_t i) {
  std::vector<double> x(m.features());
  for (size_t f = 0; f < m.features(); ++f) x[f] = m.columns[f][i];
  return x;
}

double train_accuracy(const TrainedModel& model, const DataMatrix& m) {
  size_t correct = 0;
  for (size_t i = 0; i < m.rows(); ++i)
    correct += predict_row(model, row_of(m, i)).attack == (m.labels[i] == 1);
  return double(correct) / double(m.rows());
}

}  // namespace

TEST_CASE("logistic primitives") {
  CHECK(logistic(0.0) == doctest::Approx(0.5));
  CHECK(logistic(50.0) == doctest::Approx(1.0));
  CHECK(logistic(-50.0) == doctest::Approx(0.0));
  CHECK(logistic_loss(0.0, 1) == doctest::Approx(std::log(2.0)));
  CHECK(logistic_loss(0.0, 0) == doctest::Approx(std::log(2.0)));
  CHECK(logistic_loss(10.0, 1) == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(logistic_loss_gradient(0.0, 1) == doctest::Approx(-0.5));
  CHECK(logistic_loss_gradient(0.0, 0) == doctest::Approx(0.5));
  CHECK(logistic_loss_hessian(0.0, 1) == doctest::Approx(0.25));
}

TEST_CASE("loss gradient matches central finite differences") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> s(-4.0, 4.0);
  const double eps = 1e-6;
  for (int i = 0; i < 100; ++i) {
    double score = s(rng);
    int label = int(rng() % 2);
    double analytic = logistic_loss_gradient(score, label);
    double numeric = (logistic_loss(score + eps, label) -
                      logistic_loss(score - eps, label)) /
                     (2 * eps);
    double rel = std::fabs(numeric - analytic) /
                 std::max(std::fabs(analytic), 1e-8);
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("separable toy set is fit to 100% training accuracy") {
  DataMatrix m = separable_toy(200, 3);
  TrainedModel model = train_classifier(m, small_config());
  CHECK(train_accuracy(model, m) == doctest::Approx(1.0));

  // memorization: every training point reproduces its own label
  for (size_t i = 0; i < m.rows(); ++i) {
    Prediction p = predict_row(model, row_of(m, i));
    CHECK(p.attack == (m.labels[i] == 1));
    CHECK(p.probability >= 0.0);
    CHECK(p.probability <= 1.0);
  }
}

TEST_CASE("single-class input is rejected") {
  DataMatrix m;
  m.columns = {{1.0, 2.0, 3.0}};
  m.labels = {1, 1, 1};
  CHECK_THROWS_AS(train_classifier(m, small_config()), std::domain_error);
  m.labels = {0, 0, 0};
  CHECK_THROWS_AS(train_classifier(m, small_config()), std::domain_error);
  m.labels = {0, 2, 1};
  CHECK_THROWS_AS(train_classifier(m, small_config()), std::domain_error);
}

TEST_CASE("training is deterministic for a fixed seed") {
  DataMatrix m = separable_toy(150, 9);
  BoostConfig c = small_config(42);
  c.subsample = 0.8;
  TrainedModel a = train_classifier(m, c);
  TrainedModel b = train_classifier(m, c);
  CHECK(model_to_json(a) == model_to_json(b));

  c.seed = 43;
  TrainedModel d = train_classifier(m, c);
  CHECK(model_to_json(a) != model_to_json(d));
}

TEST_CASE("zero-tree ensemble predicts exactly one half") {
  DataMatrix m = separable_toy(50, 1);
  BoostConfig c = small_config();
  c.tree_count = 0;
  TrainedModel model = train_classifier(m, c);
  CHECK(model.trees.empty());
  Prediction p = predict_row(model, {0.3, 0.9});
  CHECK(p.probability == 0.5);
  CHECK(p.attack);  // 0.5 threshold is inclusive
}

TEST_CASE("probabilities stay in range under fuzzed inputs") {
  DataMatrix m = separable_toy(120, 5);
  TrainedModel model = train_classifier(m, small_config());
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 500; ++i) {
    Prediction p = predict_row(model, {u(rng), u(rng)});
    CHECK(p.probability >= 0.0);
    CHECK(p.probability <= 1.0);
    CHECK(p.attack == (p.probability >= model.config.prob_threshold));
  }
  CHECK_THROWS_AS(
      predict_row(model, {std::nan(""), 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(predict_row(model, {0.5}), std::invalid_argument);
}

TEST_CASE("label decisions survive monotone probability rescaling") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto warp = [](double p) { return p * p * p; };  // strictly increasing
  for (int i = 0; i < 300; ++i) {
    double prob = u(rng), thr = u(rng);
    CHECK((prob >= thr) == (warp(prob) >= warp(thr)));
  }
}

TEST_CASE("model json round-trips and validates its version") {
  DataMatrix m = separable_toy(100, 21);
  TrainedModel model = train_classifier(m, small_config());
  std::string text = model_to_json(model);
  TrainedModel back = model_from_json(text);
  REQUIRE(back.trees.size() == model.trees.size());
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x{u(rng), u(rng)};
    CHECK(model.predict_proba(x) == back.predict_proba(x));
  }

  std::string bad_version = text;
  auto pos = bad_version.find("\"version\": 1");
  REQUIRE(pos != std::string::npos);
  bad_version.replace(pos, 12, "\"version\": 9");
  CHECK_THROWS_AS(model_from_json(bad_version), std::invalid_argument);
  CHECK_THROWS_AS(model_from_json("{\"format\":\"other\",\"version\":1}"),
                  std::invalid_argument);
}

TEST_CASE("feature index mapping routes predictor columns") {
  // label depends only on predictor 9 (paf_s); model trained on that column
  std::vector<FeatureVector> vectors;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int i = 0; i < 240; ++i) {
    FeatureVector fv;
    fv.paf_s = u(rng);
    if (std::fabs(fv.paf_s - 10.0) < 0.5) continue;
    fv.duration_s = u(rng);
    fv.byte_count = u(rng);
    fv.label = fv.paf_s > 10.0 ? 1 : 0;
    vectors.push_back(fv);
  }
  DataMatrix full = DataMatrix::from_vectors(vectors);
  DataMatrix sub = select_columns(full, {9});
  TrainedModel model = train_classifier(sub, small_config(), {9});
  for (const auto& fv : vectors)
    CHECK(predict_flow(model, fv).attack == (fv.label == 1));

  CHECK_THROWS_AS(select_columns(full, {99}), std::invalid_argument);
  FeatureVector nan_fv = vectors[0];
  nan_fv.paf_s = std::nan("");
  CHECK_THROWS_AS(predict_flow(model, nan_fv), std::invalid_argument);
}

TEST_CASE("importance concentrates on the informative feature") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DataMatrix m;
  m.columns.resize(3);
  for (int i = 0; i < 400; ++i) {
    double x0 = u(rng);
    if (std::fabs(x0 - 0.5) < 0.05) continue;
    m.columns[0].push_back(x0);
    m.columns[1].push_back(u(rng));
    m.columns[2].push_back(u(rng));
    m.labels.push_back(x0 > 0.5 ? 1 : 0);
  }
  TrainedModel model = train_classifier(m, small_config());
  CHECK(model.importance[0] >
        10.0 * std::max(model.importance[1], model.importance[2]));
}

TEST_CASE("stratified folds balance both classes") {
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) labels.push_back(0);
  for (int i = 0; i < 40; ++i) labels.push_back(1);
  auto fold = stratified_folds(labels, 5, 11);
  REQUIRE(fold.size() == labels.size());
  int count[5][2] = {};
  for (size_t i = 0; i < labels.size(); ++i) {
    REQUIRE(fold[i] >= 0);
    REQUIRE(fold[i] < 5);
    ++count[fold[i]][labels[i]];
  }
  for (int k = 0; k < 5; ++k) {
    CHECK(count[k][0] == 12);
    CHECK(count[k][1] == 8);
  }
  CHECK(stratified_folds(labels, 5, 11) == fold);
  CHECK(stratified_folds(labels, 5, 12) != fold);
  CHECK_THROWS_AS(stratified_folds({1, 0}, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(stratified_folds(labels, 1, 1), std::invalid_argument);
}

TEST_CASE("cross validation is near perfect on separable data") {
  // held-out points inside the margin staircase cost a point or two per fold
  DataMatrix m = separable_toy(300, 6);
  CHECK(cross_val_accuracy(m, small_config(), 5) >= 0.95);
}

TEST_CASE("rfecv eliminates injected noise features") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DataMatrix m;
  m.columns.resize(5);
  for (int i = 0; i < 400; ++i) {
    double x0 = u(rng);
    if (std::fabs(x0 - 0.5) < 0.05) continue;
    int label = x0 > 0.5 ? 1 : 0;
    m.columns[0].push_back(x0);
    m.columns[1].push_back(double(label) + 0.2 * u(rng));
    m.columns[2].push_back(u(rng));
    m.columns[3].push_back(u(rng));
    m.columns[4].push_back(u(rng));
    m.labels.push_back(label);
  }
  BoostConfig c = small_config();
  c.tree_count = 40;
  RfecvResult r = rfecv_select(m, c, 4);
  REQUIRE_FALSE(r.selected.empty());
  for (int f : r.selected) {
    CHECK(f <= 1);  // only the informative columns survive
    CHECK(r.ranking[f] == 1);
  }
  for (int f : {2, 3, 4}) {
    CHECK_FALSE(std::binary_search(r.selected.begin(), r.selected.end(), f));
    CHECK(r.ranking[f] > 1);
  }
  CHECK(r.full_importance.size() == 5);
  CHECK(r.curve.size() >= 4);
  CHECK(r.curve.front().first == 5);
}

TEST_CASE("rfecv trivial and error cases") {
  DataMatrix m = separable_toy(120, 2);
  DataMatrix single = select_columns(m, {0});
  RfecvResult r = rfecv_select(single, small_config(), 3);
  REQUIRE(r.selected.size() == 1);
  CHECK(r.selected[0] == 0);

  DataMatrix one_class = m;
  std::fill(one_class.labels.begin(), one_class.labels.end(), 1);
  CHECK_THROWS_AS(rfecv_select(one_class, small_config(), 3),
                  std::domain_error);

  // 120 rows but a fold count that leaves under 2 samples per class per fold
  CHECK_THROWS_AS(rfecv_select(m, small_config(), 1000),
                  std::invalid_argument);
  CHECK_THROWS_AS(rfecv_select(m, small_config(), 1), std::invalid_argument);
}

TEST_CASE("ordered mode trains clean and deterministic") {
  DataMatrix m = separable_toy(200, 14);
  BoostConfig c = small_config(19);
  c.ordered = true;
  TrainedModel a = train_classifier(m, c);
  TrainedModel b = train_classifier(m, c);
  CHECK(model_to_json(a) == model_to_json(b));
  CHECK(train_accuracy(a, m) >= 0.99);
  for (size_t i = 0; i < m.rows(); ++i) {
    double p = a.predict_proba(row_of(m, i));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("confusion counting and metric identities") {
  ConfusionCounts c = count_confusion({1, 1, 0, 0, 1}, {1, 0, 0, 1, 1});
  CHECK(c.tp == 2);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  CHECK(c.fp == 1);
  Metrics m = compute_metrics(c);
  CHECK(m.accuracy == doctest::Approx(0.6));
  CHECK(m.precision == doctest::Approx(2.0 / 3.0));
  CHECK(m.recall == doctest::Approx(2.0 / 3.0));
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
  CHECK(m.fpr == doctest::Approx(0.5));
  CHECK(m.fnr == doctest::Approx(1.0 / 3.0));

  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    ConfusionCounts r{rng() % 50, rng() % 50, rng() % 50, rng() % 50};
    if (r.tp + r.fp + r.fn + r.tn == 0) continue;
    Metrics mm = compute_metrics(r);
    double tp = double(r.tp), fp = double(r.fp), fn = double(r.fn),
           tn = double(r.tn);
    CHECK(mm.accuracy ==
          doctest::Approx((tp + tn) / (tp + tn + fp + fn)));
    if (fp + tn > 0) CHECK(mm.fpr == doctest::Approx(fp / (fp + tn)));
    if (fn + tp > 0) CHECK(mm.fnr == doctest::Approx(fn / (fn + tp)));
    if (mm.precision + mm.recall > 0)
      CHECK(mm.f1 == doctest::Approx(2 * mm.precision * mm.recall /
                                     (mm.precision + mm.recall)));
  }

  CHECK_THROWS_AS(count_confusion({1}, {1, 0}), std::invalid_argument);
}

TEST_CASE("unlabeled vectors cannot enter a training matrix") {
  FeatureVector fv;
  fv.label = -1;
  CHECK_THROWS_AS(DataMatrix::from_vectors({fv}), std::domain_error);
}
