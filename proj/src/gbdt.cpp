#include "loftsim/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace loftsim {

namespace {

constexpr int kModelFormatVersion = 1;

struct BinnedData {
  // per feature: ascending candidate thresholds (split sends x > t right)
  std::vector<std::vector<double>> thresholds;
  // per feature: bin index per row; bin(x) = first threshold >= x
  std::vector<std::vector<uint16_t>> bins;
};

BinnedData bin_features(const DataMatrix& data, int max_bins) {
  const size_t n = data.rows();
  BinnedData out;
  out.thresholds.resize(data.features());
  out.bins.resize(data.features());
  for (size_t f = 0; f < data.features(); ++f) {
    std::vector<double> sorted = data.columns[f];
    std::sort(sorted.begin(), sorted.end());
    std::vector<double>& thr = out.thresholds[f];
    for (int k = 1; k <= max_bins; ++k) {
      const size_t idx = size_t(double(k) * double(n) / double(max_bins + 1));
      const double v = sorted[std::min(idx, n - 1)];
      if (thr.empty() || v > thr.back()) thr.push_back(v);
    }
    // a threshold equal to the column maximum splits nothing off
    while (!thr.empty() && thr.back() >= sorted.back()) thr.pop_back();
    std::vector<uint16_t>& b = out.bins[f];
    b.resize(n);
    for (size_t i = 0; i < n; ++i)
      b[i] = uint16_t(std::lower_bound(thr.begin(), thr.end(),
                                       data.columns[f][i]) -
                      thr.begin());
  }
  return out;
}

void validate_config(const BoostConfig& c) {
  if (c.tree_count < 0) throw std::invalid_argument("tree_count");
  if (c.max_depth < 1) throw std::invalid_argument("max_depth");
  if (!(c.learning_rate > 0)) throw std::invalid_argument("learning_rate");
  if (c.l2_leaf_reg < 0) throw std::invalid_argument("l2_leaf_reg");
  if (!(c.subsample > 0) || c.subsample > 1)
    throw std::invalid_argument("subsample");
  if (c.max_bins < 1 || c.max_bins > 65534)
    throw std::invalid_argument("max_bins");
  if (!(c.prob_threshold > 0) || !(c.prob_threshold < 1))
    throw std::invalid_argument("prob_threshold");
}

}  // namespace

DataMatrix DataMatrix::from_vectors(const std::vector<FeatureVector>& vectors) {
  DataMatrix m;
  m.columns.assign(FeatureVector::kPredictors, {});
  for (auto& col : m.columns) col.reserve(vectors.size());
  m.labels.reserve(vectors.size());
  for (const auto& fv : vectors) {
    if (fv.label != 0 && fv.label != 1)
      throw std::domain_error("DataMatrix: unlabeled vector");
    const auto p = fv.predictors();
    for (size_t f = 0; f < FeatureVector::kPredictors; ++f)
      m.columns[f].push_back(p[f]);
    m.labels.push_back(fv.label);
  }
  return m;
}

DataMatrix select_columns(const DataMatrix& data,
                          const std::vector<int>& indices) {
  DataMatrix out;
  out.labels = data.labels;
  out.columns.reserve(indices.size());
  for (int idx : indices) {
    if (idx < 0 || size_t(idx) >= data.features())
      throw std::invalid_argument("select_columns: index out of range");
    out.columns.push_back(data.columns[idx]);
  }
  return out;
}

double ObliviousTree::value(const std::vector<double>& x) const {
  size_t leaf = 0;
  for (size_t d = 0; d < levels.size(); ++d)
    if (x[levels[d].feature] > levels[d].threshold) leaf |= size_t(1) << d;
  return leaves[leaf];
}

double TrainedModel::raw_score(const std::vector<double>& x) const {
  double s = 0;
  for (const auto& t : trees) s += t.value(x);
  return s;
}

double TrainedModel::predict_proba(const std::vector<double>& x) const {
  return logistic(config.learning_rate * raw_score(x));
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logistic_loss(double score, int label) {
  // numerically stable form: log(1 + e^-|s|) + max(s, 0) - s y
  const double y = double(label);
  return std::log1p(std::exp(-std::fabs(score))) + std::max(score, 0.0) -
         score * y;
}

double logistic_loss_gradient(double score, int label) {
  return logistic(score) - double(label);
}

double logistic_loss_hessian(double score, int label) {
  (void)label;
  const double p = logistic(score);
  return p * (1.0 - p);
}

TrainedModel train_classifier(const DataMatrix& data, const BoostConfig& config,
                              std::vector<int> feature_indices) {
  validate_config(config);
  const size_t n = data.rows();
  const size_t nf = data.features();
  if (n < 2) throw std::domain_error("train_classifier: too few rows");
  if (nf == 0) throw std::domain_error("train_classifier: no features");
  for (const auto& col : data.columns)
    if (col.size() != n)
      throw std::invalid_argument("train_classifier: ragged columns");
  bool saw0 = false, saw1 = false;
  for (int y : data.labels) {
    if (y == 0) saw0 = true;
    else if (y == 1) saw1 = true;
    else throw std::domain_error("train_classifier: labels must be 0 or 1");
  }
  if (!saw0 || !saw1)
    throw std::domain_error("train_classifier: single-class input");

  if (feature_indices.empty()) {
    feature_indices.resize(nf);
    std::iota(feature_indices.begin(), feature_indices.end(), 0);
  } else if (feature_indices.size() != nf) {
    throw std::invalid_argument("train_classifier: feature index count");
  }

  TrainedModel model;
  model.config = config;
  model.feature_indices = std::move(feature_indices);
  model.importance.assign(nf, 0.0);

  const BinnedData binned = bin_features(data, config.max_bins);
  const double lambda = config.l2_leaf_reg;
  const double lr = config.learning_rate;

  std::mt19937_64 rng(config.seed);
  std::vector<size_t> permutation(n);
  std::iota(permutation.begin(), permutation.end(), 0);
  if (config.ordered) std::shuffle(permutation.begin(), permutation.end(), rng);

  // training-time raw model score per row (includes the learning rate); in
  // ordered mode these are the leakage-free per-example estimates
  std::vector<double> score(n, 0.0);
  std::vector<double> grad(n), hess(n);
  std::vector<size_t> sample(n);
  std::vector<uint32_t> leaf_of(n);

  for (int t = 0; t < config.tree_count; ++t) {
    for (size_t i = 0; i < n; ++i) {
      const double p = logistic(score[i]);
      grad[i] = p - double(data.labels[i]);
      hess[i] = p * (1.0 - p);
    }

    std::iota(sample.begin(), sample.end(), 0);
    size_t m = n;
    if (!config.ordered && config.subsample < 1.0) {
      std::shuffle(sample.begin(), sample.end(), rng);
      m = std::max<size_t>(1, size_t(config.subsample * double(n)));
      std::sort(sample.begin(), sample.begin() + m);
    }

    ObliviousTree tree;
    std::fill(leaf_of.begin(), leaf_of.end(), 0);

    for (int depth = 0; depth < config.max_depth; ++depth) {
      const size_t leaves = size_t(1) << depth;
      int best_feature = -1;
      double best_threshold = 0;
      double best_gain = -std::numeric_limits<double>::infinity();
      int best_bin = -1;

      std::vector<double> gh(leaves * 2, 0.0);
      for (size_t s = 0; s < m; ++s) {
        const size_t i = sample[s];
        gh[leaf_of[i] * 2] += grad[i];
        gh[leaf_of[i] * 2 + 1] += hess[i];
      }

      std::vector<double> hist;
      for (size_t f = 0; f < nf; ++f) {
        const auto& thr = binned.thresholds[f];
        if (thr.empty()) continue;
        const size_t nbins = thr.size() + 1;
        hist.assign(leaves * nbins * 2, 0.0);
        const auto& fb = binned.bins[f];
        for (size_t s = 0; s < m; ++s) {
          const size_t i = sample[s];
          double* cell = &hist[(leaf_of[i] * nbins + fb[i]) * 2];
          cell[0] += grad[i];
          cell[1] += hess[i];
        }
        // prefix sums per leaf, then score each cut position
        for (size_t leaf = 0; leaf < leaves; ++leaf) {
          double* base = &hist[leaf * nbins * 2];
          for (size_t b = 1; b < nbins; ++b) {
            base[b * 2] += base[(b - 1) * 2];
            base[b * 2 + 1] += base[(b - 1) * 2 + 1];
          }
        }
        // candidates are visited in ascending (feature, threshold) order, so
        // keeping only strict improvements resolves ties toward the lowest
        for (size_t j = 0; j < thr.size(); ++j) {
          double gain = 0;
          for (size_t leaf = 0; leaf < leaves; ++leaf) {
            const double* base = &hist[leaf * nbins * 2];
            const double gl = base[j * 2];
            const double hl = base[j * 2 + 1];
            const double g = gh[leaf * 2];
            const double h = gh[leaf * 2 + 1];
            const double gr = g - gl;
            const double hr = h - hl;
            gain += gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
                    g * g / (h + lambda);
          }
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = int(f);
            best_threshold = thr[j];
            best_bin = int(j);
          }
        }
      }

      if (best_feature < 0) break;
      tree.levels.push_back({best_feature, best_threshold});
      model.importance[best_feature] += std::max(0.0, best_gain);
      const auto& fb = binned.bins[best_feature];
      for (size_t i = 0; i < n; ++i)
        if (fb[i] > best_bin) leaf_of[i] |= uint32_t(1) << depth;
    }

    const size_t leaves = size_t(1) << tree.levels.size();
    std::vector<double> lg(leaves, 0.0), lh(leaves, 0.0);
    for (size_t s = 0; s < m; ++s) {
      const size_t i = sample[s];
      lg[leaf_of[i]] += grad[i];
      lh[leaf_of[i]] += hess[i];
    }
    tree.leaves.resize(leaves);
    for (size_t leaf = 0; leaf < leaves; ++leaf)
      tree.leaves[leaf] = -lg[leaf] / (lh[leaf] + lambda);

    if (config.ordered) {
      // leaf estimates for each example use only examples that precede it
      // in the permutation, so no example's own target leaks into its score
      std::vector<double> pg(leaves, 0.0), ph(leaves, 0.0);
      for (size_t k = 0; k < n; ++k) {
        const size_t i = permutation[k];
        const uint32_t leaf = leaf_of[i];
        score[i] += lr * (-pg[leaf] / (ph[leaf] + lambda));
        pg[leaf] += grad[i];
        ph[leaf] += hess[i];
      }
    } else {
      for (size_t i = 0; i < n; ++i) score[i] += lr * tree.leaves[leaf_of[i]];
    }

    model.trees.push_back(std::move(tree));
  }
  return model;
}

Prediction predict_row(const TrainedModel& model,
                       const std::vector<double>& x) {
  if (x.size() != model.feature_indices.size())
    throw std::invalid_argument("predict_row: feature count mismatch");
  for (double v : x)
    if (std::isnan(v)) throw std::invalid_argument("predict_row: NaN feature");
  Prediction p;
  p.probability = model.predict_proba(x);
  p.attack = p.probability >= model.config.prob_threshold;
  return p;
}

Prediction predict_flow(const TrainedModel& model, const FeatureVector& fv) {
  const auto all = fv.predictors();
  std::vector<double> x;
  x.reserve(model.feature_indices.size());
  for (int idx : model.feature_indices) {
    if (idx < 0 || size_t(idx) >= all.size())
      throw std::invalid_argument("predict_flow: bad feature index");
    x.push_back(all[idx]);
  }
  return predict_row(model, x);
}

std::string model_to_json(const TrainedModel& model) {
  nlohmann::json j;
  j["format"] = "loftsim-gbdt";
  j["version"] = kModelFormatVersion;
  j["learning_rate"] = model.config.learning_rate;
  j["l2_leaf_reg"] = model.config.l2_leaf_reg;
  j["prob_threshold"] = model.config.prob_threshold;
  j["max_depth"] = model.config.max_depth;
  j["seed"] = model.config.seed;
  j["feature_indices"] = model.feature_indices;
  j["importance"] = model.importance;
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : model.trees) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& l : t.levels)
      levels.push_back({{"feature", l.feature}, {"threshold", l.threshold}});
    trees.push_back({{"levels", levels}, {"leaves", t.leaves}});
  }
  j["trees"] = trees;
  return j.dump(2);
}

TrainedModel model_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "loftsim-gbdt")
    throw std::invalid_argument("model_from_json: unknown format");
  if (j.value("version", -1) != kModelFormatVersion)
    throw std::invalid_argument("model_from_json: unsupported version");
  TrainedModel m;
  m.config.learning_rate = j.at("learning_rate").get<double>();
  m.config.l2_leaf_reg = j.at("l2_leaf_reg").get<double>();
  m.config.prob_threshold = j.at("prob_threshold").get<double>();
  m.config.max_depth = j.at("max_depth").get<int>();
  m.config.seed = j.at("seed").get<uint64_t>();
  m.feature_indices = j.at("feature_indices").get<std::vector<int>>();
  m.importance = j.at("importance").get<std::vector<double>>();
  for (const auto& jt : j.at("trees")) {
    ObliviousTree t;
    for (const auto& jl : jt.at("levels"))
      t.levels.push_back({jl.at("feature").get<int>(),
                          jl.at("threshold").get<double>()});
    t.leaves = jt.at("leaves").get<std::vector<double>>();
    if (t.leaves.size() != size_t(1) << t.levels.size())
      throw std::invalid_argument("model_from_json: malformed tree");
    m.trees.push_back(std::move(t));
  }
  m.config.tree_count = int(m.trees.size());
  return m;
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int folds,
                                  uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("stratified_folds: folds");
  if (labels.size() < size_t(folds))
    throw std::invalid_argument("stratified_folds: more folds than samples");
  std::vector<size_t> by_class[2];
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw std::domain_error("stratified_folds: labels must be 0 or 1");
    by_class[labels[i]].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<int> fold(labels.size(), 0);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (size_t k = 0; k < members.size(); ++k)
      fold[members[k]] = int(k % size_t(folds));
  }
  return fold;
}

double cross_val_accuracy(const DataMatrix& data, const BoostConfig& config,
                          int folds) {
  const auto fold = stratified_folds(data.labels, folds, config.seed);
  double acc_sum = 0;
  for (int k = 0; k < folds; ++k) {
    DataMatrix train, test;
    train.columns.resize(data.features());
    test.columns.resize(data.features());
    for (size_t i = 0; i < data.rows(); ++i) {
      DataMatrix& dst = fold[i] == k ? test : train;
      for (size_t f = 0; f < data.features(); ++f)
        dst.columns[f].push_back(data.columns[f][i]);
      dst.labels.push_back(data.labels[i]);
    }
    const TrainedModel model = train_classifier(train, config);
    size_t correct = 0;
    std::vector<double> x(data.features());
    for (size_t i = 0; i < test.rows(); ++i) {
      for (size_t f = 0; f < data.features(); ++f) x[f] = test.columns[f][i];
      correct += predict_row(model, x).attack == (test.labels[i] == 1);
    }
    acc_sum += test.rows() ? double(correct) / double(test.rows()) : 1.0;
  }
  return acc_sum / double(folds);
}

RfecvResult rfecv_select(const DataMatrix& data, const BoostConfig& config,
                         int folds, int step) {
  if (folds < 2) throw std::invalid_argument("rfecv_select: folds");
  if (step < 1) throw std::invalid_argument("rfecv_select: step");
  if (data.features() == 0)
    throw std::invalid_argument("rfecv_select: no features");
  size_t class_count[2] = {0, 0};
  for (int y : data.labels) {
    if (y != 0 && y != 1)
      throw std::domain_error("rfecv_select: labels must be 0 or 1");
    ++class_count[y];
  }
  if (class_count[0] == 0 || class_count[1] == 0)
    throw std::domain_error("rfecv_select: single-class dataset");
  if (class_count[0] < size_t(2 * folds) || class_count[1] < size_t(2 * folds))
    throw std::invalid_argument("rfecv_select: classes too small for folds");

  RfecvResult result;

  std::vector<int> current(data.features());
  std::iota(current.begin(), current.end(), 0);

  std::vector<std::vector<int>> evaluated;
  std::vector<double> scores;
  std::vector<int> drop_order;

  while (true) {
    const DataMatrix sub = select_columns(data, current);
    evaluated.push_back(current);
    scores.push_back(cross_val_accuracy(sub, config, folds));

    if (current.size() == 1) break;

    const TrainedModel model = train_classifier(sub, config, current);
    if (result.full_importance.empty()) {
      result.full_importance.assign(data.features(), 0.0);
      for (size_t f = 0; f < current.size(); ++f)
        result.full_importance[current[f]] = model.importance[f];
    }

    std::vector<double> importance = model.importance;
    const int drop = std::min<int>(step, int(current.size()) - 1);
    for (int d = 0; d < drop; ++d) {
      size_t worst = 0;
      for (size_t f = 1; f < current.size(); ++f)
        if (importance[f] < importance[worst]) worst = f;
      drop_order.push_back(current[worst]);
      current.erase(current.begin() + worst);
      importance.erase(importance.begin() + worst);
    }
  }

  size_t best = 0;
  for (size_t i = 1; i < evaluated.size(); ++i) {
    if (scores[i] > scores[best] ||
        (scores[i] == scores[best] &&
         evaluated[i].size() < evaluated[best].size()))
      best = i;
  }
  result.selected = evaluated[best];
  std::sort(result.selected.begin(), result.selected.end());

  result.ranking.assign(data.features(), 1);
  int rank = 2;
  for (auto it = drop_order.rbegin(); it != drop_order.rend(); ++it) {
    if (std::binary_search(result.selected.begin(), result.selected.end(), *it))
      continue;
    result.ranking[*it] = rank++;
  }

  for (size_t i = 0; i < evaluated.size(); ++i)
    result.curve.push_back({evaluated[i].size(), scores[i]});
  return result;
}

ConfusionCounts count_confusion(const std::vector<int>& y_true,
                                const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument("count_confusion: length mismatch");
  ConfusionCounts c;
  for (size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == 1)
      ++(y_pred[i] == 1 ? c.tp : c.fn);
    else
      ++(y_pred[i] == 1 ? c.fp : c.tn);
  }
  return c;
}

Metrics compute_metrics(const ConfusionCounts& c) {
  Metrics m;
  const double tp = double(c.tp), fp = double(c.fp);
  const double fn = double(c.fn), tn = double(c.tn);
  const double total = tp + fp + fn + tn;
  m.accuracy = total > 0 ? (tp + tn) / total : 0;
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0;
  m.f1 = m.precision + m.recall > 0
             ? 2 * m.precision * m.recall / (m.precision + m.recall)
             : 0;
  m.fpr = fp + tn > 0 ? fp / (fp + tn) : 0;
  m.fnr = fn + tp > 0 ? fn / (fn + tp) : 0;
  return m;
}

}  // namespace loftsim
