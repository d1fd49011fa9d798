#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "loftsim/flora.hpp"

namespace loftsim {

// Column-major training data: columns[f][row], one label per row (0 or 1).
struct DataMatrix {
  std::vector<std::vector<double>> columns;
  std::vector<int> labels;

  size_t rows() const { return labels.size(); }
  size_t features() const { return columns.size(); }

  static DataMatrix from_vectors(const std::vector<FeatureVector>& vectors);
};

// Keeps the listed columns, in the listed order.
DataMatrix select_columns(const DataMatrix& data,
                          const std::vector<int>& indices);

struct BoostConfig {
  int tree_count = 200;
  int max_depth = 6;
  double learning_rate = 0.1;
  double l2_leaf_reg = 3.0;
  // fraction of rows each tree trains on (plain mode)
  double subsample = 0.8;
  // exact single-permutation mode: per-example leaf estimates use only
  // examples earlier in a seeded permutation, removing target leakage
  bool ordered = false;
  uint64_t seed = 1;
  double prob_threshold = 0.5;
  int max_bins = 255;
};

// Symmetric tree: every node of a level tests the same (feature, threshold).
struct ObliviousTree {
  struct Level {
    int feature = 0;
    double threshold = 0;
  };
  std::vector<Level> levels;
  std::vector<double> leaves;  // size 1 << levels.size()

  // Raw leaf value; bit d of the leaf index is (x[feature_d] > threshold_d).
  double value(const std::vector<double>& x) const;
};

struct TrainedModel {
  BoostConfig config;
  // predictor index each model column came from (identity when trained on
  // the full feature set)
  std::vector<int> feature_indices;
  std::vector<ObliviousTree> trees;
  // total split gain credited to each model column during training
  std::vector<double> importance;

  // Sum of tree outputs for a row in model-column order.
  double raw_score(const std::vector<double>& x) const;
  // logistic(learning_rate * raw_score)
  double predict_proba(const std::vector<double>& x) const;
};

double logistic(double x);
// -[y ln p + (1-y) ln(1-p)] with p = logistic(score)
double logistic_loss(double score, int label);
// d loss / d score = p - y; second derivative p (1 - p)
double logistic_loss_gradient(double score, int label);
double logistic_loss_hessian(double score, int label);

// Gradient boosting with logistic loss over oblivious trees. Split search is
// histogram-based over at most max_bins quantile thresholds per feature;
// gain ties break toward the lowest (feature, threshold). Deterministic for
// a given seed. Throws std::domain_error when only one class is present.
// feature_indices records which predictor each column represents (empty
// means identity).
TrainedModel train_classifier(const DataMatrix& data, const BoostConfig& config,
                              std::vector<int> feature_indices = {});

struct Prediction {
  double probability = 0;
  bool attack = false;
};

// Applies the model to one flow's features. Throws std::invalid_argument on
// a NaN feature value. An empty ensemble predicts probability 0.5.
Prediction predict_flow(const TrainedModel& model, const FeatureVector& fv);
Prediction predict_row(const TrainedModel& model,
                       const std::vector<double>& x);

std::string model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const std::string& text);

// Deterministic stratified fold assignment (fold id per row).
std::vector<int> stratified_folds(const std::vector<int>& labels, int folds,
                                  uint64_t seed);

// Mean accuracy over stratified k-fold train/test rounds.
double cross_val_accuracy(const DataMatrix& data, const BoostConfig& config,
                          int folds);

struct RfecvResult {
  std::vector<int> selected;  // predictor indices, ascending
  // 1 for kept features; eliminated features rank 2, 3, ... from the last
  // one dropped back to the first
  std::vector<int> ranking;
  // importance of every feature in the first (full) model
  std::vector<double> full_importance;
  // (subset size, mean CV accuracy) for each evaluated subset
  std::vector<std::pair<size_t, double>> curve;
};

// Recursive feature elimination: repeatedly scores the current subset by
// stratified k-fold CV accuracy, then drops its lowest-importance feature.
// Returns the subset with the best score (ties prefer fewer features).
// Throws std::domain_error on a single-class dataset and
// std::invalid_argument when a class has fewer than 2*folds samples.
RfecvResult rfecv_select(const DataMatrix& data, const BoostConfig& config,
                         int folds, int step = 1);

struct ConfusionCounts {
  uint64_t tp = 0;
  uint64_t fp = 0;
  uint64_t fn = 0;
  uint64_t tn = 0;
};

struct Metrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double fpr = 0;
  double fnr = 0;
  double classification_rate_per_s = 0;  // filled in by timing code
};

ConfusionCounts count_confusion(const std::vector<int>& y_true,
                                const std::vector<int>& y_pred);
Metrics compute_metrics(const ConfusionCounts& c);

}  // namespace loftsim
