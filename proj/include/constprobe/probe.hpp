#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "constprobe/activations.hpp"
#include "constprobe/tasks.hpp"

namespace constprobe {

struct TrainConfig {
  int epochs = 10;
  double learning_rate = 0.001;
  double l1 = 0.001;
  double l2 = 0.001;
  std::size_t batch_size = 512;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double init_stddev = 0.01;

  void validate() const;
};

/// Linear softmax classifier over a fixed feature descriptor.
struct ProbeModel {
  Eigen::MatrixXf weights;  // classes x features
  Eigen::VectorXf bias;
  std::vector<std::string> classes;  // sorted
  TaskKind task = TaskKind::kChunkSimple;
  FeatureDescriptor descriptor;
  TrainConfig config;
  std::string data_hash;
  std::vector<double> loss_history;  // mean training loss per epoch

  std::size_t feature_count() const { return static_cast<std::size_t>(weights.cols()); }
  /// Index of the highest-scoring class (first one on ties).
  std::size_t predict(std::span<const double> features) const;

  /// Writes <path> (JSON metadata) and <path>.bin (little-endian float32
  /// weights row-major, then bias).
  void save(const std::string& path) const;
  static ProbeModel load(const std::string& path);
};

/// Softmax cross-entropy averaged over rows plus l1 * sum|W| + l2 * sum W^2.
/// The bias is not penalized; the L1 subgradient at 0 is 0.
struct LossParts {
  double data = 0.0;
  double penalty = 0.0;
  double total() const { return data + penalty; }
};

LossParts probe_loss(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias, const Eigen::MatrixXd& features,
                     const std::vector<int>& labels, double l1, double l2, Eigen::MatrixXd* grad_w = nullptr,
                     Eigen::VectorXd* grad_b = nullptr);

/// Max relative error between the analytic gradient of probe_loss and
/// central finite differences, over all weight and bias entries.
double gradient_check(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias, const Eigen::MatrixXd& features,
                      const std::vector<int>& labels, double l1, double l2, double step = 1e-6);

/// Trains on in-memory features (rows aligned with labels).
ProbeModel train_matrix(const Eigen::MatrixXd& features, const std::vector<std::string>& labels,
                        const TrainConfig& config);

ProbeModel train(const Dataset& dataset, const ActivationContainer& container, const FeatureDescriptor& descriptor,
                 const TrainConfig& config);

struct EvalReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::vector<std::string> classes;         // model classes followed by unseen gold labels
  std::vector<std::vector<std::size_t>> confusion;  // gold x predicted
  std::vector<double> precision;
  std::vector<double> recall;
  /// Pair tasks: distance j - i -> {correct, total}.
  std::map<int, std::pair<std::size_t, std::size_t>> by_distance;
  std::uint64_t positions_hash = 0;
  std::vector<std::size_t> predictions;  // class index per instance

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
  std::string to_json() const;
  std::string to_text() const;
};

/// Builds a report from gold and predicted labels.
EvalReport make_report(const std::vector<std::string>& classes, const std::vector<std::string>& gold,
                       const std::vector<std::size_t>& predicted, const std::vector<int>& distances = {});

EvalReport evaluate(const ProbeModel& model, const Dataset& dataset, const ActivationContainer& container,
                    unsigned threads = 0);

/// Class predictions for arbitrary instances.
std::vector<std::string> predict_labels(const ProbeModel& model, const std::vector<Instance>& instances,
                                        const ActivationContainer& container, bool pair_task, unsigned threads = 0);

/// Task accuracy minus control accuracy; both reports must cover the same instances.
double selectivity(const EvalReport& task, const EvalReport& control);

}  // namespace constprobe
