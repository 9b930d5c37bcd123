#include "constprobe/probe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "constprobe/common.hpp"

namespace constprobe {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (l1 < 0 || l2 < 0) throw std::invalid_argument("regularization weights must be non-negative");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
}

std::size_t ProbeModel::predict(std::span<const double> features) const {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < weights.rows(); ++c) {
    double score = bias(c);
    for (Eigen::Index k = 0; k < weights.cols(); ++k) score += static_cast<double>(weights(c, k)) * features[static_cast<std::size_t>(k)];
    if (score > best_score) {
      best_score = score;
      best = static_cast<std::size_t>(c);
    }
  }
  return best;
}

namespace {

json config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs}, {"learning_rate", c.learning_rate}, {"l1", c.l1},
          {"l2", c.l2},         {"batch_size", c.batch_size},       {"seed", c.seed},
          {"beta1", c.beta1},   {"beta2", c.beta2},                 {"epsilon", c.epsilon},
          {"init_stddev", c.init_stddev}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.l1 = j.value("l1", c.l1);
  c.l2 = j.value("l2", c.l2);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.init_stddev = j.value("init_stddev", c.init_stddev);
  return c;
}

void write_floats_le(std::ostream& out, const float* data, std::size_t n) {
  std::vector<char> bytes(n * sizeof(float));
  std::memcpy(bytes.data(), data, bytes.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t k = 0; k < bytes.size(); k += 4) std::reverse(bytes.begin() + k, bytes.begin() + k + 4);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void read_floats_le(std::istream& in, float* data, std::size_t n) {
  std::vector<char> bytes(n * sizeof(float));
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw DataError("model blob truncated");
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t k = 0; k < bytes.size(); k += 4) std::reverse(bytes.begin() + k, bytes.begin() + k + 4);
  }
  std::memcpy(data, bytes.data(), bytes.size());
}

}  // namespace

void ProbeModel::save(const std::string& path) const {
  const std::string blob = path + ".bin";
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = weights;
  {
    std::ofstream out(blob, std::ios::binary);
    if (!out) throw DataError("cannot write " + blob);
    write_floats_le(out, w.data(), static_cast<std::size_t>(w.size()));
    write_floats_le(out, bias.data(), static_cast<std::size_t>(bias.size()));
  }
  json j;
  j["format"] = "constprobe-probe";
  j["task"] = task_name(task);
  j["classes"] = classes;
  j["features"] = weights.cols();
  j["descriptor"] = json::parse(descriptor.to_json());
  j["config"] = config_json(config);
  j["data_hash"] = data_hash;
  j["loss_history"] = loss_history;
  j["blob"] = std::filesystem::path(blob).filename().string();
  j["weights_offset"] = 0;
  j["bias_offset"] = static_cast<std::size_t>(w.size()) * sizeof(float);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(1) << '\n';
}

ProbeModel ProbeModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model " + path);
  ProbeModel m;
  json j;
  try {
    j = json::parse(in);
    m.task = parse_task(j.at("task").get<std::string>());
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.descriptor = FeatureDescriptor::from_json(j.at("descriptor").dump());
    m.config = config_from_json(j.at("config"));
    m.data_hash = j.value("data_hash", "");
    m.loss_history = j.value("loss_history", std::vector<double>{});
  } catch (const json::exception& e) {
    throw DataError("bad model file " + path + ": " + e.what());
  }
  const auto features = j.at("features").get<Eigen::Index>();
  const auto classes = static_cast<Eigen::Index>(m.classes.size());
  const auto blob = (std::filesystem::path(path).parent_path() / j.at("blob").get<std::string>()).string();
  std::ifstream bin(blob, std::ios::binary);
  if (!bin) throw DataError("cannot open model blob " + blob);
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w(classes, features);
  read_floats_le(bin, w.data(), static_cast<std::size_t>(w.size()));
  m.weights = w;
  m.bias.resize(classes);
  read_floats_le(bin, m.bias.data(), static_cast<std::size_t>(classes));
  return m;
}

LossParts probe_loss(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias, const Eigen::MatrixXd& features,
                     const std::vector<int>& labels, double l1, double l2, Eigen::MatrixXd* grad_w,
                     Eigen::VectorXd* grad_b) {
  const auto rows = features.rows();
  Eigen::MatrixXd logits = features * weights.transpose();
  logits.rowwise() += bias.transpose();
  LossParts loss;
  Eigen::MatrixXd residual(rows, weights.rows());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double top = logits.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(r).array() - top).exp();
    const double z = e.sum();
    const int y = labels[static_cast<std::size_t>(r)];
    loss.data += -(logits(r, y) - top - std::log(z));
    residual.row(r) = e / z;
    residual(r, y) -= 1.0;
  }
  const double n = static_cast<double>(rows);
  loss.data /= n;
  loss.penalty = l1 * weights.cwiseAbs().sum() + l2 * weights.squaredNorm();
  if (grad_w) {
    *grad_w = residual.transpose() * features / n;
    *grad_w += l1 * weights.unaryExpr([](double w) { return static_cast<double>((w > 0) - (w < 0)); });
    *grad_w += 2.0 * l2 * weights;
  }
  if (grad_b) *grad_b = residual.colwise().sum().transpose() / n;
  return loss;
}

double gradient_check(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias, const Eigen::MatrixXd& features,
                      const std::vector<int>& labels, double l1, double l2, double step) {
  Eigen::MatrixXd gw;
  Eigen::VectorXd gb;
  probe_loss(weights, bias, features, labels, l1, l2, &gw, &gb);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); };
  double worst = 0.0;
  Eigen::MatrixXd w = weights;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index k = 0; k < w.cols(); ++k) {
      const double keep = w(i, k);
      w(i, k) = keep + step;
      const double up = probe_loss(w, bias, features, labels, l1, l2).total();
      w(i, k) = keep - step;
      const double down = probe_loss(w, bias, features, labels, l1, l2).total();
      w(i, k) = keep;
      worst = std::max(worst, rel(gw(i, k), (up - down) / (2 * step)));
    }
  }
  Eigen::VectorXd b = bias;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const double keep = b(i);
    b(i) = keep + step;
    const double up = probe_loss(weights, b, features, labels, l1, l2).total();
    b(i) = keep - step;
    const double down = probe_loss(weights, b, features, labels, l1, l2).total();
    b(i) = keep;
    worst = std::max(worst, rel(gb(i), (up - down) / (2 * step)));
  }
  return worst;
}

namespace {

using BatchFiller = std::function<void(std::span<const std::size_t> rows, Eigen::MatrixXd& out)>;

ProbeModel fit(std::size_t count, std::size_t dim, const std::vector<std::string>& labels, const BatchFiller& fill,
               const TrainConfig& config) {
  config.validate();
  if (count == 0) throw DataError("cannot train on an empty dataset");
  ProbeModel model;
  model.classes = labels;
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) throw DataError("degenerate training data: need at least two classes");
  std::vector<int> y(count);
  for (std::size_t r = 0; r < count; ++r)
    y[r] = static_cast<int>(std::lower_bound(model.classes.begin(), model.classes.end(), labels[r]) - model.classes.begin());

  const auto classes = static_cast<Eigen::Index>(model.classes.size());
  const auto features = static_cast<Eigen::Index>(dim);
  Rng rng(config.seed);
  Eigen::MatrixXd w(classes, features);
  for (Eigen::Index c = 0; c < classes; ++c)
    for (Eigen::Index k = 0; k < features; ++k) w(c, k) = rng.normal() * config.init_stddev;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(classes);
  Eigen::MatrixXd m_w = Eigen::MatrixXd::Zero(classes, features), v_w = m_w;
  Eigen::VectorXd m_b = Eigen::VectorXd::Zero(classes), v_b = m_b;

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::MatrixXd batch;
  Eigen::MatrixXd gw;
  Eigen::VectorXd gb;
  std::vector<int> batch_labels;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t k = count; k > 1; --k) std::swap(order[k - 1], order[rng.index(k)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < count; start += config.batch_size) {
      const std::size_t size = std::min(config.batch_size, count - start);
      const std::span<const std::size_t> rows(order.data() + start, size);
      batch.resize(static_cast<Eigen::Index>(size), features);
      fill(rows, batch);
      batch_labels.resize(size);
      for (std::size_t r = 0; r < size; ++r) batch_labels[r] = y[rows[r]];
      const auto loss = probe_loss(w, b, batch, batch_labels, config.l1, config.l2, &gw, &gb);
      if (!std::isfinite(loss.total()))
        throw DataError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch starting at " +
                        std::to_string(start));
      epoch_loss += loss.total() * static_cast<double>(size);

      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      m_w = config.beta1 * m_w + (1 - config.beta1) * gw;
      v_w = config.beta2 * v_w + (1 - config.beta2) * gw.cwiseProduct(gw);
      m_b = config.beta1 * m_b + (1 - config.beta1) * gb;
      v_b = config.beta2 * v_b + (1 - config.beta2) * gb.cwiseProduct(gb);
      w.array() -= config.learning_rate * (m_w.array() / c1) / ((v_w.array() / c2).sqrt() + config.epsilon);
      b.array() -= config.learning_rate * (m_b.array() / c1) / ((v_b.array() / c2).sqrt() + config.epsilon);
    }
    model.loss_history.push_back(epoch_loss / static_cast<double>(count));
  }
  model.weights = w.cast<float>();
  model.bias = b.cast<float>();
  model.config = config;
  return model;
}

}  // namespace

ProbeModel train_matrix(const Eigen::MatrixXd& features, const std::vector<std::string>& labels,
                        const TrainConfig& config) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw std::invalid_argument("train_matrix: one label per row required");
  auto fill = [&](std::span<const std::size_t> rows, Eigen::MatrixXd& out) {
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(rows[r]));
  };
  auto model = fit(labels.size(), static_cast<std::size_t>(features.cols()), labels, fill, config);
  Fnv1a h;
  h.update(std::as_bytes(std::span(features.data(), static_cast<std::size_t>(features.size()))));
  for (const auto& l : labels) h.update(l).update("\n");
  model.data_hash = h.hex();
  return model;
}

ProbeModel train(const Dataset& dataset, const ActivationContainer& container, const FeatureDescriptor& descriptor,
                 const TrainConfig& config) {
  const FeatureExtractor fx(container, descriptor, is_pair_task(dataset.kind));
  const auto dim = fx.dim();
  std::vector<std::string> labels;
  labels.reserve(dataset.size());
  for (const auto& inst : dataset.instances) labels.push_back(inst.label);
  auto fill = [&](std::span<const std::size_t> rows, Eigen::MatrixXd& out) {
    // Row-major staging so each worker writes a contiguous block.
    std::vector<double> staging(rows.size() * dim);
    parallel_for(rows.size(), 0, [&](std::size_t r) {
      fx.extract(dataset.instances[rows[r]], std::span<double>(staging).subspan(r * dim, dim));
    });
    out = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        staging.data(), static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  };
  auto model = fit(dataset.size(), dim, labels, fill, config);
  model.task = dataset.kind;
  model.descriptor = descriptor;
  model.data_hash = to_hex(dataset.content_hash());
  return model;
}

EvalReport make_report(const std::vector<std::string>& classes, const std::vector<std::string>& gold,
                       const std::vector<std::size_t>& predicted, const std::vector<int>& distances) {
  if (gold.size() != predicted.size()) throw std::invalid_argument("make_report: size mismatch");
  EvalReport rep;
  rep.classes = classes;
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < classes.size(); ++c) index.emplace(classes[c], c);
  std::vector<std::size_t> gold_idx(gold.size());
  for (std::size_t k = 0; k < gold.size(); ++k) {
    auto [it, inserted] = index.emplace(gold[k], rep.classes.size());
    if (inserted) rep.classes.push_back(gold[k]);
    gold_idx[k] = it->second;
  }
  const std::size_t n = rep.classes.size();
  rep.confusion.assign(n, std::vector<std::size_t>(n, 0));
  rep.total = gold.size();
  rep.predictions = predicted;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    const bool ok = gold_idx[k] == predicted[k];
    ++rep.confusion[gold_idx[k]][predicted[k]];
    rep.correct += ok ? 1 : 0;
    if (!distances.empty()) {
      auto& bucket = rep.by_distance[distances[k]];
      bucket.first += ok ? 1 : 0;
      ++bucket.second;
    }
  }
  rep.precision.assign(n, 0.0);
  rep.recall.assign(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t col = 0, row = 0;
    for (std::size_t o = 0; o < n; ++o) {
      col += rep.confusion[o][c];
      row += rep.confusion[c][o];
    }
    if (col) rep.precision[c] = static_cast<double>(rep.confusion[c][c]) / static_cast<double>(col);
    if (row) rep.recall[c] = static_cast<double>(rep.confusion[c][c]) / static_cast<double>(row);
  }
  return rep;
}

std::vector<std::string> predict_labels(const ProbeModel& model, const std::vector<Instance>& instances,
                                        const ActivationContainer& container, bool pair_task, unsigned threads) {
  const FeatureExtractor fx(container, model.descriptor, pair_task);
  if (fx.dim() != model.feature_count())
    throw DataError("model expects " + std::to_string(model.feature_count()) + " features, descriptor yields " +
                    std::to_string(fx.dim()));
  std::vector<std::string> out(instances.size());
  parallel_for(instances.size(), threads, [&](std::size_t k) {
    const auto x = fx.extract(instances[k]);
    out[k] = model.classes[model.predict(x)];
  });
  return out;
}

EvalReport evaluate(const ProbeModel& model, const Dataset& dataset, const ActivationContainer& container,
                    unsigned threads) {
  const bool pair = is_pair_task(dataset.kind);
  const FeatureExtractor fx(container, model.descriptor, pair);
  if (fx.dim() != model.feature_count())
    throw DataError("model expects " + std::to_string(model.feature_count()) + " features, descriptor yields " +
                    std::to_string(fx.dim()));
  std::vector<std::size_t> predicted(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t k) { predicted[k] = model.predict(fx.extract(dataset.instances[k])); });
  std::vector<std::string> gold;
  std::vector<int> distances;
  for (const auto& inst : dataset.instances) {
    gold.push_back(inst.label);
    if (pair) distances.push_back(inst.j - inst.i);
  }
  auto rep = make_report(model.classes, gold, predicted, distances);
  rep.positions_hash = dataset.positions_hash();
  return rep;
}

double selectivity(const EvalReport& task, const EvalReport& control) {
  if (task.total != control.total || task.positions_hash != control.positions_hash)
    throw DataError("selectivity: reports were computed on different instances");
  return task.accuracy() - control.accuracy();
}

std::string EvalReport::to_json() const {
  json j;
  j["accuracy"] = accuracy();
  j["total"] = total;
  j["correct"] = correct;
  j["classes"] = classes;
  j["precision"] = precision;
  j["recall"] = recall;
  j["confusion"] = confusion;
  json dist = json::array();
  for (const auto& [d, v] : by_distance)
    dist.push_back({{"distance", d}, {"correct", v.first}, {"total", v.second},
                    {"accuracy", static_cast<double>(v.first) / static_cast<double>(v.second)}});
  j["by_distance"] = dist;
  j["instances_hash"] = to_hex(positions_hash);
  return j.dump(1);
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "accuracy  " << 100.0 * accuracy() << "%  (" << correct << " / " << total << ")\n\n";
  std::size_t wide = 5;
  for (const auto& c : classes) wide = std::max(wide, c.size());
  out << std::left << std::setw(static_cast<int>(wide) + 2) << "class" << std::right << std::setw(10) << "precision"
      << std::setw(10) << "recall" << std::setw(10) << "support" << '\n';
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::size_t support = 0;
    for (auto v : confusion[c]) support += v;
    out << std::left << std::setw(static_cast<int>(wide) + 2) << classes[c] << std::right << std::setw(10)
        << 100.0 * precision[c] << std::setw(10) << 100.0 * recall[c] << std::setw(10) << support << '\n';
  }
  if (!by_distance.empty()) {
    out << "\ndistance  accuracy  total\n";
    for (const auto& [d, v] : by_distance)
      out << std::setw(8) << d << std::setw(10) << 100.0 * static_cast<double>(v.first) / static_cast<double>(v.second)
          << std::setw(7) << v.second << '\n';
  }
  return out.str();
}

}  // namespace constprobe
