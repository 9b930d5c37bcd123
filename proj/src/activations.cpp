#include "constprobe/activations.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "json.hpp"

#include "constprobe/common.hpp"

namespace constprobe {

namespace fs = std::filesystem;
using nlohmann::json;

struct ActivationContainer::Cache {
  std::mutex mutex;
  std::vector<std::shared_ptr<const std::vector<float>>> matrices;
};

namespace {

std::vector<char> to_little_endian(const std::vector<float>& values) {
  std::vector<char> bytes(values.size() * sizeof(float));
  std::memcpy(bytes.data(), values.data(), bytes.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t k = 0; k < bytes.size(); k += 4) std::reverse(bytes.begin() + k, bytes.begin() + k + 4);
  }
  return bytes;
}

std::vector<float> from_little_endian(std::vector<char> bytes) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t k = 0; k < bytes.size(); k += 4) std::reverse(bytes.begin() + k, bytes.begin() + k + 4);
  }
  std::vector<float> values(bytes.size() / sizeof(float));
  std::memcpy(values.data(), bytes.data(), values.size() * sizeof(float));
  return values;
}

std::string checksum(std::span<const char> bytes) {
  Fnv1a h;
  h.update(std::as_bytes(bytes));
  return h.hex();
}

std::string record_file_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06zu.f32", k);
  return buf;
}

}  // namespace

ActivationContainer ActivationContainer::load(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("integrity error: missing " + manifest_path.string());
  ActivationContainer c;
  c.dir_ = dir;
  try {
    const json m = json::parse(in);
    if (m.at("format").get<std::string>() != kContainerFormat) throw DataError("integrity error: unknown format");
    if (m.value("dtype", "float32") != "float32") throw DataError("integrity error: only float32 is supported");
    if (m.value("byte_order", "little") != "little") throw DataError("integrity error: only little-endian is supported");
    auto& man = c.manifest_;
    man.model_id = m.value("model_id", "");
    man.layer_count = m.at("layer_count").get<int>();
    man.width = m.at("width").get<int>();
    man.extra_json = m.contains("extra") ? m["extra"].dump() : "{}";
    for (const auto& s : m.at("sentences")) {
      man.sentences.push_back({s.at("sentence_id").get<std::string>(), s.at("token_count").get<int>(),
                               s.at("file").get<std::string>(), s.value("fnv1a64", "")});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("integrity error: bad manifest: ") + e.what());
  }
  if (c.manifest_.layer_count <= 0 || c.manifest_.width <= 0) throw DataError("integrity error: bad dimensions");
  for (const auto& rec : c.manifest_.sentences) {
    const fs::path p = fs::path(dir) / rec.file;
    std::error_code ec;
    const auto size = fs::file_size(p, ec);
    const auto expected = static_cast<std::uintmax_t>(rec.token_count) *
                          static_cast<std::uintmax_t>(c.manifest_.row_width()) * sizeof(float);
    if (ec || size != expected)
      throw DataError("integrity error: matrix for sentence " + rec.sentence_id + " has " +
                      (ec ? std::string("no file") : std::to_string(size) + " bytes") + ", expected " +
                      std::to_string(expected));
  }
  c.cache_ = std::make_shared<Cache>();
  c.cache_->matrices.resize(c.manifest_.sentences.size());
  return c;
}

ActivationContainer ActivationContainer::from_matrices(ContainerManifest manifest,
                                                       std::vector<std::vector<float>> matrices) {
  if (manifest.sentences.size() != matrices.size()) throw std::invalid_argument("one matrix per sentence record");
  ActivationContainer c;
  c.manifest_ = std::move(manifest);
  c.cache_ = std::make_shared<Cache>();
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    const auto& rec = c.manifest_.sentences[k];
    if (matrices[k].size() != static_cast<std::size_t>(rec.token_count) * static_cast<std::size_t>(c.manifest_.row_width()))
      throw std::invalid_argument("matrix shape mismatch for sentence " + rec.sentence_id);
    c.cache_->matrices.push_back(std::make_shared<const std::vector<float>>(std::move(matrices[k])));
  }
  return c;
}

void ActivationContainer::save(const std::string& dir) const {
  fs::create_directories(dir);
  json m;
  m["format"] = kContainerFormat;
  m["version"] = kContainerVersion;
  m["model_id"] = manifest_.model_id;
  m["layer_count"] = manifest_.layer_count;
  m["width"] = manifest_.width;
  m["dtype"] = "float32";
  m["byte_order"] = "little";
  m["extra"] = json::parse(manifest_.extra_json);
  json sentences = json::array();
  for (std::size_t k = 0; k < manifest_.sentences.size(); ++k) {
    const auto bytes = to_little_endian(matrix(k));
    const std::string file = record_file_name(k);
    std::ofstream out(fs::path(dir) / file, std::ios::binary);
    if (!out) throw DataError("cannot write " + (fs::path(dir) / file).string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    const auto& rec = manifest_.sentences[k];
    sentences.push_back({{"sentence_id", rec.sentence_id},
                         {"token_count", rec.token_count},
                         {"file", file},
                         {"fnv1a64", checksum(bytes)}});
  }
  m["sentences"] = std::move(sentences);
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << m.dump(1) << '\n';
}

const std::vector<float>& ActivationContainer::matrix(std::size_t sentence) const {
  if (!cache_ || sentence >= manifest_.sentences.size()) throw std::out_of_range("sentence index out of range");
  std::lock_guard lock(cache_->mutex);
  auto& slot = cache_->matrices[sentence];
  if (!slot) {
    const auto& rec = manifest_.sentences[sentence];
    const fs::path p = fs::path(dir_) / rec.file;
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("integrity error: cannot read matrix for sentence " + rec.sentence_id);
    std::vector<char> bytes(static_cast<std::size_t>(rec.token_count) * static_cast<std::size_t>(manifest_.row_width()) *
                            sizeof(float));
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size() || in.peek() != std::char_traits<char>::eof())
      throw DataError("integrity error: matrix size mismatch for sentence " + rec.sentence_id);
    if (!rec.checksum.empty() && checksum(bytes) != rec.checksum)
      throw DataError("integrity error: checksum mismatch for sentence " + rec.sentence_id);
    auto values = from_little_endian(std::move(bytes));
    for (float v : values)
      if (!std::isfinite(v)) throw DataError("integrity error: non-finite value in sentence " + rec.sentence_id);
    slot = std::make_shared<const std::vector<float>>(std::move(values));
  }
  return *slot;
}

std::span<const float> ActivationContainer::row(std::size_t sentence, int token) const {
  const auto& m = matrix(sentence);
  const auto w = static_cast<std::size_t>(manifest_.row_width());
  if (token < 0 || token >= manifest_.sentences[sentence].token_count) throw std::out_of_range("token index out of range");
  return std::span<const float>(m).subspan(static_cast<std::size_t>(token) * w, w);
}

void check_alignment(const ActivationContainer& container, const std::vector<ConstTree>& corpus) {
  const auto& recs = container.manifest().sentences;
  if (recs.size() != corpus.size())
    throw DataError("alignment error: container has " + std::to_string(recs.size()) + " sentences, corpus has " +
                    std::to_string(corpus.size()));
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    if (recs[s].sentence_id != corpus[s].sentence_id || static_cast<std::size_t>(recs[s].token_count) != corpus[s].size())
      throw DataError("alignment error at sentence " + corpus[s].sentence_id + ": container has " +
                      std::to_string(recs[s].token_count) + " rows for " + std::to_string(corpus[s].size()) +
                      " tokens (id " + recs[s].sentence_id + ")");
  }
}

std::string combination_name(Combination c) {
  switch (c) {
    case Combination::kConcat:
      return "concat";
    case Combination::kAvg:
      return "avg";
    case Combination::kMaxS:
      return "max_s";
    case Combination::kLeft:
      return "left";
    case Combination::kRight:
      return "right";
  }
  return "concat";
}

Combination parse_combination(const std::string& name) {
  for (auto c : {Combination::kConcat, Combination::kAvg, Combination::kMaxS, Combination::kLeft, Combination::kRight})
    if (combination_name(c) == name) return c;
  throw std::invalid_argument("unknown combination '" + name + "'");
}

std::string FeatureDescriptor::to_json() const {
  json j;
  j["layers"] = layers;
  j["combination"] = combination_name(combination);
  if (neurons) j["neurons"] = *neurons;
  return j.dump();
}

FeatureDescriptor FeatureDescriptor::from_json(const std::string& text) {
  const json j = json::parse(text);
  FeatureDescriptor d;
  d.layers = j.value("layers", std::vector<int>{});
  d.combination = parse_combination(j.value("combination", "concat"));
  if (j.contains("neurons")) d.neurons = j["neurons"].get<std::vector<int>>();
  return d;
}

std::vector<int> FeatureDescriptor::parse_layers(const std::string& text) {
  if (text.empty() || text == "all") return {};
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    const int v = std::stoi(part, &used);
    if (used != part.size()) throw std::invalid_argument("bad layer list '" + text + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<float> combine(std::span<const float> a, std::span<const float> b, Combination method) {
  if (a.size() != b.size()) throw std::invalid_argument("combine: dimension mismatch");
  std::vector<float> out;
  switch (method) {
    case Combination::kConcat:
      out.reserve(a.size() * 2);
      out.insert(out.end(), a.begin(), a.end());
      out.insert(out.end(), b.begin(), b.end());
      break;
    case Combination::kAvg:
      out.resize(a.size());
      for (std::size_t k = 0; k < a.size(); ++k) out[k] = (a[k] + b[k]) * 0.5f;
      break;
    case Combination::kMaxS:
      out.resize(a.size());
      for (std::size_t k = 0; k < a.size(); ++k) out[k] = max_signed(a[k], b[k]);
      break;
    case Combination::kLeft:
      out.assign(a.begin(), a.end());
      break;
    case Combination::kRight:
      out.assign(b.begin(), b.end());
      break;
  }
  return out;
}

std::vector<int> reconstruction_layers(int layer_count) {
  const int transformer_layers = layer_count - 1;
  const int step = transformer_layers == 6 ? 2 : 3;
  std::vector<int> out;
  for (int l = step; l <= transformer_layers; l += step) out.push_back(l);
  if (out.empty())
    for (int l = 1; l < layer_count; ++l) out.push_back(l);
  if (out.empty()) out.push_back(0);
  return out;
}

FeatureExtractor::FeatureExtractor(const ActivationContainer& container, FeatureDescriptor descriptor, bool pair_task)
    : container_(&container), descriptor_(std::move(descriptor)), pair_(pair_task), width_(container.width()) {
  if (descriptor_.layers.empty()) {
    for (int l = 0; l < container.layer_count(); ++l) layer_ids_.push_back(l);
  } else {
    for (int l : descriptor_.layers) {
      if (l < 0 || l >= container.layer_count())
        throw std::out_of_range("layer " + std::to_string(l) + " outside [0, " + std::to_string(container.layer_count()) +
                                ")");
    }
    layer_ids_ = descriptor_.layers;
  }
  if (descriptor_.neurons) {
    const auto full = static_cast<int>(full_dim());
    for (int n : *descriptor_.neurons)
      if (n < 0 || n >= full) throw std::out_of_range("neuron index " + std::to_string(n) + " out of range");
    if (descriptor_.neurons->empty()) throw std::invalid_argument("empty neuron subset");
  }
}

std::size_t FeatureExtractor::full_dim() const {
  return pair_ && descriptor_.combination == Combination::kConcat ? 2 * token_dim() : token_dim();
}

std::size_t FeatureExtractor::dim() const { return descriptor_.neurons ? descriptor_.neurons->size() : full_dim(); }

std::vector<float> FeatureExtractor::layer_slice(std::size_t sentence, int token) const {
  const auto row = container_->row(sentence, token);
  std::vector<float> out;
  out.reserve(token_dim());
  for (int l : layer_ids_) {
    const auto block = row.subspan(static_cast<std::size_t>(l) * static_cast<std::size_t>(width_),
                                   static_cast<std::size_t>(width_));
    out.insert(out.end(), block.begin(), block.end());
  }
  return out;
}

std::vector<float> FeatureExtractor::slice(std::size_t sentence, int token) const {
  auto full = layer_slice(sentence, token);
  if (!descriptor_.neurons || pair_) return full;
  std::vector<float> out;
  out.reserve(descriptor_.neurons->size());
  for (int n : *descriptor_.neurons) out.push_back(full[static_cast<std::size_t>(n)]);
  return out;
}

void FeatureExtractor::extract(const Instance& instance, std::span<double> out) const {
  std::vector<float> full;
  if (pair_) {
    const auto a = layer_slice(instance.sentence, instance.i);
    const auto b = layer_slice(instance.sentence, instance.j);
    full = combine(a, b, descriptor_.combination);
  } else {
    full = layer_slice(instance.sentence, instance.i);
  }
  if (descriptor_.neurons) {
    const auto& idx = *descriptor_.neurons;
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = full[static_cast<std::size_t>(idx[k])];
  } else {
    std::copy(full.begin(), full.end(), out.begin());
  }
}

std::vector<double> FeatureExtractor::extract(const Instance& instance) const {
  std::vector<double> out(dim());
  extract(instance, out);
  return out;
}

std::vector<int> FeatureExtractor::feature_layers() const {
  std::vector<int> full(full_dim());
  const auto td = token_dim();
  for (std::size_t k = 0; k < full.size(); ++k)
    full[k] = layer_ids_[(k % td) / static_cast<std::size_t>(width_)];
  if (!descriptor_.neurons) return full;
  std::vector<int> out;
  for (int n : *descriptor_.neurons) out.push_back(full[static_cast<std::size_t>(n)]);
  return out;
}

std::vector<float> slice(const ActivationContainer& container, std::size_t sentence, int token,
                         const FeatureDescriptor& descriptor) {
  return FeatureExtractor(container, descriptor, false).slice(sentence, token);
}

SynthMode parse_synth_mode(const std::string& name) {
  if (name == "gaussian") return SynthMode::kGaussian;
  if (name == "type_static" || name == "type-static") return SynthMode::kTypeStatic;
  if (name == "structured") return SynthMode::kStructured;
  throw std::invalid_argument("unknown synth mode '" + name + "'");
}

SynthResult synth_container(const std::vector<ConstTree>& corpus, const SynthOptions& options) {
  if (options.width <= 0 || options.layer_count <= 0) throw std::invalid_argument("synth: width and layer count must be positive");
  const auto width = static_cast<std::size_t>(options.width);
  const auto row_width = width * static_cast<std::size_t>(options.layer_count);

  SynthResult result;
  ContainerManifest manifest;
  manifest.model_id = options.model_id;
  manifest.layer_count = options.layer_count;
  manifest.width = options.width;

  std::vector<int> signal_layers = options.signal_layers;
  if (signal_layers.empty())
    for (int l = 0; l < options.layer_count; ++l) signal_layers.push_back(l);
  for (int l : signal_layers)
    if (l < 0 || l >= options.layer_count) throw std::out_of_range("synth: signal layer out of range");

  std::map<std::string, std::size_t> class_index;
  if (options.mode == SynthMode::kStructured) {
    if (options.planted_labels.size() != corpus.size())
      throw std::invalid_argument("synth: structured mode needs planted labels for every sentence");
    for (const auto& sent : options.planted_labels)
      for (const auto& l : sent) class_index.emplace(l, 0);
    std::size_t k = 0;
    for (auto& [label, idx] : class_index) {
      idx = k++;
      result.classes.push_back(label);
    }
    Rng dir_rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t c = 0; c < result.classes.size(); ++c) {
      std::vector<double> u(width);
      double norm = 0.0;
      for (auto& x : u) {
        x = dir_rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (auto& x : u) x /= norm;
      result.directions.push_back(std::move(u));
    }
  }

  Rng rng(options.seed);
  std::vector<std::vector<float>> matrices;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto& tree = corpus[s];
    manifest.sentences.push_back({tree.sentence_id, static_cast<int>(tree.size()), "", ""});
    std::vector<float> m(tree.size() * row_width);
    for (std::size_t t = 0; t < tree.size(); ++t) {
      auto row = std::span<float>(m).subspan(t * row_width, row_width);
      if (options.mode == SynthMode::kTypeStatic) {
        Rng type_rng(options.seed ^ Fnv1a().update(tree.tokens[t].form).digest());
        for (auto& x : row) x = static_cast<float>(type_rng.normal());
        continue;
      }
      for (auto& x : row) x = static_cast<float>(rng.normal());
      if (options.mode == SynthMode::kStructured) {
        const auto& labels = options.planted_labels[s];
        if (labels.size() != tree.size())
          throw std::invalid_argument("synth: planted labels misaligned in sentence " + tree.sentence_id);
        const auto& u = result.directions[class_index.at(labels[t])];
        for (int l : signal_layers) {
          for (std::size_t k = 0; k < width; ++k)
            row[static_cast<std::size_t>(l) * width + k] += static_cast<float>(options.signal_strength * u[k]);
        }
      }
    }
    matrices.push_back(std::move(m));
  }

  json extra;
  extra["synth_mode"] = options.mode == SynthMode::kGaussian     ? "gaussian"
                        : options.mode == SynthMode::kTypeStatic ? "type_static"
                                                                 : "structured";
  extra["seed"] = options.seed;
  if (options.mode == SynthMode::kStructured) {
    extra["signal_strength"] = options.signal_strength;
    extra["signal_layers"] = signal_layers;
    extra["classes"] = result.classes;
  }
  manifest.extra_json = extra.dump();
  result.container = ActivationContainer::from_matrices(std::move(manifest), std::move(matrices));
  return result;
}

}  // namespace constprobe
