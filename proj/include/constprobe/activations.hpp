#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "constprobe/tasks.hpp"
#include "constprobe/treebank.hpp"

namespace constprobe {

// On-disk layout of an activation container directory:
//
//   manifest.json   format, model_id, layer_count L (embedding layer
//                   included), width r, dtype "float32", byte_order
//                   "little", and one record per sentence:
//                   {sentence_id, token_count, file, fnv1a64}
//   <file>          token_count x (L * r) little-endian float32, row-major;
//                   the columns of layer l are [l*r, (l+1)*r)
//
// fnv1a64 is the 64-bit FNV-1a hash of the matrix file bytes, in hex.

inline constexpr const char* kContainerFormat = "constprobe-activations";
inline constexpr int kContainerVersion = 1;

struct SentenceRecord {
  std::string sentence_id;
  int token_count = 0;
  std::string file;
  std::string checksum;
};

struct ContainerManifest {
  std::string model_id;
  int layer_count = 0;
  int width = 0;
  std::vector<SentenceRecord> sentences;
  std::string extra_json = "{}";  // free-form provenance, round-tripped verbatim

  int row_width() const { return layer_count * width; }
};

/// Token-aligned activations. Matrices are read on first access and then
/// shared; the container is safe for concurrent readers.
class ActivationContainer {
 public:
  ActivationContainer() = default;

  /// Reads the manifest and checks every matrix file's size. Contents are
  /// checksum-verified when first read.
  static ActivationContainer load(const std::string& dir);
  static ActivationContainer from_matrices(ContainerManifest manifest, std::vector<std::vector<float>> matrices);

  /// Writes the manifest and matrices; fills in file names and checksums.
  void save(const std::string& dir) const;

  const ContainerManifest& manifest() const { return manifest_; }
  std::size_t sentence_count() const { return manifest_.sentences.size(); }
  int layer_count() const { return manifest_.layer_count; }
  int width() const { return manifest_.width; }

  const std::vector<float>& matrix(std::size_t sentence) const;
  std::span<const float> row(std::size_t sentence, int token) const;

 private:
  struct Cache;
  std::string dir_;
  ContainerManifest manifest_;
  std::shared_ptr<Cache> cache_;
};

/// Throws DataError naming the first sentence whose id or token count differs.
void check_alignment(const ActivationContainer& container, const std::vector<ConstTree>& corpus);

enum class Combination { kConcat, kAvg, kMaxS, kLeft, kRight };

std::string combination_name(Combination c);
Combination parse_combination(const std::string& name);

/// Which activations feed a probe: layer blocks (empty = all, manifest
/// order), how two token vectors are merged for pair tasks, and an optional
/// subset of the resulting feature positions.
struct FeatureDescriptor {
  std::vector<int> layers;
  Combination combination = Combination::kConcat;
  std::optional<std::vector<int>> neurons;

  std::string to_json() const;
  static FeatureDescriptor from_json(const std::string& json);
  /// "all", "3" or "3,6,9,12".
  static std::vector<int> parse_layers(const std::string& text);
};

/// Signed absolute maximum: m if |m| > |n|, else n.
inline float max_signed(float m, float n) { return (m < 0 ? -m : m) > (n < 0 ? -n : n) ? m : n; }

std::vector<float> combine(std::span<const float> a, std::span<const float> b, Combination method);

/// Every third transformer layer (1-based, embeddings excluded); every second
/// for 6-layer models.
std::vector<int> reconstruction_layers(int layer_count);

/// Binds a descriptor to a container and produces probe inputs.
class FeatureExtractor {
 public:
  FeatureExtractor(const ActivationContainer& container, FeatureDescriptor descriptor, bool pair_task);

  std::size_t token_dim() const { return layer_ids_.size() * static_cast<std::size_t>(width_); }
  /// Feature dimension before the neuron subset is applied.
  std::size_t full_dim() const;
  std::size_t dim() const;

  /// Layer blocks, then neuron subset when this is a token task.
  std::vector<float> slice(std::size_t sentence, int token) const;
  void extract(const Instance& instance, std::span<double> out) const;
  std::vector<double> extract(const Instance& instance) const;

  /// Source layer of each output feature (pair features fold onto the layer
  /// they were taken from).
  std::vector<int> feature_layers() const;

  const FeatureDescriptor& descriptor() const { return descriptor_; }
  const std::vector<int>& layer_ids() const { return layer_ids_; }

 private:
  std::vector<float> layer_slice(std::size_t sentence, int token) const;

  const ActivationContainer* container_;
  FeatureDescriptor descriptor_;
  bool pair_;
  int width_;
  std::vector<int> layer_ids_;
};

/// Convenience wrapper over FeatureExtractor::slice.
std::vector<float> slice(const ActivationContainer& container, std::size_t sentence, int token,
                         const FeatureDescriptor& descriptor);

enum class SynthMode { kGaussian, kTypeStatic, kStructured };
SynthMode parse_synth_mode(const std::string& name);

struct SynthOptions {
  int width = 16;
  int layer_count = 4;
  SynthMode mode = SynthMode::kGaussian;
  std::uint64_t seed = 1;
  double signal_strength = 10.0;
  std::vector<int> signal_layers;  // empty = all layers
  /// Per-sentence, per-token labels whose directions are planted (structured mode).
  std::vector<std::vector<std::string>> planted_labels;
  std::string model_id = "synthetic";
};

struct SynthResult {
  ActivationContainer container;
  std::vector<std::string> classes;                // planted classes, sorted
  std::vector<std::vector<double>> directions;  // unit vector of length width per class
};

SynthResult synth_container(const std::vector<ConstTree>& corpus, const SynthOptions& options);

}  // namespace constprobe
