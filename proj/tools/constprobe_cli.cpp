#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "constprobe/activations.hpp"
#include "constprobe/codec.hpp"
#include "constprobe/common.hpp"
#include "constprobe/neurons.hpp"
#include "constprobe/nonce.hpp"
#include "constprobe/probe.hpp"
#include "constprobe/tasks.hpp"
#include "constprobe/treebank.hpp"
#include "constprobe/treeval.hpp"

namespace cp = constprobe;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Records what a run read and wrote. The echo leaves out --threads and
// --config so the manifest only depends on what determines the outputs.
class RunManifest {
 public:
  explicit RunManifest(const CLI::App* app) : app_(app) {}

  void input(const std::string& path) {
    fs::path p(path);
    if (fs::is_directory(p)) p /= "manifest.json";
    inputs_[path] = cp::to_hex(cp::hash_file(p.string()));
  }
  void output(const std::string& path) { outputs_.push_back(path); }

  void write(const std::string& path) const {
    json config = json::object();
    for (const CLI::Option* opt : app_->get_options()) {
      std::string name = opt->get_name();
      while (!name.empty() && name.front() == '-') name.erase(0, 1);
      if (name.empty() || name == "help") continue;
      if (opt->count() == 0) {
        config[name] = opt->get_expected_max() == 0 ? std::string("false") : opt->get_default_str();
        continue;
      }
      const auto& results = opt->results();
      if (opt->get_expected_max() > 1 || results.size() > 1)
        config[name] = results;
      else
        config[name] = results.empty() ? std::string() : results.front();
    }
    json j;
    j["tool"] = "constprobe";
    j["version"] = kVersion;
    j["command"] = app_->get_name();
    j["config"] = config;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    write_text(path, j.dump(1) + "\n");
  }

  static void write_text(const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw cp::DataError("cannot write " + path);
    out << text;
  }

 private:
  const CLI::App* app_;
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
};

cp::ReadOptions read_options(bool keep_punct) {
  cp::ReadOptions o;
  o.remove_punct = !keep_punct;
  return o;
}

std::vector<int> read_index_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cp::DataError("cannot open " + path);
  std::vector<int> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || v < 0) throw cp::DataError(path + ": bad neuron index '" + tok + "'");
      out.push_back(v);
    }
  }
  return out;
}

std::string join_lines(const std::vector<int>& values) {
  std::string out;
  for (int v : values) out += std::to_string(v) + "\n";
  return out;
}

std::string percent(std::optional<double> v) {
  if (!v) return "undefined";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * *v << "%";
  return s.str();
}

void check_corpus(const cp::Dataset& ds, const std::vector<cp::ConstTree>& corpus, const std::string& what) {
  if (ds.corpus_hash != cp::corpus_hash(corpus))
    throw cp::DataError(what + " was built from a different corpus than the one given");
}

// ---------------------------------------------------------------------------

struct StatsCmd {
  std::string trees, deps, out;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("stats-bracketing", "Overlap between dependency and constituency bracketings");
    c->add_option("--trees", trees, "Constituency treebank (.mrg)")->required()->check(CLI::ExistingFile);
    c->add_option("--deps", deps, "Dependency treebank (CoNLL-X)")->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "Write the counts as JSON");
    sub = c;
  }
  void run() const {
    cp::ReadOptions o;
    o.remove_punct = false;  // CoNLL keeps punctuation tokens
    const auto t = cp::read_const_treebank(trees, o);
    const auto d = cp::read_conll(deps);
    const auto r = cp::bracketing_overlap(t, d);
    std::cout << "dependency bracketings     " << r.dep_total << '\n'
              << "constituency bracketings   " << r.const_total << '\n'
              << "shared                     " << r.shared << '\n'
              << "dependency in constituency " << percent(r.dep_in_const) << '\n'
              << "constituency in dependency " << percent(r.const_in_dep) << '\n';
    if (!r.dep_in_const || !r.const_in_dep) std::cout << "note: overlap is undefined for an empty corpus\n";
    if (out.empty()) return;
    json j;
    j["dep_total"] = r.dep_total;
    j["const_total"] = r.const_total;
    j["shared"] = r.shared;
    j["dep_in_const"] = r.dep_in_const ? json(*r.dep_in_const) : json(nullptr);
    j["const_in_dep"] = r.const_in_dep ? json(*r.const_in_dep) : json(nullptr);
    RunManifest::write_text(out, j.dump(1) + "\n");
    RunManifest m(sub);
    m.input(trees);
    m.input(deps);
    m.output(out);
    m.write(out + ".run.json");
  }
  CLI::App* sub = nullptr;
};

struct NonceCmd {
  std::string trees, deps, pool_deps, out_trees, out_deps, log, sampling = "occurrence";
  double fraction = 1.0 / 3.0;
  std::uint64_t seed = 1;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("nonce", "Replace a fraction of tokens with syntactically equivalent words");
    c->add_option("--trees", trees, "Constituency treebank to corrupt")->required()->check(CLI::ExistingFile);
    c->add_option("--deps", deps, "Aligned CoNLL-X file")->required()->check(CLI::ExistingFile);
    c->add_option("--pool-deps", pool_deps, "CoNLL-X file the replacement pool is built from (default: --deps)")
        ->check(CLI::ExistingFile);
    c->add_option("--fraction", fraction, "Fraction of tokens to replace")->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    c->add_option("--seed", seed)->capture_default_str();
    c->add_option("--sampling", sampling, "occurrence or type")
        ->check(CLI::IsMember({"occurrence", "type"}))
        ->capture_default_str();
    c->add_option("--out-trees", out_trees)->required();
    c->add_option("--out-deps", out_deps)->required();
    c->add_option("--log", log, "Replacement log (default: <out-trees>.log)");
    sub = c;
  }
  void run() const {
    cp::ReadOptions o;
    o.strip_numeric_indices = false;
    o.remove_punct = false;
    o.remove_null = false;
    const auto t = cp::read_const_treebank(trees, o);
    const auto d = cp::read_conll(deps);
    const auto pool = cp::build_pool(pool_deps.empty() ? d : cp::read_conll(pool_deps));
    cp::CorruptOptions opts;
    opts.fraction = fraction;
    opts.seed = seed;
    opts.sampling = sampling == "type" ? cp::PoolSampling::kType : cp::PoolSampling::kOccurrence;
    const auto r = cp::corrupt(t, d, pool, opts);
    const std::string log_path = log.empty() ? out_trees + ".log" : log;
    cp::write_const_treebank(out_trees, r.trees);
    cp::write_conll(out_deps, r.deps);
    cp::write_replacement_log(log_path, r);
    std::cout << "replaced " << r.log.size() << " of " << r.total_tokens << " tokens (target " << r.target
              << ", achieved " << percent(r.achieved_fraction()) << ")\n";
    if (r.log.size() < r.target) std::cerr << "warning: replacement supply ran short of the target\n";
    RunManifest m(sub);
    m.input(trees);
    m.input(deps);
    if (!pool_deps.empty()) m.input(pool_deps);
    m.output(out_trees);
    m.output(out_deps);
    m.output(log_path);
    m.write(out_trees + ".run.json");
  }
  CLI::App* sub = nullptr;
};

struct BuildCmd {
  std::string task, trees, out, control_train, control_trees;
  std::size_t count = 100000, max_sentences = 0, max_length = 20;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> control_seed;
  bool no_diagonal = false, keep_punct = false;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("build", "Build a probing dataset from a treebank");
    c->add_option("--task", task, "chunk-simple, chunk-detailed, lca, lca-eval, seq, seq-lca, seq-depth or seq-unary")
        ->required()
        ->check(CLI::IsMember(
            {"chunk-simple", "chunk-detailed", "lca", "lca-eval", "seq", "seq-lca", "seq-depth", "seq-unary"}));
    c->add_option("--trees", trees)->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "Dataset path (a prefix for --task seq)")->required();
    c->add_option("--count", count, "Sample size for lca")->capture_default_str();
    c->add_option("--seed", seed, "Sampling seed for lca")->capture_default_str();
    c->add_flag("--no-diagonal", no_diagonal, "Exclude i = j pairs from the lca sample");
    c->add_option("--max-sentences", max_sentences, "Sentence cap for chunking (0 = all) and lca-eval")
        ->capture_default_str();
    c->add_option("--max-length", max_length, "Sentence length cap for lca-eval")->capture_default_str();
    c->add_flag("--keep-punct", keep_punct, "Keep punctuation tokens (chunking labels them PCT)");
    c->add_option("--control-seed", control_seed, "Emit the control-task relabeling of the dataset");
    c->add_option("--control-train", control_train,
                  "Training dataset the control mapping is drawn from (default: the dataset being built)")
        ->check(CLI::ExistingFile);
    c->add_option("--control-train-trees", control_trees, "Corpus of --control-train (default: --trees)")
        ->check(CLI::ExistingFile);
    sub = c;
  }
  void run() const {
    const auto corpus = cp::read_const_treebank(trees, read_options(keep_punct));
    RunManifest m(sub);
    m.input(trees);
    std::vector<std::pair<std::string, cp::Dataset>> outputs;
    if (task == "seq" || task.rfind("seq-", 0) == 0) {
      auto all = cp::build_seq_datasets(corpus);
      for (auto& ds : all) {
        if (task == "seq")
          outputs.emplace_back(out + "." + cp::task_name(ds.kind) + ".tsv", std::move(ds));
        else if (cp::task_name(ds.kind) == task)
          outputs.emplace_back(out, std::move(ds));
      }
    } else if (task == "lca") {
      cp::LcaSampleOptions o;
      o.count = count;
      o.seed = seed;
      o.include_diagonal = !no_diagonal;
      auto s = cp::sample_lca(corpus, o);
      outputs.emplace_back(out, std::move(s.dataset));
    } else if (task == "lca-eval") {
      cp::LcaEvalOptions o;
      if (max_sentences > 0) o.max_sentences = max_sentences;
      o.max_length = max_length;
      bool shortfall = false;
      outputs.emplace_back(out, cp::build_lca_eval(corpus, o, &shortfall));
      if (shortfall) std::cerr << "warning: fewer than " << o.max_sentences << " sentences qualified\n";
    } else {
      cp::ChunkOptions o;
      o.detailed = task == "chunk-detailed";
      o.max_sentences = max_sentences;
      outputs.emplace_back(out, cp::build_chunk_dataset(corpus, o));
    }
    if (control_seed) {
      for (auto& [path, ds] : outputs) {
        if (control_train.empty()) {
          ds = cp::make_control(ds, corpus, *control_seed).second;
        } else {
          const auto train_corpus =
              control_trees.empty() ? corpus : cp::read_const_treebank(control_trees, read_options(keep_punct));
          const auto train = cp::read_dataset(control_train);
          check_corpus(train, train_corpus, control_train);
          if (train.kind != ds.kind) throw cp::DataError(control_train + " is a different task");
          cp::ControlMapping mapping(train, train_corpus, *control_seed);
          ds = mapping.relabel(ds, corpus);
        }
      }
      if (!control_train.empty()) m.input(control_train);
      if (!control_trees.empty()) m.input(control_trees);
    }
    for (const auto& [path, ds] : outputs) {
      cp::write_dataset(path, ds);
      m.output(path);
      std::cout << path << ": " << ds.size() << " instances, " << ds.alphabet().size() << " labels\n";
    }
    m.write(out + ".run.json");
  }
  CLI::App* sub = nullptr;
};

struct TrainCmd {
  std::string data, activations, trees, layers = "all", combination = "concat", neurons, out;
  cp::TrainConfig config;
  bool keep_punct = false;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train a linear probe");
    c->add_option("--data", data, "Training dataset")->required()->check(CLI::ExistingFile);
    c->add_option("--activations", activations, "Activation container")->required()->check(CLI::ExistingDirectory);
    c->add_option("--trees", trees, "Corpus the dataset was built from, checked against the container")
        ->check(CLI::ExistingFile);
    c->add_flag("--keep-punct", keep_punct, "Read --trees with punctuation");
    c->add_option("--layers", layers, "Comma-separated layer ids, 'all', or 'recon'")->capture_default_str();
    c->add_option("--combination", combination, "concat, avg, max_s, left or right")->capture_default_str();
    c->add_option("--neurons", neurons, "File of neuron indices to keep")->check(CLI::ExistingFile);
    c->add_option("--epochs", config.epochs)->capture_default_str();
    c->add_option("--lr", config.learning_rate)->capture_default_str();
    c->add_option("--l1", config.l1)->capture_default_str();
    c->add_option("--l2", config.l2)->capture_default_str();
    c->add_option("--batch-size", config.batch_size)->capture_default_str();
    c->add_option("--seed", config.seed)->capture_default_str();
    c->add_option("--out", out, "Model path (weights go to <out>.bin)")->required();
    sub = c;
  }
  void run() const {
    config.validate();
    const auto ds = cp::read_dataset(data);
    const auto container = cp::ActivationContainer::load(activations);
    RunManifest m(sub);
    m.input(data);
    m.input(activations);
    if (!trees.empty()) {
      const auto corpus = cp::read_const_treebank(trees, read_options(keep_punct));
      check_corpus(ds, corpus, data);
      cp::check_alignment(container, corpus);
      m.input(trees);
    }
    cp::FeatureDescriptor d;
    d.layers = layers == "recon" ? cp::reconstruction_layers(container.layer_count())
                                 : cp::FeatureDescriptor::parse_layers(layers);
    d.combination = cp::parse_combination(combination);
    if (!neurons.empty()) {
      d.neurons = read_index_list(neurons);
      m.input(neurons);
    }
    const auto model = cp::train(ds, container, d, config);
    model.save(out);
    m.output(out);
    m.output(out + ".bin");
    m.write(out + ".run.json");
    std::cout << "trained " << model.classes.size() << " classes x " << model.feature_count()
              << " features; final loss " << (model.loss_history.empty() ? 0.0 : model.loss_history.back()) << '\n';
  }
  CLI::App* sub = nullptr;
};

struct EvalCmd {
  std::string model, data, activations, control_model, control_data, out;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Evaluate a probe, optionally against a control task");
    c->add_option("--model", model)->required()->check(CLI::ExistingFile);
    c->add_option("--data", data)->required()->check(CLI::ExistingFile);
    c->add_option("--activations", activations)->required()->check(CLI::ExistingDirectory);
    auto* cm = c->add_option("--control-model", control_model, "Probe trained on the control task")
                   ->check(CLI::ExistingFile);
    auto* cd = c->add_option("--control-data", control_data, "Control relabeling of --data")->check(CLI::ExistingFile);
    cm->needs(cd);
    cd->needs(cm);
    c->add_option("--out", out, "Write the report as JSON");
    sub = c;
  }
  void run() const {
    const auto container = cp::ActivationContainer::load(activations);
    const auto m = cp::ProbeModel::load(model);
    const auto ds = cp::read_dataset(data);
    const auto report = cp::evaluate(m, ds, container);
    json j = json::parse(report.to_json());
    std::cout << report.to_text();
    RunManifest man(sub);
    man.input(model);
    man.input(data);
    man.input(activations);
    if (!control_model.empty()) {
      const auto cm = cp::ProbeModel::load(control_model);
      const auto cds = cp::read_dataset(control_data);
      const auto creport = cp::evaluate(cm, cds, container);
      const double sel = cp::selectivity(report, creport);
      std::cout << std::fixed << std::setprecision(2) << "\ncontrol accuracy  " << 100 * creport.accuracy()
                << "%\nselectivity       " << 100 * sel << " pp\n";
      j = json{{"task", j}, {"control", json::parse(creport.to_json())}, {"selectivity", sel}};
      man.input(control_model);
      man.input(control_data);
    }
    if (out.empty()) return;
    RunManifest::write_text(out, j.dump(1) + "\n");
    man.output(out);
    man.write(out + ".run.json");
  }
  CLI::App* sub = nullptr;
};

struct RankCmd {
  std::string model, out, order_out, activations, spread_csv, overlap_with, overlap_csv;
  double top = 0.1;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("rank-neurons", "Rank input features by probe weight");
    c->add_option("--model", model)->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "Ranking JSON")->required();
    c->add_option("--order-out", order_out, "Ranked feature indices, one per line");
    auto* a = c->add_option("--activations", activations, "Container the model was trained on (for --spread-csv)")
                  ->check(CLI::ExistingDirectory);
    c->add_option("--spread-csv", spread_csv, "Per-layer counts among the top features")->needs(a);
    c->add_option("--top", top, "Top fraction used for the layer spread")->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    auto* o = c->add_option("--overlap-with", overlap_with, "Another ranking JSON to compare against")
                  ->check(CLI::ExistingFile);
    c->add_option("--overlap-csv", overlap_csv, "Overlap at fractions 0.01 .. 1.00")->needs(o);
    sub = c;
  }
  void run() const {
    const auto m = cp::ProbeModel::load(model);
    const auto ranking = cp::rank_neurons(m);
    RunManifest man(sub);
    man.input(model);
    RunManifest::write_text(out, ranking.to_json() + "\n");
    man.output(out);
    if (!order_out.empty()) {
      RunManifest::write_text(order_out, join_lines(ranking.order));
      man.output(order_out);
    }
    if (!spread_csv.empty()) {
      const auto container = cp::ActivationContainer::load(activations);
      const cp::FeatureExtractor fx(container, m.descriptor, cp::is_pair_task(m.task));
      const auto spread = cp::layer_spread(ranking, top, fx.feature_layers(), container.layer_count());
      std::size_t total = 0;
      for (auto v : spread) total += v;
      std::ostringstream csv;
      csv << "layer,count,fraction\n" << std::setprecision(17);
      for (std::size_t l = 0; l < spread.size(); ++l)
        csv << l << ',' << spread[l] << ',' << (total ? static_cast<double>(spread[l]) / total : 0.0) << '\n';
      RunManifest::write_text(spread_csv, csv.str());
      man.input(activations);
      man.output(spread_csv);
    }
    if (!overlap_csv.empty()) {
      std::ifstream in(overlap_with);
      std::stringstream buf;
      buf << in.rdbuf();
      const auto other = cp::NeuronRanking::from_json(buf.str());
      std::ostringstream csv;
      csv << "fraction,overlap\n" << std::setprecision(17);
      for (int k = 1; k <= 100; ++k) {
        const double f = k / 100.0;
        csv << f << ',' << cp::ranking_overlap(ranking, other, f) << '\n';
      }
      RunManifest::write_text(overlap_csv, csv.str());
      man.input(overlap_with);
      man.output(overlap_csv);
    }
    man.write(out + ".run.json");
    std::cout << "ranked " << ranking.size() << " features over " << ranking.classes.size() << " classes\n";
    if (ranking.zero_rows) std::cerr << "warning: " << ranking.zero_rows << " classes have all-zero weights\n";
  }
  CLI::App* sub = nullptr;
};

struct SelectCmd {
  std::string ranking, mode = "top", out;
  double fraction = 0.1;
  std::uint64_t seed = 1;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("select-neurons", "Pick a neuron subset from a ranking");
    c->add_option("--ranking", ranking)->required()->check(CLI::ExistingFile);
    c->add_option("--mode", mode, "top, bottom or random")
        ->check(CLI::IsMember({"top", "bottom", "random"}))
        ->capture_default_str();
    c->add_option("--fraction", fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    c->add_option("--seed", seed)->capture_default_str();
    c->add_option("--out", out, "Index list, one per line")->required();
    sub = c;
  }
  void run() const {
    std::ifstream in(ranking);
    std::stringstream buf;
    buf << in.rdbuf();
    const auto r = cp::NeuronRanking::from_json(buf.str());
    const auto subset = cp::select_subset(r, cp::parse_subset_mode(mode), fraction, seed);
    RunManifest::write_text(out, join_lines(subset));
    RunManifest man(sub);
    man.input(ranking);
    man.output(out);
    man.write(out + ".run.json");
    std::cout << "selected " << subset.size() << " of " << r.size() << " features\n";
  }
  CLI::App* sub = nullptr;
};

struct ReconstructCmd {
  std::string trees, activations, lca_model, depth_model, unary_model, out, triples_out;
  bool oracle = false, keep_punct = false;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("reconstruct", "Rebuild trees from predicted sequence labels");
    c->add_option("--trees", trees, "Corpus supplying tokens (and gold labels for --oracle)")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_flag("--keep-punct", keep_punct);
    c->add_option("--activations", activations)->check(CLI::ExistingDirectory);
    c->add_option("--lca-model", lca_model)->check(CLI::ExistingFile);
    c->add_option("--depth-model", depth_model)->check(CLI::ExistingFile);
    c->add_option("--unary-model", unary_model)->check(CLI::ExistingFile);
    c->add_flag("--oracle", oracle, "Use gold labels instead of model predictions");
    c->add_option("--out", out, "Predicted treebank")->required();
    c->add_option("--triples-out", triples_out, "Also write the label triples");
    sub = c;
  }
  void run() const {
    const auto corpus = cp::read_const_treebank(trees, read_options(keep_punct));
    RunManifest man(sub);
    man.input(trees);
    std::vector<std::vector<cp::SeqLabelTriple>> triples(corpus.size());
    if (oracle) {
      for (std::size_t s = 0; s < corpus.size(); ++s) triples[s] = cp::encode(cp::canonicalize(corpus[s]));
    } else {
      if (activations.empty() || lca_model.empty() || depth_model.empty() || unary_model.empty())
        throw std::invalid_argument("reconstruct needs --activations and all three models unless --oracle is given");
      const auto container = cp::ActivationContainer::load(activations);
      cp::check_alignment(container, corpus);
      const auto lca = cp::ProbeModel::load(lca_model);
      const auto depth = cp::ProbeModel::load(depth_model);
      const auto unary = cp::ProbeModel::load(unary_model);
      const std::pair<const cp::ProbeModel*, cp::TaskKind> expect[] = {
          {&lca, cp::TaskKind::kSeqLca}, {&depth, cp::TaskKind::kSeqDepth}, {&unary, cp::TaskKind::kSeqUnary}};
      for (const auto& [mod, kind] : expect)
        if (mod->task != kind)
          throw cp::DataError("expected a " + cp::task_name(kind) + " model, got " + cp::task_name(mod->task));
      std::vector<cp::Instance> pairs, singles;
      for (std::size_t s = 0; s < corpus.size(); ++s) {
        const int n = static_cast<int>(corpus[s].size());
        for (int i = 0; i < n; ++i) {
          if (i + 1 < n) pairs.push_back({s, i, i + 1, ""});
          singles.push_back({s, i, i, ""});
        }
      }
      const auto l = cp::predict_labels(lca, pairs, container, true);
      const auto d = cp::predict_labels(depth, pairs, container, true);
      const auto u = cp::predict_labels(unary, singles, container, false);
      std::size_t p = 0, q = 0;
      for (std::size_t s = 0; s < corpus.size(); ++s) {
        const int n = static_cast<int>(corpus[s].size());
        for (int i = 0; i < n; ++i) {
          cp::SeqLabelTriple t;
          if (i + 1 < n) {
            t.lca_label = l[p];
            t.depth = cp::DepthCode::parse(d[p]);
            ++p;
          } else {
            t.lca_label = std::string(cp::kSentinel);
            t.depth = cp::DepthCode::sentinel();
          }
          t.unary_label = u[q++];
          triples[s].push_back(std::move(t));
        }
      }
      man.input(activations);
      man.input(lca_model);
      man.input(depth_model);
      man.input(unary_model);
    }
    std::vector<cp::ConstTree> predicted(corpus.size());
    std::string triple_text;
    for (std::size_t s = 0; s < corpus.size(); ++s) {
      predicted[s] = cp::decode(triples[s], corpus[s].tokens, corpus[s].sentence_id);
      if (!triples_out.empty()) triple_text += cp::format_triples(corpus[s].tokens, triples[s]) + "\n";
    }
    cp::write_const_treebank(out, predicted);
    man.output(out);
    if (!triples_out.empty()) {
      RunManifest::write_text(triples_out, triple_text);
      man.output(triples_out);
    }
    man.write(out + ".run.json");
    std::cout << "reconstructed " << predicted.size() << " trees\n";
  }
  CLI::App* sub = nullptr;
};

std::vector<cp::ConstTree> read_gold(const std::string& path, bool keep_punct, bool canonical) {
  auto gold = cp::read_const_treebank(path, read_options(keep_punct));
  if (canonical)
    for (auto& t : gold) t = cp::canonicalize(t);
  return gold;
}

struct ScoreCmd {
  std::string gold, pred, out, csv;
  bool canonical = false, keep_punct = false;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("score", "Labeled bracket scoring");
    c->add_option("--gold", gold)->required()->check(CLI::ExistingFile);
    c->add_option("--pred", pred)->required()->check(CLI::ExistingFile);
    c->add_flag("--canonical-gold", canonical, "Collapse unary chains in the gold trees first");
    c->add_flag("--keep-punct", keep_punct);
    c->add_option("--out", out, "Write the score as JSON");
    c->add_option("--csv", csv, "Per-sentence F1");
    sub = c;
  }
  void run() const {
    const auto g = read_gold(gold, keep_punct, canonical);
    const auto p = cp::read_const_treebank(pred, read_options(keep_punct));
    const auto s = cp::score(g, p);
    std::cout << s.to_text();
    RunManifest man(sub);
    man.input(gold);
    man.input(pred);
    if (!csv.empty()) {
      RunManifest::write_text(csv, s.sentence_csv());
      man.output(csv);
    }
    if (!out.empty()) {
      RunManifest::write_text(out, s.to_json() + "\n");
      man.output(out);
    }
    if (!out.empty() || !csv.empty()) man.write((out.empty() ? csv : out) + ".run.json");
  }
  CLI::App* sub = nullptr;
};

struct CompareCmd {
  std::string gold, out;
  std::vector<std::string> preds;
  bool canonical = false, keep_punct = false;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("compare", "Pairwise agreement between reconstructed treebanks");
    c->add_option("--gold", gold)->required()->check(CLI::ExistingFile);
    c->add_option("--pred", preds, "NAME=PATH, repeatable")->required();
    c->add_flag("--canonical-gold", canonical);
    c->add_flag("--keep-punct", keep_punct);
    c->add_option("--out", out, "Write the matrices as JSON");
    sub = c;
  }
  void run() const {
    const auto g = read_gold(gold, keep_punct, canonical);
    RunManifest man(sub);
    man.input(gold);
    std::vector<std::pair<std::string, std::vector<cp::ConstTree>>> models;
    for (const auto& spec : preds) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--pred expects NAME=PATH, got " + spec);
      const std::string path = spec.substr(eq + 1);
      if (!fs::is_regular_file(path)) throw std::invalid_argument("no such file: " + path);
      models.emplace_back(spec.substr(0, eq), cp::read_const_treebank(path, read_options(keep_punct)));
      man.input(path);
    }
    const auto cmp = cp::compare_models(g, models);
    std::cout << cmp.to_text();
    if (out.empty()) return;
    RunManifest::write_text(out, cmp.to_json() + "\n");
    man.output(out);
    man.write(out + ".run.json");
  }
  CLI::App* sub = nullptr;
};

struct SynthCmd {
  std::string trees, out, mode = "gaussian", signal_layers, plant, model_id = "synthetic";
  cp::SynthOptions opts;
  bool keep_punct = false;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("synth", "Write a synthetic activation container aligned to a treebank");
    c->add_option("--trees", trees)->required()->check(CLI::ExistingFile);
    c->add_flag("--keep-punct", keep_punct);
    c->add_option("--out", out, "Container directory")->required();
    c->add_option("--mode", mode, "gaussian, type_static or structured")
        ->check(CLI::IsMember({"gaussian", "type_static", "structured"}))
        ->capture_default_str();
    c->add_option("--width", opts.width)->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--layers", opts.layer_count)->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--seed", opts.seed)->capture_default_str();
    c->add_option("--signal-strength", opts.signal_strength)->capture_default_str();
    c->add_option("--signal-layers", signal_layers, "Comma-separated layers carrying the planted signal");
    c->add_option("--plant", plant, "Token task to plant in structured mode")
        ->check(CLI::IsMember({"chunk-simple", "chunk-detailed", "seq-unary"}));
    c->add_option("--model-id", model_id)->capture_default_str();
    sub = c;
  }
  void run() {
    const auto corpus = cp::read_const_treebank(trees, read_options(keep_punct));
    opts.mode = cp::parse_synth_mode(mode);
    opts.model_id = model_id;
    opts.signal_layers = cp::FeatureDescriptor::parse_layers(signal_layers);
    if (opts.mode == cp::SynthMode::kStructured) {
      if (plant.empty()) throw std::invalid_argument("structured mode needs --plant");
      opts.planted_labels.clear();
      for (const auto& t : corpus) {
        if (plant == "seq-unary") {
          std::vector<std::string> labels;
          for (const auto& tr : cp::encode(cp::canonicalize(t))) labels.push_back(tr.unary_label);
          opts.planted_labels.push_back(std::move(labels));
        } else {
          opts.planted_labels.push_back(cp::chunk_labels(t, plant == "chunk-detailed"));
        }
      }
    }
    const auto r = cp::synth_container(corpus, opts);
    r.container.save(out);
    RunManifest man(sub);
    man.input(trees);
    man.output(out);
    man.write((fs::path(out) / "run.json").string());
    std::cout << "wrote " << r.container.sentence_count() << " sentences, " << opts.layer_count << " layers x "
              << opts.width << '\n';
  }
  CLI::App* sub = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probing language model activations for constituency structure"};
  app.set_version_flag("--version", std::string("constprobe ") + kVersion);
  app.set_config("--config", "", "Read options from a key = value file");
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Cap on worker threads");

  StatsCmd stats;
  NonceCmd nonce;
  BuildCmd build;
  TrainCmd train;
  EvalCmd eval;
  RankCmd rank;
  SelectCmd select;
  ReconstructCmd reconstruct;
  ScoreCmd score;
  CompareCmd compare;
  SynthCmd synth;
  stats.add(app);
  nonce.add(app);
  build.add(app);
  train.add(app);
  eval.add(app);
  rank.add(app);
  select.add(app);
  reconstruct.add(app);
  score.add(app);
  compare.add(app);
  synth.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::vector<std::pair<CLI::App*, std::function<void()>>> dispatch = {
      {stats.sub, [&] { stats.run(); }},         {nonce.sub, [&] { nonce.run(); }},
      {build.sub, [&] { build.run(); }},         {train.sub, [&] { train.run(); }},
      {eval.sub, [&] { eval.run(); }},           {rank.sub, [&] { rank.run(); }},
      {select.sub, [&] { select.run(); }},       {reconstruct.sub, [&] { reconstruct.run(); }},
      {score.sub, [&] { score.run(); }},         {compare.sub, [&] { compare.run(); }},
      {synth.sub, [&] { synth.run(); }},
  };
  try {
    if (threads > 0) cp::set_default_threads(threads);
    for (const auto& [sub, fn] : dispatch)
      if (sub->parsed()) fn();
  } catch (const cp::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
