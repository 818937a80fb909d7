#pragma once

#include <set>
#include <string>
#include <vector>

#include "ksx/error.hpp"
#include "ksx/explainers.hpp"
#include "ksx/graph.hpp"
#include "ksx/io.hpp"
#include "ksx/ks_explainer.hpp"
#include "ksx/model.hpp"
#include "ksx/train.hpp"

namespace ksx {

struct BenchConfig {
  Split split = Split::Test;
  std::vector<std::string> methods = {"gnnexplainer", "gradcam", "gradcampp", "graphlrp", "ks-gnnexplainer",
                                      "random", "oracle"};
  double ablation_threshold = 0.5;
  double flag_fraction = 0.30;
};

// Everything a CLI run needs. One global seed feeds every seeded component.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "ksx-out";
  std::string dataset;     // defaults to <out>/dataset.json
  std::string checkpoint;  // defaults to <out>/model.json
  SyntheticConfig synthetic;
  Architecture model;
  TrainConfig train;
  BatchExplainConfig batch;  // batch.mask doubles as the instance explainer config
  BenchConfig bench;

  std::string dataset_path() const { return dataset.empty() ? out + "/dataset.json" : dataset; }
  std::string checkpoint_path() const { return checkpoint.empty() ? out + "/model.json" : checkpoint; }

  // Pushes the global seed into every component.
  void resolve() {
    synthetic.seed = seed;
    train.seed = seed;
    batch.mask.seed = seed;
  }

  void validate() const {
    synthetic.validate();
    train.validate();
    batch.validate();
    require(model.layers >= 1 && model.hidden >= 1, ErrorKind::Config, "model: layers and hidden must be positive");
    require(model.epsilons.size() == static_cast<std::size_t>(model.layers), ErrorKind::Config,
            "model: one epsilon per layer required");
    for (const auto& m : bench.methods) {
      const auto& known = explainer_names();
      require(std::find(known.begin(), known.end(), m) != known.end(), ErrorKind::Config, "unknown method '" + m + "'");
    }
    require(bench.flag_fraction >= 0.0 && bench.flag_fraction <= 1.0, ErrorKind::Config,
            "bench: flag_fraction must lie in [0, 1]");
  }
};

inline std::string to_string(KsMode m) { return m == KsMode::SoftConfidence ? "soft" : "binary"; }

inline KsMode parse_ks_mode(const std::string& s) {
  if (s == "soft") return KsMode::SoftConfidence;
  if (s == "binary") return KsMode::BinaryLabel;
  throw Error(ErrorKind::Config, "unknown ks mode '" + s + "' (expected soft or binary)");
}

inline Json to_json(const RunConfig& c) {
  const auto& s = c.synthetic;
  const auto& b = c.batch;
  const auto& m = b.mask;
  return {
      {"seed", c.seed},
      {"out", c.out},
      {"dataset", c.dataset_path()},
      {"checkpoint", c.checkpoint_path()},
      {"synthetic",
       {{"num_graphs", s.num_graphs}, {"min_nodes", s.min_nodes}, {"max_nodes", s.max_nodes}, {"k", s.k},
        {"feature_dim", s.feature_dim}, {"motif_size", s.motif_size}, {"motif_feature_shift", s.motif_feature_shift},
        {"coordinate_noise", s.coordinate_noise}, {"extent", s.extent}, {"motif_clearance", s.motif_clearance},
        {"train_fraction", s.train_fraction}, {"val_fraction", s.val_fraction}}},
      {"model", {{"layers", c.model.layers}, {"hidden", c.model.hidden}, {"epsilons", c.model.epsilons}}},
      {"train",
       {{"learning_rate", c.train.learning_rate}, {"epochs", c.train.epochs}, {"weight_decay", c.train.weight_decay},
        {"init_gain", c.train.init_gain}}},
      {"explain",
       {{"iterations", m.iterations}, {"learning_rate", m.learning_rate}, {"size_penalty", m.size_penalty},
        {"entropy_penalty", m.entropy_penalty}, {"init_logit", m.init_logit}}},
      {"batch",
       {{"lambda_similarity", b.lambda_similarity}, {"lambda_ks_sum", b.lambda_ks_sum},
        {"lambda_ks_var", b.lambda_ks_var}, {"samples", b.samples}, {"ks_mode", to_string(b.ks_mode)},
        {"max_batch", b.max_batch}}},
      {"bench",
       {{"split", to_string(c.bench.split)}, {"methods", c.bench.methods},
        {"ablation_threshold", c.bench.ablation_threshold}, {"flag_fraction", c.bench.flag_fraction}}},
  };
}

namespace detail {

// Copies the fields present in `j` into the targets, rejecting unknown keys.
class Section {
 public:
  Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
    require(j_.is_object(), ErrorKind::Config, "config section '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      require(seen_.count(k) > 0, ErrorKind::Config, "unknown config key '" + name_ + "." + k + "'");
  }

  template <class T>
  Section& opt(const char* key, T& target) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        target = it->template get<T>();
      } catch (const Json::exception&) {
        throw Error(ErrorKind::Config, "config key '" + name_ + "." + key + "' has the wrong type");
      }
    }
    return *this;
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

 private:
  const Json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig config_from_json(const Json& j) {
  RunConfig c;
  detail::Section top(j, "config");
  top.opt("seed", c.seed).opt("out", c.out).opt("dataset", c.dataset).opt("checkpoint", c.checkpoint);
  if (const Json* s = top.sub("synthetic")) {
    auto& x = c.synthetic;
    detail::Section(*s, "synthetic")
        .opt("num_graphs", x.num_graphs)
        .opt("min_nodes", x.min_nodes)
        .opt("max_nodes", x.max_nodes)
        .opt("k", x.k)
        .opt("feature_dim", x.feature_dim)
        .opt("motif_size", x.motif_size)
        .opt("motif_feature_shift", x.motif_feature_shift)
        .opt("coordinate_noise", x.coordinate_noise)
        .opt("extent", x.extent)
        .opt("motif_clearance", x.motif_clearance)
        .opt("train_fraction", x.train_fraction)
        .opt("val_fraction", x.val_fraction);
  }
  if (const Json* s = top.sub("model")) {
    detail::Section(*s, "model").opt("layers", c.model.layers).opt("hidden", c.model.hidden).opt("epsilons", c.model.epsilons);
    if (!s->contains("epsilons")) c.model.epsilons.assign(c.model.layers, 0.0);
  }
  if (const Json* s = top.sub("train")) {
    detail::Section(*s, "train")
        .opt("learning_rate", c.train.learning_rate)
        .opt("epochs", c.train.epochs)
        .opt("weight_decay", c.train.weight_decay)
        .opt("init_gain", c.train.init_gain);
  }
  if (const Json* s = top.sub("explain")) {
    auto& m = c.batch.mask;
    detail::Section(*s, "explain")
        .opt("iterations", m.iterations)
        .opt("learning_rate", m.learning_rate)
        .opt("size_penalty", m.size_penalty)
        .opt("entropy_penalty", m.entropy_penalty)
        .opt("init_logit", m.init_logit);
  }
  if (const Json* s = top.sub("batch")) {
    auto& b = c.batch;
    std::string mode = to_string(b.ks_mode);
    detail::Section(*s, "batch")
        .opt("lambda_similarity", b.lambda_similarity)
        .opt("lambda_ks_sum", b.lambda_ks_sum)
        .opt("lambda_ks_var", b.lambda_ks_var)
        .opt("samples", b.samples)
        .opt("ks_mode", mode)
        .opt("max_batch", b.max_batch);
    b.ks_mode = parse_ks_mode(mode);
  }
  if (const Json* s = top.sub("bench")) {
    std::string split = to_string(c.bench.split);
    detail::Section(*s, "bench")
        .opt("split", split)
        .opt("methods", c.bench.methods)
        .opt("ablation_threshold", c.bench.ablation_threshold)
        .opt("flag_fraction", c.bench.flag_fraction);
    try {
      c.bench.split = parse_split(split);
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, std::string("bench.split: ") + e.what());
    }
  }
  return c;
}

}  // namespace ksx
