// ksx: generate synthetic cell graphs, train the classifier, explain it and
// benchmark the explanations. Every output embeds the resolved run config.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ksx/config.hpp"
#include "ksx/io.hpp"
#include "ksx/ks_bench.hpp"
#include "ksx/pipeline.hpp"
#include "ksx/svg.hpp"
#include "ksx/train.hpp"

namespace fs = std::filesystem;
using namespace ksx;

namespace {

struct Options {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string methods;
  std::string scope = "instance";
  std::string ks_mode;
  bool svg = false;
};

struct Run {
  std::string command;
  Options opt;
  RunConfig cfg;

  Json meta() const {
    Json j = {{"command", command}};
    if (command == "explain") j["scope"] = opt.scope;
    j["config"] = to_json(cfg);
    return j;
  }
  fs::path out(const std::string& name) const { return fs::path(cfg.out) / name; }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

RunConfig resolve_config(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : config_from_json(read_json(o.config_path));
  if (!o.out.empty()) c.out = o.out;
  if (o.seed) c.seed = *o.seed;
  if (!o.methods.empty()) c.bench.methods = split_list(o.methods);
  if (!o.ks_mode.empty()) c.batch.ks_mode = parse_ks_mode(o.ks_mode);
  c.resolve();
  c.validate();
  return c;
}

GnnModel load_checked_model(const Run& r, const Dataset& ds) {
  GnnModel m = load_model(r.cfg.checkpoint_path());
  require(m.arch().num_classes == ds.num_classes, ErrorKind::DimensionMismatch,
          "checkpoint class count does not match the dataset");
  return m;
}

fs::path maps_path(const Run& r, const std::string& method) { return r.out("importance_" + method + ".json"); }

void cmd_gen(const Run& r) {
  const Dataset ds = generate_synthetic(r.cfg.synthetic);
  save_graphs(r.cfg.dataset_path(), ds, r.meta());
}

void cmd_train(const Run& r) {
  const Dataset ds = load_graphs(r.cfg.dataset_path());
  require(!ds.graphs.empty(), ErrorKind::InvalidArgument, "dataset has no graphs");
  Architecture arch = r.cfg.model;
  arch.input_dim = static_cast<int>(ds.graphs.front().feature_dim());
  arch.num_classes = ds.num_classes;
  const TrainResult res = train(arch, ds, r.cfg.train);
  save_model(r.cfg.checkpoint_path(), res.model, r.meta());
  CsvWriter csv({"epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"}, r.meta());
  for (const auto& m : res.history) csv.add(m.epoch, m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy);
  csv.save(r.out("train_metrics.csv"));
}

void cmd_explain(const Run& r) {
  const Dataset ds = load_graphs(r.cfg.dataset_path());
  const GnnModel model = load_checked_model(r, ds);
  const auto graphs = split_graphs(ds, r.cfg.bench.split);
  const auto truth = split_truth(ds, r.cfg.bench.split);

  if (r.opt.scope == "batch") {
    std::vector<NodeImportanceMap> maps(graphs.size());
    Json batches = Json::array();
    for (const auto& batch : same_label_batches(graphs, r.cfg.batch.max_batch, r.cfg.batch.mask.seed)) {
      std::vector<CellGraph> members;
      for (std::size_t i : batch) members.push_back(graphs[i]);
      BatchExplanation ex = explain_batch(model, members, r.cfg.batch);
      Json bj = batch_to_json(ex);
      bj["label"] = members.front().label();
      batches.push_back(std::move(bj));
      for (std::size_t b = 0; b < batch.size(); ++b) maps[batch[b]] = std::move(ex.maps[b]);
    }
    Json j = r.meta();
    j["maps"] = maps_to_json(maps);
    write_json(maps_path(r, "ks-gnnexplainer"), j);
    Json bj = r.meta();
    bj["batches"] = std::move(batches);
    write_json(r.out("batch_explanations.json"), bj);
    return;
  }
  for (const auto& method : r.cfg.bench.methods) {
    const auto maps = explain_graphs(method, model, graphs, truth ? &*truth : nullptr, r.cfg.batch);
    Json j = r.meta();
    j["maps"] = maps_to_json(maps);
    write_json(maps_path(r, method), j);
  }
}

std::vector<NodeImportanceMap> load_maps(const Run& r, const std::string& method, const std::vector<CellGraph>& graphs) {
  const fs::path p = maps_path(r, method);
  require(fs::exists(p), ErrorKind::Io, "missing " + p.string() + "; run explain for '" + method + "' first");
  const Json j = read_json(p);
  require(j.contains("maps"), ErrorKind::Parse, p.string() + ": no 'maps' field");
  auto maps = maps_from_json(j.at("maps"));
  require(maps.size() == graphs.size(), ErrorKind::DimensionMismatch,
          p.string() + ": map count does not match the evaluated split");
  for (std::size_t i = 0; i < maps.size(); ++i)
    require(maps[i].graph_id == graphs[i].id() && maps[i].scores.size() == graphs[i].num_nodes(),
            ErrorKind::DimensionMismatch, p.string() + ": map for graph '" + maps[i].graph_id + "' does not match");
  return maps;
}

void cmd_bench(const Run& r) {
  const Dataset ds = load_graphs(r.cfg.dataset_path());
  const GnnModel model = load_checked_model(r, ds);
  const auto graphs = split_graphs(ds, r.cfg.bench.split);
  const auto truth = split_truth(ds, r.cfg.bench.split);

  CsvWriter ks_csv({"explainer", "D", "p_value", "n", "m"}, r.meta());
  CsvWriter ecdf_csv({"explainer", "fraction", "F_most", "F_least"}, r.meta());
  CsvWriter fid_csv({"explainer", "threshold", "score"}, r.meta());
  CsvWriter f1_csv({"explainer", "f1_tumor", "f1_non_tumor", "f1_macro"}, r.meta());
  std::vector<Series> fid_series;
  for (const auto& method : r.cfg.bench.methods) {
    const auto maps = load_maps(r, method, graphs);
    const MethodBench b = bench_method(method, model, graphs, maps, truth ? &*truth : nullptr);
    ks_csv.add(method, b.ks.ks.statistic, b.ks.ks.p_value, b.ks.ks.n, b.ks.ks.m);
    const auto& e = b.ks.ecdf;
    for (std::size_t j = 0; j < e.fractions.size(); ++j) ecdf_csv.add(method, e.fractions[j], e.most[j], e.least[j]);
    for (const auto& [t, s] : b.fidelity) fid_csv.add(method, t, s);
    if (b.f1) f1_csv.add(method, b.f1->tumor, b.f1->non_tumor, b.f1->macro);
    if (r.opt.svg) {
      Series most{"most important", {}}, least{"least important", {}};
      for (std::size_t j = 0; j < e.fractions.size(); ++j) {
        most.points.emplace_back(e.fractions[j], e.most[j]);
        least.points.emplace_back(e.fractions[j], e.least[j]);
      }
      write_text(r.out("ecdf_" + method + ".svg"),
                 line_chart(method + ": label changes under removal", "fraction removed", "graphs changed",
                            {most, least}, 0, 1, 0, 1));
      fid_series.push_back({method, b.fidelity});
    }
  }
  ks_csv.save(r.out("ks_report.csv"));
  ecdf_csv.save(r.out("ecdf.csv"));
  fid_csv.save(r.out("fidelity_curve.csv"));
  if (truth) f1_csv.save(r.out("nuclei_f1.csv"));
  if (r.opt.svg)
    write_text(r.out("fidelity_curve.svg"),
               line_chart("Fidelity by importance threshold", "threshold", "fidelity", fid_series, 0, 1, -1, 1));
}

void cmd_ablate(const Run& r) {
  const Dataset ds = load_graphs(r.cfg.dataset_path());
  const GnnModel model = load_checked_model(r, ds);
  const auto graphs = split_graphs(ds, r.cfg.bench.split);
  const auto rows = ablate(model, graphs, r.cfg.batch, r.cfg.bench.ablation_threshold);
  CsvWriter csv({"configuration", "mi", "similarity", "ks_sum", "ks_var", "fidelity"}, r.meta());
  for (const auto& row : rows) csv.add(row.name, int(row.mi), int(row.similarity), int(row.ks_sum), int(row.ks_var), row.fidelity);
  csv.save(r.out("ablation.csv"));
}

void cmd_validate(const Run& r) {
  const Dataset ds = load_graphs(r.cfg.dataset_path());
  const GnnModel model = load_checked_model(r, ds);
  Architecture arch = model.arch();
  const auto test_idx = ds.indices(r.cfg.bench.split);

  const auto baseline = per_class_accuracy(train(arch, ds, r.cfg.train).model, ds, Split::Test);
  std::vector<std::string> header = {"explainer", "D", "p_value"};
  for (int c = 0; c < ds.num_classes; ++c) {
    header.push_back("class" + std::to_string(c) + "_baseline");
    header.push_back("class" + std::to_string(c) + "_augmented");
  }
  CsvWriter csv(header, r.meta());
  for (const auto& method : r.cfg.bench.methods) {
    const auto maps = explain_graphs(method, model, ds.graphs, ds.ground_truth ? &*ds.ground_truth : nullptr, r.cfg.batch);
    std::vector<CellGraph> test_graphs;
    std::vector<NodeImportanceMap> test_maps;
    for (std::size_t i : test_idx) {
      test_graphs.push_back(ds.graphs[i]);
      test_maps.push_back(maps[i]);
    }
    const KsReport ks = ks_bench(method, model, test_graphs, test_maps);
    const auto augmented = retrain_with_flags(arch, ds, maps, r.cfg.train, r.cfg.bench.flag_fraction);
    std::vector<std::string> cells = {method, format_number(ks.ks.statistic), format_number(ks.ks.p_value)};
    for (int c = 0; c < ds.num_classes; ++c) {
      cells.push_back(format_number(baseline[c]));
      cells.push_back(format_number(augmented[c]));
    }
    csv.add_row(cells);
  }
  csv.save(r.out("validation.csv"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainer benchmarking on cell graphs"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config_path, "JSON run config");
  app.add_option("--out", opt.out, "output directory");
  app.add_option("--seed", opt.seed, "global seed");
  app.add_option("--methods", opt.methods, "comma-separated explainers");
  app.add_option("--scope", opt.scope, "explain scope")->check(CLI::IsMember({"instance", "batch"}));
  app.add_option("--ks-mode", opt.ks_mode, "per-graph KS mode")->check(CLI::IsMember({"soft", "binary"}));
  app.add_flag("--svg", opt.svg, "also write SVG charts");
  app.fallthrough();

  const std::vector<std::pair<std::string, void (*)(const Run&)>> commands = {
      {"gen", cmd_gen},           {"train", cmd_train},   {"explain", cmd_explain},
      {"bench", cmd_bench},       {"ablate", cmd_ablate}, {"validate", cmd_validate}};
  const std::vector<std::string> help = {"write a synthetic dataset",
                                         "train the classifier",
                                         "write importance maps",
                                         "KS report, ECDFs, fidelity curves and F1",
                                         "fidelity with objective terms toggled",
                                         "retrain with importance flags"};
  for (std::size_t i = 0; i < commands.size(); ++i) app.add_subcommand(commands[i].first, help[i]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "error: usage: %s\n", msg.c_str());
    return 2;
  }

  try {
    Run run;
    run.opt = opt;
    run.cfg = resolve_config(opt);
    for (const auto& [name, fn] : commands)
      if (app.got_subcommand(name)) {
        run.command = name;
        fn(run);
      }
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "error: %s: %s\n", to_string(e.kind()), msg.c_str());
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: io: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
