#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ksx/error.hpp"
#include "ksx/graph.hpp"
#include "ksx/importance.hpp"
#include "ksx/ks_explainer.hpp"
#include "ksx/model.hpp"

namespace ksx {

using Json = nlohmann::ordered_json;

// Shortest text that reads back to the same double.
inline std::string format_number(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << text;
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::Parse, what + ": " + e.what());
  }
}

inline Json read_json(const std::filesystem::path& path) { return parse_json(read_text(path), path.string()); }

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(1) + "\n"); }

namespace detail {

// Typed access that turns nlohmann's exceptions into parse errors naming the
// offending field.
template <class T>
T get(const Json& j, const char* key, const std::string& where) {
  require(j.is_object(), ErrorKind::Parse, where + ": expected an object");
  auto it = j.find(key);
  require(it != j.end(), ErrorKind::Parse, where + ": missing field '" + key + "'");
  try {
    return it->template get<T>();
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Parse, where + ": field '" + key + "': " + e.what());
  }
}

// Runs a reader, reporting any JSON access failure as a parse error.
template <class F>
auto parsing(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Parse, what + ": " + e.what());
  }
}

// Wraps invariant failures from constructors as parse errors with context.
template <class F>
auto with_context(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Parse) throw;
    throw Error(ErrorKind::Parse, where + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Graph files

inline Json graph_to_json(const CellGraph& g, const std::vector<int>* truth, const Split* split) {
  Json nodes = Json::array();
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    auto f = g.features().row(v);
    nodes.push_back({{"x", g.coords()[v].x}, {"y", g.coords()[v].y}, {"features", std::vector<double>(f.begin(), f.end())}});
  }
  Json edges = Json::array();
  for (const auto& [u, v] : g.edges()) edges.push_back({u, v});
  Json j = {{"id", g.id()}, {"label", g.label()}};
  if (split) j["split"] = to_string(*split);
  j["nodes"] = std::move(nodes);
  j["edges"] = std::move(edges);
  if (truth) j["importance_gt"] = *truth;
  return j;
}

inline Json dataset_to_json(const Dataset& ds) {
  Json graphs = Json::array();
  for (std::size_t i = 0; i < ds.graphs.size(); ++i)
    graphs.push_back(graph_to_json(ds.graphs[i], ds.ground_truth ? &(*ds.ground_truth)[i] : nullptr,
                                   ds.split.empty() ? nullptr : &ds.split[i]));
  return {{"num_classes", ds.num_classes}, {"graphs", std::move(graphs)}};
}

// Reads the graph file format. Split tags and ground truth are optional; a
// file without split tags puts every graph in the test split. Ground truth
// must be given for all graphs or none.
inline Dataset dataset_from_json(const Json& j) {
  return detail::parsing("dataset", [&] {
    Dataset ds;
    ds.num_classes = detail::get<int>(j, "num_classes", "dataset");
    require(ds.num_classes >= 1, ErrorKind::Parse, "dataset: num_classes must be positive");
    const auto& graphs = j.at("graphs");
    require(graphs.is_array(), ErrorKind::Parse, "dataset: 'graphs' must be an array");
    std::size_t with_truth = 0, with_split = 0;
    std::vector<std::vector<int>> truth;
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
      const Json& gj = graphs[gi];
      const std::string where = "graph " + std::to_string(gi);
      const auto id = detail::get<std::string>(gj, "id", where);
      const auto label = detail::get<int>(gj, "label", where);
      const auto& nodes = gj.at("nodes");
      require(nodes.is_array(), ErrorKind::Parse, where + ": 'nodes' must be an array");
      std::vector<Point> coords;
      std::vector<std::vector<double>> rows;
      for (std::size_t v = 0; v < nodes.size(); ++v) {
        const std::string nw = where + " node " + std::to_string(v);
        coords.push_back({detail::get<double>(nodes[v], "x", nw), detail::get<double>(nodes[v], "y", nw)});
        rows.push_back(detail::get<std::vector<double>>(nodes[v], "features", nw));
      }
      const std::size_t d = rows.empty() ? 0 : rows.front().size();
      Matrix features(rows.size(), d);
      for (std::size_t v = 0; v < rows.size(); ++v) {
        require(rows[v].size() == d, ErrorKind::Parse, where + ": ragged feature rows");
        std::copy(rows[v].begin(), rows[v].end(), features.row(v).begin());
      }
      const auto edges = detail::get<std::vector<std::pair<int, int>>>(gj, "edges", where);
      ds.graphs.push_back(detail::with_context(where, [&] {
        return CellGraph(id, std::move(coords), std::move(features), edges, label);
      }));
      if (gj.contains("split")) {
        ++with_split;
        ds.split.push_back(
            detail::with_context(where, [&] { return parse_split(detail::get<std::string>(gj, "split", where)); }));
      } else {
        ds.split.push_back(Split::Test);
      }
      if (gj.contains("importance_gt")) {
        ++with_truth;
        truth.push_back(detail::get<std::vector<int>>(gj, "importance_gt", where));
      }
    }
    require(with_split == 0 || with_split == graphs.size(), ErrorKind::Parse,
            "dataset: split tags must be given for all graphs or none");
    require(with_truth == 0 || with_truth == graphs.size(), ErrorKind::Parse,
            "dataset: importance_gt must be given for all graphs or none");
    if (with_truth) ds.ground_truth = std::move(truth);
    detail::with_context("dataset", [&] {
      ds.validate();
      return 0;
    });
    return ds;
  });
}

inline void save_graphs(const std::filesystem::path& path, const Dataset& ds, const Json& config = nullptr) {
  Json j = dataset_to_json(ds);
  if (!config.is_null()) j["config"] = config;
  write_json(path, j);
}

inline Dataset load_graphs(const std::filesystem::path& path) { return dataset_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// Model checkpoints

inline Json model_to_json(const GnnModel& m) {
  const auto& a = m.arch();
  return {{"architecture", {{"L", a.layers}, {"W", a.hidden}, {"d", a.input_dim}, {"C", a.num_classes}, {"epsilons", a.epsilons}}},
          {"params", m.params()}};
}

inline GnnModel model_from_json(const Json& j) {
  return detail::parsing("checkpoint", [&] {
    const auto& aj = j.at("architecture");
    Architecture a;
    a.layers = detail::get<int>(aj, "L", "checkpoint");
    a.hidden = detail::get<int>(aj, "W", "checkpoint");
    a.input_dim = detail::get<int>(aj, "d", "checkpoint");
    a.num_classes = detail::get<int>(aj, "C", "checkpoint");
    a.epsilons = detail::get<std::vector<double>>(aj, "epsilons", "checkpoint");
    return detail::with_context("checkpoint", [&] {
      GnnModel m(a);
      m.set_params(detail::get<std::vector<double>>(j, "params", "checkpoint"));
      return m;
    });
  });
}

inline void save_model(const std::filesystem::path& path, const GnnModel& m, const Json& config = nullptr) {
  Json j = model_to_json(m);
  if (!config.is_null()) j["config"] = config;
  write_json(path, j);
}

inline GnnModel load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// Importance maps and batch explanations

inline Json map_to_json(const NodeImportanceMap& m) {
  return {{"graph_id", m.graph_id}, {"method", m.method}, {"scores", m.scores}};
}

inline NodeImportanceMap map_from_json(const Json& j) {
  NodeImportanceMap m{detail::get<std::string>(j, "graph_id", "importance map"),
                      detail::get<std::string>(j, "method", "importance map"),
                      detail::get<std::vector<double>>(j, "scores", "importance map")};
  for (double s : m.scores)
    require(s >= 0.0 && s <= 1.0, ErrorKind::Parse, "importance map '" + m.graph_id + "': score outside [0, 1]");
  return m;
}

inline Json maps_to_json(const std::vector<NodeImportanceMap>& maps) {
  Json a = Json::array();
  for (const auto& m : maps) a.push_back(map_to_json(m));
  return a;
}

inline std::vector<NodeImportanceMap> maps_from_json(const Json& a) {
  require(a.is_array(), ErrorKind::Parse, "importance maps: expected an array");
  std::vector<NodeImportanceMap> out;
  for (const auto& j : a) out.push_back(map_from_json(j));
  return out;
}

inline Json terms_to_json(const ObjectiveTerms& t) {
  return {{"mi", t.mi}, {"similarity", t.similarity}, {"ks_sum", t.ks_sum}, {"ks_var", t.ks_var}, {"total", t.total}};
}

inline Json batch_to_json(const BatchExplanation& b) {
  Json trace = Json::array();
  for (const auto& t : b.trace) trace.push_back(terms_to_json(t));
  return {{"best_iteration", b.best_iteration}, {"masks", b.masks}, {"ks", b.ks}, {"maps", maps_to_json(b.maps)},
          {"trace", std::move(trace)}};
}

// ---------------------------------------------------------------------------
// CSV

// CSV text with the resolved config on a leading comment line.
class CsvWriter {
 public:
  CsvWriter(const std::vector<std::string>& header, const Json& config) {
    if (!config.is_null()) text_ += "# config: " + config.dump() + "\n";
    row(header);
  }

  template <class... Cells>
  void add(const Cells&... cells) {
    std::vector<std::string> r;
    (r.push_back(cell(cells)), ...);
    row(r);
  }

  void add_row(const std::vector<std::string>& cells) { row(cells); }

  const std::string& str() const { return text_; }
  void save(const std::filesystem::path& path) const { write_text(path, text_); }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double x) { return format_number(x); }
  static std::string cell(int x) { return std::to_string(x); }
  static std::string cell(long x) { return std::to_string(x); }
  static std::string cell(std::size_t x) { return std::to_string(x); }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  std::string text_;
};

}  // namespace ksx
