#ifndef ROUTELAB_IO_HPP
#define ROUTELAB_IO_HPP

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "routelab/error.hpp"
#include "routelab/eval.hpp"
#include "routelab/gnn.hpp"
#include "routelab/graph.hpp"
#include "routelab/sim.hpp"
#include "routelab/train.hpp"

namespace routelab {

using nlohmann::json;

// Shortest representation that parses back to the same double.
inline std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << content;
}

// ---- graph JSON ----------------------------------------------------------

inline json graph_to_json(const ServiceGraph& g) {
  json j;
  j["nodes"] = json::array();
  for (const auto& node : g.nodes()) {
    j["nodes"].push_back({node.features[0], node.features[1], node.features[2]});
  }
  j["edges"] = json::array();
  for (const auto& e : g.edges()) {
    j["edges"].push_back({{"src", e.src},
                          {"dst", e.dst},
                          {"features", {e.features[0], e.features[1], e.features[2]}}});
  }
  j["service_of"] = g.service_map();
  return j;
}

inline ServiceGraph graph_from_json(const json& j) {
  if (!j.contains("nodes") || !j.contains("edges") || !j.contains("service_of"))
    throw ValidationError("graph json needs nodes, edges and service_of");
  std::vector<NodeRecord> nodes;
  for (const auto& arr : j.at("nodes")) {
    if (arr.size() != kNodeFeatureDim) throw ValidationError("node feature vector must have 3 entries");
    NodeRecord n;
    for (int d = 0; d < kNodeFeatureDim; ++d) n.features[static_cast<std::size_t>(d)] = arr.at(d).get<double>();
    nodes.push_back(n);
  }
  std::vector<EdgeRecord> edges;
  for (const auto& je : j.at("edges")) {
    EdgeRecord e;
    e.src = je.at("src").get<int>();
    e.dst = je.at("dst").get<int>();
    const auto& arr = je.at("features");
    if (arr.size() != kEdgeFeatureDim) throw ValidationError("edge feature vector must have 3 entries");
    for (int d = 0; d < kEdgeFeatureDim; ++d) e.features[static_cast<std::size_t>(d)] = arr.at(d).get<double>();
    edges.push_back(e);
  }
  std::vector<int> service_of = j.at("service_of").get<std::vector<int>>();
  return ServiceGraph(std::move(nodes), std::move(edges), std::move(service_of));
}

inline void save_graph(const std::filesystem::path& path, const ServiceGraph& g) {
  write_text_file(path, graph_to_json(g).dump(2) + "\n");
}

inline ServiceGraph load_graph(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("malformed graph file " + path.string() + ": " + e.what());
  }
  return graph_from_json(j);
}

// ---- model snapshot (binary, versioned) ----------------------------------

namespace detail {

inline constexpr char kModelMagic[4] = {'R', 'L', 'G', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;
  template <typename T>
  T read() {
    if (pos + sizeof(T) > buf.size()) throw ValidationError("truncated snapshot");
    T value;
    std::memcpy(&value, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
  }
  void read_doubles(std::span<double> out) {
    const std::size_t bytes = out.size() * sizeof(double);
    if (pos + bytes > buf.size()) throw ValidationError("truncated snapshot");
    std::memcpy(out.data(), buf.data() + pos, bytes);
    pos += bytes;
  }
};

template <typename T>
void append(std::string& buf, const T& value) {
  const char* p = reinterpret_cast<const char*>(&value);
  buf.append(p, sizeof(T));
}

// Tensor shapes in for_each_tensor order; vectors are 1 x len.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> tensor_shapes(const GnnParams& p) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
  auto push_mat = [&shapes](const Mat& m) {
    shapes.emplace_back(static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()));
  };
  auto push_vec = [&shapes](const Vec& v) {
    shapes.emplace_back(1u, static_cast<std::uint32_t>(v.size()));
  };
  for (const auto& layer : p.layers) {
    push_mat(layer.w1);
    push_mat(layer.w2);
    push_mat(layer.wq);
    push_mat(layer.wk);
    push_vec(layer.attn);
  }
  for (const MlpParams* mlp : {&p.scorer, &p.regressor}) {
    push_mat(mlp->w1);
    push_vec(mlp->b1);
    push_mat(mlp->w2);
    push_vec(mlp->b2);
  }
  return shapes;
}

}  // namespace detail

inline std::string model_to_bytes(const GnnParams& params,
                                  const FeatureStats* stats = nullptr) {
  std::string buf;
  buf.append(detail::kModelMagic, sizeof(detail::kModelMagic));
  detail::append(buf, detail::kModelVersion);
  const GnnConfig& c = params.config;
  detail::append<std::int32_t>(buf, c.n_layers);
  detail::append<std::int32_t>(buf, c.embed_dim);
  detail::append<std::int32_t>(buf, c.node_dim);
  detail::append<std::int32_t>(buf, c.edge_dim);
  detail::append<std::int32_t>(buf, c.mlp_hidden);
  detail::append(buf, c.leaky_slope);
  detail::append(buf, c.seed);
  detail::append<std::uint8_t>(buf, c.uniform_attention ? 1 : 0);
  detail::append<std::uint8_t>(buf, stats != nullptr ? 1 : 0);
  if (stats != nullptr) {
    for (double v : stats->node_mean) detail::append(buf, v);
    for (double v : stats->node_std) detail::append(buf, v);
    for (double v : stats->edge_mean) detail::append(buf, v);
    for (double v : stats->edge_std) detail::append(buf, v);
  }
  const auto shapes = detail::tensor_shapes(params);
  detail::append<std::uint32_t>(buf, static_cast<std::uint32_t>(shapes.size()));
  // Shapes ride along with each tensor so a mismatched load fails loudly.
  std::size_t index = 0;
  for_each_tensor(params, [&](std::span<const double> span) {
    detail::append(buf, shapes[index].first);
    detail::append(buf, shapes[index].second);
    buf.append(reinterpret_cast<const char*>(span.data()), span.size() * sizeof(double));
    ++index;
  });
  return buf;
}

struct LoadedModel {
  GnnParams params;
  std::optional<FeatureStats> stats;
};

inline LoadedModel model_from_bytes(const std::string& buf) {
  detail::ByteReader r{buf};
  if (buf.size() < sizeof(detail::kModelMagic)) throw ValidationError("truncated snapshot");
  if (std::memcmp(buf.data(), detail::kModelMagic, sizeof(detail::kModelMagic)) != 0)
    throw ValidationError("not a model snapshot");
  r.pos = sizeof(detail::kModelMagic);
  const auto version = r.read<std::uint32_t>();
  if (version != detail::kModelVersion)
    throw ValidationError("snapshot version mismatch: got " + std::to_string(version) +
                          ", expected " + std::to_string(detail::kModelVersion));
  GnnConfig cfg;
  cfg.n_layers = r.read<std::int32_t>();
  cfg.embed_dim = r.read<std::int32_t>();
  cfg.node_dim = r.read<std::int32_t>();
  cfg.edge_dim = r.read<std::int32_t>();
  cfg.mlp_hidden = r.read<std::int32_t>();
  cfg.leaky_slope = r.read<double>();
  cfg.seed = r.read<std::uint64_t>();
  cfg.uniform_attention = r.read<std::uint8_t>() != 0;
  const bool has_stats = r.read<std::uint8_t>() != 0;

  LoadedModel loaded;
  if (has_stats) {
    FeatureStats s;
    for (double& v : s.node_mean) v = r.read<double>();
    for (double& v : s.node_std) v = r.read<double>();
    for (double& v : s.edge_mean) v = r.read<double>();
    for (double& v : s.edge_std) v = r.read<double>();
    loaded.stats = s;
  }
  loaded.params = make_zero_params(cfg);
  const auto expected_shapes = detail::tensor_shapes(loaded.params);
  const auto count = r.read<std::uint32_t>();
  if (count != expected_shapes.size())
    throw ValidationError("shape mismatch: snapshot has " + std::to_string(count) +
                          " tensors, config implies " + std::to_string(expected_shapes.size()));
  std::size_t shape_index = 0;
  for_each_tensor(loaded.params, [&](std::span<double> span) {
    const auto rows = r.read<std::uint32_t>();
    const auto cols = r.read<std::uint32_t>();
    const auto& expected = expected_shapes[shape_index++];
    if (rows != expected.first || cols != expected.second)
      throw ValidationError("shape mismatch: tensor " + std::to_string(shape_index - 1) + " is " +
                            std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                            std::to_string(expected.first) + "x" + std::to_string(expected.second));
    r.read_doubles(span);
  });
  if (r.pos != buf.size()) throw ValidationError("trailing bytes in snapshot");
  return loaded;
}

inline void save_model(const std::filesystem::path& path, const GnnParams& params,
                       const FeatureStats* stats = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  const std::string bytes = model_to_bytes(params, stats);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline LoadedModel load_model(const std::filesystem::path& path) {
  return model_from_bytes(read_text_file(path));
}

// ---- delimited exports ----------------------------------------------------

inline std::string trace_to_csv(const Trace& trace) {
  std::string out = "request_id,t_enter_ms,src,dst,queue_ms,latency_ms\n";
  for (const auto& rec : trace.records) {
    for (const auto& hop : rec.hops) {
      out += std::to_string(rec.request_id) + ',' + fmt_double(hop.t_enter_ms) + ',' +
             std::to_string(hop.src) + ',' + std::to_string(hop.dst) + ',' +
             fmt_double(hop.queue_ms) + ',' + fmt_double(hop.latency_ms) + '\n';
    }
  }
  return out;
}

inline json sample_to_json(const DecisionSample& s) {
  json j;
  j["source"] = s.source;
  j["candidates"] = s.candidates;
  j["oracle_best"] = s.oracle_best;
  j["realized_latency_ms"] = s.realized_latency_ms;
  j["realized_jitter_ms"] = s.realized_jitter_ms;
  j["snapshot"] = graph_to_json(s.snapshot);
  return j;
}

inline DecisionSample sample_from_json(const json& j) {
  DecisionSample s;
  s.source = j.at("source").get<int>();
  s.candidates = j.at("candidates").get<std::vector<int>>();
  s.oracle_best = j.at("oracle_best").get<int>();
  s.realized_latency_ms = j.at("realized_latency_ms").get<std::vector<double>>();
  s.realized_jitter_ms = j.at("realized_jitter_ms").get<std::vector<double>>();
  s.snapshot = graph_from_json(j.at("snapshot"));
  return s;
}

inline std::string samples_to_jsonl(const std::vector<DecisionSample>& samples) {
  std::string out;
  for (const auto& s : samples) out += sample_to_json(s).dump() + '\n';
  return out;
}

inline std::vector<DecisionSample> samples_from_jsonl(const std::string& text) {
  std::vector<DecisionSample> samples;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      samples.push_back(sample_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ValidationError(std::string("malformed sample line: ") + e.what());
    }
  }
  return samples;
}

inline std::string train_report_to_csv(const TrainReport& report) {
  std::string out = "epoch,loss,val_accuracy,seconds\n";
  for (std::size_t i = 0; i < report.epochs.size(); ++i) {
    const auto& e = report.epochs[i];
    out += std::to_string(i) + ',' + fmt_double(e.loss) + ',' + fmt_double(e.val_accuracy) + ',' +
           fmt_double(e.seconds) + '\n';
  }
  return out;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "param,seed_count,mre_mean,mre_std,jitter_mean,jitter_std,acc_mean,acc_std\n";
  for (const auto& r : rows) {
    out += fmt_double(r.param) + ',' + std::to_string(r.seed_count) + ',' + fmt_double(r.mre_mean) +
           ',' + fmt_double(r.mre_std) + ',' + fmt_double(r.jitter_mean) + ',' +
           fmt_double(r.jitter_std) + ',' + fmt_double(r.acc_mean) + ',' + fmt_double(r.acc_std) +
           '\n';
  }
  return out;
}

inline std::string metrics_to_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "policy,mean_relative_error,jitter_prediction_error_ms,routing_decision_accuracy,n_decisions\n";
  for (const auto& r : reports) {
    out += r.policy + ',' + fmt_double(r.mean_relative_error) + ',' +
           fmt_double(r.jitter_prediction_error_ms) + ',' +
           fmt_double(r.routing_decision_accuracy) + ',' + std::to_string(r.n_decisions) + '\n';
  }
  return out;
}

}  // namespace routelab

#endif  // ROUTELAB_IO_HPP
