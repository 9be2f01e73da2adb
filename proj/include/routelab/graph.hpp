#ifndef ROUTELAB_GRAPH_HPP
#define ROUTELAB_GRAPH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "routelab/error.hpp"

namespace routelab {

inline constexpr int kNodeFeatureDim = 3;
inline constexpr int kEdgeFeatureDim = 3;

// Node feature layout.
inline constexpr int kCpuUtilization = 0;    // busy-time fraction, [0, 1]
inline constexpr int kResponseTimeEwma = 1;  // milliseconds, >= 0
inline constexpr int kQueueLength = 2;       // jobs in system, >= 0

// Edge feature layout.
inline constexpr int kLatencyEwma = 0;    // milliseconds, >= 0
inline constexpr int kStability = 1;      // [0, 1], 1 = perfectly stable
inline constexpr int kCallFrequency = 2;  // calls/second over the trailing window, >= 0

struct NodeRecord {
  std::array<double, kNodeFeatureDim> features{};
};

struct EdgeRecord {
  int src = 0;
  int dst = 0;
  std::array<double, kEdgeFeatureDim> features{};
};

// Directed service graph with per-node and per-edge feature vectors.
// Immutable after construction; "mutation" means building a new snapshot.
class ServiceGraph {
 public:
  ServiceGraph() = default;
  ServiceGraph(std::vector<NodeRecord> nodes, std::vector<EdgeRecord> edges,
               std::vector<int> service_of)
      : nodes_(std::move(nodes)), edges_(std::move(edges)), service_of_(std::move(service_of)) {
    adjacency_ = build_adjacency();
  }

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }

  const std::vector<NodeRecord>& nodes() const { return nodes_; }
  const std::vector<EdgeRecord>& edges() const { return edges_; }
  const std::vector<int>& service_map() const { return service_of_; }
  int service_of(int node) const { return service_of_[static_cast<std::size_t>(node)]; }

  // Out-edge indices per node, sorted by destination id.
  const std::vector<std::vector<int>>& adjacency() const { return adjacency_; }
  const std::vector<int>& out_edges(int node) const {
    return adjacency_[static_cast<std::size_t>(node)];
  }

  // Index of edge src->dst, or -1.
  int find_edge(int src, int dst) const {
    if (src < 0 || src >= node_count()) return -1;
    const auto& out = adjacency_[static_cast<std::size_t>(src)];
    auto it = std::lower_bound(out.begin(), out.end(), dst,
                               [this](int e, int d) { return edges_[e].dst < d; });
    if (it != out.end() && edges_[*it].dst == dst) return *it;
    return -1;
  }

  // Recomputes the adjacency structure from the edge list. Edges with an
  // out-of-range source are skipped so that invalid graphs can still be
  // inspected by validate_graph.
  std::vector<std::vector<int>> build_adjacency() const {
    std::vector<std::vector<int>> adj(nodes_.size());
    for (int e = 0; e < edge_count(); ++e) {
      const int src = edges_[e].src;
      if (src >= 0 && src < node_count()) adj[static_cast<std::size_t>(src)].push_back(e);
    }
    for (auto& out : adj) {
      std::sort(out.begin(), out.end(), [this](int a, int b) { return edges_[a].dst < edges_[b].dst; });
    }
    return adj;
  }

 private:
  std::vector<NodeRecord> nodes_;
  std::vector<EdgeRecord> edges_;
  std::vector<int> service_of_;
  std::vector<std::vector<int>> adjacency_;
};

enum class ViolationKind {
  DanglingEdge,
  SelfLoop,
  DuplicateEdge,
  FeatureOutOfRange,
  ServiceMapSize,
};

struct Violation {
  ViolationKind kind;
  std::string detail;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

inline ValidationResult validate_graph(const ServiceGraph& g) {
  ValidationResult r;
  const int n = g.node_count();
  if (static_cast<int>(g.service_map().size()) != n) {
    r.violations.push_back({ViolationKind::ServiceMapSize,
                            "service_of has " + std::to_string(g.service_map().size()) +
                                " entries for " + std::to_string(n) + " nodes"});
  }
  std::vector<std::pair<int, int>> seen;
  seen.reserve(g.edges().size());
  for (int e = 0; e < g.edge_count(); ++e) {
    const auto& edge = g.edges()[static_cast<std::size_t>(e)];
    const std::string where = "edge " + std::to_string(e) + " (" + std::to_string(edge.src) +
                              "->" + std::to_string(edge.dst) + ")";
    if (edge.src < 0 || edge.src >= n || edge.dst < 0 || edge.dst >= n) {
      r.violations.push_back({ViolationKind::DanglingEdge, "dangling edge: " + where});
      continue;
    }
    if (edge.src == edge.dst) {
      r.violations.push_back({ViolationKind::SelfLoop, "self-loop: " + where});
    }
    seen.emplace_back(edge.src, edge.dst);
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 1; i < seen.size(); ++i) {
    if (seen[i] == seen[i - 1]) {
      r.violations.push_back({ViolationKind::DuplicateEdge,
                              "duplicate edge (" + std::to_string(seen[i].first) + "->" +
                                  std::to_string(seen[i].second) + ")"});
    }
  }
  auto in_range = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
  auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  for (int i = 0; i < n; ++i) {
    const auto& f = g.nodes()[static_cast<std::size_t>(i)].features;
    if (!in_range(f[kCpuUtilization], 0.0, 1.0) || !nonneg(f[kResponseTimeEwma]) ||
        !nonneg(f[kQueueLength])) {
      r.violations.push_back(
          {ViolationKind::FeatureOutOfRange, "node " + std::to_string(i) + " features out of range"});
    }
  }
  for (int e = 0; e < g.edge_count(); ++e) {
    const auto& f = g.edges()[static_cast<std::size_t>(e)].features;
    if (!nonneg(f[kLatencyEwma]) || !in_range(f[kStability], 0.0, 1.0) ||
        !nonneg(f[kCallFrequency])) {
      r.violations.push_back(
          {ViolationKind::FeatureOutOfRange, "edge " + std::to_string(e) + " features out of range"});
    }
  }
  return r;
}

// Directed out-edges of node i as (neighbor id, edge index), ascending by
// neighbor id.
inline std::vector<std::pair<int, int>> out_neighbors(const ServiceGraph& g, int i) {
  if (i < 0 || i >= g.node_count()) {
    throw ValidationError("unknown node " + std::to_string(i));
  }
  std::vector<std::pair<int, int>> result;
  result.reserve(g.out_edges(i).size());
  for (int e : g.out_edges(i)) result.emplace_back(g.edges()[static_cast<std::size_t>(e)].dst, e);
  return result;
}

struct FeatureStats {
  std::array<double, kNodeFeatureDim> node_mean{};
  std::array<double, kNodeFeatureDim> node_std{};
  std::array<double, kEdgeFeatureDim> edge_mean{};
  std::array<double, kEdgeFeatureDim> edge_std{};
};

inline FeatureStats identity_stats() {
  FeatureStats s;
  s.node_std.fill(1.0);
  s.edge_std.fill(1.0);
  return s;
}

// Per-dimension mean and population standard deviation across all nodes
// (resp. edges) of all snapshots. Two-pass for numerical sanity.
inline FeatureStats feature_stats(std::span<const ServiceGraph* const> snapshots) {
  std::size_t n_nodes = 0;
  std::size_t n_edges = 0;
  for (const ServiceGraph* g : snapshots) {
    n_nodes += g->nodes().size();
    n_edges += g->edges().size();
  }
  if (snapshots.empty() || n_nodes == 0) throw ValidationError("empty dataset");

  FeatureStats s;
  for (const ServiceGraph* g : snapshots) {
    for (const auto& node : g->nodes())
      for (int d = 0; d < kNodeFeatureDim; ++d) s.node_mean[d] += node.features[d];
    for (const auto& edge : g->edges())
      for (int d = 0; d < kEdgeFeatureDim; ++d) s.edge_mean[d] += edge.features[d];
  }
  for (int d = 0; d < kNodeFeatureDim; ++d) s.node_mean[d] /= static_cast<double>(n_nodes);
  if (n_edges > 0)
    for (int d = 0; d < kEdgeFeatureDim; ++d) s.edge_mean[d] /= static_cast<double>(n_edges);

  for (const ServiceGraph* g : snapshots) {
    for (const auto& node : g->nodes())
      for (int d = 0; d < kNodeFeatureDim; ++d) {
        const double delta = node.features[d] - s.node_mean[d];
        s.node_std[d] += delta * delta;
      }
    for (const auto& edge : g->edges())
      for (int d = 0; d < kEdgeFeatureDim; ++d) {
        const double delta = edge.features[d] - s.edge_mean[d];
        s.edge_std[d] += delta * delta;
      }
  }
  for (int d = 0; d < kNodeFeatureDim; ++d)
    s.node_std[d] = std::sqrt(s.node_std[d] / static_cast<double>(n_nodes));
  if (n_edges > 0)
    for (int d = 0; d < kEdgeFeatureDim; ++d)
      s.edge_std[d] = std::sqrt(s.edge_std[d] / static_cast<double>(n_edges));
  return s;
}

inline FeatureStats feature_stats(const std::vector<ServiceGraph>& snapshots) {
  std::vector<const ServiceGraph*> ptrs;
  ptrs.reserve(snapshots.size());
  for (const auto& g : snapshots) ptrs.push_back(&g);
  return feature_stats(std::span<const ServiceGraph* const>(ptrs));
}

// z-score per dimension; dimensions with zero spread map to 0.
inline ServiceGraph normalize_features(const ServiceGraph& g, const FeatureStats& s) {
  std::vector<NodeRecord> nodes = g.nodes();
  std::vector<EdgeRecord> edges = g.edges();
  for (auto& node : nodes)
    for (int d = 0; d < kNodeFeatureDim; ++d) {
      node.features[d] =
          s.node_std[d] > 0.0 ? (node.features[d] - s.node_mean[d]) / s.node_std[d] : 0.0;
    }
  for (auto& edge : edges)
    for (int d = 0; d < kEdgeFeatureDim; ++d) {
      edge.features[d] =
          s.edge_std[d] > 0.0 ? (edge.features[d] - s.edge_mean[d]) / s.edge_std[d] : 0.0;
    }
  return ServiceGraph(std::move(nodes), std::move(edges), g.service_map());
}

// Inverse of normalize_features on dimensions with std > 0.
inline ServiceGraph denormalize_features(const ServiceGraph& g, const FeatureStats& s) {
  std::vector<NodeRecord> nodes = g.nodes();
  std::vector<EdgeRecord> edges = g.edges();
  for (auto& node : nodes)
    for (int d = 0; d < kNodeFeatureDim; ++d) {
      if (s.node_std[d] > 0.0) node.features[d] = node.features[d] * s.node_std[d] + s.node_mean[d];
    }
  for (auto& edge : edges)
    for (int d = 0; d < kEdgeFeatureDim; ++d) {
      if (s.edge_std[d] > 0.0) edge.features[d] = edge.features[d] * s.edge_std[d] + s.edge_mean[d];
    }
  return ServiceGraph(std::move(nodes), std::move(edges), g.service_map());
}

}  // namespace routelab

#endif  // ROUTELAB_GRAPH_HPP
