#ifndef ROUTELAB_TOPOLOGY_HPP
#define ROUTELAB_TOPOLOGY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "routelab/error.hpp"
#include "routelab/graph.hpp"
#include "routelab/rng.hpp"

namespace routelab {

struct TopologySpec {
  int n_services = 1;
  int replicas_per_service = 1;
  double avg_out_degree = 1.0;  // target mean logical out-degree
  std::uint64_t seed = 0;
  bool layered = true;  // logical call graph acyclic by construction
};

inline void validate(const TopologySpec& spec) {
  if (spec.n_services < 1) throw ValidationError("n_services must be >= 1");
  if (spec.replicas_per_service < 1) throw ValidationError("replicas_per_service must be >= 1");
  if (!(spec.avg_out_degree > 0.0)) throw ValidationError("avg_out_degree must be > 0");
  // A single service cannot have out-edges, so the density knob is moot there.
  if (spec.n_services > 1 && spec.avg_out_degree > static_cast<double>(spec.n_services - 1)) {
    throw ValidationError("avg_out_degree must be <= n_services - 1");
  }
}

// Logical call graph over services. Edges are pairs of service ids; when the
// ids are layer-ordered (src < dst) the graph is acyclic by construction.
struct LogicalTopology {
  int n_services = 0;
  std::vector<std::pair<int, int>> edges;
};

namespace detail {

inline double initial_cpu(std::uint64_t seed, int node) {
  return rng::uniform(rng::key(seed, rng::tag::kNodeFeature, static_cast<std::uint64_t>(node), 0),
                      0.1, 0.6);
}

// latency ~ lognormal with median 5 ms, sigma 0.5; stability ~ uniform[0.7, 1]
inline double initial_latency(std::uint64_t seed, int src, int dst) {
  return rng::lognormal(rng::key(seed, rng::tag::kEdgeFeature, static_cast<std::uint64_t>(src),
                                 static_cast<std::uint64_t>(dst)),
                        std::log(5.0), 0.5);
}

inline double initial_stability(std::uint64_t seed, int src, int dst) {
  const std::uint64_t k = rng::key(seed, rng::tag::kEdgeFeature, static_cast<std::uint64_t>(src),
                                   static_cast<std::uint64_t>(dst));
  return rng::uniform(rng::mix(k, 7), 0.7, 1.0);
}

}  // namespace detail

// Expands a logical call graph into a replica-level ServiceGraph: each
// logical edge A->B becomes the full bipartite set of replica edges. Node id
// of replica r of service s is s*replicas + r. Queue length, response time
// and call frequency start at zero; the simulator fills them in.
inline ServiceGraph expand_topology(const LogicalTopology& logical, int replicas,
                                    std::uint64_t seed) {
  const int n_nodes = logical.n_services * replicas;
  std::vector<NodeRecord> nodes(static_cast<std::size_t>(n_nodes));
  std::vector<int> service_of(static_cast<std::size_t>(n_nodes));
  for (int i = 0; i < n_nodes; ++i) {
    service_of[static_cast<std::size_t>(i)] = i / replicas;
    auto& f = nodes[static_cast<std::size_t>(i)].features;
    f[kCpuUtilization] = detail::initial_cpu(seed, i);
    f[kResponseTimeEwma] = 0.0;
    f[kQueueLength] = 0.0;
  }

  std::vector<std::pair<int, int>> logical_edges = logical.edges;
  std::sort(logical_edges.begin(), logical_edges.end());
  std::vector<EdgeRecord> edges;
  edges.reserve(logical_edges.size() * static_cast<std::size_t>(replicas) *
                static_cast<std::size_t>(replicas));
  for (const auto& [a, b] : logical_edges) {
    for (int ra = 0; ra < replicas; ++ra) {
      for (int rb = 0; rb < replicas; ++rb) {
        EdgeRecord e;
        e.src = a * replicas + ra;
        e.dst = b * replicas + rb;
        e.features[kLatencyEwma] = detail::initial_latency(seed, e.src, e.dst);
        e.features[kStability] = detail::initial_stability(seed, e.src, e.dst);
        e.features[kCallFrequency] = 0.0;
        edges.push_back(e);
      }
    }
  }
  std::sort(edges.begin(), edges.end(),
            [](const EdgeRecord& x, const EdgeRecord& y) {
              return std::pair(x.src, x.dst) < std::pair(y.src, y.dst);
            });
  return ServiceGraph(std::move(nodes), std::move(edges), std::move(service_of));
}

// Samples the logical service DAG: services are assigned to ~4 layers and
// relabeled in layer order, then exactly round(n * avg_out_degree) forward
// pairs are drawn uniformly (exact-count sampling keeps the realized density
// inside the +-10% contract, which independent Bernoulli draws cannot
// guarantee). Non-sink services left without an out-edge get one, with a
// compensating removal elsewhere when possible.
inline LogicalTopology sample_logical_topology(const TopologySpec& spec) {
  const int n = spec.n_services;
  LogicalTopology logical;
  logical.n_services = n;
  if (n == 1) return logical;

  std::vector<int> layer(static_cast<std::size_t>(n), 0);
  int max_layer = 0;
  if (spec.layered) {
    const int n_layers = std::min(4, n);
    for (int s = 0; s < n; ++s) {
      const double u = rng::u01(rng::key(spec.seed, rng::tag::kLayerAssign, static_cast<std::uint64_t>(s)));
      layer[static_cast<std::size_t>(s)] = std::min(n_layers - 1, static_cast<int>(u * n_layers));
    }
    // Relabel so ids ascend with layer; edges then always go low id -> high id.
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return layer[static_cast<std::size_t>(a)] < layer[static_cast<std::size_t>(b)]; });
    std::vector<int> relabeled(static_cast<std::size_t>(n));
    for (int rank = 0; rank < n; ++rank)
      relabeled[static_cast<std::size_t>(rank)] = layer[static_cast<std::size_t>(order[static_cast<std::size_t>(rank)])];
    layer = std::move(relabeled);
    max_layer = *std::max_element(layer.begin(), layer.end());
  }

  std::vector<std::pair<int, int>> candidates;
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u == v) continue;
      if (spec.layered) {
        if (layer[static_cast<std::size_t>(u)] < layer[static_cast<std::size_t>(v)]) candidates.emplace_back(u, v);
      } else {
        candidates.emplace_back(u, v);
      }
    }
  }
  std::size_t target = static_cast<std::size_t>(std::llround(spec.avg_out_degree * n));
  target = std::min(target, candidates.size());

  rng::Stream pick(rng::key(spec.seed, rng::tag::kEdgePick));
  rng::shuffle(candidates, pick);
  std::vector<std::pair<int, int>> chosen(candidates.begin(),
                                          candidates.begin() + static_cast<std::ptrdiff_t>(target));

  if (spec.layered) {
    std::vector<int> out_degree(static_cast<std::size_t>(n), 0);
    for (const auto& [u, v] : chosen) ++out_degree[static_cast<std::size_t>(u)];
    for (int u = 0; u < n; ++u) {
      if (layer[static_cast<std::size_t>(u)] == max_layer) continue;  // sinks by construction
      if (out_degree[static_cast<std::size_t>(u)] > 0) continue;
      std::vector<int> later;
      for (int v = 0; v < n; ++v)
        if (layer[static_cast<std::size_t>(v)] > layer[static_cast<std::size_t>(u)]) later.push_back(v);
      const double r = rng::u01(rng::key(spec.seed, rng::tag::kEdgeFix, static_cast<std::uint64_t>(u)));
      const int v = later[std::min(later.size() - 1, static_cast<std::size_t>(r * static_cast<double>(later.size())))];
      chosen.emplace_back(u, v);
      ++out_degree[static_cast<std::size_t>(u)];
      // Keep the edge count on target by dropping one edge from a rich service.
      for (std::size_t i = chosen.size(); i-- > 0;) {
        const int src = chosen[i].first;
        if (src != u && out_degree[static_cast<std::size_t>(src)] > 1) {
          --out_degree[static_cast<std::size_t>(src)];
          chosen.erase(chosen.begin() + static_cast<std::ptrdiff_t>(i));
          break;
        }
      }
    }
  }
  std::sort(chosen.begin(), chosen.end());
  chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
  logical.edges = std::move(chosen);
  return logical;
}

// spec + seed -> ServiceGraph, bit-identical for identical inputs.
inline ServiceGraph generate_topology(const TopologySpec& spec) {
  validate(spec);
  const LogicalTopology logical = sample_logical_topology(spec);
  return expand_topology(logical, spec.replicas_per_service, spec.seed);
}

// Hand-authored stand-in for a social-network deployment: 12 services whose
// call graph fans out from a gateway and drains into storage.
struct SocialPreset {
  TopologySpec spec;
  LogicalTopology logical;
  std::vector<std::string> service_names;
};

inline SocialPreset social_network_preset() {
  SocialPreset p;
  p.service_names = {"gateway", "auth",    "user",  "post",   "timeline", "recommend",
                     "comment", "like",    "media", "notify", "search",   "storage"};
  p.logical.n_services = 12;
  p.logical.edges = {
      {0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 10},           // gateway fan-out
      {1, 2}, {1, 11},                                   // auth
      {2, 5}, {2, 9}, {2, 11},                           // user
      {3, 6}, {3, 7}, {3, 8},                            // post
      {4, 5}, {4, 10},                                   // timeline
      {5, 11},                                           // recommend
      {6, 9}, {6, 11},                                   // comment
      {7, 9}, {7, 11},                                   // like
      {8, 11},                                           // media
      {9, 11},                                           // notify
      {10, 11},                                          // search
  };
  p.spec.n_services = 12;
  p.spec.replicas_per_service = 3;
  p.spec.avg_out_degree = static_cast<double>(p.logical.edges.size()) / 12.0;
  p.spec.seed = 0;
  p.spec.layered = true;
  return p;
}

}  // namespace routelab

#endif  // ROUTELAB_TOPOLOGY_HPP
