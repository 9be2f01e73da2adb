#ifndef ROUTELAB_EVAL_HPP
#define ROUTELAB_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "routelab/error.hpp"
#include "routelab/gnn.hpp"
#include "routelab/graph.hpp"
#include "routelab/rng.hpp"
#include "routelab/sim.hpp"
#include "routelab/topology.hpp"
#include "routelab/train.hpp"

namespace routelab {

struct MetricsReport {
  std::string policy;
  double mean_relative_error = 0.0;
  double jitter_prediction_error_ms = 0.0;
  double routing_decision_accuracy = 0.0;
  int n_decisions = 0;
  std::string config_echo;
};

// mean |pred - actual| / actual
inline double mean_relative_error(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw ValidationError("length mismatch");
  if (predicted.empty()) throw ValidationError("empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!(actual[i] > 0.0)) throw ValidationError("actual latency must be > 0");
    total += std::abs(predicted[i] - actual[i]) / actual[i];
  }
  return total / static_cast<double>(predicted.size());
}

// mean |pred - measured| in milliseconds
inline double jitter_prediction_error(std::span<const double> predicted,
                                      std::span<const double> measured) {
  if (predicted.size() != measured.size()) throw ValidationError("length mismatch");
  if (predicted.empty()) throw ValidationError("empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) total += std::abs(predicted[i] - measured[i]);
  return total / static_cast<double>(predicted.size());
}

// fraction of (chosen, oracle_best) pairs that agree
inline double routing_accuracy(const std::vector<std::pair<int, int>>& decisions) {
  if (decisions.empty()) throw ValidationError("no decisions");
  int correct = 0;
  for (const auto& [chosen, oracle] : decisions)
    if (chosen == oracle) ++correct;
  return static_cast<double>(correct) / static_cast<double>(decisions.size());
}

enum class BaselineKind { StaticShortest, RoundRobin, LeastConnections, Random };

inline BaselineKind baseline_kind_from_name(const std::string& name) {
  if (name == "static-shortest") return BaselineKind::StaticShortest;
  if (name == "round-robin") return BaselineKind::RoundRobin;
  if (name == "least-connections") return BaselineKind::LeastConnections;
  if (name == "random") return BaselineKind::Random;
  throw ValidationError("unknown policy kind: " + name);
}

// Classical routing policies. All tie-break to the lowest candidate index.
//  - static-shortest: cheapest link by setup-time latency, frozen; blind to
//    runtime dynamics on purpose.
//  - round-robin: cycles per (source, downstream service) pair.
//  - least-connections: smallest current queue.
//  - random: seeded uniform.
inline RoutingPolicy baseline_policy(BaselineKind kind, const ServiceGraph& setup_graph,
                                     std::uint64_t seed) {
  switch (kind) {
    case BaselineKind::StaticShortest: {
      auto initial = std::make_shared<std::map<std::pair<int, int>, double>>();
      for (const auto& e : setup_graph.edges())
        (*initial)[{e.src, e.dst}] = e.features[kLatencyEwma];
      return [initial](const RouteQuery& q) {
        int best = 0;
        double best_cost = initial->at({q.source, q.candidates[0]});
        for (std::size_t k = 1; k < q.candidates.size(); ++k) {
          const double cost = initial->at({q.source, q.candidates[k]});
          if (cost < best_cost) {
            best_cost = cost;
            best = static_cast<int>(k);
          }
        }
        return best;
      };
    }
    case BaselineKind::RoundRobin: {
      auto counters = std::make_shared<std::map<std::pair<int, int>, int>>();
      return [counters](const RouteQuery& q) {
        const int service = q.snapshot.service_of(q.candidates[0]);
        int& count = (*counters)[{q.source, service}];
        const int choice = count % static_cast<int>(q.candidates.size());
        ++count;
        return choice;
      };
    }
    case BaselineKind::LeastConnections: {
      return [](const RouteQuery& q) {
        int best = 0;
        double best_queue =
            q.snapshot.nodes()[static_cast<std::size_t>(q.candidates[0])].features[kQueueLength];
        for (std::size_t k = 1; k < q.candidates.size(); ++k) {
          const double queue =
              q.snapshot.nodes()[static_cast<std::size_t>(q.candidates[k])].features[kQueueLength];
          if (queue < best_queue) {
            best_queue = queue;
            best = static_cast<int>(k);
          }
        }
        return best;
      };
    }
    case BaselineKind::Random: {
      auto counter = std::make_shared<std::uint64_t>(0);
      return [counter, seed](const RouteQuery& q) {
        const double u = rng::u01(rng::key(seed, rng::tag::kPolicyRandom, (*counter)++));
        return static_cast<int>(std::min(q.candidates.size() - 1,
                                         static_cast<std::size_t>(u * static_cast<double>(q.candidates.size()))));
      };
    }
  }
  throw ValidationError("unknown policy kind");
}

// Picks whatever the counterfactual oracle would pick; accuracy 1 by
// construction, useful as a self-consistency check and an upper bound.
inline RoutingPolicy oracle_policy(const ServiceGraph& setup_graph) {
  auto model = std::make_shared<SimModel>(derive_sim_model(setup_graph));
  return [model](const RouteQuery& q) {
    return oracle_best_candidate(q.snapshot, *model, q.source, q.candidates);
  };
}

// Trained model plus the feature statistics it was trained with.
struct GnnModel {
  GnnParams params;
  FeatureStats stats;
};

inline RoutingPolicy gnn_policy(const GnnModel& model) {
  return [&model](const RouteQuery& q) {
    const ServiceGraph normalized = normalize_features(q.snapshot, model.stats);
    return decide(normalized, model.params, q.source, q.candidates).chosen;
  };
}

// Same architecture with Eq.-style attention disabled: coefficients pinned
// to 1/|N(i)|.
inline GnnConfig ablation_no_edge_attention(GnnConfig cfg) {
  cfg.uniform_attention = true;
  return cfg;
}

// Runs the policy-steered simulation, labels every decision with the frozen
// counterfactual oracle, and scores the three metrics. The latency and
// jitter "predictions" are per policy:
//  - gnn: the regression head on (source, chosen) embeddings
//  - oracle: the counterfactual expectation itself
//  - baselines: the chosen edge's latency_ewma, and (1 - stability) *
//    latency_ewma for jitter, read from the decision-time snapshot
// Actual latency is the realized hop latency; measured jitter is the
// trailing-32-observation deviation on the chosen edge at end of run.
inline MetricsReport evaluate(const ServiceGraph& g, const WorkloadSpec& w,
                              const std::string& policy_name, const GnnModel* model = nullptr) {
  RoutingPolicy policy;
  const bool is_gnn = policy_name == "gnn";
  const bool is_oracle = policy_name == "oracle";
  if (is_gnn) {
    if (model == nullptr) throw ValidationError("gnn policy requires trained params");
    policy = gnn_policy(*model);
  } else if (is_oracle) {
    policy = oracle_policy(g);
  } else {
    policy = baseline_policy(baseline_kind_from_name(policy_name), g, w.seed);
  }

  const SimResult result = run_simulation(g, w, policy, true);
  if (result.samples.empty()) throw ValidationError("no routing decisions happened; raise arrival_rate or horizon");

  std::vector<std::pair<int, int>> decisions;
  decisions.reserve(result.samples.size());
  for (std::size_t k = 0; k < result.samples.size(); ++k)
    decisions.emplace_back(result.outcomes[k].chosen_index, result.samples[k].oracle_best);

  std::map<int, double> measured_jitter_by_edge;
  std::vector<double> pred_latency, actual_latency, pred_jitter, measured_jitter;
  for (std::size_t k = 0; k < result.samples.size(); ++k) {
    const DecisionSample& s = result.samples[k];
    const DecisionOutcome& o = result.outcomes[k];
    if (!o.completed) continue;
    const std::size_t chosen = static_cast<std::size_t>(o.chosen_index);
    const int chosen_node = s.candidates[chosen];

    double lat_pred = 0.0;
    double jit_pred = 0.0;
    if (is_gnn) {
      const ServiceGraph normalized = normalize_features(s.snapshot, model->stats);
      const Embeddings emb = encode(normalized, model->params);
      const auto pair = predict_path_metrics(emb.final().row(static_cast<std::size_t>(s.source)),
                                             emb.final().row(static_cast<std::size_t>(chosen_node)),
                                             model->params);
      lat_pred = pair.first;
      jit_pred = pair.second;
    } else if (is_oracle) {
      lat_pred = s.realized_latency_ms[chosen];
      jit_pred = s.realized_jitter_ms[chosen];
    } else {
      const int e = s.snapshot.find_edge(s.source, chosen_node);
      const auto& f = s.snapshot.edges()[static_cast<std::size_t>(e)].features;
      lat_pred = f[kLatencyEwma];
      jit_pred = (1.0 - f[kStability]) * f[kLatencyEwma];
    }
    pred_latency.push_back(lat_pred);
    actual_latency.push_back(o.realized_latency_ms);
    pred_jitter.push_back(jit_pred);
    auto it = measured_jitter_by_edge.find(o.edge_index);
    if (it == measured_jitter_by_edge.end()) {
      const auto& edge = g.edges()[static_cast<std::size_t>(o.edge_index)];
      it = measured_jitter_by_edge
               .emplace(o.edge_index, measure_jitter(result.trace, {edge.src, edge.dst}, 32))
               .first;
    }
    measured_jitter.push_back(it->second);
  }
  if (pred_latency.empty()) throw ValidationError("no decision completed before the horizon");

  MetricsReport report;
  report.policy = policy_name;
  report.mean_relative_error = mean_relative_error(pred_latency, actual_latency);
  report.jitter_prediction_error_ms = jitter_prediction_error(pred_jitter, measured_jitter);
  report.routing_decision_accuracy = routing_accuracy(decisions);
  report.n_decisions = static_cast<int>(decisions.size());
  report.config_echo = "arrival_rate=" + std::to_string(w.arrival_rate) +
                       ",horizon=" + std::to_string(w.horizon) + ",seed=" + std::to_string(w.seed);
  return report;
}

// One experiment cell: generate/simulate/train/evaluate with derived seeds.
struct ExperimentConfig {
  bool use_social_preset = true;
  TopologySpec topology;  // used when use_social_preset is false
  int preset_replicas = 3;
  WorkloadSpec workload;
  GnnConfig gnn;
  TrainConfig train;
};

inline ServiceGraph experiment_topology(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.use_social_preset) {
    const SocialPreset preset = social_network_preset();
    return expand_topology(preset.logical, cfg.preset_replicas, seed);
  }
  TopologySpec spec = cfg.topology;
  spec.seed = seed;
  return generate_topology(spec);
}

// Collect training data under a seeded uniform-random policy (broad state
// coverage), fit, then evaluate the trained policy on a fresh workload seed.
inline MetricsReport run_experiment_cell(const ExperimentConfig& cfg, std::uint64_t seed) {
  const ServiceGraph g = experiment_topology(cfg, rng::mix(seed, 1));

  WorkloadSpec collect_w = cfg.workload;
  collect_w.seed = rng::mix(seed, 2);
  SimResult collected = run_simulation(g, collect_w, baseline_policy(BaselineKind::Random, g, rng::mix(seed, 3)), true);

  Dataset ds = make_dataset(std::move(collected.samples), rng::mix(seed, 4));
  GnnConfig gnn_cfg = cfg.gnn;
  gnn_cfg.seed = rng::mix(seed, 5);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = rng::mix(seed, 6);
  auto [params, train_report] = train_model(ds, gnn_cfg, train_cfg);
  if (train_report.diverged) throw NumericalDivergence("training diverged in sweep cell");

  GnnModel model{std::move(params), ds.stats};
  WorkloadSpec eval_w = cfg.workload;
  eval_w.seed = rng::mix(seed, 7);
  return evaluate(g, eval_w, "gnn", &model);
}

struct SweepRow {
  double param = 0.0;
  int seed_count = 0;
  double mre_mean = 0.0, mre_std = 0.0;
  double jitter_mean = 0.0, jitter_std = 0.0;
  double acc_mean = 0.0, acc_std = 0.0;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

inline SweepRow aggregate_row(double param, const std::vector<MetricsReport>& reports) {
  std::vector<double> mre, jitter, acc;
  for (const auto& r : reports) {
    mre.push_back(r.mean_relative_error);
    jitter.push_back(r.jitter_prediction_error_ms);
    acc.push_back(r.routing_decision_accuracy);
  }
  SweepRow row;
  row.param = param;
  row.seed_count = static_cast<int>(reports.size());
  std::tie(row.mre_mean, row.mre_std) = mean_std(mre);
  std::tie(row.jitter_mean, row.jitter_std) = mean_std(jitter);
  std::tie(row.acc_mean, row.acc_std) = mean_std(acc);
  return row;
}

}  // namespace detail

// Trains and evaluates one model per (layer count, seed); cells run in fixed
// order so the table is deterministic.
inline std::vector<SweepRow> depth_sweep(const ExperimentConfig& base, const std::vector<int>& layers,
                                         const std::vector<std::uint64_t>& seeds) {
  if (layers.empty()) throw ValidationError("empty layer list");
  if (seeds.empty()) throw ValidationError("empty seed list");
  std::vector<SweepRow> rows;
  for (int n_layers : layers) {
    ExperimentConfig cfg = base;
    cfg.gnn.n_layers = n_layers;
    std::vector<MetricsReport> reports;
    for (std::uint64_t seed : seeds) reports.push_back(run_experiment_cell(cfg, seed));
    rows.push_back(detail::aggregate_row(static_cast<double>(n_layers), reports));
  }
  return rows;
}

// One generated topology per (avg out-degree, seed).
inline std::vector<SweepRow> density_sweep(const ExperimentConfig& base,
                                           const std::vector<double>& degrees,
                                           const std::vector<std::uint64_t>& seeds) {
  if (degrees.empty()) throw ValidationError("empty degree list");
  if (seeds.empty()) throw ValidationError("empty seed list");
  std::vector<SweepRow> rows;
  for (double degree : degrees) {
    ExperimentConfig cfg = base;
    cfg.use_social_preset = false;
    cfg.topology.avg_out_degree = degree;
    std::vector<MetricsReport> reports;
    for (std::uint64_t seed : seeds) reports.push_back(run_experiment_cell(cfg, seed));
    rows.push_back(detail::aggregate_row(degree, reports));
  }
  return rows;
}

// Literature reference values, echoed in reports for context only and never
// asserted: edge-attention GNN 0.072 MRE / 5.92 ms / 91.4% vs OSPF 0.153 /
// 11.36 ms / 75.6%; reported optima at 4 layers and out-degree 2.5.
inline std::string literature_reference_note() {
  return "literature reference (not asserted): edge-attention GNN MRE 0.072, jitter 5.92 ms, "
         "accuracy 91.4% vs OSPF MRE 0.153, jitter 11.36 ms, accuracy 75.6%; reported optima: "
         "4 layers, avg out-degree 2.5";
}

}  // namespace routelab

#endif  // ROUTELAB_EVAL_HPP
