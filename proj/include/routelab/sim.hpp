#ifndef ROUTELAB_SIM_HPP
#define ROUTELAB_SIM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "routelab/error.hpp"
#include "routelab/graph.hpp"
#include "routelab/rng.hpp"

namespace routelab {

struct WorkloadSpec {
  double arrival_rate = 100.0;  // requests / second at the entry service
  double horizon = 10.0;        // simulated seconds
  std::uint64_t seed = 0;
  double burst_factor = 1.0;  // rate multiplier inside the burst window
  double ewma_alpha = 0.2;
};

inline void validate(const WorkloadSpec& w) {
  if (!(w.arrival_rate > 0.0)) throw ValidationError("arrival_rate must be > 0");
  if (!(w.horizon > 0.0)) throw ValidationError("horizon must be > 0");
  if (!(w.burst_factor >= 1.0)) throw ValidationError("burst_factor must be >= 1");
  if (!(w.ewma_alpha > 0.0 && w.ewma_alpha <= 1.0)) throw ValidationError("ewma_alpha must be in (0, 1]");
}

struct HopRecord {
  int src = -1;  // -1 for the entry hop (no upstream link)
  int dst = 0;
  double t_enter_ms = 0.0;  // time the hop was initiated at src
  double queue_ms = 0.0;
  double latency_ms = 0.0;  // link + queue wait + service
};

struct RequestRecord {
  int request_id = 0;
  double t_enter_ms = 0.0;
  std::vector<HopRecord> hops;  // appended as hops complete
};

struct Trace {
  std::vector<RequestRecord> records;  // one per injected request, entry-time order
  int completed_count = 0;
  int inflight_at_horizon = 0;
};

// One routing decision point. The snapshot carries raw (unnormalized)
// telemetry so the oracle stays recomputable from the stored sample;
// normalization statistics are attached at dataset level.
struct DecisionSample {
  ServiceGraph snapshot;
  int source = 0;
  std::vector<int> candidates;  // node ids, ascending
  int oracle_best = 0;
  std::vector<double> realized_latency_ms;  // deterministic counterfactual per candidate
  std::vector<double> realized_jitter_ms;
};

// Links decision k back to what the simulation actually did with it.
struct DecisionOutcome {
  int request_id = 0;
  int hop_index = 0;
  int edge_index = 0;    // edge source -> chosen
  int chosen_index = 0;  // index into candidates
  bool completed = false;
  double realized_latency_ms = 0.0;
};

struct RouteQuery {
  int source;
  const std::vector<int>& candidates;
  const ServiceGraph& snapshot;
  int decision_index;
};

// Returns an index into candidates.
using RoutingPolicy = std::function<int(const RouteQuery&)>;

struct SimResult {
  Trace trace;
  std::vector<DecisionSample> samples;
  std::vector<DecisionOutcome> outcomes;
};

// Static per-run quantities derived from the input graph. Service means come
// from a fixed hash of the service id (the graph carries no rate column) and
// link noise comes from the edge's initial latency and stability, so the
// whole simulation is a pure function of (graph, workload).
struct SimModel {
  std::vector<double> service_mean_ms;  // per node; replicas of a service share it
  std::vector<double> link_mu;          // per edge: ln(base latency)
  std::vector<double> link_sigma;       // per edge: 1 - stability

  double mean_service_ms(int node) const { return service_mean_ms[static_cast<std::size_t>(node)]; }
  double mean_link_ms(int e) const {
    const double s = link_sigma[static_cast<std::size_t>(e)];
    return std::exp(link_mu[static_cast<std::size_t>(e)] + 0.5 * s * s);
  }
  double var_link_ms2(int e) const {
    const double s = link_sigma[static_cast<std::size_t>(e)];
    const double m = mean_link_ms(e);
    return m * m * (std::exp(s * s) - 1.0);
  }
};

inline double service_mean_from_id(int service_id) {
  return rng::uniform(rng::key(0x5EC5, rng::tag::kServiceMean, static_cast<std::uint64_t>(service_id)),
                      2.0, 8.0);
}

inline SimModel derive_sim_model(const ServiceGraph& g) {
  SimModel m;
  m.service_mean_ms.resize(g.nodes().size());
  for (int i = 0; i < g.node_count(); ++i)
    m.service_mean_ms[static_cast<std::size_t>(i)] = service_mean_from_id(g.service_of(i));
  m.link_mu.resize(g.edges().size());
  m.link_sigma.resize(g.edges().size());
  for (int e = 0; e < g.edge_count(); ++e) {
    const auto& f = g.edges()[static_cast<std::size_t>(e)].features;
    m.link_mu[static_cast<std::size_t>(e)] = std::log(std::max(f[kLatencyEwma], 1e-9));
    m.link_sigma[static_cast<std::size_t>(e)] = std::max(0.0, 1.0 - f[kStability]);
  }
  return m;
}

// Deterministic counterfactual hop-completion latency for one candidate,
// under the frozen state captured by the snapshot: expected link latency plus
// (backlog + 1) expected service draws (exponential service is memoryless,
// so the in-service residual counts as one full mean).
inline double counterfactual_latency_ms(const ServiceGraph& snapshot, const SimModel& model,
                                        int source, int candidate) {
  const int e = snapshot.find_edge(source, candidate);
  if (e < 0) throw ValidationError("no edge " + std::to_string(source) + "->" + std::to_string(candidate));
  const double backlog = snapshot.nodes()[static_cast<std::size_t>(candidate)].features[kQueueLength];
  return model.mean_link_ms(e) + (backlog + 1.0) * model.mean_service_ms(candidate);
}

// Analytic standard deviation of the same counterfactual completion time.
inline double counterfactual_jitter_ms(const ServiceGraph& snapshot, const SimModel& model,
                                       int source, int candidate) {
  const int e = snapshot.find_edge(source, candidate);
  if (e < 0) throw ValidationError("no edge " + std::to_string(source) + "->" + std::to_string(candidate));
  const double backlog = snapshot.nodes()[static_cast<std::size_t>(candidate)].features[kQueueLength];
  const double ms = model.mean_service_ms(candidate);
  return std::sqrt(model.var_link_ms2(e) + (backlog + 1.0) * ms * ms);
}

// Argmin of counterfactual latency; ties resolve to the lowest index.
inline int oracle_best_candidate(const ServiceGraph& snapshot, const SimModel& model, int source,
                                 const std::vector<int>& candidates) {
  if (candidates.empty()) throw ValidationError("empty candidate set");
  int best = 0;
  double best_latency = counterfactual_latency_ms(snapshot, model, source, candidates[0]);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double lat = counterfactual_latency_ms(snapshot, model, source, candidates[k]);
    if (lat < best_latency) {
      best_latency = lat;
      best = static_cast<int>(k);
    }
  }
  return best;
}

// Population standard deviation of the last `window` realized hop latencies
// on the given edge; fewer than 2 observations yields 0.
inline double measure_jitter(const Trace& trace, std::pair<int, int> edge, int window) {
  if (window < 1) throw ValidationError("window must be >= 1");
  std::vector<std::pair<double, double>> obs;  // (t_enter, latency)
  for (const auto& rec : trace.records)
    for (const auto& hop : rec.hops)
      if (hop.src == edge.first && hop.dst == edge.second) obs.emplace_back(hop.t_enter_ms, hop.latency_ms);
  std::stable_sort(obs.begin(), obs.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t take = std::min(obs.size(), static_cast<std::size_t>(window));
  if (take < 2) return 0.0;
  const auto first = obs.end() - static_cast<std::ptrdiff_t>(take);
  double mean = 0.0;
  for (auto it = first; it != obs.end(); ++it) mean += it->second;
  mean /= static_cast<double>(take);
  double var = 0.0;
  for (auto it = first; it != obs.end(); ++it) var += (it->second - mean) * (it->second - mean);
  return std::sqrt(var / static_cast<double>(take));
}

namespace detail {

inline double ewma(double value, double sample, double alpha) {
  return value + alpha * (sample - value);
}

// Busy-time bookkeeping over a trailing window, as a list of closed busy
// intervals plus an optional open one.
class BusyMeter {
 public:
  void on_start(double t) { intervals_.push_back({t, kOpen}); }
  void on_stop(double t) { intervals_.back().second = t; }

  double busy_fraction(double now, double window) const {
    const double lo = now - window;
    while (!intervals_.empty() && intervals_.front().second != kOpen &&
           intervals_.front().second <= lo) {
      intervals_.pop_front();
    }
    double busy = 0.0;
    for (const auto& [start, end] : intervals_) {
      const double hi = (end == kOpen) ? now : std::min(end, now);
      busy += std::max(0.0, hi - std::max(start, lo));
    }
    return std::clamp(busy / window, 0.0, 1.0);
  }

 private:
  static constexpr double kOpen = std::numeric_limits<double>::infinity();
  mutable std::deque<std::pair<double, double>> intervals_;
};

inline constexpr double kTelemetryWindowMs = 1000.0;
// Arrival bursts occupy the first 20% of every 1-second period.
inline constexpr double kBurstPeriodS = 1.0;
inline constexpr double kBurstDuty = 0.2;

class Simulation {
 public:
  Simulation(const ServiceGraph& g, const WorkloadSpec& w)
      : graph_(g), workload_(w), model_(derive_sim_model(g)) {
    node_states_.resize(g.nodes().size());
    for (int i = 0; i < graph_.node_count(); ++i) {
      node_states_[static_cast<std::size_t>(i)].resp_ewma =
          graph_.nodes()[static_cast<std::size_t>(i)].features[kResponseTimeEwma];
    }
    edge_states_.resize(g.edges().size());
    for (int e = 0; e < graph_.edge_count(); ++e) {
      edge_states_[static_cast<std::size_t>(e)].lat_ewma =
          graph_.edges()[static_cast<std::size_t>(e)].features[kLatencyEwma];
    }
    // Per-node list of distinct downstream services and candidate replicas.
    successors_.resize(g.nodes().size());
    for (int i = 0; i < graph_.node_count(); ++i) {
      std::vector<int> services;
      for (int e : graph_.out_edges(i)) {
        const int svc = graph_.service_of(graph_.edges()[static_cast<std::size_t>(e)].dst);
        if (std::find(services.begin(), services.end(), svc) == services.end())
          services.push_back(svc);
      }
      std::sort(services.begin(), services.end());
      successors_[static_cast<std::size_t>(i)] = std::move(services);
    }
    for (int i = 0; i < graph_.node_count(); ++i)
      if (graph_.service_of(i) == 0) entry_replicas_.push_back(i);
  }

  SimResult run(const RoutingPolicy& policy, bool collect_samples) {
    if (entry_replicas_.empty()) throw ValidationError("graph has no replicas of entry service 0");
    SimResult result;
    const double horizon_ms = workload_.horizon * 1000.0;
    schedule_arrivals(result.trace, horizon_ms);

    while (!events_.empty()) {
      const Event ev = events_.top();
      if (ev.t > horizon_ms) break;
      events_.pop();
      if (ev.kind == EventKind::Arrive) {
        handle_arrival(ev.t, ev.job);
      } else {
        handle_service_done(ev.t, ev.node, policy, collect_samples, result);
      }
    }
    result.trace.completed_count = completed_;
    result.trace.inflight_at_horizon =
        static_cast<int>(result.trace.records.size()) - completed_;
    return result;
  }

  // Immutable copy of the graph with current telemetry as features.
  ServiceGraph snapshot_features(double now_ms) const {
    std::vector<NodeRecord> nodes = graph_.nodes();
    std::vector<EdgeRecord> edges = graph_.edges();
    for (int i = 0; i < graph_.node_count(); ++i) {
      const auto& st = node_states_[static_cast<std::size_t>(i)];
      auto& f = nodes[static_cast<std::size_t>(i)].features;
      f[kCpuUtilization] = st.meter.busy_fraction(now_ms, kTelemetryWindowMs);
      f[kResponseTimeEwma] = st.resp_ewma;
      f[kQueueLength] = static_cast<double>(st.in_system);
    }
    for (int e = 0; e < graph_.edge_count(); ++e) {
      auto& st = edge_states_[static_cast<std::size_t>(e)];
      while (!st.call_times.empty() && st.call_times.front() <= now_ms - kTelemetryWindowMs)
        st.call_times.pop_front();
      auto& f = edges[static_cast<std::size_t>(e)].features;
      f[kLatencyEwma] = st.lat_ewma;
      f[kCallFrequency] = static_cast<double>(st.call_times.size());
    }
    return ServiceGraph(std::move(nodes), std::move(edges), graph_.service_map());
  }

  const SimModel& model() const { return model_; }

 private:
  struct Job {
    int request_id = 0;
    int hop = 0;
    int src_node = -1;
    int edge = -1;
    int decision = -1;  // index into outcomes, -1 for the entry hop
    int node = 0;
    double t_hop_start = 0.0;
    double t_queue_enter = 0.0;
    double t_service_start = 0.0;
  };

  enum class EventKind { Arrive, ServiceDone };

  struct Event {
    double t;
    std::uint64_t seq;
    EventKind kind;
    int node;
    Job job;
  };

  struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
      if (a.t != b.t) return a.t > b.t;
      return a.seq > b.seq;
    }
  };

  struct NodeState {
    std::deque<Job> waiting;
    bool busy = false;
    Job current;
    int in_system = 0;
    double resp_ewma = 0.0;
    BusyMeter meter;
  };

  struct EdgeState {
    double lat_ewma = 0.0;
    std::deque<double> call_times;
  };

  void push_event(double t, EventKind kind, int node, Job job = {}) {
    events_.push(Event{t, seq_++, kind, node, std::move(job)});
  }

  // Thinned Poisson process; burst windows raise the instantaneous rate to
  // arrival_rate * burst_factor.
  void schedule_arrivals(Trace& trace, double horizon_ms) {
    rng::Stream s(rng::key(workload_.seed, rng::tag::kArrival));
    const double rate_max = workload_.arrival_rate * workload_.burst_factor;
    double t_s = 0.0;
    int request_id = 0;
    while (true) {
      t_s += -std::log1p(-s.next_u01()) / rate_max;
      if (t_s * 1000.0 > horizon_ms) break;
      const bool in_burst = std::fmod(t_s, kBurstPeriodS) < kBurstDuty * kBurstPeriodS;
      const double rate = in_burst ? rate_max : workload_.arrival_rate;
      if (s.next_u01() >= rate / rate_max) continue;
      const double t_ms = t_s * 1000.0;
      const int entry = pick_entry_replica(request_id);
      Job job;
      job.request_id = request_id;
      job.node = entry;
      job.t_hop_start = t_ms;
      job.t_queue_enter = t_ms;
      push_event(t_ms, EventKind::Arrive, entry, job);
      trace.records.push_back(RequestRecord{request_id, t_ms, {}});
      ++request_id;
    }
  }

  int pick_entry_replica(int request_id) const {
    const double u =
        rng::u01(rng::key(workload_.seed, rng::tag::kEntryReplica, static_cast<std::uint64_t>(request_id)));
    const std::size_t k = std::min(entry_replicas_.size() - 1,
                                   static_cast<std::size_t>(u * static_cast<double>(entry_replicas_.size())));
    return entry_replicas_[k];
  }

  void handle_arrival(double t, const Job& job) {
    NodeState& st = node_states_[static_cast<std::size_t>(job.node)];
    ++st.in_system;
    if (!st.busy) {
      start_service(t, job.node, job);
    } else {
      st.waiting.push_back(job);
    }
  }

  void start_service(double t, int node, Job job) {
    NodeState& st = node_states_[static_cast<std::size_t>(node)];
    st.busy = true;
    job.t_service_start = t;
    st.current = job;
    st.meter.on_start(t);
    const double svc = rng::exponential(
        rng::key(workload_.seed, rng::tag::kService, static_cast<std::uint64_t>(job.request_id),
                 static_cast<std::uint64_t>(job.hop)),
        model_.mean_service_ms(node));
    push_event(t + svc, EventKind::ServiceDone, node);
  }

  void handle_service_done(double t, int node, const RoutingPolicy& policy, bool collect,
                           SimResult& result) {
    NodeState& st = node_states_[static_cast<std::size_t>(node)];
    const Job job = st.current;
    st.meter.on_stop(t);
    st.busy = false;
    --st.in_system;

    const double wait_ms = job.t_service_start - job.t_queue_enter;
    const double service_ms = t - job.t_service_start;
    const double hop_latency = t - job.t_hop_start;

    st.resp_ewma = ewma(st.resp_ewma, wait_ms + service_ms, workload_.ewma_alpha);
    if (job.edge >= 0) {
      EdgeState& es = edge_states_[static_cast<std::size_t>(job.edge)];
      es.lat_ewma = ewma(es.lat_ewma, hop_latency, workload_.ewma_alpha);
    }
    result.trace.records[static_cast<std::size_t>(job.request_id)].hops.push_back(
        HopRecord{job.src_node, node, job.t_hop_start, wait_ms, hop_latency});
    if (job.decision >= 0) {
      result.outcomes[static_cast<std::size_t>(job.decision)].completed = true;
      result.outcomes[static_cast<std::size_t>(job.decision)].realized_latency_ms = hop_latency;
    }

    route_onward(t, node, job, policy, collect, result);

    if (!st.waiting.empty()) {
      const Job next = st.waiting.front();
      st.waiting.pop_front();
      start_service(t, node, next);
    }
  }

  void route_onward(double t, int node, const Job& job, const RoutingPolicy& policy, bool collect,
                    SimResult& result) {
    const auto& services = successors_[static_cast<std::size_t>(node)];
    if (services.empty()) {
      ++completed_;
      return;
    }
    const double u = rng::u01(rng::key(workload_.seed, rng::tag::kPath,
                                       static_cast<std::uint64_t>(job.request_id),
                                       static_cast<std::uint64_t>(job.hop)));
    const std::size_t si =
        std::min(services.size() - 1, static_cast<std::size_t>(u * static_cast<double>(services.size())));
    const int next_service = services[si];

    std::vector<int> candidates;
    for (int e : graph_.out_edges(node)) {
      const int dst = graph_.edges()[static_cast<std::size_t>(e)].dst;
      if (graph_.service_of(dst) == next_service) candidates.push_back(dst);
    }

    const int decision_index = static_cast<int>(result.outcomes.size());
    const ServiceGraph snapshot = snapshot_features(t);
    const int choice = policy(RouteQuery{node, candidates, snapshot, decision_index});
    if (choice < 0 || choice >= static_cast<int>(candidates.size())) {
      throw ValidationError("policy returned out-of-range index " + std::to_string(choice) +
                            " at decision " + std::to_string(decision_index) + " (source node " +
                            std::to_string(node) + ", " + std::to_string(candidates.size()) +
                            " candidates)");
    }
    const int chosen = candidates[static_cast<std::size_t>(choice)];
    const int edge = graph_.find_edge(node, chosen);
    edge_states_[static_cast<std::size_t>(edge)].call_times.push_back(t);

    result.outcomes.push_back(DecisionOutcome{job.request_id, job.hop + 1, edge, choice, false, 0.0});
    if (collect) {
      DecisionSample sample;
      sample.source = node;
      sample.candidates = candidates;
      sample.realized_latency_ms.reserve(candidates.size());
      sample.realized_jitter_ms.reserve(candidates.size());
      for (int c : candidates) {
        sample.realized_latency_ms.push_back(counterfactual_latency_ms(snapshot, model_, node, c));
        sample.realized_jitter_ms.push_back(counterfactual_jitter_ms(snapshot, model_, node, c));
      }
      sample.oracle_best = oracle_best_candidate(snapshot, model_, node, candidates);
      sample.snapshot = snapshot;
      result.samples.push_back(std::move(sample));
    }

    const double z = rng::normal(rng::key(workload_.seed, rng::tag::kLink,
                                          static_cast<std::uint64_t>(job.request_id),
                                          static_cast<std::uint64_t>(job.hop)));
    const double link_ms = std::exp(model_.link_mu[static_cast<std::size_t>(edge)] +
                                    model_.link_sigma[static_cast<std::size_t>(edge)] * z);

    Job next;
    next.request_id = job.request_id;
    next.hop = job.hop + 1;
    next.src_node = node;
    next.edge = edge;
    next.decision = decision_index;
    next.node = chosen;
    next.t_hop_start = t;
    next.t_queue_enter = t + link_ms;
    push_event(t + link_ms, EventKind::Arrive, chosen, next);
  }

  const ServiceGraph& graph_;
  WorkloadSpec workload_;
  SimModel model_;
  std::vector<NodeState> node_states_;
  mutable std::vector<EdgeState> edge_states_;
  std::vector<std::vector<int>> successors_;
  std::vector<int> entry_replicas_;
  std::priority_queue<Event, std::vector<Event>, EventOrder> events_;
  std::uint64_t seq_ = 0;
  int completed_ = 0;
};

}  // namespace detail

// Event-driven simulation of request traffic. Requests enter at service 0,
// walk one root-to-sink path of the logical call graph, and at each hop the
// policy picks one replica among the downstream service's replicas. Bitwise
// deterministic in (g, w, policy).
inline SimResult run_simulation(const ServiceGraph& g, const WorkloadSpec& w,
                                const RoutingPolicy& policy, bool collect_samples) {
  validate(w);
  const auto validation = validate_graph(g);
  if (!validation.ok()) {
    throw ValidationError("invalid graph: " + validation.violations.front().detail);
  }
  if (g.node_count() == 0) throw ValidationError("empty graph");
  detail::Simulation sim(g, w);
  return sim.run(policy, collect_samples);
}

}  // namespace routelab

#endif  // ROUTELAB_SIM_HPP
