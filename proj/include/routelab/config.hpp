#ifndef ROUTELAB_CONFIG_HPP
#define ROUTELAB_CONFIG_HPP

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "routelab/error.hpp"
#include "routelab/eval.hpp"
#include "routelab/gnn.hpp"
#include "routelab/sim.hpp"
#include "routelab/topology.hpp"
#include "routelab/train.hpp"

namespace routelab {

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& section) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (key == k) known = true;
    if (!known) throw ConfigError("unknown key \"" + key + "\" in " + section);
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for \"" + std::string(key) + "\": " + e.what());
    }
  }
}

}  // namespace detail

inline TopologySpec topology_from_json(const json& j) {
  detail::check_keys(j, {"preset", "n_services", "replicas_per_service", "avg_out_degree", "seed", "layered"},
                     "topology");
  TopologySpec spec;
  detail::read_field(j, "n_services", spec.n_services);
  detail::read_field(j, "replicas_per_service", spec.replicas_per_service);
  detail::read_field(j, "avg_out_degree", spec.avg_out_degree);
  detail::read_field(j, "seed", spec.seed);
  detail::read_field(j, "layered", spec.layered);
  return spec;
}

inline WorkloadSpec workload_from_json(const json& j) {
  detail::check_keys(j, {"arrival_rate", "horizon", "seed", "burst_factor", "ewma_alpha"}, "workload");
  WorkloadSpec w;
  detail::read_field(j, "arrival_rate", w.arrival_rate);
  detail::read_field(j, "horizon", w.horizon);
  detail::read_field(j, "seed", w.seed);
  detail::read_field(j, "burst_factor", w.burst_factor);
  detail::read_field(j, "ewma_alpha", w.ewma_alpha);
  return w;
}

inline GnnConfig gnn_from_json(const json& j) {
  detail::check_keys(j, {"n_layers", "embed_dim", "mlp_hidden", "leaky_slope", "seed", "uniform_attention"},
                     "gnn");
  GnnConfig c;
  detail::read_field(j, "n_layers", c.n_layers);
  detail::read_field(j, "embed_dim", c.embed_dim);
  detail::read_field(j, "mlp_hidden", c.mlp_hidden);
  detail::read_field(j, "leaky_slope", c.leaky_slope);
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "uniform_attention", c.uniform_attention);
  return c;
}

inline TrainConfig train_from_json(const json& j) {
  detail::check_keys(j,
                     {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps",
                      "loss_weight_regression", "seed", "grad_clip_norm"},
                     "train");
  TrainConfig c;
  detail::read_field(j, "epochs", c.epochs);
  detail::read_field(j, "batch_size", c.batch_size);
  detail::read_field(j, "learning_rate", c.learning_rate);
  detail::read_field(j, "beta1", c.beta1);
  detail::read_field(j, "beta2", c.beta2);
  detail::read_field(j, "adam_eps", c.adam_eps);
  detail::read_field(j, "loss_weight_regression", c.loss_weight_regression);
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "grad_clip_norm", c.grad_clip_norm);
  return c;
}

// Self-describing per-run configuration; section names match the type
// definitions one to one.
struct RunConfig {
  std::optional<std::string> preset;  // "social" replaces generated topology
  TopologySpec topology;
  WorkloadSpec workload;
  GnnConfig gnn;
  TrainConfig train;
  std::string collect_policy = "random";
  std::vector<std::string> eval_policies = {"gnn", "static-shortest", "round-robin",
                                            "least-connections", "random"};
  std::vector<int> sweep_layers = {2, 3, 4, 5, 6};
  std::vector<double> sweep_degrees = {1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
  std::vector<std::uint64_t> sweep_seeds = {1, 2};
  json raw;  // canonical echo for hashing and provenance
};

// A single global seed fans out into decoupled per-component seeds.
inline void apply_seed_override(RunConfig& cfg, std::uint64_t seed) {
  cfg.topology.seed = rng::mix(seed, 0x701);
  cfg.workload.seed = rng::mix(seed, 0x702);
  cfg.gnn.seed = rng::mix(seed, 0x703);
  cfg.train.seed = rng::mix(seed, 0x704);
  cfg.raw["seed"] = seed;
}

inline RunConfig run_config_from_json(const json& j) {
  detail::check_keys(j,
                     {"seed", "topology", "workload", "gnn", "train", "collect_policy",
                      "eval_policies", "sweep_layers", "sweep_degrees", "sweep_seeds"},
                     "config");
  RunConfig cfg;
  if (j.contains("topology")) {
    const auto& t = j.at("topology");
    if (t.contains("preset")) {
      const auto name = t.at("preset").get<std::string>();
      if (name != "social") throw ConfigError("unknown topology preset: " + name);
      cfg.preset = name;
      const SocialPreset preset = social_network_preset();
      cfg.topology = preset.spec;
      detail::read_field(t, "replicas_per_service", cfg.topology.replicas_per_service);
      detail::read_field(t, "seed", cfg.topology.seed);
      detail::check_keys(t, {"preset", "replicas_per_service", "seed"}, "topology");
    } else {
      cfg.topology = topology_from_json(t);
    }
  }
  if (j.contains("workload")) cfg.workload = workload_from_json(j.at("workload"));
  if (j.contains("gnn")) cfg.gnn = gnn_from_json(j.at("gnn"));
  if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
  detail::read_field(j, "collect_policy", cfg.collect_policy);
  detail::read_field(j, "eval_policies", cfg.eval_policies);
  detail::read_field(j, "sweep_layers", cfg.sweep_layers);
  detail::read_field(j, "sweep_degrees", cfg.sweep_degrees);
  detail::read_field(j, "sweep_seeds", cfg.sweep_seeds);
  if (j.contains("seed")) {
    std::uint64_t seed = 0;
    detail::read_field(j, "seed", seed);
    cfg.raw = j;
    apply_seed_override(cfg, seed);
    return cfg;
  }
  cfg.raw = j;
  return cfg;
}

inline RunConfig load_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return run_config_from_json(j);
}

// FNV-1a over the canonical config dump; names the run directory.
inline std::string config_hash(const json& canonical, const std::string& command) {
  const std::string text = command + "\n" + canonical.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 12);
}

inline ExperimentConfig experiment_from_run_config(const RunConfig& cfg) {
  ExperimentConfig e;
  e.use_social_preset = cfg.preset.has_value();
  e.topology = cfg.topology;
  e.preset_replicas = cfg.topology.replicas_per_service;
  e.workload = cfg.workload;
  e.gnn = cfg.gnn;
  e.train = cfg.train;
  return e;
}

}  // namespace routelab

#endif  // ROUTELAB_CONFIG_HPP
