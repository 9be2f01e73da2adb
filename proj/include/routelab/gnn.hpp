#ifndef ROUTELAB_GNN_HPP
#define ROUTELAB_GNN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "routelab/error.hpp"
#include "routelab/graph.hpp"
#include "routelab/linalg.hpp"
#include "routelab/rng.hpp"

namespace routelab {

struct GnnConfig {
  int n_layers = 4;
  int embed_dim = 32;
  int node_dim = kNodeFeatureDim;
  int edge_dim = kEdgeFeatureDim;
  int mlp_hidden = 32;
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;
  // Ablation switch: attention coefficients pinned to 1/|N(i)|.
  bool uniform_attention = false;
};

inline void validate(const GnnConfig& c) {
  if (c.n_layers < 1) throw ValidationError("n_layers must be >= 1");
  if (c.embed_dim < 1) throw ValidationError("embed_dim must be >= 1");
  if (c.mlp_hidden < 1) throw ValidationError("mlp_hidden must be >= 1");
  if (c.node_dim != kNodeFeatureDim || c.edge_dim != kEdgeFeatureDim)
    throw ValidationError("feature schema is fixed at 3 node + 3 edge dimensions");
}

// One propagation layer: self/neighbor transforms plus the attention score
// machinery. w1/w2 map the layer input to embed_dim; wq/wk map it to the
// attention space (also embed_dim wide); attn weighs [q ++ k ++ e].
struct LayerParams {
  Mat w1, w2, wq, wk;
  Vec attn;
};

// Two-layer perceptron with ReLU hidden activation.
struct MlpParams {
  Mat w1;
  Vec b1;
  Mat w2;
  Vec b2;
};

struct GnnParams {
  GnnConfig config;
  std::vector<LayerParams> layers;
  MlpParams scorer;     // [h_i ++ h_j] -> 1
  MlpParams regressor;  // [h_i ++ h_j] -> (latency, jitter) pre-softplus
};

// Visits every tensor in a fixed order; the same order backs the optimizer,
// finite differences, clipping and the snapshot format.
template <typename ParamsT, typename Fn>
void for_each_tensor(ParamsT& p, Fn&& fn) {
  for (auto& layer : p.layers) {
    fn(layer.w1.flat());
    fn(layer.w2.flat());
    fn(layer.wq.flat());
    fn(layer.wk.flat());
    fn(std::span(layer.attn));
  }
  auto mlp = [&fn](auto& m) {
    fn(m.w1.flat());
    fn(std::span(m.b1));
    fn(m.w2.flat());
    fn(std::span(m.b2));
  };
  mlp(p.scorer);
  mlp(p.regressor);
}

inline GnnParams make_zero_params(const GnnConfig& cfg) {
  validate(cfg);
  GnnParams p;
  p.config = cfg;
  const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::size_t d_in = l == 0 ? static_cast<std::size_t>(cfg.node_dim) : d;
    LayerParams lp;
    lp.w1 = Mat(d, d_in);
    lp.w2 = Mat(d, d_in);
    lp.wq = Mat(d, d_in);
    lp.wk = Mat(d, d_in);
    lp.attn = Vec(2 * d + static_cast<std::size_t>(cfg.edge_dim), 0.0);
    p.layers.push_back(std::move(lp));
  }
  const std::size_t hidden = static_cast<std::size_t>(cfg.mlp_hidden);
  p.scorer = MlpParams{Mat(hidden, 2 * d), Vec(hidden, 0.0), Mat(1, hidden), Vec(1, 0.0)};
  p.regressor = MlpParams{Mat(hidden, 2 * d), Vec(hidden, 0.0), Mat(2, hidden), Vec(2, 0.0)};
  return p;
}

inline GnnParams zeros_like(const GnnParams& p) { return make_zero_params(p.config); }

// Glorot-style uniform init in [-s, s], s = sqrt(6 / (fan_in + fan_out));
// biases stay zero. Deterministic in cfg.seed.
inline GnnParams init_params(const GnnConfig& cfg) {
  GnnParams p = make_zero_params(cfg);
  std::uint64_t ordinal = 0;
  auto fill_matrix = [&](Mat& m) {
    const double s = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    auto flat = m.flat();
    for (std::size_t i = 0; i < flat.size(); ++i) {
      flat[i] = (2.0 * rng::u01(rng::key(cfg.seed, rng::tag::kParamInit, ordinal, i)) - 1.0) * s;
    }
    ++ordinal;
  };
  auto fill_vector = [&](Vec& v) {
    const double s = std::sqrt(6.0 / static_cast<double>(1 + v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = (2.0 * rng::u01(rng::key(cfg.seed, rng::tag::kParamInit, ordinal, i)) - 1.0) * s;
    }
    ++ordinal;
  };
  for (auto& layer : p.layers) {
    fill_matrix(layer.w1);
    fill_matrix(layer.w2);
    fill_matrix(layer.wq);
    fill_matrix(layer.wk);
    fill_vector(layer.attn);
  }
  fill_matrix(p.scorer.w1);
  fill_matrix(p.scorer.w2);
  fill_matrix(p.regressor.w1);
  fill_matrix(p.regressor.w2);
  return p;
}

// Node embeddings per layer; layers[0] is the input feature matrix.
struct Embeddings {
  std::vector<Mat> layers;
  const Mat& final() const { return layers.back(); }
};

namespace detail {

inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }
inline double leaky_relu_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// Everything the backward pass needs from one layer's forward pass.
struct LayerCache {
  Mat q, k;    // n x d attention transforms of the layer input
  Mat w2h;     // n x d neighbor transform of the layer input
  Mat pre;     // n x d pre-activation output
  Vec z;       // per edge: attention logit before LeakyReLU
  Vec alpha;   // per edge: attention coefficient
};

inline void check_layer_shapes(const Mat& h, const LayerParams& lp, const GnnConfig& cfg) {
  const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
  if (lp.w1.cols() != h.cols() || lp.w2.cols() != h.cols() || lp.wq.cols() != h.cols() ||
      lp.wk.cols() != h.cols() || lp.w1.rows() != d || lp.attn.size() != 2 * d + static_cast<std::size_t>(cfg.edge_dim)) {
    throw ValidationError("layer shape mismatch: input dim " + std::to_string(h.cols()));
  }
}

// Forward pass of one layer; fills the cache when given one.
inline Mat layer_forward_impl(const Mat& h, const ServiceGraph& g, const LayerParams& lp,
                              const GnnConfig& cfg, LayerCache* cache) {
  check_layer_shapes(h, lp, cfg);
  const std::size_t n = static_cast<std::size_t>(g.node_count());
  const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
  const std::size_t n_edges = static_cast<std::size_t>(g.edge_count());

  Mat q(n, d), k(n, d), w2h(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    matvec(lp.wq, h.row(i), q.row(i));
    matvec(lp.wk, h.row(i), k.row(i));
    matvec(lp.w2, h.row(i), w2h.row(i));
  }

  Vec z(n_edges, 0.0), alpha(n_edges, 0.0);
  const std::span<const double> a(lp.attn);
  const auto aq = a.subspan(0, d);
  const auto ak = a.subspan(d, d);
  const auto ae = a.subspan(2 * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& out = g.out_edges(static_cast<int>(i));
    if (out.empty()) continue;
    if (cfg.uniform_attention) {
      const double w = 1.0 / static_cast<double>(out.size());
      for (int e : out) alpha[static_cast<std::size_t>(e)] = w;
      continue;
    }
    double max_u = -std::numeric_limits<double>::infinity();
    for (int e : out) {
      const auto& edge = g.edges()[static_cast<std::size_t>(e)];
      double logit = dot(aq, q.row(i)) + dot(ak, k.row(static_cast<std::size_t>(edge.dst)));
      for (std::size_t t = 0; t < ae.size(); ++t) logit += ae[t] * edge.features[t];
      z[static_cast<std::size_t>(e)] = logit;
      max_u = std::max(max_u, leaky_relu(logit, cfg.leaky_slope));
    }
    double denom = 0.0;
    for (int e : out) {
      const double u = leaky_relu(z[static_cast<std::size_t>(e)], cfg.leaky_slope);
      const double w = std::exp(u - max_u);
      alpha[static_cast<std::size_t>(e)] = w;
      denom += w;
    }
    for (int e : out) alpha[static_cast<std::size_t>(e)] /= denom;
  }

  Mat pre(n, d);
  Mat out_h(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    matvec(lp.w1, h.row(i), pre.row(i));
    auto pre_i = pre.row(i);
    for (int e : g.out_edges(static_cast<int>(i))) {
      const int j = g.edges()[static_cast<std::size_t>(e)].dst;
      axpy(alpha[static_cast<std::size_t>(e)], w2h.row(static_cast<std::size_t>(j)), pre_i);
    }
    for (std::size_t t = 0; t < d; ++t) out_h(i, t) = relu(pre_i[t]);
  }

  if (cache != nullptr) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->w2h = std::move(w2h);
    cache->pre = std::move(pre);
    cache->z = std::move(z);
    cache->alpha = std::move(alpha);
  }
  return out_h;
}

struct ForwardCache {
  Embeddings emb;
  std::vector<LayerCache> layers;
};

inline ForwardCache encode_with_cache(const ServiceGraph& g, const GnnParams& p) {
  ForwardCache fc;
  const std::size_t n = static_cast<std::size_t>(g.node_count());
  Mat h0(n, static_cast<std::size_t>(p.config.node_dim));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = g.nodes()[i].features;
    for (int t = 0; t < p.config.node_dim; ++t) h0(i, static_cast<std::size_t>(t)) = f[static_cast<std::size_t>(t)];
  }
  fc.emb.layers.push_back(std::move(h0));
  fc.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    fc.emb.layers.push_back(
        layer_forward_impl(fc.emb.layers.back(), g, p.layers[l], p.config, &fc.layers[l]));
  }
  return fc;
}

inline void check_pair_dim(std::span<const double> h_i, std::span<const double> h_j,
                           const MlpParams& mlp) {
  if (h_i.size() + h_j.size() != mlp.w1.cols()) {
    throw ValidationError("pair dimension mismatch: " + std::to_string(h_i.size()) + "+" +
                          std::to_string(h_j.size()) + " vs " + std::to_string(mlp.w1.cols()));
  }
}

struct MlpCache {
  Vec input;
  Vec hidden_pre;
  Vec hidden;
  Vec out;
};

inline Vec mlp_forward(const MlpParams& mlp, std::span<const double> x, MlpCache* cache) {
  Vec hidden_pre(mlp.w1.rows());
  matvec(mlp.w1, x, hidden_pre);
  for (std::size_t i = 0; i < hidden_pre.size(); ++i) hidden_pre[i] += mlp.b1[i];
  Vec hidden(hidden_pre.size());
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = relu(hidden_pre[i]);
  Vec out(mlp.w2.rows());
  matvec(mlp.w2, hidden, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += mlp.b2[i];
  if (cache != nullptr) {
    cache->input.assign(x.begin(), x.end());
    cache->hidden_pre = hidden_pre;
    cache->hidden = hidden;
    cache->out = out;
  }
  return out;
}

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
  return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

// Attention coefficients a_ij for every edge, indexed by edge id. Rows of
// the per-node softmax sum to 1 for every node with out-neighbors.
inline std::vector<double> attention_coefficients(const Mat& h, const ServiceGraph& g,
                                                  const LayerParams& lp, const GnnConfig& cfg) {
  detail::LayerCache cache;
  detail::layer_forward_impl(h, g, lp, cfg, &cache);
  return cache.alpha;
}

// h' = ReLU(W1 h_i + sum_j a_ij W2 h_j); isolated nodes keep only the self
// term (the neighbor sum is empty).
inline Mat layer_forward(const Mat& h, const ServiceGraph& g, const LayerParams& lp,
                         const GnnConfig& cfg) {
  return detail::layer_forward_impl(h, g, lp, cfg, nullptr);
}

// Runs all layers; layers[0] of the result is the input feature matrix.
// Expects z-scored features (not checked).
inline Embeddings encode(const ServiceGraph& g, const GnnParams& p) {
  return detail::encode_with_cache(g, p).emb;
}

// s_ij = MLP([h_i ++ h_j]); not symmetric in (i, j).
inline double score_pair(std::span<const double> h_i, std::span<const double> h_j,
                         const GnnParams& p) {
  detail::check_pair_dim(h_i, h_j, p.scorer);
  Vec x(h_i.size() + h_j.size());
  std::copy(h_i.begin(), h_i.end(), x.begin());
  std::copy(h_j.begin(), h_j.end(), x.begin() + static_cast<std::ptrdiff_t>(h_i.size()));
  return detail::mlp_forward(p.scorer, x, nullptr)[0];
}

// Softmax over candidate scores; max-subtraction keeps it stable, which also
// makes it exactly shift invariant up to float rounding.
inline std::vector<double> route_distribution(const std::vector<double>& scores) {
  if (scores.empty()) throw ValidationError("no candidates");
  const double m = *std::max_element(scores.begin(), scores.end());
  std::vector<double> probs(scores.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    probs[i] = std::exp(scores[i] - m);
    denom += probs[i];
  }
  for (double& p : probs) p /= denom;
  return probs;
}

// (latency, jitter) prediction in ms; softplus keeps both nonnegative.
inline std::pair<double, double> predict_path_metrics(std::span<const double> h_i,
                                                      std::span<const double> h_j,
                                                      const GnnParams& p) {
  detail::check_pair_dim(h_i, h_j, p.regressor);
  Vec x(h_i.size() + h_j.size());
  std::copy(h_i.begin(), h_i.end(), x.begin());
  std::copy(h_j.begin(), h_j.end(), x.begin() + static_cast<std::ptrdiff_t>(h_i.size()));
  const Vec out = detail::mlp_forward(p.regressor, x, nullptr);
  return {detail::softplus(out[0]), detail::softplus(out[1])};
}

struct Decision {
  std::vector<double> probs;
  int chosen = 0;
};

// encode -> score each candidate -> softmax -> greedy argmax (lowest index
// on ties). The graph must already be normalized.
inline Decision decide(const ServiceGraph& g_normalized, const GnnParams& p, int source,
                       const std::vector<int>& candidates) {
  if (candidates.empty()) throw ValidationError("no candidates");
  if (source < 0 || source >= g_normalized.node_count())
    throw ValidationError("unknown node " + std::to_string(source));
  for (int c : candidates)
    if (c < 0 || c >= g_normalized.node_count())
      throw ValidationError("unknown node " + std::to_string(c));

  const Embeddings emb = encode(g_normalized, p);
  const Mat& h = emb.final();
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (int c : candidates) {
    scores.push_back(score_pair(h.row(static_cast<std::size_t>(source)),
                                h.row(static_cast<std::size_t>(c)), p));
  }
  Decision d;
  d.probs = route_distribution(scores);
  d.chosen = 0;
  for (std::size_t i = 1; i < d.probs.size(); ++i)
    if (d.probs[i] > d.probs[static_cast<std::size_t>(d.chosen)]) d.chosen = static_cast<int>(i);
  return d;
}

}  // namespace routelab

#endif  // ROUTELAB_GNN_HPP
