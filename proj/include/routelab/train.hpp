#ifndef ROUTELAB_TRAIN_HPP
#define ROUTELAB_TRAIN_HPP

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "routelab/error.hpp"
#include "routelab/gnn.hpp"
#include "routelab/graph.hpp"
#include "routelab/rng.hpp"
#include "routelab/sim.hpp"

namespace routelab {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double loss_weight_regression = 0.5;  // lambda
  std::uint64_t seed = 0;
  double grad_clip_norm = 5.0;
};

inline void validate(const TrainConfig& c) {
  if (c.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(c.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (!(c.loss_weight_regression >= 0.0)) throw ValidationError("loss_weight_regression must be >= 0");
  if (!(c.grad_clip_norm > 0.0)) throw ValidationError("grad_clip_norm must be > 0");
}

struct EpochStats {
  double loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;  // wall clock; excluded from byte-identity comparisons
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  bool diverged = false;
};

struct Dataset {
  std::vector<DecisionSample> train;
  std::vector<DecisionSample> val;
  FeatureStats stats;  // computed on the train split only
};

// Deterministic 80/20 shuffle-split.
inline Dataset make_dataset(std::vector<DecisionSample> samples, std::uint64_t split_seed) {
  if (samples.size() < 10) {
    throw ValidationError("too few samples: " + std::to_string(samples.size()) + " < 10");
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  rng::Stream s(rng::key(split_seed, rng::tag::kSplit));
  rng::shuffle(order, s);

  const std::size_t val_count = samples.size() / 5;
  const std::size_t train_count = samples.size() - val_count;
  Dataset ds;
  ds.train.reserve(train_count);
  ds.val.reserve(val_count);
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < train_count ? ds.train : ds.val;
    dst.push_back(std::move(samples[order[i]]));
  }
  std::vector<const ServiceGraph*> train_snapshots;
  train_snapshots.reserve(ds.train.size());
  for (const auto& sample : ds.train) train_snapshots.push_back(&sample.snapshot);
  ds.stats = feature_stats(std::span<const ServiceGraph* const>(train_snapshots));
  return ds;
}

namespace detail {

inline void mlp_backward(const MlpParams& mlp, const MlpCache& cache, std::span<const double> dout,
                         MlpParams& grad, std::span<double> dx) {
  add_outer(grad.w2, dout, cache.hidden);
  axpy(1.0, dout, grad.b2);
  Vec dhidden(cache.hidden.size(), 0.0);
  matvec_transpose_add(mlp.w2, dout, dhidden);
  for (std::size_t i = 0; i < dhidden.size(); ++i) {
    if (cache.hidden_pre[i] <= 0.0) dhidden[i] = 0.0;
  }
  add_outer(grad.w1, dhidden, cache.input);
  axpy(1.0, dhidden, grad.b1);
  matvec_transpose_add(mlp.w1, dhidden, dx);
}

// Reverse pass through one propagation layer. Consumes the gradient w.r.t.
// the layer output and returns the gradient w.r.t. the layer input, adding
// parameter gradients into `grad`.
inline Mat layer_backward(const ServiceGraph& g, const GnnConfig& cfg, const LayerParams& lp,
                          const LayerCache& lc, const Mat& h_in, const Mat& dh_out,
                          LayerParams& grad) {
  const std::size_t n = static_cast<std::size_t>(g.node_count());
  const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
  const std::size_t d_in = h_in.cols();

  Mat dh_in(n, d_in);
  Mat dpre(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < d; ++t) dpre(i, t) = lc.pre(i, t) > 0.0 ? dh_out(i, t) : 0.0;

  Mat dw2h(n, d);
  Vec dalpha(static_cast<std::size_t>(g.edge_count()), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    add_outer(grad.w1, dpre.row(i), h_in.row(i));
    matvec_transpose_add(lp.w1, dpre.row(i), dh_in.row(i));
    for (int e : g.out_edges(static_cast<int>(i))) {
      const std::size_t j = static_cast<std::size_t>(g.edges()[static_cast<std::size_t>(e)].dst);
      dalpha[static_cast<std::size_t>(e)] = dot(dpre.row(i), lc.w2h.row(j));
      axpy(lc.alpha[static_cast<std::size_t>(e)], dpre.row(i), dw2h.row(j));
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    add_outer(grad.w2, dw2h.row(j), h_in.row(j));
    matvec_transpose_add(lp.w2, dw2h.row(j), dh_in.row(j));
  }

  if (!cfg.uniform_attention) {
    Mat dq(n, d), dk(n, d);
    const std::span<const double> a(lp.attn);
    const auto aq = a.subspan(0, d);
    const auto ak = a.subspan(d, d);
    std::span<double> ga(grad.attn);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& out = g.out_edges(static_cast<int>(i));
      if (out.empty()) continue;
      double weighted = 0.0;
      for (int e : out) weighted += lc.alpha[static_cast<std::size_t>(e)] * dalpha[static_cast<std::size_t>(e)];
      for (int e : out) {
        const std::size_t ei = static_cast<std::size_t>(e);
        const auto& edge = g.edges()[ei];
        const std::size_t j = static_cast<std::size_t>(edge.dst);
        const double du = lc.alpha[ei] * (dalpha[ei] - weighted);
        const double dz = du * leaky_relu_grad(lc.z[ei], cfg.leaky_slope);
        axpy(dz, lc.q.row(i), ga.subspan(0, d));
        axpy(dz, lc.k.row(j), ga.subspan(d, d));
        for (std::size_t t = 0; t < static_cast<std::size_t>(cfg.edge_dim); ++t)
          ga[2 * d + t] += dz * edge.features[t];
        axpy(dz, aq, dq.row(i));
        axpy(dz, ak, dk.row(j));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      add_outer(grad.wq, dq.row(i), h_in.row(i));
      matvec_transpose_add(lp.wq, dq.row(i), dh_in.row(i));
      add_outer(grad.wk, dk.row(i), h_in.row(i));
      matvec_transpose_add(lp.wk, dk.row(i), dh_in.row(i));
    }
  }
  return dh_in;
}

// Loss of one sample whose snapshot is already normalized; accumulates
// parameter gradients scaled by `weight` when `grads` is given.
//
// loss = CE(softmax(scores), oracle)
//      + lambda * mean_k [ (log1p(lat_hat) - log1p(lat_k))^2
//                        + (log1p(jit_hat) - log1p(jit_k))^2 ]
inline double sample_objective(const DecisionSample& s, const GnnParams& p, double lambda,
                               double weight, GnnParams* grads) {
  const std::size_t n_candidates = s.candidates.size();
  if (n_candidates == 0) throw ValidationError("sample has no candidates");
  if (s.oracle_best < 0 || s.oracle_best >= static_cast<int>(n_candidates))
    throw ValidationError("oracle_best out of range");

  ForwardCache fc = encode_with_cache(s.snapshot, p);
  const Mat& h = fc.emb.final();
  const std::size_t d = h.cols();
  const auto h_src = h.row(static_cast<std::size_t>(s.source));

  std::vector<MlpCache> scorer_caches(n_candidates), reg_caches(n_candidates);
  Vec scores(n_candidates);
  std::vector<Vec> inputs(n_candidates);
  for (std::size_t k = 0; k < n_candidates; ++k) {
    const auto h_cand = h.row(static_cast<std::size_t>(s.candidates[k]));
    Vec x(2 * d);
    std::copy(h_src.begin(), h_src.end(), x.begin());
    std::copy(h_cand.begin(), h_cand.end(), x.begin() + static_cast<std::ptrdiff_t>(d));
    scores[k] = mlp_forward(p.scorer, x, &scorer_caches[k])[0];
    inputs[k] = std::move(x);
  }

  const double max_score = *std::max_element(scores.begin(), scores.end());
  double denom = 0.0;
  Vec probs(n_candidates);
  for (std::size_t k = 0; k < n_candidates; ++k) {
    probs[k] = std::exp(scores[k] - max_score);
    denom += probs[k];
  }
  for (double& pk : probs) pk /= denom;
  const double cross_entropy =
      (max_score + std::log(denom)) - scores[static_cast<std::size_t>(s.oracle_best)];

  double regression = 0.0;
  std::vector<std::array<double, 2>> raw_out(n_candidates), pred(n_candidates), delta(n_candidates);
  if (lambda > 0.0) {
    for (std::size_t k = 0; k < n_candidates; ++k) {
      const Vec out = mlp_forward(p.regressor, inputs[k], &reg_caches[k]);
      raw_out[k] = {out[0], out[1]};
      pred[k] = {softplus(out[0]), softplus(out[1])};
      const double target_lat = s.realized_latency_ms[k];
      const double target_jit = s.realized_jitter_ms[k];
      delta[k] = {std::log1p(pred[k][0]) - std::log1p(target_lat),
                  std::log1p(pred[k][1]) - std::log1p(target_jit)};
      regression += delta[k][0] * delta[k][0] + delta[k][1] * delta[k][1];
    }
    regression /= static_cast<double>(n_candidates);
  }

  const double total = cross_entropy + lambda * regression;
  if (!std::isfinite(total)) throw NumericalDivergence("numerical divergence");
  if (grads == nullptr) return total;

  const std::size_t n = static_cast<std::size_t>(s.snapshot.node_count());
  Mat dh(n, d);
  for (std::size_t k = 0; k < n_candidates; ++k) {
    Vec dx(2 * d, 0.0);
    const double dscore =
        weight * (probs[k] - (static_cast<int>(k) == s.oracle_best ? 1.0 : 0.0));
    const Vec dout{dscore};
    mlp_backward(p.scorer, scorer_caches[k], dout, grads->scorer, dx);
    if (lambda > 0.0) {
      Vec dreg(2);
      for (int c = 0; c < 2; ++c) {
        const double dpred = weight * lambda * 2.0 * delta[k][static_cast<std::size_t>(c)] /
                             (static_cast<double>(n_candidates) * (1.0 + pred[k][static_cast<std::size_t>(c)]));
        dreg[static_cast<std::size_t>(c)] = dpred * sigmoid(raw_out[k][static_cast<std::size_t>(c)]);
      }
      mlp_backward(p.regressor, reg_caches[k], dreg, grads->regressor, dx);
    }
    axpy(1.0, std::span<const double>(dx).subspan(0, d), dh.row(static_cast<std::size_t>(s.source)));
    axpy(1.0, std::span<const double>(dx).subspan(d, d),
         dh.row(static_cast<std::size_t>(s.candidates[k])));
  }

  Mat dh_out = std::move(dh);
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    dh_out = layer_backward(s.snapshot, p.config, p.layers[l], fc.layers[l], fc.emb.layers[l],
                            dh_out, grads->layers[l]);
  }
  return total;
}

inline DecisionSample normalized_copy(const DecisionSample& s, const FeatureStats& stats) {
  DecisionSample copy = s;
  copy.snapshot = normalize_features(s.snapshot, stats);
  return copy;
}

}  // namespace detail

inline std::vector<std::span<double>> tensor_spans(GnnParams& p) {
  std::vector<std::span<double>> spans;
  for_each_tensor(p, [&spans](std::span<double> s) { spans.push_back(s); });
  return spans;
}

inline std::vector<std::span<const double>> tensor_spans(const GnnParams& p) {
  std::vector<std::span<const double>> spans;
  for_each_tensor(p, [&spans](std::span<const double> s) { spans.push_back(s); });
  return spans;
}

// Mean loss over the batch; snapshots are normalized with `stats` first.
inline double loss(std::span<const DecisionSample> batch, const FeatureStats& stats,
                   const GnnParams& params, double lambda) {
  if (batch.empty()) throw ValidationError("empty batch");
  double total = 0.0;
  for (const auto& s : batch) {
    total += detail::sample_objective(detail::normalized_copy(s, stats), params, lambda, 0.0, nullptr);
  }
  return total / static_cast<double>(batch.size());
}

// Analytic gradient of `loss` w.r.t. every tensor, same shapes as params.
inline GnnParams grad(std::span<const DecisionSample> batch, const FeatureStats& stats,
                      const GnnParams& params, double lambda) {
  if (batch.empty()) throw ValidationError("empty batch");
  GnnParams grads = zeros_like(params);
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    detail::sample_objective(detail::normalized_copy(s, stats), params, lambda, weight, &grads);
  }
  return grads;
}

inline double central_difference(const std::function<double(double)>& f, double x, double eps) {
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

// Per-coordinate central differences of `loss`; the verification oracle for
// `grad`.
inline GnnParams fd_grad(std::span<const DecisionSample> batch, const FeatureStats& stats,
                         const GnnParams& params, double lambda, double epsilon) {
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  GnnParams work = params;
  GnnParams out = zeros_like(params);
  auto work_spans = tensor_spans(work);
  auto out_spans = tensor_spans(out);
  for (std::size_t t = 0; t < work_spans.size(); ++t) {
    for (std::size_t i = 0; i < work_spans[t].size(); ++i) {
      const double original = work_spans[t][i];
      work_spans[t][i] = original + epsilon;
      const double up = loss(batch, stats, work, lambda);
      work_spans[t][i] = original - epsilon;
      const double down = loss(batch, stats, work, lambda);
      work_spans[t][i] = original;
      out_spans[t][i] = (up - down) / (2.0 * epsilon);
    }
  }
  return out;
}

struct AdamState {
  GnnParams m;
  GnnParams v;
  long step = 0;
};

inline AdamState make_adam_state(const GnnParams& like) {
  return AdamState{zeros_like(like), zeros_like(like), 0};
}

// Bias-corrected Adam with global-norm gradient clipping applied first.
inline void adam_step(GnnParams& params, const GnnParams& grads, AdamState& st,
                      const TrainConfig& cfg) {
  const auto gs = tensor_spans(grads);
  double sum_sq = 0.0;
  for (const auto& g : gs)
    for (double v : g) sum_sq += v * v;
  const double norm = std::sqrt(sum_sq);
  const double scale = norm > cfg.grad_clip_norm ? cfg.grad_clip_norm / norm : 1.0;

  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  auto ps = tensor_spans(params);
  auto ms = tensor_spans(st.m);
  auto vs = tensor_spans(st.v);
  for (std::size_t t = 0; t < ps.size(); ++t) {
    for (std::size_t i = 0; i < ps[t].size(); ++i) {
      const double g = gs[t][i] * scale;
      ms[t][i] = cfg.beta1 * ms[t][i] + (1.0 - cfg.beta1) * g;
      vs[t][i] = cfg.beta2 * vs[t][i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = ms[t][i] / bc1;
      const double v_hat = vs[t][i] / bc2;
      ps[t][i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

// Fraction of samples where the greedy decision matches the oracle label.
// Snapshots must already be normalized.
inline double decision_accuracy(const std::vector<DecisionSample>& normalized,
                                const GnnParams& params) {
  if (normalized.empty()) return 0.0;
  int correct = 0;
  for (const auto& s : normalized) {
    if (decide(s.snapshot, params, s.source, s.candidates).chosen == s.oracle_best) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(normalized.size());
}

// Minibatch Adam training. Deterministic given all seeds; on numerical
// divergence the partial report is returned with `diverged` set.
inline std::pair<GnnParams, TrainReport> train_model(const Dataset& ds, const GnnConfig& gnn_cfg,
                                                     const TrainConfig& train_cfg) {
  validate(train_cfg);
  GnnParams params = init_params(gnn_cfg);
  TrainReport report;
  if (train_cfg.epochs == 0) return {std::move(params), std::move(report)};

  // Normalize once; identity stats downstream keeps the math identical.
  std::vector<DecisionSample> train_set, val_set;
  train_set.reserve(ds.train.size());
  val_set.reserve(ds.val.size());
  for (const auto& s : ds.train) train_set.push_back(detail::normalized_copy(s, ds.stats));
  for (const auto& s : ds.val) val_set.push_back(detail::normalized_copy(s, ds.stats));
  if (train_set.empty()) throw ValidationError("empty training split");

  AdamState state = make_adam_state(params);
  const double lambda = train_cfg.loss_weight_regression;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng::Stream shuffle_stream(
        rng::key(train_cfg.seed, rng::tag::kEpochShuffle, static_cast<std::uint64_t>(epoch)));
    rng::shuffle(order, shuffle_stream);

    double epoch_loss = 0.0;
    bool diverged = false;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train_cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(train_cfg.batch_size));
      GnnParams grads = zeros_like(params);
      const double weight = 1.0 / static_cast<double>(end - start);
      try {
        for (std::size_t i = start; i < end; ++i) {
          epoch_loss += detail::sample_objective(train_set[order[i]], params, lambda, weight, &grads);
        }
      } catch (const NumericalDivergence&) {
        diverged = true;
        break;
      }
      adam_step(params, grads, state, train_cfg);
    }
    if (diverged) {
      report.diverged = true;
      break;
    }
    const double val_accuracy = decision_accuracy(val_set, params);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(
        EpochStats{epoch_loss / static_cast<double>(train_set.size()), val_accuracy, seconds});
  }
  return {std::move(params), std::move(report)};
}

}  // namespace routelab

#endif  // ROUTELAB_TRAIN_HPP
