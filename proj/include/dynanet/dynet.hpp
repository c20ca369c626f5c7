#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "dynanet/objectives.hpp"

namespace dynanet {

// One residual weight per insertion point. Any finite value is allowed;
// values outside [0, 1] extrapolate.
struct AlphaVector {
  std::vector<double> values;

  static AlphaVector uniform(std::size_t blocks, double alpha) { return {std::vector<double>(blocks, alpha)}; }

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }

  void validate(std::size_t blocks) const {
    if (values.size() != blocks) {
      throw UsageError("alpha vector has " + std::to_string(values.size()) + " entries, network has " +
                       std::to_string(blocks) + " tuning-blocks");
    }
    for (double a : values) {
      if (!std::isfinite(a)) throw UsageError("alpha values must be finite");
    }
  }

  friend bool operator==(const AlphaVector&, const AlphaVector&) = default;
};

// Main network θ, one tuning-block ψ^l per insertion point, and the loss
// feature network.
template <class Scalar>
struct DynamicNet {
  BackboneSpec spec;
  ParamStore<Scalar> theta;
  ParamStore<Scalar> psi;
  std::shared_ptr<const FeatureExtractor<Scalar>> extractor;

  static DynamicNet create(const BackboneSpec& spec, std::uint64_t seed) {
    DynamicNet net;
    net.spec = spec;
    net.theta = init_params<Scalar>(spec, mix_seed(seed, 0));
    net.psi = init_tuning_params<Scalar>(spec, mix_seed(seed, 1));
    net.extractor = std::make_shared<const FeatureExtractor<Scalar>>();
    return net;
  }

  std::size_t blocks() const { return spec.insertion_points.size(); }
};

enum class Phase {
  Main,       // θ trainable, ψ not used
  Tuning,     // θ constant, ψ trainable
  Inference,  // everything constant
};

template <class Scalar>
struct NetVars {
  ParamVars<Scalar> theta;
  ParamVars<Scalar> psi;
};

template <class Scalar>
NetVars<Scalar> bind(Tape<Scalar>& tape, const DynamicNet<Scalar>& net, Phase phase) {
  NetVars<Scalar> vars;
  vars.theta = ParamVars<Scalar>(tape, net.theta, phase == Phase::Main);
  if (phase != Phase::Main) vars.psi = ParamVars<Scalar>(tape, net.psi, phase == Phase::Tuning);
  return vars;
}

template <class Scalar>
struct ForwardTrace {
  Var<Scalar> output;
  // Latent at each insertion point before and after the residual is added.
  std::vector<Var<Scalar>> latent;
  std::vector<Var<Scalar>> adjusted;
};

// Runs the main blocks; with `alpha` set, applies z ← z + α^l·ψ^l(z) at each
// insertion point. Without `alpha` the tuning-blocks are not evaluated.
template <class Scalar>
ForwardTrace<Scalar> forward_trace(const DynamicNet<Scalar>& net, const NetVars<Scalar>& vars, const Var<Scalar>& x,
                                   const AlphaVector* alpha) {
  if (alpha) alpha->validate(net.blocks());
  if (x.value().rank() != 3 || x.shape()[0] != net.spec.in_channels()) {
    throw ShapeError("network input must be " + std::to_string(net.spec.in_channels()) + "xHxW, got " +
                     shape_string(x.shape()));
  }
  ForwardTrace<Scalar> trace;
  Var<Scalar> z = x;
  std::size_t next = 0;
  for (std::size_t i = 0; i < net.spec.blocks.size(); ++i) {
    z = forward_block(net.spec.blocks[i], vars.theta, main_prefix(i), z);
    if (alpha && next < net.blocks() && net.spec.insertion_points[next] == static_cast<Index>(i + 1)) {
      const auto tb = tuning_block(net.spec.channels_at(net.spec.insertion_points[next]), net.spec.tuning_kernel);
      trace.latent.push_back(z);
      auto residual = forward_block(tb, vars.psi, tuning_prefix(next), z);
      z = add(z, scalar_mul(residual, static_cast<Scalar>((*alpha)[next])));
      trace.adjusted.push_back(z);
      ++next;
    }
  }
  trace.output = z;
  return trace;
}

template <class Scalar>
Tensor<Scalar> forward(const DynamicNet<Scalar>& net, const Tensor<Scalar>& x, const AlphaVector& alpha) {
  Tape<Scalar> tape;
  auto vars = bind(tape, net, Phase::Inference);
  return forward_trace(net, vars, tape.constant(x), &alpha).output.value();
}

// Main network alone; tuning-blocks are not part of the graph.
template <class Scalar>
Tensor<Scalar> forward_main(const DynamicNet<Scalar>& net, const Tensor<Scalar>& x) {
  Tape<Scalar> tape;
  auto vars = bind(tape, net, Phase::Inference);
  return forward_trace(net, vars, tape.constant(x), nullptr).output.value();
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t steps = 2000;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

template <class Scalar>
struct AdamState {
  std::vector<Vec<Scalar>> m;
  std::vector<Vec<Scalar>> v;
  std::size_t t = 0;
};

// One bias-corrected Adam update. `grads` is parallel to `params`; an empty
// tensor means "no gradient". Non-trainable entries are never modified.
template <class Scalar>
void adam_step(ParamStore<Scalar>& params, const std::vector<Tensor<Scalar>>& grads, AdamState<Scalar>& state,
               const TrainConfig& cfg) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient count does not match parameter count");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Vec<Scalar>::Zero(p.value.size()));
      state.v.push_back(Vec<Scalar>::Zero(p.value.size()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");
  ++state.t;
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto step = static_cast<Scalar>(cfg.learning_rate / correction1);
  const auto root2 = static_cast<Scalar>(std::sqrt(correction2));
  const auto eps = static_cast<Scalar>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable || grads[i].empty()) continue;
    if (grads[i].shape() != p.value.shape() || state.m[i].size() != p.value.size()) {
      throw ShapeError("adam_step: shape mismatch for '" + p.name + "'");
    }
    const auto& g = grads[i].data();
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
    p.value.data().array() -= step * state.m[i].array() / (state.v[i].array().sqrt() / root2 + eps);
  }
}

template <class Scalar>
struct Sample {
  std::string id;
  Tensor<Scalar> input;
  Context<Scalar> context;
};

template <class Scalar>
using Batch = std::vector<std::reference_wrapper<const Sample<Scalar>>>;

// Returns the batch to use at a given step.
template <class Scalar>
using BatchStream = std::function<Batch<Scalar>(std::size_t step)>;

// Epoch-wise seeded shuffling without replacement. `data` must outlive the stream.
template <class Scalar>
BatchStream<Scalar> shuffled_batches(const std::vector<Sample<Scalar>>& data, std::size_t batch_size,
                                     std::uint64_t seed) {
  if (data.empty()) throw UsageError("training set is empty");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  return [&data, batch_size, seed](std::size_t step) {
    const std::size_t n = data.size();
    Batch<Scalar> batch;
    for (std::size_t k = 0; k < batch_size; ++k) {
      const std::size_t flat = step * batch_size + k;
      const std::size_t epoch = flat / n;
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      Rng rng(mix_seed(seed, epoch));
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      batch.push_back(std::cref(data[order[flat % n]]));
    }
    return batch;
  };
}

struct StepRecord {
  double total = 0.0;
  std::vector<double> terms;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct TrainLog {
  std::vector<StepRecord> steps;

  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

namespace detail {

template <class Scalar>
TrainLog run_training(DynamicNet<Scalar>& net, ParamStore<Scalar>& trained, Phase phase,
                      const BatchStream<Scalar>& data, const Objective& objective, const TrainConfig& cfg,
                      const std::function<void(std::size_t, const StepRecord&)>& on_step) {
  cfg.validate();
  objective.validate();
  TrainLog log;
  AdamState<Scalar> adam;
  const AlphaVector ones = AlphaVector::uniform(net.blocks(), 1.0);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto batch = data(step);
    Tape<Scalar> tape;
    auto vars = bind(tape, net, phase);
    Var<Scalar> loss;
    StepRecord rec;
    rec.terms.assign(objective.terms.size(), 0.0);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Sample<Scalar>& sample = batch[b];
      auto out = forward_trace(net, vars, tape.constant(sample.input), phase == Phase::Tuning ? &ones : nullptr);
      auto eval = evaluate(objective, *net.extractor, out.output, sample.context);
      loss = b == 0 ? eval.total : add(loss, eval.total);
      const auto values = eval.term_values();
      for (std::size_t t = 0; t < values.size(); ++t) rec.terms[t] += values[t] / static_cast<double>(batch.size());
    }
    loss = scalar_mul(loss, Scalar(1) / static_cast<Scalar>(batch.size()));
    rec.total = static_cast<double>(loss.item());
    if (!std::isfinite(rec.total)) throw DivergenceError(step);
    auto grads = tape.backward(loss);
    const auto& bound = phase == Phase::Main ? vars.theta.vars() : vars.psi.vars();
    std::vector<Tensor<Scalar>> g;
    g.reserve(bound.size());
    for (const auto& v : bound) g.push_back(grads.take(v.id()));
    adam_step(trained, g, adam, cfg);
    if (on_step) on_step(step, rec);
    log.steps.push_back(std::move(rec));
  }
  return log;
}

}  // namespace detail

using StepCallback = std::function<void(std::size_t, const StepRecord&)>;

// Phase 1: trains θ on the pure main network (ψ is not in the graph).
template <class Scalar>
TrainLog train_main(DynamicNet<Scalar>& net, const BatchStream<Scalar>& data, const Objective& objective,
                    const TrainConfig& cfg, const StepCallback& on_step = {}) {
  return detail::run_training(net, net.theta, Phase::Main, data, objective, cfg, on_step);
}

// Phase 2: θ held constant, ψ trained with every α^l = 1.
template <class Scalar>
TrainLog train_tuning(DynamicNet<Scalar>& net, const BatchStream<Scalar>& data, const Objective& objective,
                      const TrainConfig& cfg, const StepCallback& on_step = {}) {
  if (net.blocks() == 0) throw UsageError("network has no insertion points to train");
  return detail::run_training(net, net.psi, Phase::Tuning, data, objective, cfg, on_step);
}

// Mean per-term losses and total over `samples` at a fixed α (main network
// alone when `alpha` is null).
template <class Scalar>
StepRecord evaluate_net(const DynamicNet<Scalar>& net, const std::vector<Sample<Scalar>>& samples,
                        const Objective& objective, const AlphaVector* alpha) {
  StepRecord rec;
  rec.terms.assign(objective.terms.size(), 0.0);
  for (const auto& sample : samples) {
    Tape<Scalar> tape;
    auto vars = bind(tape, net, Phase::Inference);
    auto out = forward_trace(net, vars, tape.constant(sample.input), alpha);
    auto eval = evaluate(objective, *net.extractor, out.output, sample.context);
    rec.total += static_cast<double>(eval.total.item()) / static_cast<double>(samples.size());
    const auto values = eval.term_values();
    for (std::size_t t = 0; t < values.size(); ++t) rec.terms[t] += values[t] / static_cast<double>(samples.size());
  }
  return rec;
}

}  // namespace dynanet
