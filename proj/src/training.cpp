#include "genparse/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "genparse/batching.hpp"
#include "genparse/checkpoint.hpp"

namespace genparse {

void TrainConfig::validate() const {
  if (batch_size <= 0) throw TrainingError("batch size must be positive");
  if (!(lr > 0) || !(eps > 0) || !(clip > 0)) throw TrainingError("lr, eps and clip must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    throw TrainingError("Adam betas must lie in [0, 1)");
  }
  if (weight_decay < 0) throw TrainingError("weight decay must be non-negative");
  if (epochs < 0 || patience <= 0) throw TrainingError("epochs must be >= 0 and patience > 0");
}

template <typename Real>
AdamState<Real>::AdamState(const ParameterStore<Real>& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i].value;
    m.emplace_back(p.rows(), p.cols());
    v.emplace_back(p.rows(), p.cols());
  }
}

template <typename Real>
void clip_gradients(ParameterStore<Real>& store, Real limit) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (Real& x : store[i].grad.values()) x = std::clamp(x, -limit, limit);
  }
}

template <typename Real>
void adam_step(ParameterStore<Real>& store, AdamState<Real>& state, const TrainConfig& config) {
  if (state.m.size() != store.size()) throw TrainingError("optimizer state does not match model");
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1 - std::pow(b1, double(state.step));
  const double c2 = 1 - std::pow(b2, double(state.step));
  const double shrink = 1 - config.lr * config.weight_decay;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter<Real>& p = store[i];
    auto value = p.value.values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    const bool has_grad = !p.grad.empty();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double grad = has_grad ? double(p.grad[k]) : 0.0;
      m[k] = Real(b1 * m[k] + (1 - b1) * grad);
      v[k] = Real(b2 * v[k] + (1 - b2) * grad * grad);
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      value[k] = Real(value[k] * shrink - config.lr * m_hat / (std::sqrt(v_hat) + config.eps));
    }
  }
}

std::vector<Instance> make_instances(const std::vector<Example>& examples) {
  std::vector<Instance> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({ex.source, ex.summary, linearize(ex)});
  return out;
}

template <typename Real>
Var batch_loss(Graph<Real>& g, const Model<Real>& model, std::span<const Instance> batch,
               TeacherStats* stats) {
  if (batch.empty()) throw TrainingError("empty batch");
  std::vector<TargetSequence> seqs;
  std::vector<std::vector<Var>> leaves;
  for (const Instance& inst : batch) {
    seqs.push_back(inst.gold);
    std::vector<Var> l{model.root_embedding(g)};
    for (const auto& w : inst.summary) l.push_back(model.word_embedding(g, w));
    leaves.push_back(std::move(l));
  }
  const BatchPlan p = plan(seqs);
  const auto composed =
      batched_compose(g, p, leaves, model.compose_weight(), model.compose_bias());
  std::vector<Var> losses;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TeacherInputs<Real> inputs{&leaves[i], &composed[i]};
    losses.push_back(model.sequence_loss(g, batch[i].source, batch[i].gold, inputs, stats).total);
  }
  return g.mean(losses);
}

template <typename Real>
EvalResult evaluate(const Model<Real>& model, std::span<const Instance> data) {
  EvalResult r;
  if (data.empty()) return r;
  const long n = static_cast<long>(data.size());
  std::vector<double> losses(n);
  std::vector<TeacherStats> stats(n);
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      Graph<Real> g(false);
      losses[i] = g.scalar_value(
          model.sequence_loss(g, data[i].source, data[i].gold, {}, &stats[i]).total);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  TeacherStats total;
  for (long i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      throw TrainingError("evaluation failed on instance " + std::to_string(i) + ": " + errors[i]);
    }
    r.loss += losses[i];
    total.op_correct += stats[i].op_correct;
    total.op_total += stats[i].op_total;
    total.word_correct += stats[i].word_correct;
    total.word_total += stats[i].word_total;
    total.unknown_words += stats[i].unknown_words;
  }
  r.loss /= double(n);
  r.op_accuracy = total.op_total ? double(total.op_correct) / total.op_total : 0;
  r.word_accuracy = total.word_total ? double(total.word_correct) / total.word_total : 0;
  r.unknown_words = total.unknown_words;
  return r;
}

namespace {

template <typename Real>
std::vector<Tensor<Real>> snapshot(const ParameterStore<Real>& store) {
  std::vector<Tensor<Real>> out;
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back(store[i].value);
  return out;
}

template <typename Real>
void restore(ParameterStore<Real>& store, const std::vector<Tensor<Real>>& values) {
  for (std::size_t i = 0; i < store.size(); ++i) store[i].value = values[i];
}

}  // namespace

template <typename Real>
TrainResult train(Model<Real>& model, std::span<const Instance> train_data,
                  std::span<const Instance> dev, const TrainConfig& config,
                  const std::filesystem::path& checkpoint, const TrainHooks& hooks) {
  config.validate();
  if (train_data.empty()) throw TrainingError("empty training corpus");
  const std::span<const Instance> dev_data = dev.empty() ? train_data : dev;
  auto& params = model.params();

  TrainResult result;
  result.best_dev_loss = evaluate(model, dev_data).loss;
  auto best = snapshot(params);
  if (!checkpoint.empty()) save_checkpoint(checkpoint, params, model.metadata_json());

  AdamState<Real> adam(params);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);
  int since_best = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Instance> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(train_data[order[k]]);
      double loss = 0;
      try {
        params.zero_grad();
        Graph<Real> g;
        const Var l = batch_loss<Real>(g, model, batch);
        loss = g.scalar_value(l);
        if (!std::isfinite(loss)) throw Error("loss is not finite");
        g.backward(l);
      } catch (const Error& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(start) + ": " + e.what());
      }
      clip_gradients(params, Real(config.clip));
      adam_step(params, adam, config);
      total += loss * double(end - start);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total / double(order.size());
    rec.dev = evaluate(model, dev_data);
    result.history.push_back(rec);
    if (hooks.log) {
      *hooks.log << rec.epoch << '\t' << rec.train_loss << '\t' << rec.dev.loss << '\t'
                 << rec.dev.op_accuracy << '\t' << rec.dev.word_accuracy << std::endl;
    }
    if (rec.dev.loss < result.best_dev_loss) {
      result.best_dev_loss = rec.dev.loss;
      result.best_epoch = epoch;
      best = snapshot(params);
      since_best = 0;
      if (!checkpoint.empty()) save_checkpoint(checkpoint, params, model.metadata_json());
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
    if (hooks.on_epoch && !hooks.on_epoch(rec)) break;
  }
  restore(params, best);
  return result;
}

#define GENPARSE_INSTANTIATE_TRAINING(Real)                                                    \
  template struct AdamState<Real>;                                                             \
  template void clip_gradients(ParameterStore<Real>&, Real);                                   \
  template void adam_step(ParameterStore<Real>&, AdamState<Real>&, const TrainConfig&);        \
  template Var batch_loss(Graph<Real>&, const Model<Real>&, std::span<const Instance>,         \
                          TeacherStats*);                                                      \
  template EvalResult evaluate(const Model<Real>&, std::span<const Instance>);                 \
  template TrainResult train(Model<Real>&, std::span<const Instance>, std::span<const Instance>, \
                             const TrainConfig&, const std::filesystem::path&, const TrainHooks&);

GENPARSE_INSTANTIATE_TRAINING(float)
GENPARSE_INSTANTIATE_TRAINING(double)

}  // namespace genparse
