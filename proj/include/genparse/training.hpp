#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "genparse/corpus.hpp"
#include "genparse/model.hpp"

namespace genparse {

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  int batch_size = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip = 5.0;  // gradients clamped to [-clip, clip]
  double weight_decay = 1e-6;
  int epochs = 30;
  int patience = 3;  // epochs without dev improvement before stopping
  std::uint64_t seed = 20180710;

  void validate() const;
};

template <typename Real>
struct AdamState {
  std::vector<Tensor<Real>> m, v;
  long step = 0;

  explicit AdamState(const ParameterStore<Real>& store);
};

template <typename Real>
void clip_gradients(ParameterStore<Real>& store, Real limit);

// p *= 1 - lr * wd, then the bias-corrected Adam update.
template <typename Real>
void adam_step(ParameterStore<Real>& store, AdamState<Real>& state, const TrainConfig& config);

struct Instance {
  std::vector<std::string> source;
  std::vector<std::string> summary;
  TargetSequence gold;
};

// Linearizes each example; throws on examples the oracle rejects.
std::vector<Instance> make_instances(const std::vector<Example>& examples);

// Mean over instances of the summed sequence loss, with all compositions of the
// batch computed by depth group.
template <typename Real>
Var batch_loss(Graph<Real>& g, const Model<Real>& model, std::span<const Instance> batch,
               TeacherStats* stats = nullptr);

struct EvalResult {
  double loss = 0;  // mean per-instance loss
  double op_accuracy = 0;
  double word_accuracy = 0;
  long unknown_words = 0;
};

// Teacher-forced loss and argmax accuracies, parallel over instances.
template <typename Real>
EvalResult evaluate(const Model<Real>& model, std::span<const Instance> data);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  EvalResult dev;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 0: the initial parameters
  double best_dev_loss = 0;
  bool stopped_early = false;
};

struct TrainHooks {
  std::ostream* log = nullptr;  // tab-separated epoch lines
  // Return false to stop after this epoch.
  std::function<bool(const EpochRecord&)> on_epoch;
};

// Shuffled mini-batch epochs. Parameters must already be initialized. The
// best parameters by dev loss (the training data when `dev` is empty) are
// restored at the end and, if `checkpoint` is set, saved there whenever they
// improve.
template <typename Real>
TrainResult train(Model<Real>& model, std::span<const Instance> train_data,
                  std::span<const Instance> dev, const TrainConfig& config,
                  const std::filesystem::path& checkpoint = {}, const TrainHooks& hooks = {});

}  // namespace genparse
