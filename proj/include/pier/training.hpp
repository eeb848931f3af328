#pragma once

// Losses, optimizer and the two training phases.
//
// Phase 1 fits OCPM on displayed permutations with per-position BCE.
// Phase 2 adds the contrastive term: for every example the FPSM picks its
// top-K permutations, K more are drawn from the rest, and the squared gaps
// between index-aligned group means are rewarded. Loss_2 reaches FPSM only
// through the shared embedding table.
//
// Batches are processed in chunks of `chunk_size` examples; each chunk is one
// graph, chunk gradients are summed in order and applied once per batch.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pier/embedding.hpp"
#include "pier/fpsm.hpp"
#include "pier/ocpm.hpp"
#include "pier/types.hpp"

namespace pier {

/// A logged request used for training: displayed permutation, its labels,
/// the user's history and the candidate set it was drawn from.
using TrainingExample = LogRecord;

double loss_bce(std::span<const double> pred, std::span<const double> labels);

/// -sum_k (mean(selected_k) - mean(unselected_k))^2 over index-aligned
/// pairs. With `signed_gap` only positive gaps count: -sum max(gap, 0)^2.
double loss_contrastive(std::span<const std::vector<double>> selected,
                        std::span<const std::vector<double>> unselected,
                        bool signed_gap = false);

/// Graph version over [K x N_d] prediction blocks.
Var contrastive_loss(Var selected, Var unselected, bool signed_gap = false);

/// Mean over examples of l1 + alpha * l2.
double combined_loss(std::span<const double> l1, std::span<const double> l2, double alpha);
double combined_loss(double l1, double l2, double alpha);

class Adam {
 public:
  explicit Adam(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  /// One update; `grads[i]` belongs to `params[i]`.
  void step(std::span<Parameter* const> params, std::span<const Tensor> grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainConfig {
  double alpha = 0.1;
  std::size_t k = 100;
  double learning_rate = 1e-3;
  std::size_t batch_size = 1024;
  std::size_t pretrain_epochs = 3;
  std::size_t joint_epochs = 2;
  std::uint64_t seed = 1;
  /// Examples per graph inside a batch; a memory knob only.
  std::size_t chunk_size = 32;
  /// Use -sum max(gap, 0)^2 instead of -sum gap^2.
  bool signed_contrastive = false;
  /// Cap on examples per joint epoch (0 = all).
  std::size_t joint_examples = 0;
};

/// Point-wise click model: item embeddings and the mean embedding of the
/// user's recently clicked items, through an MLP with a sigmoid output.
struct PointwiseModel {
  EmbeddingTable table;
  Mlp mlp;
  std::size_t max_behaviors = 5;

  std::vector<Parameter*> parameters();
};

struct PointwiseConfig {
  std::vector<std::size_t> hidden = {64, 32};
  std::size_t epochs = 3;
  double learning_rate = 1e-3;
  std::size_t batch_size = 1024;
  std::uint64_t seed = 1;
};

PointwiseModel make_pointwise_model(const std::vector<std::size_t>& vocab_sizes, std::size_t dim,
                                    std::size_t max_behaviors,
                                    const std::vector<std::size_t>& hidden, std::uint64_t seed);

/// Click probabilities of the given items for one user; `items` holds N_f
/// ids per item.
std::vector<double> pointwise_predict(const PointwiseModel& model,
                                      std::span<const FeatureId> items,
                                      const BehaviorSequence& behaviors);

/// Predictions for the displayed items of each record, record-major.
std::vector<double> pointwise_predict_displayed(const PointwiseModel& model,
                                                std::span<const LogRecord> records);

PointwiseModel train_pointwise_baseline(std::span<const LogRecord> dataset,
                                        const std::vector<std::size_t>& vocab_sizes,
                                        std::size_t dim, std::size_t max_behaviors,
                                        const PointwiseConfig& config);

/// Everything a trained re-ranker needs: shared embeddings, evaluator,
/// frozen hash banks.
struct ModelState {
  OcpmConfig config;
  EmbeddingTable table;
  OcpmParams params;
  HashFamily family;
  std::size_t max_behaviors = 5;
  double time_decay = kDefaultTimeDecay;

  std::vector<Parameter*> trainable();
};

struct ModelSpec {
  std::vector<std::size_t> vocab_sizes;
  OcpmConfig ocpm;
  std::size_t max_behaviors = 5;
  std::size_t hash_bits = kDefaultSignatureBits;
  double time_decay = kDefaultTimeDecay;
  std::uint64_t seed = 1;
};

ModelState make_model_state(const ModelSpec& spec);

struct StepRecord {
  std::string phase;
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
};

/// Called after every optimizer step.
using StepCallback = std::function<void(const StepRecord&)>;

/// Loss_1 on displayed permutations; updates `state` in place.
TrainLog pretrain_ocpm(std::span<const TrainingExample> dataset, ModelState& state,
                       const TrainConfig& config, const StepCallback& on_step = {});

/// Loss_1 + alpha * Loss_2; updates `state` in place. Hash banks never change.
TrainLog joint_train(std::span<const TrainingExample> dataset, ModelState& state,
                     const TrainConfig& config, const StepCallback& on_step = {});

/// FPSM selection for one request: top-K of the full enumeration.
std::vector<Permutation> fpsm_select(const ModelState& state, const CandidateSet& candidates,
                                     const BehaviorSequence& behaviors, std::size_t k);

/// List-wise predictions of one permutation under `state`.
std::vector<double> ocpm_predict(const ModelState& state, const CandidateSet& candidates,
                                 const Permutation& perm, const BehaviorSequence& behaviors);

/// Predictions for many permutations of the same request, one row each.
std::vector<std::vector<double>> ocpm_predict_many(const ModelState& state,
                                                   const CandidateSet& candidates,
                                                   std::span<const Permutation> perms,
                                                   const BehaviorSequence& behaviors);

/// Record-major predictions for the displayed permutations of `records`.
std::vector<double> ocpm_predict_displayed(const ModelState& state,
                                           std::span<const LogRecord> records);

}  // namespace pier
