#pragma once

// List-wise permutation evaluator.
//
// Three units run in sequence over a batch of permutations:
//   OAU  per-field self-attention over the items of each field, a shared
//        MLP_1 per field, inter-field self-attention over the stacked field
//        vectors, then MLP_2 -> permutation context u (D_u = 20).
//   TAU  target attention: w = sum_m a_m * u_b_m with the scalar a_m from
//        MLP_Att(u || u_b_m || u * u_b_m || u - u_b_m).
//   CPU  shared head per position: sigmoid(MLP_3(u || w || v || e_t)) with v
//        the point pCTRs of the whole permutation and e_t the embedding row
//        of the item at position t.
//
// Everything is batched: P permutations of N_d items become [P*N_d x D]
// matrices per field, attention runs block-diagonally.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pier/embedding.hpp"
#include "pier/layers.hpp"
#include "pier/types.hpp"

namespace pier {

struct OcpmConfig {
  std::size_t n_fields = 3;
  std::size_t dim = 8;
  std::size_t n_display = 3;
  std::vector<std::size_t> mlp1 = {128, 64, 32};
  std::vector<std::size_t> mlp2 = {60, 32, 20};
  std::vector<std::size_t> mlp_att = {32, 1};
  std::vector<std::size_t> mlp3 = {50, 20, 1};
  /// Ablation switch: false replaces both attention layers by the identity.
  bool use_oau = true;
  /// Ablation switch: false feeds a zero interest vector to the CPU.
  bool use_tau = true;

  std::size_t field_width() const { return mlp1.back(); }
  std::size_t context_width() const { return mlp2.back(); }
  std::size_t cpu_input_width() const {
    return 2 * context_width() + n_display + n_fields * dim;
  }
};

struct OcpmParams {
  // Per-field projections, each [D x D].
  std::vector<Parameter> field_query, field_key, field_value;
  // Inter-field projections, each [W x W] with W the MLP_1 output width.
  Parameter inter_query, inter_key, inter_value;
  Mlp mlp1, mlp2, mlp_att, mlp3;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

OcpmParams make_ocpm_params(const OcpmConfig& config, std::uint64_t seed);

/// Field-major embedding rows of a batch: rows[j] is [P*N_d x D].
struct PermInputs {
  std::vector<Var> field_rows;
  std::size_t count = 0;
};

/// Gathers embeddings for P permutations given as feature ids [P x N_d x N_f].
PermInputs embed_batch(Graph& g, const EmbeddingTable& table,
                       std::span<const FeatureId> features, std::size_t n_display);

/// Wraps one [N_d x N_f x D] permutation embedding as constant inputs.
PermInputs inputs_from_embedding(Graph& g, const Tensor& perm_embedding);

/// Permutation contexts u, [P x D_u].
Var oau_forward(Graph& g, const PermInputs& inputs, const OcpmParams& params,
                const OcpmConfig& config);

/// Interest vectors w, [P x D_u]. `slots` has P*M entries; slot (p, m) is a
/// row of `behavior_contexts` or -1 when the user has no m-th behavior.
Var tau_forward(Graph& g, Var target_contexts, Var behavior_contexts,
                std::span<const std::int32_t> slots, std::size_t max_behaviors,
                const OcpmParams& params);

/// List-wise pCTRs, [P x N_d]. `point_scores` is [P x N_d].
Var cpu_forward(Graph& g, Var contexts, Var interests, std::span<const double> point_scores,
                const PermInputs& inputs, const OcpmParams& params, const OcpmConfig& config);

/// A batch of target permutations plus the behavior histories they refer to.
struct OcpmBatch {
  std::size_t count = 0;
  std::vector<FeatureId> features;       // [count x N_d x N_f]
  std::vector<double> point_scores;      // [count x N_d]
  std::vector<std::int32_t> history;     // per target: index of its history, or -1

  std::size_t histories = 0;
  std::vector<FeatureId> behavior_features;   // stacked behaviors [n_behaviors x N_d x N_f]
  std::vector<std::int32_t> history_slots;    // [histories x M]: behavior row or -1
  std::optional<std::size_t> behavior_width;   // ids per behavior

  void add_target(std::span<const FeatureId> feats, std::span<const double> scores,
                  std::int32_t history_index);
  /// Registers a behavior history (most recent first, at most M used) and
  /// returns its index.
  std::int32_t add_history(const BehaviorSequence& behaviors, std::size_t max_behaviors);
};

/// Full forward pass; returns [count x N_d] probabilities.
Var ocpm_forward(Graph& g, const EmbeddingTable& table, const OcpmParams& params,
                 const OcpmConfig& config, const OcpmBatch& batch, std::size_t max_behaviors);

/// Value-only prediction for one permutation of a candidate set.
std::vector<double> predict_permutation(const EmbeddingTable& table, const OcpmParams& params,
                                        const OcpmConfig& config, const CandidateSet& candidates,
                                        const Permutation& perm,
                                        const BehaviorSequence& behaviors,
                                        std::size_t max_behaviors);

/// Sum of list-wise pCTRs; the quantity permutations are ranked by.
double ocpm_score(std::span<const double> prediction);

}  // namespace pier
