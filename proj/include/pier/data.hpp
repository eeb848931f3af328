#pragma once

// Synthetic re-ranking world.
//
// Items are random combinations of categorical features. The probability that
// user u clicks item i shown at position t of permutation p at time tau is
//
//   clamp(b_i * decay_t * max(0, 1 + sum_{j before i} Gamma(j, i)) * fit(u, i, tau),
//         0.01, 0.99)
//
// with b_i = sigmoid(bias + sum_f theta_f[i_f]), Gamma(j, i) a per-field
// feature interaction (same-feature items compete), and
// fit(u, i, tau) = exp(sum_f pref_uf(tau)[i_f]) where each user's preference
// rotates slowly between two random directions. tau is the request id.
//
// Requests arrive in order. A burn-in phase shows random permutations; a
// point-wise model fitted on it supplies the logged point pCTRs of all later
// requests, which are displayed greedily by that score with epsilon
// exploration.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pier/tensor.hpp"
#include "pier/training.hpp"
#include "pier/types.hpp"

namespace pier {

struct WorldConfig {
  std::size_t n_items = 10;  // N_o
  std::size_t n_display = 3;  // N_d
  std::vector<std::size_t> vocab_sizes = {30, 8, 5};
  std::size_t n_users = 1000;
  std::size_t max_behaviors = 5;

  double base_bias = -1.0;
  double item_scale = 0.8;
  double user_scale = 0.8;
  double drift_rate = 2e-4;  // radians per request
  bool context_effects = true;
  double context_strength = 0.35;
  double same_feature_penalty = 1.0;
  double interaction_noise = 0.5;
  std::vector<double> position_decay = {1.0, 0.9, 0.8};

  std::size_t burn_in_requests = 5000;
  double exploration = 0.2;
  std::size_t point_dim = 8;
  PointwiseConfig point_model;
};

/// Parameters of the click model, drawn once from a seed.
struct GroundTruthModel {
  WorldConfig config;
  std::vector<Tensor> theta;           // per field [vocab]
  std::vector<Tensor> interaction;     // per field [vocab x vocab]: before -> after
  std::vector<std::vector<Tensor>> pref_a, pref_b;  // [user][field] -> [vocab]
  std::vector<double> phase;           // per user
  std::uint64_t seed = 0;

  static GroundTruthModel sample(const WorldConfig& config, std::uint64_t seed);

  double base_attractiveness(const Item& item) const;
  /// Effect of `before` preceding `after`; 0 when context effects are off.
  double context_effect(const Item& before, const Item& after) const;
  double user_fit(std::int64_t user, std::int64_t time, const Item& item) const;
  /// True click probability of every position of `perm`.
  std::vector<double> click_probabilities(const CandidateSet& candidates, const Permutation& perm,
                                          std::int64_t user, std::int64_t time) const;
  double expected_clicks(const CandidateSet& candidates, const Permutation& perm,
                         std::int64_t user, std::int64_t time) const;
};

struct SyntheticData {
  Dataset records;  // after burn-in, in request order
  GroundTruthModel model;
  PointwiseModel point_model;  // source of the logged point pCTRs
};

/// Deterministic in (config, n_requests, seed).
SyntheticData generate_synthetic_dataset(const WorldConfig& config, std::size_t n_requests,
                                         std::uint64_t seed);

/// Argmax of expected clicks over the full enumeration; ties go to the
/// earlier enumeration index.
Permutation oracle_best_permutation(const CandidateSet& candidates, const GroundTruthModel& model,
                                    std::int64_t user, std::int64_t time);
Permutation oracle_best_permutation(const LogRecord& record, const GroundTruthModel& model);

/// Oldest records first; the last `n_test` records form the test split.
struct Split {
  Dataset train;
  Dataset test;
};
Split temporal_split(const Dataset& data, std::size_t n_test);

/// Rounds to 9 significant digits, the precision kept on disk.
double round_sig9(double value);

std::string to_jsonl_line(const LogRecord& record);
/// `line_no` is reported in errors. With `vocab_sizes`, feature ids are
/// range-checked.
LogRecord parse_jsonl_line(const std::string& line, std::size_t line_no,
                           const std::vector<std::size_t>* vocab_sizes = nullptr);

void write_jsonl(const Dataset& data, const std::filesystem::path& path);
Dataset load_jsonl(const std::filesystem::path& path,
                   const std::vector<std::size_t>* vocab_sizes = nullptr);

void write_ground_truth(const GroundTruthModel& model, const std::filesystem::path& path);
GroundTruthModel read_ground_truth(const std::filesystem::path& path);

}  // namespace pier
