#pragma once

// One benchmark run: synthetic world, data sizes, model shape, training
// schedule, evaluation and sweep settings. A single seed drives every
// random stream of the run.

#include <cstdint>
#include <filesystem>

#include "json.hpp"
#include "pier/data.hpp"
#include "pier/evaluation.hpp"
#include "pier/training.hpp"

namespace pier {

struct BenchmarkConfig {
  std::uint64_t seed = 1;
  WorldConfig world;
  std::size_t n_requests = 55000;  // logged requests after burn-in
  std::size_t n_test = 5000;       // newest requests held out
  OcpmConfig model;
  std::size_t hash_bits = kDefaultSignatureBits;
  double time_decay = kDefaultTimeDecay;
  TrainConfig train;
  PointwiseConfig baseline;  // the point-wise comparison row
  EvalConfig eval;
  SweepConfig sweep;
  std::size_t sweep_requests = 10000;
  std::size_t sweep_test = 2000;

  /// Copies `seed` into every component seed.
  void apply_seed();
};

nlohmann::json to_json(const BenchmarkConfig& config);
/// Overwrites the keys present in `j`; unknown keys raise FormatError.
void update_from_json(BenchmarkConfig& config, const nlohmann::json& j);
BenchmarkConfig load_benchmark_config(const std::filesystem::path& path);

ModelSpec model_spec(const BenchmarkConfig& config);

struct BenchmarkData {
  SyntheticData synthetic;
  Split split;
};

/// World, logs and temporal split for `config`.
BenchmarkData make_benchmark_data(const BenchmarkConfig& config);
/// Same world, `n_requests` logs, last `n_test` held out.
BenchmarkData make_benchmark_data(const BenchmarkConfig& config, std::size_t n_requests,
                                  std::size_t n_test);

}  // namespace pier
