#pragma once

// Generate -> select -> evaluate -> argmax pipelines, metrics reports,
// latency benchmarks and parameter sweeps.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pier/data.hpp"
#include "pier/training.hpp"

namespace pier {

enum class Generator { kFull, kBeam, kRandom, kFpsm };

Generator parse_generator(std::string_view name);
std::string_view generator_name(Generator g);

/// Candidate permutations one generator proposes for a request. kFull
/// ignores `k`; kRandom draws from a stream keyed by (seed, request_id).
std::vector<Permutation> generate(Generator generator, const ModelState& state,
                                  const LogRecord& record, std::size_t k, std::uint64_t seed);

/// Permutation with the highest OCPM score sum_t y_t; ties go to the
/// earlier entry of `perms`.
Permutation rerank(const ModelState& state, const LogRecord& record,
                   std::span<const Permutation> perms);

struct CostStats {
  double mean_ms = 0.0;
  double p99_ms = 0.0;
  std::size_t repetitions = 0;
};

/// Times `pipeline` on `repetitions` requests cycled from `slice` after 5
/// untimed warm-up requests. p99 is the nearest-rank percentile.
CostStats bench_cost(const std::function<void(const LogRecord&)>& pipeline,
                     std::span<const LogRecord> slice, std::size_t repetitions);

/// Full reranking of one request with the given generator.
std::function<void(const LogRecord&)> make_pipeline(const ModelState& state, Generator generator,
                                                    std::size_t k, std::uint64_t seed);

struct EvalConfig {
  Generator generator = Generator::kFpsm;
  std::size_t k = 100;
  std::uint64_t seed = 1;
  /// Worker threads for the request loop; 0 picks the hardware count.
  std::size_t threads = 0;
  /// Latency is only measured when asked, keeping reports reproducible.
  bool measure_cost = false;
  std::size_t cost_repetitions = 30;
  std::size_t cost_requests = 100;
};

struct MetricsReport {
  std::string run_id;
  std::string generator;
  std::size_t k = 0;
  std::size_t requests = 0;
  double auc = 0.0;
  double logloss = 0.0;
  double hr_at_1 = 0.0;
  bool cost_measured = false;
  double mean_cost_ms = 0.0;
  double p99_cost_ms = 0.0;
  nlohmann::json config;
};

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

/// Hex digest identifying a run by its configuration and inputs.
std::string make_run_id(const nlohmann::json& config, std::string_view data_digest);

/// Digest of a dataset's JSONL encoding.
std::string dataset_digest(std::span<const LogRecord> records);

/// Fraction of `test` whose generated set contains the oracle best.
double hit_ratio(const ModelState& state, std::span<const LogRecord> test,
                 const GroundTruthModel& truth, Generator generator, std::size_t k,
                 std::uint64_t seed, std::size_t threads = 0);

/// AUC, LogLoss of OCPM on displayed items of `test`, plus HR@1 of the
/// chosen generator and, if requested, its latency.
MetricsReport evaluate(const ModelState& state, std::span<const LogRecord> test,
                       const GroundTruthModel& truth, const EvalConfig& config,
                       const nlohmann::json& config_snapshot = nlohmann::json::object());

/// AUC and LogLoss of the point-wise baseline on the same items.
MetricsReport evaluate_pointwise(const PointwiseModel& model, std::span<const LogRecord> test);

/// Plain-text table, one row per report.
std::string format_table(std::span<const MetricsReport> reports,
                         std::span<const std::string> row_labels);

struct SweepConfig {
  std::vector<double> alphas = {0.0, 0.01, 0.05, 0.1, 0.3, 0.5};
  std::vector<std::size_t> ks = {50, 100, 200};
  EvalConfig eval;
};

struct SweepRow {
  std::string axis;  // "alpha" or "k"
  double alpha = 0.0;
  std::size_t k = 0;
  MetricsReport report;
};

/// Joint training from a copy of `pretrained` for every alpha (at
/// train.k) and every K (at train.alpha), each evaluated on `test`.
std::vector<SweepRow> run_sweep(const ModelState& pretrained, std::span<const LogRecord> train,
                                std::span<const LogRecord> test, const GroundTruthModel& truth,
                                const TrainConfig& train_config, const SweepConfig& sweep);

nlohmann::json to_json(std::span<const SweepRow> rows);

}  // namespace pier
