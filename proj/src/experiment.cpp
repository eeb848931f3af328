#include "pier/experiment.hpp"

#include <fstream>

#include "pier/errors.hpp"
#include "pier/json_io.hpp"

namespace pier {

void BenchmarkConfig::apply_seed() {
  world.point_model.seed = seed;
  train.seed = seed;
  baseline.seed = seed;
  eval.seed = seed;
  sweep.eval = eval;
}

BenchmarkConfig load_benchmark_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  BenchmarkConfig c;
  update_from_json(c, j);
  return c;
}

ModelSpec model_spec(const BenchmarkConfig& c) {
  ModelSpec spec;
  spec.vocab_sizes = c.world.vocab_sizes;
  spec.ocpm = c.model;
  spec.ocpm.n_display = c.world.n_display;
  spec.max_behaviors = c.world.max_behaviors;
  spec.hash_bits = c.hash_bits;
  spec.time_decay = c.time_decay;
  spec.seed = c.seed;
  return spec;
}

BenchmarkData make_benchmark_data(const BenchmarkConfig& c) {
  return make_benchmark_data(c, c.n_requests, c.n_test);
}

BenchmarkData make_benchmark_data(const BenchmarkConfig& c, std::size_t n_requests,
                                  std::size_t n_test) {
  BenchmarkData d;
  d.synthetic = generate_synthetic_dataset(c.world, n_requests, c.seed);
  d.split = temporal_split(d.synthetic.records, n_test);
  return d;
}

}  // namespace pier
