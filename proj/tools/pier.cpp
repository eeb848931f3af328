// Command-line front end: gen-data, pretrain, train, eval, bench, sweep.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pier/checkpoint.hpp"
#include "pier/data.hpp"
#include "pier/errors.hpp"
#include "pier/evaluation.hpp"
#include "pier/experiment.hpp"
#include "pier/json_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pier;

namespace {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

Level log_level() {
  const char* env = std::getenv("PIER_LOG");
  if (!env) return Level::kInfo;
  const std::string v = env;
  if (v == "error") return Level::kError;
  if (v == "debug") return Level::kDebug;
  return Level::kInfo;
}

void log(Level level, const std::string& msg) {
  if (level > log_level()) return;
  static const char* names[] = {"error", "info", "debug"};
  std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::size_t> k;
  std::optional<std::string> generator;
  std::string out = "run";
  std::string data;
  std::string checkpoint;
  bool parallel = false;
};

// True when the config file sets `pointer` (a JSON pointer).
bool file_sets(const json& file, const char* pointer) {
  return file.contains(json::json_pointer(pointer));
}

template <typename T, typename U>
void override_value(T& target, const std::optional<U>& flag, const char* name, bool from_file) {
  if (!flag) return;
  const T value = static_cast<T>(*flag);
  if (from_file && !(target == value)) {
    log(Level::kInfo, std::string("flag --") + name + " overrides the config file value " +
                          json(target).dump() + " with " + json(value).dump());
  }
  target = value;
}

BenchmarkConfig resolve_config(const Options& o) {
  BenchmarkConfig c;
  json file = json::object();
  if (!o.config.empty()) {
    c = load_benchmark_config(o.config);
    std::ifstream in(o.config);
    file = json::parse(in);
  }
  override_value(c.seed, o.seed, "seed", file_sets(file, "/seed"));
  override_value(c.train.alpha, o.alpha, "alpha", file_sets(file, "/train/alpha"));
  override_value(c.train.k, o.k, "k", file_sets(file, "/train/k"));
  override_value(c.eval.k, o.k, "k", file_sets(file, "/eval/k"));
  if (o.generator) {
    const Generator g = parse_generator(*o.generator);
    if (file_sets(file, "/eval/generator") && g != c.eval.generator) {
      log(Level::kInfo, "flag --generator overrides the config file value \"" +
                            std::string(generator_name(c.eval.generator)) + "\" with \"" +
                            *o.generator + "\"");
    }
    c.eval.generator = g;
  }
  c.apply_seed();
  c.eval.threads = o.parallel ? 0 : 1;
  c.sweep.eval = c.eval;
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path data_dir(const Options& o) { return o.data.empty() ? fs::path(o.out) : fs::path(o.data); }

struct LoadedData {
  Dataset records;
  GroundTruthModel truth;
  Split split;
};

LoadedData load_data(const Options& o, const BenchmarkConfig& c) {
  const fs::path dir = data_dir(o);
  LoadedData d;
  d.truth = read_ground_truth(dir / "ground_truth.json");
  const auto vocab = d.truth.config.vocab_sizes;
  d.records = load_jsonl(dir / "data.jsonl", &vocab);
  d.split = temporal_split(d.records, std::min(c.n_test, d.records.size()));
  log(Level::kInfo, "loaded " + std::to_string(d.records.size()) + " records from " +
                        dir.string() + " (" + std::to_string(d.split.train.size()) +
                        " train, " + std::to_string(d.split.test.size()) + " test)");
  return d;
}

class LossCsv {
 public:
  explicit LossCsv(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw FormatError("cannot open " + path.string() + " for writing");
    out_ << "phase,epoch,step,loss,l1,l2\n";
  }
  void operator()(const StepRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.9g,%.9g,%.9g\n", r.phase.c_str(), r.epoch, r.step,
                  r.loss, r.l1, r.l2);
    out_ << buf;
    log(Level::kDebug, buf);
  }

 private:
  std::ofstream out_;
};

int cmd_gen_data(const Options& o) {
  const BenchmarkConfig c = resolve_config(o);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  log(Level::kInfo, "generating " + std::to_string(c.n_requests) + " requests, seed " +
                        std::to_string(c.seed));
  const SyntheticData d = generate_synthetic_dataset(c.world, c.n_requests, c.seed);
  write_jsonl(d.records, dir / "data.jsonl");
  write_ground_truth(d.model, dir / "ground_truth.json");
  write_json(dir / "config.json", to_json(c));
  log(Level::kInfo, "wrote " + (dir / "data.jsonl").string());
  return 0;
}

int cmd_pretrain(const Options& o) {
  const BenchmarkConfig c = resolve_config(o);
  const LoadedData d = load_data(o, c);
  fs::create_directories(o.out);
  ModelState state = make_model_state(model_spec(c));
  LossCsv csv(fs::path(o.out) / "pretrain_loss.csv");
  pretrain_ocpm(d.split.train, state, c.train, [&](const StepRecord& r) { csv(r); });
  save_checkpoint(state, fs::path(o.out) / "pretrained.ckpt");
  log(Level::kInfo, "wrote " + (fs::path(o.out) / "pretrained.ckpt").string());
  return 0;
}

int cmd_train(const Options& o) {
  const BenchmarkConfig c = resolve_config(o);
  const LoadedData d = load_data(o, c);
  fs::create_directories(o.out);
  ModelState state;
  if (!o.checkpoint.empty()) {
    state = load_checkpoint(o.checkpoint);
    log(Level::kInfo, "starting from " + o.checkpoint);
  } else {
    state = make_model_state(model_spec(c));
    LossCsv pre(fs::path(o.out) / "pretrain_loss.csv");
    pretrain_ocpm(d.split.train, state, c.train, [&](const StepRecord& r) { pre(r); });
  }
  LossCsv csv(fs::path(o.out) / "train_loss.csv");
  joint_train(d.split.train, state, c.train, [&](const StepRecord& r) { csv(r); });
  save_checkpoint(state, fs::path(o.out) / "model.ckpt");
  log(Level::kInfo, "wrote " + (fs::path(o.out) / "model.ckpt").string());
  return 0;
}

ModelState checkpoint_or_fail(const Options& o) {
  if (o.checkpoint.empty()) throw ContractError("--checkpoint is required");
  return load_checkpoint(o.checkpoint);
}

int cmd_eval(const Options& o) {
  const BenchmarkConfig c = resolve_config(o);
  const LoadedData d = load_data(o, c);
  const ModelState state = checkpoint_or_fail(o);
  fs::create_directories(o.out);
  json snapshot = to_json(c);
  snapshot["checkpoint"] = fs::path(o.checkpoint).filename().string();
  const MetricsReport report = evaluate(state, d.split.test, d.truth, c.eval, snapshot);
  const PointwiseModel baseline = train_pointwise_baseline(
      d.split.train, c.world.vocab_sizes, c.world.point_dim, c.world.max_behaviors, c.baseline);
  const MetricsReport point = evaluate_pointwise(baseline, d.split.test);
  write_json(fs::path(o.out) / "metrics.json", to_json(report));
  const std::vector<MetricsReport> rows = {point, report};
  const std::vector<std::string> labels = {"DNN (point-wise)",
                                           "OCPM + " + report.generator};
  const std::string table = format_table(rows, labels);
  write_text(fs::path(o.out) / "metrics.txt", table);
  std::cout << table;
  return 0;
}

int cmd_bench(const Options& o) {
  BenchmarkConfig c = resolve_config(o);
  const LoadedData d = load_data(o, c);
  const ModelState state = checkpoint_or_fail(o);
  fs::create_directories(o.out);
  std::vector<MetricsReport> rows;
  std::vector<std::string> labels;
  json out = json::array();
  auto add = [&](Generator g, std::size_t k) {
    EvalConfig ec = c.eval;
    ec.generator = g;
    ec.k = k;
    ec.measure_cost = true;
    json snapshot = to_json(c);
    snapshot["eval"] = to_json(ec);
    rows.push_back(evaluate(state, d.split.test, d.truth, ec, snapshot));
    labels.push_back(std::string(generator_name(g)) + " K=" + std::to_string(rows.back().k));
    out.push_back(to_json(rows.back()));
  };
  add(Generator::kFull, c.eval.k);
  for (Generator g : {Generator::kFpsm, Generator::kBeam, Generator::kRandom}) add(g, c.eval.k);
  for (std::size_t k : c.sweep.ks) {
    if (k != c.eval.k) add(Generator::kFpsm, k);
  }
  write_json(fs::path(o.out) / "bench.json", out);
  const std::string table = format_table(rows, labels);
  write_text(fs::path(o.out) / "bench.txt", table);
  std::cout << table;
  return 0;
}

int cmd_sweep(const Options& o) {
  const BenchmarkConfig c = resolve_config(o);
  fs::create_directories(o.out);
  const BenchmarkData d = make_benchmark_data(c, c.sweep_requests, c.sweep_test);
  ModelState pretrained = make_model_state(model_spec(c));
  log(Level::kInfo, "pretraining on " + std::to_string(d.split.train.size()) + " requests");
  pretrain_ocpm(d.split.train, pretrained, c.train);
  const auto rows =
      run_sweep(pretrained, d.split.train, d.split.test, d.synthetic.model, c.train, c.sweep);
  json report{{"config", to_json(c)}, {"rows", to_json(rows)}};
  write_json(fs::path(o.out) / "sweep.json", report);
  std::vector<MetricsReport> reports;
  std::vector<std::string> labels;
  for (const SweepRow& r : rows) {
    reports.push_back(r.report);
    char buf[64];
    std::snprintf(buf, sizeof buf, "alpha=%g K=%zu", r.alpha, r.k);
    labels.emplace_back(buf);
  }
  const std::string table = format_table(reports, labels);
  write_text(fs::path(o.out) / "sweep.txt", table);
  std::cout << table;
  return 0;
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const FormatError*>(&e)) return "format_error";
  if (dynamic_cast<const IntegrityError*>(&e)) return "integrity_error";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric_error";
  if (dynamic_cast<const ContractError*>(&e)) return "contract_error";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension_error";
  if (dynamic_cast<const LookupError*>(&e)) return "lookup_error";
  if (dynamic_cast<const UndefinedMetricError*>(&e)) return "undefined_metric";
  return "error";
}

void report_error(const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"re-ranking experiments"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "benchmark config JSON")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "seed for every random stream");
    sub->add_option("--out", o.out, "output directory");
    sub->add_flag("--parallel", o.parallel, "use all cores for evaluation and timing");
  };
  auto data = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "directory written by gen-data (default: --out)");
  };
  auto model = [&](CLI::App* sub) {
    sub->add_option("--alpha", o.alpha, "contrastive loss weight")->check(CLI::NonNegativeNumber);
    sub->add_option("--k", o.k, "number of selected permutations")->check(CLI::PositiveNumber);
  };
  auto gen = [&](CLI::App* sub) {
    sub->add_option("--generator", o.generator, "full, beam, random or fpsm")
        ->check(CLI::IsMember({"full", "beam", "random", "fpsm"}));
  };
  auto ckpt = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--checkpoint", o.checkpoint, "model checkpoint");
    opt->check(CLI::ExistingFile);
    if (required) opt->required();
  };

  CLI::App* gen_data = app.add_subcommand("gen-data", "write a synthetic JSONL log and its ground truth");
  common(gen_data);
  CLI::App* pretrain = app.add_subcommand("pretrain", "fit OCPM on displayed permutations");
  common(pretrain);
  data(pretrain);
  CLI::App* train = app.add_subcommand("train", "joint training with the contrastive loss");
  common(train);
  data(train);
  model(train);
  ckpt(train, false);
  CLI::App* eval = app.add_subcommand("eval", "AUC, LogLoss and HR@1 on the held-out requests");
  common(eval);
  data(eval);
  model(eval);
  gen(eval);
  ckpt(eval, true);
  CLI::App* bench = app.add_subcommand("bench", "per-request latency of every generator");
  common(bench);
  data(bench);
  model(bench);
  ckpt(bench, true);
  CLI::App* sweep = app.add_subcommand("sweep", "alpha and K sweeps");
  common(sweep);
  model(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage_error", e.what());
    return 2;
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    int rc = 0;
    if (*gen_data) rc = cmd_gen_data(o);
    else if (*pretrain) rc = cmd_pretrain(o);
    else if (*train) rc = cmd_train(o);
    else if (*eval) rc = cmd_eval(o);
    else if (*bench) rc = cmd_bench(o);
    else if (*sweep) rc = cmd_sweep(o);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log(Level::kInfo, "done in " + std::to_string(secs) + " s");
    return rc;
  } catch (const std::exception& e) {
    report_error(error_kind(e), e.what());
    return 1;
  }
}
