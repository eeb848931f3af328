#include "pier/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

#include "pier/errors.hpp"
#include "pier/metrics.hpp"
#include "pier/permgen.hpp"

namespace pier {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::size_t worker_count(std::size_t requested, std::size_t work) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, work));
}

// Runs body(i) for i in [0, n) over contiguous ranges; results land by index.
template <typename Body>
void parallel_for(std::size_t n, std::size_t threads, Body body) {
  const std::size_t workers = worker_count(threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  const std::size_t per = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * per; i < std::min(n, (w + 1) * per); ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<int> displayed_labels(std::span<const LogRecord> records) {
  std::vector<int> y;
  for (const LogRecord& r : records) y.insert(y.end(), r.clicks.begin(), r.clicks.end());
  return y;
}

}  // namespace

Generator parse_generator(std::string_view name) {
  if (name == "full") return Generator::kFull;
  if (name == "beam") return Generator::kBeam;
  if (name == "random") return Generator::kRandom;
  if (name == "fpsm") return Generator::kFpsm;
  throw ContractError("unknown generator '" + std::string(name) +
                      "', expected full, beam, random or fpsm");
}

std::string_view generator_name(Generator g) {
  switch (g) {
    case Generator::kFull: return "full";
    case Generator::kBeam: return "beam";
    case Generator::kRandom: return "random";
    case Generator::kFpsm: return "fpsm";
  }
  return "unknown";
}

std::vector<Permutation> generate(Generator generator, const ModelState& state,
                                  const LogRecord& record, std::size_t k, std::uint64_t seed) {
  const std::size_t nd = state.config.n_display;
  switch (generator) {
    case Generator::kFull:
      return enumerate_permutations(record.candidates.size(), nd);
    case Generator::kBeam:
      return beam_search_generate(record.candidates, nd, k).permutations;
    case Generator::kRandom: {
      const std::uint64_t stream =
          fnv1a(std::to_string(record.request_id), seed * 0x9E3779B97F4A7C15ULL);
      return random_generate(record.candidates, nd, k, stream);
    }
    case Generator::kFpsm:
      return fpsm_select(state, record.candidates, record.behaviors, k);
  }
  throw ContractError("generate: unknown generator");
}

Permutation rerank(const ModelState& state, const LogRecord& record,
                   std::span<const Permutation> perms) {
  if (perms.empty()) throw ContractError("rerank: no candidate permutations");
  const auto preds = ocpm_predict_many(state, record.candidates, perms, record.behaviors);
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double s = ocpm_score(preds[i]);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return perms[best];
}

CostStats bench_cost(const std::function<void(const LogRecord&)>& pipeline,
                     std::span<const LogRecord> slice, std::size_t repetitions) {
  if (repetitions < 30) {
    throw ContractError("bench_cost: need at least 30 repetitions, got " +
                        std::to_string(repetitions));
  }
  if (slice.empty()) throw ContractError("bench_cost: empty request slice");
  constexpr std::size_t kWarmup = 5;
  for (std::size_t i = 0; i < kWarmup; ++i) pipeline(slice[i % slice.size()]);
  std::vector<double> ms(repetitions);
  for (std::size_t i = 0; i < repetitions; ++i) {
    const LogRecord& r = slice[(kWarmup + i) % slice.size()];
    const auto t0 = std::chrono::steady_clock::now();
    pipeline(r);
    const auto t1 = std::chrono::steady_clock::now();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  CostStats out;
  out.repetitions = repetitions;
  for (double v : ms) out.mean_ms += v;
  out.mean_ms /= static_cast<double>(repetitions);
  std::sort(ms.begin(), ms.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(repetitions)));
  out.p99_ms = ms[std::max<std::size_t>(rank, 1) - 1];
  return out;
}

std::function<void(const LogRecord&)> make_pipeline(const ModelState& state, Generator generator,
                                                    std::size_t k, std::uint64_t seed) {
  return [&state, generator, k, seed](const LogRecord& r) {
    const auto perms = generate(generator, state, r, k, seed);
    volatile std::size_t sink = rerank(state, r, perms).item_indices.size();
    (void)sink;
  };
}

json to_json(const MetricsReport& r) {
  return json{{"run_id", r.run_id},
              {"generator", r.generator},
              {"k", r.k},
              {"requests", r.requests},
              {"auc", r.auc},
              {"logloss", r.logloss},
              {"hr_at_1", r.hr_at_1},
              {"cost_measured", r.cost_measured},
              {"mean_cost_ms", r.mean_cost_ms},
              {"p99_cost_ms", r.p99_cost_ms},
              {"config", r.config}};
}

MetricsReport report_from_json(const json& j) {
  static const std::vector<std::string> kKeys = {
      "run_id", "generator", "k",           "requests",    "auc",   "logloss",
      "hr_at_1", "cost_measured", "mean_cost_ms", "p99_cost_ms", "config"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw FormatError("metrics report: unknown field '" + key + "'");
    }
  }
  try {
    MetricsReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.generator = j.at("generator").get<std::string>();
    r.k = j.at("k").get<std::size_t>();
    r.requests = j.at("requests").get<std::size_t>();
    r.auc = j.at("auc").get<double>();
    r.logloss = j.at("logloss").get<double>();
    r.hr_at_1 = j.at("hr_at_1").get<double>();
    r.cost_measured = j.at("cost_measured").get<bool>();
    r.mean_cost_ms = j.at("mean_cost_ms").get<double>();
    r.p99_cost_ms = j.at("p99_cost_ms").get<double>();
    r.config = j.at("config");
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("metrics report: ") + e.what());
  }
}

std::string make_run_id(const json& config, std::string_view data_digest) {
  return hex64(fnv1a(data_digest, fnv1a(config.dump()))).substr(0, 12);
}

std::string dataset_digest(std::span<const LogRecord> records) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const LogRecord& r : records) h = fnv1a(to_jsonl_line(r), h);
  return hex64(h);
}

double hit_ratio(const ModelState& state, std::span<const LogRecord> test,
                 const GroundTruthModel& truth, Generator generator, std::size_t k,
                 std::uint64_t seed, std::size_t threads) {
  if (test.empty()) throw ContractError("hit_ratio: empty test set");
  std::vector<int> hits(test.size());
  parallel_for(test.size(), threads, [&](std::size_t i) {
    const auto perms = generate(generator, state, test[i], k, seed);
    hits[i] = hr_at_1(perms, oracle_best_permutation(test[i], truth));
  });
  double total = 0.0;
  for (int h : hits) total += h;
  return total / static_cast<double>(test.size());
}

MetricsReport evaluate(const ModelState& state, std::span<const LogRecord> test,
                       const GroundTruthModel& truth, const EvalConfig& config,
                       const json& config_snapshot) {
  if (test.empty()) throw ContractError("evaluate: empty test set");
  MetricsReport r;
  r.generator = std::string(generator_name(config.generator));
  r.k = config.generator == Generator::kFull
            ? arrangement_count(test.front().candidates.size(), state.config.n_display)
            : config.k;
  r.requests = test.size();
  const std::vector<double> pred = ocpm_predict_displayed(state, test);
  const std::vector<int> y = displayed_labels(test);
  r.auc = auc(pred, y);
  r.logloss = logloss(pred, y);
  r.hr_at_1 =
      hit_ratio(state, test, truth, config.generator, config.k, config.seed, config.threads);
  if (config.measure_cost) {
    const std::size_t n = std::min(config.cost_requests, test.size());
    const CostStats c = bench_cost(make_pipeline(state, config.generator, config.k, config.seed),
                                   test.first(n), config.cost_repetitions);
    r.cost_measured = true;
    r.mean_cost_ms = c.mean_ms;
    r.p99_cost_ms = c.p99_ms;
  }
  r.config = config_snapshot;
  r.run_id = make_run_id(config_snapshot, dataset_digest(test));
  return r;
}

MetricsReport evaluate_pointwise(const PointwiseModel& model, std::span<const LogRecord> test) {
  if (test.empty()) throw ContractError("evaluate_pointwise: empty test set");
  MetricsReport r;
  r.generator = "pointwise";
  r.requests = test.size();
  const std::vector<double> pred = pointwise_predict_displayed(model, test);
  const std::vector<int> y = displayed_labels(test);
  r.auc = auc(pred, y);
  r.logloss = logloss(pred, y);
  r.run_id = make_run_id(r.config, dataset_digest(test));
  return r;
}

std::string format_table(std::span<const MetricsReport> reports,
                         std::span<const std::string> row_labels) {
  if (reports.size() != row_labels.size()) {
    throw ContractError("format_table: one label per report required");
  }
  std::size_t width = 6;
  for (const auto& l : row_labels) width = std::max(width, l.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %6s  %6s  %10s  %10s\n", static_cast<int>(width),
                "Method", "AUC", "LogLoss", "K", "HR@1", "Cost(ms)", "p99(ms)");
  out += buf;
  out += std::string(width + 66, '-') + "\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const MetricsReport& r = reports[i];
    std::string cost = "-", p99 = "-";
    if (r.cost_measured) {
      std::snprintf(buf, sizeof buf, "%.3f", r.mean_cost_ms);
      cost = buf;
      std::snprintf(buf, sizeof buf, "%.3f", r.p99_cost_ms);
      p99 = buf;
    }
    std::string k = "-", hr = "-";
    if (r.generator != "pointwise") {
      k = std::to_string(r.k);
      std::snprintf(buf, sizeof buf, "%.3f", r.hr_at_1);
      hr = buf;
    }
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f  %6s  %6s  %10s  %10s\n",
                  static_cast<int>(width), row_labels[i].c_str(), r.auc, r.logloss, k.c_str(),
                  hr.c_str(), cost.c_str(), p99.c_str());
    out += buf;
  }
  return out;
}

std::vector<SweepRow> run_sweep(const ModelState& pretrained, std::span<const LogRecord> train,
                                std::span<const LogRecord> test, const GroundTruthModel& truth,
                                const TrainConfig& train_config, const SweepConfig& sweep) {
  std::vector<SweepRow> rows;
  auto run = [&](const std::string& axis, double alpha, std::size_t k) {
    TrainConfig tc = train_config;
    tc.alpha = alpha;
    tc.k = k;
    ModelState s = pretrained;
    joint_train(train, s, tc);
    EvalConfig ec = sweep.eval;
    ec.generator = Generator::kFpsm;
    ec.k = k;
    json snapshot{{"axis", axis}, {"alpha", alpha}, {"k", k}};
    rows.push_back(SweepRow{axis, alpha, k, evaluate(s, test, truth, ec, snapshot)});
  };
  for (double a : sweep.alphas) run("alpha", a, train_config.k);
  for (std::size_t k : sweep.ks) run("k", train_config.alpha, k);
  return rows;
}

json to_json(std::span<const SweepRow> rows) {
  json out = json::array();
  for (const SweepRow& r : rows) {
    out.push_back(json{{"axis", r.axis}, {"alpha", r.alpha}, {"k", r.k},
                       {"report", to_json(r.report)}});
  }
  return out;
}

}  // namespace pier
