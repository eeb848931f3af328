// Acceptance checks 1-11. One PASS/FAIL line per criterion on stdout,
// progress on stderr.
//
// Exit status: 0 when every criterion outside kDocumentedFailures passes
// (or, with --strict, when every criterion passes).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pier/checkpoint.hpp"
#include "pier/data.hpp"
#include "pier/evaluation.hpp"
#include "pier/experiment.hpp"
#include "pier/fpsm.hpp"
#include "pier/gradcheck.hpp"
#include "pier/json_io.hpp"
#include "pier/metrics.hpp"
#include "pier/ocpm.hpp"
#include "pier/permgen.hpp"
#include "pier/training.hpp"

using namespace pier;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances.
constexpr double kHrGap = 0.03;            // criterion 3, adjacent HR gap
constexpr double kContextGain = 0.01;      // criterion 4, AUC gain and collapse bound
constexpr double kAlphaHrGain = 0.05;      // criterion 5, HR(0.1) - HR(0)
constexpr double kGradTolerance = 1e-4;    // criterion 7
constexpr double kSimHashTolerance = 0.02; // criterion 8
constexpr double kAucOracleTolerance = 1e-12;  // criterion 9
constexpr std::size_t kSimHashPairs = 10000;
constexpr std::size_t kCostRepetitions = 100;

// Criteria that do not hold at desk scale; see the decisions ledger.
const std::set<int> kDocumentedFailures = {3, 5, 6};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

void progress(const std::string& msg) {
  std::fprintf(stderr, "  .. %s\n", msg.c_str());
  std::fflush(stderr);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string f4(double x) { return fmt("%.4f", x); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Benchmark artifacts shared by several criteria, built on first use.
class Bench {
 public:
  explicit Bench(BenchmarkConfig config) : config_(std::move(config)) {}

  const BenchmarkConfig& config() const { return config_; }

  const BenchmarkData& data() {
    if (!data_) {
      progress("generating " + std::to_string(config_.n_requests) + " requests");
      data_ = make_benchmark_data(config_);
    }
    return *data_;
  }

  const PointwiseModel& baseline() {
    if (!baseline_) {
      progress("training the point-wise baseline");
      baseline_ = train_pointwise_baseline(data().split.train, config_.world.vocab_sizes,
                                           config_.world.point_dim, config_.world.max_behaviors,
                                           config_.baseline);
    }
    return *baseline_;
  }

  const ModelState& pretrained() {
    if (!pretrained_) pretrained_ = pretrain(config_.model);
    return *pretrained_;
  }

  ModelState pretrain(const OcpmConfig& model) {
    BenchmarkConfig c = config_;
    c.model = model;
    progress(std::string("pretraining OCPM") + (model.use_oau ? "" : " without OAU") +
             (model.use_tau ? "" : " without TAU"));
    ModelState s = make_model_state(model_spec(c));
    pretrain_ocpm(data().split.train, s, config_.train);
    return s;
  }

  const ModelState& joint(double alpha) {
    auto it = joint_.find(alpha);
    if (it == joint_.end()) {
      progress("joint training, alpha " + fmt("%g", alpha));
      ModelState s = pretrained();
      TrainConfig tc = config_.train;
      tc.alpha = alpha;
      joint_train(data().split.train, s, tc);
      it = joint_.emplace(alpha, std::move(s)).first;
    }
    return it->second;
  }

  double hr(const ModelState& s, Generator g, std::size_t k) {
    return hit_ratio(s, data().split.test, data().synthetic.model, g, k, config_.eval.seed,
                     config_.eval.threads);
  }

  double auc_of(const ModelState& s) {
    EvalConfig ec = config_.eval;
    return evaluate(s, data().split.test, data().synthetic.model, ec).auc;
  }

 private:
  BenchmarkConfig config_;
  std::optional<BenchmarkData> data_;
  std::optional<PointwiseModel> baseline_;
  std::optional<ModelState> pretrained_;
  std::map<double, ModelState> joint_;
};

Outcome criterion1() {
  const auto t = Clock::now();
  const std::size_t a = enumerate_permutations(5, 5).size();
  const std::size_t b = enumerate_permutations(10, 3).size();
  const double dt = seconds_since(t);
  return {a == 120 && b == 720 && dt < 1.0,
          "(5,5) -> " + std::to_string(a) + ", (10,3) -> " + std::to_string(b)};
}

Outcome criterion2(const BenchmarkConfig& base) {
  const auto t = Clock::now();
  const BenchmarkData d = make_benchmark_data(base, 2000, 1000);
  const ModelState s = make_model_state(model_spec(base));
  EvalConfig ec = base.eval;
  ec.generator = Generator::kFull;
  const MetricsReport r = evaluate(s, d.split.test, d.synthetic.model, ec);
  const double dt = seconds_since(t);
  return {r.hr_at_1 == 1.0 && r.requests == 1000 && dt < 60.0,
          "HR@1 full = " + fmt("%.2f", r.hr_at_1) + " on " + std::to_string(r.requests) +
              " requests"};
}

Outcome criterion3(Bench& b) {
  const std::size_t k = b.config().eval.k;
  const ModelState& s = b.joint(b.config().train.alpha);
  const double full = b.hr(s, Generator::kFull, k);
  const double pier = b.hr(s, Generator::kFpsm, k);
  const double beam = b.hr(s, Generator::kBeam, k);
  const double rnd = b.hr(s, Generator::kRandom, k);
  const bool pass = full - pier >= kHrGap && pier - beam >= kHrGap && beam - rnd >= kHrGap;
  return {pass, "full " + f4(full) + ", PIER " + f4(pier) + ", beam " + f4(beam) + ", random " +
                    f4(rnd) + " (gap >= " + fmt("%.2f", kHrGap) + ")"};
}

Outcome criterion4(Bench& b) {
  const double ocpm_on = b.auc_of(b.pretrained());
  const double point_on = evaluate_pointwise(b.baseline(), b.data().split.test).auc;

  BenchmarkConfig off = b.config();
  off.world.context_effects = false;
  Bench flat(off);
  const double ocpm_off = flat.auc_of(flat.pretrained());
  const double point_off = evaluate_pointwise(flat.baseline(), flat.data().split.test).auc;

  const double gain = ocpm_on - point_on;
  const double gap_off = std::abs(ocpm_off - point_off);
  return {gain >= kContextGain && gap_off < kContextGain,
          "context: OCPM " + f4(ocpm_on) + " vs DNN " + f4(point_on) + " (+" + f4(gain) +
              "); no context: OCPM " + f4(ocpm_off) + " vs DNN " + f4(point_off) + " (|gap| " +
              f4(gap_off) + ")"};
}

Outcome criterion5(Bench& b) {
  const double full = b.auc_of(b.pretrained());
  OcpmConfig m = b.config().model;
  m.use_oau = false;
  const double no_oau = b.auc_of(b.pretrain(m));
  m = b.config().model;
  m.use_tau = false;
  const double no_tau = b.auc_of(b.pretrain(m));

  const std::size_t k = b.config().eval.k;
  const ModelState& with_alpha = b.joint(0.1);
  const double hr_alpha = b.hr(with_alpha, Generator::kFpsm, k);
  const double hr_zero = b.hr(b.joint(0.0), Generator::kFpsm, k);
  ModelState uniform = with_alpha;
  uniform.time_decay = 1.0;
  const double hr_uniform = b.hr(uniform, Generator::kFpsm, k);

  const bool oau = no_oau < full;
  const bool tau = no_tau < full;
  const bool alpha = hr_alpha - hr_zero >= kAlphaHrGain;
  const bool time = hr_uniform <= hr_alpha;
  auto mark = [](bool ok) { return ok ? "ok" : "no"; };
  return {oau && tau && alpha && time,
          std::string("AUC full ") + f4(full) + ", -OAU " + f4(no_oau) + " [" + mark(oau) +
              "], -TAU " + f4(no_tau) + " [" + mark(tau) + "]; HR a=0.1 " + f4(hr_alpha) +
              ", a=0 " + f4(hr_zero) + " [" + mark(alpha) + "], uniform weights " +
              f4(hr_uniform) + " [" + mark(time) + "]"};
}

Outcome criterion6(const BenchmarkConfig& base) {
  const auto t = Clock::now();
  progress("sweep data: " + std::to_string(base.sweep_requests) + " requests");
  const BenchmarkData d = make_benchmark_data(base, base.sweep_requests, base.sweep_test);
  ModelState pre = make_model_state(model_spec(base));
  progress("sweep pretraining");
  pretrain_ocpm(d.split.train, pre, base.train);
  SweepConfig sc = base.sweep;
  sc.alphas = {0.0, 0.01, 0.05, 0.1, 0.3, 0.5};
  sc.ks.clear();
  progress("alpha sweep");
  const auto rows =
      run_sweep(pre, d.split.train, d.split.test, d.synthetic.model, base.train, sc);
  bool hr_monotone = true;
  double low_min = 1.0, high_max = 0.0;
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i > 0 && r.report.hr_at_1 < rows[i - 1].report.hr_at_1) hr_monotone = false;
    if (r.alpha <= 0.1) low_min = std::min(low_min, r.report.auc);
    if (r.alpha >= 0.3) high_max = std::max(high_max, r.report.auc);
    detail += (i ? "; " : "") + fmt("a=%g", r.alpha) + " AUC " + f4(r.report.auc) + " HR " +
              f4(r.report.hr_at_1);
  }
  const bool auc_drop = high_max < low_min;
  const double dt = seconds_since(t);
  return {hr_monotone && auc_drop && dt < 7200.0,
          std::string("HR nondecreasing: ") + (hr_monotone ? "yes" : "no") +
              ", AUC(a>=0.3) < AUC(a<=0.1): " + (auc_drop ? "yes" : "no") + " | " + detail};
}

OcpmConfig small_ocpm() {
  OcpmConfig c;
  c.dim = 4;
  c.mlp1 = {8, 6};
  c.mlp2 = {8, 5};
  c.mlp_att = {6, 1};
  c.mlp3 = {8, 1};
  return c;
}

Outcome criterion7() {
  const auto t = Clock::now();
  WorldConfig w;
  w.n_items = 6;
  w.n_users = 30;
  w.burn_in_requests = 200;
  w.point_model.epochs = 1;
  double worst = 0.0;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto data = generate_synthetic_dataset(w, 30, seed);
    ModelSpec spec;
    spec.vocab_sizes = w.vocab_sizes;
    spec.ocpm = small_ocpm();
    spec.seed = seed;
    ModelState s = make_model_state(spec);
    TrainConfig tc;
    tc.batch_size = 10;
    tc.pretrain_epochs = 1;
    tc.seed = seed;
    pretrain_ocpm(data.records, s, tc);

    const LogRecord& ex = data.records[seed % data.records.size()];
    const auto all = enumerate_permutations(ex.candidates.size(), 3);
    const auto sel = fpsm_select(s, ex.candidates, ex.behaviors, 3);
    std::mt19937_64 rng(seed);
    const std::vector<Permutation> uns = [&] {
      std::vector<Permutation> out;
      for (int i = 0; i < 3; ++i) {
        out.push_back(all[std::uniform_int_distribution<std::size_t>(0, all.size() - 1)(rng)]);
      }
      return out;
    }();
    OcpmBatch batch;
    const auto h = batch.add_history(ex.behaviors, s.max_behaviors);
    for (const auto* group : {&sel, &uns}) {
      for (const auto& p : *group) {
        batch.add_target(permutation_features(ex.candidates, p),
                         permutation_point_scores(ex.candidates, p), h);
      }
    }
    batch.add_target(permutation_features(ex.candidates, ex.displayed),
                     permutation_point_scores(ex.candidates, ex.displayed), h);
    const std::vector<double> labels(ex.clicks.begin(), ex.clicks.end());
    const auto params = s.trainable();
    const auto r = grad_check(
        [&](Graph& g) {
          Var pred = ocpm_forward(g, s.table, s.params, s.config, batch, s.max_behaviors);
          Var l1 = ag::bce_sum(ag::slice_rows(pred, 6, 7), labels);
          Var l2 = contrastive_loss(ag::slice_rows(pred, 0, 3), ag::slice_rows(pred, 3, 6));
          return ag::add(l1, ag::scale(l2, 0.1));
        },
        params);
    worst = std::max(worst, r.max_relative_error);
  }
  const double dt = seconds_since(t);
  return {worst < kGradTolerance && dt < 60.0,
          "max relative error " + fmt("%.2e", worst) + " over 3 seeded states"};
}

Outcome criterion8() {
  const auto t = Clock::now();
  constexpr std::size_t dim = 16;
  const HashFamily family(1, kDefaultSignatureBits, dim, 8);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  auto unit = [&] {
    std::vector<double> v(dim);
    double norm = 0.0;
    for (double& x : v) {
      x = n01(rng);
      norm += x * x;
    }
    for (double& x : v) x /= std::sqrt(norm);
    return v;
  };
  double bias = 0.0, abs_err = 0.0;
  for (std::size_t i = 0; i < kSimHashPairs; ++i) {
    const auto a = unit(), b = unit();
    double dot = 0.0;
    for (std::size_t j = 0; j < dim; ++j) dot += a[j] * b[j];
    const double theta = std::acos(std::clamp(dot, -1.0, 1.0));
    const double est =
        static_cast<double>(hamming(simhash(a, family.bank(0)), simhash(b, family.bank(0)))) /
        static_cast<double>(kDefaultSignatureBits);
    bias += est - theta / std::numbers::pi;
    abs_err += std::abs(est - theta / std::numbers::pi);
  }
  bias = std::abs(bias / kSimHashPairs);
  abs_err /= kSimHashPairs;
  const double dt = seconds_since(t);
  return {bias < kSimHashTolerance && dt < 10.0,
          "|mean(H/B - theta/pi)| = " + f4(bias) + " (mean |H/B - theta/pi| = " + f4(abs_err) +
              ") over " + std::to_string(kSimHashPairs) + " pairs"};
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      den += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / den;
}

Outcome criterion9(const BenchmarkConfig& base) {
  const auto t = Clock::now();
  const BenchmarkData d = make_benchmark_data(base, 1200, 200);
  ModelState s = make_model_state(model_spec(base));
  TrainConfig tc = base.train;
  tc.pretrain_epochs = 1;
  pretrain_ocpm(d.split.train, s, tc);

  std::mt19937_64 rng(9);
  std::size_t fpsm_ok = 0, fpsm_total = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const LogRecord& r = d.split.test[i];
    auto all = enumerate_permutations(r.candidates.size(), 3);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(120);
    const auto w = time_weights(r.behaviors.size(), s.time_decay);
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t j = 0; j < all.size(); ++j) {
      dist.emplace_back(time_aware_distance(r.candidates, all[j], r.behaviors, s.family, w,
                                            s.table),
                        j);
    }
    std::sort(dist.begin(), dist.end());
    std::vector<std::size_t> expect;
    for (std::size_t j = 0; j < 20; ++j) expect.push_back(dist[j].second);
    fpsm_ok += select_top_k_indices(r.candidates, all, 20, r.behaviors, s.family, w, s.table) ==
               expect;
    ++fpsm_total;
  }

  std::size_t argmax_ok = 0, argmax_total = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const LogRecord& r = d.split.test[50 + i];
    const auto all = enumerate_permutations(r.candidates.size(), 3);
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t j = 0; j < all.size(); ++j) {
      const auto pred = ocpm_predict(s, r.candidates, all[j], r.behaviors);
      double score = 0.0;
      for (double p : pred) score += p;
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    argmax_ok += rerank(s, r, all) == all[best];
    ++argmax_total;
  }

  const std::vector<double> scores = ocpm_predict_displayed(s, d.split.test);
  std::vector<int> labels;
  for (const LogRecord& r : d.split.test) {
    for (auto c : r.clicks) labels.push_back(c);
  }
  const double auc_err = std::abs(auc(scores, labels) - pairwise_auc(scores, labels));
  const double dt = seconds_since(t);
  return {fpsm_ok == fpsm_total && argmax_ok == argmax_total && auc_err < kAucOracleTolerance &&
              dt < 60.0,
          "FPSM top-20 of 120 " + std::to_string(fpsm_ok) + "/" + std::to_string(fpsm_total) +
              ", argmax of 720 " + std::to_string(argmax_ok) + "/" +
              std::to_string(argmax_total) + ", AUC oracle error " + fmt("%.1e", auc_err)};
}

Outcome criterion10(Bench& b) {
  const auto t = Clock::now();
  const ModelState& s = b.pretrained();
  const auto& test = b.data().split.test;
  const std::span<const LogRecord> slice(test.data(),
                                         std::min(test.size(), b.config().eval.cost_requests));
  const std::uint64_t seed = b.config().eval.seed;
  auto cost = [&](Generator g, std::size_t k) {
    return bench_cost(make_pipeline(s, g, k, seed), slice, kCostRepetitions).mean_ms;
  };
  const double full = cost(Generator::kFull, 100);
  const double k50 = cost(Generator::kFpsm, 50);
  const double k100 = cost(Generator::kFpsm, 100);
  const double k200 = cost(Generator::kFpsm, 200);
  const double dt = seconds_since(t);
  return {full > k100 && k50 < k100 && k100 < k200 && dt < 300.0,
          "mean ms: full " + fmt("%.3f", full) + ", FPSM K=50 " + fmt("%.3f", k50) + ", K=100 " +
              fmt("%.3f", k100) + ", K=200 " + fmt("%.3f", k200)};
}

Outcome criterion11(Bench& b) {
  const fs::path dir = fs::temp_directory_path() / "pier_acceptance";
  fs::create_directories(dir);

  progress("regenerating the dataset");
  const BenchmarkData again = make_benchmark_data(b.config());
  write_jsonl(b.data().synthetic.records, dir / "a.jsonl");
  write_jsonl(again.synthetic.records, dir / "b.jsonl");
  write_ground_truth(b.data().synthetic.model, dir / "a_truth.json");
  write_ground_truth(again.synthetic.model, dir / "b_truth.json");
  const bool data_same = slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl") &&
                         slurp(dir / "a_truth.json") == slurp(dir / "b_truth.json");

  progress("repeating pretraining");
  ModelState second = make_model_state(model_spec(b.config()));
  pretrain_ocpm(again.split.train, second, b.config().train);
  save_checkpoint(b.pretrained(), dir / "a.ckpt");
  save_checkpoint(second, dir / "b.ckpt");
  const bool ckpt_same = slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt");

  const nlohmann::json snap = to_json(b.config());
  const auto ra = evaluate(b.pretrained(), b.data().split.test, b.data().synthetic.model,
                           b.config().eval, snap);
  const auto rb =
      evaluate(second, again.split.test, again.synthetic.model, b.config().eval, snap);
  const bool report_same = to_json(ra).dump() == to_json(rb).dump();
  fs::remove_all(dir);
  auto yn = [](bool v) { return v ? "identical" : "DIFFERENT"; };
  return {data_same && ckpt_same && report_same, std::string("dataset ") + yn(data_same) +
                                                     ", checkpoint " + yn(ckpt_same) +
                                                     ", report " + yn(report_same) +
                                                     " (run id " + ra.run_id + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string config_path;
  std::vector<int> only;
  bool strict = false;
  app.add_option("--config", config_path, "benchmark config JSON")->check(CLI::ExistingFile);
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_flag("--strict", strict, "fail on any FAIL line");
  CLI11_PARSE(app, argc, argv);

  BenchmarkConfig config;
  if (!config_path.empty()) config = load_benchmark_config(config_path);
  Bench bench(config);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, [] { return criterion1(); }},
      {2, [&] { return criterion2(config); }},
      {3, [&] { return criterion3(bench); }},
      {4, [&] { return criterion4(bench); }},
      {5, [&] { return criterion5(bench); }},
      {6, [&] { return criterion6(config); }},
      {7, [] { return criterion7(); }},
      {8, [] { return criterion8(); }},
      {9, [&] { return criterion9(config); }},
      {10, [&] { return criterion10(bench); }},
      {11, [&] { return criterion11(bench); }},
  };

  int unexpected = 0, failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const bool documented = kDocumentedFailures.count(id) > 0;
    std::printf("criterion %2d: %s  %s  [%.1fs]%s\n", id, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), seconds_since(t),
                !o.pass && documented ? "  (documented)" : "");
    std::fflush(stdout);
    if (!o.pass) {
      ++failed;
      if (!documented) ++unexpected;
    }
  }
  return (strict ? failed : unexpected) == 0 ? 0 : 1;
}
