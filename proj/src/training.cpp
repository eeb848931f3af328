#include "pier/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <string>

#include "pier/errors.hpp"
#include "pier/permgen.hpp"

namespace pier {

double loss_bce(std::span<const double> pred, std::span<const double> labels) {
  if (pred.size() != labels.size()) {
    throw ContractError("loss_bce: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const double p = std::clamp(pred[t], 1e-12, 1.0 - 1e-12);
    total -= labels[t] * std::log(p) + (1.0 - labels[t]) * std::log(1.0 - p);
  }
  return total;
}

double loss_contrastive(std::span<const std::vector<double>> selected,
                        std::span<const std::vector<double>> unselected, bool signed_gap) {
  if (selected.size() != unselected.size()) {
    throw ContractError("loss_contrastive: " + std::to_string(selected.size()) +
                        " selected vs " + std::to_string(unselected.size()) + " unselected");
  }
  const auto mean = [](const std::vector<double>& v) {
    if (v.empty()) throw ContractError("loss_contrastive: empty prediction");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  double total = 0.0;
  for (std::size_t k = 0; k < selected.size(); ++k) {
    if (selected[k].size() != unselected[k].size()) {
      throw ContractError("loss_contrastive: prediction lengths differ at pair " +
                          std::to_string(k));
    }
    double gap = mean(selected[k]) - mean(unselected[k]);
    if (signed_gap) gap = std::max(gap, 0.0);
    total -= gap * gap;
  }
  return total;
}

Var contrastive_loss(Var selected, Var unselected, bool signed_gap) {
  if (selected.shape() != unselected.shape()) {
    throw ContractError("contrastive_loss: " + shape_string(selected.shape()) + " vs " +
                        shape_string(unselected.shape()));
  }
  Var gap = ag::sub(ag::row_mean(selected), ag::row_mean(unselected));
  if (signed_gap) gap = ag::relu(gap);
  return ag::scale(ag::sum(ag::mul(gap, gap)), -1.0);
}

double combined_loss(double l1, double l2, double alpha) {
  if (alpha < 0.0) throw ContractError("combined_loss: alpha must be >= 0");
  return l1 + alpha * l2;
}

double combined_loss(std::span<const double> l1, std::span<const double> l2, double alpha) {
  if (l1.size() != l2.size() || l1.empty()) {
    throw ContractError("combined_loss: need equal, nonempty loss lists");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < l1.size(); ++i) total += combined_loss(l1[i], l2[i], alpha);
  return total / static_cast<double>(l1.size());
}

Adam::Adam(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<Parameter* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw ContractError("Adam: " + std::to_string(params.size()) + " parameters, " +
                        std::to_string(grads.size()) + " gradients");
  }
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) throw ContractError("Adam: parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& value = params[i]->value;
    const Tensor& g = grads[i];
    if (g.shape() != value.shape()) {
      throw DimensionError("Adam: gradient " + shape_string(g.shape()) + " for '" +
                           params[i]->name + "' " + shape_string(value.shape()));
    }
    for (std::size_t j = 0; j < value.size(); ++j) {
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
      value[j] -= lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
    }
  }
}

std::vector<Parameter*> ModelState::trainable() {
  std::vector<Parameter*> out = table.parameters();
  for (Parameter* p : params.parameters()) out.push_back(p);
  return out;
}

ModelState make_model_state(const ModelSpec& spec) {
  OcpmConfig config = spec.ocpm;
  config.n_fields = spec.vocab_sizes.size();
  ModelState s;
  s.config = config;
  s.table = EmbeddingTable(spec.vocab_sizes, config.dim, spec.seed);
  s.params = make_ocpm_params(config, spec.seed * 0x9E3779B97F4A7C15ULL + 1);
  s.family = HashFamily(spec.max_behaviors, spec.hash_bits, config.dim,
                        spec.seed * 0x9E3779B97F4A7C15ULL + 2);
  s.max_behaviors = spec.max_behaviors;
  s.time_decay = spec.time_decay;
  return s;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

BehaviorSequence recent(const BehaviorSequence& behaviors, std::size_t m) {
  return {behaviors.begin(),
          behaviors.begin() + static_cast<std::ptrdiff_t>(std::min(m, behaviors.size()))};
}

const std::vector<Permutation>& cached_enumeration(std::size_t n_items, std::size_t n_display) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, std::size_t>, std::vector<Permutation>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find({n_items, n_display});
  if (it == cache.end()) {
    it = cache.emplace(std::pair{n_items, n_display}, enumerate_permutations(n_items, n_display))
             .first;
  }
  return it->second;
}

void check_example(const TrainingExample& ex, const OcpmConfig& config) {
  validate_permutation(ex.displayed, ex.candidates.size(), config.n_display);
  if (ex.clicks.size() != config.n_display) {
    throw ContractError("request " + std::to_string(ex.request_id) + ": " +
                        std::to_string(ex.clicks.size()) + " labels for " +
                        std::to_string(config.n_display) + " positions");
  }
}

// Permutations that accompany one example in a joint chunk.
struct Contrast {
  std::vector<Permutation> selected;
  std::vector<Permutation> unselected;
};

struct ChunkLoss {
  double l1 = 0.0;
  double l2 = 0.0;
};

// Builds one graph over a chunk, backpropagates, adds gradients into `acc`.
ChunkLoss run_chunk(ModelState& state, std::span<const TrainingExample* const> examples,
                    std::span<const Contrast> contrasts, double alpha, bool signed_gap,
                    std::size_t batch_examples, std::span<Parameter* const> params,
                    std::vector<Tensor>& acc, std::size_t step) {
  const OcpmConfig& c = state.config;
  const std::size_t n = examples.size();
  OcpmBatch batch;
  std::vector<std::int32_t> hist(n);
  for (std::size_t e = 0; e < n; ++e) {
    hist[e] = batch.add_history(recent(examples[e]->behaviors, state.max_behaviors),
                                state.max_behaviors);
  }
  std::vector<double> labels;
  labels.reserve(n * c.n_display);
  // Displayed permutations come first so the BCE rows sit at the same place
  // whether or not contrast rows follow.
  for (std::size_t e = 0; e < n; ++e) {
    const TrainingExample& ex = *examples[e];
    batch.add_target(permutation_features(ex.candidates, ex.displayed),
                     permutation_point_scores(ex.candidates, ex.displayed), hist[e]);
    for (const auto y : ex.clicks) labels.push_back(static_cast<double>(y));
  }
  for (std::size_t e = 0; e < contrasts.size(); ++e) {
    const TrainingExample& ex = *examples[e];
    for (const auto* group : {&contrasts[e].selected, &contrasts[e].unselected}) {
      for (const Permutation& p : *group) {
        batch.add_target(permutation_features(ex.candidates, p),
                         permutation_point_scores(ex.candidates, p), hist[e]);
      }
    }
  }

  Graph g;
  for (Parameter* p : params) g.parameter(*p);
  Var pred = ocpm_forward(g, state.table, state.params, c, batch, state.max_behaviors);
  Var l1 = ag::bce_sum(ag::slice_rows(pred, 0, n), labels);
  Var total = l1;
  ChunkLoss out;
  out.l1 = l1.value()[0];
  if (!contrasts.empty()) {
    std::size_t offset = n;
    Var l2;
    for (const Contrast& ct : contrasts) {
      const std::size_t k = ct.selected.size();
      Var term = contrastive_loss(ag::slice_rows(pred, offset, offset + k),
                                  ag::slice_rows(pred, offset + k, offset + 2 * k), signed_gap);
      l2 = l2.valid() ? ag::add(l2, term) : term;
      offset += 2 * k;
    }
    out.l2 = l2.value()[0];
    total = ag::add(l1, ag::scale(l2, alpha));
  }
  Var loss = ag::scale(total, 1.0 / static_cast<double>(batch_examples));
  if (!std::isfinite(loss.value()[0])) {
    const Tensor& pv = pred.value();
    for (std::size_t e = 0; e < n; ++e) {
      const std::span<const double> row = pv.row(e);
      const std::span<const double> y(labels.data() + e * c.n_display, c.n_display);
      if (!std::isfinite(loss_bce(row, y)) ||
          !std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); })) {
        throw NumericError("non-finite loss at step " + std::to_string(step) + ", request " +
                           std::to_string(examples[e]->request_id));
      }
    }
    throw NumericError("non-finite loss at step " + std::to_string(step) + ", request " +
                       std::to_string(examples.front()->request_id) + " (contrastive term)");
  }
  const Gradients grads = g.backward(loss);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& gi = grads.of(*params[i]);
    for (std::size_t j = 0; j < gi.size(); ++j) acc[i][j] += gi[j];
  }
  return out;
}

Contrast draw_contrast(const ModelState& state, const TrainingExample& ex, std::size_t k,
                       std::mt19937_64& rng) {
  const auto& all = cached_enumeration(ex.candidates.size(), state.config.n_display);
  if (2 * k > all.size()) {
    throw ContractError("joint_train: K = " + std::to_string(k) + " exceeds half of " +
                        std::to_string(all.size()) + " candidate permutations");
  }
  const BehaviorSequence hist = recent(ex.behaviors, state.max_behaviors);
  const auto w = time_weights(hist.size(), state.time_decay);
  const auto top = select_top_k_indices(ex.candidates, all, k, hist, state.family, w, state.table);
  std::vector<bool> chosen(all.size(), false);
  Contrast ct;
  for (std::size_t i : top) {
    chosen[i] = true;
    ct.selected.push_back(all[i]);
  }
  std::vector<std::size_t> rest;
  rest.reserve(all.size() - k);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!chosen[i]) rest.push_back(i);
  }
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, rest.size() - 1);
    std::swap(rest[i], rest[pick(rng)]);
    ct.unselected.push_back(all[rest[i]]);
  }
  return ct;
}

TrainLog run_training(std::span<const TrainingExample> dataset, ModelState& state,
                      const TrainConfig& config, bool joint, const StepCallback& on_step) {
  if (dataset.empty()) throw ContractError("training needs a nonempty dataset");
  if (config.batch_size == 0 || config.chunk_size == 0) {
    throw ContractError("batch_size and chunk_size must be positive");
  }
  if (config.alpha < 0.0) throw ContractError("alpha must be >= 0");
  if (joint && config.k == 0) throw ContractError("joint_train: K must be positive");
  for (const TrainingExample& ex : dataset) check_example(ex, state.config);

  const std::vector<Parameter*> params = state.trainable();
  Adam adam(config.learning_rate);
  TrainLog log;
  const std::size_t epochs = joint ? config.joint_epochs : config.pretrain_epochs;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order = epoch_order(dataset.size(), config.seed, epoch);
    if (joint && config.joint_examples > 0 && config.joint_examples < order.size()) {
      order.resize(config.joint_examples);
    }
    std::seed_seq sampler_seq{static_cast<std::uint32_t>(config.seed),
                              static_cast<std::uint32_t>(epoch), 0x5e1ec7u};
    std::mt19937_64 sampler(sampler_seq);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::size_t batch_n = end - begin;
      std::vector<Tensor> acc;
      acc.reserve(params.size());
      for (const Parameter* p : params) acc.emplace_back(p->value.shape());
      double l1 = 0.0, l2 = 0.0;
      for (std::size_t cb = begin; cb < end; cb += config.chunk_size) {
        const std::size_t ce = std::min(end, cb + config.chunk_size);
        std::vector<const TrainingExample*> chunk;
        std::vector<Contrast> contrasts;
        for (std::size_t i = cb; i < ce; ++i) {
          chunk.push_back(&dataset[order[i]]);
          if (joint) contrasts.push_back(draw_contrast(state, *chunk.back(), config.k, sampler));
        }
        const ChunkLoss cl = run_chunk(state, chunk, contrasts, config.alpha,
                                       config.signed_contrastive, batch_n, params, acc, step);
        l1 += cl.l1;
        l2 += cl.l2;
      }
      adam.step(params, acc);
      StepRecord rec;
      rec.phase = joint ? "joint" : "pretrain";
      rec.epoch = epoch;
      rec.step = step++;
      rec.l1 = l1 / static_cast<double>(batch_n);
      rec.l2 = l2 / static_cast<double>(batch_n);
      rec.loss = joint ? combined_loss(rec.l1, rec.l2, config.alpha) : rec.l1;
      log.steps.push_back(rec);
      if (on_step) on_step(rec);
    }
  }
  return log;
}

}  // namespace

TrainLog pretrain_ocpm(std::span<const TrainingExample> dataset, ModelState& state,
                       const TrainConfig& config, const StepCallback& on_step) {
  return run_training(dataset, state, config, /*joint=*/false, on_step);
}

TrainLog joint_train(std::span<const TrainingExample> dataset, ModelState& state,
                     const TrainConfig& config, const StepCallback& on_step) {
  return run_training(dataset, state, config, /*joint=*/true, on_step);
}

std::vector<Permutation> fpsm_select(const ModelState& state, const CandidateSet& candidates,
                                     const BehaviorSequence& behaviors, std::size_t k) {
  const auto& all = cached_enumeration(candidates.size(), state.config.n_display);
  const BehaviorSequence hist = recent(behaviors, state.max_behaviors);
  const auto w = time_weights(hist.size(), state.time_decay);
  return select_top_k(candidates, all, k, hist, state.family, w, state.table);
}

std::vector<double> ocpm_predict(const ModelState& state, const CandidateSet& candidates,
                                 const Permutation& perm, const BehaviorSequence& behaviors) {
  return predict_permutation(state.table, state.params, state.config, candidates, perm,
                             recent(behaviors, state.max_behaviors), state.max_behaviors);
}

std::vector<std::vector<double>> ocpm_predict_many(const ModelState& state,
                                                   const CandidateSet& candidates,
                                                   std::span<const Permutation> perms,
                                                   const BehaviorSequence& behaviors) {
  std::vector<std::vector<double>> out;
  if (perms.empty()) return out;
  OcpmBatch batch;
  const std::int32_t h =
      batch.add_history(recent(behaviors, state.max_behaviors), state.max_behaviors);
  for (const Permutation& p : perms) {
    validate_permutation(p, candidates.size(), state.config.n_display);
    batch.add_target(permutation_features(candidates, p),
                     permutation_point_scores(candidates, p), h);
  }
  Graph g(false);
  const Tensor pred =
      ocpm_forward(g, state.table, state.params, state.config, batch, state.max_behaviors).value();
  out.reserve(perms.size());
  for (std::size_t i = 0; i < perms.size(); ++i) {
    const auto row = pred.row(i);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

std::vector<double> ocpm_predict_displayed(const ModelState& state,
                                           std::span<const LogRecord> records) {
  constexpr std::size_t kChunk = 256;
  std::vector<double> out;
  out.reserve(records.size() * state.config.n_display);
  for (std::size_t begin = 0; begin < records.size(); begin += kChunk) {
    const std::size_t end = std::min(records.size(), begin + kChunk);
    OcpmBatch batch;
    for (std::size_t i = begin; i < end; ++i) {
      const LogRecord& r = records[i];
      validate_permutation(r.displayed, r.candidates.size(), state.config.n_display);
      const std::int32_t h =
          batch.add_history(recent(r.behaviors, state.max_behaviors), state.max_behaviors);
      batch.add_target(permutation_features(r.candidates, r.displayed),
                       permutation_point_scores(r.candidates, r.displayed), h);
    }
    Graph g(false);
    const Tensor pred =
        ocpm_forward(g, state.table, state.params, state.config, batch, state.max_behaviors)
            .value();
    out.insert(out.end(), pred.values().begin(), pred.values().end());
  }
  return out;
}

}  // namespace pier
