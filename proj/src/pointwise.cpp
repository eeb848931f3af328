#include <algorithm>
#include <numeric>
#include <random>

#include "pier/errors.hpp"
#include "pier/training.hpp"

namespace pier {

std::vector<Parameter*> PointwiseModel::parameters() {
  std::vector<Parameter*> out = table.parameters();
  for (Parameter* p : mlp.parameters()) out.push_back(p);
  return out;
}

PointwiseModel make_pointwise_model(const std::vector<std::size_t>& vocab_sizes, std::size_t dim,
                                    std::size_t max_behaviors,
                                    const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  PointwiseModel m;
  m.table = EmbeddingTable(vocab_sizes, dim, seed);
  for (std::size_t j = 0; j < m.table.fields(); ++j) {
    m.table.field(j).name = "pointwise.embedding.field" + std::to_string(j);
  }
  std::vector<std::size_t> widths = hidden;
  widths.push_back(1);
  std::mt19937_64 rng(seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  m.mlp = make_mlp("pointwise.mlp", 2 * vocab_sizes.size() * dim, widths, Activation::kRelu,
                   Activation::kIdentity, rng);
  m.max_behaviors = max_behaviors;
  return m;
}

namespace {

// A user's items to score plus the history they share.
struct Group {
  std::span<const FeatureId> items;
  const BehaviorSequence* behaviors;
};

// Rows follow the groups' items in order; output is [rows x 1] probabilities.
Var pointwise_forward(Graph& g, const PointwiseModel& model, std::span<const Group> groups) {
  const std::size_t nf = model.table.fields();
  std::size_t slots = 1;
  for (const Group& grp : groups) {
    std::size_t count = 0;
    for (std::size_t m = 0; m < std::min(model.max_behaviors, grp.behaviors->size()); ++m) {
      count += (*grp.behaviors)[m].items_features.size();
    }
    slots = std::max(slots, count);
  }
  std::vector<std::int32_t> owner;
  std::vector<Var> parts;
  std::vector<std::vector<std::int32_t>> item_ids(nf), hist_ids(nf);
  Tensor weights({groups.size() * slots, 1});
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const Group& grp = groups[gi];
    if (grp.items.size() % nf != 0) throw DimensionError("pointwise: ragged item features");
    for (std::size_t r = 0; r < grp.items.size() / nf; ++r) {
      owner.push_back(static_cast<std::int32_t>(gi));
      for (std::size_t j = 0; j < nf; ++j) {
        model.table.check_id(j, grp.items[r * nf + j]);
        item_ids[j].push_back(grp.items[r * nf + j]);
      }
    }
    std::size_t used = 0;
    for (std::size_t m = 0; m < std::min(model.max_behaviors, grp.behaviors->size()); ++m) {
      for (const auto& feats : (*grp.behaviors)[m].items_features) {
        if (feats.size() != nf) throw DimensionError("pointwise: behavior item with wrong fields");
        for (std::size_t j = 0; j < nf; ++j) {
          model.table.check_id(j, feats[j]);
          hist_ids[j].push_back(feats[j]);
        }
        ++used;
      }
    }
    for (std::size_t s = used; s < slots; ++s) {
      for (std::size_t j = 0; j < nf; ++j) hist_ids[j].push_back(0);
    }
    for (std::size_t s = 0; s < used; ++s) weights[gi * slots + s] = 1.0 / static_cast<double>(used);
  }
  Var w = g.constant(std::move(weights));
  std::vector<Var> pooled;
  for (std::size_t j = 0; j < nf; ++j) {
    Var table = g.parameter(model.table.field(j));
    parts.push_back(ag::gather_rows(table, item_ids[j]));
    Var hist = ag::sum_row_groups(ag::mul_col(ag::gather_rows(table, hist_ids[j]), w), slots);
    pooled.push_back(ag::gather_rows(hist, owner));
  }
  parts.insert(parts.end(), pooled.begin(), pooled.end());
  return ag::sigmoid(mlp_forward(g, ag::concat_cols(parts), model.mlp));
}

}  // namespace

std::vector<double> pointwise_predict(const PointwiseModel& model,
                                      std::span<const FeatureId> items,
                                      const BehaviorSequence& behaviors) {
  if (items.empty()) return {};
  const Group grp{items, &behaviors};
  Graph g(false);
  const Tensor out = pointwise_forward(g, model, std::span<const Group>(&grp, 1)).value();
  return {out.values().begin(), out.values().end()};
}

std::vector<double> pointwise_predict_displayed(const PointwiseModel& model,
                                                std::span<const LogRecord> records) {
  constexpr std::size_t kChunk = 512;
  std::vector<double> out;
  for (std::size_t begin = 0; begin < records.size(); begin += kChunk) {
    const std::size_t end = std::min(records.size(), begin + kChunk);
    std::vector<std::vector<FeatureId>> feats;
    feats.reserve(end - begin);
    std::vector<Group> groups;
    for (std::size_t i = begin; i < end; ++i) {
      feats.push_back(permutation_features(records[i].candidates, records[i].displayed));
    }
    for (std::size_t i = begin; i < end; ++i) {
      groups.push_back(Group{feats[i - begin], &records[i].behaviors});
    }
    Graph g(false);
    const Tensor pred = pointwise_forward(g, model, groups).value();
    out.insert(out.end(), pred.values().begin(), pred.values().end());
  }
  return out;
}

PointwiseModel train_pointwise_baseline(std::span<const LogRecord> dataset,
                                        const std::vector<std::size_t>& vocab_sizes,
                                        std::size_t dim, std::size_t max_behaviors,
                                        const PointwiseConfig& config) {
  if (dataset.empty()) throw ContractError("train_pointwise_baseline: empty dataset");
  if (config.batch_size == 0) throw ContractError("train_pointwise_baseline: batch_size 0");
  PointwiseModel model =
      make_pointwise_model(vocab_sizes, dim, max_behaviors, config.hidden, config.seed);
  const std::vector<Parameter*> params = model.parameters();
  Adam adam(config.learning_rate);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<std::vector<FeatureId>> feats;
      std::vector<Group> groups;
      std::vector<double> labels;
      feats.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const LogRecord& r = dataset[order[i]];
        feats.push_back(permutation_features(r.candidates, r.displayed));
        for (const auto y : r.clicks) labels.push_back(static_cast<double>(y));
      }
      for (std::size_t i = begin; i < end; ++i) {
        groups.push_back(Group{feats[i - begin], &dataset[order[i]].behaviors});
      }
      Graph g;
      for (Parameter* p : params) g.parameter(*p);
      Var loss = ag::scale(ag::bce_sum(pointwise_forward(g, model, groups), labels),
                           1.0 / static_cast<double>(end - begin));
      if (!std::isfinite(loss.value()[0])) {
        throw NumericError("pointwise baseline: non-finite loss at step " +
                           std::to_string(step) + ", request " +
                           std::to_string(dataset[order[begin]].request_id));
      }
      const Gradients grads = g.backward(loss);
      std::vector<Tensor> gs;
      for (const Parameter* p : params) gs.push_back(grads.of(*p));
      adam.step(params, gs);
      ++step;
    }
  }
  return model;
}

}  // namespace pier
