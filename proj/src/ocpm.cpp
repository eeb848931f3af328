#include "pier/ocpm.hpp"

#include <cmath>
#include <string>

#include "pier/errors.hpp"

namespace pier {

namespace {

Parameter glorot_square(const std::string& name, std::size_t n, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(2 * n));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w({n, n});
  for (double& v : w.values()) v = dist(rng);
  return Parameter{name, std::move(w)};
}

Var project(Graph& g, Var x, const Parameter& w) { return ag::matmul(x, g.parameter(w)); }

}  // namespace

std::vector<Parameter*> OcpmParams::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t j = 0; j < field_query.size(); ++j) {
    out.push_back(&field_query[j]);
    out.push_back(&field_key[j]);
    out.push_back(&field_value[j]);
  }
  out.push_back(&inter_query);
  out.push_back(&inter_key);
  out.push_back(&inter_value);
  for (Mlp* m : {&mlp1, &mlp2, &mlp_att, &mlp3}) {
    for (Parameter* p : m->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> OcpmParams::parameters() const {
  std::vector<const Parameter*> out;
  for (Parameter* p : const_cast<OcpmParams*>(this)->parameters()) out.push_back(p);
  return out;
}

OcpmParams make_ocpm_params(const OcpmConfig& c, std::uint64_t seed) {
  if (c.mlp1.empty() || c.mlp2.empty() || c.mlp_att.empty() || c.mlp3.empty() ||
      c.mlp_att.back() != 1 || c.mlp3.back() != 1) {
    throw ContractError("OCPM config: MLPs need at least one layer, MLP_Att and MLP_3 end in 1");
  }
  std::mt19937_64 rng(seed);
  OcpmParams p;
  for (std::size_t j = 0; j < c.n_fields; ++j) {
    const std::string f = "ocpm.field" + std::to_string(j);
    p.field_query.push_back(glorot_square(f + ".query", c.dim, rng));
    p.field_key.push_back(glorot_square(f + ".key", c.dim, rng));
    p.field_value.push_back(glorot_square(f + ".value", c.dim, rng));
  }
  const std::size_t w = c.field_width();
  p.inter_query = glorot_square("ocpm.inter.query", w, rng);
  p.inter_key = glorot_square("ocpm.inter.key", w, rng);
  p.inter_value = glorot_square("ocpm.inter.value", w, rng);
  const auto relu = Activation::kRelu, id = Activation::kIdentity;
  p.mlp1 = make_mlp("ocpm.mlp1", c.n_display * c.dim, c.mlp1, relu, id, rng);
  p.mlp2 = make_mlp("ocpm.mlp2", c.n_fields * w, c.mlp2, relu, id, rng);
  p.mlp_att = make_mlp("ocpm.mlp_att", 4 * c.context_width(), c.mlp_att, relu, id, rng);
  p.mlp3 = make_mlp("ocpm.mlp3", c.cpu_input_width(), c.mlp3, relu, id, rng);
  return p;
}

PermInputs embed_batch(Graph& g, const EmbeddingTable& table,
                       std::span<const FeatureId> features, std::size_t n_display) {
  const std::size_t nf = table.fields();
  if (n_display == 0 || features.size() % (n_display * nf) != 0) {
    throw DimensionError("embed_batch: " + std::to_string(features.size()) +
                         " ids do not form permutations of " + std::to_string(n_display) +
                         " items x " + std::to_string(nf) + " fields");
  }
  const std::size_t rows = features.size() / nf;
  PermInputs in;
  in.count = rows / n_display;
  std::vector<std::int32_t> ids(rows);
  for (std::size_t j = 0; j < nf; ++j) {
    for (std::size_t r = 0; r < rows; ++r) {
      ids[r] = features[r * nf + j];
      table.check_id(j, ids[r]);
    }
    in.field_rows.push_back(ag::gather_rows(g.parameter(table.field(j)), ids));
  }
  return in;
}

PermInputs inputs_from_embedding(Graph& g, const Tensor& e) {
  if (e.rank() != 3) {
    throw DimensionError("inputs_from_embedding: expected [N_d x N_f x D], got " +
                         shape_string(e.shape()));
  }
  const std::size_t nd = e.shape()[0], nf = e.shape()[1], d = e.shape()[2];
  PermInputs in;
  in.count = 1;
  for (std::size_t j = 0; j < nf; ++j) {
    Tensor rows({nd, d});
    for (std::size_t i = 0; i < nd; ++i) {
      for (std::size_t c = 0; c < d; ++c) rows.at(i, c) = e[(i * nf + j) * d + c];
    }
    in.field_rows.push_back(g.constant(std::move(rows)));
  }
  return in;
}

Var oau_forward(Graph& g, const PermInputs& in, const OcpmParams& params,
                const OcpmConfig& c) {
  if (in.field_rows.size() != c.n_fields) {
    throw DimensionError("OAU: " + std::to_string(in.field_rows.size()) + " fields, config has " +
                         std::to_string(c.n_fields));
  }
  const std::size_t p = in.count;
  std::vector<Var> per_field;
  per_field.reserve(c.n_fields);
  for (std::size_t j = 0; j < c.n_fields; ++j) {
    Var x = in.field_rows[j];
    if (x.value().rows() != p * c.n_display || x.value().cols() != c.dim) {
      throw DimensionError("OAU: field " + std::to_string(j) + " input " +
                           shape_string(x.shape()) + " for " + std::to_string(p) +
                           " permutations");
    }
    Var h = c.use_oau ? ag::block_attention(project(g, x, params.field_query[j]),
                                            project(g, x, params.field_key[j]),
                                            project(g, x, params.field_value[j]), c.n_display)
                      : x;
    h = ag::reshape(h, {p, c.n_display * c.dim});
    per_field.push_back(mlp_forward(g, h, params.mlp1));
  }
  const std::size_t w = c.field_width();
  Var z = ag::reshape(ag::concat_cols(per_field), {p * c.n_fields, w});
  if (c.use_oau) {
    z = ag::block_attention(project(g, z, params.inter_query), project(g, z, params.inter_key),
                            project(g, z, params.inter_value), c.n_fields);
  }
  return mlp_forward(g, ag::reshape(z, {p, c.n_fields * w}), params.mlp2);
}

Var tau_forward(Graph& g, Var target_contexts, Var behavior_contexts,
                std::span<const std::int32_t> slots, std::size_t max_behaviors,
                const OcpmParams& params) {
  const std::size_t p = target_contexts.value().rows();
  const std::size_t du = target_contexts.value().cols();
  if (max_behaviors == 0 || slots.size() != p * max_behaviors) {
    throw DimensionError("TAU: " + std::to_string(slots.size()) + " slots for " +
                         std::to_string(p) + " targets x M = " + std::to_string(max_behaviors));
  }
  std::vector<std::int32_t> rows(slots.size());
  Tensor mask({slots.size(), 1});
  bool any = false;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    rows[s] = slots[s] < 0 ? 0 : slots[s];
    mask[s] = slots[s] < 0 ? 0.0 : 1.0;
    any = any || slots[s] >= 0;
  }
  if (!any) return g.constant(Tensor({p, du}));
  Var ub = ag::gather_rows(behavior_contexts, rows);
  Var ut = ag::repeat_rows(target_contexts, max_behaviors);
  const Var parts[] = {ut, ub, ag::mul(ut, ub), ag::sub(ut, ub)};
  Var a = mlp_forward(g, ag::concat_cols(parts), params.mlp_att);
  a = ag::mul(a, g.constant(std::move(mask)));
  return ag::sum_row_groups(ag::mul_col(ub, a), max_behaviors);
}

Var cpu_forward(Graph& g, Var contexts, Var interests, std::span<const double> point_scores,
                const PermInputs& in, const OcpmParams& params, const OcpmConfig& c) {
  const std::size_t p = in.count, nd = c.n_display;
  if (point_scores.size() != p * nd) {
    throw DimensionError("CPU: " + std::to_string(point_scores.size()) + " point scores for " +
                         std::to_string(p) + " x " + std::to_string(nd) + " positions");
  }
  Var v = g.constant(Tensor({p, nd}, std::vector<double>(point_scores.begin(), point_scores.end())));
  std::vector<Var> parts = {ag::repeat_rows(contexts, nd), ag::repeat_rows(interests, nd),
                            ag::repeat_rows(v, nd)};
  for (const Var& rows : in.field_rows) parts.push_back(rows);
  Var logits = mlp_forward(g, ag::concat_cols(parts), params.mlp3);
  return ag::reshape(ag::sigmoid(logits), {p, nd});
}

void OcpmBatch::add_target(std::span<const FeatureId> feats, std::span<const double> scores,
                           std::int32_t history_index) {
  if (history_index >= static_cast<std::int32_t>(histories)) {
    throw ContractError("OcpmBatch: history " + std::to_string(history_index) + " of " +
                        std::to_string(histories));
  }
  features.insert(features.end(), feats.begin(), feats.end());
  point_scores.insert(point_scores.end(), scores.begin(), scores.end());
  history.push_back(history_index);
  ++count;
}

std::int32_t OcpmBatch::add_history(const BehaviorSequence& behaviors,
                                    std::size_t max_behaviors) {
  for (std::size_t m = 0; m < max_behaviors; ++m) {
    if (m < behaviors.size()) {
      const auto feats = pier::behavior_features(behaviors[m]);
      if (feats.empty()) throw ContractError("OcpmBatch: empty behavior");
      const std::size_t width = behavior_width.value_or(feats.size());
      if (feats.size() != width) {
        throw DimensionError("OcpmBatch: behaviors of " + std::to_string(feats.size()) +
                             " and " + std::to_string(width) + " ids");
      }
      behavior_width = width;
      history_slots.push_back(static_cast<std::int32_t>(behavior_features.size() / width));
      behavior_features.insert(behavior_features.end(), feats.begin(), feats.end());
    } else {
      history_slots.push_back(-1);
    }
  }
  return static_cast<std::int32_t>(histories++);
}

Var ocpm_forward(Graph& g, const EmbeddingTable& table, const OcpmParams& params,
                 const OcpmConfig& c, const OcpmBatch& batch, std::size_t max_behaviors) {
  if (batch.count == 0) throw ContractError("ocpm_forward: empty batch");
  if (batch.history_slots.size() != batch.histories * max_behaviors) {
    throw DimensionError("ocpm_forward: batch built for a different M");
  }
  const PermInputs in = embed_batch(g, table, batch.features, c.n_display);
  Var u = oau_forward(g, in, params, c);
  Var w;
  if (c.use_tau && !batch.behavior_features.empty()) {
    const PermInputs bin = embed_batch(g, table, batch.behavior_features, c.n_display);
    Var ub = oau_forward(g, bin, params, c);
    std::vector<std::int32_t> slots(batch.count * max_behaviors, -1);
    for (std::size_t t = 0; t < batch.count; ++t) {
      const std::int32_t h = batch.history[t];
      if (h < 0) continue;
      for (std::size_t m = 0; m < max_behaviors; ++m) {
        slots[t * max_behaviors + m] =
            batch.history_slots[static_cast<std::size_t>(h) * max_behaviors + m];
      }
    }
    w = tau_forward(g, u, ub, slots, max_behaviors, params);
  } else {
    w = g.constant(Tensor({batch.count, c.context_width()}));
  }
  return cpu_forward(g, u, w, batch.point_scores, in, params, c);
}

std::vector<double> predict_permutation(const EmbeddingTable& table, const OcpmParams& params,
                                        const OcpmConfig& config, const CandidateSet& candidates,
                                        const Permutation& perm,
                                        const BehaviorSequence& behaviors,
                                        std::size_t max_behaviors) {
  validate_permutation(perm, candidates.size(), config.n_display);
  OcpmBatch batch;
  const std::int32_t h = batch.add_history(behaviors, max_behaviors);
  batch.add_target(permutation_features(candidates, perm),
                   permutation_point_scores(candidates, perm), h);
  Graph g(false);
  const Var out = ocpm_forward(g, table, params, config, batch, max_behaviors);
  return {out.value().values().begin(), out.value().values().end()};
}

double ocpm_score(std::span<const double> prediction) {
  double total = 0.0;
  for (const double p : prediction) total += p;
  return total;
}

}  // namespace pier
