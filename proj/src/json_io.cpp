#include "pier/json_io.hpp"

#include <set>
#include <string>

#include "pier/errors.hpp"
#include "pier/experiment.hpp"

namespace pier {

using nlohmann::json;

namespace {

// Reads the keys a struct knows and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw FormatError(where_ + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!known_.count(key)) throw FormatError(where_ + ": unknown key '" + key + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw FormatError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> known_;
};

}  // namespace

json to_json(const PointwiseConfig& c) {
  return json{{"hidden", c.hidden},
              {"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"seed", c.seed}};
}

void update_from_json(PointwiseConfig& c, const json& j) {
  Reader r(j, "point_model");
  r.get("hidden", c.hidden);
  r.get("epochs", c.epochs);
  r.get("learning_rate", c.learning_rate);
  r.get("batch_size", c.batch_size);
  r.get("seed", c.seed);
}

json to_json(const WorldConfig& c) {
  return json{{"n_items", c.n_items},
              {"n_display", c.n_display},
              {"vocab_sizes", c.vocab_sizes},
              {"n_users", c.n_users},
              {"max_behaviors", c.max_behaviors},
              {"base_bias", c.base_bias},
              {"item_scale", c.item_scale},
              {"user_scale", c.user_scale},
              {"drift_rate", c.drift_rate},
              {"context_effects", c.context_effects},
              {"context_strength", c.context_strength},
              {"same_feature_penalty", c.same_feature_penalty},
              {"interaction_noise", c.interaction_noise},
              {"position_decay", c.position_decay},
              {"burn_in_requests", c.burn_in_requests},
              {"exploration", c.exploration},
              {"point_dim", c.point_dim},
              {"point_model", to_json(c.point_model)}};
}

void update_from_json(WorldConfig& c, const json& j) {
  Reader r(j, "world");
  r.get("n_items", c.n_items);
  r.get("n_display", c.n_display);
  r.get("vocab_sizes", c.vocab_sizes);
  r.get("n_users", c.n_users);
  r.get("max_behaviors", c.max_behaviors);
  r.get("base_bias", c.base_bias);
  r.get("item_scale", c.item_scale);
  r.get("user_scale", c.user_scale);
  r.get("drift_rate", c.drift_rate);
  r.get("context_effects", c.context_effects);
  r.get("context_strength", c.context_strength);
  r.get("same_feature_penalty", c.same_feature_penalty);
  r.get("interaction_noise", c.interaction_noise);
  r.get("position_decay", c.position_decay);
  r.get("burn_in_requests", c.burn_in_requests);
  r.get("exploration", c.exploration);
  r.get("point_dim", c.point_dim);
  if (const json* pm = r.sub("point_model")) update_from_json(c.point_model, *pm);
}

json to_json(const TrainConfig& c) {
  return json{{"alpha", c.alpha},
              {"k", c.k},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"pretrain_epochs", c.pretrain_epochs},
              {"joint_epochs", c.joint_epochs},
              {"seed", c.seed},
              {"chunk_size", c.chunk_size},
              {"signed_contrastive", c.signed_contrastive},
              {"joint_examples", c.joint_examples}};
}

void update_from_json(TrainConfig& c, const json& j) {
  Reader r(j, "train");
  r.get("alpha", c.alpha);
  r.get("k", c.k);
  r.get("learning_rate", c.learning_rate);
  r.get("batch_size", c.batch_size);
  r.get("pretrain_epochs", c.pretrain_epochs);
  r.get("joint_epochs", c.joint_epochs);
  r.get("seed", c.seed);
  r.get("chunk_size", c.chunk_size);
  r.get("signed_contrastive", c.signed_contrastive);
  r.get("joint_examples", c.joint_examples);
}

json to_json(const OcpmConfig& c) {
  return json{{"dim", c.dim},         {"mlp1", c.mlp1},       {"mlp2", c.mlp2},
              {"mlp_att", c.mlp_att}, {"mlp3", c.mlp3},       {"use_oau", c.use_oau},
              {"use_tau", c.use_tau}};
}

void update_from_json(OcpmConfig& c, const json& j) {
  Reader r(j, "model");
  r.get("dim", c.dim);
  r.get("mlp1", c.mlp1);
  r.get("mlp2", c.mlp2);
  r.get("mlp_att", c.mlp_att);
  r.get("mlp3", c.mlp3);
  r.get("use_oau", c.use_oau);
  r.get("use_tau", c.use_tau);
}

json to_json(const EvalConfig& c) {
  return json{{"generator", std::string(generator_name(c.generator))},
              {"k", c.k},
              {"measure_cost", c.measure_cost},
              {"cost_repetitions", c.cost_repetitions},
              {"cost_requests", c.cost_requests}};
}

void update_from_json(EvalConfig& c, const json& j) {
  Reader r(j, "eval");
  std::string generator(generator_name(c.generator));
  r.get("generator", generator);
  try {
    c.generator = parse_generator(generator);
  } catch (const ContractError& e) {
    throw FormatError(std::string("eval.generator: ") + e.what());
  }
  r.get("k", c.k);
  r.get("measure_cost", c.measure_cost);
  r.get("cost_repetitions", c.cost_repetitions);
  r.get("cost_requests", c.cost_requests);
}

json to_json(const BenchmarkConfig& c) {
  json world = to_json(c.world);
  world["point_model"].erase("seed");
  json train = to_json(c.train);
  train.erase("seed");
  json baseline = to_json(c.baseline);
  baseline.erase("seed");
  return json{{"seed", c.seed},
              {"world", world},
              {"n_requests", c.n_requests},
              {"n_test", c.n_test},
              {"model", to_json(c.model)},
              {"hash_bits", c.hash_bits},
              {"time_decay", c.time_decay},
              {"train", train},
              {"baseline", baseline},
              {"eval", to_json(c.eval)},
              {"sweep", json{{"alphas", c.sweep.alphas},
                             {"ks", c.sweep.ks},
                             {"requests", c.sweep_requests},
                             {"test", c.sweep_test}}}};
}

void update_from_json(BenchmarkConfig& c, const json& j) {
  Reader r(j, "config");
  r.get("seed", c.seed);
  if (const json* w = r.sub("world")) update_from_json(c.world, *w);
  r.get("n_requests", c.n_requests);
  r.get("n_test", c.n_test);
  if (const json* m = r.sub("model")) update_from_json(c.model, *m);
  r.get("hash_bits", c.hash_bits);
  r.get("time_decay", c.time_decay);
  if (const json* t = r.sub("train")) update_from_json(c.train, *t);
  if (const json* b = r.sub("baseline")) update_from_json(c.baseline, *b);
  if (const json* e = r.sub("eval")) update_from_json(c.eval, *e);
  if (const json* s = r.sub("sweep")) {
    Reader sr(*s, "sweep");
    sr.get("alphas", c.sweep.alphas);
    sr.get("ks", c.sweep.ks);
    sr.get("requests", c.sweep_requests);
    sr.get("test", c.sweep_test);
  }
  c.apply_seed();
}

}  // namespace pier
