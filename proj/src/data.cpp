#include "pier/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "pier/errors.hpp"
#include "pier/json_io.hpp"
#include "pier/permgen.hpp"

namespace pier {

using nlohmann::json;

namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 step, so nearby seeds give unrelated streams.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Tensor normal_vector(std::size_t n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t({n});
  for (double& v : t.values()) v = dist(rng);
  return t;
}

void validate_world(const WorldConfig& c) {
  if (c.n_display == 0 || c.n_display > c.n_items) {
    throw ContractError("world: need 1 <= N_d <= N_o, got N_d = " + std::to_string(c.n_display) +
                        ", N_o = " + std::to_string(c.n_items));
  }
  if (c.vocab_sizes.empty() ||
      std::any_of(c.vocab_sizes.begin(), c.vocab_sizes.end(), [](auto v) { return v == 0; })) {
    throw ContractError("world: every feature field needs a positive vocabulary");
  }
  if (c.n_users == 0 || c.max_behaviors == 0) {
    throw ContractError("world: n_users and max_behaviors must be positive");
  }
  if (c.position_decay.size() != c.n_display) {
    throw ContractError("world: position_decay has " + std::to_string(c.position_decay.size()) +
                        " entries for N_d = " + std::to_string(c.n_display));
  }
  if (c.exploration < 0.0 || c.exploration > 1.0) {
    throw ContractError("world: exploration must lie in [0, 1]");
  }
}

}  // namespace

GroundTruthModel GroundTruthModel::sample(const WorldConfig& config, std::uint64_t seed) {
  validate_world(config);
  GroundTruthModel m;
  m.config = config;
  m.seed = seed;
  std::mt19937_64 rng(derive(seed, 0));
  const std::size_t nf = config.vocab_sizes.size();
  for (std::size_t f = 0; f < nf; ++f) {
    m.theta.push_back(normal_vector(config.vocab_sizes[f], config.item_scale, rng));
  }
  std::normal_distribution<double> noise(0.0, config.interaction_noise);
  for (std::size_t f = 0; f < nf; ++f) {
    const std::size_t v = config.vocab_sizes[f];
    Tensor g({v, v});
    for (std::size_t a = 0; a < v; ++a) {
      for (std::size_t b = 0; b < v; ++b) {
        const double n = noise(rng);
        g.at(a, b) = a == b ? -config.same_feature_penalty : n;
      }
    }
    m.interaction.push_back(std::move(g));
  }
  std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
  const double per_field = config.user_scale / std::sqrt(static_cast<double>(nf));
  for (std::size_t u = 0; u < config.n_users; ++u) {
    std::vector<Tensor> a, b;
    for (std::size_t f = 0; f < nf; ++f) {
      a.push_back(normal_vector(config.vocab_sizes[f], per_field, rng));
      b.push_back(normal_vector(config.vocab_sizes[f], per_field, rng));
    }
    m.pref_a.push_back(std::move(a));
    m.pref_b.push_back(std::move(b));
    m.phase.push_back(angle(rng));
  }
  return m;
}

double GroundTruthModel::base_attractiveness(const Item& item) const {
  double z = config.base_bias;
  for (std::size_t f = 0; f < theta.size(); ++f) {
    z += theta[f][static_cast<std::size_t>(item.features.at(f))];
  }
  return 1.0 / (1.0 + std::exp(-z));
}

double GroundTruthModel::context_effect(const Item& before, const Item& after) const {
  if (!config.context_effects) return 0.0;
  double s = 0.0;
  for (std::size_t f = 0; f < interaction.size(); ++f) {
    s += interaction[f].at(static_cast<std::size_t>(before.features.at(f)),
                           static_cast<std::size_t>(after.features.at(f)));
  }
  return config.context_strength * s / static_cast<double>(interaction.size());
}

double GroundTruthModel::user_fit(std::int64_t user, std::int64_t time, const Item& item) const {
  const auto u = static_cast<std::size_t>(user);
  if (user < 0 || u >= pref_a.size()) {
    throw LookupError("ground truth: user " + std::to_string(user) + " outside " +
                      std::to_string(pref_a.size()) + " users");
  }
  const double phi = config.drift_rate * static_cast<double>(time) + phase[u];
  const double c = std::cos(phi), s = std::sin(phi);
  double z = 0.0;
  for (std::size_t f = 0; f < pref_a[u].size(); ++f) {
    const auto v = static_cast<std::size_t>(item.features.at(f));
    z += c * pref_a[u][f][v] + s * pref_b[u][f][v];
  }
  return std::exp(z);
}

std::vector<double> GroundTruthModel::click_probabilities(const CandidateSet& candidates,
                                                          const Permutation& perm,
                                                          std::int64_t user,
                                                          std::int64_t time) const {
  validate_permutation(perm, candidates.size(), config.n_display);
  std::vector<double> out(perm.size());
  for (std::size_t t = 0; t < perm.size(); ++t) {
    const Item& item = candidates.items[static_cast<std::size_t>(perm.item_indices[t])];
    double ctx = 1.0;
    for (std::size_t s = 0; s < t; ++s) {
      ctx += context_effect(candidates.items[static_cast<std::size_t>(perm.item_indices[s])],
                            item);
    }
    const double p = base_attractiveness(item) * config.position_decay[t] * std::max(0.0, ctx) *
                     user_fit(user, time, item);
    out[t] = std::clamp(p, 0.01, 0.99);
  }
  return out;
}

double GroundTruthModel::expected_clicks(const CandidateSet& candidates, const Permutation& perm,
                                         std::int64_t user, std::int64_t time) const {
  const auto p = click_probabilities(candidates, perm, user, time);
  return std::accumulate(p.begin(), p.end(), 0.0);
}

double round_sig9(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return std::strtod(buf, nullptr);
}

SyntheticData generate_synthetic_dataset(const WorldConfig& config, std::size_t n_requests,
                                         std::uint64_t seed) {
  SyntheticData out;
  out.model = GroundTruthModel::sample(config, seed);
  const GroundTruthModel& gt = out.model;
  const std::size_t nf = config.vocab_sizes.size();
  std::mt19937_64 rng(derive(seed, 1));
  std::vector<std::deque<Behavior>> history(config.n_users);
  Dataset burn_in;
  out.records.reserve(n_requests);
  out.point_model = make_pointwise_model(config.vocab_sizes, config.point_dim,
                                         config.max_behaviors, config.point_model.hidden,
                                         config.point_model.seed);
  std::uniform_int_distribution<std::size_t> pick_user(0, config.n_users - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t total = config.burn_in_requests + n_requests;
  for (std::size_t tau = 0; tau < total; ++tau) {
    if (tau == config.burn_in_requests && !burn_in.empty()) {
      PointwiseConfig pc = config.point_model;
      out.point_model = train_pointwise_baseline(burn_in, config.vocab_sizes, config.point_dim,
                                                 config.max_behaviors, pc);
      burn_in.clear();
      burn_in.shrink_to_fit();
    }
    LogRecord r;
    r.request_id = static_cast<std::int64_t>(tau);
    r.user_id = static_cast<std::int64_t>(pick_user(rng));
    for (std::size_t i = 0; i < config.n_items; ++i) {
      Item item;
      for (std::size_t f = 0; f < nf; ++f) {
        item.features.push_back(static_cast<FeatureId>(
            std::uniform_int_distribution<std::size_t>(0, config.vocab_sizes[f] - 1)(rng)));
      }
      r.candidates.items.push_back(std::move(item));
    }
    const auto& hist = history[static_cast<std::size_t>(r.user_id)];
    r.behaviors.assign(hist.begin(), hist.end());

    const bool burning = tau < config.burn_in_requests;
    std::vector<std::int32_t> order(config.n_items);
    std::iota(order.begin(), order.end(), 0);
    const bool explore = burning || unit(rng) < config.exploration;
    if (!burning) {
      std::vector<FeatureId> feats;
      for (const Item& item : r.candidates.items) {
        feats.insert(feats.end(), item.features.begin(), item.features.end());
      }
      const auto v = pointwise_predict(out.point_model, feats, r.behaviors);
      for (std::size_t i = 0; i < config.n_items; ++i) {
        r.candidates.items[i].point_pctr = round_sig9(v[i]);
      }
    }
    if (explore) {
      for (std::size_t i = 0; i < config.n_display; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, config.n_items - 1);
        std::swap(order[i], order[pick(rng)]);
      }
    } else {
      std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        return r.candidates.items[static_cast<std::size_t>(a)].point_pctr >
               r.candidates.items[static_cast<std::size_t>(b)].point_pctr;
      });
    }
    r.displayed.item_indices.assign(order.begin(),
                                    order.begin() + static_cast<std::ptrdiff_t>(config.n_display));
    const auto p = gt.click_probabilities(r.candidates, r.displayed, r.user_id, r.request_id);
    bool any = false;
    for (double pt : p) {
      const std::int32_t y = unit(rng) < pt ? 1 : 0;
      r.clicks.push_back(y);
      any = any || y == 1;
    }
    if (any) {
      Behavior b;
      for (auto idx : r.displayed.item_indices) {
        b.items_features.push_back(r.candidates.items[static_cast<std::size_t>(idx)].features);
      }
      auto& h = history[static_cast<std::size_t>(r.user_id)];
      h.push_front(std::move(b));
      if (h.size() > config.max_behaviors) h.pop_back();
      for (std::size_t m = 0; m < h.size(); ++m) h[m].recency_rank = static_cast<std::int32_t>(m);
    }
    if (burning) {
      burn_in.push_back(std::move(r));
    } else {
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

Permutation oracle_best_permutation(const CandidateSet& candidates, const GroundTruthModel& model,
                                    std::int64_t user, std::int64_t time) {
  const auto all = enumerate_permutations(candidates.size(), model.config.n_display);
  std::size_t best = 0;
  double best_value = -1.0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const double v = model.expected_clicks(candidates, all[i], user, time);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return all[best];
}

Permutation oracle_best_permutation(const LogRecord& record, const GroundTruthModel& model) {
  return oracle_best_permutation(record.candidates, model, record.user_id, record.request_id);
}

Split temporal_split(const Dataset& data, std::size_t n_test) {
  if (n_test > data.size()) {
    throw ContractError("temporal_split: " + std::to_string(n_test) + " test records from " +
                        std::to_string(data.size()));
  }
  const auto cut = data.begin() + static_cast<std::ptrdiff_t>(data.size() - n_test);
  return Split{Dataset(data.begin(), cut), Dataset(cut, data.end())};
}

// ---------------------------------------------------------------- JSONL

namespace {

void append_ints(std::string& out, const std::vector<std::int32_t>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  out += ']';
}

std::string format_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

[[noreturn]] void bad(std::size_t line_no, const std::string& field, const std::string& what) {
  throw FormatError("line " + std::to_string(line_no) + ": field '" + field + "': " + what);
}

const json& require(const json& obj, const char* key, std::size_t line_no,
                    const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) bad(line_no, path + key, "missing");
  return obj.at(key);
}

std::int64_t as_int(const json& v, std::size_t line_no, const std::string& field) {
  if (!v.is_number_integer()) bad(line_no, field, "expected an integer");
  return v.get<std::int64_t>();
}

std::vector<std::int32_t> as_int_array(const json& v, std::size_t line_no,
                                       const std::string& field) {
  if (!v.is_array()) bad(line_no, field, "expected an array");
  std::vector<std::int32_t> out;
  for (const json& e : v) {
    const std::int64_t x = as_int(e, line_no, field);
    if (x < INT32_MIN || x > INT32_MAX) bad(line_no, field, "integer out of range");
    out.push_back(static_cast<std::int32_t>(x));
  }
  return out;
}

void check_features(const std::vector<std::int32_t>& feats, std::size_t line_no,
                    const std::string& field, const std::vector<std::size_t>* vocab) {
  if (!vocab) return;
  if (feats.size() != vocab->size()) {
    bad(line_no, field,
        std::to_string(feats.size()) + " ids for " + std::to_string(vocab->size()) + " fields");
  }
  for (std::size_t f = 0; f < feats.size(); ++f) {
    if (feats[f] < 0 || static_cast<std::size_t>(feats[f]) >= (*vocab)[f]) {
      bad(line_no, field,
          "id " + std::to_string(feats[f]) + " outside vocabulary of field " + std::to_string(f) +
              " (size " + std::to_string((*vocab)[f]) + ")");
    }
  }
}

}  // namespace

std::string to_jsonl_line(const LogRecord& r) {
  std::string out = "{\"request_id\":" + std::to_string(r.request_id) +
                    ",\"user_id\":" + std::to_string(r.user_id) + ",\"items\":[";
  for (std::size_t i = 0; i < r.candidates.items.size(); ++i) {
    const Item& item = r.candidates.items[i];
    if (i) out += ',';
    out += "{\"features\":";
    append_ints(out, item.features);
    out += ",\"point_pctr\":" + format_g9(item.point_pctr) + "}";
  }
  out += "],\"displayed\":";
  append_ints(out, r.displayed.item_indices);
  out += ",\"clicks\":";
  append_ints(out, r.clicks);
  out += ",\"behaviors\":[";
  for (std::size_t m = 0; m < r.behaviors.size(); ++m) {
    if (m) out += ',';
    out += "{\"items_features\":[";
    const auto& items = r.behaviors[m].items_features;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) out += ',';
      append_ints(out, items[i]);
    }
    out += "],\"recency_rank\":" + std::to_string(r.behaviors[m].recency_rank) + "}";
  }
  out += "]}";
  return out;
}

LogRecord parse_jsonl_line(const std::string& line, std::size_t line_no,
                           const std::vector<std::size_t>* vocab) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) bad(line_no, "<record>", "expected an object");
  static const char* kKeys[] = {"request_id", "user_id", "items", "displayed", "clicks",
                                "behaviors"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys),
                     [&](const char* k) { return key == k; }) == std::end(kKeys)) {
      bad(line_no, key, "unknown field");
    }
  }
  LogRecord r;
  r.request_id = as_int(require(j, "request_id", line_no, ""), line_no, "request_id");
  r.user_id = as_int(require(j, "user_id", line_no, ""), line_no, "user_id");
  const json& items = require(j, "items", line_no, "");
  if (!items.is_array()) bad(line_no, "items", "expected an array");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string path = "items[" + std::to_string(i) + "].";
    Item item;
    item.features = as_int_array(require(items[i], "features", line_no, path), line_no,
                                 path + "features");
    check_features(item.features, line_no, path + "features", vocab);
    const json& p = require(items[i], "point_pctr", line_no, path);
    if (!p.is_number()) bad(line_no, path + "point_pctr", "expected a number");
    item.point_pctr = p.get<double>();
    if (!std::isfinite(item.point_pctr)) bad(line_no, path + "point_pctr", "not finite");
    r.candidates.items.push_back(std::move(item));
  }
  r.displayed.item_indices =
      as_int_array(require(j, "displayed", line_no, ""), line_no, "displayed");
  try {
    validate_permutation(r.displayed, r.candidates.size(), r.displayed.size());
  } catch (const ContractError& e) {
    bad(line_no, "displayed", e.what());
  }
  r.clicks = as_int_array(require(j, "clicks", line_no, ""), line_no, "clicks");
  if (r.clicks.size() != r.displayed.size()) {
    bad(line_no, "clicks", std::to_string(r.clicks.size()) + " labels for " +
                               std::to_string(r.displayed.size()) + " displayed items");
  }
  for (auto y : r.clicks) {
    if (y != 0 && y != 1) bad(line_no, "clicks", "labels must be 0 or 1");
  }
  const json& behaviors = require(j, "behaviors", line_no, "");
  if (!behaviors.is_array()) bad(line_no, "behaviors", "expected an array");
  for (std::size_t m = 0; m < behaviors.size(); ++m) {
    const std::string path = "behaviors[" + std::to_string(m) + "].";
    Behavior b;
    const json& bi = require(behaviors[m], "items_features", line_no, path);
    if (!bi.is_array()) bad(line_no, path + "items_features", "expected an array");
    for (const json& feats : bi) {
      b.items_features.push_back(as_int_array(feats, line_no, path + "items_features"));
      check_features(b.items_features.back(), line_no, path + "items_features", vocab);
    }
    b.recency_rank = static_cast<std::int32_t>(
        as_int(require(behaviors[m], "recency_rank", line_no, path), line_no,
               path + "recency_rank"));
    r.behaviors.push_back(std::move(b));
  }
  return r;
}

void write_jsonl(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (const LogRecord& r : data) out << to_jsonl_line(r) << '\n';
  if (!out) throw FormatError("write failed: " + path.string());
}

Dataset load_jsonl(const std::filesystem::path& path, const std::vector<std::size_t>* vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    data.push_back(parse_jsonl_line(line, line_no, vocab));
  }
  return data;
}

// ---------------------------------------------------------- ground truth

void write_ground_truth(const GroundTruthModel& m, const std::filesystem::path& path) {
  const auto tensors = [](const std::vector<Tensor>& ts) {
    json a = json::array();
    for (const Tensor& t : ts) a.push_back(json{{"shape", t.shape()}, {"data", t.values()}});
    return a;
  };
  json users = json::array();
  for (std::size_t u = 0; u < m.pref_a.size(); ++u) {
    users.push_back(json{{"a", tensors(m.pref_a[u])}, {"b", tensors(m.pref_b[u])},
                         {"phase", m.phase[u]}});
  }
  const json j{{"format", "pier-ground-truth"},
               {"version", 1},
               {"seed", m.seed},
               {"world", to_json(m.config)},
               {"theta", tensors(m.theta)},
               {"interaction", tensors(m.interaction)},
               {"users", users}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << j.dump() << '\n';
}

GroundTruthModel read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "pier-ground-truth") {
    throw FormatError(path.string() + ": not a ground-truth sidecar");
  }
  const auto tensors = [](const json& a) {
    std::vector<Tensor> out;
    for (const json& t : a) {
      out.emplace_back(t.at("shape").get<Shape>(), t.at("data").get<std::vector<double>>());
    }
    return out;
  };
  try {
    GroundTruthModel m;
    m.seed = j.at("seed").get<std::uint64_t>();
    update_from_json(m.config, j.at("world"));
    m.theta = tensors(j.at("theta"));
    m.interaction = tensors(j.at("interaction"));
    for (const json& u : j.at("users")) {
      m.pref_a.push_back(tensors(u.at("a")));
      m.pref_b.push_back(tensors(u.at("b")));
      m.phase.push_back(u.at("phase").get<double>());
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace pier
