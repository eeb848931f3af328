#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "pier/data.hpp"
#include "pier/errors.hpp"
#include "pier/permgen.hpp"

using namespace pier;
namespace fs = std::filesystem;

namespace {

WorldConfig small_world() {
  WorldConfig c;
  c.n_users = 50;
  c.burn_in_requests = 300;
  c.point_model.epochs = 1;
  return c;
}

std::string dump(const Dataset& d) {
  std::string s;
  for (const LogRecord& r : d) s += to_jsonl_line(r) + "\n";
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("pier_test_data_" + name);
}

CandidateSet random_items(std::size_t n, const std::vector<std::size_t>& vocab,
                          std::mt19937_64& rng) {
  CandidateSet c;
  for (std::size_t i = 0; i < n; ++i) {
    Item item;
    for (std::size_t v : vocab) {
      item.features.push_back(
          static_cast<FeatureId>(std::uniform_int_distribution<std::size_t>(0, v - 1)(rng)));
    }
    c.items.push_back(item);
  }
  return c;
}

}  // namespace

TEST_CASE("same seed gives a byte-identical dataset") {
  const auto a = generate_synthetic_dataset(small_world(), 400, 7);
  const auto b = generate_synthetic_dataset(small_world(), 400, 7);
  const auto c = generate_synthetic_dataset(small_world(), 400, 8);
  CHECK(dump(a.records) == dump(b.records));
  CHECK(dump(a.records) != dump(c.records));
  CHECK(a.records.size() == 400);
}

TEST_CASE("records are well formed and request ids follow the burn-in") {
  const WorldConfig w = small_world();
  const auto d = generate_synthetic_dataset(w, 200, 3);
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const LogRecord& r = d.records[i];
    CHECK(r.request_id == static_cast<std::int64_t>(w.burn_in_requests + i));
    CHECK(r.candidates.size() == w.n_items);
    CHECK_NOTHROW(validate_permutation(r.displayed, w.n_items, w.n_display));
    CHECK(r.clicks.size() == w.n_display);
    for (const Item& item : r.candidates.items) {
      CHECK(item.point_pctr > 0.0);
      CHECK(item.point_pctr < 1.0);
      CHECK(item.point_pctr == round_sig9(item.point_pctr));
    }
  }
}

TEST_CASE("greedy displays follow the point scores outside exploration") {
  const auto d = generate_synthetic_dataset(small_world(), 500, 11);
  std::size_t greedy = 0;
  for (const LogRecord& r : d.records) {
    std::vector<double> v;
    for (const Item& item : r.candidates.items) v.push_back(item.point_pctr);
    std::vector<std::int32_t> order(v.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int32_t>(i);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] > v[b]; });
    order.resize(r.displayed.size());
    if (order == r.displayed.item_indices) ++greedy;
  }
  const double frac = static_cast<double>(greedy) / static_cast<double>(d.records.size());
  // 80% greedy plus random draws that happen to coincide.
  CHECK(frac > 0.74);
  CHECK(frac < 0.86);
}

TEST_CASE("behavior histories hold clicked displays, most recent first, capped at M") {
  WorldConfig w = small_world();
  w.burn_in_requests = 0;
  w.n_users = 20;
  w.max_behaviors = 4;
  const auto d = generate_synthetic_dataset(w, 600, 5);
  std::map<std::int64_t, BehaviorSequence> replay;
  for (const LogRecord& r : d.records) {
    BehaviorSequence& h = replay[r.user_id];
    REQUIRE(r.behaviors == h);
    for (std::size_t m = 0; m < r.behaviors.size(); ++m) {
      CHECK(r.behaviors[m].recency_rank == static_cast<std::int32_t>(m));
    }
    if (std::count(r.clicks.begin(), r.clicks.end(), 1) > 0) {
      Behavior b;
      for (auto i : r.displayed.item_indices) b.items_features.push_back(r.candidates.items[i].features);
      h.insert(h.begin(), b);
      if (h.size() > w.max_behaviors) h.pop_back();
      for (std::size_t m = 0; m < h.size(); ++m) h[m].recency_rank = static_cast<std::int32_t>(m);
    }
  }
}

TEST_CASE("empirical CTR matches the click model's mean probability") {
  WorldConfig w;
  w.burn_in_requests = 2000;
  w.point_model.epochs = 1;
  const auto d = generate_synthetic_dataset(w, 50000, 21);
  double expected = 0.0, clicks = 0.0, positions = 0.0;
  for (const LogRecord& r : d.records) {
    const auto p = d.model.click_probabilities(r.candidates, r.displayed, r.user_id, r.request_id);
    for (std::size_t t = 0; t < p.size(); ++t) {
      expected += p[t];
      clicks += r.clicks[t];
      positions += 1.0;
    }
  }
  CHECK(std::abs(clicks / positions - expected / positions) < 0.02);
}

TEST_CASE("click probabilities stay inside [0.01, 0.99]") {
  WorldConfig w;
  w.n_users = 10;
  w.base_bias = 3.0;
  const auto m = GroundTruthModel::sample(w, 2);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const CandidateSet c = random_items(w.n_items, w.vocab_sizes, rng);
    Permutation p{{0, 1, 2}};
    for (double q : m.click_probabilities(c, p, trial % 10, trial)) {
      CHECK(q >= 0.01);
      CHECK(q <= 0.99);
    }
  }
}

TEST_CASE("the default world is context dependent") {
  const WorldConfig w;
  const auto m = GroundTruthModel::sample(w, 1);
  std::mt19937_64 rng(1);
  double widest = 0.0;
  for (int trial = 0; trial < 50 && widest <= 0.05; ++trial) {
    const CandidateSet c = random_items(w.n_items, w.vocab_sizes, rng);
    std::vector<std::int32_t> idx = {0, 1, 2};
    double lo = 1e9, hi = -1e9;
    do {
      const double e = m.expected_clicks(c, Permutation{idx}, 0, 0);
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    } while (std::next_permutation(idx.begin(), idx.end()));
    widest = std::max(widest, hi - lo);
  }
  CHECK(widest > 0.05);
}

TEST_CASE("position decay alone makes order matter only through positions") {
  WorldConfig w;
  w.context_effects = false;
  w.n_users = 1;
  const auto m = GroundTruthModel::sample(w, 9);
  std::mt19937_64 rng(2);
  const CandidateSet c = random_items(w.n_items, w.vocab_sizes, rng);
  const Item& a = c.items[0];
  CHECK(m.context_effect(a, c.items[1]) == 0.0);
  const auto p1 = m.click_probabilities(c, Permutation{{0, 1, 2}}, 0, 0);
  const auto p2 = m.click_probabilities(c, Permutation{{0, 2, 1}}, 0, 0);
  CHECK(p1[0] == p2[0]);
}

TEST_CASE("oracle: separable world picks items by descending attractiveness") {
  WorldConfig w;
  w.context_effects = false;
  w.user_scale = 0.0;
  w.base_bias = -2.5;
  w.n_users = 1;
  const auto m = GroundTruthModel::sample(w, 13);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const CandidateSet c = random_items(w.n_items, w.vocab_sizes, rng);
    std::vector<std::int32_t> order(c.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int32_t>(i);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) {
      return m.base_attractiveness(c.items[x]) > m.base_attractiveness(c.items[y]);
    });
    const Permutation best = oracle_best_permutation(c, m, 0, 0);
    std::vector<double> got, want;
    for (std::size_t t = 0; t < w.n_display; ++t) {
      got.push_back(m.base_attractiveness(c.items[best.item_indices[t]]));
      want.push_back(m.base_attractiveness(c.items[order[t]]));
    }
    CHECK(got == want);
  }
}

TEST_CASE("oracle: a single arrangement is returned as is") {
  WorldConfig w;
  w.n_items = 1;
  w.n_display = 1;
  w.position_decay = {1.0};
  w.n_users = 1;
  const auto m = GroundTruthModel::sample(w, 1);
  std::mt19937_64 rng(1);
  const CandidateSet c = random_items(1, w.vocab_sizes, rng);
  CHECK(oracle_best_permutation(c, m, 0, 0) == Permutation{{0}});
}

TEST_CASE("oracle matches a hand-rolled scan for N_o = 4, N_d = 2") {
  WorldConfig w;
  w.n_items = 4;
  w.n_display = 2;
  w.position_decay = {1.0, 0.85};
  w.n_users = 3;
  const auto m = GroundTruthModel::sample(w, 17);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const CandidateSet c = random_items(4, w.vocab_sizes, rng);
    const std::int64_t user = trial % 3;
    Permutation best;
    double best_value = -1.0;
    int scanned = 0;
    for (std::int32_t i = 0; i < 4; ++i) {
      for (std::int32_t j = 0; j < 4; ++j) {
        if (i == j) continue;
        ++scanned;
        const double pi = std::clamp(m.base_attractiveness(c.items[i]) * 1.0 *
                                         m.user_fit(user, trial, c.items[i]),
                                     0.01, 0.99);
        const double pj = std::clamp(m.base_attractiveness(c.items[j]) * 0.85 *
                                         std::max(0.0, 1.0 + m.context_effect(c.items[i], c.items[j])) *
                                         m.user_fit(user, trial, c.items[j]),
                                     0.01, 0.99);
        if (pi + pj > best_value) {
          best_value = pi + pj;
          best = Permutation{{i, j}};
        }
      }
    }
    CHECK(scanned == 12);
    CHECK(oracle_best_permutation(c, m, user, trial) == best);
  }
}

TEST_CASE("oracle respects the enumeration guard") {
  WorldConfig w;
  w.n_items = 12;
  w.n_display = 4;
  w.position_decay = {1, 1, 1, 1};
  w.n_users = 1;
  const auto m = GroundTruthModel::sample(w, 1);
  std::mt19937_64 rng(1);
  const CandidateSet c = random_items(12, w.vocab_sizes, rng);
  CHECK_THROWS_AS(oracle_best_permutation(c, m, 0, 0), ContractError);
}

TEST_CASE("world validation") {
  WorldConfig w;
  w.n_display = 11;
  CHECK_THROWS_AS(GroundTruthModel::sample(w, 1), ContractError);
  w = WorldConfig{};
  w.position_decay = {1.0};
  CHECK_THROWS_AS(GroundTruthModel::sample(w, 1), ContractError);
}

TEST_CASE("temporal split keeps order and takes the last records as test") {
  const auto d = generate_synthetic_dataset(small_world(), 100, 2);
  const Split s = temporal_split(d.records, 30);
  REQUIRE(s.train.size() == 70);
  REQUIRE(s.test.size() == 30);
  CHECK(s.train.back().request_id < s.test.front().request_id);
  CHECK(s.test.back() == d.records.back());
  CHECK_THROWS_AS(temporal_split(d.records, 101), ContractError);
}

TEST_CASE("JSONL: write, load, write is byte identical on 1,000 records") {
  const auto d = generate_synthetic_dataset(small_world(), 1000, 4);
  const fs::path a = temp_path("a.jsonl"), b = temp_path("b.jsonl");
  write_jsonl(d.records, a);
  const auto vocab = small_world().vocab_sizes;
  const Dataset back = load_jsonl(a, &vocab);
  CHECK(back == d.records);
  write_jsonl(back, b);
  CHECK(slurp(a) == slurp(b));
  fs::remove(a);
  fs::remove(b);
}

TEST_CASE("JSONL: empty file gives an empty dataset") {
  const fs::path p = temp_path("empty.jsonl");
  { std::ofstream out(p); }
  CHECK(load_jsonl(p).empty());
  fs::remove(p);
}

TEST_CASE("JSONL: out-of-vocabulary id is rejected with its line number") {
  const auto d = generate_synthetic_dataset(small_world(), 5, 4);
  Dataset bad = d.records;
  bad[2].candidates.items[1].features[1] = 8;  // vocabulary of field 1 is 8
  const fs::path p = temp_path("oov.jsonl");
  write_jsonl(bad, p);
  const auto vocab = small_world().vocab_sizes;
  try {
    load_jsonl(p, &vocab);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("items[1].features") != std::string::npos);
  }
  fs::remove(p);
}

TEST_CASE("JSONL: malformed lines name line and field") {
  const auto d = generate_synthetic_dataset(small_world(), 1, 4);
  const std::string good = to_jsonl_line(d.records[0]);
  CHECK_NOTHROW(parse_jsonl_line(good, 1));

  auto expect = [](const std::string& line, const std::string& needle) {
    try {
      parse_jsonl_line(line, 9);
      FAIL("expected FormatError for " << line);
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("line 9") != std::string::npos);
      CHECK_MESSAGE(msg.find(needle) != std::string::npos, msg);
    }
  };
  expect("{not json", "malformed");
  std::string no_clicks = good;
  no_clicks.replace(no_clicks.find("\"clicks\""), 8, "\"klicks\"");
  expect(no_clicks, "klicks");
  std::string bad_label = good;
  const auto pos = bad_label.find("\"clicks\":[") + 10;
  bad_label[pos] = '7';
  expect(bad_label, "clicks");
  std::string dup = good;
  const auto disp = dup.find("\"displayed\":[") + 13;
  const auto comma = dup.find(',', disp);
  dup.replace(comma + 1, dup.find(',', comma + 1) - comma - 1, dup.substr(disp, comma - disp));
  expect(dup, "displayed");
}

TEST_CASE("floats are written with at most nine significant digits") {
  LogRecord r;
  Item item;
  item.features = {1};
  item.point_pctr = 0.123456789123;
  r.candidates.items.push_back(item);
  r.displayed = Permutation{{0}};
  r.clicks = {1};
  const std::string line = to_jsonl_line(r);
  CHECK(line.find("\"point_pctr\":0.123456789}") != std::string::npos);
  CHECK(round_sig9(0.123456789123) == 0.123456789);
}

TEST_CASE("ground-truth sidecar round-trips") {
  const auto d = generate_synthetic_dataset(small_world(), 10, 6);
  const fs::path p = temp_path("gt.json");
  write_ground_truth(d.model, p);
  const GroundTruthModel back = read_ground_truth(p);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const CandidateSet c = random_items(10, small_world().vocab_sizes, rng);
    const Permutation perm{{3, 1, 4}};
    CHECK(back.click_probabilities(c, perm, trial, trial * 100) ==
          d.model.click_probabilities(c, perm, trial, trial * 100));
  }
  fs::remove(p);
}
