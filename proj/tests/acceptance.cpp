/*
 * Copyright 2026 The RED Collections Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// Acceptance suite: one pass/fail line per criterion, each checked against
// its runtime limit. Exit status is non-zero if any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "red/pipeline.hpp"

using namespace red;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("red_acceptance_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

FeatureSchema synthetic_schema(const std::vector<int>& flags) {
  std::vector<FeatureSpec> f;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    f.push_back({"x" + std::to_string(i), FeatureGroup::kCollection, flags[i], MissingPolicy::kMarker, false});
  }
  return FeatureSchema(std::move(f));
}

// Counts violations of the flagged directions for `probes` random triples.
std::uint64_t probe_monotonicity(const GbdtModel& m, const std::vector<double>& pool, std::size_t rows,
                                 std::size_t probes, Rng& rng, std::uint64_t& checked) {
  const auto flags = m.schema().monotone();
  const auto width = flags.size();
  std::vector<std::size_t> flagged;
  for (std::size_t f = 0; f < width; ++f) {
    if (flags[f] != 0) flagged.push_back(f);
  }
  std::vector<double> lo(width, INFINITY), hi(width, -INFINITY);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < width; ++f) {
      const double v = pool[r * width + f];
      if (std::isnan(v)) continue;
      lo[f] = std::min(lo[f], v);
      hi[f] = std::max(hi[f], v);
    }
  }
  std::uint64_t bad = 0;
  std::vector<double> a(width), b(width);
  for (std::size_t i = 0; i < probes; ++i) {
    const std::size_t r = rng.index(rows);
    std::copy_n(pool.begin() + static_cast<std::ptrdiff_t>(r * width), width, a.begin());
    const std::size_t f = flagged[rng.index(flagged.size())];
    const double span = hi[f] - lo[f] + 1.0;
    double t1 = rng.uniform(lo[f] - 0.1 * span, hi[f] + 0.1 * span);
    double t2 = rng.uniform(lo[f] - 0.1 * span, hi[f] + 0.1 * span);
    if (t1 > t2) std::swap(t1, t2);
    b = a;
    a[f] = t1;
    b[f] = t2;
    const double pa = m.predict_row(a), pb = m.predict_row(b);
    if ((flags[f] > 0 && pa > pb) || (flags[f] < 0 && pa < pb)) ++bad;
    ++checked;
  }
  return bad;
}

Outcome monotonicity_fuzz() {
  std::uint64_t checked = 0, bad = 0;
  Rng rng(derive_seed(1, "fuzz"));

  // Models trained on pipeline data with the canonical flags.
  for (std::uint64_t seed : {1, 2}) {
    PipelineConfig c;
    c.seed = seed;
    c.marketplace.users = 500;
    c.marketplace.restaurants = 120;
    c.marketplace.dishes = 1200;
    c.dataset.n_sessions = 30000;
    c.boost.n_trees = 60;
    const auto w = build_world(c);
    const auto ds = build_unbiased_dataset(simulate_exploration_traffic(c, w), *w.extractor);
    const auto m = train(ds.training_data(), c.boost);
    bad += probe_monotonicity(m, ds.values(), ds.rows(), 4000, rng, checked);
  }

  // Synthetic models with dense interactions and missing values.
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const std::vector<int> flags = {1, -1, 1, 0, -1};
    const auto schema = synthetic_schema(flags);
    Rng data_rng(derive_seed(seed, "fuzz-data"));
    std::vector<double> x;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < 1500; ++i) {
      std::vector<double> r(flags.size());
      for (auto& v : r) v = data_rng.uniform(-2, 2);
      const double z = r[0] * r[3] - r[1] + std::sin(3 * r[2]) + 0.5 * r[4] * r[4];
      for (auto& v : r) {
        if (data_rng.bernoulli(0.05)) v = kNaN;
      }
      x.insert(x.end(), r.begin(), r.end());
      y.push_back(data_rng.bernoulli(sigmoid(2 * z)) ? 1 : 0);
    }
    GbdtParams p;
    p.n_trees = 40;
    p.min_samples_leaf = 5;
    p.max_leaves = 15;
    const auto m = train(TrainingData{&schema, x, y}, p);
    bad += probe_monotonicity(m, x, y.size(), 400, rng, checked);
  }
  return {bad == 0 && checked >= 10000,
          std::to_string(checked) + " triples, " + std::to_string(bad) + " violations"};
}

Outcome gbdt_oracle() {
  Rng rng(derive_seed(2, "oracle"));
  int instances = 0, agree = 0;
  for (int inst = 0; inst < 60; ++inst) {
    const std::size_t n = 4 + rng.index(61);
    const auto schema = synthetic_schema({0, 0});
    std::vector<double> x;
    std::vector<std::uint8_t> y;
    for (std::size_t i = 0; i < n; ++i) {
      x.push_back(rng.bernoulli(0.5) ? 1 : 0);
      x.push_back(rng.bernoulli(0.5) ? 1 : 0);
      y.push_back(rng.bernoulli(0.3 + 0.4 * x[2 * i]) ? 1 : 0);
    }
    y[0] = 0;
    y[1] = 1;
    GbdtParams p;
    p.n_trees = 1;
    p.max_leaves = 2;
    p.min_samples_leaf = 1;
    const auto m = train(TrainingData{&schema, x, y}, p);

    double mean = 0;
    for (auto v : y) mean += v;
    mean /= static_cast<double>(n);
    std::array<double, 2> gains = {0.0, 0.0};
    for (int f = 0; f < 2; ++f) {
      double gl = 0, hl = 0, g = 0, h = 0;
      std::size_t nl = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = mean - y[i], hi = mean * (1 - mean);
        g += gi;
        h += hi;
        if (x[2 * i + static_cast<std::size_t>(f)] <= 0.5) {
          gl += gi;
          hl += hi;
          ++nl;
        }
      }
      if (nl == 0 || nl == n) continue;
      const double lambda = p.l2_leaf_penalty;
      gains[static_cast<std::size_t>(f)] = 0.5 * (gl * gl / (hl + lambda) +
                                                  (g - gl) * (g - gl) / (h - hl + lambda) - g * g / (h + lambda));
    }
    // Equal partitions (identical or complementary columns) tie up to rounding.
    const double best = std::max(gains[0], gains[1]);
    const auto& root = m.trees().at(0).nodes.at(0);
    const auto close = [&](double v) { return std::abs(v - best) <= 1e-9 * best; };
    const bool ok = best <= 1e-12 ? root.is_leaf()
                                  : !root.is_leaf() && close(root.gain) &&
                                        close(gains[static_cast<std::size_t>(root.feature)]);
    ++instances;
    agree += ok ? 1 : 0;
  }

  int grads = 0, grad_ok = 0;
  for (int i = 0; i < 20; ++i) {
    const double s = rng.uniform(-6, 6);
    const double label = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double h = 1e-5;
    const auto d = logistic_derivatives(s, label);
    const double g = (logistic_loss(s + h, label) - logistic_loss(s - h, label)) / (2 * h);
    const double hh =
        (logistic_derivatives(s + h, label).gradient - logistic_derivatives(s - h, label).gradient) / (2 * h);
    const bool ok = std::abs(d.gradient - g) <= 1e-6 * std::max(std::abs(g), 1e-3) &&
                    std::abs(d.hessian - hh) <= 1e-6 * std::max(std::abs(hh), 1e-3);
    ++grads;
    grad_ok += ok ? 1 : 0;
  }
  return {agree == instances && grad_ok == grads,
          std::to_string(agree) + "/" + std::to_string(instances) + " splits, " + std::to_string(grad_ok) +
              "/" + std::to_string(grads) + " derivative points"};
}

Outcome balance_and_locality() {
  PipelineConfig c;
  c.dataset.n_sessions = 100000;
  const auto w = build_world(c);
  const auto log = simulate_exploration_traffic(c, w);
  const auto ds = build_unbiased_dataset(log, *w.extractor);
  const auto a = audit_dataset(ds, log);
  bool per_home_half = true;
  std::string homes;
  for (const auto& [h, cell] : a.per_home) {
    per_home_half = per_home_half && cell.rows > 0 && 2 * cell.positives == cell.rows;
    homes += " home" + std::to_string(h) + "=" + std::to_string(cell.positives) + "/" + std::to_string(cell.rows);
  }
  const bool ok = a.ok() && per_home_half && a.global.rows > 0 && a.per_home.size() == w.market.homes.size();
  return {ok, std::to_string(log.size()) + " sessions, " + std::to_string(ds.pairs().size()) + " pairs," + homes +
                  ", locality violations " + std::to_string(a.locality_violations) + ", pairing violations " +
                  std::to_string(a.pairing_violations)};
}

Outcome exploration_uniformity() {
  MarketplaceConfig mc;
  mc.collections = 6;
  mc.collection_specs.clear();
  for (std::uint32_t i = 0; i < 6; ++i) {
    CollectionSpec s;
    s.taxonomies = {i};
    s.size = 8;
    s.homes = {0, 1, 2};
    s.title = "C" + std::to_string(i);
    mc.collection_specs.push_back(s);
  }
  const auto market = generate_marketplace(mc, 3);
  const ExplorationPolicy policy(1.0, std::make_shared<UniformRandomPolicy>(3));
  const auto log = simulate_sessions(market, policy, 50000, derive_seed(4, "uniformity"));
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> counts;
  for (std::uint32_t i = 0; i < 6; ++i) {
    for (std::uint32_t j = i + 1; j < 6; ++j) counts[{i, j}] = 0;
  }
  std::uint64_t bad = 0;
  for (const auto& e : log) {
    if (!e.exploration || e.displayed.size() != 2) {
      ++bad;
      continue;
    }
    const auto a = std::min(e.displayed[0].value, e.displayed[1].value);
    const auto b = std::max(e.displayed[0].value, e.displayed[1].value);
    ++counts.at({a, b});
  }
  const double expected = static_cast<double>(log.size() - bad) / static_cast<double>(counts.size());
  double chi2 = 0;
  for (const auto& [k, n] : counts) chi2 += (static_cast<double>(n) - expected) * (static_cast<double>(n) - expected) / expected;
  const double p = chi_square_sf(chi2, static_cast<double>(counts.size() - 1));
  return {bad == 0 && p > 0.01, "15 pairs over " + std::to_string(log.size()) + " sessions, chi2 " + fmt("%.3f", chi2) +
                                    " (dof 14), p " + fmt("%.4f", p)};
}

Outcome beats_popularity() {
  double sum = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    PipelineConfig c;
    c.seed = seed;
    const auto w = build_world(c);
    const auto log = simulate_exploration_traffic(c, w);
    const auto split = build_datasets(c, w, log, {});
    const auto model = train_model(c, split.train, c.model_features);
    const double acc = pairwise_accuracy(model, split.test, "model").pairwise_accuracy;
    const double pop = pairwise_accuracy(split.test, popularity_scorer(*w.extractor), "popularity").pairwise_accuracy;
    sum += 100.0 * (acc - pop);
    detail += "seed " + std::to_string(seed) + ": " + fmt("%.4f", acc) + " vs " + fmt("%.4f", pop) + "; ";
  }
  const double mean = sum / 3.0;
  return {mean >= 5.0, detail + "mean gain " + fmt("%.2f", mean) + " pts (need >= 5)"};
}

std::string g_ladder_a;
std::string g_ladder_b;
double g_ladder_seconds = 0;

Outcome ladder() {
  PipelineConfig c;
  c.artifact_dir = g_ladder_a;
  RunOptions o;
  o.quiet = true;
  o.force = true;
  const auto t0 = std::chrono::steady_clock::now();
  cmd_ladder(c, o);
  g_ladder_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto j = nlohmann::json::parse(slurp(g_ladder_a + "/ladder_report.json"));
  const auto& avg = j.at("averaged");
  std::string detail;
  bool signs = true;
  for (const auto& s : avg.at("steps")) {
    const double diff = s.at("offline_diff_points").get<double>();
    const double lift = s.at("ccr_lift").get<double>();
    signs = signs && ((diff > 0 && lift > 0) || (diff < 0 && lift < 0));
    detail += s.at("to").get<std::string>() + " " + fmt("%+.2f", diff) + " pts / " + fmt("%+.2f%%", 100 * lift) + "; ";
  }
  const double rho = avg.at("rank_correlation").is_number() ? avg.at("rank_correlation").get<double>() : kNaN;
  return {signs && rho == 1.0, detail + std::to_string(c.eval.seeds.size()) + " seeds, rank correlation " + fmt("%.3f", rho)};
}

Outcome embedding_identities() {
  PipelineConfig c;
  const auto w = build_world(c);
  const auto& m = w.market;
  const auto& s = w.store;
  std::uint64_t checks = 0, bad = 0;
  auto expect = [&](bool ok) {
    ++checks;
    bad += ok ? 0 : 1;
  };
  for (const auto& d : m.dishes) {
    const auto v = s.vector(d.id);
    const Vector want(v.begin(), v.end());
    Collection single;
    single.kind = CollectionKind::kDish;
    single.member_ids = {d.id.value};
    expect(collection_embedding(single, m, s).vector == want);
    Restaurant r{RestaurantId(0), d.id.value % 2 ? RegionId(0) : RegionId(1), d.taxonomy, 0.0, {d.id}};
    expect(restaurant_embedding(r, s) == want);
  }
  for (const auto& r : m.restaurants) {
    Collection single;
    single.kind = CollectionKind::kRestaurant;
    single.member_ids = {r.id.value};
    expect(collection_embedding(single, m, s).vector == restaurant_embedding(r, s));
  }
  const double decay = recency_decay_per_day(c.embedding.recency_half_life_days);
  for (const auto& u : m.users) {
    for (MealShift sh : kAllShifts) {
      const auto rep = user_shift_representation(u, sh, m, s, m.epoch(), decay);
      if (rep) {
        std::set<std::uint32_t> taxa;
        for (const auto& a : rep->anchors) taxa.insert(a.taxonomy.value);
        expect(taxa.size() == rep->anchors.size() && !rep->anchors.empty() && rep->anchors.size() <= 3);
      }
      // Drop every order of the other shifts and add a foreign one.
      User edited = u;
      std::erase_if(edited.orders, [&](const Order& o) { return o.shift != sh; });
      const MealShift other = sh == MealShift::kLunch ? MealShift::kDinner : MealShift::kLunch;
      edited.orders.insert(edited.orders.begin(),
                           Order{u.id, m.dishes[u.id.index() % m.dishes.size()].id,
                                 m.epoch() - 3 * kSecondsPerDay + shift_start_second(other), other,
                                 OrderSource::kOrganic, std::nullopt, std::nullopt});
      const auto again = user_shift_representation(edited, sh, m, s, m.epoch(), decay);
      bool same = rep.has_value() == again.has_value();
      if (same && rep) {
        same = rep->anchors.size() == again->anchors.size();
        for (std::size_t i = 0; same && i < rep->anchors.size(); ++i) {
          same = rep->anchors[i].dish == again->anchors[i].dish && rep->anchors[i].vector == again->anchors[i].vector;
        }
      }
      expect(same);
    }
  }
  return {bad == 0, std::to_string(checks) + " identity checks over " + std::to_string(m.dishes.size()) + " dishes, " +
                        std::to_string(m.restaurants.size()) + " restaurants, " + std::to_string(m.users.size()) +
                        " users, " + std::to_string(bad) + " failures"};
}

double g_determinism_limit = 0;

Outcome determinism() {
  PipelineConfig c;
  c.artifact_dir = g_ladder_b;
  RunOptions o;
  o.quiet = true;
  o.force = true;
  cmd_ladder(c, o);
  g_determinism_limit = 2 * g_ladder_seconds;
  bool same = true;
  std::string detail;
  for (const char* f : {"ladder_report.json", "ladder_steps.tsv", "ladder.manifest.json"}) {
    const auto a = slurp(g_ladder_a + "/" + f);
    const auto b = slurp(g_ladder_b + "/" + f);
    const bool eq = !a.empty() && a == b;
    same = same && eq;
    detail += std::string(f) + (eq ? " identical; " : " DIFFERS; ");
  }
  return {same, detail};
}

}  // namespace

int main() {
  g_ladder_a = scratch("ladder_a");
  g_ladder_b = scratch("ladder_b");
  const std::vector<Criterion> criteria = {
      {1, "monotonicity fuzz", 120, monotonicity_fuzz},
      {2, "GBDT oracle equivalence", 60, gbdt_oracle},
      {3, "dataset balance and locality", 120, balance_and_locality},
      {4, "exploration uniformity", 60, exploration_uniformity},
      {5, "model beats popularity baseline", 600, beats_popularity},
      {6, "offline/online ladder agreement", 1200, ladder},
      {7, "embedding aggregation identities", 60, embedding_identities},
      {8, "end-to-end determinism", 0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double limit = c.id == 8 ? g_determinism_limit : c.limit_seconds;
    const bool in_time = secs <= limit;
    const bool pass = r.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("[%s] criterion %d %s: %s (%.1f s, limit %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id,
                c.name.c_str(), r.detail.c_str(), secs, limit, in_time ? "" : ", too slow");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
