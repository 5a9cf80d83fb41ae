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


#include "red/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

namespace red {

using nlohmann::json;

RowScorer model_scorer(std::shared_ptr<const GbdtModel> model, const FeatureSchema& data_schema) {
  auto cols = data_schema.projection_of(model->schema());
  return [model = std::move(model), cols = std::move(cols)](const RowMeta&, std::span<const double> row) {
    thread_local std::vector<double> x;
    x.resize(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) x[i] = row[cols[i]];
    return model->predict_row(x);
  };
}

RowScorer popularity_scorer(const FeatureExtractor& extractor) {
  std::vector<std::array<double, kNumShifts>> counts;
  for (const auto& s : extractor.all_stats()) {
    std::array<double, kNumShifts> c{};
    for (std::size_t i = 0; i < kNumShifts; ++i) c[i] = static_cast<double>(s.orders_per_shift[i]);
    counts.push_back(c);
  }
  return [counts = std::move(counts)](const RowMeta& m, std::span<const double>) {
    return counts.at(m.collection.index())[shift_index(m.shift)];
  };
}

RowScorer oracle_scorer(std::shared_ptr<const ChoiceModel> choice) {
  return [choice = std::move(choice)](const RowMeta& m, std::span<const double>) {
    return choice->affinity(choice->market().user(m.user), m.collection, m.shift);
  };
}

RowScorer anti_oracle_scorer(std::shared_ptr<const ChoiceModel> choice) {
  return [choice = std::move(choice)](const RowMeta& m, std::span<const double>) {
    return -choice->affinity(choice->market().user(m.user), m.collection, m.shift);
  };
}

namespace {

json cell_json(const AccuracyCell& c) {
  return {{"n_pairs", c.n_pairs}, {"correct", c.correct}, {"accuracy", c.accuracy()}};
}

}  // namespace

json EvalReport::to_json() const {
  json homes = json::object();
  for (const auto& [h, c] : per_home) {
    homes[h == kCarouselHome.value ? std::string("CAROUSEL") : std::to_string(h)] = cell_json(c);
  }
  json shifts = json::object();
  for (MealShift s : kAllShifts) shifts[std::string(shift_name(s))] = cell_json(per_shift[shift_index(s)]);
  return {{"model_id", model_id},       {"pairwise_accuracy", pairwise_accuracy},
          {"n_pairs", n_pairs},         {"correct", correct},
          {"per_home", homes},          {"per_shift", shifts}};
}

EvalReport pairwise_accuracy(const LabeledDataset& test, const RowScorer& scorer,
                             const std::string& model_id) {
  EvalReport r;
  r.model_id = model_id;
  for (std::size_t p = 0; p < test.pairs().size(); ++p) {
    const double sp = scorer(test.meta()[2 * p], test.row(2 * p));
    const double sn = scorer(test.meta()[2 * p + 1], test.row(2 * p + 1));
    const double credit = sp > sn ? 1.0 : sp == sn ? 0.5 : 0.0;
    const auto& pair = test.pairs()[p];
    ++r.n_pairs;
    r.correct += credit;
    auto& h = r.per_home[pair.home.value];
    ++h.n_pairs;
    h.correct += credit;
    auto& s = r.per_shift[shift_index(pair.context.shift)];
    ++s.n_pairs;
    s.correct += credit;
  }
  r.pairwise_accuracy = r.n_pairs == 0 ? 0.0 : r.correct / static_cast<double>(r.n_pairs);
  return r;
}

EvalReport pairwise_accuracy(const GbdtModel& model, const LabeledDataset& test,
                             const std::string& model_id) {
  const auto cols = test.schema().projection_of(model.schema());
  std::vector<double> x(cols.size());
  auto scorer = [&](const RowMeta&, std::span<const double> row) {
    for (std::size_t i = 0; i < cols.size(); ++i) x[i] = row[cols[i]];
    return model.predict_row(x);
  };
  return pairwise_accuracy(test, scorer, model_id);
}

std::vector<CollectionId> rank_collections(std::span<const CollectionId> eligible,
                                           const std::function<double(CollectionId)>& score) {
  std::vector<std::pair<double, CollectionId>> scored;
  scored.reserve(eligible.size());
  for (auto c : eligible) scored.emplace_back(score(c), c);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<CollectionId> out;
  out.reserve(scored.size());
  for (const auto& [s, c] : scored) out.push_back(c);
  return out;
}

ScoreTable build_score_table(const FeatureExtractor& extractor, const RowScorer& scorer) {
  const auto& market = extractor.market();
  ScoreTable table(market.users.size(), market.collections.size());
  std::vector<double> row(extractor.schema().size());
  for (const auto& u : market.users) {
    for (MealShift s : kAllShifts) {
      for (const auto& c : market.collections) {
        extractor.extract_into(u.id, c.id, s, row);
        const RowMeta meta{0, u.id, c.id, HomeId{0}, s};
        table.set(u.id, s, c.id, scorer(meta, row));
      }
    }
  }
  return table;
}

RankingPolicy::RankingPolicy(std::shared_ptr<const ScoreTable> table, std::size_t k)
    : table_(std::move(table)), k_(k) {
  if (!table_) throw ConfigError("ranking policy needs a score table");
  if (k_ == 0) throw ConfigError("ranking policy k must be >= 1");
}

Display RankingPolicy::choose(const User& user, const Context& ctx,
                              std::span<const CollectionId> eligible, Rng&) const {
  Display d;
  d.ids = rank_collections(eligible, [&](CollectionId c) { return table_->at(user.id, ctx.shift, c); });
  if (d.ids.size() > k_) d.ids.resize(k_);
  return d;
}

json AbReport::to_json() const {
  return {{"control_id", control_id},
          {"variant_id", variant_id},
          {"sessions_control", sessions_control},
          {"sessions_variant", sessions_variant},
          {"conversions_control", conversions_control},
          {"conversions_variant", conversions_variant},
          {"ccr_control", ccr_control},
          {"ccr_variant", ccr_variant},
          {"ccr_lift", ccr_lift},
          {"z", z},
          {"p_value", p_value}};
}

int arm_of(UserId user, std::uint64_t seed) {
  return static_cast<int>(splitmix64(derive_seed(seed, "arm") ^ user.value) & 1u);
}

std::array<std::vector<UserId>, 2> assign_arms(const Marketplace& market, std::uint64_t seed) {
  std::array<std::vector<UserId>, 2> arms;
  for (const auto& u : market.users) arms[static_cast<std::size_t>(arm_of(u.id, seed))].push_back(u.id);
  return arms;
}

TwoProportionTest two_proportion_z_test(std::uint64_t x1, std::uint64_t n1, std::uint64_t x2,
                                        std::uint64_t n2) {
  TwoProportionTest t;
  if (n1 == 0 || n2 == 0) return t;
  const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  if (se == 0.0) return t;
  t.z = (p2 - p1) / se;
  t.p_value = std::erfc(std::abs(t.z) / std::sqrt(2.0));
  return t;
}

double chi_square_sf(double statistic, double dof) {
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, statistic / 2.0);
}

AbReport simulate_ab_test(const DisplayPolicy& control, const DisplayPolicy& variant,
                          const Marketplace& market, std::size_t n_sessions, std::uint64_t seed,
                          const std::string& control_id, const std::string& variant_id) {
  if (n_sessions < 2) throw ConfigError("an A/B test needs at least 2 sessions");
  const auto arms = assign_arms(market, seed);
  if (arms[0].empty() || arms[1].empty()) throw ConfigError("an A/B arm has no users");
  const std::uint64_t sim_seed = derive_seed(seed, "ab-sessions");

  AbReport r;
  r.control_id = control_id;
  r.variant_id = variant_id;
  r.sessions_control = (n_sessions + 1) / 2;
  r.sessions_variant = n_sessions / 2;
  auto conversions = [&](const DisplayPolicy& policy, const std::vector<UserId>& pool, std::size_t n) {
    SimulationOptions opts;
    opts.user_pool = pool;
    std::uint64_t x = 0;
    for (const auto& e : simulate_sessions(market, policy, n, sim_seed, opts)) x += e.purchased ? 1 : 0;
    return x;
  };
  r.conversions_control = conversions(control, arms[0], r.sessions_control);
  r.conversions_variant = conversions(variant, arms[1], r.sessions_variant);
  r.ccr_control = static_cast<double>(r.conversions_control) / static_cast<double>(r.sessions_control);
  r.ccr_variant = static_cast<double>(r.conversions_variant) / static_cast<double>(r.sessions_variant);
  r.ccr_lift = r.ccr_control > 0.0 ? (r.ccr_variant - r.ccr_control) / r.ccr_control : 0.0;
  const auto t = two_proportion_z_test(r.conversions_control, r.sessions_control, r.conversions_variant,
                                       r.sessions_variant);
  r.z = t.z;
  r.p_value = t.p_value;
  return r;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return kNaN;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return kNaN;
  return sxy / std::sqrt(sxx * syy);
}

bool CorrelationReport::signs_agree() const {
  for (const auto& s : steps) {
    const auto sign = [](double v) { return (v > 0.0) - (v < 0.0); };
    if (sign(s.offline_diff) != sign(s.ccr_lift)) return false;
  }
  return true;
}

json CorrelationReport::to_json() const {
  json steps_json = json::array();
  for (const auto& s : steps) {
    steps_json.push_back({{"from", s.from},
                          {"to", s.to},
                          {"offline_diff_points", s.offline_diff},
                          {"ccr_lift", s.ccr_lift},
                          {"ab", s.ab.to_json()}});
  }
  json acc = json::object();
  for (std::size_t i = 0; i < variants.size(); ++i) acc[variants[i]] = offline_accuracy[i];
  return {{"variants", variants},
          {"offline_accuracy", acc},
          {"steps", steps_json},
          {"rank_correlation", rank_correlation},
          {"signs_agree", signs_agree()}};
}

namespace {

void finish(CorrelationReport& r) {
  std::vector<double> diffs;
  std::vector<double> lifts;
  for (const auto& s : r.steps) {
    diffs.push_back(s.offline_diff);
    lifts.push_back(s.ccr_lift);
  }
  r.rank_correlation = spearman(diffs, lifts);
}

}  // namespace

CorrelationReport offline_online_correlation(std::span<const LadderVariant> variants,
                                             const LabeledDataset& test,
                                             const FeatureExtractor& extractor,
                                             std::size_t n_sessions, std::uint64_t seed,
                                             std::size_t k) {
  if (variants.size() < 3) throw ConfigError("a ladder needs at least 3 variants (2 steps)");
  CorrelationReport r;
  std::vector<std::shared_ptr<const RankingPolicy>> policies;
  for (const auto& v : variants) {
    r.variants.push_back(v.id);
    r.offline_accuracy.push_back(pairwise_accuracy(test, v.scorer, v.id).pairwise_accuracy);
    auto table = std::make_shared<const ScoreTable>(build_score_table(extractor, v.scorer));
    policies.push_back(std::make_shared<const RankingPolicy>(table, k));
  }
  for (std::size_t i = 0; i + 1 < variants.size(); ++i) {
    LadderStep s;
    s.from = variants[i].id;
    s.to = variants[i + 1].id;
    s.offline_diff = 100.0 * (r.offline_accuracy[i + 1] - r.offline_accuracy[i]);
    s.ab = simulate_ab_test(*policies[i], *policies[i + 1], extractor.market(), n_sessions, seed, s.from, s.to);
    s.ccr_lift = s.ab.ccr_lift;
    r.steps.push_back(std::move(s));
  }
  finish(r);
  return r;
}

CorrelationReport average_reports(std::span<const CorrelationReport> reports) {
  if (reports.empty()) throw ConfigError("no ladder reports to average");
  CorrelationReport out;
  out.variants = reports[0].variants;
  out.offline_accuracy.assign(out.variants.size(), 0.0);
  out.steps.resize(reports[0].steps.size());
  for (std::size_t i = 0; i < out.steps.size(); ++i) {
    out.steps[i].from = reports[0].steps[i].from;
    out.steps[i].to = reports[0].steps[i].to;
  }
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    if (r.variants != out.variants) throw ConfigError("cannot average ladders over different variants");
    for (std::size_t i = 0; i < r.offline_accuracy.size(); ++i) out.offline_accuracy[i] += r.offline_accuracy[i] / n;
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
      out.steps[i].offline_diff += r.steps[i].offline_diff / n;
      out.steps[i].ccr_lift += r.steps[i].ccr_lift / n;
      auto& ab = out.steps[i].ab;
      ab.control_id = r.steps[i].from;
      ab.variant_id = r.steps[i].to;
      ab.sessions_control += r.steps[i].ab.sessions_control;
      ab.sessions_variant += r.steps[i].ab.sessions_variant;
      ab.conversions_control += r.steps[i].ab.conversions_control;
      ab.conversions_variant += r.steps[i].ab.conversions_variant;
    }
  }
  for (auto& s : out.steps) {
    auto& ab = s.ab;
    ab.ccr_control = static_cast<double>(ab.conversions_control) / static_cast<double>(ab.sessions_control);
    ab.ccr_variant = static_cast<double>(ab.conversions_variant) / static_cast<double>(ab.sessions_variant);
    ab.ccr_lift = (ab.ccr_variant - ab.ccr_control) / ab.ccr_control;
    const auto t = two_proportion_z_test(ab.conversions_control, ab.sessions_control, ab.conversions_variant,
                                         ab.sessions_variant);
    ab.z = t.z;
    ab.p_value = t.p_value;
  }
  finish(out);
  return out;
}

}  // namespace red
