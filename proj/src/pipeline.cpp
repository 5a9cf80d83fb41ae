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


#include "red/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "red/binary_io.hpp"

namespace red {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<LadderRung> default_ladder() {
  using namespace feature_names;
  std::vector<std::string> context;
  for (MealShift s : kAllShifts) context.push_back(shift_one_hot(s));
  std::vector<std::string> collection = {kPopularitySim,  kIsDishCollection,   kFreeDeliveryFraction,
                                         kShiftSpecificity, kCollectionSize,   kMeanDeliveryFee,
                                         kOrderCountPopularity};
  std::vector<LadderRung> rungs;
  rungs.push_back({"popularity", "popularity", {}});
  auto v1 = collection;
  v1.insert(v1.end(), context.begin(), context.end());
  rungs.push_back({"collection_context", "model", v1});
  auto v2 = v1;
  for (const char* n : {kSimilarity1, kSimilarity2, kSimilarity3, kUserOrdersInRestaurants, kVeganMatch}) {
    v2.push_back(n);
  }
  rungs.push_back({"plus_similarity", "model", v2});
  auto v3 = v2;
  v3.push_back(kShiftOrdersPerRestaurant);
  rungs.push_back({"plus_shift_orders", "model", v3});
  return rungs;
}

// ---------------------------------------------------------------------------
// Config.

namespace {

void check_keys(const json& j, const std::string& section, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError(section + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) throw ConfigError(section + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

json ladder_json(const std::vector<LadderRung>& rungs) {
  json a = json::array();
  for (const auto& r : rungs) a.push_back({{"id", r.id}, {"scorer", r.scorer}, {"features", r.features}});
  return a;
}

}  // namespace

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  try {
    check_keys(j, "config", {"schema_version", "seed", "marketplace", "embedding", "features", "boost",
                             "model_features", "dataset", "eval", "artifact_dir"});
    if (!j.contains("schema_version")) throw ConfigError("config: schema_version is required");
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != kConfigSchemaVersion) {
      throw ConfigError("config: unsupported schema_version " + std::to_string(c.schema_version));
    }
    read_opt(j, "seed", c.seed);
    if (auto it = j.find("marketplace"); it != j.end()) c.marketplace = marketplace_config_from_json(*it);
    if (auto it = j.find("embedding"); it != j.end()) {
      check_keys(*it, "embedding", {"dim", "sigma", "recency_half_life_days"});
      read_opt(*it, "dim", c.embedding.dim);
      read_opt(*it, "sigma", c.embedding.sigma);
      read_opt(*it, "recency_half_life_days", c.embedding.recency_half_life_days);
    }
    if (auto it = j.find("features"); it != j.end()) {
      check_keys(*it, "features", {"window_days", "extensions"});
      read_opt(*it, "window_days", c.features.window_days);
      read_opt(*it, "extensions", c.features.extensions);
    }
    if (auto it = j.find("boost"); it != j.end()) {
      check_keys(*it, "boost", {"n_trees", "learning_rate", "max_leaves", "min_samples_leaf",
                                "l2_leaf_penalty", "n_bins", "seed"});
      read_opt(*it, "n_trees", c.boost.n_trees);
      read_opt(*it, "learning_rate", c.boost.learning_rate);
      read_opt(*it, "max_leaves", c.boost.max_leaves);
      read_opt(*it, "min_samples_leaf", c.boost.min_samples_leaf);
      read_opt(*it, "l2_leaf_penalty", c.boost.l2_leaf_penalty);
      read_opt(*it, "n_bins", c.boost.n_bins);
      read_opt(*it, "seed", c.boost.seed);
    }
    read_opt(j, "model_features", c.model_features);
    if (auto it = j.find("dataset"); it != j.end()) {
      check_keys(*it, "dataset", {"exploration_rate", "n_sessions", "provenance", "merge_provenance",
                                  "carousel_sessions", "carousel_k", "holdout_fraction"});
      read_opt(*it, "exploration_rate", c.dataset.exploration_rate);
      read_opt(*it, "n_sessions", c.dataset.n_sessions);
      read_opt(*it, "provenance", c.dataset.provenance);
      read_opt(*it, "merge_provenance", c.dataset.merge_provenance);
      read_opt(*it, "carousel_sessions", c.dataset.carousel_sessions);
      read_opt(*it, "carousel_k", c.dataset.carousel_k);
      read_opt(*it, "holdout_fraction", c.dataset.holdout_fraction);
    }
    if (auto it = j.find("eval"); it != j.end()) {
      check_keys(*it, "eval", {"ab_sessions", "display_k", "seeds", "ladder"});
      read_opt(*it, "ab_sessions", c.eval.ab_sessions);
      read_opt(*it, "display_k", c.eval.display_k);
      read_opt(*it, "seeds", c.eval.seeds);
      if (auto l = it->find("ladder"); l != it->end()) {
        c.eval.ladder.clear();
        for (const auto& r : *l) {
          check_keys(r, "eval.ladder[]", {"id", "scorer", "features"});
          LadderRung rung;
          rung.id = r.at("id").get<std::string>();
          read_opt(r, "scorer", rung.scorer);
          read_opt(r, "features", rung.features);
          c.eval.ladder.push_back(std::move(rung));
        }
      }
    }
    read_opt(j, "artifact_dir", c.artifact_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.eval.ladder.empty()) c.eval.ladder = default_ladder();
  validate(c);
  return c;
}

json to_json(const PipelineConfig& c) {
  return {{"schema_version", c.schema_version},
          {"seed", c.seed},
          {"marketplace", to_json(c.marketplace)},
          {"embedding",
           {{"dim", c.embedding.dim},
            {"sigma", c.embedding.sigma},
            {"recency_half_life_days", c.embedding.recency_half_life_days}}},
          {"features", {{"window_days", c.features.window_days}, {"extensions", c.features.extensions}}},
          {"boost",
           {{"n_trees", c.boost.n_trees},
            {"learning_rate", c.boost.learning_rate},
            {"max_leaves", c.boost.max_leaves},
            {"min_samples_leaf", c.boost.min_samples_leaf},
            {"l2_leaf_penalty", c.boost.l2_leaf_penalty},
            {"n_bins", c.boost.n_bins},
            {"seed", c.boost.seed}}},
          {"model_features", c.model_features},
          {"dataset",
           {{"exploration_rate", c.dataset.exploration_rate},
            {"n_sessions", c.dataset.n_sessions},
            {"provenance", c.dataset.provenance},
            {"merge_provenance", c.dataset.merge_provenance},
            {"carousel_sessions", c.dataset.carousel_sessions},
            {"carousel_k", c.dataset.carousel_k},
            {"holdout_fraction", c.dataset.holdout_fraction}}},
          {"eval",
           {{"ab_sessions", c.eval.ab_sessions},
            {"display_k", c.eval.display_k},
            {"seeds", c.eval.seeds},
            {"ladder", ladder_json(c.eval.ladder)}}},
          {"artifact_dir", c.artifact_dir}};
}

PipelineConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = io::read_file_text(path);
  } catch (const ArtifactError& e) {
    throw ConfigError(e.what());
  }
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

void validate(const PipelineConfig& c) {
  if (c.embedding.dim < 2) throw ConfigError("embedding.dim must be >= 2");
  if (!(c.embedding.sigma >= 0.0)) throw ConfigError("embedding.sigma must be >= 0");
  if (!(c.embedding.recency_half_life_days > 0.0)) {
    throw ConfigError("embedding.recency_half_life_days must be > 0");
  }
  if (!(c.features.window_days > 0.0)) throw ConfigError("features.window_days must be > 0");
  c.boost.validate();
  const auto& d = c.dataset;
  if (!(d.exploration_rate > 0.0 && d.exploration_rate <= 1.0)) {
    throw ConfigError("dataset.exploration_rate must be in (0, 1]");
  }
  if (d.n_sessions == 0) throw ConfigError("dataset.n_sessions must be >= 1");
  if (d.provenance != "sampled" && d.provenance != "carousel" && d.provenance != "both") {
    throw ConfigError("dataset.provenance must be sampled, carousel or both");
  }
  if (d.provenance == "both" && !d.merge_provenance) {
    throw ConfigError("dataset.provenance 'both' requires dataset.merge_provenance");
  }
  if (d.carousel_k < 2) throw ConfigError("dataset.carousel_k must be >= 2");
  if (!(d.holdout_fraction > 0.0 && d.holdout_fraction < 1.0)) {
    throw ConfigError("dataset.holdout_fraction must be in (0, 1)");
  }
  if (c.eval.ab_sessions < 2) throw ConfigError("eval.ab_sessions must be >= 2");
  if (c.eval.display_k < 1) throw ConfigError("eval.display_k must be >= 1");
  if (c.eval.seeds.empty()) throw ConfigError("eval.seeds must not be empty");
  if (c.eval.ladder.size() < 3) throw ConfigError("eval.ladder needs at least 3 rungs");
  const auto full = canonical_schema(c.features.extensions);
  std::set<std::string> ids;
  for (const auto& r : c.eval.ladder) {
    if (!ids.insert(r.id).second) throw ConfigError("eval.ladder: duplicate id '" + r.id + "'");
    if (r.scorer == "model") {
      if (r.features.empty()) throw ConfigError("eval.ladder: rung '" + r.id + "' lists no features");
      for (const auto& f : r.features) {
        if (!full.index_of(f)) throw ConfigError("eval.ladder: unknown feature '" + f + "'");
      }
    } else if (r.scorer != "popularity") {
      throw ConfigError("eval.ladder: scorer must be 'model' or 'popularity'");
    }
  }
  for (const auto& f : c.model_features) {
    if (!full.index_of(f)) throw ConfigError("model_features: unknown feature '" + f + "'");
  }
  if (c.artifact_dir.empty()) throw ConfigError("artifact_dir must not be empty");
}

// ---------------------------------------------------------------------------
// Experiment drivers.

World build_world(const PipelineConfig& c) {
  Marketplace market = generate_marketplace(c.marketplace, derive_seed(c.seed, "marketplace"));
  EmbeddingStore store =
      build_item_embeddings(market, c.embedding.dim, c.embedding.sigma, derive_seed(c.seed, "embedding"));
  return build_world(c, std::move(market), std::move(store));
}

World build_world(const PipelineConfig& c, Marketplace market, EmbeddingStore store) {
  World w{std::move(market), std::move(store), nullptr};
  w.extractor = std::make_unique<FeatureExtractor>(w.market, w.store, c.embedding, c.features, w.market.epoch());
  return w;
}

std::shared_ptr<const DisplayPolicy> popularity_policy(const FeatureExtractor& fx, std::size_t k) {
  auto table = std::make_shared<const ScoreTable>(build_score_table(fx, popularity_scorer(fx)));
  return std::make_shared<const RankingPolicy>(std::move(table), k);
}

std::vector<SessionEvent> simulate_exploration_traffic(const PipelineConfig& c, const World& w) {
  const ExplorationPolicy policy(c.dataset.exploration_rate, popularity_policy(*w.extractor, c.eval.display_k));
  return simulate_sessions(w.market, policy, c.dataset.n_sessions, derive_seed(c.seed, "traffic"));
}

std::vector<SessionEvent> simulate_carousel_traffic(const PipelineConfig& c, const World& w) {
  auto ids = w.market.category_ids();
  std::stable_sort(ids.begin(), ids.end(), [&](CollectionId a, CollectionId b) {
    return w.extractor->stats(a).total_orders > w.extractor->stats(b).total_orders;
  });
  const FixedOrderPolicy policy(ids, c.dataset.carousel_k);
  SimulationOptions opts;
  opts.surface = Surface::kCarousel;
  return simulate_sessions(w.market, policy, c.dataset.carousel_sessions, derive_seed(c.seed, "carousel"),
                           opts);
}

DatasetSplit build_datasets(const PipelineConfig& c, const World& w, std::span<const SessionEvent> red_log,
                            std::span<const SessionEvent> carousel_log) {
  const auto sampled = build_unbiased_dataset(red_log, *w.extractor);
  DatasetSplit split = split_dataset(sampled, c.dataset.holdout_fraction, derive_seed(c.seed, "split"));
  if (c.dataset.provenance == "sampled") return split;

  std::set<std::uint32_t> test_users;
  for (const auto& p : split.test.pairs()) test_users.insert(p.user.value);
  const auto carousel = build_carousel_dataset(carousel_log, *w.extractor, derive_seed(c.seed, "carousel-pairs"));
  std::vector<std::uint32_t> keep;
  for (std::uint32_t p = 0; p < carousel.pairs().size(); ++p) {
    if (!test_users.contains(carousel.pairs()[p].user.value)) keep.push_back(p);
  }
  auto carousel_train = carousel.select_pairs(keep);
  if (c.dataset.provenance == "carousel") {
    split.train = std::move(carousel_train);
  } else {
    split.train = merge_datasets(carousel_train, split.train, c.dataset.merge_provenance);
  }
  return split;
}

FeatureSchema model_schema(const FeatureSchema& full, std::span<const std::string> features) {
  return features.empty() ? full : full.subset(features);
}

GbdtModel train_model(const PipelineConfig& c, const LabeledDataset& train,
                      std::span<const std::string> features) {
  const auto schema = model_schema(train.schema(), features);
  const auto data = train.project(schema);
  return red::train(data.training_data(), c.boost);
}

CorrelationReport run_ladder_seed(const PipelineConfig& base, std::uint64_t seed) {
  PipelineConfig c = base;
  c.seed = seed;
  const World w = build_world(c);
  const auto red_log = simulate_exploration_traffic(c, w);
  std::vector<SessionEvent> carousel_log;
  if (c.dataset.provenance != "sampled") carousel_log = simulate_carousel_traffic(c, w);
  const auto split = build_datasets(c, w, red_log, carousel_log);

  std::vector<LadderVariant> variants;
  for (const auto& rung : c.eval.ladder) {
    if (rung.scorer == "popularity") {
      variants.push_back({rung.id, popularity_scorer(*w.extractor)});
    } else {
      auto model = std::make_shared<const GbdtModel>(train_model(c, split.train, rung.features));
      variants.push_back({rung.id, model_scorer(model, split.train.schema())});
    }
  }
  return offline_online_correlation(variants, split.test, *w.extractor, c.eval.ab_sessions,
                                    derive_seed(seed, "abtest"), c.eval.display_k);
}

json LadderResult::to_json() const {
  json seeds = json::array();
  for (const auto& r : per_seed) seeds.push_back(r.to_json());
  return {{"averaged", averaged.to_json()}, {"per_seed", seeds}};
}

std::string LadderResult::steps_tsv() const {
  std::ostringstream out;
  out << "from\tto\toffline_diff_points\tccr_lift\n";
  for (const auto& s : averaged.steps) {
    out << s.from << '\t' << s.to << '\t' << json(s.offline_diff).dump() << '\t' << json(s.ccr_lift).dump()
        << '\n';
  }
  return out.str();
}

LadderResult run_ladder(const PipelineConfig& c) {
  LadderResult r;
  for (auto s : c.eval.seeds) r.per_seed.push_back(run_ladder_seed(c, s));
  r.averaged = average_reports(r.per_seed);
  return r;
}

// ---------------------------------------------------------------------------
// Stages.

namespace {

const std::vector<std::string> kStages = {"generate", "build-dataset", "train", "eval", "abtest", "ladder"};

std::size_t stage_rank(const std::string& stage) {
  for (std::size_t i = 0; i < kStages.size(); ++i) {
    if (kStages[i] == stage) return i;
  }
  throw ConfigError("unknown stage '" + stage + "'");
}

json stage_subset(const PipelineConfig& c, const std::string& stage) {
  const json full = to_json(c);
  json j;
  j["schema_version"] = full["schema_version"];
  j["seed"] = full["seed"];
  if (stage == "ladder") {
    json all = full;
    all.erase("artifact_dir");
    return all;
  }
  const auto rank = stage_rank(stage);
  j["marketplace"] = full["marketplace"];
  j["embedding"] = full["embedding"];
  j["traffic"] = {{"exploration_rate", c.dataset.exploration_rate},
                  {"n_sessions", c.dataset.n_sessions},
                  {"provenance", c.dataset.provenance},
                  {"carousel_sessions", c.dataset.carousel_sessions},
                  {"carousel_k", c.dataset.carousel_k},
                  {"display_k", c.eval.display_k}};
  if (rank >= 1) {
    j["features"] = full["features"];
    j["dataset"] = full["dataset"];
  }
  if (rank >= 2) {
    j["boost"] = full["boost"];
    j["model_features"] = full["model_features"];
  }
  if (rank >= 4) j["ab_sessions"] = c.eval.ab_sessions;
  return j;
}

std::string file_hash(const fs::path& p) { return hex64(fnv1a(io::read_file_text(p.string()))); }

fs::path manifest_path(const PipelineConfig& c, const std::string& stage) {
  return fs::path(c.artifact_dir) / (stage + ".manifest.json");
}

void write_manifest(const PipelineConfig& c, const std::string& stage, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  const fs::path dir(c.artifact_dir);
  json in = json::object();
  for (const auto& f : inputs) in[f] = file_hash(dir / f);
  json out = json::object();
  for (const auto& f : outputs) out[f] = file_hash(dir / f);
  const json m = {{"stage", stage},
                  {"tool_version", kToolVersion},
                  {"config_hash", hex64(stage_config_hash(c, stage))},
                  {"config", stage_subset(c, stage)},
                  {"inputs", in},
                  {"outputs", out}};
  io::write_file_text(manifest_path(c, stage).string(), m.dump(2) + "\n");
}

std::optional<json> read_manifest(const PipelineConfig& c, const std::string& stage) {
  const auto p = manifest_path(c, stage);
  if (!fs::exists(p)) return std::nullopt;
  try {
    return json::parse(io::read_file_text(p.string()));
  } catch (const json::exception&) {
    throw ArtifactError("manifest '" + p.string() + "' is unreadable; re-run `red " + stage + "`");
  }
}

// Upstream outputs must exist, come from the same config and be unmodified.
std::vector<std::string> require_upstream(const PipelineConfig& c, const std::string& stage,
                                          const RunOptions& o) {
  const auto m = read_manifest(c, stage);
  if (!m) {
    throw ArtifactError("missing artifacts from `red " + stage + "` in '" + c.artifact_dir + "'; run `red " +
                        stage + " --config <file>` first");
  }
  if (!o.force && m->value("config_hash", "") != hex64(stage_config_hash(c, stage))) {
    throw ArtifactError("artifacts from `red " + stage +
                        "` were produced with a different config; re-run `red " + stage +
                        "` or pass --force");
  }
  std::vector<std::string> files;
  for (const auto& [f, h] : m->at("outputs").items()) {
    const auto p = fs::path(c.artifact_dir) / f;
    if (!fs::exists(p)) {
      throw ArtifactError("artifact '" + p.string() + "' is missing; re-run `red " + stage + "`");
    }
    if (!o.force && file_hash(p) != h.get<std::string>()) {
      throw ArtifactError("artifact '" + p.string() + "' changed after `red " + stage + "` wrote it; re-run `red " +
                          stage + "` or pass --force");
    }
    files.push_back(f);
  }
  return files;
}

void check_own(const PipelineConfig& c, const std::string& stage, const RunOptions& o) {
  fs::create_directories(c.artifact_dir);
  if (o.force) return;
  const auto m = read_manifest(c, stage);
  if (m && m->value("config_hash", "") != hex64(stage_config_hash(c, stage))) {
    throw ArtifactError("existing `red " + stage + "` artifacts in '" + c.artifact_dir +
                        "' were produced with a different config; pass --force to overwrite");
  }
}

std::ostream* sink(const RunOptions& o) { return o.quiet ? nullptr : o.out; }

void say(const RunOptions& o, const std::string& line) {
  if (auto* s = sink(o)) *s << line << '\n';
}

std::string path_in(const PipelineConfig& c, const std::string& f) {
  return (fs::path(c.artifact_dir) / f).string();
}

std::vector<SessionEvent> read_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open '" + path + "' for reading");
  return read_session_log(in);
}

void write_log(const std::string& path, std::span<const SessionEvent> events) {
  std::ostringstream out;
  write_session_log(out, events);
  io::write_file_text(path, out.str());
}

World load_world(const PipelineConfig& c) {
  auto market = parse_marketplace(io::read_file_text(path_in(c, "marketplace.json")));
  auto store = load_embeddings(path_in(c, "embeddings.bin"));
  return build_world(c, std::move(market), std::move(store));
}

const std::vector<std::string> kDatasetFiles = {"schema.tsv", "features.tsv", "pairs.tsv"};

std::vector<std::string> dataset_files(const std::string& side) {
  std::vector<std::string> out;
  for (const auto& f : kDatasetFiles) out.push_back("dataset/" + side + "/" + f);
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::shared_ptr<const GbdtModel> load_stage_model(const PipelineConfig& c) {
  return std::make_shared<const GbdtModel>(load_model(path_in(c, "model.bin")));
}

}  // namespace

std::uint64_t stage_config_hash(const PipelineConfig& c, const std::string& stage) {
  return fnv1a(stage_subset(c, stage).dump());
}

void cmd_generate(const PipelineConfig& c, const RunOptions& o) {
  validate(c);
  check_own(c, "generate", o);
  const World w = build_world(c);
  io::write_file_text(path_in(c, "marketplace.json"), serialize_marketplace(w.market));
  save_embeddings(w.store, path_in(c, "embeddings.bin"));
  const auto red_log = simulate_exploration_traffic(c, w);
  write_log(path_in(c, "sessions.ndjson"), red_log);
  std::vector<std::string> outputs = {"marketplace.json", "embeddings.bin", "sessions.ndjson"};
  if (c.dataset.provenance != "sampled") {
    write_log(path_in(c, "carousel.ndjson"), simulate_carousel_traffic(c, w));
    outputs.push_back("carousel.ndjson");
  }
  write_manifest(c, "generate", {}, outputs);
  std::size_t flagged = 0;
  for (const auto& e : red_log) flagged += e.exploration ? 1 : 0;
  say(o, "generate: " + std::to_string(w.market.users.size()) + " users, " +
             std::to_string(w.market.collections.size()) + " collections, " + std::to_string(red_log.size()) +
             " sessions (" + std::to_string(flagged) + " exploration)");
}

void cmd_build_dataset(const PipelineConfig& c, const RunOptions& o) {
  validate(c);
  const auto inputs = require_upstream(c, "generate", o);
  check_own(c, "build-dataset", o);
  const World w = load_world(c);
  const auto red_log = read_log(path_in(c, "sessions.ndjson"));
  std::vector<SessionEvent> carousel_log;
  if (c.dataset.provenance != "sampled") carousel_log = read_log(path_in(c, "carousel.ndjson"));
  const auto split = build_datasets(c, w, red_log, carousel_log);
  write_dataset(split.train, path_in(c, "dataset/train"));
  write_dataset(split.test, path_in(c, "dataset/test"));
  auto outputs = dataset_files("train");
  const auto test_files = dataset_files("test");
  outputs.insert(outputs.end(), test_files.begin(), test_files.end());
  write_manifest(c, "build-dataset", inputs, outputs);
  say(o, "build-dataset: " + std::to_string(split.train.pairs().size()) + " train pairs, " +
             std::to_string(split.test.pairs().size()) + " test pairs");
}

void cmd_train(const PipelineConfig& c, const RunOptions& o) {
  validate(c);
  const auto inputs = require_upstream(c, "build-dataset", o);
  check_own(c, "train", o);
  const auto train = read_dataset(path_in(c, "dataset/train"));
  const auto model = train_model(c, train, c.model_features);
  save_model(model, path_in(c, "model.bin"));
  json importance = json::object();
  for (const auto& [name, imp] : feature_importance(model)) {
    importance[name] = {{"split_count", imp.split_count}, {"total_gain", imp.total_gain}};
  }
  io::write_file_text(path_in(c, "importance.json"), importance.dump(2) + "\n");
  write_manifest(c, "train", inputs, {"model.bin", "importance.json"});
  say(o, "train: " + std::to_string(model.trees().size()) + " trees on " + std::to_string(train.rows()) +
             " rows, " + std::to_string(model.schema().size()) + " features");
}

void cmd_eval(const PipelineConfig& c, const RunOptions& o) {
  validate(c);
  auto inputs = require_upstream(c, "train", o);
  const auto data_inputs = require_upstream(c, "build-dataset", o);
  const auto world_inputs = require_upstream(c, "generate", o);
  check_own(c, "eval", o);
  const auto model = load_stage_model(c);
  const auto test = read_dataset(path_in(c, "dataset/test"));
  const World w = load_world(c);
  const auto report = pairwise_accuracy(*model, test, "model");
  const auto baseline = pairwise_accuracy(test, popularity_scorer(*w.extractor), "popularity");
  const json j = {{"model", report.to_json()}, {"popularity_baseline", baseline.to_json()}};
  io::write_file_text(path_in(c, "eval_report.json"), j.dump(2) + "\n");
  inputs.push_back("dataset/test/features.tsv");
  write_manifest(c, "eval", inputs, {"eval_report.json"});
  say(o, "pairwise accuracy: " + fmt(report.pairwise_accuracy) + " over " + std::to_string(report.n_pairs) +
             " pairs (popularity baseline " + fmt(baseline.pairwise_accuracy) + ")");
}

void cmd_abtest(const PipelineConfig& c, const RunOptions& o) {
  validate(c);
  auto inputs = require_upstream(c, "train", o);
  require_upstream(c, "generate", o);
  check_own(c, "abtest", o);
  const auto model = load_stage_model(c);
  const World w = load_world(c);
  const auto table =
      std::make_shared<const ScoreTable>(build_score_table(*w.extractor, model_scorer(model, w.extractor->schema())));
  const RankingPolicy variant(table, c.eval.display_k);
  const auto control = popularity_policy(*w.extractor, c.eval.display_k);
  const auto report = simulate_ab_test(*control, variant, w.market, c.eval.ab_sessions,
                                       derive_seed(c.seed, "abtest"), "popularity", "model");
  io::write_file_text(path_in(c, "abtest_report.json"), report.to_json().dump(2) + "\n");
  write_manifest(c, "abtest", inputs, {"abtest_report.json"});
  say(o, "abtest: CCR " + fmt(report.ccr_control) + " -> " + fmt(report.ccr_variant) + ", lift " +
             fmt(100.0 * report.ccr_lift) + "%, z " + fmt(report.z) + ", p " + fmt(report.p_value));
}

void cmd_ladder(const PipelineConfig& c, const RunOptions& o) {
  validate(c);
  check_own(c, "ladder", o);
  const auto result = run_ladder(c);
  io::write_file_text(path_in(c, "ladder_report.json"), result.to_json().dump(2) + "\n");
  io::write_file_text(path_in(c, "ladder_steps.tsv"), result.steps_tsv());
  write_manifest(c, "ladder", {}, {"ladder_report.json", "ladder_steps.tsv"});
  if (!sink(o)) return;
  auto& out = *o.out;
  const auto& a = result.averaged;
  out << "variant                  offline accuracy\n";
  for (std::size_t i = 0; i < a.variants.size(); ++i) {
    out << "  " << a.variants[i] << std::string(a.variants[i].size() < 23 ? 23 - a.variants[i].size() : 1, ' ')
        << fmt(a.offline_accuracy[i]) << '\n';
  }
  out << "step                                      offline diff (pts)  CCR lift (%)\n";
  for (const auto& s : a.steps) {
    const std::string name = s.from + " -> " + s.to;
    out << "  " << name << std::string(name.size() < 40 ? 40 - name.size() : 1, ' ') << fmt(s.offline_diff)
        << "              " << fmt(100.0 * s.ccr_lift) << '\n';
  }
  out << "rank correlation: " << fmt(a.rank_correlation) << ", signs agree: " << (a.signs_agree() ? "yes" : "no")
      << '\n';
}

}  // namespace red
