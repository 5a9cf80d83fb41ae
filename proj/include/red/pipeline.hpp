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


// Pipeline configuration, experiment drivers and the on-disk stages behind
// the command-line tool.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "red/boost.hpp"
#include "red/dataset.hpp"
#include "red/embedding.hpp"
#include "red/eval.hpp"
#include "red/features.hpp"
#include "red/marketplace.hpp"

namespace red {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kToolVersion = "red 1.0.0";

struct DatasetConfig {
  // Desk-scale default; the policy's own default is kDefaultExplorationRate.
  double exploration_rate = 0.25;
  std::size_t n_sessions = 100000;
  // "sampled", "carousel" or "both" (needs merge_provenance).
  std::string provenance = "sampled";
  bool merge_provenance = false;
  std::size_t carousel_sessions = 50000;
  std::size_t carousel_k = 6;
  double holdout_fraction = 0.2;
};

struct LadderRung {
  std::string id;
  // "popularity" (untrained baseline) or "model".
  std::string scorer = "model";
  std::vector<std::string> features;
};

// The four-rung ablation ladder: popularity baseline, collection and context
// features, plus user similarity, plus normalized shift orders.
std::vector<LadderRung> default_ladder();

struct EvalConfig {
  // Total over both arms.
  std::size_t ab_sessions = 200000;
  std::size_t display_k = 3;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<LadderRung> ladder = default_ladder();
};

struct PipelineConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 7;
  MarketplaceConfig marketplace;
  EmbeddingConfig embedding;
  FeatureConfig features;
  GbdtParams boost;
  // Features used by `train`; empty means the whole schema.
  std::vector<std::string> model_features;
  DatasetConfig dataset;
  EvalConfig eval;
  std::string artifact_dir = "artifacts";
};


// Throws ConfigError on unknown keys, wrong types or invalid values.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& c);
// JSON with // and /* */ comments allowed.
PipelineConfig load_config(const std::string& path);
void validate(const PipelineConfig& c);

// Marketplace, embeddings and the feature snapshot at the epoch.
struct World {
  Marketplace market;
  EmbeddingStore store;
  std::unique_ptr<FeatureExtractor> extractor;

  World() = default;
  World(Marketplace m, EmbeddingStore s, std::unique_ptr<FeatureExtractor> fx)
      : market(std::move(m)), store(std::move(s)), extractor(std::move(fx)) {}
  // The extractor points at `market`, so moves re-point it.
  World(World&& other) noexcept { *this = std::move(other); }
  World& operator=(World&& other) noexcept {
    market = std::move(other.market);
    store = std::move(other.store);
    extractor = std::move(other.extractor);
    if (extractor) extractor->rebind(market);
    return *this;
  }
};
World build_world(const PipelineConfig& c);
World build_world(const PipelineConfig& c, Marketplace market, EmbeddingStore store);

// Incumbent ranking: orders of the collection in the session's shift.
std::shared_ptr<const DisplayPolicy> popularity_policy(const FeatureExtractor& fx, std::size_t k);

// RED traffic under exploration sampling over the popularity incumbent.
std::vector<SessionEvent> simulate_exploration_traffic(const PipelineConfig& c, const World& w);
// Category carousel traffic in fixed popularity order.
std::vector<SessionEvent> simulate_carousel_traffic(const PipelineConfig& c, const World& w);

// Train and test datasets under the configured provenance. The test side is
// always exploration-sampled, and no user appears on both sides.
DatasetSplit build_datasets(const PipelineConfig& c, const World& w,
                            std::span<const SessionEvent> red_log,
                            std::span<const SessionEvent> carousel_log);

FeatureSchema model_schema(const FeatureSchema& full, std::span<const std::string> features);
GbdtModel train_model(const PipelineConfig& c, const LabeledDataset& train,
                      std::span<const std::string> features);

// One ladder run for a single seed (the whole pipeline in memory).
CorrelationReport run_ladder_seed(const PipelineConfig& c, std::uint64_t seed);

struct LadderResult {
  std::vector<CorrelationReport> per_seed;
  CorrelationReport averaged;
  nlohmann::json to_json() const;
  // Tab-separated steps of the averaged ladder, for plotting.
  std::string steps_tsv() const;
};
LadderResult run_ladder(const PipelineConfig& c);

// ---------------------------------------------------------------------------
// Stages on disk. Each stage writes a manifest next to its outputs recording
// the hash of the config subset it depends on, the hashes of its inputs and
// outputs and the tool version.

struct RunOptions {
  bool force = false;
  bool quiet = false;
  std::ostream* out = nullptr;  // human-readable summary
};

std::uint64_t stage_config_hash(const PipelineConfig& c, const std::string& stage);

void cmd_generate(const PipelineConfig& c, const RunOptions& o);
void cmd_build_dataset(const PipelineConfig& c, const RunOptions& o);
void cmd_train(const PipelineConfig& c, const RunOptions& o);
void cmd_eval(const PipelineConfig& c, const RunOptions& o);
void cmd_abtest(const PipelineConfig& c, const RunOptions& o);
void cmd_ladder(const PipelineConfig& c, const RunOptions& o);

}  // namespace red
