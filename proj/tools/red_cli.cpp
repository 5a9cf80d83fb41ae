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


// red: command-line driver for the collection recommender pipeline.
//
// Exit codes: 0 success, 2 configuration error, 3 missing or stale artifact,
// 4 runtime failure.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "red/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitArtifact = 3;
constexpr int kExitRuntime = 4;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::string out;
  bool quiet = false;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Pipeline config (JSON, comments allowed)")->required();
  cmd->add_option("--seed", f.seed, "Override the config seed");
  cmd->add_flag("--force", f.force, "Overwrite artifacts produced with a different config");
  cmd->add_option("--out", f.out, "Override the artifact directory");
  cmd->add_flag("--quiet", f.quiet, "Suppress the summary output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curated collection recommender pipeline"};
  app.set_version_flag("--version", red::kToolVersion);
  app.require_subcommand(1);
  Flags flags;

  using Command = void (*)(const red::PipelineConfig&, const red::RunOptions&);
  struct Entry {
    const char* name;
    const char* help;
    Command run;
  };
  const Entry entries[] = {
      {"generate", "Generate the marketplace, embeddings and session logs", red::cmd_generate},
      {"build-dataset", "Build the train/test pair datasets from the logs", red::cmd_build_dataset},
      {"train", "Train the scoring model", red::cmd_train},
      {"eval", "Pairwise accuracy of the trained model on the test pairs", red::cmd_eval},
      {"abtest", "Simulated A/B test of the model against the popularity ranking", red::cmd_abtest},
      {"ladder", "Full ablation ladder: offline accuracy vs simulated CCR lift", red::cmd_ladder},
  };
  Command selected = nullptr;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    add_flags(sub, flags);
    sub->callback([&selected, run = e.run] { selected = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    auto config = red::load_config(flags.config);
    if (flags.seed) config.seed = *flags.seed;
    if (!flags.out.empty()) config.artifact_dir = flags.out;
    red::RunOptions options;
    options.force = flags.force;
    options.quiet = flags.quiet;
    options.out = &std::cout;
    selected(config, options);
  } catch (const red::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const red::ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << '\n';
    return kExitArtifact;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
