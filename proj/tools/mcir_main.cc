// Copyright 2026 The MCIR Authors.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// mcir: command-line front end for the masked-tuning pipeline.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
// divergence, 1 anything else.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "mcir/commands.h"
#include "mcir/config.h"
#include "mcir/errors.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitOther = 1;

struct Options {
  std::string config;
  std::string out;
  std::string mode = "masked_tuned";
  std::string ratios = "0.25,0.5,0.75";
  std::optional<std::uint64_t> seed_override;
  std::string file;
};

std::string OutDir(const Options& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("MCIR_OUT_DIR"); env && *env) return env;
  return ".";
}

int Run(const std::string& verb, const Options& o) {
  mcir::RunConfig config = mcir::RunConfig::Load(o.config);
  if (o.seed_override) config.OverrideSeed(*o.seed_override);
  const mcir::Pipeline pipe(config, OutDir(o));

  if (verb == "gen-data") {
    pipe.GenData();
    std::cout << "wrote dataset to " << pipe.Resolve(config.paths.data_dir).string()
              << "\n";
  } else if (verb == "train") {
    const mcir::TrainResult r = pipe.Train();
    const double last = r.log.steps.empty() ? 0.0 : r.log.steps.back().loss;
    std::cout << "trained " << r.steps << " steps, final loss " << last
              << "\nwrote " << pipe.Resolve(config.paths.checkpoint).string()
              << "\n";
    for (const std::string& w : r.log.warnings) std::cout << "warning: " << w << "\n";
  } else if (verb == "train-combiner") {
    const mcir::Pipeline::CombinerOutcome r = pipe.TrainCombinerCmd();
    std::cout << r.combiner_heldout.Table("heldout combiner") << "\n"
              << r.additive_heldout.Table("heldout additive") << "\nwrote "
              << pipe.Resolve(config.paths.combiner_checkpoint).string() << "\n";
  } else if (verb == "build-index") {
    const mcir::GalleryIndex index = pipe.BuildIndexCmd();
    std::cout << "indexed " << index.size() << " images into "
              << pipe.Resolve(config.paths.index).string() << "\n";
  } else if (verb == "eval") {
    const mcir::EvalMode mode = mcir::ParseEvalMode(o.mode);
    std::cout << pipe.Eval(mode).Table("eval " + mcir::EvalModeName(mode));
  } else if (verb == "ablate") {
    std::cout << mcir::AblationTable(pipe.Ablate(mcir::ParseRatios(o.ratios)));
  } else if (verb == "inspect-checkpoint") {
    const std::string path = o.file.empty()
                                 ? pipe.Resolve(config.paths.checkpoint).string()
                                 : o.file;
    std::cout << mcir::InspectContainer(path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-tuning composed image retrieval pipeline"};
  app.require_subcommand(1);
  Options o;
  const char* verbs[] = {"gen-data",    "train", "train-combiner",
                         "build-index", "eval",  "ablate",
                         "inspect-checkpoint"};
  for (const char* verb : verbs) {
    CLI::App* sub = app.add_subcommand(verb);
    sub->add_option("--config", o.config, "Run config file")->required();
    sub->add_option("--out", o.out,
                    "Output directory (default: $MCIR_OUT_DIR or .)");
    sub->add_option("--seed-override", o.seed_override,
                    "Reseed training, masking and init");
    if (std::string(verb) == "eval") {
      sub->add_option("--mode", o.mode,
                      "masked_tuned, image_only, text_only, "
                      "additive_baseline or combiner");
    }
    if (std::string(verb) == "ablate") {
      sub->add_option("--ratios", o.ratios, "Comma-separated mask ratios");
    }
    if (std::string(verb) == "inspect-checkpoint") {
      sub->add_option("file", o.file, "Container file (default: checkpoint)");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    return Run(verb, o);
  } catch (const mcir::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mcir::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const mcir::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const mcir::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitData;
  } catch (const mcir::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
}
