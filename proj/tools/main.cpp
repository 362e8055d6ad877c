// Copyright 2026 The S2CP Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// s2cp <command> [--config PATH] [flags] [key=value ...]
//
// Settings resolve as defaults, then the config file, then key=value
// arguments, then flags.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace s2cp::cli;

  CLI::App app{"S2CP cross-domain infrared small target detection"};
  app.require_subcommand(1);

  struct Args {
    std::string config;
    std::string out;
    std::vector<std::string> overrides;
    bool no_prm = false, no_oam = false, no_ssr = false;
  };
  Args args;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "generate synthetic domain datasets"},
      {"train", "train a model on source-domain manifests"},
      {"eval", "evaluate a checkpoint on a held-out domain"},
      {"spectra", "radial magnitude and phase-congruency profiles"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", args.config, "key=value config file");
    sub->add_option("--out", args.out, "output directory (out_dir, or data_dir for gen-data)");
    sub->add_option("overrides", args.overrides, "key=value settings");
    if (name == "train" || name == "eval") {
      sub->add_flag("--no-prm", args.no_prm, "disable phase rectification");
      sub->add_flag("--no-oam", args.no_oam, "disable orthogonal attention");
      sub->add_flag("--no-ssr", args.no_ssr, "disable selective style recomposition");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunConfig cfg;
  try {
    if (!args.config.empty()) cfg.apply_file(args.config);
    for (const auto& o : args.overrides) cfg.apply_override(o);
    if (!args.out.empty()) cfg.set(command == "gen-data" ? "data_dir" : "out_dir", args.out);
    if (args.no_prm) cfg.set("prm", "false");
    if (args.no_oam) cfg.set("oam", "false");
    if (args.no_ssr) cfg.set("ssr", "false");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return run_command(command, cfg, std::cout, std::cerr);
}
