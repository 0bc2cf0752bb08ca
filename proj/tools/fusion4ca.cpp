// Copyright 2026 The Fusion4CA Authors
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

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "fusion4ca/cli/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fusion4ca: camera/LiDAR BEV fusion with cross-modal alignment"};
  app.require_subcommand(1, 1);
  std::string config;
  std::vector<std::string> overrides;
  for (const auto& name : fusion4ca::cli::commands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "key = value config file")->required();
    sub->add_option("--set", overrides, "override one key (key=value), repeatable")->allow_extra_args(false);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fusion4ca::cli::kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  return fusion4ca::cli::run(command, config, overrides, std::cout, std::cerr);
}
