// Copyright 2026 The pisoc Authors
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

// pisoc: run scenario suites, validate scenario files and summarize result tables.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "pisoc/config_io.hpp"
#include "pisoc/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAborted = 1;
constexpr int kExitConfig = 2;

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < length; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

int cmd_validate(const std::string& path) {
  const auto cfg = pisoc::load_scenario(path);
  const auto cells = pisoc::suite_cells(cfg);
  std::cout << path << ": ok (" << pisoc::to_string(cfg.kind) << ", " << cells.size() << " episodes)\n";
  return kExitOk;
}

int cmd_run(const std::string& path, const std::filesystem::path& out_dir, std::size_t parallel,
            std::uint64_t seed_offset, bool logs) {
  const std::string text = pisoc::read_text_file(path);
  const auto cfg = pisoc::parse_config(text);
  std::filesystem::create_directories(out_dir);

  pisoc::SuiteOptions options;
  options.parallel = parallel;
  options.seed_offset = seed_offset;
  if (logs) {
    options.log_dir = out_dir / "logs";
  }
  const auto results = pisoc::run_suite(cfg, options);

  {
    std::ofstream table(out_dir / "results.csv");
    pisoc::write_csv(table, pisoc::to_table(results));
  }
  {
    std::ofstream resolved(out_dir / "config.yaml");
    resolved << pisoc::serialize_config(cfg);
  }
  const auto aborted = static_cast<std::size_t>(
      std::count_if(results.begin(), results.end(), [](const auto& r) { return r.summary.aborted; }));
  nlohmann::json manifest = {
      {"tool", "pisoc"},
      {"version", PISOC_VERSION},
      {"config_path", path},
      {"config_sha256", sha256_hex(text)},
      {"scenario", pisoc::to_string(cfg.kind)},
      {"episodes", results.size()},
      {"aborted", aborted},
      {"parallel", parallel},
      {"seed_offset", seed_offset},
  };
  std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << '\n';

  std::cout << "wrote " << results.size() << " rows to " << (out_dir / "results.csv").string();
  if (aborted > 0) {
    std::cout << " (" << aborted << " aborted)";
  }
  std::cout << '\n';
  return aborted > 0 ? kExitAborted : kExitOk;
}

int cmd_summarize(const std::string& path, const std::string& keys) {
  std::ifstream in(path);
  if (!in) {
    throw pisoc::ConfigError("", "cannot read " + path);
  }
  std::vector<std::string> columns;
  std::stringstream ss(keys);
  for (std::string key; std::getline(ss, key, ',');) {
    if (!key.empty()) {
      columns.push_back(key);
    }
  }
  pisoc::write_csv(std::cout, pisoc::summarize(pisoc::read_csv(in), columns));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Path-integral and iLQG multi-agent control experiments"};
  app.set_version_flag("--version", std::string(PISOC_VERSION));
  app.require_subcommand(1);

  std::string config;
  std::string out_dir = "results";
  std::size_t parallel = 1;
  std::uint64_t seed_offset = 0;
  bool no_logs = false;
  auto* run = app.add_subcommand("run", "Run every episode of a scenario file");
  run->add_option("config", config, "Scenario file (YAML)")->required();
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--parallel", parallel, "Concurrent episodes")->check(CLI::PositiveNumber)->capture_default_str();
  run->add_option("--seed-offset", seed_offset, "Added to every configured seed")->capture_default_str();
  run->add_flag("--no-logs", no_logs, "Skip per-episode logs");

  std::string table;
  std::string keys;
  auto* summarize = app.add_subcommand("summarize", "Group a result table and aggregate its columns");
  summarize->add_option("table", table, "Result table (CSV)")->required();
  summarize->add_option("--by", keys, "Comma-separated group columns")->required();

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a scenario file without running it");
  validate->add_option("config", validate_path, "Scenario file (YAML)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      return cmd_run(config, out_dir, parallel, seed_offset, !no_logs);
    }
    if (*summarize) {
      return cmd_summarize(table, keys);
    }
    return cmd_validate(validate_path);
  } catch (const pisoc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}
