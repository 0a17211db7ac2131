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

#ifndef PISOC_EXPERIMENT_HPP
#define PISOC_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pisoc/config_io.hpp"
#include "pisoc/scenario.hpp"
#include "pisoc/sim_engine.hpp"

/**
 * \file
 * \brief Seed and parameter sweeps over scenarios, result tables and grouped summaries.
 */

namespace pisoc {

/// A plain text table: header plus rows of cells, read and written as comma-separated values.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::optional<std::size_t> column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      return std::nullopt;
    }
    return static_cast<std::size_t>(it - header.begin());
  }

  friend bool operator==(const Table&, const Table&) = default;
};

inline void write_csv(std::ostream& out, const Table& table) {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out << (i == 0 ? "" : ",") << cells[i];
    }
    out << '\n';
  };
  line(table.header);
  for (const auto& row : table.rows) {
    line(row);
  }
}

/// Reads a table written by write_csv (cells never contain commas or newlines).
inline Table read_csv(std::istream& in) {
  Table table;
  std::string text;
  bool first = true;
  while (std::getline(in, text)) {
    if (!text.empty() && text.back() == '\r') {
      text.pop_back();
    }
    if (text.empty()) {
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(text);
    for (std::string cell; std::getline(ss, cell, ',');) {
      cells.push_back(cell);
    }
    if (text.back() == ',') {
      cells.emplace_back();
    }
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != table.header.size()) {
        throw std::runtime_error("read_csv: row " + std::to_string(table.rows.size() + 1) + " has " +
                                 std::to_string(cells.size()) + " cells, header has " +
                                 std::to_string(table.header.size()));
      }
      table.rows.push_back(std::move(cells));
    }
  }
  if (first) {
    throw std::runtime_error("read_csv: empty table");
  }
  return table;
}

/// One episode of a suite.
struct ResultRow {
  std::size_t cell = 0;
  std::string point;  ///< sweep point label, empty for the base config
  std::uint64_t seed = 0;
  EpisodeSummary summary;
  double wall_clock_s = 0.0;
};

using ResultTable = std::vector<ResultRow>;

inline const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> columns = {
      "cell", "scenario", "controller", "point", "seed", "crashed", "aborted", "total_cost", "control_effort",
      "mean_ess", "min_ess", "failed_replans", "route", "final_target_distance", "captured", "capture_time",
      "final_mouse_distance", "radial_error", "gap_cv", "mean_speed", "rotation_consistency", "rotation_direction",
      "agents_agree", "steps", "abort_reason", "wall_clock_s"};
  return columns;
}

namespace detail {

inline std::string clean_cell(std::string text) {
  for (char& c : text) {
    if (c == ',' || c == '\n' || c == '\r') {
      c = c == ',' ? ';' : ' ';
    }
  }
  return text;
}

}  // namespace detail

/// Table form of a result table; `with_wall_clock` = false drops the only non-deterministic column.
inline Table to_table(const ResultTable& results, bool with_wall_clock = true) {
  Table table;
  table.header = result_columns();
  if (!with_wall_clock) {
    table.header.pop_back();
  }
  for (const auto& r : results) {
    const auto& s = r.summary;
    std::vector<std::string> row = {std::to_string(r.cell),
                                    s.scenario,
                                    s.controller,
                                    detail::clean_cell(r.point),
                                    std::to_string(r.seed),
                                    s.crashed ? "1" : "0",
                                    s.aborted ? "1" : "0",
                                    format_double(s.total_cost),
                                    format_double(s.control_effort),
                                    format_double(s.mean_ess),
                                    format_double(s.min_ess),
                                    std::to_string(s.failed_replans),
                                    s.route,
                                    format_double(s.final_target_distance),
                                    s.captured ? "1" : "0",
                                    format_double(s.capture_time),
                                    format_double(s.final_mouse_distance),
                                    format_double(s.formation.radial_error),
                                    format_double(s.formation.gap_cv),
                                    format_double(s.formation.mean_speed),
                                    format_double(s.formation.rotation_consistency),
                                    std::to_string(s.formation.rotation_direction),
                                    s.formation.agents_agree ? "1" : "0",
                                    std::to_string(s.steps),
                                    detail::clean_cell(s.abort_reason)};
    if (with_wall_clock) {
      row.push_back(format_double(r.wall_clock_s));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

struct SuiteOptions {
  std::size_t parallel = 1;          ///< concurrent episodes
  std::uint64_t seed_offset = 0;     ///< added to every configured seed
  std::optional<std::filesystem::path> log_dir;  ///< per-episode logs when set
};

/// One cell of the suite grid: (sweep point, controller, seed).
struct SuiteCell {
  std::size_t index = 0;
  std::size_t point = 0;
  ScenarioConfig config;
  ControllerKind controller = ControllerKind::kPi;
  std::uint64_t seed = 0;
  std::string label;
};

/// Cells in canonical order: sweep point, then controller, then seed.
inline std::vector<SuiteCell> suite_cells(const ScenarioConfig& config, std::uint64_t seed_offset = 0) {
  std::vector<SweepPoint> points = config.sweep;
  if (points.empty()) {
    points.emplace_back();
  }
  std::vector<SuiteCell> cells;
  for (std::size_t p = 0; p < points.size(); ++p) {
    ScenarioConfig point_cfg = points[p].empty() ? config : apply_sweep_point(config, points[p]);
    point_cfg.sweep.clear();
    for (const auto controller : config.controllers) {
      for (const auto seed : config.seeds) {
        cells.push_back(SuiteCell{cells.size(), p, point_cfg, controller, seed + seed_offset, point_label(points[p])});
      }
    }
  }
  return cells;
}

/// Runs every cell on a pool of `parallel` workers. Rows come back in cell order whatever the schedule;
/// an episode that throws is recorded as aborted and the suite continues.
inline ResultTable run_suite(const ScenarioConfig& config, const SuiteOptions& options = {}) {
  config.validate();
  const std::vector<SuiteCell> cells = suite_cells(config, options.seed_offset);
  ResultTable results(cells.size());
  if (options.log_dir) {
    std::filesystem::create_directories(*options.log_dir);
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
      const SuiteCell& cell = cells[i];
      const auto start = std::chrono::steady_clock::now();
      ResultRow& row = results[i];
      row.cell = cell.index;
      row.point = cell.label;
      row.seed = cell.seed;
      try {
        const EpisodeLog log = run_episode(cell.config, cell.controller, cell.seed);
        row.summary = log.summary;
        if (options.log_dir) {
          const std::string stem = "cell" + std::to_string(cell.index) + "_" + to_string(cell.config.kind) + "_" +
                                   to_string(cell.controller) + "_seed" + std::to_string(cell.seed);
          std::ofstream csv(*options.log_dir / (stem + ".csv"));
          write_episode_csv(csv, log);
          std::ofstream summary(*options.log_dir / (stem + ".summary.txt"));
          summary << "point=" << cell.label << '\n';
          write_summary(summary, log.summary);
        }
      } catch (const std::exception& e) {
        row.summary.scenario = to_string(cell.config.kind);
        row.summary.controller = to_string(cell.controller);
        row.summary.seed = cell.seed;
        row.summary.aborted = true;
        row.summary.abort_reason = e.what();
      }
      row.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.parallel, 1, std::max<std::size_t>(cells.size(), 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back(worker);
    }
  }
  return results;
}

// ---------------------------------------------------------------------------------------------------
// Summaries.

/// Columns aggregated as rates (fraction of rows equal to 1) rather than means.
inline const std::vector<std::string>& flag_columns() {
  static const std::vector<std::string> columns = {"crashed", "aborted", "captured", "agents_agree"};
  return columns;
}

/// Groups rows by `keys` and reports, per group, the row count n, `<flag>_rate` and `<flag>_count` for
/// flag columns, and `<col>_mean` / `<col>_std` (population) for every other numeric column. NaN cells
/// are skipped; `<col>_n` gives how many values entered the mean. Groups appear in first-seen order.
inline Table summarize(const Table& table, const std::vector<std::string>& keys) {
  if (table.rows.empty()) {
    throw std::invalid_argument("summarize: empty table");
  }
  std::vector<std::size_t> key_idx;
  for (const auto& k : keys) {
    const auto c = table.column(k);
    if (!c) {
      throw std::invalid_argument("summarize: unknown column '" + k + "'");
    }
    key_idx.push_back(*c);
  }
  auto parse = [](const std::string& text) -> std::optional<double> {
    if (text == "nan") {
      return kNaN;
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      return used == text.size() ? std::optional<double>(v) : std::nullopt;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  const auto& flags = flag_columns();
  std::vector<std::size_t> flag_idx;
  std::vector<std::size_t> num_idx;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const std::string& name = table.header[c];
    if (std::find(key_idx.begin(), key_idx.end(), c) != key_idx.end() || name == "cell" || name == "seed") {
      continue;
    }
    if (std::find(flags.begin(), flags.end(), name) != flags.end()) {
      flag_idx.push_back(c);
      continue;
    }
    const bool numeric = std::all_of(table.rows.begin(), table.rows.end(),
                                     [&](const auto& row) { return parse(row[c]).has_value(); });
    if (numeric) {
      num_idx.push_back(c);
    }
  }

  std::vector<std::vector<std::string>> group_keys;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::vector<std::string> key;
    for (const auto c : key_idx) {
      key.push_back(table.rows[r][c]);
    }
    const auto it = std::find(group_keys.begin(), group_keys.end(), key);
    if (it == group_keys.end()) {
      group_keys.push_back(key);
      members.push_back({r});
    } else {
      members[static_cast<std::size_t>(it - group_keys.begin())].push_back(r);
    }
  }

  Table out;
  out.header = keys;
  out.header.emplace_back("n");
  for (const auto c : flag_idx) {
    out.header.push_back(table.header[c] + "_rate");
    out.header.push_back(table.header[c] + "_count");
  }
  for (const auto c : num_idx) {
    out.header.push_back(table.header[c] + "_mean");
    out.header.push_back(table.header[c] + "_std");
    out.header.push_back(table.header[c] + "_n");
  }
  for (std::size_t g = 0; g < group_keys.size(); ++g) {
    std::vector<std::string> row = group_keys[g];
    const auto& rows = members[g];
    row.push_back(std::to_string(rows.size()));
    for (const auto c : flag_idx) {
      std::size_t count = 0;
      for (const auto r : rows) {
        count += table.rows[r][c] == "1" ? 1 : 0;
      }
      row.push_back(format_double(static_cast<double>(count) / static_cast<double>(rows.size())));
      row.push_back(std::to_string(count));
    }
    for (const auto c : num_idx) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto r : rows) {
        const double v = *parse(table.rows[r][c]);
        if (!std::isnan(v)) {
          sum += v;
          ++n;
        }
      }
      const double mean = n == 0 ? kNaN : sum / static_cast<double>(n);
      double sq = 0.0;
      for (const auto r : rows) {
        const double v = *parse(table.rows[r][c]);
        if (!std::isnan(v)) {
          sq += (v - mean) * (v - mean);
        }
      }
      row.push_back(format_double(mean));
      row.push_back(format_double(n == 0 ? kNaN : std::sqrt(sq / static_cast<double>(n))));
      row.push_back(std::to_string(n));
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace pisoc

#endif
