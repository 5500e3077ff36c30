/*
 * Copyright 2026 The histpanel Authors.
 *
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

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "histpanel/econ.hpp"
#include "histpanel/extraction.hpp"
#include "histpanel/harmonize.hpp"
#include "histpanel/panel.hpp"
#include "histpanel/quality.hpp"

namespace histpanel {

struct ProviderSettings {
  std::string kind = "mock";  // "mock" or "http"
  std::string fixtures;       // mock: fixture root
  std::string endpoint;       // http: wire-contract endpoint
  std::vector<std::string> models;
  PriceTable prices;
  bool batch = false;
  RetryPolicy retry;
  double rate_per_second = 0.0;  // 0: unlimited
  double burst = 1.0;
  std::size_t concurrency = 4;
  std::string cache_dir;  // default: <output_dir>/cache
  bool use_cache = true;
};

struct RegressSettings {
  std::vector<int> persistence_end_years;
  std::vector<int> popgrowth_decades;
  FieldCategory field = FieldCategory::total_vehicles;
};

/// Everything a run depends on. Relative paths resolve against the directory
/// of the config file.
struct RunConfig {
  std::string base_dir = ".";
  std::string corpus;
  std::string reference_dir;
  std::string population;
  std::string state_totals;
  std::string gold;         // optional
  std::string corrections;  // default: <output_dir>/corrections.jsonl
  ProviderSettings provider;
  OutlierThresholds thresholds;
  double fuzzy_threshold = kDefaultFuzzyThreshold;
  ConvergenceConfig convergence;
  EvalOptions evaluation;
  RegressSettings regress;
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  bool record_timing = false;

  static RunConfig load(const std::string& path);
  static RunConfig from_json(const nlohmann::json& j, const std::string& base_dir);
  nlohmann::ordered_json to_json() const;
  /// sha256 of the canonical JSON serialization.
  std::string hash() const;
  std::string resolve(const std::string& path) const;
  std::string output_path(const std::string& relative) const;
  /// Fail-fast checks run before any stage. Throws ConfigError.
  void validate() const;
};

struct CorpusEntry {
  TableProvenance provenance;  // model_id empty
  std::string image;           // resolved path
  std::string media_type = "image/png";
  std::string baseline;        // resolved path, optional
  std::string continues;       // table id of the previous page, optional
};

std::vector<CorpusEntry> load_corpus(const std::string& path, const std::string& base_dir);

enum class Stage { extract, validate, harmonize, assemble, outliers, evaluate, converge, regress, report };
std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);
/// The stage whose artifacts `stage` reads, if any.
std::optional<Stage> prerequisite(Stage stage);

/// Counters that are not artifacts: they change between a cold and a warm
/// run and therefore stay out of the run directory.
struct RunStats {
  std::size_t provider_calls = 0;
  std::size_t cache_hits = 0;
  std::vector<Stage> stages_run;
};

/// One correction from the review log.
struct Correction {
  std::string table_id;
  std::string county_id;
  int year = 0;
  FieldCategory field = FieldCategory::other;
  std::optional<double> value;
};

/// Reads an append-only correction log (one JSON object per line). Missing
/// file: no corrections.
std::vector<Correction> load_corrections(const std::string& path);
/// Replays corrections over extracted tables: later entries win.
void apply_corrections(std::vector<AlignedTable>& tables, const std::vector<Correction>& corrections);
/// Gold cells as shown to reviewers: the gold file overridden by corrections.
std::vector<GoldCell> apply_corrections(std::vector<GoldCell> gold, const std::vector<Correction>& corrections);

nlohmann::ordered_json aligned_table_to_json(const AlignedTable& table);
AlignedTable aligned_table_from_json(const nlohmann::json& j);
nlohmann::ordered_json observation_to_json(const PanelObservation& obs);
PanelObservation observation_from_json(const nlohmann::json& j);
nlohmann::ordered_json flag_to_json(const OutlierFlag& flag);

/// Runs stages against a run directory. Each stage reads its inputs from the
/// artifacts of earlier stages, so stages can be invoked one at a time.
class Pipeline {
 public:
  /// `provider` overrides the configured provider (tests, embedding).
  explicit Pipeline(RunConfig config, std::shared_ptr<Provider> provider = nullptr);

  /// Throws StageOrderError when a prerequisite's artifacts are missing.
  void run_stage(Stage stage);
  /// extract through report; evaluate/converge/regress run when gold data
  /// is configured.
  void run_all();

  const RunConfig& config() const { return config_; }
  const RunStats& stats() const { return stats_; }
  /// Current manifest as written to <output_dir>/manifest.json.
  nlohmann::ordered_json manifest() const;

  // Artifact readers shared with the review server.
  std::vector<AlignedTable> load_aligned(const std::string& source = "ensemble") const;
  std::vector<PanelObservation> load_observations(const std::string& name) const;
  std::vector<GoldCell> load_gold_cells() const;
  const ReferenceData& references() const;
  const std::vector<CorpusEntry>& corpus() const;

  static std::string artifact(Stage stage);

 private:
  void require(Stage stage) const;
  void write_json(const std::string& relative, nlohmann::ordered_json body) const;
  void write_text(const std::string& relative, const std::string& body) const;
  void record_stage(Stage stage, nlohmann::ordered_json counts);
  void load_manifest();
  void save_manifest() const;

  void extract();
  void validate();
  void harmonize();
  void assemble();
  void outliers();
  void evaluate();
  void converge();
  void regress();
  void report();

  Provider& provider();

  RunConfig config_;
  std::string hash_;
  std::shared_ptr<Provider> provider_;
  mutable std::optional<ReferenceData> refs_;
  mutable std::optional<std::vector<CorpusEntry>> corpus_;
  nlohmann::ordered_json manifest_;
  RunStats stats_;
};

/// Starts the local HTTP API on host:port, blocking until stopped. The
/// server also answers POST /v1/extract from the configured mock fixtures.
class ReviewServer {
 public:
  ReviewServer(RunConfig config);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds and serves; returns when stop() is called.
  void listen(const std::string& host, int port);
  /// Binds to a free port and serves on a background thread; returns the port.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace histpanel
