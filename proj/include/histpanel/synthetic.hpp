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
#include <string>
#include <vector>

#include "histpanel/panel.hpp"
#include "histpanel/quality.hpp"

namespace histpanel::synth {

/// Small portable generator: identical streams on every platform, unlike the
/// standard distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform();  // [0, 1)
  double normal();
  /// Uniform integer in [lo, hi].
  std::int64_t range(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

/// Valid 8-bit grayscale PNG with a seeded pattern.
std::string make_png(std::uint32_t width, std::uint32_t height, std::uint64_t seed);

struct CorpusOptions {
  std::uint64_t seed = 1923;
  /// Directory holding counties_MI.csv, counties_IL.csv and friends; copied
  /// into the corpus.
  std::string reference_dir;
};

struct CorpusSummary {
  std::size_t tables = 0;
  std::size_t fixtures = 0;
  std::size_t gold_cells = 0;
  std::string config_path;
};

/// Writes a runnable corpus under `dir`: config.json, corpus.json,
/// reference/, images/, fixtures/ (mock provider responses for two models
/// with injected reading errors), baseline/ (layout-parser style output with
/// split rows and merged cells), gold.csv, population.csv, state_totals.csv.
CorpusSummary write_pipeline_corpus(const std::string& dir, const CorpusOptions& options);

/// Gold-set cells for `tables` tables with independent per-cell missing and
/// incorrect rates.
std::vector<EvalCell> eval_cells(std::size_t tables, std::size_t cells_per_table, double missing_rate,
                                 double incorrect_rate, std::uint64_t seed);

struct PanelPair {
  std::vector<PanelObservation> llm;
  std::vector<PanelObservation> gold;
  PopulationTable population;
};

/// Two periods per county (1920, 1930) with log rates following
/// y_t = rho * y_{t-10} + state effect + noise. `llm` equals `gold` apart from
/// `llm_noise` extra measurement noise on y.
PanelPair persistence_dgp(std::size_t counties, std::size_t states, double rho, std::uint64_t seed,
                          double llm_noise = 0.0);

/// Counties observed annually over 1920..1930 with
/// y = beta * ln(pop) + county effect + state-year effect + noise.
PanelPair popgrowth_dgp(std::size_t counties, std::size_t states, double beta, std::uint64_t seed,
                        double llm_noise = 0.0);

}  // namespace histpanel::synth
