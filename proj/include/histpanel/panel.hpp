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

#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "histpanel/harmonize.hpp"
#include "histpanel/types.hpp"

namespace histpanel {

/// Vintage id from the state and the ordered harmonized category list of a
/// table's columns.
std::string assign_vintage(const std::string& state, const std::vector<FieldCategory>& columns);

/// Turns a structurally valid raw table into canonical rows. For
/// county-sorted tables the first column names counties and the year comes
/// from provenance; for year-sorted tables the county is the provenance
/// entity (resolved through `county_map`) and the first column holds years.
/// Throws AlignmentEmpty when no row maps to a county.
AlignedTable align_table(const RawTable& raw, const FieldMapping& field_map,
                         const CountyMapping& county_map, Layout layout);

struct DerivedTotal {
  std::optional<double> value;
  bool anomaly = false;  // derived total came out negative; value withheld
};

/// Direct Total Vehicles wins; otherwise Automobiles + Trucks, less Trailers
/// when present.
DerivedTotal derive_total_vehicles(const std::map<FieldCategory, std::optional<double>>& row);
DerivedTotal derive_total_vehicles(const AlignedRow& row);

struct PanelObservation {
  std::string county_id;
  std::string state;
  int year = 0;
  FieldCategory field = FieldCategory::other;
  double value = 0.0;
  TableProvenance provenance;
  std::set<std::string> model_support;
  bool models_agree = false;
  bool gold_available = false;
  bool derived = false;
  std::optional<double> per_capita;
  std::optional<double> log_per_capita;
  std::vector<std::string> flags;

  /// (county_id, year, field): the duplicate-resolution key.
  std::tuple<std::string, int, FieldCategory> key() const { return {county_id, year, field}; }
};

/// Canonical output order: state, county id, year, field, then source.
bool canonical_less(const PanelObservation& a, const PanelObservation& b);

class PopulationSeries {
 public:
  PopulationSeries() = default;
  PopulationSeries(std::string county_id, std::map<int, double> decennial);

  const std::string& county_id() const { return county_id_; }
  const std::map<int, double>& decennial() const { return decennial_; }
  /// Linear between bracketing census years, exact at census years; no
  /// extrapolation outside the covered range.
  std::optional<double> interpolated(int year) const;

 private:
  std::string county_id_;
  std::map<int, double> decennial_;
};

using PopulationTable = std::map<std::string, PopulationSeries>;
/// (state, year) -> total registrations from an external reference.
using StateTotals = std::map<std::pair<std::string, int>, double>;

/// CSV columns: county_id,year,population
PopulationTable load_population(const std::string& csv_path);
/// CSV columns: state,year,total
StateTotals load_state_totals(const std::string& csv_path);

struct TableSummary {
  std::string state;
  int year = 0;
  bool covers_state = false;
  std::optional<double> total_vehicles_sum;
};

/// Everything the duplicate rules consult besides the readings themselves.
struct DedupContext {
  std::map<std::string, std::size_t> vintage_documents;
  std::map<std::string, TableSummary> tables;  // by table_id
  StateTotals state_totals;
  PopulationTable population;
  std::map<std::pair<std::string, int>, double> state_population;

  std::optional<double> state_per_capita(const std::string& state, int year) const;
  std::optional<double> county_population(const std::string& county_id, int year) const;
};

DedupContext build_dedup_context(const std::vector<AlignedTable>& tables, const ReferenceData& refs,
                                 const StateTotals& totals, const PopulationTable& population);

inline constexpr int kDedupRuleCount = 8;

struct Resolution {
  std::size_t index = 0;  // into the input readings
  int deciding_rule = 0;  // rule that left a single survivor (0 for a singleton)
  std::vector<int> skipped_rules;
};

/// Applies the eight selection rules in order. Each rule narrows the
/// survivors to its preferred subset; a rule that would keep nobody, or has
/// nothing to compare, is skipped. Rule 8 keeps the lowest ingestion number.
Resolution resolve_duplicates(const std::vector<PanelObservation>& readings,
                              const DedupContext& context);

inline constexpr double kInfeasibleRate = 2.0;

struct JoinResult {
  std::vector<PanelObservation> joined;
  std::vector<PanelObservation> excluded;  // no population coverage
};

/// Adds per-capita and log per-capita rates. Observations without
/// population coverage are flagged "no_population" and moved to `excluded`.
JoinResult join_population(std::vector<PanelObservation> panel, const PopulationTable& population);

/// Gold cells known for a table: (table_id, county_id, year, field).
using GoldKeySet = std::set<std::tuple<std::string, std::string, int, FieldCategory>>;

/// One observation per non-missing aligned cell, plus a derived Total
/// Vehicles observation wherever a row has no direct total.
std::vector<PanelObservation> panel_readings(const std::vector<AlignedTable>& tables,
                                             const GoldKeySet& gold_keys,
                                             std::vector<std::string>* anomalies = nullptr);

struct PanelBuild {
  std::vector<PanelObservation> readings;  // pre-resolution
  std::vector<PanelObservation> panel;     // resolved, population joined
  std::vector<PanelObservation> excluded;  // no population coverage
  std::size_t infeasible_readings = 0;
  std::size_t infeasible_keys = 0;
  std::map<int, std::size_t> decided_by_rule;
  std::vector<std::string> anomalies;
};

/// Readings -> infeasible-rate filter -> duplicate resolution -> population
/// join, emitted in canonical order.
PanelBuild assemble_panel(const std::vector<AlignedTable>& tables, const DedupContext& context,
                          const GoldKeySet& gold_keys);

}  // namespace histpanel
