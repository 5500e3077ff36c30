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

#include "histpanel/panel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "histpanel/csv.hpp"
#include "histpanel/digest.hpp"
#include "histpanel/error.hpp"

namespace histpanel {

std::string assign_vintage(const std::string& state, const std::vector<FieldCategory>& columns) {
  std::string signature = state + "|";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) signature.push_back(',');
    signature += std::string(to_string(columns[i]));
  }
  return state + "-" + sha256_hex(signature).substr(0, 12);
}

AlignedTable align_table(const RawTable& raw, const FieldMapping& field_map,
                         const CountyMapping& county_map, Layout layout) {
  AlignedTable out;
  out.provenance = raw.provenance;

  // Column 0 is the row-label column; the rest are value columns.
  std::vector<std::pair<std::size_t, FieldCategory>> columns;
  std::vector<FieldCategory> signature;
  for (std::size_t col = 1; col < raw.column_count; ++col) {
    auto it = field_map.mapped.find(raw.headers[col]);
    if (it == field_map.mapped.end()) {
      ++out.stats.dropped_columns;
      continue;
    }
    const bool repeated = std::any_of(columns.begin(), columns.end(),
                                      [&](const auto& c) { return c.second == it->second; });
    if (repeated) {
      ++out.stats.dropped_columns;
      continue;
    }
    columns.emplace_back(col, it->second);
    signature.push_back(it->second);
  }
  out.stats.mapped_columns = columns.size();
  if (out.provenance.vintage_id.empty()) {
    out.provenance.vintage_id = assign_vintage(raw.provenance.state, signature);
  }

  const MappingDecision* entity = nullptr;
  if (layout == Layout::year_sorted) {
    entity = county_map.find(raw.provenance.entity);
    if (!entity) {
      throw AlignmentEmpty("year-sorted table " + table_id(raw.provenance) +
                           " has no resolvable county entity '" + raw.provenance.entity + "'");
    }
  }

  for (const auto& row : raw.data_rows) {
    if (row.empty() || row[0].is_empty()) {
      ++out.stats.dropped_rows;
      continue;
    }
    RowKey key;
    if (layout == Layout::county_sorted) {
      const MappingDecision* decision = county_map.find(row[0].raw);
      if (!decision) {
        ++out.stats.dropped_rows;
        continue;
      }
      key = {decision->county_id, raw.provenance.year};
    } else {
      if (!row[0].is_numeric()) {
        ++out.stats.dropped_rows;
        continue;
      }
      key = {entity->county_id, static_cast<int>(row[0].value)};
    }
    if (out.rows.count(key)) {
      ++out.stats.dropped_rows;  // second row for the same county: keep the first
      continue;
    }
    AlignedRow aligned;
    for (const auto& [col, field] : columns) {
      AlignedCell cell;
      if (col < row.size()) {
        if (row[col].is_numeric()) {
          cell.value = static_cast<double>(row[col].value);
          cell.readings[raw.provenance.model_id] = *cell.value;
        } else if (row[col].is_text()) {
          ++out.stats.dropped_text_cells;
        }
      }
      aligned[field] = std::move(cell);
    }
    out.rows.emplace(std::move(key), std::move(aligned));
  }
  out.stats.mapped_rows = out.rows.size();
  if (out.rows.empty() || columns.empty()) {
    throw AlignmentEmpty("table " + table_id(raw.provenance) + " aligned no county rows" +
                         (columns.empty() ? " (no mapped value columns)" : ""));
  }
  return out;
}

DerivedTotal derive_total_vehicles(const std::map<FieldCategory, std::optional<double>>& row) {
  auto get = [&](FieldCategory f) -> std::optional<double> {
    auto it = row.find(f);
    return it == row.end() ? std::nullopt : it->second;
  };
  DerivedTotal out;
  if (auto direct = get(FieldCategory::total_vehicles)) {
    out.value = direct;
    return out;
  }
  auto autos = get(FieldCategory::automobiles);
  auto trucks = get(FieldCategory::trucks);
  if (!autos || !trucks) return out;
  const double total = *autos + *trucks - get(FieldCategory::trailers).value_or(0.0);
  if (total < 0) {
    out.anomaly = true;
    return out;
  }
  out.value = total;
  return out;
}

DerivedTotal derive_total_vehicles(const AlignedRow& row) {
  std::map<FieldCategory, std::optional<double>> values;
  for (const auto& [field, cell] : row) values[field] = cell.value;
  return derive_total_vehicles(values);
}

bool canonical_less(const PanelObservation& a, const PanelObservation& b) {
  return std::tie(a.state, a.county_id, a.year, a.field, a.provenance.ingestion_number,
                  a.provenance.document_id, a.provenance.page, a.provenance.model_id) <
         std::tie(b.state, b.county_id, b.year, b.field, b.provenance.ingestion_number,
                  b.provenance.document_id, b.provenance.page, b.provenance.model_id);
}

// ---------------------------------------------------------------------------

PopulationSeries::PopulationSeries(std::string county_id, std::map<int, double> decennial)
    : county_id_(std::move(county_id)), decennial_(std::move(decennial)) {}

std::optional<double> PopulationSeries::interpolated(int year) const {
  if (decennial_.empty()) return std::nullopt;
  auto hi = decennial_.lower_bound(year);
  if (hi != decennial_.end() && hi->first == year) return hi->second;
  if (hi == decennial_.begin() || hi == decennial_.end()) return std::nullopt;
  auto lo = std::prev(hi);
  const double t = static_cast<double>(year - lo->first) / static_cast<double>(hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

PopulationTable load_population(const std::string& csv_path) {
  const auto doc = csv::read_file(csv_path);
  const auto county_col = doc.column("county_id");
  const auto year_col = doc.column("year");
  const auto pop_col = doc.column("population");
  std::map<std::string, std::map<int, double>> raw;
  for (const auto& row : doc.rows) {
    raw[text::trim(row[county_col])][std::stoi(row[year_col])] = std::stod(row[pop_col]);
  }
  PopulationTable table;
  for (auto& [county, series] : raw) table.emplace(county, PopulationSeries(county, std::move(series)));
  return table;
}

StateTotals load_state_totals(const std::string& csv_path) {
  const auto doc = csv::read_file(csv_path);
  const auto state_col = doc.column("state");
  const auto year_col = doc.column("year");
  const auto total_col = doc.column("total");
  StateTotals totals;
  for (const auto& row : doc.rows) {
    const double total = std::stod(row[total_col]);
    if (!(total > 0)) throw ConfigError(csv_path + ": state totals must be positive");
    totals[{text::trim(row[state_col]), std::stoi(row[year_col])}] = total;
  }
  return totals;
}

// ---------------------------------------------------------------------------

std::optional<double> DedupContext::state_per_capita(const std::string& state, int year) const {
  auto total = state_totals.find({state, year});
  auto pop = state_population.find({state, year});
  if (total == state_totals.end() || pop == state_population.end() || !(pop->second > 0)) {
    return std::nullopt;
  }
  return total->second / pop->second;
}

std::optional<double> DedupContext::county_population(const std::string& county_id, int year) const {
  auto it = population.find(county_id);
  if (it == population.end()) return std::nullopt;
  return it->second.interpolated(year);
}

DedupContext build_dedup_context(const std::vector<AlignedTable>& tables, const ReferenceData& refs,
                                 const StateTotals& totals, const PopulationTable& population) {
  DedupContext ctx;
  ctx.state_totals = totals;
  ctx.population = population;

  std::map<std::string, std::set<std::string>> vintage_docs;
  std::set<std::pair<std::string, int>> state_years;
  for (const auto& table : tables) {
    const auto& prov = table.provenance;
    vintage_docs[prov.vintage_id].insert(prov.document_id);

    TableSummary summary;
    summary.state = prov.state;
    summary.year = prov.year;
    std::set<std::string> present;
    for (const auto& [key, row] : table.rows) {
      present.insert(key.county_id);
      state_years.insert({prov.state, key.year});
    }
    auto ref_it = refs.counties.find(prov.state);
    if (ref_it != refs.counties.end()) {
      const CountyRef& ref = ref_it->second;
      auto covered = [&](const CountyEntry& county) {
        if (present.count(county.county_id)) return true;
        bool any_part = false;
        for (const auto& special : ref.special_entities) {
          if (special.part_of != county.county_id) continue;
          any_part = true;
          if (!present.count(special.county_id)) return false;
        }
        return any_part;
      };
      summary.covers_state =
          !ref.entries.empty() && std::all_of(ref.entries.begin(), ref.entries.end(), covered);

      double sum = 0.0;
      bool any = false;
      for (const auto& [key, row] : table.rows) {
        if (key.year != prov.year) continue;
        const CountyEntry* special = nullptr;
        for (const auto& s : ref.special_entities) {
          if (s.county_id == key.county_id) special = &s;
        }
        // A part whose parent county row is also printed would be counted twice.
        if (special && !special->part_of.empty() && present.count(special->part_of)) continue;
        if (auto total = derive_total_vehicles(row).value) {
          sum += *total;
          any = true;
        }
      }
      if (any) summary.total_vehicles_sum = sum;
    }
    ctx.tables[table_id(prov)] = summary;
  }
  for (const auto& [vintage, docs] : vintage_docs) ctx.vintage_documents[vintage] = docs.size();

  for (const auto& [state, year] : state_years) {
    auto ref_it = refs.counties.find(state);
    if (ref_it == refs.counties.end()) continue;
    double pop = 0.0;
    bool any = false;
    for (const auto& county : ref_it->second.entries) {
      if (auto p = ctx.county_population(county.county_id, year)) {
        pop += *p;
        any = true;
      }
    }
    if (any) ctx.state_population[{state, year}] = pop;
  }
  return ctx;
}

// ---------------------------------------------------------------------------

namespace {

using Survivors = std::vector<std::size_t>;

template <typename Pred>
Survivors keep_if(const Survivors& in, Pred pred) {
  Survivors out;
  std::copy_if(in.begin(), in.end(), std::back_inserter(out), pred);
  return out;
}

// Keeps the survivors with the best score; survivors without a score drop out.
template <typename Score, typename Better>
Survivors keep_best(const Survivors& in, Score score, Better better) {
  std::optional<double> best;
  for (auto i : in) {
    if (auto s = score(i); s && (!best || better(*s, *best))) best = s;
  }
  if (!best) return {};
  return keep_if(in, [&](std::size_t i) {
    auto s = score(i);
    return s && *s == *best;
  });
}

}  // namespace

Resolution resolve_duplicates(const std::vector<PanelObservation>& readings,
                              const DedupContext& context) {
  if (readings.empty()) throw Error("resolve_duplicates: no readings");
  Resolution resolution;
  Survivors survivors(readings.size());
  for (std::size_t i = 0; i < readings.size(); ++i) survivors[i] = i;
  if (survivors.size() == 1) return resolution;

  auto summary = [&](std::size_t i) -> const TableSummary* {
    auto it = context.tables.find(table_id(readings[i].provenance));
    return it == context.tables.end() ? nullptr : &it->second;
  };
  auto greater = [](double a, double b) { return a > b; };
  auto less = [](double a, double b) { return a < b; };

  const std::function<Survivors(const Survivors&)> rules[kDedupRuleCount - 1] = {
      // 1: more frequent document vintage
      [&](const Survivors& s) {
        return keep_best(s, [&](std::size_t i) -> std::optional<double> {
          auto it = context.vintage_documents.find(readings[i].provenance.vintage_id);
          return it == context.vintage_documents.end() ? 0.0 : static_cast<double>(it->second);
        }, greater);
      },
      // 2: source table aggregates to a state total
      [&](const Survivors& s) {
        return keep_if(s, [&](std::size_t i) {
          const TableSummary* t = summary(i);
          return t && t->covers_state;
        });
      },
      // 3: more models returned a value
      [&](const Survivors& s) {
        return keep_best(s, [&](std::size_t i) -> std::optional<double> {
          return static_cast<double>(readings[i].model_support.size());
        }, greater);
      },
      // 4: multi-model readings whose models agree
      [&](const Survivors& s) {
        return keep_if(s, [&](std::size_t i) {
          return readings[i].model_support.size() >= 2 && readings[i].models_agree;
        });
      },
      // 5: most accurate state total
      [&](const Survivors& s) {
        return keep_best(s, [&](std::size_t i) -> std::optional<double> {
          const TableSummary* t = summary(i);
          if (!t || !t->covers_state || !t->total_vehicles_sum) return std::nullopt;
          auto ref = context.state_totals.find({readings[i].state, readings[i].year});
          if (ref == context.state_totals.end()) return std::nullopt;
          return std::abs(*t->total_vehicles_sum - ref->second);
        }, less);
      },
      // 6: closest to the state per-capita rate
      [&](const Survivors& s) {
        return keep_best(s, [&](std::size_t i) -> std::optional<double> {
          const auto& r = readings[i];
          auto pop = context.county_population(r.county_id, r.year);
          auto rate = context.state_per_capita(r.state, r.year);
          if (!pop || !(*pop > 0) || !rate) return std::nullopt;
          return std::abs(r.value / *pop - *rate);
        }, less);
      },
      // 7: has a gold-standard value
      [&](const Survivors& s) {
        return keep_if(s, [&](std::size_t i) { return readings[i].gold_available; });
      },
  };

  for (int rule = 1; rule < kDedupRuleCount; ++rule) {
    Survivors next = rules[rule - 1](survivors);
    if (next.empty()) {
      resolution.skipped_rules.push_back(rule);
      continue;
    }
    survivors = std::move(next);
    if (survivors.size() == 1) {
      resolution.index = survivors.front();
      resolution.deciding_rule = rule;
      return resolution;
    }
  }

  // 8: lowest ingestion number, then a stable order for exact ties.
  resolution.index = *std::min_element(survivors.begin(), survivors.end(), [&](auto a, auto b) {
    const auto& pa = readings[a].provenance;
    const auto& pb = readings[b].provenance;
    return std::tie(pa.ingestion_number, pa.document_id, pa.page, pa.model_id, readings[a].value) <
           std::tie(pb.ingestion_number, pb.document_id, pb.page, pb.model_id, readings[b].value);
  });
  resolution.deciding_rule = kDedupRuleCount;
  return resolution;
}

// ---------------------------------------------------------------------------

JoinResult join_population(std::vector<PanelObservation> panel, const PopulationTable& population) {
  JoinResult result;
  result.joined.reserve(panel.size());
  for (auto& obs : panel) {
    std::optional<double> pop;
    if (auto it = population.find(obs.county_id); it != population.end()) {
      pop = it->second.interpolated(obs.year);
    }
    if (!pop || !(*pop > 0)) {
      obs.flags.push_back("no_population");
      result.excluded.push_back(std::move(obs));
      continue;
    }
    obs.per_capita = obs.value / *pop;
    if (*obs.per_capita > 0) obs.log_per_capita = std::log(*obs.per_capita);
    result.joined.push_back(std::move(obs));
  }
  return result;
}

std::vector<PanelObservation> panel_readings(const std::vector<AlignedTable>& tables,
                                             const GoldKeySet& gold_keys,
                                             std::vector<std::string>* anomalies) {
  std::vector<PanelObservation> out;
  for (const auto& table : tables) {
    const std::string tid = table_id(table.provenance);
    auto make = [&](const RowKey& key, FieldCategory field, double value) {
      PanelObservation obs;
      obs.county_id = key.county_id;
      obs.state = table.provenance.state;
      obs.year = key.year;
      obs.field = field;
      obs.value = value;
      obs.provenance = table.provenance;
      obs.gold_available = gold_keys.count({tid, key.county_id, key.year, field}) > 0;
      return obs;
    };
    for (const auto& [key, row] : table.rows) {
      for (const auto& [field, cell] : row) {
        if (!cell.value) continue;
        PanelObservation obs = make(key, field, *cell.value);
        for (const auto& [model, v] : cell.readings) obs.model_support.insert(model);
        if (obs.model_support.empty()) obs.model_support.insert(table.provenance.model_id);
        obs.models_agree = cell.models_agree();
        out.push_back(std::move(obs));
      }
      const auto direct = row.find(FieldCategory::total_vehicles);
      if (direct != row.end() && direct->second.value) continue;
      const DerivedTotal total = derive_total_vehicles(row);
      if (total.anomaly && anomalies) {
        anomalies->push_back("negative derived total for " + key.county_id + " " +
                             std::to_string(key.year) + " in " + tid);
      }
      if (!total.value) continue;
      PanelObservation obs = make(key, FieldCategory::total_vehicles, *total.value);
      obs.derived = true;
      bool agree = true;
      bool first = true;
      for (auto component : {FieldCategory::automobiles, FieldCategory::trucks, FieldCategory::trailers}) {
        auto it = row.find(component);
        if (it == row.end() || !it->second.value) continue;
        std::set<std::string> support;
        for (const auto& [model, v] : it->second.readings) support.insert(model);
        if (first) {
          obs.model_support = support;
          first = false;
        } else {
          std::set<std::string> both;
          std::set_intersection(obs.model_support.begin(), obs.model_support.end(), support.begin(),
                                support.end(), std::inserter(both, both.begin()));
          obs.model_support = std::move(both);
        }
        agree = agree && it->second.models_agree();
      }
      if (obs.model_support.empty()) obs.model_support.insert(table.provenance.model_id);
      obs.models_agree = agree && obs.model_support.size() >= 2;
      out.push_back(std::move(obs));
    }
  }
  return out;
}

PanelBuild assemble_panel(const std::vector<AlignedTable>& tables, const DedupContext& context,
                          const GoldKeySet& gold_keys) {
  PanelBuild build;
  build.readings = panel_readings(tables, gold_keys, &build.anomalies);
  std::sort(build.readings.begin(), build.readings.end(), canonical_less);

  using GroupKey = std::tuple<std::string, std::string, int, FieldCategory>;
  std::map<GroupKey, std::vector<PanelObservation>> groups;
  for (const auto& obs : build.readings) {
    auto pop = context.county_population(obs.county_id, obs.year);
    if (pop && *pop > 0 && obs.value / *pop > kInfeasibleRate) {
      ++build.infeasible_readings;
      groups.try_emplace({obs.state, obs.county_id, obs.year, obs.field});
      continue;
    }
    groups[{obs.state, obs.county_id, obs.year, obs.field}].push_back(obs);
  }

  std::vector<PanelObservation> resolved;
  resolved.reserve(groups.size());
  for (auto& [key, readings] : groups) {
    if (readings.empty()) {
      ++build.infeasible_keys;
      continue;
    }
    const Resolution r = resolve_duplicates(readings, context);
    ++build.decided_by_rule[r.deciding_rule];
    PanelObservation chosen = readings[r.index];
    if (readings.size() > 1) {
      chosen.flags.push_back("resolved_rule_" + std::to_string(r.deciding_rule) + "_of_" +
                             std::to_string(readings.size()));
    }
    resolved.push_back(std::move(chosen));
  }
  JoinResult joined = join_population(std::move(resolved), context.population);
  build.panel = std::move(joined.joined);
  build.excluded = std::move(joined.excluded);
  std::sort(build.panel.begin(), build.panel.end(), canonical_less);
  std::sort(build.excluded.begin(), build.excluded.end(), canonical_less);
  return build;
}

}  // namespace histpanel
