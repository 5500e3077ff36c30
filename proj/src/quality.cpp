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

#include "histpanel/quality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "histpanel/csv.hpp"
#include "histpanel/error.hpp"

namespace histpanel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_of(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// Linear interpolation between closest ranks.
double percentile_of(std::vector<double> v, double q) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

double squared_correlation_pct(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2) return kNaN;
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return x == y ? 100.0 : 0.0;
  return 100.0 * std::clamp((sxy * sxy) / (sxx * syy), 0.0, 1.0);
}

double prediction_r2_pct(const std::vector<double>& truth, const std::vector<double>& pred) {
  if (truth.size() < 2) return kNaN;
  const double m = mean_of(truth);
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - m) * (truth[i] - m);
  }
  if (ss_tot == 0) return ss_res == 0 ? 100.0 : 0.0;
  return 100.0 * (1.0 - ss_res / ss_tot);
}

OutlierFlag make_flag(OutlierKind kind, const PanelObservation& obs) {
  OutlierFlag f;
  f.kind = kind;
  f.state = obs.state;
  f.county_id = obs.county_id;
  f.year = obs.year;
  f.field = obs.field;
  return f;
}

bool flag_less(const OutlierFlag& a, const OutlierFlag& b) {
  return std::tie(a.kind, a.state, a.county_id, a.year, a.field, a.rule) <
         std::tie(b.kind, b.state, b.county_id, b.year, b.field, b.rule);
}

}  // namespace

std::string_view to_string(OutlierKind kind) {
  switch (kind) {
    case OutlierKind::population: return "population";
    case OutlierKind::timeseries: return "timeseries";
    case OutlierKind::crossfield: return "crossfield";
    case OutlierKind::duplicate: return "duplicate";
  }
  return "unknown";
}

std::string OutlierFlag::id() const {
  std::string out = std::string(to_string(kind)) + ":" + county_id + ":" + std::to_string(year) + ":" +
                    std::string(to_string(field));
  if (!rule.empty()) out += ":" + rule;
  return out;
}

bool population_ratio_flagged(double ratio, const OutlierThresholds& t) {
  return ratio > t.population_rate;
}

bool crossfield_ratio_flagged(double ratio, const OutlierThresholds& t) {
  return ratio < t.crossfield_low || ratio > t.crossfield_high;
}

bool dispersion_ratio_flagged(double ratio, const OutlierThresholds& t) {
  return ratio > t.duplicate_dispersion;
}

double change_magnitude_pct(double from, double to) {
  if (from == to) return 0.0;
  const double base = to < from ? to : from;
  if (base == 0.0) return kInf;
  return 100.0 * std::abs(to - from) / base;
}

DispersionStats dispersion(std::vector<double> values) {
  DispersionStats s;
  if (values.empty()) return s;
  s.median = median_of(values);
  const double m = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  s.stdev = std::sqrt(ss / static_cast<double>(values.size()));
  if (s.median == 0.0) {
    s.ratio = s.stdev > 0 ? kInf : 0.0;
  } else {
    s.ratio = s.stdev / std::abs(s.median);
  }
  return s;
}

std::vector<OutlierFlag> detect_population_outliers(const std::vector<PanelObservation>& panel,
                                                    const PopulationTable& population,
                                                    const OutlierThresholds& t,
                                                    std::vector<std::string>* notes) {
  std::vector<OutlierFlag> flags;
  for (const auto& obs : panel) {
    std::optional<double> pop;
    if (auto it = population.find(obs.county_id); it != population.end()) {
      pop = it->second.interpolated(obs.year);
    }
    if (!pop || !(*pop > 0)) {
      if (notes) {
        notes->push_back("population check skipped for " + obs.county_id + " " + std::to_string(obs.year) +
                         ": no positive population");
      }
      continue;
    }
    const double ratio = obs.value / *pop;
    if (!population_ratio_flagged(ratio, t)) continue;
    OutlierFlag f = make_flag(OutlierKind::population, obs);
    f.detail = {{"ratio", ratio}, {"value", obs.value}, {"population", *pop}};
    flags.push_back(std::move(f));
  }
  std::sort(flags.begin(), flags.end(), flag_less);
  return flags;
}

std::vector<std::pair<std::size_t, std::string>> timeseries_flags(const std::vector<double>& v,
                                                                  const OutlierThresholds& t) {
  std::vector<std::pair<std::size_t, std::string>> out;
  const std::size_t n = v.size();
  if (n < 2) return out;
  if (change_magnitude_pct(v[0], v[1]) > t.change_pct && v[0] > t.endpoint_min_value) {
    out.emplace_back(0, "first");
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const bool down_up = v[i] < v[i - 1] && v[i] < v[i + 1];
    const bool up_down = v[i] > v[i - 1] && v[i] > v[i + 1];
    if (!(down_up || up_down) || !(v[i] > t.reversal_min_value)) continue;
    if (change_magnitude_pct(v[i - 1], v[i]) > t.change_pct &&
        change_magnitude_pct(v[i], v[i + 1]) > t.change_pct) {
      out.emplace_back(i, "reversal");
    }
  }
  if (change_magnitude_pct(v[n - 2], v[n - 1]) > t.change_pct && v[n - 1] > t.endpoint_min_value) {
    out.emplace_back(n - 1, "last");
  }
  return out;
}

std::vector<OutlierFlag> detect_timeseries_outliers(const std::vector<PanelObservation>& panel,
                                                    const OutlierThresholds& t) {
  using SeriesKey = std::tuple<std::string, std::string, FieldCategory>;
  std::map<SeriesKey, std::map<int, const PanelObservation*>> series;
  for (const auto& obs : panel) series[{obs.state, obs.county_id, obs.field}][obs.year] = &obs;

  std::vector<OutlierFlag> flags;
  for (const auto& [key, by_year] : series) {
    std::vector<const PanelObservation*> points;
    std::vector<double> values;
    for (const auto& [year, obs] : by_year) {
      points.push_back(obs);
      values.push_back(obs->value);
    }
    for (const auto& [i, rule] : timeseries_flags(values, t)) {
      OutlierFlag f = make_flag(OutlierKind::timeseries, *points[i]);
      f.rule = rule;
      f.detail["value"] = values[i];
      if (i > 0) f.detail["change_from_previous_pct"] = change_magnitude_pct(values[i - 1], values[i]);
      if (i + 1 < values.size()) f.detail["change_to_next_pct"] = change_magnitude_pct(values[i], values[i + 1]);
      flags.push_back(std::move(f));
    }
  }
  std::sort(flags.begin(), flags.end(), flag_less);
  return flags;
}

std::vector<OutlierFlag> detect_crossfield_outliers(const std::vector<PanelObservation>& panel,
                                                    const OutlierThresholds& t) {
  using CellKey = std::tuple<std::string, std::string, int>;
  std::map<CellKey, std::pair<const PanelObservation*, const PanelObservation*>> pairs;
  for (const auto& obs : panel) {
    if (obs.field == FieldCategory::automobiles) pairs[{obs.state, obs.county_id, obs.year}].first = &obs;
    if (obs.field == FieldCategory::total_vehicles) pairs[{obs.state, obs.county_id, obs.year}].second = &obs;
  }
  std::vector<OutlierFlag> flags;
  for (const auto& [key, pair] : pairs) {
    const auto [autos, total] = pair;
    if (!autos || !total) continue;
    if (total->value == 0.0 && autos->value == 0.0) continue;
    const double ratio = total->value == 0.0 ? kInf : autos->value / total->value;
    if (!crossfield_ratio_flagged(ratio, t)) continue;
    OutlierFlag f = make_flag(OutlierKind::crossfield, *autos);
    f.detail = {{"ratio", ratio}, {"automobiles", autos->value}, {"total_vehicles", total->value}};
    flags.push_back(std::move(f));
  }
  std::sort(flags.begin(), flags.end(), flag_less);
  return flags;
}

std::vector<OutlierFlag> detect_duplicate_outliers(const std::vector<PanelObservation>& readings,
                                                   const OutlierThresholds& t) {
  using Key = std::tuple<std::string, std::string, int, FieldCategory>;
  std::map<Key, std::vector<const PanelObservation*>> groups;
  for (const auto& obs : readings) groups[{obs.state, obs.county_id, obs.year, obs.field}].push_back(&obs);
  std::vector<OutlierFlag> flags;
  for (const auto& [key, group] : groups) {
    if (group.size() < 2) continue;
    std::vector<double> values;
    for (const auto* obs : group) values.push_back(obs->value);
    const DispersionStats s = dispersion(values);
    if (!dispersion_ratio_flagged(s.ratio, t)) continue;
    OutlierFlag f = make_flag(OutlierKind::duplicate, *group.front());
    f.detail = {{"ratio", s.ratio}, {"median", s.median}, {"stdev", s.stdev},
                {"readings", static_cast<double>(values.size())}};
    flags.push_back(std::move(f));
  }
  std::sort(flags.begin(), flags.end(), flag_less);
  return flags;
}

std::vector<OutlierFlag> detect_outliers(const PanelBuild& build, const PopulationTable& population,
                                         const OutlierThresholds& t, std::vector<std::string>* notes) {
  std::vector<OutlierFlag> all = detect_population_outliers(build.panel, population, t, notes);
  for (auto part : {detect_timeseries_outliers(build.panel, t), detect_crossfield_outliers(build.panel, t),
                    detect_duplicate_outliers(build.readings, t)}) {
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

// ---------------------------------------------------------------------------

std::vector<GoldCell> load_gold(const std::string& csv_path) {
  const auto doc = csv::read_file(csv_path);
  const auto c_table = doc.column("table_id");
  const auto c_state = doc.column("state");
  const auto c_year = doc.column("year");
  const auto c_county = doc.column("county_id");
  const auto c_field = doc.column("field");
  const auto c_value = doc.column("value");
  std::vector<GoldCell> cells;
  for (const auto& row : doc.rows) {
    GoldCell cell;
    cell.table_id = text::trim(row[c_table]);
    cell.state = text::trim(row[c_state]);
    cell.year = std::stoi(row[c_year]);
    cell.county_id = text::trim(row[c_county]);
    auto field = parse_field_category(text::trim(row[c_field]));
    if (!field) throw ConfigError(csv_path + ": unknown field '" + row[c_field] + "'");
    cell.field = *field;
    const CellValue v = normalize_cell(row[c_value]);
    if (v.is_text()) throw ConfigError(csv_path + ": non-numeric gold value '" + row[c_value] + "'");
    if (v.is_numeric()) cell.value = static_cast<double>(v.value);
    cells.push_back(std::move(cell));
  }
  return cells;
}

void write_gold(const std::string& path, const std::vector<GoldCell>& cells) {
  std::string out = "table_id,state,year,county_id,field,value\n";
  for (const auto& c : cells) {
    out += csv::join_row({c.table_id, c.state, std::to_string(c.year), c.county_id,
                          std::string(to_string(c.field)),
                          c.value ? std::to_string(static_cast<long long>(*c.value)) : ""}) +
           "\n";
  }
  text::write_file_atomic(path, out);
}

GoldKeySet gold_keys(const std::vector<GoldCell>& cells) {
  GoldKeySet keys;
  for (const auto& c : cells) {
    if (c.value) keys.insert({c.table_id, c.county_id, c.year, c.field});
  }
  return keys;
}

std::vector<EvalCell> match_gold(const std::vector<AlignedTable>& extracted,
                                 const std::vector<GoldCell>& gold, std::size_t* spurious) {
  std::map<std::string, const AlignedTable*> by_id;
  for (const auto& table : extracted) {
    if (!by_id.emplace(table_id(table.provenance), &table).second) {
      throw ConfigError("evaluation input holds two extractions of table " + table_id(table.provenance));
    }
  }
  std::vector<EvalCell> cells;
  std::size_t extra = 0;
  for (const auto& g : gold) {
    std::optional<double> ext;
    if (auto it = by_id.find(g.table_id); it != by_id.end()) {
      ext = it->second->value({g.county_id, g.year}, g.field);
    }
    if (ext) ext = std::nearbyint(*ext);
    if (!g.value) {
      if (ext) ++extra;
      continue;
    }
    cells.push_back({g.table_id, g.state, g.year, g.county_id, g.field, *g.value, ext});
  }
  if (spurious) *spurious = extra;
  return cells;
}

namespace {

bool cell_less(const EvalCell& a, const EvalCell& b) {
  return std::tie(a.table_id, a.county_id, a.year, a.field) < std::tie(b.table_id, b.county_id, b.year, b.field);
}

std::size_t distinct_tables(const std::vector<const EvalCell*>& cells) {
  std::set<std::string> ids;
  for (const auto* c : cells) ids.insert(c->table_id);
  return ids.size();
}

}  // namespace

EvalReport evaluate_cells(std::vector<EvalCell> cells, const EvalOptions& options) {
  std::sort(cells.begin(), cells.end(), cell_less);
  EvalReport r;
  r.cells = cells.size();

  std::vector<const EvalCell*> all, wrong;
  std::vector<double> truth, ext, err, abs_err, pct, abs_pct;
  std::vector<double> w_truth, w_ext, w_err, w_abs_err, w_pct, w_abs_pct;
  for (const auto& c : cells) {
    all.push_back(&c);
    if (!c.extracted) {
      ++r.missing;
      continue;
    }
    ++r.matched;
    const double e = *c.extracted - c.truth;
    truth.push_back(c.truth);
    ext.push_back(*c.extracted);
    err.push_back(e);
    abs_err.push_back(std::abs(e));
    const bool has_pct = c.truth != 0.0;
    if (has_pct) {
      pct.push_back(100.0 * e / c.truth);
      abs_pct.push_back(std::abs(pct.back()));
    } else {
      ++r.zero_truth;
    }
    if (e != 0.0) {
      ++r.incorrect;
      wrong.push_back(&c);
      w_truth.push_back(c.truth);
      w_ext.push_back(*c.extracted);
      w_err.push_back(e);
      w_abs_err.push_back(std::abs(e));
      if (has_pct) {
        w_pct.push_back(pct.back());
        w_abs_pct.push_back(abs_pct.back());
      }
    }
  }
  if (r.matched == 0) throw EmptyEvaluation("no gold cell has an extracted value to compare");

  r.tables = distinct_tables(all);
  const double n = static_cast<double>(r.cells);
  r.missing_output_pct = 100.0 * static_cast<double>(r.missing) / n;
  r.incorrect_output_pct = 100.0 * static_cast<double>(r.incorrect) / n;
  r.total_error_rate_pct = r.missing_output_pct + r.incorrect_output_pct;

  auto r2 = [&](const std::vector<double>& t, const std::vector<double>& x) {
    return options.prediction_r2 ? prediction_r2_pct(t, x) : squared_correlation_pct(t, x);
  };
  r.r_squared_pct = r2(truth, ext);
  r.mean_error_units = mean_of(err);
  r.mean_abs_error_units = mean_of(abs_err);
  r.mean_error_pct = mean_of(pct);
  r.mean_abs_error_pct = mean_of(abs_pct);
  r.median_abs_error_pct = median_of(abs_pct);

  ErrorOnlyBlock& b = r.error_only;
  b.cells = wrong.size();
  b.tables = distinct_tables(wrong);
  b.r_squared_pct = r2(w_truth, w_ext);
  b.mean_error_units = mean_of(w_err);
  b.mean_abs_error_units = mean_of(w_abs_err);
  b.median_error_units = median_of(w_err);
  b.median_abs_error_units = median_of(w_abs_err);
  b.mean_error_pct = mean_of(w_pct);
  b.mean_abs_error_pct = mean_of(w_abs_pct);
  b.median_error_pct = median_of(w_pct);
  b.median_abs_error_pct = median_of(w_abs_pct);
  b.p75_abs_error_pct = percentile_of(w_abs_pct, 0.75);
  b.p95_abs_error_pct = percentile_of(w_abs_pct, 0.95);
  return r;
}

EvalReport evaluate_against_gold(const std::vector<AlignedTable>& extracted,
                                 const std::vector<GoldCell>& gold, const EvalOptions& options) {
  std::size_t spurious = 0;
  auto cells = match_gold(extracted, gold, &spurious);
  EvalReport r = evaluate_cells(std::move(cells), options);
  r.spurious = spurious;
  return r;
}

namespace {

void add_line(std::ostringstream& os, const std::string& label, const std::string& value) {
  os << label;
  for (std::size_t i = label.size(); i < 36; ++i) os << ' ';
  os << value << '\n';
}

}  // namespace

std::string eval_report_text(const EvalReport& r, const std::string& title) {
  std::ostringstream os;
  os << title << "\n";
  add_line(os, "Metric", "Value");
  add_line(os, "R2 (True vs. Extracted) (%)", text::fixed(r.r_squared_pct, 1));
  add_line(os, "Total Error Rate (%)", text::fixed(r.total_error_rate_pct, 1));
  add_line(os, "  Missing Output (%)", text::fixed(r.missing_output_pct, 1));
  add_line(os, "  Incorrect Output (%)", text::fixed(r.incorrect_output_pct, 1));
  add_line(os, "Mean Error (Units)", text::fixed(r.mean_error_units, 1));
  add_line(os, "Mean Abs. Error (Units)", text::fixed(r.mean_abs_error_units, 1));
  add_line(os, "Mean Error (%)", text::fixed(r.mean_error_pct, 1));
  add_line(os, "Mean Abs. Error (%)", text::fixed(r.mean_abs_error_pct, 1));
  add_line(os, "Num. of Cells", std::to_string(r.cells));
  add_line(os, "Num. of Tables", std::to_string(r.tables));
  os << "\nError Only Performance Metrics\n";
  const ErrorOnlyBlock& b = r.error_only;
  add_line(os, "Metric", "Value");
  add_line(os, "R2 (True vs. Extracted) (%)", text::fixed(b.r_squared_pct, 1));
  add_line(os, "Mean Error (Units)", text::fixed(b.mean_error_units, 1));
  add_line(os, "Mean Abs. Error (Units)", text::fixed(b.mean_abs_error_units, 1));
  add_line(os, "Median Error (Units)", text::fixed(b.median_error_units, 1));
  add_line(os, "Median Abs. Error (Units)", text::fixed(b.median_abs_error_units, 1));
  add_line(os, "Mean Error (%)", text::fixed(b.mean_error_pct, 1));
  add_line(os, "Mean Abs. Error (%)", text::fixed(b.mean_abs_error_pct, 1));
  add_line(os, "Median Error (%)", text::fixed(b.median_error_pct, 1));
  add_line(os, "Median Abs. Error (%)", text::fixed(b.median_abs_error_pct, 1));
  add_line(os, "75th Percentile Abs. Error (%)", text::fixed(b.p75_abs_error_pct, 1));
  add_line(os, "95th Percentile Abs. Error (%)", text::fixed(b.p95_abs_error_pct, 1));
  add_line(os, "Num. of Cells", std::to_string(b.cells));
  add_line(os, "Num. of Tables", std::to_string(b.tables));
  return os.str();
}

namespace {

nlohmann::json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

std::string eval_report_json(const EvalReport& r) {
  const ErrorOnlyBlock& b = r.error_only;
  nlohmann::ordered_json j = {
      {"r_squared_pct", num(r.r_squared_pct)},
      {"total_error_rate_pct", num(r.total_error_rate_pct)},
      {"missing_output_pct", num(r.missing_output_pct)},
      {"incorrect_output_pct", num(r.incorrect_output_pct)},
      {"mean_error_units", num(r.mean_error_units)},
      {"mean_abs_error_units", num(r.mean_abs_error_units)},
      {"mean_error_pct", num(r.mean_error_pct)},
      {"mean_abs_error_pct", num(r.mean_abs_error_pct)},
      {"median_abs_error_pct", num(r.median_abs_error_pct)},
      {"cells", r.cells},
      {"tables", r.tables},
      {"matched", r.matched},
      {"missing", r.missing},
      {"incorrect", r.incorrect},
      {"spurious", r.spurious},
      {"zero_truth", r.zero_truth},
      {"error_only",
       {{"cells", b.cells},
        {"tables", b.tables},
        {"r_squared_pct", num(b.r_squared_pct)},
        {"mean_error_units", num(b.mean_error_units)},
        {"mean_abs_error_units", num(b.mean_abs_error_units)},
        {"median_error_units", num(b.median_error_units)},
        {"median_abs_error_units", num(b.median_abs_error_units)},
        {"mean_error_pct", num(b.mean_error_pct)},
        {"mean_abs_error_pct", num(b.mean_abs_error_pct)},
        {"median_error_pct", num(b.median_error_pct)},
        {"median_abs_error_pct", num(b.median_abs_error_pct)},
        {"p75_abs_error_pct", num(b.p75_abs_error_pct)},
        {"p95_abs_error_pct", num(b.p95_abs_error_pct)}}},
  };
  return j.dump(2);
}

// ---------------------------------------------------------------------------

std::vector<FailureRate> critical_failure_rate(
    const std::map<std::string, std::vector<StructuralReport>>& reports_by_source) {
  std::vector<FailureRate> out;
  for (const auto& [source, reports] : reports_by_source) {
    FailureRate f;
    f.source = source;
    f.tables = reports.size();
    f.failures = static_cast<std::size_t>(std::count_if(
        reports.begin(), reports.end(), [](const StructuralReport& r) { return r.is_critical_failure; }));
    f.pct = f.tables ? 100.0 * static_cast<double>(f.failures) / static_cast<double>(f.tables) : 0.0;
    out.push_back(f);
  }
  return out;
}

std::string failure_rate_text(const std::vector<FailureRate>& rates) {
  std::ostringstream os;
  os << "Critical Parsing Failures\n";
  add_line(os, "Metric", "Value");
  std::size_t tables = 0;
  for (const auto& r : rates) {
    add_line(os, r.source + " Failure (%)", text::fixed(r.pct, 2));
    tables = std::max(tables, r.tables);
  }
  add_line(os, "Num. of Tables", std::to_string(tables));
  return os.str();
}

std::vector<GroupReport> breakdown(const std::vector<EvalCell>& cells, GroupBy group_by,
                                   const EvalOptions& options) {
  std::map<std::string, std::vector<EvalCell>> groups;
  for (const auto& c : cells) {
    const std::string key = group_by == GroupBy::state ? c.state : std::to_string(c.year / 10 * 10) + "s";
    groups[key].push_back(c);
  }
  std::vector<GroupReport> out;
  for (auto& [key, members] : groups) {
    GroupReport g;
    g.group = key;
    g.cells = members.size();
    std::set<std::string> ids;
    for (const auto& c : members) ids.insert(c.table_id);
    g.tables = ids.size();
    try {
      g.report = evaluate_cells(std::move(members), options);
    } catch (const EmptyEvaluation&) {
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::string breakdown_csv(const std::vector<GroupReport>& groups) {
  std::string out =
      "group,cells,tables,r_squared_pct,total_error_rate_pct,missing_output_pct,incorrect_output_pct,"
      "median_abs_error_pct,error_only_median_abs_error_pct\n";
  for (const auto& g : groups) {
    csv::Record row{g.group, std::to_string(g.cells), std::to_string(g.tables)};
    if (g.report) {
      const auto& r = *g.report;
      for (double v : {r.r_squared_pct, r.total_error_rate_pct, r.missing_output_pct, r.incorrect_output_pct,
                       r.median_abs_error_pct, r.error_only.median_abs_error_pct}) {
        row.push_back(text::fixed(v, 6));
      }
    } else {
      row.resize(9, "NA");
    }
    out += csv::join_row(row) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

void seeded_shuffle(std::vector<std::string>& items, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    // Uniform draw in [0, i) by rejection, independent of the library's
    // distribution implementation.
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do {
      draw = gen();
    } while (draw >= limit);
    std::swap(items[i - 1], items[draw % bound]);
  }
}

ConvergenceResult convergence_analysis(const std::vector<EvalCell>& cells, const ConvergenceConfig& config,
                                       const EvalOptions& options) {
  if (config.folds < 2) throw FoldConfigError("need at least two folds");
  if (config.step == 0) throw FoldConfigError("step must be positive");
  if (!(config.dev_fraction >= 0.0) || !(config.dev_fraction < 1.0)) {
    throw FoldConfigError("dev fraction must lie in [0, 1)");
  }
  std::set<std::string> id_set;
  for (const auto& c : cells) id_set.insert(c.table_id);
  std::vector<std::string> ids(id_set.begin(), id_set.end());
  if (ids.size() < config.folds) {
    throw FoldConfigError(std::to_string(ids.size()) + " tables cannot fill " + std::to_string(config.folds) +
                          " folds");
  }
  seeded_shuffle(ids, config.seed);

  const std::size_t n = ids.size();
  std::vector<std::vector<std::string>> folds(config.folds);
  for (std::size_t p = 0; p < n; ++p) folds[p * config.folds / n].push_back(ids[p]);

  const auto dev_folds = static_cast<std::size_t>(std::floor(config.dev_fraction * static_cast<double>(config.folds)));
  if (dev_folds >= config.folds) throw FoldConfigError("no folds left for evaluation");

  ConvergenceResult result;
  for (std::size_t f = 0; f < dev_folds; ++f) {
    result.dev_tables.insert(result.dev_tables.end(), folds[f].begin(), folds[f].end());
  }

  std::map<std::string, std::vector<const EvalCell*>> by_table;
  for (const auto& c : cells) by_table[c.table_id].push_back(&c);

  const std::size_t eval_folds = config.folds - dev_folds;
  std::vector<EvalCell> cumulative;
  std::size_t tables = 0;
  for (std::size_t k = 1; k <= eval_folds; ++k) {
    for (const auto& id : folds[dev_folds + k - 1]) {
      result.eval_tables.push_back(id);
      for (const auto* c : by_table[id]) cumulative.push_back(*c);
      ++tables;
    }
    if (k % config.step != 0 && k != eval_folds) continue;
    ConvergencePoint point;
    point.folds_used = k;
    point.tables = tables;
    point.report = evaluate_cells(cumulative, options);
    result.points.push_back(std::move(point));
  }
  return result;
}

std::string convergence_csv(const ConvergenceResult& result) {
  std::string out =
      "folds,tables,cells,r_squared_pct,total_error_rate_pct,missing_output_pct,incorrect_output_pct,"
      "mean_abs_error_pct,error_only_cells,error_only_r_squared_pct,error_only_median_abs_error_pct,"
      "error_only_mean_abs_error_pct\n";
  for (const auto& p : result.points) {
    const auto& r = p.report;
    csv::Record row{std::to_string(p.folds_used), std::to_string(p.tables), std::to_string(r.cells)};
    for (double v : {r.r_squared_pct, r.total_error_rate_pct, r.missing_output_pct, r.incorrect_output_pct,
                     r.mean_abs_error_pct}) {
      row.push_back(text::fixed(v, 6));
    }
    row.push_back(std::to_string(r.error_only.cells));
    for (double v : {r.error_only.r_squared_pct, r.error_only.median_abs_error_pct, r.error_only.mean_abs_error_pct}) {
      row.push_back(text::fixed(v, 6));
    }
    out += csv::join_row(row) + "\n";
  }
  return out;
}

}  // namespace histpanel
