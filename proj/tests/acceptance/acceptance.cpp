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

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Usage: acceptance [work_dir]

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "histpanel/csv.hpp"
#include "histpanel/econ.hpp"
#include "histpanel/error.hpp"
#include "histpanel/extraction.hpp"
#include "histpanel/panel.hpp"
#include "histpanel/pipeline.hpp"
#include "histpanel/quality.hpp"
#include "histpanel/synthetic.hpp"
#include "histpanel/table_model.hpp"

using namespace histpanel;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Collects failures for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::string s = std::to_string(failed_) + " failed";
    for (const auto& f : failures_) s += "; " + f;
    return s;
  }

 private:
  std::vector<std::string> failures_;
  std::size_t failed_ = 0;
};

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

void run(const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

void structural_validator() {
  const std::string dir = std::string(HISTPANEL_FIXTURES) + "/structural";
  const auto labels = csv::parse(text::read_file(dir + "/labels.csv"));
  std::vector<std::pair<std::string, std::string>> inputs;  // (label line, text)
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i].empty() || labels[i][0].empty()) continue;
    inputs.emplace_back(labels[i][0], text::read_file(dir + "/" + labels[i][0]));
  }

  TableProvenance prov;
  prov.document_id = "structural";
  prov.state = "MI";
  prov.year = 1923;
  std::size_t agree = 0;
  Check check;
  const auto start = Clock::now();
  std::vector<std::pair<bool, std::set<std::string>>> got;
  for (const auto& [file, body] : inputs) {
    StructuralReport r;
    try {
      r = validate_structure(parse_raw_csv(body, prov));
    } catch (const ParseFailure&) {
      r.is_critical_failure = true;
      r.failed_conditions = {StructuralCondition::empty_table};
    }
    std::set<std::string> conditions;
    for (auto c : r.failed_conditions) conditions.insert(std::string(to_string(c)));
    got.emplace_back(r.is_critical_failure, conditions);
  }
  const double elapsed = seconds_since(start);

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& row = labels[i + 1];
    const bool critical = row.at(1) == "1";
    std::set<std::string> want;
    if (row.size() > 2) {
      std::stringstream ss(row[2]);
      std::string c;
      while (std::getline(ss, c, ';')) {
        if (!c.empty()) want.insert(c);
      }
    }
    const bool match = got[i].first == critical && got[i].second == want;
    check.expect(match, inputs[i].first);
    if (match) ++agree;
  }
  check.expect(inputs.size() == 20, "expected 20 tables");
  check.expect(elapsed < 1.0, "runtime");
  report("structural_validator", check.ok(),
         std::to_string(agree) + "/" + std::to_string(inputs.size()) + " match labels in " + text::fixed(elapsed, 4) +
             " s" + (check.ok() ? "" : "; " + check.summary()));
}

// ---------------------------------------------------------------------------

void ensemble_law() {
  Check check;
  using Opt = std::optional<double>;
  // The four presence patterns.
  check.expect(!ensemble_cell(std::nullopt, std::nullopt).has_value(), "absent/absent");
  check.expect(ensemble_cell(Opt(7), std::nullopt) == Opt(7), "present/absent");
  check.expect(ensemble_cell(std::nullopt, Opt(9)) == Opt(9), "absent/present");
  check.expect(ensemble_cell(Opt(7), Opt(9)) == Opt(8), "present/present");

  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::int64_t> value(0, 5'000'000);
  std::bernoulli_distribution present(0.75);
  std::size_t pairs = 0;
  for (; pairs < 10000; ++pairs) {
    const Opt a = present(rng) ? Opt(static_cast<double>(value(rng))) : std::nullopt;
    const Opt b = present(rng) ? Opt(static_cast<double>(value(rng))) : std::nullopt;
    const Opt ab = ensemble_cell(a, b);
    check.expect(ab == ensemble_cell(b, a), "commutativity");
    check.expect(ensemble_cell(a, a) == a, "idempotence");
    Opt want;
    if (a && b) {
      want = (*a + *b) / 2.0;
    } else if (a) {
      want = a;
    } else if (b) {
      want = b;
    }
    check.expect(ab == want, "mean/fallback/absent");
  }
  report("ensemble_law", check.ok(),
         "4 presence patterns + " + std::to_string(pairs) + " random pairs" + (check.ok() ? "" : "; " + check.summary()));
}

// ---------------------------------------------------------------------------
// Duplicate cascade against a literal oracle over abstract attributes.

struct Scenario {
  struct Reading {
    int vintage_docs = 1;  // 0: vintage unknown to the context
    bool covers_state = false;
    std::optional<double> state_sum_error;  // |table sum - reference|, when the table has a sum
    int support = 1;
    bool agree = false;
    double rate_offset = 0.0;  // value / population - state rate
    bool gold = false;
    std::int64_t ingestion = 0;
  };
  std::vector<Reading> readings;
  bool has_state_total = true;
  bool has_population = true;
};

struct OracleOutcome {
  std::int64_t ingestion = 0;
  int rule = 0;
  std::vector<int> skipped;
};

OracleOutcome dedup_oracle(const Scenario& s) {
  std::vector<std::size_t> alive(s.readings.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
  OracleOutcome out;
  if (alive.size() == 1) {
    out.ingestion = s.readings[0].ingestion;
    return out;
  }
  // Each rule: an optional score per reading (higher or lower is better), or
  // a boolean preference.
  auto best_of = [&](std::function<std::optional<double>(const Scenario::Reading&)> score, bool higher) {
    std::vector<std::size_t> kept;
    std::optional<double> best;
    for (auto i : alive) {
      const auto v = score(s.readings[i]);
      if (!v) continue;
      if (!best || (higher ? *v > *best : *v < *best)) best = v;
    }
    for (auto i : alive) {
      const auto v = score(s.readings[i]);
      if (v && best && *v == *best) kept.push_back(i);
    }
    return kept;
  };
  auto those = [&](std::function<bool(const Scenario::Reading&)> pred) {
    std::vector<std::size_t> kept;
    for (auto i : alive) {
      if (pred(s.readings[i])) kept.push_back(i);
    }
    return kept;
  };
  for (int rule = 1; rule <= 7; ++rule) {
    std::vector<std::size_t> kept;
    switch (rule) {
      case 1: kept = best_of([](const auto& r) { return std::optional<double>(r.vintage_docs); }, true); break;
      case 2: kept = those([](const auto& r) { return r.covers_state; }); break;
      case 3: kept = best_of([](const auto& r) { return std::optional<double>(r.support); }, true); break;
      case 4: kept = those([](const auto& r) { return r.support >= 2 && r.agree; }); break;
      case 5:
        kept = best_of(
            [&](const auto& r) -> std::optional<double> {
              if (!s.has_state_total || !r.covers_state) return std::nullopt;
              return r.state_sum_error;
            },
            false);
        break;
      case 6:
        kept = best_of(
            [&](const auto& r) -> std::optional<double> {
              if (!s.has_state_total || !s.has_population) return std::nullopt;
              return std::abs(r.rate_offset);
            },
            false);
        break;
      case 7: kept = those([](const auto& r) { return r.gold; }); break;
    }
    if (kept.empty()) {
      out.skipped.push_back(rule);
      continue;
    }
    alive = kept;
    if (alive.size() == 1) {
      out.ingestion = s.readings[alive[0]].ingestion;
      out.rule = rule;
      return out;
    }
  }
  std::int64_t lowest = s.readings[alive[0]].ingestion;
  for (auto i : alive) lowest = std::min(lowest, s.readings[i].ingestion);
  out.ingestion = lowest;
  out.rule = 8;
  return out;
}

constexpr double kCountyPopulation = 1000.0;
constexpr double kStateRate = 0.5;
constexpr double kStateTotal = 50000.0;

/// Realizes a scenario as concrete readings plus a context. All derived
/// quantities are dyadic so the implementation's arithmetic is exact.
std::pair<std::vector<PanelObservation>, DedupContext> realize(const Scenario& s) {
  DedupContext ctx;
  if (s.has_state_total) ctx.state_totals[{"MI", 1923}] = kStateTotal;
  ctx.state_population[{"MI", 1923}] = kStateTotal / kStateRate;
  if (s.has_population) {
    ctx.population.emplace("MI-001",
                           PopulationSeries("MI-001", {{1920, kCountyPopulation}, {1930, kCountyPopulation}}));
  }
  std::vector<PanelObservation> readings;
  for (std::size_t i = 0; i < s.readings.size(); ++i) {
    const auto& r = s.readings[i];
    PanelObservation o;
    o.county_id = "MI-001";
    o.state = "MI";
    o.year = 1923;
    o.field = FieldCategory::automobiles;
    o.value = kCountyPopulation * (kStateRate + r.rate_offset);
    o.provenance.document_id = "D" + std::to_string(i);
    o.provenance.state = "MI";
    o.provenance.year = 1923;
    o.provenance.page = 1;
    o.provenance.ingestion_number = r.ingestion;
    o.provenance.vintage_id = "V" + std::to_string(r.vintage_docs);
    o.provenance.model_id = "ensemble";
    for (int m = 0; m < r.support; ++m) o.model_support.insert("m" + std::to_string(m));
    o.models_agree = r.agree;
    o.gold_available = r.gold;
    if (r.vintage_docs > 0) ctx.vintage_documents[o.provenance.vintage_id] = static_cast<std::size_t>(r.vintage_docs);
    TableSummary t;
    t.state = "MI";
    t.year = 1923;
    t.covers_state = r.covers_state;
    if (r.state_sum_error) t.total_vehicles_sum = kStateTotal + *r.state_sum_error;
    ctx.tables[table_id(o.provenance)] = t;
    readings.push_back(std::move(o));
  }
  return {readings, ctx};
}

/// Scripted generator. Each case targets one rule: readings tie on every
/// earlier rule and the targeted rule separates them (or empties out, which
/// exercises skipping). Every fourth case is fully random.
Scenario generate(std::mt19937_64& rng, int target) {
  std::uniform_int_distribution<int> size_dist(1, 4);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> docs(0, 3);
  std::uniform_int_distribution<int> support(1, 3);
  const std::vector<double> offsets = {-0.25, -0.125, 0.0, 0.125, 0.25};
  const std::vector<double> errors = {0.0, 64.0, 128.0, 256.0};
  std::uniform_int_distribution<std::size_t> off_dist(0, offsets.size() - 1);
  std::uniform_int_distribution<std::size_t> err_dist(0, errors.size() - 1);

  Scenario s;
  const int n = target == 0 ? size_dist(rng) : std::max(2, size_dist(rng));
  s.has_state_total = target == 0 ? coin(rng) == 1 : (coin(rng) + coin(rng) + coin(rng)) > 0;
  s.has_population = target == 0 ? coin(rng) == 1 : (coin(rng) + coin(rng) + coin(rng)) > 0;
  std::vector<std::int64_t> ingestion = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  std::shuffle(ingestion.begin(), ingestion.end(), rng);
  for (int i = 0; i < n; ++i) {
    Scenario::Reading r;
    r.ingestion = ingestion[static_cast<std::size_t>(i)];
    if (target == 0) {
      r.vintage_docs = docs(rng);
      r.covers_state = coin(rng) == 1;
      if (coin(rng)) r.state_sum_error = errors[err_dist(rng)];
      r.support = support(rng);
      r.agree = coin(rng) == 1;
      r.rate_offset = offsets[off_dist(rng)];
      r.gold = coin(rng) == 1;
    } else {
      // Tie every rule before the target, randomize from the target on.
      r.vintage_docs = target > 1 ? 2 : docs(rng);
      r.covers_state = target > 2 ? true : coin(rng) == 1;
      r.support = target > 3 ? 2 : support(rng);
      r.agree = target > 4 ? true : coin(rng) == 1;
      if (target > 5) {
        r.state_sum_error = 64.0;
      } else if (coin(rng)) {
        r.state_sum_error = errors[err_dist(rng)];
      }
      r.rate_offset = target > 6 ? 0.125 : offsets[off_dist(rng)];
      r.gold = target > 7 ? false : coin(rng) == 1;
    }
    s.readings.push_back(r);
  }
  return s;
}

void duplicate_cascade() {
  std::mt19937_64 rng(8);
  Check check;
  std::map<int, std::size_t> decided;
  std::map<int, std::size_t> skipped;
  std::size_t cases = 0;
  std::size_t agree = 0;
  for (; cases < 4000; ++cases) {
    const int target = cases % 4 == 3 ? 0 : static_cast<int>(1 + (cases / 4 * 3 + cases % 4) % 8);
    const Scenario s = generate(rng, target);
    const OracleOutcome want = dedup_oracle(s);
    auto [readings, ctx] = realize(s);
    const Resolution got = resolve_duplicates(readings, ctx);
    const bool same = readings[got.index].provenance.ingestion_number == want.ingestion &&
                      got.deciding_rule == want.rule && got.skipped_rules == want.skipped;
    check.expect(same, "case " + std::to_string(cases));
    if (same) ++agree;
    ++decided[want.rule];
    for (int r : want.skipped) ++skipped[r];

    // Permutation invariance on the same case.
    std::vector<PanelObservation> reversed(readings.rbegin(), readings.rend());
    const Resolution back = resolve_duplicates(reversed, ctx);
    check.expect(reversed[back.index].provenance.ingestion_number == want.ingestion,
                 "permutation " + std::to_string(cases));
  }
  for (int rule = 1; rule <= 8; ++rule) {
    check.expect(decided[rule] > 0, "no case decided by rule " + std::to_string(rule));
  }
  for (int rule = 1; rule <= 7; ++rule) {
    // Rules 1 and 3 always score every reading and cannot empty out.
    if (rule == 1 || rule == 3) continue;
    check.expect(skipped[rule] > 0, "no case skipped rule " + std::to_string(rule));
  }
  std::string coverage;
  for (int rule = 1; rule <= 8; ++rule) {
    coverage += (rule > 1 ? " " : "") + std::to_string(rule) + ":" + std::to_string(decided[rule]);
  }
  report("duplicate_cascade", check.ok(),
         std::to_string(agree) + "/" + std::to_string(cases) + " cases agree with oracle; decided by rule " + coverage +
             (check.ok() ? "" : "; " + check.summary()));
}

// ---------------------------------------------------------------------------

void outlier_boundaries() {
  Check check;
  const OutlierThresholds t;
  struct Case {
    const char* name;
    std::function<bool(double)> flagged;
    double threshold;
    bool flag_above;
  };
  const std::vector<Case> cases = {
      {"population", [&](double r) { return population_ratio_flagged(r, t); }, 2.0, true},
      {"crossfield low", [&](double r) { return crossfield_ratio_flagged(r, t); }, 0.3, false},
      {"crossfield high", [&](double r) { return crossfield_ratio_flagged(r, t); }, 1.0, true},
      {"dispersion", [&](double r) { return dispersion_ratio_flagged(r, t); }, 0.5, true},
  };
  std::size_t probes = 0;
  for (const auto& c : cases) {
    const double up = std::nextafter(c.threshold, INFINITY);
    const double down = std::nextafter(c.threshold, -INFINITY);
    const double up_scaled = c.threshold * (1 + 1e-12);
    const double down_scaled = c.threshold * (1 - 1e-12);
    check.expect(!c.flagged(c.threshold), std::string(c.name) + " at threshold");
    check.expect(c.flagged(up) == c.flag_above, std::string(c.name) + " +1ulp");
    check.expect(c.flagged(down) == !c.flag_above, std::string(c.name) + " -1ulp");
    check.expect(c.flagged(up_scaled) == c.flag_above, std::string(c.name) + " +1e-12");
    check.expect(c.flagged(down_scaled) == !c.flag_above, std::string(c.name) + " -1e-12");
    probes += 5;
  }

  // Through the detectors with integer counts.
  auto obs = [](const std::string& county, int year, FieldCategory f, double v) {
    PanelObservation o;
    o.county_id = county;
    o.state = "MI";
    o.year = year;
    o.field = f;
    o.value = v;
    return o;
  };
  PopulationTable pop;
  pop.emplace("MI-001", PopulationSeries("MI-001", {{1920, 1000.0}, {1930, 1000.0}}));
  check.expect(detect_population_outliers({obs("MI-001", 1923, FieldCategory::automobiles, 2000)}, pop).empty(),
               "population 2000/1000");
  check.expect(detect_population_outliers({obs("MI-001", 1923, FieldCategory::automobiles, 2001)}, pop).size() == 1,
               "population 2001/1000");
  auto cross = [&](double autos) {
    return detect_crossfield_outliers({obs("MI-001", 1923, FieldCategory::automobiles, autos),
                                       obs("MI-001", 1923, FieldCategory::total_vehicles, 1000)})
        .size();
  };
  check.expect(cross(300) == 0 && cross(299) == 1 && cross(1000) == 0 && cross(1001) == 1, "crossfield counts");
  auto dup = [&](double a, double b) {
    return detect_duplicate_outliers(
               {obs("MI-001", 1923, FieldCategory::automobiles, a), obs("MI-001", 1923, FieldCategory::automobiles, b)})
        .size();
  };
  check.expect(dup(100, 300) == 0 && dup(100, 301) == 1 && dup(100, 100) == 0, "duplicate dispersion");

  // Worked timeseries examples.
  // The endpoints of this series also satisfy the first/last sub-rules
  // (150% and 175% changes on values above 500); the reversal is the middle point.
  std::vector<std::size_t> reversals;
  for (const auto& [i, rule] : timeseries_flags({1000, 400, 1100}, t)) {
    if (rule == "reversal") reversals.push_back(i);
  }
  check.expect(reversals == std::vector<std::size_t>{1}, "(1000, 400, 1100)");
  check.expect(timeseries_flags({750, 750, 750, 750}, t).empty(), "constant series");
  const auto first = timeseries_flags({600, 200}, t);
  check.expect(!first.empty() && first[0].first == 0 && first[0].second == "first", "(600, 200)");

  report("outlier_boundaries", check.ok(),
         std::to_string(probes) + " threshold probes, detector counts and 3 timeseries examples" +
             (check.ok() ? "" : "; " + check.summary()));
}

// ---------------------------------------------------------------------------

EvalCell eval_cell(const std::string& table, double truth, std::optional<double> extracted, int i) {
  EvalCell c;
  c.table_id = table;
  c.state = "MI";
  c.year = 1923;
  c.county_id = "C" + std::to_string(i);
  c.field = FieldCategory::automobiles;
  c.truth = truth;
  c.extracted = extracted;
  return c;
}

void evaluation_metrics() {
  Check check;
  // 5 exact, 2 missing, 3 incorrect.
  const std::vector<std::pair<double, std::optional<double>>> fixture = {
      {733, 733}, {1121, 1121}, {7631, 7631}, {2169, 2169}, {1175, 1175},
      {39, std::nullopt}, {158, std::nullopt}, {909, 900}, {48, 84}, {3, 8}};
  std::vector<EvalCell> cells;
  for (std::size_t i = 0; i < fixture.size(); ++i) {
    cells.push_back(eval_cell(i < 5 ? "T1" : "T2", fixture[i].first, fixture[i].second, static_cast<int>(i)));
  }
  const EvalReport r = evaluate_cells(cells);
  check.expect(text::fixed(r.missing_output_pct, 1) == "20.0", "missing " + text::fixed(r.missing_output_pct, 6));
  check.expect(text::fixed(r.incorrect_output_pct, 1) == "30.0",
               "incorrect " + text::fixed(r.incorrect_output_pct, 6));
  check.expect(text::fixed(r.total_error_rate_pct, 1) == "50.0", "total " + text::fixed(r.total_error_rate_pct, 6));
  check.expect(r.total_error_rate_pct == r.missing_output_pct + r.incorrect_output_pct, "decomposition identity");

  std::vector<EvalCell> identity;
  for (int i = 0; i < 25; ++i) identity.push_back(eval_cell("T", 17.0 * i + 4, 17.0 * i + 4, i));
  const EvalReport id = evaluate_cells(identity);
  check.expect(text::fixed(id.r_squared_pct, 1) == "100.0", "identity R2 " + text::fixed(id.r_squared_pct, 6));
  check.expect(id.total_error_rate_pct == 0.0, "identity error rate");

  const EvalReport cheb = evaluate_cells({eval_cell("MI-1923", 158, 178, 0), eval_cell("MI-1923", 733, 733, 1)});
  const double units = cheb.error_only.mean_error_units;
  const double pct = cheb.error_only.mean_error_pct;
  check.expect(cheb.incorrect == 1, "Cheboygan incorrect");
  check.expect(units == 20.0, "Cheboygan units");
  check.expect(std::abs(pct - 12.66) <= 0.01, "Cheboygan pct " + text::fixed(pct, 4));

  report("evaluation_metrics", check.ok(),
         "missing " + text::fixed(r.missing_output_pct, 1) + "%, incorrect " + text::fixed(r.incorrect_output_pct, 1) +
             "%, total " + text::fixed(r.total_error_rate_pct, 1) + "%, identity R2 " +
             text::fixed(id.r_squared_pct, 1) + ", Cheboygan +" + text::fixed(units, 0) + " units / +" +
             text::fixed(pct, 2) + "%" + (check.ok() ? "" : "; " + check.summary()));
}

// ---------------------------------------------------------------------------

double stdev(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

bool same_report(const EvalReport& a, const EvalReport& b) {
  auto eq = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  return eq(a.r_squared_pct, b.r_squared_pct) && eq(a.total_error_rate_pct, b.total_error_rate_pct) &&
         eq(a.missing_output_pct, b.missing_output_pct) && eq(a.incorrect_output_pct, b.incorrect_output_pct) &&
         eq(a.mean_error_units, b.mean_error_units) && eq(a.mean_abs_error_units, b.mean_abs_error_units) &&
         eq(a.mean_error_pct, b.mean_error_pct) && eq(a.mean_abs_error_pct, b.mean_abs_error_pct) &&
         eq(a.median_abs_error_pct, b.median_abs_error_pct) && a.cells == b.cells && a.matched == b.matched &&
         a.missing == b.missing && a.incorrect == b.incorrect && eval_report_json(a) == eval_report_json(b);
}

void convergence_harness() {
  Check check;
  const auto cells = synth::eval_cells(200, 20, 0.03, 0.1, 77);
  ConvergenceConfig config;
  config.folds = 100;
  config.step = 1;
  config.seed = 1923;
  const ConvergenceResult result = convergence_analysis(cells, config);
  check.expect(result.points.size() == 50, "points " + std::to_string(result.points.size()));

  const std::set<std::string> eval(result.eval_tables.begin(), result.eval_tables.end());
  std::vector<EvalCell> split;
  for (const auto& c : cells) {
    if (eval.count(c.table_id)) split.push_back(c);
  }
  const EvalReport full = evaluate_cells(split);
  const bool exact = !result.points.empty() && same_report(result.points.back().report, full);
  check.expect(exact, "final point differs from full evaluation split");

  std::vector<double> head, tail;
  for (std::size_t i = 0; i < 10 && i < result.points.size(); ++i) {
    head.push_back(result.points[i].report.total_error_rate_pct);
    tail.push_back(result.points[result.points.size() - 10 + i].report.total_error_rate_pct);
  }
  const double sd_head = stdev(head);
  const double sd_tail = stdev(tail);
  check.expect(sd_tail < sd_head, "curve does not settle");
  report("convergence_harness", check.ok(),
         std::to_string(result.points.size()) + " points, final point " + (exact ? "bit-exact" : "differs") +
             ", sd first 10 " + text::fixed(sd_head, 4) + " vs last 10 " + text::fixed(sd_tail, 4) +
             (check.ok() ? "" : "; " + check.summary()));
}

// ---------------------------------------------------------------------------
// Econometrics oracles written directly against the definitions.

struct Oracle {
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;
};

/// Dummy-variable OLS (full design matrix with one dummy per level of the
/// first factor and all-but-one level of later ones) with the CR1 sandwich
/// (G/(G-1)) * ((N-1)/(N-K)) (X'X)^-1 (sum_g X_g' e_g e_g' X_g) (X'X)^-1 on the
/// slope block.
Oracle dummy_sandwich(const RegressionSample& s) {
  const auto n = static_cast<Eigen::Index>(s.size());
  const auto k = static_cast<Eigen::Index>(s.x.size());
  std::vector<Eigen::VectorXd> cols;
  for (Eigen::Index j = 0; j < k; ++j) cols.push_back(Eigen::Map<const Eigen::VectorXd>(s.x[j].data(), n));
  for (std::size_t f = 0; f < s.fe.size(); ++f) {
    std::set<std::string> levels(s.fe[f].begin(), s.fe[f].end());
    bool skip = f > 0;
    for (const auto& level : levels) {
      if (skip) {
        skip = false;
        continue;
      }
      Eigen::VectorXd d(n);
      for (Eigen::Index i = 0; i < n; ++i) d[i] = s.fe[f][i] == level ? 1.0 : 0.0;
      cols.push_back(d);
    }
  }
  if (s.fe.empty()) cols.push_back(Eigen::VectorXd::Ones(n));
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = cols[j];
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(s.y.data(), n);

  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::VectorXd b = xtx_inv * x.transpose() * y;
  const Eigen::VectorXd e = y - x * b;
  std::map<std::string, Eigen::VectorXd> scores;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = scores.try_emplace(s.cluster[static_cast<std::size_t>(i)], Eigen::VectorXd::Zero(x.cols())).first;
    it->second += x.row(i).transpose() * e[i];
  }
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  for (const auto& [g, u] : scores) meat += u * u.transpose();
  const double groups = static_cast<double>(scores.size());
  const double scale = groups / (groups - 1.0) * (static_cast<double>(n) - 1.0) / static_cast<double>(n - k);
  const Eigen::MatrixXd v = scale * xtx_inv * meat * xtx_inv;
  return {b.head(k), v.topLeftCorner(k, k)};
}

RegressionSample random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> rows(40, 200);
  std::uniform_int_distribution<int> kdist(1, 3);
  std::uniform_int_distribution<int> fdist(1, 2);
  std::normal_distribution<double> z;
  const int n = rows(rng);
  const int k = kdist(rng);
  const int factors = fdist(rng);
  std::uniform_int_distribution<int> g1(0, 7), g2(0, 4), cl(0, 5);
  RegressionSample s;
  s.x.assign(static_cast<std::size_t>(k), {});
  for (int j = 0; j < k; ++j) s.x_names.push_back("x" + std::to_string(j));
  s.fe.assign(static_cast<std::size_t>(factors), {});
  for (int f = 0; f < factors; ++f) s.fe_names.push_back("f" + std::to_string(f));
  for (int i = 0; i < n; ++i) {
    const int a = g1(rng);
    const int b = g2(rng);
    s.fe[0].push_back("a" + std::to_string(a));
    if (factors > 1) s.fe[1].push_back("b" + std::to_string(b));
    s.cluster.push_back("g" + std::to_string(cl(rng)));
    double y = 0.4 * a - 0.2 * b + z(rng);
    for (int j = 0; j < k; ++j) {
      const double v = z(rng) + 0.3 * a;
      s.x[static_cast<std::size_t>(j)].push_back(v);
      y += (0.5 + j) * v;
    }
    s.y.push_back(y);
  }
  return s;
}

double persistence_slope(std::uint64_t seed, double* se = nullptr) {
  const synth::PanelPair pair = synth::persistence_dgp(2000, 40, 0.7, seed);
  const PairedEstimate e = persistence_spec(pair.llm, pair.gold, 1930);
  if (se) *se = e.llm.se.at(0);
  return e.llm.coef.at(0);
}

void econometrics() {
  Check check;
  const auto start = Clock::now();
  std::mt19937_64 rng(50);
  double worst_coef = 0.0;
  double worst_se = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const RegressionSample s = random_instance(rng);
    AbsorbOptions options;
    options.drop_singletons = false;
    options.tolerance = 1e-13;
    const RegressionResult absorbed = fit_fe_ols(s, options);
    const RegressionResult dummy = fit_dummy_ols(s);
    const Oracle oracle = dummy_sandwich(s);
    for (std::size_t j = 0; j < s.x.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      worst_coef = std::max({worst_coef, std::abs(absorbed.coef[j] - dummy.coef[j]),
                             std::abs(absorbed.coef[j] - oracle.beta[jj])});
      worst_se = std::max({worst_se, std::abs(absorbed.se[j] - std::sqrt(oracle.vcov(jj, jj))),
                           std::abs(dummy.se[j] - std::sqrt(oracle.vcov(jj, jj)))});
    }
  }
  check.expect(worst_coef < 1e-8, "absorbed vs dummy coefficients");
  check.expect(worst_se < 1e-8, "CR1 vs sandwich oracle");

  const synth::PanelPair same = synth::persistence_dgp(500, 20, 0.7, 3);
  const PairedEstimate identical = persistence_spec(same.gold, same.gold, 1930);
  check.expect(identical.test.p == 1.0, "identical stacked p = " + text::fixed(identical.test.p, 17));

  double se = 0.0;
  const double rho = persistence_slope(1923, &se);
  check.expect(std::abs(rho - 0.7) < 3 * se, "rho " + text::fixed(rho, 4));
  // Replications give a Monte-Carlo standard error for the estimator itself.
  std::vector<double> draws;
  for (std::uint64_t seed = 100; seed < 120; ++seed) draws.push_back(persistence_slope(seed));
  double mean = 0.0;
  for (double d : draws) mean += d;
  mean /= static_cast<double>(draws.size());
  double ss = 0.0;
  for (double d : draws) ss += (d - mean) * (d - mean);
  const double mc_sd = std::sqrt(ss / static_cast<double>(draws.size() - 1));
  const double mc_se = mc_sd / std::sqrt(static_cast<double>(draws.size()));
  check.expect(std::abs(rho - 0.7) < 3 * mc_sd, "single draw outside 3 Monte-Carlo SDs");
  check.expect(std::abs(mean - 0.7) < 3 * mc_se, "replication mean " + text::fixed(mean, 4));

  const double elapsed = seconds_since(start);
  check.expect(elapsed < 60.0, "runtime");
  std::ostringstream detail;
  detail << "50 instances max |coef diff| " << worst_coef << ", max |SE diff| " << worst_se
         << ", identical p = " << text::fixed(identical.test.p, 1) << ", rho " << text::fixed(rho, 4) << " (SE "
         << text::fixed(se, 4) << "), 20-rep mean " << text::fixed(mean, 4) << " (MC SE " << text::fixed(mc_se, 4)
         << "), " << text::fixed(elapsed, 2) << " s";
  report("econometrics", check.ok(), detail.str() + (check.ok() ? "" : "; " + check.summary()));
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = text::read_file(e.path().string());
  }
  return out;
}

void end_to_end_determinism(const fs::path& work) {
  const fs::path dir = work / "e2e";
  fs::remove_all(dir);
  synth::CorpusOptions o;
  o.reference_dir = HISTPANEL_REFERENCE;
  const std::string config_path = synth::write_pipeline_corpus(dir.string(), o).config_path;
  RunConfig config = RunConfig::load(config_path);
  config.output_dir = (dir / "run_1").string();
  Pipeline(config).run_all();
  config.output_dir = (dir / "run_2").string();
  Pipeline(config).run_all();
  const auto a = snapshot(dir / "run_1");
  const auto b = snapshot(dir / "run_2");
  std::size_t differing = 0;
  std::string first;
  for (const auto& [rel, body] : a) {
    auto it = b.find(rel);
    if (it == b.end() || it->second != body) {
      ++differing;
      if (first.empty()) first = rel;
    }
  }
  const bool ok = !a.empty() && a.size() == b.size() && differing == 0;
  report("end_to_end_determinism", ok,
         std::to_string(a.size()) + " files compared, " + std::to_string(differing) + " differ" +
             (first.empty() ? "" : " (first: " + first + ")"));
}

// ---------------------------------------------------------------------------

void cost_report() {
  Check check;
  // Input 3e-6, output 15e-6 per token: 17500 * 3 / (17500 * 3 + 9000 * 15) = 0.28.
  const PriceTable prices = {{"claude", {3e-6, 15e-6}}, {"gemini", {3e-6, 15e-6}}};
  std::vector<UsageRecord> usage;
  for (int i = 0; i < 40; ++i) {
    usage.push_back({17500, 9000, i % 2 ? "claude" : "gemini"});
  }
  const CostReport full = estimate_cost(usage, prices, 20, false);
  const CostReport batch = estimate_cost(usage, prices, 20, true);
  check.expect(std::abs(full.input_share - 0.28) <= 0.001, "input share " + text::fixed(full.input_share, 6));
  check.expect(batch.total == full.total / 2, "batch total");
  check.expect(batch.input_cost == full.input_cost / 2 && batch.output_cost == full.output_cost / 2, "batch parts");
  check.expect(batch.per_table_mean == full.per_table_mean / 2, "batch per-table mean");
  for (const auto& [model, total] : full.per_model_total) {
    check.expect(batch.per_model_total.at(model) == total / 2, "batch " + model);
  }
  check.expect(batch.input_share == full.input_share, "batch share");
  report("cost_report", check.ok(),
         "input share " + text::fixed(full.input_share, 4) + ", total " + text::fixed(full.total, 4) + " vs batch " +
             text::fixed(batch.total, 4) + (check.ok() ? "" : "; " + check.summary()));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "histpanel_acceptance";
  fs::create_directories(work);

  run("structural_validator", structural_validator);
  run("ensemble_law", ensemble_law);
  run("duplicate_cascade", duplicate_cascade);
  run("outlier_boundaries", outlier_boundaries);
  run("evaluation_metrics", evaluation_metrics);
  run("convergence_harness", convergence_harness);
  run("econometrics", econometrics);
  run("end_to_end_determinism", [&] { end_to_end_determinism(work); });
  run("cost_report", cost_report);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
