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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "histpanel/error.hpp"
#include "histpanel/harmonize.hpp"
#include "histpanel/panel.hpp"
#include "support.hpp"

using namespace histpanel;
using testing_support::load_fixture;
using testing_support::michigan_1923;

namespace {

const ReferenceData& refs() {
  static const ReferenceData r = ReferenceData::load(testing_support::reference_dir());
  return r;
}

AlignedTable align(const RawTable& raw, Layout layout = Layout::county_sorted) {
  DeterministicFieldMapper mapper(refs().fields);
  const FieldMapping fields = harmonize_fields(raw.headers, mapper);
  std::vector<std::string> names;
  if (layout == Layout::year_sorted) {
    names.push_back(raw.provenance.entity);
  } else {
    for (const auto& row : raw.data_rows) names.push_back(row[0].raw);
  }
  const CountyMapping counties = standardize_counties(names, refs().county_ref(raw.provenance.state));
  return align_table(raw, fields, counties, layout);
}

PanelObservation reading(std::int64_t ingestion, const std::string& vintage, double value = 100.0) {
  PanelObservation o;
  o.county_id = "MI-001";
  o.state = "MI";
  o.year = 1923;
  o.field = FieldCategory::automobiles;
  o.value = value;
  o.provenance.document_id = "DOC-" + std::to_string(ingestion);
  o.provenance.state = "MI";
  o.provenance.year = 1923;
  o.provenance.page = 1;
  o.provenance.vintage_id = vintage;
  o.provenance.ingestion_number = ingestion;
  o.provenance.model_id = "ensemble";
  o.model_support = {"claude"};
  return o;
}

}  // namespace

TEST(AlignTable, MichiganTwentyByFour) {
  const AlignedTable t = align(load_fixture("michigan_1923_llm.csv", michigan_1923()));
  ASSERT_EQ(t.rows.size(), 20u);
  std::set<FieldCategory> fields;
  for (const auto& [key, row] : t.rows) {
    EXPECT_EQ(key.year, 1923);
    for (const auto& [f, cell] : row) fields.insert(f);
  }
  EXPECT_EQ(fields, (std::set<FieldCategory>{FieldCategory::automobiles, FieldCategory::trucks,
                                             FieldCategory::motorcycles, FieldCategory::trailers}));
  EXPECT_EQ(t.stats.mapped_rows, 20u);
  EXPECT_EQ(t.stats.mapped_columns, 4u);
  const std::string cheboygan = refs().county_ref("MI").find_canonical("Cheboygan")->county_id;
  EXPECT_EQ(t.value({cheboygan, 1923}, FieldCategory::trucks), 178.0);
  // Arenac's motorcycle cell is blank in the source.
  const std::string arenac = refs().county_ref("MI").find_canonical("Arenac")->county_id;
  EXPECT_FALSE(t.value({arenac, 1923}, FieldCategory::motorcycles).has_value());
}

TEST(AlignTable, NoMappedHeadersIsEmpty) {
  const RawTable raw = parse_raw_csv("COUNTIES,Fees,Licences\nAlcona,12,3\n", michigan_1923());
  EXPECT_THROW(align(raw), AlignmentEmpty);
}

TEST(AlignTable, UnmappedCountiesDropped) {
  const RawTable raw = parse_raw_csv("COUNTIES,Autos\nAlcona,12\nAtlantis,3\n", michigan_1923());
  const AlignedTable t = align(raw);
  EXPECT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.stats.dropped_rows, 1u);
}

TEST(AlignTable, YearSortedMatchesCountySorted) {
  TableProvenance p = michigan_1923();
  p.document_id = "MI-WAYNE";
  p.entity = "Wayne";
  const RawTable ys = parse_raw_csv("YEAR,Passenger Cars,Commercial Cars\n1920,1510,160\n1921,1702,181\n", p);
  const AlignedTable year_sorted = align(ys, Layout::year_sorted);

  std::map<RowKey, AlignedRow> expected;
  for (int year : {1920, 1921}) {
    TableProvenance cp = michigan_1923();
    cp.year = year;
    const std::string body = year == 1920 ? "COUNTIES,Passenger Cars,Commercial Cars\nWayne,1510,160\n"
                                          : "COUNTIES,Passenger Cars,Commercial Cars\nWayne,1702,181\n";
    for (const auto& [k, row] : align(parse_raw_csv(body, cp)).rows) expected[k] = row;
  }
  EXPECT_EQ(year_sorted.rows, expected);
}

TEST(DeriveTotal, Examples) {
  using Row = std::map<FieldCategory, std::optional<double>>;
  EXPECT_EQ(derive_total_vehicles(Row{{FieldCategory::automobiles, 7631.0},
                                      {FieldCategory::trucks, 909.0},
                                      {FieldCategory::trailers, 48.0}})
                .value,
            8492.0);
  EXPECT_EQ(derive_total_vehicles(Row{{FieldCategory::total_vehicles, 5000.0}, {FieldCategory::automobiles, 4000.0}})
                .value,
            5000.0);
  EXPECT_FALSE(derive_total_vehicles(Row{{FieldCategory::automobiles, 733.0}}).value.has_value());
}

TEST(DeriveTotal, NegativeWithheld) {
  using Row = std::map<FieldCategory, std::optional<double>>;
  const DerivedTotal d = derive_total_vehicles(
      Row{{FieldCategory::automobiles, 10.0}, {FieldCategory::trucks, 5.0}, {FieldCategory::trailers, 40.0}});
  EXPECT_TRUE(d.anomaly);
  EXPECT_FALSE(d.value.has_value());
}

TEST(DeriveTotal, NeverNegative) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> v(0, 100);
  std::bernoulli_distribution present(0.7);
  for (int i = 0; i < 2000; ++i) {
    std::map<FieldCategory, std::optional<double>> row;
    for (auto f : {FieldCategory::automobiles, FieldCategory::trucks, FieldCategory::trailers,
                   FieldCategory::total_vehicles}) {
      if (present(rng)) row[f] = v(rng);
    }
    const DerivedTotal d = derive_total_vehicles(row);
    if (d.value) EXPECT_GE(*d.value, 0.0);
  }
}

TEST(ResolveDuplicates, Singleton) {
  const Resolution r = resolve_duplicates({reading(3, "A")}, DedupContext{});
  EXPECT_EQ(r.index, 0u);
  EXPECT_EQ(r.deciding_rule, 0);
}

TEST(ResolveDuplicates, MoreFrequentVintageWins) {
  DedupContext ctx;
  ctx.vintage_documents = {{"V12", 12}, {"V3", 3}};
  const Resolution r = resolve_duplicates({reading(1, "V3", 90), reading(2, "V12", 95)}, ctx);
  EXPECT_EQ(r.index, 1u);
  EXPECT_EQ(r.deciding_rule, 1);
}

TEST(ResolveDuplicates, FourWayTieFallsToIngestion) {
  const std::vector<PanelObservation> readings = {reading(9, "A"), reading(4, "A"), reading(11, "A"),
                                                  reading(6, "A")};
  const Resolution r = resolve_duplicates(readings, DedupContext{});
  EXPECT_EQ(readings[r.index].provenance.ingestion_number, 4);
  EXPECT_EQ(r.deciding_rule, 8);
}

TEST(ResolveDuplicates, EarlierRuleWins) {
  // Rule 2 prefers the state-covering table (first); rule 3 would prefer the
  // two-model reading (second).
  DedupContext ctx;
  std::vector<PanelObservation> readings = {reading(1, "A"), reading(2, "A")};
  readings[1].model_support = {"claude", "gemini"};
  TableSummary covering;
  covering.state = "MI";
  covering.year = 1923;
  covering.covers_state = true;
  ctx.tables[table_id(readings[0].provenance)] = covering;
  const Resolution r = resolve_duplicates(readings, ctx);
  EXPECT_EQ(r.index, 0u);
  EXPECT_EQ(r.deciding_rule, 2);
}

TEST(ResolveDuplicates, EmptyRuleSkipped) {
  // Nobody has gold: rule 7 would keep nobody and is skipped.
  const Resolution r = resolve_duplicates({reading(5, "A"), reading(2, "A")}, DedupContext{});
  EXPECT_NE(std::find(r.skipped_rules.begin(), r.skipped_rules.end(), 7), r.skipped_rules.end());
  EXPECT_EQ(r.index, 1u);
}

TEST(ResolveDuplicates, PermutationInvariant) {
  DedupContext ctx;
  ctx.vintage_documents = {{"A", 4}, {"B", 4}, {"C", 1}};
  std::vector<PanelObservation> readings = {reading(7, "A", 10), reading(3, "B", 12), reading(5, "C", 11),
                                            reading(9, "A", 14)};
  readings[0].gold_available = true;
  readings[3].gold_available = true;
  const Resolution base = resolve_duplicates(readings, ctx);
  const double chosen = readings[base.index].value;
  std::vector<std::size_t> order = {0, 1, 2, 3};
  do {
    std::vector<PanelObservation> permuted;
    for (auto i : order) permuted.push_back(readings[i]);
    const Resolution r = resolve_duplicates(permuted, ctx);
    EXPECT_EQ(permuted[r.index].value, chosen);
  } while (std::next_permutation(order.begin(), order.end()));
}

TEST(Population, Interpolation) {
  const PopulationSeries s("MI-001", {{1920, 1000.0}, {1930, 2000.0}});
  EXPECT_EQ(s.interpolated(1925), 1500.0);
  EXPECT_EQ(s.interpolated(1920), 1000.0);
  EXPECT_EQ(s.interpolated(1930), 2000.0);
  EXPECT_FALSE(s.interpolated(1931).has_value());
  EXPECT_FALSE(s.interpolated(1919).has_value());
}

TEST(JoinPopulation, RatesAndExclusions) {
  PopulationTable pop;
  pop.emplace("MI-001", PopulationSeries("MI-001", {{1920, 1000.0}, {1930, 2000.0}}));
  std::vector<PanelObservation> panel = {reading(1, "A", 600), reading(2, "A", 0), reading(3, "A", 50)};
  for (auto& o : panel) o.year = 1925;
  panel[2].county_id = "MI-999";
  const JoinResult j = join_population(panel, pop);
  ASSERT_EQ(j.joined.size(), 2u);
  EXPECT_DOUBLE_EQ(*j.joined[0].per_capita, 0.4);
  EXPECT_DOUBLE_EQ(*j.joined[0].log_per_capita, std::log(0.4));
  EXPECT_FALSE(j.joined[1].log_per_capita.has_value());
  ASSERT_EQ(j.excluded.size(), 1u);
  EXPECT_EQ(j.excluded[0].flags, std::vector<std::string>{"no_population"});
  EXPECT_EQ(j.joined.size() + j.excluded.size(), panel.size());
}

TEST(AssemblePanel, CanonicalOrderAndInfeasibleFilter) {
  const AlignedTable t = align(load_fixture("michigan_1923_llm.csv", michigan_1923()));
  AlignedTable bad = t;
  bad.provenance.document_id = "MI-1923-REPRINT";
  bad.provenance.ingestion_number = 2;
  const std::string alcona = refs().county_ref("MI").find_canonical("Alcona")->county_id;
  bad.rows.at({alcona, 1923})[FieldCategory::automobiles] = AlignedCell{733000.0, {{"claude", 733000.0}}};

  PopulationTable pop;
  for (const auto& e : refs().county_ref("MI").entries) {
    pop.emplace(e.county_id, PopulationSeries(e.county_id, {{1920, 10000.0}, {1930, 12000.0}}));
  }
  const DedupContext ctx = build_dedup_context({t, bad}, refs(), {}, pop);
  const PanelBuild b = assemble_panel({t, bad}, ctx, {});
  // The bad automobiles cell and the total derived from it.
  EXPECT_EQ(b.infeasible_readings, 2u);
  EXPECT_TRUE(std::is_sorted(b.panel.begin(), b.panel.end(), canonical_less));
  std::set<std::tuple<std::string, int, FieldCategory>> keys;
  for (const auto& o : b.panel) {
    EXPECT_TRUE(keys.insert(o.key()).second) << "duplicate key in output";
    if (o.county_id == alcona && o.field == FieldCategory::automobiles) EXPECT_EQ(o.value, 733.0);
    EXPECT_LE(*o.per_capita, kInfeasibleRate);
  }
  std::set<std::tuple<std::string, int, FieldCategory>> expected;
  for (const auto& o : panel_readings({t}, {})) expected.insert(o.key());
  EXPECT_EQ(keys, expected);
}

TEST(AssignVintage, DependsOnStateAndOrder) {
  const std::vector<FieldCategory> a = {FieldCategory::automobiles, FieldCategory::trucks};
  const std::vector<FieldCategory> b = {FieldCategory::trucks, FieldCategory::automobiles};
  EXPECT_EQ(assign_vintage("MI", a), assign_vintage("MI", a));
  EXPECT_NE(assign_vintage("MI", a), assign_vintage("MI", b));
  EXPECT_NE(assign_vintage("MI", a), assign_vintage("IL", a));
}
