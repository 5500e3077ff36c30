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

#include <random>

#include "histpanel/error.hpp"
#include "histpanel/table_model.hpp"
#include "support.hpp"

using namespace histpanel;
using testing_support::load_fixture;
using testing_support::michigan_1923;

TEST(ParseRawCsv, AlconaRow) {
  const RawTable t = parse_raw_csv(
      "COUNTIES,Passenger Cars,Commercial Cars,Motor Cycles,Trailers\nAlcona,733,39,3,2", michigan_1923());
  ASSERT_EQ(t.header_rows.size(), 1u);
  ASSERT_EQ(t.data_rows.size(), 1u);
  EXPECT_EQ(t.column_count, 5u);
  EXPECT_EQ(t.data_rows[0][0].raw, "Alcona");
  const std::int64_t expected[] = {733, 39, 3, 2};
  for (int c = 0; c < 4; ++c) {
    ASSERT_TRUE(t.data_rows[0][c + 1].is_numeric());
    EXPECT_EQ(t.data_rows[0][c + 1].value, expected[c]);
  }
}

TEST(ParseRawCsv, EmptyInputFails) {
  EXPECT_THROW(parse_raw_csv("", michigan_1923()), ParseFailure);
}

TEST(ParseRawCsv, ProseFails) {
  EXPECT_THROW(parse_raw_csv("I could not read this table reliably.", michigan_1923()), ParseFailure);
}

TEST(ParseRawCsv, QuotedCommaGroupedCount) {
  const RawTable t = parse_raw_csv("County,Autos\nArenac,\"1,175\"", michigan_1923());
  ASSERT_EQ(t.data_rows.size(), 1u);
  ASSERT_TRUE(t.data_rows[0][1].is_numeric());
  EXPECT_EQ(t.data_rows[0][1].value, 1175);
}

TEST(ParseRawCsv, StackedHeadersJoinTopToBottom) {
  const RawTable t = parse_raw_csv("County,Passenger,Commercial\n,Cars,Cars\nAlcona,733,39\n", michigan_1923());
  ASSERT_EQ(t.header_rows.size(), 2u);
  EXPECT_EQ(t.headers[1], "Passenger Cars");
  EXPECT_EQ(t.headers[2], "Commercial Cars");
  EXPECT_EQ(t.data_rows.size(), 1u);
}

TEST(ParseRawCsv, CodeFenceTolerated) {
  const RawTable t = parse_raw_csv("```csv\nCounty,Autos\nAlcona,733\n```\n", michigan_1923());
  ASSERT_EQ(t.data_rows.size(), 1u);
  EXPECT_EQ(t.data_rows[0][1].value, 733);
}

TEST(NormalizeCell, Examples) {
  const CellValue grouped = normalize_cell("12,847");
  ASSERT_TRUE(grouped.is_numeric());
  EXPECT_EQ(grouped.value, 12847);
  EXPECT_TRUE(normalize_cell("").is_empty());
  EXPECT_TRUE(normalize_cell("900 234").is_text());
}

TEST(NormalizeCell, EmptyMarkers) {
  for (const char* marker : {"", "-", "\xE2\x80\x94", ".", "\xE2\x80\xA6", "  "}) {
    EXPECT_TRUE(normalize_cell(marker).is_empty()) << "marker '" << marker << "'";
  }
}

TEST(NormalizeCell, FractionsAndWordsAreText) {
  EXPECT_TRUE(normalize_cell("12.5").is_text());
  EXPECT_TRUE(normalize_cell("n/a").is_text());
  EXPECT_TRUE(normalize_cell("2671 1575").is_text());
  EXPECT_TRUE(normalize_cell("-5").is_text());
}

TEST(NormalizeCell, RenderRoundTrip) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::int64_t> dist(0, 50'000'000);
  for (int i = 0; i < 2000; ++i) {
    const std::int64_t v = i < 10 ? i * 999 : dist(rng);
    const CellValue c = normalize_cell(render_count(v));
    ASSERT_TRUE(c.is_numeric()) << render_count(v);
    EXPECT_EQ(c.value, v);
  }
  EXPECT_EQ(render_count(12847), "12,847");
}

TEST(ContentValueCount, MergedCellsCountEachNumber) {
  EXPECT_EQ(content_value_count(normalize_cell("")), 0u);
  EXPECT_EQ(content_value_count(normalize_cell("733")), 1u);
  EXPECT_EQ(content_value_count(normalize_cell("2671 1575")), 2u);
  EXPECT_EQ(content_value_count(normalize_cell("Alcona")), 1u);
}

TEST(ValidateStructure, MichiganLlmFixtureIsSound) {
  const StructuralReport r = validate_structure(load_fixture("michigan_1923_llm.csv", michigan_1923()));
  EXPECT_FALSE(r.is_critical_failure);
  EXPECT_TRUE(r.failed_conditions.empty());
  for (std::size_t c : {1u, 2u, 3u, 4u}) {
    EXPECT_NE(std::find(r.valid_column_indices.begin(), r.valid_column_indices.end(), c),
              r.valid_column_indices.end())
        << "column " << c;
  }
}

TEST(ValidateStructure, MichiganBaselineFixtureFails) {
  const StructuralReport r =
      validate_structure(load_fixture("michigan_1923_baseline.csv", michigan_1923("baseline")));
  EXPECT_TRUE(r.is_critical_failure);
  EXPECT_TRUE(r.has(StructuralCondition::extra_cells));
}

TEST(ValidateStructure, ZeroDataRows) {
  const StructuralReport r = validate_structure(parse_raw_csv("County,Autos,Trucks\n", michigan_1923()));
  EXPECT_TRUE(r.is_critical_failure);
  ASSERT_EQ(r.failed_conditions.size(), 1u);
  EXPECT_EQ(r.failed_conditions[0], StructuralCondition::empty_table);
}

TEST(ValidateStructure, EveryColumnHoldingTextHasNoValidColumns) {
  const StructuralReport r =
      validate_structure(parse_raw_csv("County,Autos,Trucks\nAlcona,733,abc\nAlger,n/a,45\n", michigan_1923()));
  EXPECT_TRUE(r.has(StructuralCondition::no_valid_columns));
  EXPECT_TRUE(r.valid_column_indices.empty());
}

TEST(ValidateStructure, AllEmptyColumnIsNotValidButDoesNotFailAlone) {
  const StructuralReport r =
      validate_structure(parse_raw_csv("County,Autos,Buses\nAlcona,733,\nAlger,1121,-\n", michigan_1923()));
  EXPECT_FALSE(r.is_critical_failure);
  EXPECT_EQ(r.valid_column_indices, std::vector<std::size_t>{1});
}

TEST(ValidateStructure, TrailingPaddingIsNotExtra) {
  const StructuralReport r =
      validate_structure(parse_raw_csv("County,Autos,Trucks\nAlcona,733,39,,\n", michigan_1923()));
  EXPECT_FALSE(r.is_critical_failure);
}

TEST(ValidateStructure, AppendingBeyondHeaderFlipsExtraCells) {
  RawTable t = load_fixture("michigan_1923_llm.csv", michigan_1923());
  ASSERT_FALSE(validate_structure(t).has(StructuralCondition::extra_cells));
  for (std::size_t row = 0; row < t.data_rows.size(); ++row) {
    RawTable copy = t;
    copy.data_rows[row].resize(copy.column_count);
    copy.data_rows[row].push_back(normalize_cell("17"));
    EXPECT_TRUE(validate_structure(copy).has(StructuralCondition::extra_cells)) << "row " << row;
  }
}

TEST(ValidateStructure, Deterministic) {
  const RawTable t = load_fixture("michigan_1923_baseline.csv", michigan_1923("baseline"));
  const StructuralReport a = validate_structure(t);
  const StructuralReport b = validate_structure(t);
  EXPECT_EQ(a.failed_conditions, b.failed_conditions);
  EXPECT_EQ(a.valid_column_indices, b.valid_column_indices);
}

TEST(TableId, IgnoresModel) {
  EXPECT_EQ(table_id(michigan_1923("claude")), table_id(michigan_1923("gemini")));
}
