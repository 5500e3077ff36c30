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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace histpanel {

enum class CellKind { empty, numeric, text };

/// One extracted cell. `value` is meaningful only for numeric cells and is
/// the separator-stripped integer count.
struct CellValue {
  CellKind kind = CellKind::empty;
  std::string raw;
  std::int64_t value = 0;

  bool is_empty() const { return kind == CellKind::empty; }
  bool is_numeric() const { return kind == CellKind::numeric; }
  bool is_text() const { return kind == CellKind::text; }
  std::optional<std::int64_t> number() const {
    if (kind == CellKind::numeric) return value;
    return std::nullopt;
  }

  friend bool operator==(const CellValue&, const CellValue&) = default;
};

/// Where a table came from. `model_id` is the extracting model, or "gold" /
/// "baseline" for reference sources. `entity` names the county of a
/// year-sorted table (one county, years down the first column) and is empty
/// otherwise.
struct TableProvenance {
  std::string document_id;
  std::string state;
  int year = 0;
  int page = 0;
  std::string vintage_id;
  std::int64_t ingestion_number = 0;
  std::string model_id;
  std::string entity;

  friend bool operator==(const TableProvenance&, const TableProvenance&) = default;
};

/// Identifier of a physical table (document page), shared by every model's
/// extraction of it and by its gold cells.
std::string table_id(const TableProvenance& provenance);

struct RawTable {
  TableProvenance provenance;
  std::vector<std::vector<std::string>> header_rows;
  /// Header fragments of stacked header rows joined top-to-bottom.
  std::vector<std::string> headers;
  std::vector<std::vector<CellValue>> data_rows;
  std::size_t column_count = 0;
};

enum class StructuralCondition { no_valid_columns, extra_cells, empty_table };

std::string_view to_string(StructuralCondition condition);

struct StructuralReport {
  bool is_critical_failure = false;
  std::vector<StructuralCondition> failed_conditions;
  std::vector<std::size_t> valid_column_indices;

  bool has(StructuralCondition condition) const;
};

/// Total: never throws. Empty markers ("", "-", "—", ".", "...", "…") give an
/// empty cell; well-formed comma-grouped or plain digit strings give a
/// numeric cell; everything else (fractions, merged numbers such as
/// "900 234", words) is text.
CellValue normalize_cell(std::string_view raw);

/// Renders a count with comma thousands grouping ("12,847").
std::string render_count(std::int64_t value);

/// Parses a model response or fixture into a RawTable. Markdown code fences
/// around the CSV are tolerated. Throws ParseFailure when the text has no
/// delimiter structure or no header row.
RawTable parse_raw_csv(std::string_view text, const TableProvenance& provenance);

/// Detects the three critical parsing conditions.
///
/// A column is valid when it holds at least one numeric cell and no text
/// cell. A row has extra cells when it carries content beyond the header
/// width, or when it carries more values than the header has columns; a
/// merged cell such as "2671 1575" contributes one value per number it holds.
StructuralReport validate_structure(const RawTable& table);

/// Number of values a cell contributes to a row: 0 for empty cells, the
/// token count for merged multi-number text, 1 otherwise.
std::size_t content_value_count(const CellValue& cell);

}  // namespace histpanel
