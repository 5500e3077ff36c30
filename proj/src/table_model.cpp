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

#include "histpanel/table_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <limits>

#include "histpanel/csv.hpp"
#include "histpanel/error.hpp"

namespace histpanel {

namespace {

constexpr std::array<std::string_view, 6> kEmptyMarkers = {
    "", "-", "\xE2\x80\x94" /* em dash */, ".", "...", "\xE2\x80\xA6" /* ellipsis */};

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
           return std::isdigit(c) != 0;
         });
}

// "12,847" and "1,175" are well formed; "1,17" and ",123" are not.
bool well_formed_grouping(std::string_view s) {
  std::size_t pos = s.find(',');
  if (pos == std::string_view::npos) return all_digits(s);
  if (pos == 0 || pos > 3 || !all_digits(s.substr(0, pos))) return false;
  while (pos != std::string_view::npos) {
    std::size_t next = s.find(',', pos + 1);
    std::string_view group = s.substr(pos + 1, next == std::string_view::npos
                                                    ? std::string_view::npos
                                                    : next - pos - 1);
    if (group.size() != 3 || !all_digits(group)) return false;
    pos = next;
  }
  return true;
}

std::optional<std::int64_t> parse_count(std::string_view token) {
  // Whitespace is tolerated only next to a grouping comma ("1, 175").
  std::string compact;
  for (std::size_t i = 0; i < token.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(token[i]);
    if (std::isspace(c)) {
      const bool after_comma = !compact.empty() && compact.back() == ',';
      std::size_t j = i;
      while (j < token.size() && std::isspace(static_cast<unsigned char>(token[j]))) ++j;
      const bool before_comma = j < token.size() && token[j] == ',';
      if (!after_comma && !before_comma) return std::nullopt;
      i = j - 1;
      continue;
    }
    compact.push_back(static_cast<char>(c));
  }
  if (!well_formed_grouping(compact)) return std::nullopt;
  std::int64_t value = 0;
  for (char c : compact) {
    if (c == ',') continue;
    const int digit = c - '0';
    if (value > (std::numeric_limits<std::int64_t>::max() - digit) / 10) return std::nullopt;
    value = value * 10 + digit;
  }
  return value;
}

std::vector<std::string> strip_code_fences(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos
                                                                             : nl - start);
    if (!text::starts_with(text::trim(line), "```")) lines.emplace_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

bool row_has_numeric(const std::vector<CellValue>& row) {
  return std::any_of(row.begin(), row.end(), [](const CellValue& c) { return c.is_numeric(); });
}

bool row_has_text(const std::vector<CellValue>& row) {
  return std::any_of(row.begin(), row.end(), [](const CellValue& c) { return c.is_text(); });
}

}  // namespace

std::string table_id(const TableProvenance& provenance) {
  return provenance.document_id + "-p" + std::to_string(provenance.page);
}

std::string_view to_string(StructuralCondition condition) {
  switch (condition) {
    case StructuralCondition::no_valid_columns:
      return "no_valid_columns";
    case StructuralCondition::extra_cells:
      return "extra_cells";
    case StructuralCondition::empty_table:
      return "empty_table";
  }
  return "unknown";
}

bool StructuralReport::has(StructuralCondition condition) const {
  return std::find(failed_conditions.begin(), failed_conditions.end(), condition) !=
         failed_conditions.end();
}

CellValue normalize_cell(std::string_view raw) {
  CellValue cell;
  cell.raw = std::string(raw);
  const std::string trimmed = text::trim(raw);
  if (std::find(kEmptyMarkers.begin(), kEmptyMarkers.end(), trimmed) != kEmptyMarkers.end()) {
    cell.kind = CellKind::empty;
    return cell;
  }
  if (auto count = parse_count(trimmed)) {
    cell.kind = CellKind::numeric;
    cell.value = *count;
    return cell;
  }
  cell.kind = CellKind::text;
  return cell;
}

std::string render_count(std::int64_t value) {
  std::string digits = std::to_string(value < 0 ? -value : value);
  std::string out;
  const std::size_t lead = digits.size() % 3;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i != 0 && (i + 3 - lead) % 3 == 0) out.push_back(',');
    out.push_back(digits[i]);
  }
  return value < 0 ? "-" + out : out;
}

RawTable parse_raw_csv(std::string_view text, const TableProvenance& provenance) {
  if (text::trim(text).empty()) throw ParseFailure("empty response", std::string(text));

  std::string body;
  for (const auto& line : strip_code_fences(text)) {
    body += line;
    body.push_back('\n');
  }
  auto records = csv::parse(body);
  const bool delimited = std::any_of(records.begin(), records.end(),
                                     [](const csv::Record& r) { return r.size() > 1; });
  if (!delimited) throw ParseFailure("no delimiter structure", std::string(text));

  std::vector<std::vector<CellValue>> rows;
  rows.reserve(records.size());
  for (const auto& record : records) {
    std::vector<CellValue> row;
    row.reserve(record.size());
    for (const auto& field : record) row.push_back(normalize_cell(field));
    rows.push_back(std::move(row));
  }

  RawTable table;
  table.provenance = provenance;
  std::size_t first_data = 0;
  while (first_data < rows.size() && row_has_text(rows[first_data]) &&
         !row_has_numeric(rows[first_data])) {
    table.header_rows.push_back(records[first_data]);
    ++first_data;
  }
  if (table.header_rows.empty()) throw ParseFailure("no header row", std::string(text));

  std::size_t width = 0;
  for (const auto& header_row : table.header_rows) width = std::max(width, header_row.size());
  table.headers.assign(width, std::string());
  for (std::size_t col = 0; col < width; ++col) {
    std::string joined;
    for (const auto& header_row : table.header_rows) {
      if (col >= header_row.size()) continue;
      const std::string fragment = text::trim(header_row[col]);
      if (fragment.empty()) continue;
      if (!joined.empty()) joined.push_back(' ');
      joined += fragment;
    }
    table.headers[col] = std::move(joined);
  }
  while (!table.headers.empty() && table.headers.back().empty()) table.headers.pop_back();
  table.column_count = table.headers.size();

  for (std::size_t r = first_data; r < rows.size(); ++r) {
    const bool blank = std::all_of(rows[r].begin(), rows[r].end(),
                                   [](const CellValue& c) { return c.is_empty(); });
    if (!blank) table.data_rows.push_back(std::move(rows[r]));
  }
  return table;
}

std::size_t content_value_count(const CellValue& cell) {
  if (cell.is_empty()) return 0;
  if (cell.is_text()) {
    const auto tokens = text::split_whitespace(cell.raw);
    if (tokens.size() > 1 && std::all_of(tokens.begin(), tokens.end(), [](const std::string& t) {
          return normalize_cell(t).is_numeric();
        })) {
      return tokens.size();
    }
  }
  return 1;
}

StructuralReport validate_structure(const RawTable& table) {
  StructuralReport report;
  // Column conditions say nothing about a table without data rows.
  if (table.data_rows.empty()) {
    report.failed_conditions.push_back(StructuralCondition::empty_table);
    report.is_critical_failure = true;
    return report;
  }

  for (std::size_t col = 0; col < table.column_count; ++col) {
    std::size_t numeric = 0;
    std::size_t text_cells = 0;
    for (const auto& row : table.data_rows) {
      if (col >= row.size()) continue;
      if (row[col].is_numeric()) ++numeric;
      if (row[col].is_text()) ++text_cells;
    }
    if (numeric > 0 && text_cells == 0) report.valid_column_indices.push_back(col);
  }
  if (report.valid_column_indices.empty()) {
    report.failed_conditions.push_back(StructuralCondition::no_valid_columns);
  }

  const bool extra = std::any_of(table.data_rows.begin(), table.data_rows.end(),
                                 [&](const std::vector<CellValue>& row) {
                                   std::size_t values = 0;
                                   for (std::size_t col = 0; col < row.size(); ++col) {
                                     if (col >= table.column_count && !row[col].is_empty()) {
                                       return true;
                                     }
                                     values += content_value_count(row[col]);
                                   }
                                   return values > table.column_count;
                                 });
  if (extra) report.failed_conditions.push_back(StructuralCondition::extra_cells);

  report.is_critical_failure = !report.failed_conditions.empty();
  return report;
}

}  // namespace histpanel
