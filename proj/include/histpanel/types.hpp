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

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "histpanel/table_model.hpp"

namespace histpanel {

/// The standardized vocabulary every extracted column is mapped onto.
enum class FieldCategory {
  automobiles,
  trucks,
  trailers,
  motorcycles,
  buses,
  total_vehicles,
  other,
};

inline constexpr std::array<FieldCategory, 7> kAllFieldCategories = {
    FieldCategory::automobiles, FieldCategory::trucks,         FieldCategory::trailers,
    FieldCategory::motorcycles, FieldCategory::buses,          FieldCategory::total_vehicles,
    FieldCategory::other,
};

/// Display names: "Automobiles", "Total Vehicles", ...
std::string_view to_string(FieldCategory field);
std::optional<FieldCategory> parse_field_category(std::string_view name);

struct RowKey {
  std::string county_id;
  int year = 0;

  friend auto operator<=>(const RowKey&, const RowKey&) = default;
};

/// One aligned cell. `readings` holds each contributing model's value; for a
/// single-model table it has one entry. `value` is the combined reading and
/// may be half-integral after ensembling.
struct AlignedCell {
  std::optional<double> value;
  std::map<std::string, double> readings;

  bool models_agree() const;
  friend bool operator==(const AlignedCell&, const AlignedCell&) = default;
};

using AlignedRow = std::map<FieldCategory, AlignedCell>;

struct AlignmentStats {
  std::size_t mapped_rows = 0;
  std::size_t dropped_rows = 0;
  std::size_t mapped_columns = 0;
  std::size_t dropped_columns = 0;
  std::size_t dropped_text_cells = 0;
};

/// Canonical county rows by standardized field columns. Values are
/// non-negative; absent values are extracted empties.
struct AlignedTable {
  TableProvenance provenance;
  std::map<RowKey, AlignedRow> rows;
  AlignmentStats stats;

  std::optional<double> value(const RowKey& key, FieldCategory field) const;
};

}  // namespace histpanel
