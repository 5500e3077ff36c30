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

#include "histpanel/types.hpp"

#include <algorithm>

namespace histpanel {

std::string_view to_string(FieldCategory field) {
  switch (field) {
    case FieldCategory::automobiles:
      return "Automobiles";
    case FieldCategory::trucks:
      return "Trucks";
    case FieldCategory::trailers:
      return "Trailers";
    case FieldCategory::motorcycles:
      return "Motorcycles";
    case FieldCategory::buses:
      return "Buses";
    case FieldCategory::total_vehicles:
      return "Total Vehicles";
    case FieldCategory::other:
      return "Other";
  }
  return "Other";
}

std::optional<FieldCategory> parse_field_category(std::string_view name) {
  for (auto field : kAllFieldCategories) {
    if (to_string(field) == name) return field;
  }
  return std::nullopt;
}

bool AlignedCell::models_agree() const {
  if (readings.size() < 2) return false;
  const double first = readings.begin()->second;
  return std::all_of(readings.begin(), readings.end(),
                     [first](const auto& entry) { return entry.second == first; });
}

std::optional<double> AlignedTable::value(const RowKey& key, FieldCategory field) const {
  auto row = rows.find(key);
  if (row == rows.end()) return std::nullopt;
  auto cell = row->second.find(field);
  if (cell == row->second.end()) return std::nullopt;
  return cell->second.value;
}

}  // namespace histpanel
