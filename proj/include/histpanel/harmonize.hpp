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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "histpanel/extraction.hpp"
#include "histpanel/table_model.hpp"
#include "histpanel/types.hpp"

namespace histpanel {

inline constexpr double kDefaultFuzzyThreshold = 0.84;

/// Case-folds, joins words hyphenated across a line break ("Commer- cial"),
/// drops punctuation and collapses whitespace.
std::string normalize_header(std::string_view header);

/// normalize_header plus "st" -> "saint" and a trailing "county"/"co" removed.
std::string normalize_name(std::string_view name);

std::size_t edit_distance(std::string_view a, std::string_view b);

/// 1 - edit_distance / max(length), on already-normalized strings. Two empty
/// strings score 1.
double name_similarity(std::string_view a, std::string_view b);

/// Alias list: normalized header text -> standardized category.
class FieldReference {
 public:
  FieldReference() = default;
  explicit FieldReference(std::map<std::string, FieldCategory> aliases);
  static FieldReference load(const std::string& csv_path);
  /// The alias pairs shipped in data/reference, compiled in.
  static FieldReference builtin();

  std::optional<FieldCategory> exact(std::string_view header) const;
  const std::map<std::string, FieldCategory>& aliases() const { return aliases_; }

 private:
  std::map<std::string, FieldCategory> aliases_;
};

struct CountyEntry {
  std::string name;
  std::string county_id;
  /// For special entities: the county they are a part of, if any.
  std::string part_of;
};

struct CountyRef {
  std::string state;
  std::vector<CountyEntry> entries;
  /// Extra canonical entities such as "Chicago" and "Cook Excluding Chicago".
  std::vector<CountyEntry> special_entities;
  /// Historical spellings: alias -> canonical name.
  std::map<std::string, std::string> aliases;

  const CountyEntry* find_canonical(std::string_view name) const;
  bool is_special(std::string_view county_id) const;
};

enum class MatchMethod { exact, alias, fuzzy, provider };
std::string_view to_string(MatchMethod method);

struct MappingDecision {
  std::string raw;
  std::string canonical;
  std::string county_id;
  MatchMethod method = MatchMethod::exact;
  double score = 1.0;
  bool special = false;
};

struct CountyMapping {
  std::map<std::string, MappingDecision> decisions;
  std::vector<std::string> unmapped;
  std::vector<std::string> warnings;

  const MappingDecision* find(const std::string& raw) const;
};

/// exact -> alias -> special entity -> fuzzy (>= threshold) -> unmapped.
/// Raises a warning when two distinct raw names land on one regular county.
CountyMapping standardize_counties(const std::vector<std::string>& raw_names, const CountyRef& ref,
                                   double fuzzy_threshold = kDefaultFuzzyThreshold);

struct FieldMapping {
  std::map<std::string, FieldCategory> mapped;
  std::vector<std::string> unmapped;
  std::vector<std::string> log;
};

class FieldMapper {
 public:
  virtual ~FieldMapper() = default;
  virtual FieldMapping map(const std::vector<std::string>& headers) = 0;
};

class DeterministicFieldMapper : public FieldMapper {
 public:
  explicit DeterministicFieldMapper(FieldReference reference,
                                    double fuzzy_threshold = kDefaultFuzzyThreshold);
  FieldMapping map(const std::vector<std::string>& headers) override;

 private:
  FieldReference reference_;
  double threshold_;
};

/// Asks a provider to map headers onto the category list. Transport
/// failures fall back to the deterministic mapper and log the downgrade.
class ProviderFieldMapper : public FieldMapper {
 public:
  ProviderFieldMapper(Provider& provider, std::string model_id, FieldReference fallback);
  FieldMapping map(const std::vector<std::string>& headers) override;

  static std::string build_prompt(const std::vector<std::string>& headers);

 private:
  Provider& provider_;
  std::string model_id_;
  DeterministicFieldMapper fallback_;
};

FieldMapping harmonize_fields(const std::vector<std::string>& headers, FieldMapper& mapper);

enum class Layout { county_sorted, year_sorted };
std::string_view to_string(Layout layout);

struct LayoutDecision {
  Layout layout = Layout::county_sorted;
  std::size_t county_like = 0;
  std::size_t year_like = 0;
  std::optional<std::string> warning;
};

/// Looks at the first column: county_sorted when its labels mostly match the
/// county list, year_sorted when they are mostly years in 1900-1970. Ties go
/// to county_sorted with a warning.
LayoutDecision classify_layout(const RawTable& table, const CountyRef& ref,
                               double fuzzy_threshold = kDefaultFuzzyThreshold);

/// Reference data directory:
///   field_aliases.csv            alias,category
///   counties_<ST>.csv            name,county_id
///   special_<ST>.csv             name,county_id[,part_of] (optional)
///   county_aliases_<ST>.csv      alias,name              (optional)
struct ReferenceData {
  FieldReference fields;
  std::map<std::string, CountyRef> counties;

  static ReferenceData load(const std::string& directory);
  const CountyRef& county_ref(const std::string& state) const;
};

}  // namespace histpanel
