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

#include "histpanel/harmonize.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>

#include "histpanel/csv.hpp"
#include "histpanel/error.hpp"

namespace histpanel {

namespace fs = std::filesystem;

namespace {

struct BuiltinAlias {
  const char* alias;
  FieldCategory category;
};

constexpr BuiltinAlias kBuiltinAliases[] = {
    {"automobiles", FieldCategory::automobiles},
    {"automobile", FieldCategory::automobiles},
    {"autos", FieldCategory::automobiles},
    {"cars", FieldCategory::automobiles},
    {"passenger cars", FieldCategory::automobiles},
    {"passenger automobiles", FieldCategory::automobiles},
    {"passenger vehicles", FieldCategory::automobiles},
    {"pleasure cars", FieldCategory::automobiles},
    {"pleasure vehicles", FieldCategory::automobiles},
    {"private automobiles", FieldCategory::automobiles},
    {"motor cars", FieldCategory::automobiles},
    {"trucks", FieldCategory::trucks},
    {"motor trucks", FieldCategory::trucks},
    {"commercial cars", FieldCategory::trucks},
    {"commercial vehicles", FieldCategory::trucks},
    {"commercial", FieldCategory::trucks},
    {"trucks and commercial cars", FieldCategory::trucks},
    {"trailers", FieldCategory::trailers},
    {"semi trailers", FieldCategory::trailers},
    {"semitrailers", FieldCategory::trailers},
    {"motorcycles", FieldCategory::motorcycles},
    {"motor cycles", FieldCategory::motorcycles},
    {"buses", FieldCategory::buses},
    {"busses", FieldCategory::buses},
    {"motor buses", FieldCategory::buses},
    {"total", FieldCategory::total_vehicles},
    {"totals", FieldCategory::total_vehicles},
    {"total vehicles", FieldCategory::total_vehicles},
    {"total motor vehicles", FieldCategory::total_vehicles},
    {"total registrations", FieldCategory::total_vehicles},
    {"grand total", FieldCategory::total_vehicles},
    {"all vehicles", FieldCategory::total_vehicles},
    {"tractors", FieldCategory::other},
    {"dealers", FieldCategory::other},
    {"other", FieldCategory::other},
    {"others", FieldCategory::other},
    {"miscellaneous", FieldCategory::other},
};

std::string collapse(std::string_view s) {
  std::string out;
  for (const auto& token : text::split_whitespace(s)) {
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

// Stable best-candidate fuzzy search; ties go to the lexicographically first.
template <typename Range, typename NameOf>
std::pair<const typename Range::value_type*, double> best_fuzzy(const Range& candidates,
                                                                std::string_view normalized,
                                                                NameOf name_of) {
  const typename Range::value_type* best = nullptr;
  double best_score = -1.0;
  std::string best_name;
  for (const auto& candidate : candidates) {
    const std::string name = normalize_name(name_of(candidate));
    const double score = name_similarity(normalized, name);
    if (score > best_score || (score == best_score && best && name < best_name)) {
      best = &candidate;
      best_score = score;
      best_name = name;
    }
  }
  return {best, best_score};
}

}  // namespace

std::string normalize_header(std::string_view header) {
  std::string lowered = text::to_lower(header);
  std::string joined;
  for (std::size_t i = 0; i < lowered.size(); ++i) {
    if (lowered[i] == '-' && i + 1 < lowered.size() &&
        std::isspace(static_cast<unsigned char>(lowered[i + 1])) && !joined.empty() &&
        std::isalpha(static_cast<unsigned char>(joined.back()))) {
      while (i + 1 < lowered.size() && std::isspace(static_cast<unsigned char>(lowered[i + 1]))) ++i;
      continue;
    }
    joined.push_back(lowered[i]);
  }
  std::string cleaned;
  for (char c : joined) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || std::isspace(u) || u >= 0x80) {
      cleaned.push_back(c);
    } else if (c == '\'') {
      // "O'Brien" -> "obrien"
    } else {
      cleaned.push_back(' ');
    }
  }
  return collapse(cleaned);
}

std::string normalize_name(std::string_view name) {
  auto tokens = text::split_whitespace(normalize_header(name));
  for (auto& token : tokens) {
    if (token == "st" || token == "ste") token = "saint";
  }
  if (tokens.size() > 1 &&
      (tokens.back() == "county" || tokens.back() == "co" || tokens.back() == "counties")) {
    tokens.pop_back();
  }
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double name_similarity(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(longest);
}

// ---------------------------------------------------------------------------

FieldReference::FieldReference(std::map<std::string, FieldCategory> aliases) {
  for (auto& [alias, category] : aliases) aliases_[normalize_header(alias)] = category;
}

FieldReference FieldReference::builtin() {
  std::map<std::string, FieldCategory> aliases;
  for (const auto& entry : kBuiltinAliases) aliases[entry.alias] = entry.category;
  return FieldReference(std::move(aliases));
}

FieldReference FieldReference::load(const std::string& csv_path) {
  const auto doc = csv::read_file(csv_path);
  const auto alias_col = doc.column("alias");
  const auto category_col = doc.column("category");
  std::map<std::string, FieldCategory> aliases;
  for (const auto& row : doc.rows) {
    const std::string category_name = text::trim(row[category_col]);
    auto category = parse_field_category(category_name);
    if (!category) {
      throw ConfigError(csv_path + ": unknown field category '" + category_name + "'");
    }
    aliases[row[alias_col]] = *category;
  }
  return FieldReference(std::move(aliases));
}

std::optional<FieldCategory> FieldReference::exact(std::string_view header) const {
  auto it = aliases_.find(normalize_header(header));
  if (it == aliases_.end()) return std::nullopt;
  return it->second;
}

const CountyEntry* CountyRef::find_canonical(std::string_view name) const {
  const std::string wanted = normalize_name(name);
  for (const auto& entry : entries) {
    if (normalize_name(entry.name) == wanted) return &entry;
  }
  for (const auto& entry : special_entities) {
    if (normalize_name(entry.name) == wanted) return &entry;
  }
  return nullptr;
}

bool CountyRef::is_special(std::string_view county_id) const {
  return std::any_of(special_entities.begin(), special_entities.end(),
                     [&](const CountyEntry& e) { return e.county_id == county_id; });
}

std::string_view to_string(MatchMethod method) {
  switch (method) {
    case MatchMethod::exact:
      return "exact";
    case MatchMethod::alias:
      return "alias";
    case MatchMethod::fuzzy:
      return "fuzzy";
    case MatchMethod::provider:
      return "provider";
  }
  return "exact";
}

const MappingDecision* CountyMapping::find(const std::string& raw) const {
  auto it = decisions.find(raw);
  return it == decisions.end() ? nullptr : &it->second;
}

CountyMapping standardize_counties(const std::vector<std::string>& raw_names, const CountyRef& ref,
                                   double fuzzy_threshold) {
  std::map<std::string, const CountyEntry*> regular_by_norm;
  for (const auto& entry : ref.entries) regular_by_norm.emplace(normalize_name(entry.name), &entry);
  std::map<std::string, const CountyEntry*> special_by_norm;
  for (const auto& entry : ref.special_entities) {
    special_by_norm.emplace(normalize_name(entry.name), &entry);
  }
  std::map<std::string, std::string> alias_by_norm;
  for (const auto& [alias, canonical] : ref.aliases) alias_by_norm[normalize_name(alias)] = canonical;

  CountyMapping mapping;
  std::set<std::string> seen;
  for (const auto& raw : raw_names) {
    if (!seen.insert(raw).second) continue;
    const std::string norm = normalize_name(raw);
    if (norm.empty()) {
      mapping.unmapped.push_back(raw);
      continue;
    }
    MappingDecision decision;
    decision.raw = raw;
    auto accept = [&](const CountyEntry& entry, MatchMethod method, double score) {
      decision.canonical = entry.name;
      decision.county_id = entry.county_id;
      decision.method = method;
      decision.score = score;
      decision.special = ref.is_special(entry.county_id);
      mapping.decisions.emplace(raw, decision);
    };

    if (auto it = regular_by_norm.find(norm); it != regular_by_norm.end()) {
      accept(*it->second, MatchMethod::exact, 1.0);
      continue;
    }
    if (auto it = special_by_norm.find(norm); it != special_by_norm.end()) {
      accept(*it->second, MatchMethod::exact, 1.0);
      continue;
    }
    if (auto it = alias_by_norm.find(norm); it != alias_by_norm.end()) {
      if (const CountyEntry* entry = ref.find_canonical(it->second)) {
        accept(*entry, MatchMethod::alias, 1.0);
        continue;
      }
    }
    auto [special, special_score] =
        best_fuzzy(ref.special_entities, norm, [](const CountyEntry& e) { return e.name; });
    auto [regular, regular_score] =
        best_fuzzy(ref.entries, norm, [](const CountyEntry& e) { return e.name; });
    if (special && special_score >= fuzzy_threshold && special_score >= regular_score) {
      accept(*special, MatchMethod::fuzzy, special_score);
    } else if (regular && regular_score >= fuzzy_threshold) {
      accept(*regular, MatchMethod::fuzzy, regular_score);
    } else {
      mapping.unmapped.push_back(raw);
    }
  }

  std::map<std::string, std::vector<std::string>> by_target;
  for (const auto& [raw, decision] : mapping.decisions) {
    if (!decision.special) by_target[decision.county_id].push_back(raw);
  }
  for (const auto& [county_id, raws] : by_target) {
    if (raws.size() < 2) continue;
    std::string names;
    for (const auto& r : raws) names += (names.empty() ? "" : ", ") + ("'" + r + "'");
    mapping.warnings.push_back("duplicate target " + county_id + " for " + names);
  }
  return mapping;
}

// ---------------------------------------------------------------------------

DeterministicFieldMapper::DeterministicFieldMapper(FieldReference reference, double fuzzy_threshold)
    : reference_(std::move(reference)), threshold_(fuzzy_threshold) {}

FieldMapping DeterministicFieldMapper::map(const std::vector<std::string>& headers) {
  FieldMapping out;
  for (const auto& header : headers) {
    if (out.mapped.count(header)) continue;
    if (auto category = reference_.exact(header)) {
      out.mapped[header] = *category;
      continue;
    }
    const std::string norm = normalize_header(header);
    const std::pair<const std::string, FieldCategory>* best = nullptr;
    double best_score = -1.0;
    for (const auto& entry : reference_.aliases()) {
      const double score = name_similarity(norm, entry.first);
      if (score > best_score) {
        best = &entry;
        best_score = score;
      }
    }
    if (best && !norm.empty() && best_score >= threshold_) {
      out.mapped[header] = best->second;
      out.log.push_back("fuzzy header '" + header + "' -> '" + best->first + "'");
    } else {
      out.unmapped.push_back(header);
    }
  }
  return out;
}

ProviderFieldMapper::ProviderFieldMapper(Provider& provider, std::string model_id,
                                         FieldReference fallback)
    : provider_(provider), model_id_(std::move(model_id)), fallback_(std::move(fallback)) {}

std::string ProviderFieldMapper::build_prompt(const std::vector<std::string>& headers) {
  std::string prompt =
      "Map each column header from a historical vehicle registration table to exactly one of "
      "these standardized categories: ";
  for (std::size_t i = 0; i < kAllFieldCategories.size(); ++i) {
    if (i) prompt += ", ";
    prompt += std::string(to_string(kAllFieldCategories[i]));
  }
  prompt +=
      ". If no category fits, answer Unmapped.\n"
      "Answer as CSV with the columns header,category and one row per header, in the order "
      "given.\nHeaders:\n";
  for (const auto& h : headers) prompt += csv::escape(h) + "\n";
  return prompt;
}

FieldMapping ProviderFieldMapper::map(const std::vector<std::string>& headers) {
  ExtractionRequest request;
  request.model_id = model_id_;
  request.prompt = build_prompt(headers);
  request.image.media_type = "text/plain";
  ProviderResponse response;
  try {
    response = provider_.complete(request);
  } catch (const TransportError& e) {
    FieldMapping out = fallback_.map(headers);
    out.log.push_back(std::string("provider mapper unavailable, downgraded to deterministic: ") +
                      e.what());
    return out;
  }
  FieldMapping out;
  std::map<std::string, FieldCategory> answered;
  for (const auto& record : csv::parse(response.text)) {
    if (record.size() < 2) continue;
    if (auto category = parse_field_category(text::trim(record[1]))) {
      answered[text::trim(record[0])] = *category;
    }
  }
  for (const auto& header : headers) {
    if (auto it = answered.find(text::trim(header)); it != answered.end()) {
      out.mapped[header] = it->second;
    } else {
      out.unmapped.push_back(header);
    }
  }
  return out;
}

FieldMapping harmonize_fields(const std::vector<std::string>& headers, FieldMapper& mapper) {
  return mapper.map(headers);
}

std::string_view to_string(Layout layout) {
  return layout == Layout::county_sorted ? "county_sorted" : "year_sorted";
}

LayoutDecision classify_layout(const RawTable& table, const CountyRef& ref,
                               double fuzzy_threshold) {
  LayoutDecision decision;
  std::vector<std::string> labels;
  for (const auto& row : table.data_rows) {
    if (row.empty() || row[0].is_empty()) continue;
    const CellValue& first = row[0];
    const std::string raw = text::trim(first.raw);
    if (first.is_numeric() && raw.size() == 4 && first.value >= 1900 && first.value <= 1970) {
      ++decision.year_like;
    } else {
      labels.push_back(first.raw);
    }
  }
  const CountyMapping mapping = standardize_counties(labels, ref, fuzzy_threshold);
  for (const auto& label : labels) {
    if (mapping.find(label)) ++decision.county_like;
  }
  if (decision.year_like > decision.county_like) {
    decision.layout = Layout::year_sorted;
  } else {
    decision.layout = Layout::county_sorted;
    if (decision.year_like == decision.county_like) {
      decision.warning = "layout tie (" + std::to_string(decision.county_like) +
                         " county-like, " + std::to_string(decision.year_like) +
                         " year-like): treating as county_sorted";
    }
  }
  return decision;
}

// ---------------------------------------------------------------------------

ReferenceData ReferenceData::load(const std::string& directory) {
  ReferenceData data;
  const fs::path dir(directory);
  if (!fs::is_directory(dir)) throw ConfigError("reference directory not found: " + directory);
  const fs::path aliases = dir / "field_aliases.csv";
  data.fields = fs::exists(aliases) ? FieldReference::load(aliases.string()) : FieldReference::builtin();

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const std::string stem = path.stem().string();
    if (!text::starts_with(stem, "counties_")) continue;
    CountyRef ref;
    ref.state = stem.substr(9);
    const auto doc = csv::read_file(path.string());
    const auto name_col = doc.column("name");
    const auto id_col = doc.column("county_id");
    std::set<std::string> names;
    for (const auto& row : doc.rows) {
      CountyEntry entry{text::trim(row[name_col]), text::trim(row[id_col]), ""};
      if (!names.insert(normalize_name(entry.name)).second) {
        throw ConfigError(path.string() + ": duplicate canonical name " + entry.name);
      }
      ref.entries.push_back(std::move(entry));
    }
    const fs::path special = dir / ("special_" + ref.state + ".csv");
    if (fs::exists(special)) {
      const auto sdoc = csv::read_file(special.string());
      const auto sname = sdoc.column("name");
      const auto sid = sdoc.column("county_id");
      const auto has_parent = std::find(sdoc.header.begin(), sdoc.header.end(), "part_of") !=
                              sdoc.header.end();
      for (const auto& row : sdoc.rows) {
        ref.special_entities.push_back({text::trim(row[sname]), text::trim(row[sid]),
                                        has_parent ? text::trim(row[sdoc.column("part_of")]) : ""});
      }
    }
    const fs::path alias_file = dir / ("county_aliases_" + ref.state + ".csv");
    if (fs::exists(alias_file)) {
      const auto adoc = csv::read_file(alias_file.string());
      const auto acol = adoc.column("alias");
      const auto ncol = adoc.column("name");
      for (const auto& row : adoc.rows) ref.aliases[text::trim(row[acol])] = text::trim(row[ncol]);
    }
    data.counties.emplace(ref.state, std::move(ref));
  }
  return data;
}

const CountyRef& ReferenceData::county_ref(const std::string& state) const {
  auto it = counties.find(state);
  if (it == counties.end()) throw ConfigError("no county reference list for state " + state);
  return it->second;
}

}  // namespace histpanel
