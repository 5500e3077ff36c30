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

#include "histpanel/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include "histpanel/csv.hpp"
#include "histpanel/digest.hpp"
#include "histpanel/error.hpp"

namespace histpanel {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig c;
  c.base_dir = base_dir;
  c.corpus = get_or<std::string>(j, "corpus", "");
  c.reference_dir = get_or<std::string>(j, "reference_dir", "");
  c.population = get_or<std::string>(j, "population", "");
  c.state_totals = get_or<std::string>(j, "state_totals", "");
  c.gold = get_or<std::string>(j, "gold", "");
  c.corrections = get_or<std::string>(j, "corrections", "");
  c.fuzzy_threshold = get_or(j, "fuzzy_threshold", kDefaultFuzzyThreshold);
  c.seed = get_or<std::uint64_t>(j, "seed", 0);
  c.output_dir = get_or<std::string>(j, "output_dir", "run");
  c.record_timing = get_or(j, "record_timing", false);

  const json p = j.value("provider", json::object());
  c.provider.kind = get_or<std::string>(p, "kind", "mock");
  c.provider.fixtures = get_or<std::string>(p, "fixtures", "");
  c.provider.endpoint = get_or<std::string>(p, "endpoint", "");
  c.provider.models = get_or<std::vector<std::string>>(p, "models", {});
  const json prices = p.value("prices", json::object());
  for (const auto& [model, price] : prices.items()) {
    c.provider.prices[model] = {get_or(price, "input_per_token", 0.0), get_or(price, "output_per_token", 0.0)};
  }
  c.provider.batch = get_or(p, "batch", false);
  const json r = p.value("retry", json::object());
  c.provider.retry.attempts = get_or(r, "attempts", 3);
  c.provider.retry.base_delay = std::chrono::milliseconds(get_or<std::int64_t>(r, "base_delay_ms", 250));
  c.provider.retry.max_delay = std::chrono::milliseconds(get_or<std::int64_t>(r, "max_delay_ms", 8000));
  c.provider.retry.jitter = get_or(r, "jitter", 0.25);
  c.provider.rate_per_second = get_or(p, "rate_per_second", 0.0);
  c.provider.burst = get_or(p, "burst", 1.0);
  c.provider.concurrency = get_or<std::size_t>(p, "concurrency", 4);
  c.provider.cache_dir = get_or<std::string>(p, "cache_dir", "");
  c.provider.use_cache = get_or(p, "use_cache", true);

  const json t = j.value("thresholds", json::object());
  c.thresholds.population_rate = get_or(t, "population_rate", c.thresholds.population_rate);
  c.thresholds.crossfield_low = get_or(t, "crossfield_low", c.thresholds.crossfield_low);
  c.thresholds.crossfield_high = get_or(t, "crossfield_high", c.thresholds.crossfield_high);
  c.thresholds.duplicate_dispersion = get_or(t, "duplicate_dispersion", c.thresholds.duplicate_dispersion);
  c.thresholds.change_pct = get_or(t, "change_pct", c.thresholds.change_pct);
  c.thresholds.reversal_min_value = get_or(t, "reversal_min_value", c.thresholds.reversal_min_value);
  c.thresholds.endpoint_min_value = get_or(t, "endpoint_min_value", c.thresholds.endpoint_min_value);

  const json cv = j.value("convergence", json::object());
  c.convergence.folds = get_or<std::size_t>(cv, "folds", 100);
  c.convergence.step = get_or<std::size_t>(cv, "step", 1);
  c.convergence.dev_fraction = get_or(cv, "dev_fraction", 0.5);
  c.convergence.seed = c.seed;

  const json ev = j.value("evaluation", json::object());
  c.evaluation.prediction_r2 = get_or(ev, "prediction_r2", false);

  const json rg = j.value("regress", json::object());
  c.regress.persistence_end_years = get_or<std::vector<int>>(rg, "persistence_end_years", {});
  c.regress.popgrowth_decades = get_or<std::vector<int>>(rg, "popgrowth_decades", {});
  const auto field = parse_field_category(get_or<std::string>(rg, "field", "Total Vehicles"));
  if (!field) throw ConfigError("config: unknown regress field");
  c.regress.field = *field;

  c.provider.retry.seed = c.seed;
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  const fs::path parent = fs::path(path).parent_path();
  return from_json(j, parent.empty() ? "." : parent.string());
}

ojson RunConfig::to_json() const {
  ojson prices = ojson::object();
  for (const auto& [model, price] : provider.prices) {
    prices[model] = {{"input_per_token", price.input_per_token}, {"output_per_token", price.output_per_token}};
  }
  ojson j;
  j["corpus"] = corpus;
  j["reference_dir"] = reference_dir;
  j["population"] = population;
  j["state_totals"] = state_totals;
  j["gold"] = gold;
  j["corrections"] = corrections;
  j["provider"] = {
      {"kind", provider.kind},
      {"fixtures", provider.fixtures},
      {"endpoint", provider.endpoint},
      {"models", provider.models},
      {"prices", prices},
      {"batch", provider.batch},
      {"retry",
       {{"attempts", provider.retry.attempts},
        {"base_delay_ms", provider.retry.base_delay.count()},
        {"max_delay_ms", provider.retry.max_delay.count()},
        {"jitter", provider.retry.jitter}}},
      {"rate_per_second", provider.rate_per_second},
      {"burst", provider.burst},
  };
  j["thresholds"] = {{"population_rate", thresholds.population_rate},
                     {"crossfield_low", thresholds.crossfield_low},
                     {"crossfield_high", thresholds.crossfield_high},
                     {"duplicate_dispersion", thresholds.duplicate_dispersion},
                     {"change_pct", thresholds.change_pct},
                     {"reversal_min_value", thresholds.reversal_min_value},
                     {"endpoint_min_value", thresholds.endpoint_min_value}};
  j["fuzzy_threshold"] = fuzzy_threshold;
  j["convergence"] = {{"folds", convergence.folds},
                      {"step", convergence.step},
                      {"dev_fraction", convergence.dev_fraction}};
  j["evaluation"] = {{"prediction_r2", evaluation.prediction_r2}};
  j["regress"] = {{"persistence_end_years", regress.persistence_end_years},
                  {"popgrowth_decades", regress.popgrowth_decades},
                  {"field", std::string(to_string(regress.field))}};
  j["seed"] = seed;
  return j;
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

std::string RunConfig::resolve(const std::string& path) const {
  if (path.empty()) return path;
  const fs::path p(path);
  if (p.is_absolute()) return p.string();
  return (fs::path(base_dir) / p).lexically_normal().string();
}

std::string RunConfig::output_path(const std::string& relative) const {
  return (fs::path(resolve(output_dir)) / relative).string();
}

void RunConfig::validate() const {
  auto need_file = [&](const std::string& what, const std::string& path) {
    if (path.empty()) throw ConfigError("config: " + what + " is required");
    if (!fs::exists(resolve(path))) throw ConfigError("config: " + what + " not found: " + resolve(path));
  };
  need_file("corpus", corpus);
  need_file("reference_dir", reference_dir);
  need_file("population", population);
  need_file("state_totals", state_totals);
  if (!gold.empty()) need_file("gold", gold);
  if (provider.models.empty()) throw ConfigError("config: provider.models is empty");
  std::set<std::string> seen;
  for (const auto& m : provider.models) {
    if (m.empty() || m == "ensemble" || m == "gold" || m == "baseline") {
      throw ConfigError("config: reserved or empty model id '" + m + "'");
    }
    if (!seen.insert(m).second) throw ConfigError("config: duplicate model id '" + m + "'");
    auto price = provider.prices.find(m);
    if (price == provider.prices.end()) throw ConfigError("config: no price for model '" + m + "'");
    if (price->second.input_per_token < 0 || price->second.output_per_token < 0) {
      throw ConfigError("config: negative price for model '" + m + "'");
    }
  }
  if (provider.kind == "mock") {
    need_file("provider.fixtures", provider.fixtures);
  } else if (provider.kind == "http") {
    if (provider.endpoint.empty()) throw ConfigError("config: provider.endpoint is required for http");
  } else {
    throw ConfigError("config: unknown provider kind '" + provider.kind + "'");
  }
  if (provider.retry.attempts < 1) throw ConfigError("config: retry.attempts must be >= 1");
  if (provider.rate_per_second < 0) throw ConfigError("config: rate_per_second must be >= 0");
  if (provider.rate_per_second > 0 && provider.burst < 1) throw ConfigError("config: burst must be >= 1");
  if (provider.concurrency < 1) throw ConfigError("config: concurrency must be >= 1");
  if (!(fuzzy_threshold > 0.0 && fuzzy_threshold <= 1.0)) throw ConfigError("config: fuzzy_threshold must lie in (0, 1]");
  if (!(thresholds.crossfield_low < thresholds.crossfield_high)) {
    throw ConfigError("config: crossfield_low must be below crossfield_high");
  }
  if (convergence.folds < 2 || convergence.step < 1 || !(convergence.dev_fraction >= 0.0) ||
      !(convergence.dev_fraction < 1.0)) {
    throw ConfigError("config: convergence needs folds >= 2, step >= 1, dev_fraction in [0, 1)");
  }
  // Reference data and corpus must load before anything is sent out.
  ReferenceData::load(resolve(reference_dir));
  const auto entries = load_corpus(resolve(corpus), fs::path(resolve(corpus)).parent_path().string());
  for (const auto& e : entries) {
    if (!fs::exists(e.image)) throw ConfigError("config: image not found: " + e.image);
  }
}

std::vector<CorpusEntry> load_corpus(const std::string& path, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("corpus " + path + ": " + e.what());
  }
  auto resolve = [&](const std::string& p) -> std::string {
    if (p.empty()) return p;
    return fs::path(p).is_absolute() ? p : (fs::path(base_dir) / p).lexically_normal().string();
  };
  std::vector<CorpusEntry> out;
  std::set<std::string> ids;
  for (const auto& t : j.at("tables")) {
    CorpusEntry e;
    e.provenance.document_id = t.at("document_id").get<std::string>();
    e.provenance.state = t.at("state").get<std::string>();
    e.provenance.year = t.at("year").get<int>();
    e.provenance.page = t.value("page", 1);
    e.provenance.ingestion_number = t.value("ingestion_number", static_cast<std::int64_t>(out.size() + 1));
    e.provenance.entity = t.value("entity", std::string());
    e.image = resolve(t.at("image").get<std::string>());
    e.media_type = t.value("media_type", std::string("image/png"));
    e.baseline = resolve(t.value("baseline", std::string()));
    e.continues = t.value("continues", std::string());
    if (!ids.insert(table_id(e.provenance)).second) {
      throw ConfigError("corpus: duplicate table " + table_id(e.provenance));
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::extract: return "extract";
    case Stage::validate: return "validate";
    case Stage::harmonize: return "harmonize";
    case Stage::assemble: return "assemble";
    case Stage::outliers: return "outliers";
    case Stage::evaluate: return "evaluate";
    case Stage::converge: return "converge";
    case Stage::regress: return "regress";
    case Stage::report: return "report";
  }
  return "unknown";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : {Stage::extract, Stage::validate, Stage::harmonize, Stage::assemble, Stage::outliers,
                  Stage::evaluate, Stage::converge, Stage::regress, Stage::report}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::optional<Stage> prerequisite(Stage stage) {
  switch (stage) {
    case Stage::extract: return std::nullopt;
    case Stage::validate: return Stage::extract;
    case Stage::harmonize: return Stage::validate;
    case Stage::assemble: return Stage::harmonize;
    case Stage::outliers: return Stage::assemble;
    case Stage::evaluate: return Stage::assemble;
    case Stage::converge: return Stage::evaluate;
    case Stage::regress: return Stage::assemble;
    case Stage::report: return Stage::evaluate;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Corrections

std::vector<Correction> load_corrections(const std::string& path) {
  std::vector<Correction> out;
  if (path.empty() || !fs::exists(path)) return out;
  std::istringstream in(text::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("corrections log " + path + ": " + e.what());
    }
    Correction c;
    c.table_id = j.at("table_id").get<std::string>();
    c.county_id = j.at("county_id").get<std::string>();
    c.year = j.at("year").get<int>();
    auto field = parse_field_category(j.at("field").get<std::string>());
    if (!field) throw ConfigError("corrections log: unknown field");
    c.field = *field;
    if (!j.at("value").is_null()) c.value = j.at("value").get<double>();
    out.push_back(std::move(c));
  }
  return out;
}

void apply_corrections(std::vector<AlignedTable>& tables, const std::vector<Correction>& corrections) {
  std::map<std::string, AlignedTable*> by_id;
  for (auto& t : tables) by_id[table_id(t.provenance)] = &t;
  for (const auto& c : corrections) {
    auto it = by_id.find(c.table_id);
    if (it == by_id.end()) continue;
    AlignedCell& cell = it->second->rows[{c.county_id, c.year}][c.field];
    cell.value = c.value;
    cell.readings.clear();
    if (c.value) cell.readings["review"] = *c.value;
  }
}

std::vector<GoldCell> apply_corrections(std::vector<GoldCell> gold, const std::vector<Correction>& corrections) {
  std::map<std::tuple<std::string, std::string, int, FieldCategory>, std::size_t> index;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    index[{gold[i].table_id, gold[i].county_id, gold[i].year, gold[i].field}] = i;
  }
  for (const auto& c : corrections) {
    auto it = index.find({c.table_id, c.county_id, c.year, c.field});
    if (it != index.end()) gold[it->second].value = c.value;
  }
  return gold;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

ojson provenance_to_json(const TableProvenance& p) {
  return {{"document_id", p.document_id}, {"state", p.state},       {"year", p.year},
          {"page", p.page},               {"vintage_id", p.vintage_id}, {"ingestion_number", p.ingestion_number},
          {"model_id", p.model_id},       {"entity", p.entity}};
}

TableProvenance provenance_from_json(const json& j) {
  TableProvenance p;
  p.document_id = j.at("document_id").get<std::string>();
  p.state = j.at("state").get<std::string>();
  p.year = j.at("year").get<int>();
  p.page = j.at("page").get<int>();
  p.vintage_id = j.at("vintage_id").get<std::string>();
  p.ingestion_number = j.at("ingestion_number").get<std::int64_t>();
  p.model_id = j.at("model_id").get<std::string>();
  p.entity = j.at("entity").get<std::string>();
  return p;
}

FieldCategory field_from(const json& j) {
  auto f = parse_field_category(j.get<std::string>());
  if (!f) throw Error("artifact: unknown field " + j.get<std::string>());
  return *f;
}

ojson opt_num(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

}  // namespace

ojson aligned_table_to_json(const AlignedTable& table) {
  ojson rows = ojson::array();
  for (const auto& [key, row] : table.rows) {
    ojson cells = ojson::object();
    for (const auto& [field, cell] : row) {
      ojson readings = ojson::object();
      for (const auto& [model, v] : cell.readings) readings[model] = v;
      cells[std::string(to_string(field))] = {{"value", opt_num(cell.value)}, {"readings", readings}};
    }
    rows.push_back({{"county_id", key.county_id}, {"year", key.year}, {"cells", cells}});
  }
  return {{"provenance", provenance_to_json(table.provenance)},
          {"stats",
           {{"mapped_rows", table.stats.mapped_rows},
            {"dropped_rows", table.stats.dropped_rows},
            {"mapped_columns", table.stats.mapped_columns},
            {"dropped_columns", table.stats.dropped_columns},
            {"dropped_text_cells", table.stats.dropped_text_cells}}},
          {"rows", rows}};
}

AlignedTable aligned_table_from_json(const json& j) {
  AlignedTable t;
  t.provenance = provenance_from_json(j.at("provenance"));
  const json& s = j.at("stats");
  t.stats.mapped_rows = s.at("mapped_rows").get<std::size_t>();
  t.stats.dropped_rows = s.at("dropped_rows").get<std::size_t>();
  t.stats.mapped_columns = s.at("mapped_columns").get<std::size_t>();
  t.stats.dropped_columns = s.at("dropped_columns").get<std::size_t>();
  t.stats.dropped_text_cells = s.at("dropped_text_cells").get<std::size_t>();
  for (const auto& row : j.at("rows")) {
    AlignedRow& target = t.rows[{row.at("county_id").get<std::string>(), row.at("year").get<int>()}];
    for (const auto& [name, cell] : row.at("cells").items()) {
      AlignedCell c;
      if (!cell.at("value").is_null()) c.value = cell.at("value").get<double>();
      for (const auto& [model, v] : cell.at("readings").items()) c.readings[model] = v.get<double>();
      target[field_from(json(name))] = std::move(c);
    }
  }
  return t;
}

ojson observation_to_json(const PanelObservation& o) {
  return {{"county_id", o.county_id},
          {"state", o.state},
          {"year", o.year},
          {"field", std::string(to_string(o.field))},
          {"value", o.value},
          {"per_capita", opt_num(o.per_capita)},
          {"log_per_capita", opt_num(o.log_per_capita)},
          {"model_support", o.model_support},
          {"models_agree", o.models_agree},
          {"gold_available", o.gold_available},
          {"derived", o.derived},
          {"flags", o.flags},
          {"provenance", provenance_to_json(o.provenance)}};
}

PanelObservation observation_from_json(const json& j) {
  PanelObservation o;
  o.county_id = j.at("county_id").get<std::string>();
  o.state = j.at("state").get<std::string>();
  o.year = j.at("year").get<int>();
  o.field = field_from(j.at("field"));
  o.value = j.at("value").get<double>();
  if (!j.at("per_capita").is_null()) o.per_capita = j.at("per_capita").get<double>();
  if (!j.at("log_per_capita").is_null()) o.log_per_capita = j.at("log_per_capita").get<double>();
  o.model_support = j.at("model_support").get<std::set<std::string>>();
  o.models_agree = j.at("models_agree").get<bool>();
  o.gold_available = j.at("gold_available").get<bool>();
  o.derived = j.at("derived").get<bool>();
  o.flags = j.at("flags").get<std::vector<std::string>>();
  o.provenance = provenance_from_json(j.at("provenance"));
  return o;
}

ojson flag_to_json(const OutlierFlag& f) {
  ojson detail = ojson::object();
  for (const auto& [k, v] : f.detail) detail[k] = opt_num(v);
  return {{"id", f.id()},
          {"kind", std::string(to_string(f.kind))},
          {"state", f.state},
          {"county_id", f.county_id},
          {"year", f.year},
          {"field", std::string(to_string(f.field))},
          {"rule", f.rule},
          {"detail", detail}};
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

std::string header_line(const std::string& hash) { return "# config_hash: " + hash + "\n"; }

std::string jsonl(const std::string& hash, const std::vector<ojson>& records) {
  std::string out = ojson{{"config_hash", hash}}.dump() + "\n";
  for (const auto& r : records) out += r.dump() + "\n";
  return out;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::vector<json> out;
  std::istringstream in(text::read_file(path));
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      continue;  // header record
    }
    out.push_back(json::parse(line));
  }
  return out;
}

std::string artifact_hash(const std::string& path) {
  const std::string body = text::read_file(path);
  const std::string prefix = "# config_hash: ";
  if (text::starts_with(body, prefix)) {
    return body.substr(prefix.size(), body.find('\n') - prefix.size());
  }
  try {
    const auto nl = body.find('\n');
    if (path.size() > 6 && path.substr(path.size() - 6) == ".jsonl") {
      return json::parse(body.substr(0, nl)).at("config_hash").get<std::string>();
    }
    return json::parse(body).at("config_hash").get<std::string>();
  } catch (const json::exception&) {
    return "";
  }
}

std::string panel_csv(const std::string& hash, const std::vector<PanelObservation>& panel) {
  std::string out = header_line(hash);
  out +=
      "county_id,state,year,field,value,per_capita,log_per_capita,document_id,page,vintage_id,ingestion_number,"
      "model_id,model_support,derived,flags\n";
  for (const auto& o : panel) {
    std::string support;
    for (const auto& m : o.model_support) support += (support.empty() ? "" : ";") + m;
    std::string flags;
    for (const auto& f : o.flags) flags += (flags.empty() ? "" : ";") + f;
    out += csv::join_row({o.county_id, o.state, std::to_string(o.year), std::string(to_string(o.field)),
                          text::fixed(o.value, 1), o.per_capita ? text::fixed(*o.per_capita, 10) : "",
                          o.log_per_capita ? text::fixed(*o.log_per_capita, 10) : "", o.provenance.document_id,
                          std::to_string(o.provenance.page), o.provenance.vintage_id,
                          std::to_string(o.provenance.ingestion_number), o.provenance.model_id, support,
                          o.derived ? "1" : "0", flags}) +
           "\n";
  }
  return out;
}

std::vector<EvalCell> read_eval_cells(const std::string& path) {
  const auto doc = csv::read_file(path);
  std::vector<EvalCell> cells;
  const auto c_table = doc.column("table_id"), c_state = doc.column("state"), c_year = doc.column("year"),
             c_county = doc.column("county_id"), c_field = doc.column("field"), c_truth = doc.column("truth"),
             c_ext = doc.column("extracted");
  for (const auto& row : doc.rows) {
    EvalCell c;
    c.table_id = row[c_table];
    c.state = row[c_state];
    c.year = std::stoi(row[c_year]);
    c.county_id = row[c_county];
    c.field = field_from(json(row[c_field]));
    c.truth = std::stod(row[c_truth]);
    if (!row[c_ext].empty()) c.extracted = std::stod(row[c_ext]);
    cells.push_back(std::move(c));
  }
  return cells;
}

}  // namespace

Pipeline::Pipeline(RunConfig config, std::shared_ptr<Provider> provider)
    : config_(std::move(config)), hash_(config_.hash()), provider_(std::move(provider)) {
  if (config_.corrections.empty()) config_.corrections = config_.output_path("corrections.jsonl");
  if (config_.provider.cache_dir.empty()) config_.provider.cache_dir = config_.output_path("cache");
  load_manifest();
}

std::string Pipeline::artifact(Stage stage) {
  switch (stage) {
    case Stage::extract: return "extract/responses.json";
    case Stage::validate: return "validate/structural.json";
    case Stage::harmonize: return "harmonize/aligned.json";
    case Stage::assemble: return "assemble/panel.jsonl";
    case Stage::outliers: return "outliers/flags.jsonl";
    case Stage::evaluate: return "evaluate/report.json";
    case Stage::converge: return "converge/curve.csv";
    case Stage::regress: return "regress/estimates.json";
    case Stage::report: return "report/report.txt";
  }
  return "";
}

void Pipeline::require(Stage stage) const {
  const std::string path = config_.output_path(artifact(stage));
  const std::string name(to_string(stage));
  if (!fs::exists(path)) {
    throw StageOrderError(name, "stage '" + name + "' has not been run: missing " + path);
  }
  if (artifact_hash(path) != hash_) {
    throw StageOrderError(name, "stage '" + name + "' artifacts were produced under a different configuration; rerun it");
  }
}

const ReferenceData& Pipeline::references() const {
  if (!refs_) refs_ = ReferenceData::load(config_.resolve(config_.reference_dir));
  return *refs_;
}

const std::vector<CorpusEntry>& Pipeline::corpus() const {
  if (!corpus_) {
    const std::string path = config_.resolve(config_.corpus);
    corpus_ = load_corpus(path, fs::path(path).parent_path().string());
  }
  return *corpus_;
}

Provider& Pipeline::provider() {
  if (!provider_) {
    if (config_.provider.kind == "http") {
      provider_ = std::make_shared<HttpProvider>(config_.provider.endpoint);
    } else {
      provider_ = std::make_shared<MockProvider>(config_.resolve(config_.provider.fixtures));
    }
  }
  return *provider_;
}

void Pipeline::write_json(const std::string& relative, ojson body) const {
  ojson out;
  out["config_hash"] = hash_;
  for (auto& [k, v] : body.items()) out[k] = v;
  text::write_file_atomic(config_.output_path(relative), out.dump(2) + "\n");
}

void Pipeline::write_text(const std::string& relative, const std::string& body) const {
  text::write_file_atomic(config_.output_path(relative), body);
}

void Pipeline::load_manifest() {
  const std::string path = config_.output_path("manifest.json");
  manifest_ = ojson::object();
  if (fs::exists(path)) {
    try {
      const json j = json::parse(text::read_file(path));
      if (j.value("config_hash", std::string()) == hash_) manifest_ = j;
    } catch (const json::exception&) {
    }
  }
  manifest_["config_hash"] = hash_;
  if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
  if (!manifest_.contains("tables")) manifest_["tables"] = json::object();
}

void Pipeline::save_manifest() const {
  // Keys sorted so the manifest does not depend on stage invocation order.
  const json sorted = json::parse(manifest_.dump());
  text::write_file_atomic(config_.output_path("manifest.json"), sorted.dump(2) + "\n");
}

ojson Pipeline::manifest() const { return manifest_; }

void Pipeline::record_stage(Stage stage, ojson counts) {
  manifest_["stages"][std::string(to_string(stage))] = std::move(counts);
  save_manifest();
}

void Pipeline::run_stage(Stage stage) {
  if (auto pre = prerequisite(stage)) require(*pre);
  // Per-table status written by this stage is rebuilt from scratch.
  std::vector<std::string> keys;
  if (stage == Stage::extract) keys = {"extracted"};
  if (stage == Stage::validate) keys = {"failed"};
  if (stage == Stage::harmonize) keys = {"aligned", "excluded"};
  for (auto& [tid, status] : manifest_["tables"].items()) {
    for (const auto& k : keys) status.erase(k);
  }
  const auto started = std::chrono::steady_clock::now();
  switch (stage) {
    case Stage::extract: extract(); break;
    case Stage::validate: validate(); break;
    case Stage::harmonize: harmonize(); break;
    case Stage::assemble: assemble(); break;
    case Stage::outliers: outliers(); break;
    case Stage::evaluate: evaluate(); break;
    case Stage::converge: converge(); break;
    case Stage::regress: regress(); break;
    case Stage::report: report(); break;
  }
  if (config_.record_timing) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    manifest_["timing_ms"][std::string(to_string(stage))] = ms.count();
    save_manifest();
  }
  stats_.stages_run.push_back(stage);
}

void Pipeline::run_all() {
  config_.validate();
  for (Stage s : {Stage::extract, Stage::validate, Stage::harmonize, Stage::assemble, Stage::outliers}) run_stage(s);
  if (!config_.gold.empty()) {
    run_stage(Stage::evaluate);
    try {
      run_stage(Stage::converge);
    } catch (const FoldConfigError& e) {
      manifest_["stages"]["converge"] = {{"skipped", e.what()}};
      save_manifest();
    }
    if (!config_.regress.persistence_end_years.empty() || !config_.regress.popgrowth_decades.empty()) {
      run_stage(Stage::regress);
    }
    run_stage(Stage::report);
  }
}

// --- extract ---------------------------------------------------------------

void Pipeline::extract() {
  const auto& entries = corpus();
  const auto& models = config_.provider.models;
  const PromptTemplate tmpl = default_prompt_template();

  std::optional<ResponseCache> cache;
  if (config_.provider.use_cache) cache.emplace(config_.provider.cache_dir);
  std::optional<TokenBucket> limiter;
  if (config_.provider.rate_per_second > 0) limiter.emplace(config_.provider.rate_per_second, config_.provider.burst);
  Extractor extractor(provider(), cache ? &*cache : nullptr, config_.provider.retry, limiter ? &*limiter : nullptr);

  struct Task {
    std::size_t entry;
    std::size_t model;
    ExtractionRequest request;
    std::optional<FetchedResponse> result;
    std::string error;
  };
  std::vector<Task> tasks;
  std::map<std::string, std::size_t> index_of;
  for (std::size_t e = 0; e < entries.size(); ++e) index_of[table_id(entries[e].provenance)] = e;

  // Continuation pages wait for the page they continue, so tasks run in waves.
  std::vector<int> wave(entries.size(), -1);
  std::function<int(std::size_t, int)> wave_of = [&](std::size_t e, int depth) -> int {
    if (wave[e] >= 0) return wave[e];
    if (depth > static_cast<int>(entries.size())) throw ConfigError("corpus: circular page continuation");
    int w = 0;
    if (!entries[e].continues.empty()) {
      auto it = index_of.find(entries[e].continues);
      if (it == index_of.end()) throw ConfigError("corpus: unknown continued table " + entries[e].continues);
      w = wave_of(it->second, depth + 1) + 1;
    }
    return wave[e] = w;
  };
  int max_wave = 0;
  for (std::size_t e = 0; e < entries.size(); ++e) max_wave = std::max(max_wave, wave_of(e, 0));

  std::map<std::string, std::vector<std::vector<std::string>>> parsed_headers;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    for (std::size_t m = 0; m < models.size(); ++m) tasks.push_back({e, m, {}, std::nullopt, ""});
  }
  std::map<std::string, std::string> image_cache;
  auto image_bytes = [&](const std::string& path) -> const std::string& {
    auto it = image_cache.find(path);
    if (it == image_cache.end()) it = image_cache.emplace(path, text::read_file(path)).first;
    return it->second;
  };

  std::atomic<std::size_t> hits{0};
  for (int w = 0; w <= max_wave; ++w) {
    std::vector<Task*> batch;
    for (auto& task : tasks) {
      const CorpusEntry& entry = entries[task.entry];
      if (wave[task.entry] != w) continue;
      std::optional<std::vector<std::vector<std::string>>> carried;
      if (!entry.continues.empty()) {
        auto it = parsed_headers.find(entry.continues);
        if (it != parsed_headers.end()) carried = it->second;
      }
      task.request.model_id = models[task.model];
      task.request.prompt = render_prompt(tmpl, entry.provenance.state, carried);
      task.request.image.bytes = image_bytes(entry.image);
      task.request.image.media_type = entry.media_type;
      task.request.carried_headers = carried;
      batch.push_back(&task);
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= batch.size()) return;
        Task& task = *batch[i];
        try {
          task.result = extractor.fetch(task.request);
          if (task.result->cache_hit) ++hits;
        } catch (const ProviderUnavailable& e) {
          task.error = e.what();
        }
      }
    };
    const std::size_t n_threads = std::min(config_.provider.concurrency, std::max<std::size_t>(batch.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    // Header rows for the next wave come from the first model that parsed.
    for (const Task* task : batch) {
      if (!task->result) continue;
      const std::string tid = table_id(entries[task->entry].provenance);
      if (parsed_headers.count(tid)) continue;
      try {
        const RawTable raw = parse_raw_csv(task->result->response.text, entries[task->entry].provenance);
        parsed_headers[tid] = raw.header_rows;
      } catch (const ParseFailure&) {
      }
    }
  }
  stats_.provider_calls += extractor.provider_calls();
  stats_.cache_hits += hits.load();

  ojson responses = ojson::array();
  std::vector<UsageRecord> usage;
  std::size_t ok = 0;
  std::vector<std::string> errors;
  for (const auto& task : tasks) {
    const std::string tid = table_id(entries[task.entry].provenance);
    const std::string& model = models[task.model];
    if (!task.result) {
      errors.push_back(tid + " / " + model + ": " + task.error);
      continue;
    }
    ++ok;
    usage.push_back(task.result->usage(model));
    responses.push_back({{"table_id", tid},
                         {"model", model},
                         {"text", task.result->response.text},
                         {"input_tokens", task.result->response.input_tokens},
                         {"output_tokens", task.result->response.output_tokens}});
    manifest_["tables"][tid]["extracted"].push_back(model);
  }
  if (!errors.empty()) {
    record_stage(Stage::extract, {{"input", tasks.size()},
                                  {"output", 0},
                                  {"excluded", tasks.size()},
                                  {"extracted", ok},
                                  {"aborted", errors.front()}});
    throw ProviderUnavailable("extraction aborted: " + std::to_string(errors.size()) + " of " +
                              std::to_string(tasks.size()) + " requests failed; first: " + errors.front());
  }
  for (auto& [tid, status] : manifest_["tables"].items()) {
    auto& ex = status["extracted"];
    std::vector<std::string> list = ex.get<std::vector<std::string>>();
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    ex = list;
  }

  const CostReport cost = estimate_cost(usage, config_.provider.prices, entries.size(), config_.provider.batch);
  ojson per_model = ojson::object();
  for (const auto& [m, v] : cost.per_model_total) per_model[m] = v;
  write_json("extract/cost.json", {{"input_cost", cost.input_cost},
                                   {"output_cost", cost.output_cost},
                                   {"total", cost.total},
                                   {"input_share", cost.input_share},
                                   {"tables", cost.tables},
                                   {"per_table_mean", cost.per_table_mean},
                                   {"batch", cost.batch},
                                   {"per_model_total", per_model}});
  write_json(artifact(Stage::extract), {{"responses", responses}});
  record_stage(Stage::extract, {{"input", tasks.size()}, {"output", ok}, {"excluded", 0}});
}

// --- validate --------------------------------------------------------------

void Pipeline::validate() {
  const json in = json::parse(text::read_file(config_.output_path(artifact(Stage::extract))));
  std::map<std::string, const CorpusEntry*> by_id;
  for (const auto& e : corpus()) by_id[table_id(e.provenance)] = &e;

  ojson results = ojson::array();
  std::map<std::string, std::vector<StructuralReport>> by_source;
  std::size_t valid = 0, critical = 0, inputs = 0;
  auto check = [&](const std::string& tid, const std::string& source, const std::string& text,
                   const TableProvenance& prov) {
    StructuralReport report;
    std::string parse_error;
    try {
      report = validate_structure(parse_raw_csv(text, prov));
    } catch (const ParseFailure& e) {
      // Nothing tabular came back: counted as a table without data rows.
      report.is_critical_failure = true;
      report.failed_conditions = {StructuralCondition::empty_table};
      parse_error = e.what();
    }
    ojson conditions = ojson::array();
    for (auto c : report.failed_conditions) conditions.push_back(std::string(to_string(c)));
    results.push_back({{"table_id", tid},
                       {"source", source},
                       {"critical", report.is_critical_failure},
                       {"conditions", conditions},
                       {"valid_columns", report.valid_column_indices},
                       {"parse_error", parse_error}});
    by_source[source].push_back(report);
    return report.is_critical_failure;
  };

  for (const auto& r : in.at("responses")) {
    const std::string tid = r.at("table_id").get<std::string>();
    const std::string model = r.at("model").get<std::string>();
    TableProvenance prov = by_id.at(tid)->provenance;
    prov.model_id = model;
    ++inputs;
    if (check(tid, model, r.at("text").get<std::string>(), prov)) {
      ++critical;
      manifest_["tables"][tid]["failed"].push_back(model);
    } else {
      ++valid;
    }
  }
  for (const auto& e : corpus()) {
    if (e.baseline.empty() || !fs::exists(e.baseline)) continue;
    TableProvenance prov = e.provenance;
    prov.model_id = "baseline";
    check(table_id(prov), "baseline", text::read_file(e.baseline), prov);
  }

  ojson rates = ojson::array();
  const auto failure = critical_failure_rate(by_source);
  for (const auto& f : failure) {
    rates.push_back({{"source", f.source}, {"failures", f.failures}, {"tables", f.tables}, {"pct", f.pct}});
  }
  write_json(artifact(Stage::validate), {{"results", results}, {"failure_rates", rates}});
  write_text("validate/failure_rates.txt", header_line(hash_) + failure_rate_text(failure));
  record_stage(Stage::validate, {{"input", inputs}, {"output", valid}, {"excluded", critical}});
}

// --- harmonize -------------------------------------------------------------

void Pipeline::harmonize() {
  const json in = json::parse(text::read_file(config_.output_path(artifact(Stage::extract))));
  const json structural = json::parse(text::read_file(config_.output_path(artifact(Stage::validate))));
  std::set<std::pair<std::string, std::string>> usable;
  for (const auto& r : structural.at("results")) {
    if (!r.at("critical").get<bool>()) usable.insert({r.at("table_id").get<std::string>(), r.at("source").get<std::string>()});
  }
  std::map<std::string, const CorpusEntry*> by_id;
  for (const auto& e : corpus()) by_id[table_id(e.provenance)] = &e;
  const ReferenceData& refs = references();
  DeterministicFieldMapper mapper(refs.fields, config_.fuzzy_threshold);

  // Model order follows the config, so the first aligned model fixes a
  // table's vintage.
  std::map<std::string, std::map<std::string, const json*>> responses;
  for (const auto& r : in.at("responses")) responses[r.at("table_id").get<std::string>()][r.at("model").get<std::string>()] = &r;

  ojson mappings = ojson::array();
  ojson tables_out = ojson::array();
  std::size_t inputs = 0, aligned = 0, excluded = 0, ensembled = 0;
  for (const auto& entry : corpus()) {
    const std::string tid = table_id(entry.provenance);
    std::map<std::string, AlignedTable> per_model;
    std::string vintage;
    for (const auto& model : config_.provider.models) {
      if (!usable.count({tid, model})) continue;
      auto it = responses[tid].find(model);
      if (it == responses[tid].end()) continue;
      ++inputs;
      TableProvenance prov = entry.provenance;
      prov.model_id = model;
      RawTable raw = parse_raw_csv(it->second->at("text").get<std::string>(), prov);
      const CountyRef& ref = refs.county_ref(prov.state);

      LayoutDecision layout;
      if (!prov.entity.empty()) {
        layout.layout = Layout::year_sorted;
      } else {
        layout = classify_layout(raw, ref, config_.fuzzy_threshold);
      }
      std::vector<std::string> names;
      if (layout.layout == Layout::year_sorted) {
        names.push_back(prov.entity);
      } else {
        for (const auto& row : raw.data_rows) {
          if (!row.empty() && !row[0].is_empty()) names.push_back(row[0].raw);
        }
      }
      const CountyMapping counties = standardize_counties(names, ref, config_.fuzzy_threshold);
      const FieldMapping fields = harmonize_fields(raw.headers, mapper);

      ojson decisions = ojson::array();
      for (const auto& [rawname, d] : counties.decisions) {
        decisions.push_back({{"raw", rawname},
                             {"canonical", d.canonical},
                             {"county_id", d.county_id},
                             {"method", std::string(to_string(d.method))},
                             {"score", d.score}});
      }
      ojson field_map = ojson::object();
      for (const auto& [h, f] : fields.mapped) field_map[h] = std::string(to_string(f));
      ojson record = {{"table_id", tid},
                      {"model", model},
                      {"layout", std::string(to_string(layout.layout))},
                      {"fields", field_map},
                      {"unmapped_fields", fields.unmapped},
                      {"field_log", fields.log},
                      {"counties", decisions},
                      {"unmapped_counties", counties.unmapped},
                      {"warnings", counties.warnings}};
      if (layout.warning) record["warnings"].push_back(*layout.warning);

      if (vintage.empty()) {
        std::vector<FieldCategory> signature;
        std::set<FieldCategory> seen;
        for (std::size_t c = 1; c < raw.column_count; ++c) {
          auto f = fields.mapped.find(raw.headers[c]);
          if (f != fields.mapped.end() && seen.insert(f->second).second) signature.push_back(f->second);
        }
        vintage = assign_vintage(prov.state, signature);
      }
      raw.provenance.vintage_id = vintage;
      try {
        per_model.emplace(model, align_table(raw, fields, counties, layout.layout));
        ++aligned;
        manifest_["tables"][tid]["aligned"].push_back(model);
      } catch (const AlignmentEmpty& e) {
        ++excluded;
        record["excluded"] = e.what();
      }
      mappings.push_back(std::move(record));
    }
    for (const auto& [model, table] : per_model) {
      tables_out.push_back({{"source", model}, {"table", aligned_table_to_json(table)}});
    }
    if (!per_model.empty()) {
      tables_out.push_back({{"source", "ensemble"}, {"table", aligned_table_to_json(ensemble_tables(per_model))}});
      ++ensembled;
    } else {
      manifest_["tables"][tid]["excluded"] = true;
    }
  }
  write_json("harmonize/mappings.json", {{"mappings", mappings}});
  write_json(artifact(Stage::harmonize), {{"tables", tables_out}});
  record_stage(Stage::harmonize,
               {{"input", inputs}, {"output", aligned}, {"excluded", excluded}, {"ensembled_tables", ensembled}});
}

std::vector<AlignedTable> Pipeline::load_aligned(const std::string& source) const {
  const json in = json::parse(text::read_file(config_.output_path(artifact(Stage::harmonize))));
  std::vector<AlignedTable> out;
  for (const auto& t : in.at("tables")) {
    if (t.at("source").get<std::string>() == source) out.push_back(aligned_table_from_json(t.at("table")));
  }
  return out;
}

std::vector<GoldCell> Pipeline::load_gold_cells() const {
  if (config_.gold.empty()) throw ConfigError("no gold file configured");
  return load_gold(config_.resolve(config_.gold));
}

// --- assemble --------------------------------------------------------------

void Pipeline::assemble() {
  const auto tables = load_aligned("ensemble");
  const PopulationTable population = load_population(config_.resolve(config_.population));
  const StateTotals totals = load_state_totals(config_.resolve(config_.state_totals));
  GoldKeySet keys;
  if (!config_.gold.empty()) keys = gold_keys(load_gold_cells());
  const DedupContext context = build_dedup_context(tables, references(), totals, population);
  const PanelBuild build = assemble_panel(tables, context, keys);

  std::vector<ojson> panel, readings, excluded;
  for (const auto& o : build.panel) panel.push_back(observation_to_json(o));
  for (const auto& o : build.readings) readings.push_back(observation_to_json(o));
  for (const auto& o : build.excluded) excluded.push_back(observation_to_json(o));
  write_text(artifact(Stage::assemble), jsonl(hash_, panel));
  write_text("assemble/readings.jsonl", jsonl(hash_, readings));
  write_text("assemble/excluded.jsonl", jsonl(hash_, excluded));
  write_text("assemble/panel.csv", panel_csv(hash_, build.panel));

  std::size_t groups = 0;
  for (const auto& [rule, n] : build.decided_by_rule) groups += n;
  const std::size_t feasible = build.readings.size() - build.infeasible_readings;
  ojson by_rule = ojson::object();
  for (const auto& [rule, n] : build.decided_by_rule) by_rule[std::to_string(rule)] = n;
  write_json("assemble/summary.json", {{"readings", build.readings.size()},
                                       {"infeasible_readings", build.infeasible_readings},
                                       {"infeasible_keys", build.infeasible_keys},
                                       {"duplicates_dropped", feasible - groups},
                                       {"decided_by_rule", by_rule},
                                       {"panel", build.panel.size()},
                                       {"no_population", build.excluded.size()},
                                       {"anomalies", build.anomalies}});
  record_stage(Stage::assemble, {{"input", build.readings.size()},
                                 {"output", build.panel.size()},
                                 {"excluded", build.readings.size() - build.panel.size()},
                                 {"excluded_infeasible", build.infeasible_readings},
                                 {"excluded_duplicates", feasible - groups},
                                 {"excluded_no_population", build.excluded.size()}});
}

std::vector<PanelObservation> Pipeline::load_observations(const std::string& name) const {
  std::vector<PanelObservation> out;
  for (const auto& j : read_jsonl(config_.output_path("assemble/" + name + ".jsonl"))) {
    out.push_back(observation_from_json(j));
  }
  return out;
}

// --- outliers --------------------------------------------------------------

void Pipeline::outliers() {
  PanelBuild build;
  build.panel = load_observations("panel");
  build.readings = load_observations("readings");
  const PopulationTable population = load_population(config_.resolve(config_.population));
  std::vector<std::string> notes;
  const auto flags = detect_outliers(build, population, config_.thresholds, &notes);
  std::vector<ojson> records;
  std::map<std::string, std::size_t> by_kind;
  for (const auto& f : flags) {
    records.push_back(flag_to_json(f));
    ++by_kind[std::string(to_string(f.kind))];
  }
  write_text(artifact(Stage::outliers), jsonl(hash_, records));
  std::string note_text = header_line(hash_);
  for (const auto& n : notes) note_text += n + "\n";
  write_text("outliers/notes.txt", note_text);
  ojson counts = {{"input", build.panel.size()}, {"output", build.panel.size()}, {"excluded", 0}, {"flags", flags.size()}};
  for (const auto& [k, n] : by_kind) counts["flags_" + k] = n;
  record_stage(Stage::outliers, counts);
}

// --- evaluate --------------------------------------------------------------

void Pipeline::evaluate() {
  const auto gold = load_gold_cells();
  const auto corrections = load_corrections(config_.corrections);
  std::vector<std::string> sources{"ensemble"};
  for (const auto& m : config_.provider.models) sources.push_back(m);

  ojson reports = ojson::object();
  std::string text = header_line(hash_);
  std::vector<EvalCell> ensemble_cells;
  std::size_t cells_in = 0;
  for (const auto& source : sources) {
    auto tables = load_aligned(source);
    if (source == "ensemble") apply_corrections(tables, corrections);
    std::size_t spurious = 0;
    auto cells = match_gold(tables, gold, &spurious);
    try {
      EvalReport r = evaluate_cells(cells, config_.evaluation);
      r.spurious = spurious;
      reports[source] = ojson::parse(eval_report_json(r));
      text += "== " + source + " ==\n" + eval_report_text(r) + "\n";
    } catch (const EmptyEvaluation& e) {
      reports[source] = {{"error", e.what()}};
      text += "== " + source + " ==\n" + e.what() + "\n\n";
    }
    if (source == "ensemble") {
      ensemble_cells = cells;
      cells_in = cells.size();
    }
  }
  if (reports["ensemble"].contains("error")) {
    throw EmptyEvaluation("evaluation of the ensemble found no comparable cells");
  }

  std::string cells_csv = header_line(hash_) + "table_id,state,year,county_id,field,truth,extracted\n";
  for (const auto& c : ensemble_cells) {
    cells_csv += csv::join_row({c.table_id, c.state, std::to_string(c.year), c.county_id,
                                std::string(to_string(c.field)), text::fixed(c.truth, 0),
                                c.extracted ? text::fixed(*c.extracted, 0) : ""}) +
                 "\n";
  }
  write_text("evaluate/cells.csv", cells_csv);
  write_text("evaluate/breakdown_decade.csv",
             header_line(hash_) + breakdown_csv(breakdown(ensemble_cells, GroupBy::decade, config_.evaluation)));
  write_text("evaluate/breakdown_state.csv",
             header_line(hash_) + breakdown_csv(breakdown(ensemble_cells, GroupBy::state, config_.evaluation)));
  write_text("evaluate/report.txt", text);
  write_json(artifact(Stage::evaluate), {{"corrections_applied", corrections.size()}, {"sources", reports}});
  record_stage(Stage::evaluate, {{"input", cells_in},
                                 {"output", reports["ensemble"]["matched"]},
                                 {"excluded", reports["ensemble"]["missing"]}});
}

// --- converge --------------------------------------------------------------

void Pipeline::converge() {
  const auto cells = read_eval_cells(config_.output_path("evaluate/cells.csv"));
  ConvergenceConfig cc = config_.convergence;
  cc.seed = config_.seed;
  const ConvergenceResult result = convergence_analysis(cells, cc, config_.evaluation);
  write_text(artifact(Stage::converge), header_line(hash_) + convergence_csv(result));
  record_stage(Stage::converge, {{"input", result.dev_tables.size() + result.eval_tables.size()},
                                 {"output", result.eval_tables.size()},
                                 {"excluded", result.dev_tables.size()},
                                 {"points", result.points.size()}});
}

// --- regress ---------------------------------------------------------------

void Pipeline::regress() {
  const auto llm_panel = load_observations("panel");
  const auto gold = apply_corrections(load_gold_cells(), load_corrections(config_.corrections));
  const PopulationTable population = load_population(config_.resolve(config_.population));
  const StateTotals totals = load_state_totals(config_.resolve(config_.state_totals));

  // Gold cells become tables of their own and go through the same assembly.
  std::map<std::string, std::string> vintages;
  for (const auto& t : load_aligned("ensemble")) vintages[table_id(t.provenance)] = t.provenance.vintage_id;
  std::map<std::string, AlignedTable> gold_tables;
  for (const auto& entry : corpus()) {
    AlignedTable t;
    t.provenance = entry.provenance;
    t.provenance.model_id = "gold";
    const std::string tid = table_id(entry.provenance);
    t.provenance.vintage_id = vintages.count(tid) ? vintages[tid] : "gold";
    gold_tables.emplace(tid, std::move(t));
  }
  for (const auto& g : gold) {
    auto it = gold_tables.find(g.table_id);
    if (it == gold_tables.end()) continue;
    AlignedCell& cell = it->second.rows[{g.county_id, g.year}][g.field];
    cell.value = g.value;
    if (g.value) cell.readings["gold"] = *g.value;
  }
  std::vector<AlignedTable> gold_list;
  for (auto& [tid, t] : gold_tables) {
    if (!t.rows.empty()) gold_list.push_back(std::move(t));
  }
  const DedupContext gold_context = build_dedup_context(gold_list, references(), totals, population);
  const PanelBuild gold_build = assemble_panel(gold_list, gold_context, gold_keys(gold));

  std::vector<PairedEstimate> panel_a, panel_b;
  ojson skipped = ojson::array();
  for (int year : config_.regress.persistence_end_years) {
    try {
      panel_a.push_back(persistence_spec(llm_panel, gold_build.panel, year, config_.regress.field));
    } catch (const Error& e) {
      skipped.push_back({{"spec", "persistence"}, {"period_end", year}, {"reason", e.what()}});
    }
  }
  for (int decade : config_.regress.popgrowth_decades) {
    try {
      panel_b.push_back(popgrowth_spec(llm_panel, gold_build.panel, decade, population, config_.regress.field));
    } catch (const Error& e) {
      skipped.push_back({{"spec", "popgrowth"}, {"period_start", decade}, {"reason", e.what()}});
    }
  }
  std::vector<PairedEstimate> all = panel_a;
  all.insert(all.end(), panel_b.begin(), panel_b.end());
  write_json(artifact(Stage::regress), {{"estimates", ojson::parse(regression_table_json(all))}, {"skipped", skipped}});
  write_text("regress/table.txt", header_line(hash_) + regression_table_text(panel_a, panel_b));
  const std::size_t requested = config_.regress.persistence_end_years.size() + config_.regress.popgrowth_decades.size();
  record_stage(Stage::regress, {{"input", requested}, {"output", all.size()}, {"excluded", skipped.size()}});
}

// --- report ----------------------------------------------------------------

void Pipeline::report() {
  std::string out = header_line(hash_);
  auto strip = [](std::string body) {
    if (text::starts_with(body, "# config_hash: ")) body = body.substr(body.find('\n') + 1);
    return body;
  };
  auto section = [&](const std::string& title, const std::string& relative) {
    const std::string path = config_.output_path(relative);
    if (!fs::exists(path)) return;
    out += "\n## " + title + "\n\n" + strip(text::read_file(path));
  };
  out += "# Extraction run report\n";
  section("Critical parsing failures", "validate/failure_rates.txt");
  section("Cell-level accuracy", "evaluate/report.txt");
  section("Breakdown by decade (CSV)", "evaluate/breakdown_decade.csv");
  section("Breakdown by state (CSV)", "evaluate/breakdown_state.csv");
  section("Regression comparison", "regress/table.txt");
  const std::string cost_path = config_.output_path("extract/cost.json");
  if (fs::exists(cost_path)) {
    const json cost = json::parse(text::read_file(cost_path));
    out += "\n## Extraction cost\n\n";
    out += "Total: " + text::fixed(cost.at("total").get<double>(), 4) + "\n";
    out += "Input share: " + text::fixed(cost.at("input_share").get<double>(), 4) + "\n";
    out += "Per table: " + text::fixed(cost.at("per_table_mean").get<double>(), 4) + "\n";
    out += std::string("Batch pricing: ") + (cost.at("batch").get<bool>() ? "yes" : "no") + "\n";
  }
  write_text(artifact(Stage::report), out);
  record_stage(Stage::report, {{"input", 1}, {"output", 1}, {"excluded", 0}});
}

}  // namespace histpanel
