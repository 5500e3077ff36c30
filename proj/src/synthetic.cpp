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

#include "histpanel/synthetic.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include <nlohmann/json.hpp>

#include "histpanel/csv.hpp"
#include "histpanel/digest.hpp"
#include "histpanel/econ.hpp"
#include "histpanel/error.hpp"
#include "histpanel/extraction.hpp"
#include "histpanel/harmonize.hpp"

namespace histpanel::synth {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t Rng::next() {
  // splitmix64
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t Rng::range(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(next() % span);
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

void put_chunk(std::string& out, const char* type, const std::string& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::string body = std::string(type, 4) + data;
  out += body;
  put_u32(out, static_cast<std::uint32_t>(
                   crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace

std::string make_png(std::uint32_t width, std::uint32_t height, std::uint64_t seed) {
  Rng rng(seed);
  std::string raw;
  raw.reserve(static_cast<std::size_t>(height) * (width + 1));
  for (std::uint32_t y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    for (std::uint32_t x = 0; x < width; ++x) {
      const bool rule = (y % 12 == 0) || (x % 40 == 0);
      const auto noise = static_cast<int>(rng.next() % 24);
      raw.push_back(static_cast<char>(rule ? 60 + noise : 225 + noise));
    }
  }
  uLongf size = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &size, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw Error("png: compression failed");
  }
  packed.resize(size);

  std::string png = "\x89PNG\r\n\x1a\n";
  std::string ihdr;
  put_u32(ihdr, width);
  put_u32(ihdr, height);
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // 8-bit grayscale
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", packed);
  put_chunk(png, "IEND", "");
  return png;
}

// ---------------------------------------------------------------------------
// Pipeline corpus

namespace {

struct County {
  std::string name;     // printed label
  std::string county_id;
  double base_log_dev = 0.0;
  std::map<int, double> pop;  // decennial
  std::map<int, double> dev;  // 5-year grid of log deviations
};

struct TruthRow {
  double autos = 0, trucks = 0, trailers = 0, motorcycles = 0;
  bool motorcycles_blank = false;
  double total() const { return autos + trucks - trailers; }
};

double interp(const std::map<int, double>& m, int year) {
  auto hi = m.lower_bound(year);
  if (hi == m.end()) return std::prev(m.end())->second;
  if (hi->first == year || hi == m.begin()) return hi->second;
  auto lo = std::prev(hi);
  const double t = static_cast<double>(year - lo->first) / static_cast<double>(hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

struct World {
  std::map<std::string, std::vector<County>> counties;  // printed units by state
  std::vector<County> extra_population;                 // e.g. Cook as a whole

  TruthRow truth(const County& c, int year, Rng* blank_rng) const {
    const double rate = 0.04 + 0.006 * (year - 1915);
    const double total = std::round(rate * interp(c.pop, year) * std::exp(interp(c.dev, year)));
    TruthRow row;
    // Shares depend only on the county and year so every print agrees.
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char ch : c.county_id) h = (h ^ ch) * 1099511628211ULL;
    Rng shares(h * 31 + static_cast<std::uint64_t>(year));
    row.trucks = std::round(total * (0.11 + 0.06 * shares.uniform()));
    row.trailers = std::round(total * (0.003 + 0.015 * shares.uniform()));
    row.autos = total - row.trucks + row.trailers;
    row.motorcycles = std::round(total * (0.004 + 0.015 * shares.uniform()));
    if (blank_rng) row.motorcycles_blank = blank_rng->bernoulli(0.02);
    return row;
  }
};

World build_world(const ReferenceData& refs, Rng& rng) {
  World w;
  auto make = [&](const std::string& name, const std::string& id, double pop1900) {
    County c;
    c.name = name;
    c.county_id = id;
    double growth = 0.05 + 0.25 * rng.uniform();
    double pop = pop1900;
    for (int y = 1900; y <= 1970; y += 10) {
      c.pop[y] = std::round(pop);
      pop *= 1.0 + growth + 0.05 * rng.normal();
    }
    double d = 0.35 * rng.normal();
    c.base_log_dev = d;
    for (int y = 1915; y <= 1965; y += 5) {
      c.dev[y] = d;
      d = 0.8 * d + 0.12 * rng.normal();
    }
    return c;
  };
  for (const std::string state : {"MI", "IL"}) {
    const CountyRef& ref = refs.county_ref(state);
    for (const auto& e : ref.entries) {
      const bool big = e.name == "Wayne" || e.name == "Cook" || e.name == "Kent";
      const double pop1900 = big ? 250000.0 + 200000.0 * rng.uniform() : std::exp(9.2 + 0.7 * rng.normal());
      County c = make(e.name, e.county_id, pop1900);
      bool split = false;
      for (const auto& s : ref.special_entities) split = split || s.part_of == e.county_id;
      if (!split) {
        w.counties[state].push_back(std::move(c));
        continue;
      }
      // Printed in parts; the whole keeps a population series for state sums.
      double share = 0.75;
      for (const auto& s : ref.special_entities) {
        if (s.part_of != e.county_id) continue;
        County part = c;
        part.name = s.name;
        part.county_id = s.county_id;
        for (auto& [y, p] : part.pop) p = std::round(p * share);
        share = 1.0 - share;
        w.counties[state].push_back(std::move(part));
      }
      w.extra_population.push_back(std::move(c));
    }
  }
  for (auto& [state, list] : w.counties) {
    std::sort(list.begin(), list.end(), [](const County& a, const County& b) { return a.name < b.name; });
  }
  // Make split parts add up to the whole exactly.
  for (auto& whole : w.extra_population) {
    std::set<std::string> parts;
    for (const auto& [state, ref] : refs.counties) {
      for (const auto& s : ref.special_entities) {
        if (s.part_of == whole.county_id) parts.insert(s.county_id);
      }
    }
    for (auto& [y, p] : whole.pop) {
      double sum = 0;
      for (const auto& [state, list] : w.counties) {
        for (const auto& c : list) {
          if (parts.count(c.county_id)) sum += c.pop.at(y);
        }
      }
      p = sum;
    }
  }
  return w;
}

std::string printed(double v, bool commas) {
  const auto n = static_cast<std::int64_t>(v);
  return commas ? render_count(n) : std::to_string(n);
}

// Flip one digit for a misreading.
double misread(double v, Rng& rng) {
  std::string s = std::to_string(static_cast<std::int64_t>(v));
  const auto pos = static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(s.size()) - 1));
  char d;
  do {
    d = static_cast<char>('0' + rng.range(0, 9));
  } while (d == s[pos] || (pos == 0 && d == '0' && s.size() > 1));
  s[pos] = d;
  return static_cast<double>(std::stoll(s));
}

struct ModelProfile {
  std::string id;
  double missing;
  double incorrect;
};

struct TableSpec {
  std::string document_id;
  std::string state;
  int year = 0;
  int page = 1;
  std::string vintage;  // "A" (four columns), "B" (with total), "Y" (year-sorted)
  std::string entity;
};

struct Column {
  std::string header;
  std::string gold_field;
  double TruthRow::*member;
};

std::vector<Column> columns_for(const std::string& vintage) {
  if (vintage == "B") {
    return {{"Automobiles", "Automobiles", &TruthRow::autos},
            {"Trucks", "Trucks", &TruthRow::trucks},
            {"Total", "Total Vehicles", nullptr}};
  }
  if (vintage == "Y") {
    return {{"Passenger Cars", "Automobiles", &TruthRow::autos},
            {"Commercial Cars", "Trucks", &TruthRow::trucks}};
  }
  return {{"Passenger Cars.", "Automobiles", &TruthRow::autos},
          {"Commer- cial Cars.", "Trucks", &TruthRow::trucks},
          {"Motor Cycles.", "Motorcycles", &TruthRow::motorcycles},
          {"Trailers.", "Trailers", &TruthRow::trailers}};
}

struct PrintedRow {
  std::string label;
  std::string county_id;
  int year = 0;
  std::vector<std::optional<double>> truth;
};

}  // namespace

CorpusSummary write_pipeline_corpus(const std::string& dir, const CorpusOptions& options) {
  if (options.reference_dir.empty()) throw ConfigError("synthetic corpus needs a reference directory");
  const ReferenceData refs = ReferenceData::load(options.reference_dir);
  Rng rng(options.seed);
  const World world = build_world(refs, rng);

  const fs::path root(dir);
  fs::create_directories(root / "reference");
  for (const auto& entry : fs::directory_iterator(options.reference_dir)) {
    if (entry.path().extension() == ".csv") {
      fs::copy_file(entry.path(), root / "reference" / entry.path().filename(),
                    fs::copy_options::overwrite_existing);
    }
  }

  std::vector<TableSpec> specs;
  for (int y = 1920; y <= 1960; y += 5) specs.push_back({"MI-" + std::to_string(y), "MI", y, 1, "A", ""});
  specs.push_back({"MI-1931", "MI", 1930, 2, "B", ""});       // prior-year reprint, other layout
  specs.push_back({"MI-1941", "MI", 1940, 3, "A", ""});       // prior-year reprint, same layout
  specs.push_back({"MI-WAYNE-1930", "MI", 1930, 1, "Y", "Wayne"});
  for (int y = 1920; y <= 1960; y += 10) specs.push_back({"IL-" + std::to_string(y), "IL", y, 1, "A", ""});

  const std::vector<ModelProfile> models = {{"claude", 0.01, 0.025}, {"gemini", 0.04, 0.015}};

  json corpus = json::array();
  std::string gold_csv = "table_id,state,year,county_id,field,value\n";
  CorpusSummary summary;
  std::map<std::pair<std::string, int>, double> state_truth;

  for (std::size_t t = 0; t < specs.size(); ++t) {
    const TableSpec& spec = specs[t];
    TableProvenance prov;
    prov.document_id = spec.document_id;
    prov.page = spec.page;
    const std::string tid = table_id(prov);
    const auto columns = columns_for(spec.vintage);
    Rng blank_rng(options.seed * 1000003 + t);

    std::vector<PrintedRow> rows;
    const auto& units = world.counties.at(spec.state);
    if (spec.vintage == "Y") {
      const County* c = nullptr;
      for (const auto& u : units) {
        if (u.name == spec.entity) c = &u;
      }
      for (int y = spec.year - 10; y <= spec.year; ++y) {
        const TruthRow tr = world.truth(*c, y, nullptr);
        PrintedRow row{std::to_string(y), c->county_id, y, {}};
        for (const auto& col : columns) row.truth.push_back(tr.*col.member);
        rows.push_back(std::move(row));
      }
    } else {
      for (const auto& c : units) {
        const TruthRow tr = world.truth(c, spec.year, &blank_rng);
        PrintedRow row{c.name, c.county_id, spec.year, {}};
        for (const auto& col : columns) {
          if (!col.member) {
            row.truth.push_back(tr.total());
          } else if (col.member == &TruthRow::motorcycles && tr.motorcycles_blank) {
            row.truth.push_back(std::nullopt);
          } else {
            row.truth.push_back(tr.*col.member);
          }
        }
        if (spec.page == 1 && spec.vintage == "A") state_truth[{spec.state, spec.year}] += tr.total();
        rows.push_back(std::move(row));
      }
    }

    for (const auto& row : rows) {
      for (std::size_t j = 0; j < columns.size(); ++j) {
        gold_csv += csv::join_row({tid, spec.state, std::to_string(row.year), row.county_id, columns[j].gold_field,
                                   row.truth[j] ? printed(*row.truth[j], false) : ""}) +
                    "\n";
        ++summary.gold_cells;
      }
    }

    const std::string image = make_png(320, 240, options.seed ^ (0x51ed270b27a9ULL * (t + 1)));
    const std::string image_rel = "images/" + tid + ".png";
    text::write_file_atomic((root / image_rel).string(), image);
    const std::string digest = sha256_hex(image);
    const bool commas = spec.vintage == "A";

    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto& model = models[m];
      Rng err(options.seed * 7919 + t * 97 + m);
      std::string out;
      out += spec.vintage == "Y" ? "YEAR" : "COUNTIES.";
      for (const auto& col : columns) out += "," + csv::escape(col.header);
      out += "\n";
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        std::string label = row.label;
        if (spec.vintage != "Y" && label.size() >= 7 && err.bernoulli(0.02)) {
          std::string typo = label;
          typo[label.size() / 2] = typo[label.size() / 2] == 'e' ? 'c' : 'e';
          const CountyMapping check =
              standardize_counties({typo}, refs.county_ref(spec.state), kDefaultFuzzyThreshold);
          const MappingDecision* d = check.find(typo);
          if (d && d->county_id == row.county_id) label = typo;
        }
        out += csv::escape(label);
        for (std::size_t j = 0; j < columns.size(); ++j) {
          out += ",";
          std::optional<double> v = row.truth[j];
          if (v && err.bernoulli(model.missing)) v.reset();
          if (v && err.bernoulli(model.incorrect)) v = misread(*v, err);
          // One wildly misread count: infeasible once divided by population.
          if (v && model.id == "claude" && spec.document_id == "MI-1945" && r == 5 && j == 0) *v *= 1000;
          if (v) out += csv::escape(printed(*v, commas));
        }
        out += "\n";
      }
      json fixture;
      if (model.id == "gemini" && spec.document_id == "MI-1955") {
        out = "I could not read this table reliably.";
      }
      fixture["text"] = out;
      fixture["input_tokens"] = 1600 + 3 * static_cast<std::int64_t>(rows.size());
      fixture["output_tokens"] = static_cast<std::int64_t>(out.size() / 3);
      if (model.id == "claude" && spec.document_id == "MI-1925") fixture["fail_attempts"] = 1;
      text::write_file_atomic(MockProvider::fixture_path((root / "fixtures").string(), digest, model.id),
                              fixture.dump(2) + "\n");
      ++summary.fixtures;
    }

    // Layout-parser baseline: every other table gets split rows and merged cells.
    std::string base;
    base += spec.vintage == "Y" ? "YEAR" : "COUNTIES.";
    for (const auto& col : columns) base += "," + csv::escape(col.header);
    base += "\n";
    const bool broken = t % 5 < 2;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& row = rows[r];
      std::vector<std::string> cells{row.label};
      for (const auto& v : row.truth) cells.push_back(v ? printed(*v, false) : "");
      if (broken && r == 0) {
        std::vector<std::string> orphan{""};
        for (std::size_t j = 1; j < cells.size(); ++j) orphan.push_back(j == 1 ? "" : cells[j]);
        base += csv::join_row(orphan) + "\n";
      }
      if (broken && r % 7 == 3 && cells.size() > 2) {
        cells[1] = cells[1] + " " + cells[2];
        cells.erase(cells.begin() + 2);
        cells.push_back("");
      }
      base += csv::join_row(cells) + "\n";
    }
    const std::string base_rel = "baseline/" + tid + ".csv";
    text::write_file_atomic((root / base_rel).string(), base);

    json entry;
    entry["document_id"] = spec.document_id;
    entry["state"] = spec.state;
    entry["year"] = spec.year;
    entry["page"] = spec.page;
    entry["ingestion_number"] = static_cast<int>(t + 1);
    entry["entity"] = spec.entity;
    entry["image"] = image_rel;
    entry["media_type"] = "image/png";
    entry["baseline"] = base_rel;
    corpus.push_back(entry);
    ++summary.tables;
  }
  text::write_file_atomic((root / "corpus.json").string(), json{{"tables", corpus}}.dump(2) + "\n");
  text::write_file_atomic((root / "gold.csv").string(), gold_csv);

  std::string pop_csv = "county_id,year,population\n";
  auto add_pop = [&](const County& c) {
    for (const auto& [y, p] : c.pop) {
      pop_csv += csv::join_row({c.county_id, std::to_string(y), printed(p, false)}) + "\n";
    }
  };
  for (const auto& [state, list] : world.counties) {
    for (const auto& c : list) add_pop(c);
  }
  for (const auto& c : world.extra_population) add_pop(c);
  text::write_file_atomic((root / "population.csv").string(), pop_csv);

  std::string totals_csv = "state,year,total\n";
  Rng noise(options.seed + 17);
  for (const auto& [key, total] : state_truth) {
    totals_csv += csv::join_row({key.first, std::to_string(key.second),
                                 printed(std::round(total * (1.0 + 0.004 * noise.normal())), false)}) +
                  "\n";
  }
  text::write_file_atomic((root / "state_totals.csv").string(), totals_csv);

  json config;
  config["corpus"] = "corpus.json";
  config["reference_dir"] = "reference";
  config["population"] = "population.csv";
  config["state_totals"] = "state_totals.csv";
  config["gold"] = "gold.csv";
  config["provider"] = {
      {"kind", "mock"},
      {"fixtures", "fixtures"},
      {"models", {"claude", "gemini"}},
      {"prices",
       {{"claude", {{"input_per_token", 3e-6}, {"output_per_token", 15e-6}}},
        {"gemini", {{"input_per_token", 1.25e-6}, {"output_per_token", 5e-6}}}}},
      {"batch", false},
      {"retry", {{"attempts", 3}, {"base_delay_ms", 1}, {"max_delay_ms", 4}, {"jitter", 0.0}}},
      {"rate_per_second", 0.0},
      {"burst", 1.0},
      {"concurrency", 4},
  };
  config["convergence"] = {{"folds", 10}, {"step", 1}, {"dev_fraction", 0.5}};
  config["regress"] = {{"persistence_end_years", {1930, 1940, 1950, 1960}},
                       {"popgrowth_decades", {1920, 1930, 1940, 1950}}};
  config["seed"] = options.seed;
  config["output_dir"] = "run";
  summary.config_path = (root / "config.json").string();
  text::write_file_atomic(summary.config_path, config.dump(2) + "\n");
  return summary;
}

// ---------------------------------------------------------------------------

std::vector<EvalCell> eval_cells(std::size_t tables, std::size_t cells_per_table, double missing_rate,
                                 double incorrect_rate, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EvalCell> cells;
  cells.reserve(tables * cells_per_table);
  for (std::size_t t = 0; t < tables; ++t) {
    char id[32];
    std::snprintf(id, sizeof id, "T%04zu-p1", t);
    const int year = 1920 + static_cast<int>(t % 5) * 10;
    const std::string state = t % 2 ? "IL" : "MI";
    for (std::size_t c = 0; c < cells_per_table; ++c) {
      EvalCell cell;
      cell.table_id = id;
      cell.state = state;
      cell.year = year;
      cell.county_id = state + "-" + std::to_string(c / 4 + 1);
      cell.field = kAllFieldCategories[c % 4];
      cell.truth = std::round(std::exp(6.5 + 1.2 * rng.normal()));
      const double u = rng.uniform();
      if (u < missing_rate) {
        cell.extracted.reset();
      } else if (u < missing_rate + incorrect_rate) {
        double wrong = std::round(cell.truth * (1.0 + 0.1 * rng.normal()));
        if (wrong == cell.truth) wrong += 1;
        cell.extracted = std::max(0.0, wrong);
      } else {
        cell.extracted = cell.truth;
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

namespace {

PanelObservation obs(const std::string& county, const std::string& state, int year, double rate, double pop,
                     const std::string& model) {
  PanelObservation o;
  o.county_id = county;
  o.state = state;
  o.year = year;
  o.field = FieldCategory::total_vehicles;
  o.value = rate * pop;
  o.per_capita = rate;
  o.log_per_capita = std::log(rate);
  o.provenance.document_id = state + "-" + std::to_string(year);
  o.provenance.state = state;
  o.provenance.year = year;
  o.provenance.model_id = model;
  o.model_support.insert(model);
  return o;
}

}  // namespace

PanelPair persistence_dgp(std::size_t counties, std::size_t states, double rho, std::uint64_t seed,
                          double llm_noise) {
  Rng rng(seed);
  PanelPair out;
  std::vector<double> state_effect(states);
  for (auto& e : state_effect) e = 0.3 * rng.normal();
  for (std::size_t c = 0; c < counties; ++c) {
    const std::string state = "S" + std::to_string(c % states);
    const std::string county = state + "-C" + std::to_string(c);
    const double y0 = std::log(0.08) + 0.5 * rng.normal();
    const double y1 = rho * y0 + state_effect[c % states] + 0.2 * rng.normal();
    const double pop = 20000.0;
    out.population.emplace(county, PopulationSeries(county, {{1920, pop}, {1930, pop}}));
    out.gold.push_back(obs(county, state, 1920, std::exp(y0), pop, "gold"));
    out.gold.push_back(obs(county, state, 1930, std::exp(y1), pop, "gold"));
    const double n0 = llm_noise > 0 ? llm_noise * rng.normal() : 0.0;
    const double n1 = llm_noise > 0 ? llm_noise * rng.normal() : 0.0;
    out.llm.push_back(obs(county, state, 1920, std::exp(y0 + n0), pop, "llm"));
    out.llm.push_back(obs(county, state, 1930, std::exp(y1 + n1), pop, "llm"));
  }
  return out;
}

PanelPair popgrowth_dgp(std::size_t counties, std::size_t states, double beta, std::uint64_t seed,
                        double llm_noise) {
  Rng rng(seed);
  PanelPair out;
  std::map<std::pair<std::size_t, int>, double> state_year;
  for (std::size_t s = 0; s < states; ++s) {
    for (int y = 1920; y <= 1930; ++y) state_year[{s, y}] = 0.05 * (y - 1920) + 0.1 * rng.normal();
  }
  for (std::size_t c = 0; c < counties; ++c) {
    const std::size_t s = c % states;
    const std::string state = "S" + std::to_string(s);
    const std::string county = state + "-C" + std::to_string(c);
    const double p1920 = std::exp(9.0 + 0.6 * rng.normal());
    const double p1930 = p1920 * std::exp(0.3 * rng.normal());
    if (p1920 >= kPopgrowthMaxInitialPopulation) continue;  // keep every county in the estimation range
    PopulationSeries series(county, {{1920, p1920}, {1930, p1930}});
    const double alpha = std::log(0.1) + 0.4 * rng.normal();
    for (int y = 1920; y <= 1930; ++y) {
      const double pop = *series.interpolated(y);
      const double ly = beta * std::log(pop) + alpha + state_year[{s, y}] + 0.05 * rng.normal();
      out.gold.push_back(obs(county, state, y, std::exp(ly), pop, "gold"));
      const double n = llm_noise > 0 ? llm_noise * rng.normal() : 0.0;
      out.llm.push_back(obs(county, state, y, std::exp(ly + n), pop, "llm"));
    }
    out.population.emplace(county, std::move(series));
  }
  return out;
}

}  // namespace histpanel::synth
