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

#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "histpanel/csv.hpp"
#include "histpanel/error.hpp"
#include "histpanel/pipeline.hpp"

namespace histpanel {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

void send_json(httplib::Response& res, const ojson& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(2), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, {{"error", message}}, status);
}

ojson grid_json(const AlignedTable& table) {
  ojson rows = ojson::array();
  for (const auto& [key, row] : table.rows) {
    ojson cells = ojson::object();
    for (const auto& [field, cell] : row) {
      cells[std::string(to_string(field))] = cell.value ? ojson(*cell.value) : ojson(nullptr);
    }
    rows.push_back({{"county_id", key.county_id}, {"year", key.year}, {"cells", cells}});
  }
  return rows;
}

ojson gold_grid_json(const std::vector<GoldCell>& gold, const std::string& tid) {
  std::map<std::pair<std::string, int>, ojson> rows;
  for (const auto& g : gold) {
    if (g.table_id != tid) continue;
    ojson& row = rows[{g.county_id, g.year}];
    if (row.is_null()) row = ojson::object();
    row[std::string(to_string(g.field))] = g.value ? ojson(*g.value) : ojson(nullptr);
  }
  ojson out = ojson::array();
  for (auto& [key, cells] : rows) out.push_back({{"county_id", key.first}, {"year", key.second}, {"cells", cells}});
  return out;
}

}  // namespace

struct ReviewServer::Impl {
  explicit Impl(RunConfig cfg) : pipeline(std::move(cfg)) {}

  Pipeline pipeline;
  httplib::Server server;
  std::thread thread;
  std::mutex write_mutex;

  const RunConfig& config() const { return pipeline.config(); }
  std::string resolutions_path() const { return config().output_path("review/resolutions.json"); }

  const CorpusEntry* find_entry(const std::string& tid) const {
    for (const auto& e : pipeline.corpus()) {
      if (table_id(e.provenance) == tid) return &e;
    }
    return nullptr;
  }

  std::vector<AlignedTable> corrected_tables() const {
    std::vector<AlignedTable> tables;
    if (fs::exists(config().output_path(Pipeline::artifact(Stage::harmonize)))) tables = pipeline.load_aligned();
    apply_corrections(tables, load_corrections(config().corrections));
    return tables;
  }

  std::vector<GoldCell> corrected_gold() const {
    if (config().gold.empty()) return {};
    return apply_corrections(pipeline.load_gold_cells(), load_corrections(config().corrections));
  }

  std::vector<json> flags() const {
    std::vector<json> out;
    const std::string path = config().output_path(Pipeline::artifact(Stage::outliers));
    if (!fs::exists(path)) return out;
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);  // header record
    const json resolutions = load_resolutions();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json f = json::parse(line);
      auto r = resolutions.find(f.at("id").get<std::string>());
      f["resolution"] = r == resolutions.end() ? json(nullptr) : *r;
      out.push_back(std::move(f));
    }
    return out;
  }

  json load_resolutions() const {
    const std::string path = resolutions_path();
    if (!fs::exists(path)) return json::object();
    return json::parse(text::read_file(path));
  }

  std::set<std::string> critical_tables() const {
    std::set<std::string> out;
    const std::string path = config().output_path(Pipeline::artifact(Stage::validate));
    if (!fs::exists(path)) return out;
    const json j = json::parse(text::read_file(path));
    for (const auto& r : j.at("results")) {
      if (r.at("critical").get<bool>() && r.at("source").get<std::string>() != "baseline") {
        out.insert(r.at("table_id").get<std::string>());
      }
    }
    return out;
  }

  /// Flags whose (state, county, year) falls on a row of the table.
  std::vector<json> flags_for(const AlignedTable& table, const std::vector<json>& all) const {
    std::vector<json> out;
    for (const auto& f : all) {
      if (f.at("state").get<std::string>() != table.provenance.state) continue;
      if (table.rows.count({f.at("county_id").get<std::string>(), f.at("year").get<int>()})) out.push_back(f);
    }
    return out;
  }

  void routes() {
    server.Get("/", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, {{"endpoints",
                       {"GET /api/tables", "GET /api/tables/{id}", "GET /api/tables/{id}/image",
                        "POST /api/tables/{id}/corrections", "GET /api/flags", "POST /api/flags/{id}/resolve",
                        "GET /api/report", "POST /v1/extract"}}});
    });

    server.Get("/api/tables", [this](const httplib::Request&, httplib::Response& res) {
      const auto tables = corrected_tables();
      std::map<std::string, const AlignedTable*> aligned;
      for (const auto& t : tables) aligned[table_id(t.provenance)] = &t;
      const auto critical = critical_tables();
      const auto all_flags = flags();
      struct Row {
        int rank;
        std::string id;
        ojson body;
      };
      std::vector<Row> rows;
      for (const auto& e : pipeline.corpus()) {
        const std::string tid = table_id(e.provenance);
        std::size_t n_flags = 0;
        auto it = aligned.find(tid);
        if (it != aligned.end()) n_flags = flags_for(*it->second, all_flags).size();
        std::string status = "ok";
        int rank = 2;
        if (critical.count(tid)) {
          status = "critical";
          rank = 0;
        } else if (n_flags > 0) {
          status = "flagged";
          rank = 1;
        } else if (it == aligned.end()) {
          status = "pending";
        }
        rows.push_back({rank, tid,
                        {{"id", tid},
                         {"state", e.provenance.state},
                         {"year", e.provenance.year},
                         {"page", e.provenance.page},
                         {"status", status},
                         {"flags", n_flags}}});
      }
      std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.rank != b.rank ? a.rank < b.rank : a.id < b.id;
      });
      ojson out = ojson::array();
      for (auto& r : rows) out.push_back(std::move(r.body));
      send_json(res, {{"tables", out}});
    });

    server.Get(R"(/api/tables/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string tid = req.matches[1];
      const CorpusEntry* entry = find_entry(tid);
      if (!entry) return send_error(res, 404, "unknown table " + tid);
      const auto tables = corrected_tables();
      ojson extracted = nullptr;
      ojson table_flags = ojson::array();
      for (const auto& t : tables) {
        if (table_id(t.provenance) != tid) continue;
        extracted = grid_json(t);
        for (const auto& f : flags_for(t, flags())) table_flags.push_back(ojson::parse(f.dump()));
      }
      const std::string status = critical_tables().count(tid) ? "critical"
                                 : !table_flags.empty()       ? "flagged"
                                 : extracted.is_null()        ? "pending"
                                                              : "ok";
      send_json(res, {{"id", tid},
                      {"state", entry->provenance.state},
                      {"year", entry->provenance.year},
                      {"page", entry->provenance.page},
                      {"status", status},
                      {"extracted", extracted},
                      {"gold", gold_grid_json(corrected_gold(), tid)},
                      {"flags", table_flags}});
    });

    server.Get(R"(/api/tables/([^/]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      const CorpusEntry* entry = find_entry(req.matches[1]);
      if (!entry) return send_error(res, 404, "unknown table");
      if (!fs::exists(entry->image)) return send_error(res, 404, "image missing");
      res.set_content(text::read_file(entry->image), entry->media_type);
    });

    server.Post(R"(/api/tables/([^/]+)/corrections)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string tid = req.matches[1];
      const CorpusEntry* entry = find_entry(tid);
      if (!entry) return send_error(res, 404, "unknown table " + tid);
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        return send_error(res, 400, std::string("invalid JSON: ") + e.what());
      }
      const json list = body.is_array() ? body : body.value("corrections", json::array());
      if (!list.is_array()) return send_error(res, 400, "corrections must be a list");
      // Every entry is checked before anything is written.
      std::vector<json> lines;
      for (std::size_t i = 0; i < list.size(); ++i) {
        const json& c = list[i];
        const std::string where = "correction " + std::to_string(i) + ": ";
        if (!c.is_object() || !c.contains("county_id") || !c.contains("field") || !c.contains("value")) {
          return send_error(res, 400, where + "needs county_id, field and value");
        }
        auto field = c["field"].is_string() ? parse_field_category(c["field"].get<std::string>()) : std::nullopt;
        if (!field) return send_error(res, 400, where + "unknown field");
        json value = nullptr;
        if (c["value"].is_number()) {
          const double v = c["value"].get<double>();
          if (!(v >= 0) || v != std::floor(v)) return send_error(res, 400, where + "value must be a non-negative integer");
          value = v;
        } else if (c["value"].is_string()) {
          const CellValue cell = normalize_cell(c["value"].get<std::string>());
          if (cell.is_text()) return send_error(res, 400, where + "value is not a number");
          if (cell.is_numeric()) value = static_cast<double>(cell.value);
        } else if (!c["value"].is_null()) {
          return send_error(res, 400, where + "value must be a number, string or null");
        }
        const int year = c.contains("year") ? c["year"].get<int>() : entry->provenance.year;
        lines.push_back({{"table_id", tid},
                         {"county_id", c["county_id"].get<std::string>()},
                         {"year", year},
                         {"field", std::string(to_string(*field))},
                         {"value", value}});
      }
      if (!lines.empty()) {
        std::lock_guard<std::mutex> lock(write_mutex);
        const fs::path path(config().corrections);
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::app);
        for (const auto& l : lines) out << l.dump() << "\n";
        out.flush();
        if (!out) return send_error(res, 500, "could not append to the correction log");
      }
      send_json(res, {{"accepted", lines.size()}});
    });

    server.Get("/api/flags", [this](const httplib::Request&, httplib::Response& res) {
      ojson out = ojson::array();
      for (const auto& f : flags()) out.push_back(ojson::parse(f.dump()));
      send_json(res, {{"flags", out}});
    });

    server.Post(R"(/api/flags/([^/]+)/resolve)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      bool known = false;
      for (const auto& f : flags()) known = known || f.at("id").get<std::string>() == id;
      if (!known) return send_error(res, 404, "unknown flag " + id);
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        return send_error(res, 400, std::string("invalid JSON: ") + e.what());
      }
      const std::string resolution = body.value("resolution", std::string());
      if (resolution != "confirmed" && resolution != "dismissed") {
        return send_error(res, 400, "resolution must be 'confirmed' or 'dismissed'");
      }
      std::lock_guard<std::mutex> lock(write_mutex);
      json all = load_resolutions();
      json entry = {{"resolution", resolution}, {"note", body.value("note", std::string())}};
      if (all.contains(id)) {
        json previous = all[id];
        previous.erase("previous");
        entry["previous"] = previous;
      }
      all[id] = entry;
      text::write_file_atomic(resolutions_path(), all.dump(2) + "\n");
      send_json(res, {{"id", id}, {"resolution", entry}});
    });

    server.Get("/api/report", [this](const httplib::Request&, httplib::Response& res) {
      if (config().gold.empty()) return send_error(res, 404, "no gold data configured");
      const auto tables = corrected_tables();
      if (tables.empty()) return send_error(res, 409, "harmonize has not been run");
      std::size_t spurious = 0;
      auto cells = match_gold(tables, corrected_gold(), &spurious);
      try {
        EvalReport r = evaluate_cells(cells, config().evaluation);
        r.spurious = spurious;
        send_json(res, ojson::parse(eval_report_json(r)));
      } catch (const EmptyEvaluation& e) {
        send_error(res, 409, e.what());
      }
    });

    server.Post("/v1/extract", [this](const httplib::Request& req, httplib::Response& res) {
      ExtractionRequest request;
      try {
        request = decode_wire_request(req.body);
      } catch (const std::exception& e) {
        return send_error(res, 400, e.what());
      }
      try {
        MockProvider mock(config().resolve(config().provider.fixtures));
        res.set_content(encode_wire_response(mock.complete(request)), "application/json");
      } catch (const TransportError& e) {
        send_error(res, 503, e.what());
      }
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "unknown error");
      }
    });
  }
};

ReviewServer::ReviewServer(RunConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  impl_->routes();
}

ReviewServer::~ReviewServer() { stop(); }

void ReviewServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw ConfigError("could not bind " + host + ":" + std::to_string(port));
  }
}

int ReviewServer::start_background(const std::string& host) {
  const int port = impl_->server.bind_to_any_port(host);
  if (port <= 0) throw ConfigError("could not bind " + host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void ReviewServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace histpanel
