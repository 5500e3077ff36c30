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

#include "histpanel/extraction.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <thread>

#include "histpanel/csv.hpp"
#include "histpanel/digest.hpp"
#include "histpanel/error.hpp"

namespace histpanel {

using nlohmann::json;
namespace fs = std::filesystem;

PromptTemplate default_prompt_template() {
  PromptTemplate tmpl;
  tmpl.base_instructions =
      "You are a careful researcher transcribing a scanned historical table of county-level "
      "motor vehicle registrations.\n"
      "Return the table as CSV only, with no commentary and no code fences.\n"
      "Transcribe only numbers you can read on the page. Never guess, infer, or invent a "
      "number.\n"
      "Counts may be printed with commas as thousands separators; write them as printed and "
      "keep each number in its own cell. Quote any cell that contains a comma.\n"
      "Keep one output row per printed row and one output column per printed column. Do not "
      "merge or split rows.\n"
      "If a cell is blank, contains only a dash, dots, or other filler marks, " +
      std::string(kEmptyCellInstruction) + ".\n" +
      "If the header spans several printed rows, combine the stacked fragments of each column "
      "into one header cell and output a single header row.\n"
      "The first column holds the county (or year) labels exactly as printed.\n";
  tmpl.state_overrides["IL"] =
      "Illinois tables may report Cook County in two parts: the City of Chicago and the rest "
      "of the county. When they do, output two distinct rows labelled \"Chicago\" and "
      "\"Cook Excluding Chicago\". Do not combine them into a single Cook row.\n";
  return tmpl;
}

std::string render_prompt(const PromptTemplate& tmpl, const std::string& state,
                          const std::optional<std::vector<std::vector<std::string>>>& carried_headers) {
  std::string prompt = tmpl.base_instructions;
  if (auto it = tmpl.state_overrides.find(state); it != tmpl.state_overrides.end()) {
    prompt += "\n" + it->second;
  }
  if (carried_headers && !carried_headers->empty()) {
    prompt +=
        "\nThis page continues a table from the previous page. The header rows of that page "
        "were:\n";
    for (const auto& row : *carried_headers) prompt += csv::join_row(row) + "\n";
    prompt += "Use the same columns, in the same order, for this page.\n";
  }
  return prompt;
}

std::string ImagePayload::digest() const { return sha256_hex(bytes); }

// ---------------------------------------------------------------------------
// Wire contract

std::string encode_wire_request(const ExtractionRequest& request) {
  json body = {
      {"model", request.model_id},
      {"prompt", request.prompt},
      {"image", {{"media_type", request.image.media_type}, {"data", base64_encode(request.image.bytes)}}},
      {"max_output_tokens", request.max_output},
  };
  return body.dump();
}

ExtractionRequest decode_wire_request(std::string_view body) {
  try {
    const json j = json::parse(body);
    ExtractionRequest request;
    request.model_id = j.at("model").get<std::string>();
    request.prompt = j.at("prompt").get<std::string>();
    request.image.media_type = j.at("image").at("media_type").get<std::string>();
    request.image.bytes = base64_decode(j.at("image").at("data").get<std::string>());
    request.max_output = j.value("max_output_tokens", 4096);
    return request;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed wire request: ") + e.what());
  }
}

std::string encode_wire_response(const ProviderResponse& response) {
  json body = {
      {"text", response.text},
      {"input_tokens", response.input_tokens},
      {"output_tokens", response.output_tokens},
  };
  return body.dump();
}

ProviderResponse decode_wire_response(std::string_view body) {
  try {
    const json j = json::parse(body);
    ProviderResponse response;
    response.text = j.at("text").get<std::string>();
    response.input_tokens = j.value("input_tokens", std::int64_t{0});
    response.output_tokens = j.value("output_tokens", std::int64_t{0});
    if (response.input_tokens < 0 || response.output_tokens < 0) {
      throw Error("negative token count in wire response");
    }
    return response;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed wire response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Providers

MockProvider::MockProvider(std::string fixture_root) : root_(std::move(fixture_root)) {}

std::string MockProvider::fixture_path(const std::string& root, const std::string& image_digest,
                                       const std::string& model_id) {
  return (fs::path(root) / image_digest / (model_id + ".json")).string();
}

ProviderResponse MockProvider::complete(const ExtractionRequest& request) {
  ++calls_;
  const std::string path = fixture_path(root_, request.image.digest(), request.model_id);
  if (!fs::exists(path)) throw TransportError("mock: no fixture at " + path);

  json fixture;
  try {
    fixture = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw TransportError(std::string("mock: bad fixture: ") + e.what());
  }
  if (fixture.value("unreachable", false)) throw TransportError("mock: scripted unreachable");
  const int fail_attempts = fixture.value("fail_attempts", 0);
  if (fail_attempts > 0) {
    std::lock_guard lock(mutex_);
    int& attempts = attempts_[path];
    if (attempts++ < fail_attempts) throw TransportError("mock: scripted failure");
  }
  return decode_wire_response(fixture.dump());
}

HttpProvider::HttpProvider(std::string endpoint, int timeout_seconds)
    : timeout_seconds_(timeout_seconds) {
  const auto scheme = endpoint.find("://");
  const auto path_start = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = endpoint;
    path_ = "/";
  } else {
    scheme_host_port_ = endpoint.substr(0, path_start);
    path_ = endpoint.substr(path_start);
  }
}

ProviderResponse HttpProvider::complete(const ExtractionRequest& request) {
  ++calls_;
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);
  auto result = client.Post(path_, encode_wire_request(request), "application/json");
  if (!result) {
    throw TransportError("http: " + httplib::to_string(result.error()) + " for " +
                         scheme_host_port_ + path_);
  }
  if (result->status != 200) {
    throw TransportError("http: status " + std::to_string(result->status));
  }
  try {
    return decode_wire_response(result->body);
  } catch (const Error& e) {
    throw TransportError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Retry / rate limit / cache

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::chrono::milliseconds RetryPolicy::delay(int attempt, std::mt19937_64& rng) const {
  const double nominal =
      std::min(static_cast<double>(max_delay.count()),
               static_cast<double>(base_delay.count()) * std::pow(2.0, attempt));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double jittered = nominal * (1.0 + jitter * unit(rng));
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::max(0.0, jittered)));
}

TokenBucket::TokenBucket(double rate, double capacity, Clock clock, Sleeper sleeper)
    : rate_(rate),
      capacity_(capacity),
      tokens_(capacity),
      clock_(clock ? std::move(clock) : [] { return std::chrono::steady_clock::now(); }),
      sleeper_(sleeper ? std::move(sleeper) : real_sleeper()),
      last_(clock_()) {
  if (rate <= 0.0 || capacity < 1.0) throw ConfigError("token bucket needs rate > 0, capacity >= 1");
}

void TokenBucket::acquire() {
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = clock_();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::milliseconds(
        static_cast<std::int64_t>(std::ceil((1.0 - tokens_) / rate_ * 1000.0)));
    sleeper_(wait);
  }
}

std::string cache_key(const std::string& model_id, const std::string& prompt,
                      const std::string& image_digest) {
  std::string material = model_id;
  material.push_back('\0');
  material += prompt;
  material.push_back('\0');
  material += image_digest;
  return sha256_hex(material);
}

ResponseCache::ResponseCache(std::string directory) : directory_(std::move(directory)) {
  fs::create_directories(directory_);
}

std::optional<ProviderResponse> ResponseCache::get(const std::string& key) const {
  const fs::path path = fs::path(directory_) / (key + ".json");
  if (!fs::exists(path)) return std::nullopt;
  try {
    return decode_wire_response(text::read_file(path.string()));
  } catch (const Error&) {
    return std::nullopt;  // corrupt entry: refetch
  }
}

void ResponseCache::put(const std::string& key, const ProviderResponse& response) const {
  text::write_file_atomic((fs::path(directory_) / (key + ".json")).string(),
                          encode_wire_response(response));
}

Extractor::Extractor(Provider& provider, const ResponseCache* cache, RetryPolicy retry,
                     TokenBucket* limiter, Sleeper sleeper)
    : provider_(provider),
      cache_(cache),
      retry_(retry),
      limiter_(limiter),
      sleeper_(std::move(sleeper)),
      rng_(retry.seed) {}

FetchedResponse Extractor::fetch(const ExtractionRequest& request) {
  const std::string key = cache_key(request.model_id, request.prompt, request.image.digest());
  if (cache_) {
    if (auto hit = cache_->get(key)) return {*hit, true};
  }
  std::string last_error = "no attempts configured";
  for (int attempt = 0; attempt < retry_.attempts; ++attempt) {
    if (attempt > 0) {
      std::chrono::milliseconds wait;
      {
        std::lock_guard lock(rng_mutex_);
        wait = retry_.delay(attempt - 1, rng_);
      }
      sleeper_(wait);
    }
    if (limiter_) limiter_->acquire();
    try {
      ++provider_calls_;
      ProviderResponse response = provider_.complete(request);
      if (cache_) cache_->put(key, response);
      return {std::move(response), false};
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw ProviderUnavailable("provider unavailable for model " + request.model_id + " after " +
                            std::to_string(retry_.attempts) + " attempts: " + last_error);
}

RawTable extract_table(const ExtractionRequest& request, Extractor& extractor,
                       const TableProvenance& provenance) {
  const FetchedResponse fetched = extractor.fetch(request);
  try {
    return parse_raw_csv(fetched.response.text, provenance);
  } catch (const ParseFailure& e) {
    throw ExtractionUnusable(std::string("unusable extraction: ") + e.what(), e.raw_text());
  }
}

// ---------------------------------------------------------------------------
// Ensembling and cost

std::optional<double> ensemble_cell(std::optional<double> a, std::optional<double> b) {
  if (a && b) return (*a + *b) / 2.0;
  if (a) return a;
  return b;
}

AlignedTable ensemble_tables(const std::map<std::string, AlignedTable>& per_model) {
  AlignedTable out;
  if (per_model.empty()) return out;
  out.provenance = per_model.begin()->second.provenance;
  out.provenance.model_id = "ensemble";
  for (const auto& [model, table] : per_model) {
    out.provenance.ingestion_number =
        std::min(out.provenance.ingestion_number, table.provenance.ingestion_number);
    for (const auto& [key, row] : table.rows) {
      AlignedRow& target = out.rows[key];
      for (const auto& [field, cell] : row) {
        AlignedCell& merged = target[field];
        if (cell.value) merged.readings[model] = *cell.value;
      }
    }
  }
  for (auto& [key, row] : out.rows) {
    for (auto& [field, cell] : row) {
      if (cell.readings.size() == 2) {
        cell.value = ensemble_cell(cell.readings.begin()->second, cell.readings.rbegin()->second);
      } else if (!cell.readings.empty()) {
        double sum = 0.0;
        for (const auto& [m, v] : cell.readings) sum += v;
        cell.value = sum / static_cast<double>(cell.readings.size());
      }
    }
  }
  out.stats.mapped_rows = out.rows.size();
  return out;
}

CostReport estimate_cost(const std::vector<UsageRecord>& usage, const PriceTable& prices,
                         std::size_t tables, bool batch) {
  CostReport report;
  report.batch = batch;
  report.tables = tables;
  const double factor = batch ? 0.5 : 1.0;
  for (const auto& record : usage) {
    auto price = prices.find(record.model_id);
    if (price == prices.end()) throw ConfigError("no price configured for model " + record.model_id);
    if (price->second.input_per_token < 0 || price->second.output_per_token < 0) {
      throw ConfigError("negative price for model " + record.model_id);
    }
    const double in = static_cast<double>(record.input_tokens) * price->second.input_per_token * factor;
    const double out = static_cast<double>(record.output_tokens) * price->second.output_per_token * factor;
    report.input_cost += in;
    report.output_cost += out;
    report.per_model_total[record.model_id] += in + out;
  }
  report.total = report.input_cost + report.output_cost;
  report.input_share = report.total > 0 ? report.input_cost / report.total : 0.0;
  report.per_table_mean = tables > 0 ? report.total / static_cast<double>(tables) : 0.0;
  return report;
}

}  // namespace histpanel
