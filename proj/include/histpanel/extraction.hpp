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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "histpanel/table_model.hpp"
#include "histpanel/types.hpp"

namespace histpanel {

// ---------------------------------------------------------------------------
// Prompts

struct PromptTemplate {
  std::string base_instructions;
  std::map<std::string, std::string> state_overrides;
};

/// The instruction every rendered prompt carries verbatim.
inline constexpr std::string_view kEmptyCellInstruction = "record all the empty cells as empty";

/// The shipped extraction template, including the Illinois Cook County split.
PromptTemplate default_prompt_template();

/// Base instructions, then the state supplement if one exists, then the header
/// rows carried over from the previous page of a multi-page table.
std::string render_prompt(const PromptTemplate& tmpl, const std::string& state,
                          const std::optional<std::vector<std::vector<std::string>>>& carried_headers);

// ---------------------------------------------------------------------------
// Provider wire contract

struct ImagePayload {
  std::string bytes;
  std::string media_type = "image/png";

  std::string digest() const;
};

struct ExtractionRequest {
  std::string model_id;
  std::string prompt;
  ImagePayload image;
  std::optional<std::vector<std::vector<std::string>>> carried_headers;
  int max_output = 4096;
};

struct ProviderResponse {
  std::string text;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;

  friend bool operator==(const ProviderResponse&, const ProviderResponse&) = default;
};

struct UsageRecord {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::string model_id;
};

/// Transport-level failure of a single attempt. Retried by Extractor.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Provider {
 public:
  virtual ~Provider() = default;
  /// One attempt. Throws TransportError on failure.
  virtual ProviderResponse complete(const ExtractionRequest& request) = 0;
};

/// JSON request body of the wire contract.
std::string encode_wire_request(const ExtractionRequest& request);
ExtractionRequest decode_wire_request(std::string_view body);
std::string encode_wire_response(const ProviderResponse& response);
ProviderResponse decode_wire_response(std::string_view body);

/// Answers from a fixture directory laid out as
/// `<root>/<image sha256>/<model_id>.json`, each holding a wire response.
/// A fixture may script failures with `"fail_attempts": n` (the first n
/// attempts fail) or `"unreachable": true`. Missing fixtures fail every
/// attempt.
class MockProvider : public Provider {
 public:
  explicit MockProvider(std::string fixture_root);
  ProviderResponse complete(const ExtractionRequest& request) override;
  std::size_t calls() const { return calls_.load(); }

  static std::string fixture_path(const std::string& root, const std::string& image_digest,
                                  const std::string& model_id);

 private:
  std::string root_;
  std::atomic<std::size_t> calls_{0};
  std::mutex mutex_;
  std::map<std::string, int> attempts_;
};

/// Speaks the wire contract over HTTP POST to `endpoint` (e.g.
/// "http://127.0.0.1:8089/v1/extract").
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(std::string endpoint, int timeout_seconds = 120);
  ProviderResponse complete(const ExtractionRequest& request) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  std::string scheme_host_port_;
  std::string path_;
  int timeout_seconds_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Retry, rate limiting, caching

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{250};
  std::chrono::milliseconds max_delay{8000};
  double jitter = 0.25;  // fraction of the computed delay
  std::uint64_t seed = 0;

  /// Backoff before attempt `attempt + 1` (attempt counts from 0).
  std::chrono::milliseconds delay(int attempt, std::mt19937_64& rng) const;
};

/// Token bucket: `rate` requests per second, bursts up to `capacity`.
class TokenBucket {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;
  TokenBucket(double rate, double capacity, Clock clock = nullptr, Sleeper sleeper = nullptr);
  void acquire();

 private:
  double rate_;
  double capacity_;
  double tokens_;
  Clock clock_;
  Sleeper sleeper_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

std::string cache_key(const std::string& model_id, const std::string& prompt,
                      const std::string& image_digest);

/// Response bodies keyed by cache_key, one JSON file per key. Writes are
/// atomic.
class ResponseCache {
 public:
  explicit ResponseCache(std::string directory);
  std::optional<ProviderResponse> get(const std::string& key) const;
  void put(const std::string& key, const ProviderResponse& response) const;
  const std::string& directory() const { return directory_; }

 private:
  std::string directory_;
};

struct FetchedResponse {
  ProviderResponse response;
  bool cache_hit = false;

  UsageRecord usage(const std::string& model_id) const {
    return {response.input_tokens, response.output_tokens, model_id};
  }
};

/// Cache-first provider access with retries and optional rate limiting.
class Extractor {
 public:
  Extractor(Provider& provider, const ResponseCache* cache, RetryPolicy retry,
            TokenBucket* limiter = nullptr, Sleeper sleeper = real_sleeper());

  /// Throws ProviderUnavailable once the retry budget is spent.
  FetchedResponse fetch(const ExtractionRequest& request);

  std::size_t provider_calls() const { return provider_calls_.load(); }

 private:
  Provider& provider_;
  const ResponseCache* cache_;
  RetryPolicy retry_;
  TokenBucket* limiter_;
  Sleeper sleeper_;
  std::atomic<std::size_t> provider_calls_{0};
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

/// Fetches and parses. A response that fails parse_raw_csv raises
/// ExtractionUnusable.
RawTable extract_table(const ExtractionRequest& request, Extractor& extractor,
                       const TableProvenance& provenance);

// ---------------------------------------------------------------------------
// Ensembling and cost

/// Mean when both readings are present, else whichever is present.
std::optional<double> ensemble_cell(std::optional<double> a, std::optional<double> b);

/// Cell-wise combination of aligned tables of the same physical table.
/// Rows or cells missing from one model fall back to the others; each output
/// cell keeps every contributing model's reading.
AlignedTable ensemble_tables(const std::map<std::string, AlignedTable>& per_model);

struct ModelPrice {
  double input_per_token = 0.0;
  double output_per_token = 0.0;
};

using PriceTable = std::map<std::string, ModelPrice>;

struct CostReport {
  double input_cost = 0.0;
  double output_cost = 0.0;
  double total = 0.0;
  double input_share = 0.0;  // 0 when total is 0
  std::size_t tables = 0;
  double per_table_mean = 0.0;
  bool batch = false;
  std::map<std::string, double> per_model_total;
};

/// Sum of tokens times rates. `batch` halves the applied rates. Throws
/// ConfigError for a model with no price.
CostReport estimate_cost(const std::vector<UsageRecord>& usage, const PriceTable& prices,
                         std::size_t tables, bool batch = false);

}  // namespace histpanel
