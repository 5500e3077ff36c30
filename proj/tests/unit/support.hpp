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

#include <filesystem>
#include <string>

#include "histpanel/csv.hpp"
#include "histpanel/table_model.hpp"

#ifndef HISTPANEL_FIXTURES
#error "HISTPANEL_FIXTURES must point at tests/fixtures"
#endif
#ifndef HISTPANEL_REFERENCE
#error "HISTPANEL_REFERENCE must point at data/reference"
#endif

namespace testing_support {

inline std::string fixture(const std::string& name) { return std::string(HISTPANEL_FIXTURES) + "/" + name; }
inline std::string reference_dir() { return HISTPANEL_REFERENCE; }

inline histpanel::TableProvenance michigan_1923(const std::string& model = "claude") {
  histpanel::TableProvenance p;
  p.document_id = "MI-1923";
  p.state = "MI";
  p.year = 1923;
  p.page = 1;
  p.ingestion_number = 1;
  p.model_id = model;
  return p;
}

inline histpanel::RawTable load_fixture(const std::string& name, const histpanel::TableProvenance& p) {
  return histpanel::parse_raw_csv(histpanel::text::read_file(fixture(name)), p);
}

/// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("histpanel_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testing_support
