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

#include <string>
#include <string_view>
#include <vector>

namespace histpanel::csv {

using Record = std::vector<std::string>;

/// RFC 4180 reader: quoted fields may hold commas, doubled quotes and
/// newlines. Blank lines are skipped. An unterminated quote runs to the end
/// of input.
std::vector<Record> parse(std::string_view text);

/// Quotes a field when it holds a comma, quote or line break.
std::string escape(std::string_view field);

std::string join_row(const Record& fields);

/// Reads a header-led CSV file into records; the header row is returned
/// separately. Lines starting with '#' are comments.
struct Document {
  Record header;
  std::vector<Record> rows;

  /// Index of a header column; throws ConfigError naming the file when absent.
  std::size_t column(std::string_view name) const;
};

Document read_file(const std::string& path);
Document parse_document(std::string_view text, const std::string& origin);

}  // namespace histpanel::csv

namespace histpanel::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
/// printf-style fixed notation; NaN renders as "NA".
std::string fixed(double value, int precision);

std::string read_file(const std::string& path);
/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace histpanel::text
