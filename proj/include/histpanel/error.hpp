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

#include <stdexcept>
#include <string>

namespace histpanel {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model output (or fixture) that has no usable CSV structure. Carries the
/// raw text so the caller can triage it.
class ParseFailure : public Error {
 public:
  ParseFailure(const std::string& what, std::string raw_text)
      : Error(what), raw_text_(std::move(raw_text)) {}
  const std::string& raw_text() const { return raw_text_; }

 private:
  std::string raw_text_;
};

class ProviderUnavailable : public Error {
 public:
  using Error::Error;
};

/// A provider answered, but the answer could not be parsed into a table.
class ExtractionUnusable : public Error {
 public:
  ExtractionUnusable(const std::string& what, std::string raw_text)
      : Error(what), raw_text_(std::move(raw_text)) {}
  const std::string& raw_text() const { return raw_text_; }

 private:
  std::string raw_text_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class AlignmentEmpty : public Error {
 public:
  using Error::Error;
};

class EmptyEvaluation : public Error {
 public:
  using Error::Error;
};

class FoldConfigError : public Error {
 public:
  using Error::Error;
};

class AbsorptionError : public Error {
 public:
  AbsorptionError(const std::string& what, double residual_norm)
      : Error(what), residual_norm_(residual_norm) {}
  double residual_norm() const { return residual_norm_; }

 private:
  double residual_norm_;
};

class DegenerateRegressor : public Error {
 public:
  using Error::Error;
};

class SampleError : public Error {
 public:
  using Error::Error;
};

class StageOrderError : public Error {
 public:
  StageOrderError(const std::string& missing_stage, const std::string& what)
      : Error(what), missing_stage_(missing_stage) {}
  const std::string& missing_stage() const { return missing_stage_; }

 private:
  std::string missing_stage_;
};

}  // namespace histpanel
