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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "histpanel/econ.hpp"
#include "histpanel/error.hpp"
#include "histpanel/pipeline.hpp"
#include "histpanel/synthetic.hpp"
#include "histpanel/table_model.hpp"

namespace py = pybind11;
using namespace histpanel;

namespace {

py::object to_python(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::dict structure(const std::string& csv_text) {
  TableProvenance prov;
  prov.document_id = "inline";
  prov.state = "XX";
  py::dict out;
  try {
    const StructuralReport r = validate_structure(parse_raw_csv(csv_text, prov));
    py::list conditions;
    for (auto c : r.failed_conditions) conditions.append(std::string(to_string(c)));
    out["critical"] = r.is_critical_failure;
    out["conditions"] = conditions;
    out["valid_columns"] = r.valid_column_indices;
  } catch (const ParseFailure&) {
    out["critical"] = true;
    out["conditions"] = std::vector<std::string>{std::string(to_string(StructuralCondition::empty_table))};
    out["valid_columns"] = std::vector<std::size_t>{};
  }
  return out;
}

py::object evaluate(const std::vector<std::tuple<std::string, double, std::optional<double>>>& cells,
                    bool prediction_r2) {
  std::vector<EvalCell> in;
  in.reserve(cells.size());
  for (const auto& [table, truth, extracted] : cells) {
    EvalCell c;
    c.table_id = table;
    c.county_id = "C" + std::to_string(in.size());
    c.truth = truth;
    c.extracted = extracted;
    in.push_back(std::move(c));
  }
  EvalOptions options;
  options.prediction_r2 = prediction_r2;
  return to_python(nlohmann::ordered_json::parse(eval_report_json(evaluate_cells(in, options))));
}

py::dict fe_ols(const std::vector<double>& y, const std::vector<std::vector<double>>& x,
                const std::vector<std::vector<std::string>>& fe, const std::vector<std::string>& cluster) {
  RegressionSample s;
  s.y = y;
  s.x = x;
  for (std::size_t k = 0; k < x.size(); ++k) s.x_names.push_back("x" + std::to_string(k));
  s.fe = fe;
  for (std::size_t k = 0; k < fe.size(); ++k) s.fe_names.push_back("fe" + std::to_string(k));
  s.cluster = cluster;
  const RegressionResult r = fit_fe_ols(s);
  py::dict out;
  out["coef"] = r.coef;
  out["se"] = r.se;
  out["t"] = r.t;
  out["p"] = r.p;
  out["r_squared"] = r.r_squared;
  out["within_r_squared"] = r.within_r_squared;
  out["n"] = r.n;
  out["clusters"] = r.clusters;
  out["singletons_dropped"] = r.singletons_dropped;
  return out;
}

py::object run(const std::string& config_path, const std::optional<std::vector<std::string>>& stages,
               const std::optional<std::string>& output_dir) {
  RunConfig config = RunConfig::load(config_path);
  if (output_dir) config.output_dir = *output_dir;
  Pipeline pipeline(config);
  {
    py::gil_scoped_release release;
    if (!stages) {
      pipeline.run_all();
    } else {
      for (const auto& name : *stages) pipeline.run_stage(parse_stage(name));
    }
  }
  py::dict out;
  out["manifest"] = to_python(pipeline.manifest());
  out["provider_calls"] = pipeline.stats().provider_calls;
  out["cache_hits"] = pipeline.stats().cache_hits;
  return out;
}

}  // namespace

PYBIND11_MODULE(_histpanel, m) {
  m.doc() = "County panels from scanned statistical tables";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", m.attr("Error").ptr());
  py::register_exception<StageOrderError>(m, "StageOrderError", m.attr("Error").ptr());
  py::register_exception<ProviderUnavailable>(m, "ProviderUnavailable", m.attr("Error").ptr());
  py::register_exception<EmptyEvaluation>(m, "EmptyEvaluation", m.attr("Error").ptr());
  py::register_exception<SampleError>(m, "SampleError", m.attr("Error").ptr());

  m.def(
      "normalize_cell",
      [](const std::string& raw) -> py::object {
        const CellValue c = normalize_cell(raw);
        if (c.is_numeric()) return py::int_(c.value);
        if (c.is_empty()) return py::none();
        return py::str(c.raw);
      },
      py::arg("raw"), "Numeric cell -> int, empty -> None, text -> str.");
  m.def("validate_structure", &structure, py::arg("csv_text"));
  m.def("ensemble_cell", &ensemble_cell, py::arg("a"), py::arg("b"));
  m.def("evaluate", &evaluate, py::arg("cells"), py::arg("prediction_r2") = false,
        "cells: (table_id, truth, extracted or None) tuples.");
  m.def("fe_ols", &fe_ols, py::arg("y"), py::arg("x"), py::arg("fe"), py::arg("cluster"));
  m.def("t_test_p_value", &t_test_p_value, py::arg("t"), py::arg("df"));
  m.def("run", &run, py::arg("config"), py::arg("stages") = py::none(), py::arg("output_dir") = py::none());
  m.def(
      "write_corpus",
      [](const std::string& dir, const std::string& reference_dir, std::uint64_t seed) {
        synth::CorpusOptions o;
        o.seed = seed;
        o.reference_dir = reference_dir;
        return synth::write_pipeline_corpus(dir, o).config_path;
      },
      py::arg("dir"), py::arg("reference_dir"), py::arg("seed") = 1923);
}
