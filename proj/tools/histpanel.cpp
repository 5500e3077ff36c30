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

// Command-line entry point: stage runner, review server, synthetic corpus.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "histpanel/error.hpp"
#include "histpanel/pipeline.hpp"
#include "histpanel/synthetic.hpp"

namespace {

histpanel::ReviewServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

void print_stats(const histpanel::Pipeline& p) {
  std::cerr << "provider calls: " << p.stats().provider_calls << ", cache hits: " << p.stats().cache_hits << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"histpanel: county panels from scanned statistical tables"};
  app.require_subcommand(1);

  std::string config_path = "config.json";
  std::string output_dir;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("-o,--output", output_dir, "override output_dir");
  };

  auto* run = app.add_subcommand("run", "run every stage");
  add_config(run);

  std::vector<std::pair<histpanel::Stage, CLI::App*>> stages;
  for (auto stage : {histpanel::Stage::extract, histpanel::Stage::validate, histpanel::Stage::harmonize,
                     histpanel::Stage::assemble, histpanel::Stage::outliers, histpanel::Stage::evaluate,
                     histpanel::Stage::converge, histpanel::Stage::regress, histpanel::Stage::report}) {
    auto* sub = app.add_subcommand(std::string(histpanel::to_string(stage)), "run the " +
                                                                               std::string(histpanel::to_string(stage)) +
                                                                               " stage");
    add_config(sub);
    stages.emplace_back(stage, sub);
  }

  auto* serve = app.add_subcommand("serve", "serve the review API");
  add_config(serve);
  std::string host = "127.0.0.1";
  int port = 8089;
  serve->add_option("--host", host);
  serve->add_option("-p,--port", port);

  auto* synth = app.add_subcommand("synth", "write a synthetic runnable corpus");
  std::string synth_out;
  std::string reference_dir;
  std::uint64_t seed = 1923;
  synth->add_option("--out", synth_out, "target directory")->required();
  synth->add_option("--reference", reference_dir, "reference data directory")->required()->check(CLI::ExistingDirectory);
  synth->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      histpanel::synth::CorpusOptions options;
      options.seed = seed;
      options.reference_dir = reference_dir;
      const auto summary = histpanel::synth::write_pipeline_corpus(synth_out, options);
      std::cout << "wrote " << summary.tables << " tables, " << summary.fixtures << " fixtures, "
                << summary.gold_cells << " gold cells\nconfig: " << summary.config_path << "\n";
      return 0;
    }

    auto config = histpanel::RunConfig::load(config_path);
    if (!output_dir.empty()) config.output_dir = output_dir;

    if (serve->parsed()) {
      histpanel::ReviewServer server(config);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on http://" << host << ":" << port << "\n";
      server.listen(host, port);
      g_server = nullptr;
      return 0;
    }

    if (run->parsed()) {
      histpanel::Pipeline pipeline(config);
      try {
        pipeline.run_all();
      } catch (...) {
        print_stats(pipeline);
        throw;
      }
      print_stats(pipeline);
      return 0;
    }

    for (const auto& [stage, sub] : stages) {
      if (!sub->parsed()) continue;
      if (stage == histpanel::Stage::extract) config.validate();
      histpanel::Pipeline pipeline(config);
      pipeline.run_stage(stage);
      if (stage == histpanel::Stage::extract) print_stats(pipeline);
      return 0;
    }
  } catch (const histpanel::StageOrderError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const histpanel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const histpanel::ProviderUnavailable& e) {
    std::cerr << "provider unavailable: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
