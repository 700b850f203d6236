// Copyright 2026 The TSG Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// tsg: generate data, extract graphs, train, evaluate and predict.
//
// Exit codes: 0 ok, 1 internal error, 2 config or usage error, 3 data error,
// 4 checkpoint error. Failures print one JSON object on stderr:
//   {"error": "<kind>", "message": "..."}

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tsg/cli/commands.hpp"
#include "tsg/core/parallel.hpp"

namespace {

using nlohmann::json;
using namespace tsg;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> stage;
  std::optional<std::string> fusion_mode;
  std::optional<std::string> data;
  std::optional<std::size_t> epochs;
  std::vector<std::string> init;
};

void add_config_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON run config");
  cmd->add_option("--seed", o.seed, "root seed");
}

void add_train_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--stage", o.stage, "graph_stream | image_stream | fusion | end_to_end");
  cmd->add_option("--fusion-mode", o.fusion_mode, "fusion mode");
  cmd->add_option("--data", o.data, "dataset manifest or folder");
  cmd->add_option("--epochs", o.epochs, "number of epochs");
  cmd->add_option("--init", o.init, "checkpoint to initialise from (repeatable)");
}

// Flags are written into the document before it is parsed, so they go
// through the same validation as file values.
cli::RunConfig resolve(const Overrides& o) {
  json j = json::object();
  if (!o.config_path.empty()) {
    std::ifstream is(o.config_path);
    if (!is) throw ConfigError("cannot open config " + o.config_path);
    try {
      j = json::parse(is, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw ConfigError(o.config_path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(o.config_path + ": top level must be an object");
  }
  if (o.seed) j["seed"] = *o.seed;
  if (o.stage) j["train"]["stage"] = *o.stage;
  if (o.fusion_mode) j["fusion"]["mode"] = *o.fusion_mode;
  if (o.data) j["data"]["path"] = *o.data;
  if (o.epochs) j["train"]["epochs"] = *o.epochs;
  if (!o.init.empty()) j["train"]["init"] = o.init;
  return cli::run_config_from_json(j);
}

void emit(const std::optional<std::string>& out, const std::string& text) {
  if (out) {
    training::write_text(*out, text);
  } else {
    std::cout << text;
  }
}

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stream scene-graph and image classifier"};
  app.require_subcommand(1);
  const std::size_t threads = worker_threads();

  Overrides o;

  auto* config_cmd = app.add_subcommand("config", "print the resolved run config");
  add_config_flags(config_cmd, o);
  add_train_flags(config_cmd, o);

  std::string out_dir = "data";
  auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset");
  add_config_flags(gen, o);
  gen->add_option("--out", out_dir, "output directory");

  std::string map_path;
  std::optional<std::uint32_t> num_classes;
  std::optional<std::string> out_file;
  auto* extract = app.add_subcommand("extract-graph", "label map to JSON scene graph");
  add_config_flags(extract, o);
  extract->add_option("map", map_path, "label map (.png, .pgm, .lmap)")->required();
  extract->add_option("--num-classes", num_classes, "reject indices at or above this");
  extract->add_option("--out", out_file, "output file (default stdout)");

  std::string train_out = "runs/latest";
  auto* train = app.add_subcommand("train", "train one stage and save a checkpoint");
  add_config_flags(train, o);
  add_train_flags(train, o);
  train->add_option("--out", train_out, "output directory");

  std::string checkpoint;
  std::string split = "test";
  std::string format = "json";
  std::optional<std::string> eval_out;
  std::optional<std::string> eval_data;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  eval->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset (default: the one the checkpoint was trained on)");
  eval->add_option("--split", split, "train | test");
  eval->add_option("--format", format, "json | csv");
  eval->add_option("--out", eval_out, "directory for eval.json / eval.csv (default stdout)");

  std::optional<std::string> predict_map, predict_image;
  auto* predict = app.add_subcommand("predict", "class scores for one scene");
  predict->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  predict->add_option("--map", predict_map, "label map");
  predict->add_option("--image", predict_image, "image (.png, .imgt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*config_cmd) {
      std::cout << cli::to_json(resolve(o)).dump(2) << "\n";
    } else if (*gen) {
      const auto m = cli::cmd_gen_data(resolve(o), out_dir, threads);
      std::cerr << json{{"written", out_dir}, {"samples", m.samples.size()}, {"provenance", m.provenance}}.dump()
                << "\n";
    } else if (*extract) {
      const auto rc = resolve(o);
      emit(out_file, cli::cmd_extract_graph(map_path, rc.extraction, num_classes) + "\n");
    } else if (*train) {
      const auto r = cli::cmd_train(resolve(o), train_out, threads, &std::cerr);
      std::cerr << json{{"checkpoint", r.checkpoint.string()}, {"epochs", r.history.epochs.size()}}.dump()
                << "\n";
    } else if (*eval) {
      const auto fmt = cli::parse_format(format);
      std::string data;
      if (eval_data) {
        data = *eval_data;
      } else {
        const auto ck = cli::read_checkpoint<cli::Scalar>(checkpoint);
        data = ck.config.value("run", json::object()).value("data", json::object()).value("path", "");
        if (data.empty()) throw ConfigError("eval: the checkpoint records no dataset; pass --data");
      }
      const auto r = cli::cmd_eval(checkpoint, data, datakit::parse_split(split), fmt, threads);
      if (eval_out) {
        std::filesystem::create_directories(*eval_out);
        const auto name = fmt == cli::ReportFormat::csv ? "eval.csv" : "eval.json";
        training::write_text(std::filesystem::path(*eval_out) / name, r.report);
      } else {
        std::cout << r.report;
      }
    } else if (*predict) {
      std::optional<std::filesystem::path> m, i;
      if (predict_map) m = *predict_map;
      if (predict_image) i = *predict_image;
      std::cout << cli::cmd_predict(checkpoint, m, i).dump(2) << "\n";
    }
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const ParseError& e) {
    return fail("data", e.what(), 3);
  } catch (const DataError& e) {
    return fail("data", e.what(), 3);
  } catch (const CheckpointError& e) {
    return fail("checkpoint", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
