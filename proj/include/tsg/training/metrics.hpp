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

// Metrics files hold only seed-determined numbers so repeated runs produce
// identical bytes; wall-clock time goes to a separate timing file.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsg/core/error.hpp"

namespace tsg::training {

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
  std::vector<std::uint32_t> predictions;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // running accuracy over the epoch's mini-batches
  std::optional<double> test_loss;
  std::optional<double> test_accuracy;
  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct MetricsHistory {
  std::string stage;
  std::vector<EpochMetrics> epochs;
  double wall_seconds = 0.0;
};

// Shortest round-trip decimal form.
inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline std::string metrics_csv(const MetricsHistory& h) {
  std::string out = "epoch,split,loss,accuracy\n";
  for (const auto& e : h.epochs) {
    const auto ep = std::to_string(e.epoch);
    out += ep + ",train," + format_number(e.train_loss) + "," + format_number(e.train_accuracy) + "\n";
    if (e.test_loss) {
      out += ep + ",test," + format_number(*e.test_loss) + "," + format_number(*e.test_accuracy) + "\n";
    }
  }
  return out;
}

inline nlohmann::json metrics_json(const MetricsHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : h.epochs) {
    nlohmann::json row = {{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_accuracy", e.train_accuracy}};
    if (e.test_loss) {
      row["test_loss"] = *e.test_loss;
      row["test_accuracy"] = *e.test_accuracy;
    }
    epochs.push_back(std::move(row));
  }
  nlohmann::json out = {{"stage", h.stage}, {"epochs", h.epochs.size()}, {"history", epochs}};
  if (!h.epochs.empty()) out["final"] = epochs.back();
  return out;
}

// Single evaluation, written by the eval command.
inline std::string eval_csv(const std::string& split, const EvalResult& r) {
  return "epoch,split,loss,accuracy\n0," + split + "," + format_number(r.loss) + "," +
         format_number(r.accuracy) + "\n";
}

inline nlohmann::json eval_json(const std::string& split, const EvalResult& r) {
  return {{"split", split}, {"count", r.count}, {"loss", r.loss}, {"accuracy", r.accuracy}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(detail::concat("cannot open ", path.string(), " for writing"));
  os << text;
  if (!os) throw DataError(detail::concat("failed writing ", path.string()));
}

}  // namespace tsg::training
