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

// Scene graph JSON document:
//   {"num_classes": C,
//    "nodes": [{"id": 0, "class": 3, "pixels": 16}, ...],
//    "edges": [[a, b], ...]}        a < b, sorted lexicographically

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "json.hpp"
#include "tsg/core/error.hpp"
#include "tsg/scene/extract.hpp"

namespace tsg::scene {

inline nlohmann::json graph_to_json(const SceneGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes) {
    nodes.push_back({{"id", n.id}, {"class", n.class_id}, {"pixels", n.pixel_count}});
  }
  EdgeSet edges = g.edges;
  std::sort(edges.begin(), edges.end());
  nlohmann::json e = nlohmann::json::array();
  for (const auto& edge : edges) e.push_back({edge.a, edge.b});
  return {{"num_classes", g.num_classes}, {"nodes", std::move(nodes)}, {"edges", std::move(e)}};
}

inline std::string write_graph_json(const SceneGraph& g) { return graph_to_json(g).dump(); }

namespace internal {

inline std::uint64_t json_uint(const nlohmann::json& v, const std::string& field,
                               std::uint64_t max_value) {
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0 &&
                                 !v.is_number_unsigned())) {
    throw ParseError(detail::concat("field '", field, "': expected a non-negative integer, got ",
                                    v.dump()));
  }
  const auto u = v.get<std::uint64_t>();
  if (u > max_value) {
    throw ParseError(detail::concat("field '", field, "': value ", u, " exceeds ", max_value));
  }
  return u;
}

inline const nlohmann::json& json_member(const nlohmann::json& obj, const char* key,
                                         const std::string& where) {
  if (!obj.is_object()) throw ParseError(detail::concat("field '", where, "': expected an object"));
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(detail::concat("field '", where, ".", key, "': missing"));
  return *it;
}

}  // namespace internal

inline SceneGraph graph_from_json(const nlohmann::json& doc) {
  using internal::json_member;
  using internal::json_uint;
  SceneGraph g;
  g.num_classes = static_cast<std::uint32_t>(
      json_uint(json_member(doc, "num_classes", "$"), "num_classes", 65536));
  if (g.num_classes == 0) throw ParseError("field 'num_classes': must be positive");
  const auto& nodes = json_member(doc, "nodes", "$");
  if (!nodes.is_array()) throw ParseError("field 'nodes': expected an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string where = detail::concat("nodes[", i, "]");
    const auto& n = nodes[i];
    SceneNode node;
    node.id = static_cast<std::uint32_t>(json_uint(json_member(n, "id", where), where + ".id",
                                                   UINT32_MAX));
    node.class_id = static_cast<ClassId>(json_uint(json_member(n, "class", where),
                                                   where + ".class", g.num_classes - 1));
    node.pixel_count = static_cast<std::uint32_t>(
        json_uint(json_member(n, "pixels", where), where + ".pixels", UINT32_MAX));
    if (node.id != i) {
      throw ParseError(detail::concat("field '", where, ".id': expected ", i, " (ids must be "
                                      "contiguous and in order), got ", node.id));
    }
    g.nodes.push_back(node);
  }
  const auto& edges = json_member(doc, "edges", "$");
  if (!edges.is_array()) throw ParseError("field 'edges': expected an array");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string where = detail::concat("edges[", i, "]");
    const auto& e = edges[i];
    if (!e.is_array() || e.size() != 2) {
      throw ParseError(detail::concat("field '", where, "': expected a pair [a, b]"));
    }
    const auto max_id = g.nodes.empty() ? 0 : g.nodes.size() - 1;
    const auto a = static_cast<std::uint32_t>(json_uint(e[0], where + "[0]", max_id));
    const auto b = static_cast<std::uint32_t>(json_uint(e[1], where + "[1]", max_id));
    if (g.nodes.empty()) throw ParseError(detail::concat("field '", where, "': graph has no nodes"));
    if (a == b) throw ParseError(detail::concat("field '", where, "': self edge on node ", a));
    g.edges.push_back(make_edge(a, b));
  }
  std::sort(g.edges.begin(), g.edges.end());
  for (std::size_t i = 1; i < g.edges.size(); ++i) {
    if (g.edges[i] == g.edges[i - 1]) {
      throw ParseError(detail::concat("field 'edges': duplicate edge [", g.edges[i].a, ", ",
                                      g.edges[i].b, "]"));
    }
  }
  return g;
}

/// Parses a scene graph document. Syntax errors report line and column;
/// schema errors name the offending field.
inline SceneGraph read_graph_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Recover line/column from the byte offset.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(detail::concat("scene graph JSON syntax error at line ", line, ", column ",
                                    col, ": ", e.what()));
  }
  return graph_from_json(doc);
}

}  // namespace tsg::scene
