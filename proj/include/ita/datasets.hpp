#pragma once

// Bidirectional retrieval manifests (JSONL). One instance per line:
//   {"id", "image", "caption", "negative_image", "negative_caption",
//    optional "scene_graphs": {"positive", "negative"}}
// Images are paths relative to the manifest, or "base64:<PNG/JPEG bytes>".
// An optional first line {"manifest": {"name", "notes"}} carries metadata.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ita/error.hpp"
#include "ita/image.hpp"
#include "ita/image_io.hpp"
#include "ita/textseg.hpp"

namespace ita {

struct ImageRef {
  std::string ref;  // as written in the manifest

  bool embedded() const { return ref.rfind("base64:", 0) == 0; }

  /// Decodes on each call; decode failures surface here, not at load time.
  PixelBuffer load(const std::filesystem::path& base_dir) const {
    if (embedded()) {
      try {
        return decode_image(base64_decode(std::string_view(ref).substr(7)));
      } catch (const Error& e) {
        throw Error(ErrorKind::kDecode, std::string("embedded image: ") + e.what());
      }
    }
    const std::filesystem::path p(ref);
    return load_image(p.is_absolute() ? p : base_dir / p);
  }

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

struct BidirInstance {
  std::string id;
  ImageRef image;
  std::string caption;
  ImageRef negative_image;
  std::string negative_caption;
  std::optional<SceneGraph> positive_graph;
  std::optional<SceneGraph> negative_graph;

  friend bool operator==(const BidirInstance&, const BidirInstance&) = default;
};

struct Manifest {
  std::string name;
  std::string notes;
  std::filesystem::path base_dir;
  std::vector<BidirInstance> instances;

  std::size_t size() const { return instances.size(); }
};

// --- scene graph JSON ---

inline nlohmann::json to_json(const SceneGraph& g) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : g.objects) {
    objects.push_back({{"id", o.id}, {"noun", o.noun}, {"attributes", o.attributes}});
  }
  nlohmann::json relations = nlohmann::json::array();
  for (const auto& r : g.relations) {
    relations.push_back({{"subject", r.subject_id}, {"predicate", r.predicate}, {"object", r.object_id}});
  }
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& gc : g.group_counts) groups.push_back({{"count", gc.count_word}, {"noun", gc.noun}});
  return {{"objects", objects}, {"relations", relations}, {"group_counts", groups}};
}

inline SceneGraph scene_graph_from_json(const nlohmann::json& j) {
  SceneGraph g;
  try {
    for (const auto& o : j.value("objects", nlohmann::json::array())) {
      g.objects.push_back({o.at("id").get<std::string>(), o.at("noun").get<std::string>(),
                           o.value("attributes", std::vector<std::string>{})});
    }
    for (const auto& r : j.value("relations", nlohmann::json::array())) {
      g.relations.push_back({r.at("subject").get<std::string>(), r.at("predicate").get<std::string>(),
                             r.at("object").get<std::string>()});
    }
    for (const auto& gc : j.value("group_counts", nlohmann::json::array())) {
      g.group_counts.push_back({gc.at("count").get<std::string>(), gc.at("noun").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("scene graph: ") + e.what());
  }
  g.validate();
  return g;
}

// --- manifest ---

inline nlohmann::json to_json(const BidirInstance& inst) {
  nlohmann::json j{{"id", inst.id},
                   {"image", inst.image.ref},
                   {"caption", inst.caption},
                   {"negative_image", inst.negative_image.ref},
                   {"negative_caption", inst.negative_caption}};
  if (inst.positive_graph && inst.negative_graph) {
    j["scene_graphs"] = {{"positive", to_json(*inst.positive_graph)},
                         {"negative", to_json(*inst.negative_graph)}};
  }
  return j;
}

inline BidirInstance instance_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw Error(ErrorKind::kSchema, "line " + std::to_string(line) + ": not an object");
  const std::string id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>()
                                                                   : "<line " + std::to_string(line) + ">";
  auto field = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
      throw Error(ErrorKind::kSchema, "instance " + id + ": missing or empty '" + key + "'");
    }
    return j[key].get<std::string>();
  };
  BidirInstance inst;
  inst.id = field("id");
  inst.image = {field("image")};
  inst.caption = field("caption");
  inst.negative_image = {field("negative_image")};
  inst.negative_caption = field("negative_caption");
  if (j.contains("scene_graphs")) {
    const auto& sg = j["scene_graphs"];
    try {
      inst.positive_graph = scene_graph_from_json(sg.at("positive"));
      inst.negative_graph = scene_graph_from_json(sg.at("negative"));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kSchema, "instance " + id + ": scene_graphs: " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorKind::kSchema, "instance " + id + ": " + e.what());
    }
  }
  return inst;
}

inline Manifest parse_manifest(std::istream& in, std::filesystem::path base_dir, std::string default_name) {
  Manifest m;
  m.name = std::move(default_name);
  m.base_dir = std::move(base_dir);
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kSchema, "line " + std::to_string(lineno) + ": " + e.what());
    }
    if (j.is_object() && j.contains("manifest")) {
      if (!m.instances.empty()) {
        throw Error(ErrorKind::kSchema, "manifest header must precede instances");
      }
      m.name = j["manifest"].value("name", m.name);
      m.notes = j["manifest"].value("notes", "");
      continue;
    }
    auto inst = instance_from_json(j, lineno);
    if (!ids.insert(inst.id).second) throw Error(ErrorKind::kSchema, "duplicate id '" + inst.id + "'");
    m.instances.push_back(std::move(inst));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path(), path.stem().string());
}

inline void write_manifest(std::ostream& out, const Manifest& m) {
  out << nlohmann::json{{"manifest", {{"name", m.name}, {"notes", m.notes}}}}.dump() << '\n';
  for (const auto& inst : m.instances) out << to_json(inst).dump() << '\n';
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  write_manifest(out, m);
}

/// Same word multiset but different word sequence, after lowercasing and
/// stripping punctuation.
inline bool is_swap_pair(std::string_view a, std::string_view b) {
  auto wa = text::normalized_words(a);
  auto wb = text::normalized_words(b);
  if (wa.empty() || wa == wb) return false;
  std::sort(wa.begin(), wa.end());
  std::sort(wb.begin(), wb.end());
  return wa == wb;
}

// --- gold / precomputed segments sidecar ---
// One line per (id, granularity):
//   {"id", "granularity", "positive_segments": [...], "negative_segments": [...]}

struct SegmentSidecar {
  // (id, granularity) -> (positive, negative)
  std::map<std::pair<std::string, Granularity>,
           std::pair<std::vector<std::string>, std::vector<std::string>>>
      entries;
};

inline SegmentSidecar load_segment_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open segments file " + path.string());
  SegmentSidecar s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto g = granularity_from_string(j.at("granularity").get<std::string>());
      s.entries[{j.at("id").get<std::string>(), g}] = {
          j.at("positive_segments").get<std::vector<std::string>>(),
          j.at("negative_segments").get<std::vector<std::string>>()};
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kSchema, path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return s;
}

}  // namespace ita
