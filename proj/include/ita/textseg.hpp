#pragma once

#include <algorithm>
#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ita/error.hpp"

namespace ita {

enum class Granularity { kFine, kMid, kCoarse };

inline std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::kFine: return "fine";
    case Granularity::kMid: return "mid";
    case Granularity::kCoarse: return "coarse";
  }
  return "coarse";
}

inline Granularity granularity_from_string(std::string_view s) {
  if (s == "fine") return Granularity::kFine;
  if (s == "mid") return Granularity::kMid;
  if (s == "coarse") return Granularity::kCoarse;
  throw Error(ErrorKind::kInvalidConfig,
              "unknown granularity '" + std::string(s) + "'");
}

enum class Provenance { kSceneGraph, kLlm, kManual, kFallbackFullCaption };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kSceneGraph: return "scene_graph";
    case Provenance::kLlm: return "llm";
    case Provenance::kManual: return "manual";
    case Provenance::kFallbackFullCaption: return "fallback_full_caption";
  }
  return "manual";
}

struct SceneObject {
  std::string id;
  std::string noun;
  std::vector<std::string> attributes;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct SceneRelation {
  std::string subject_id;
  std::string predicate;
  std::string object_id;

  friend bool operator==(const SceneRelation&, const SceneRelation&) = default;
};

struct GroupCount {
  std::string count_word;
  std::string noun;  // singular

  friend bool operator==(const GroupCount&, const GroupCount&) = default;
};

struct SceneGraph {
  std::vector<SceneObject> objects;
  std::vector<SceneRelation> relations;
  std::vector<GroupCount> group_counts;

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;

  bool empty() const { return objects.empty() && group_counts.empty(); }

  const SceneObject& object(const std::string& id) const {
    for (const auto& o : objects) {
      if (o.id == id) return o;
    }
    throw Error(ErrorKind::kSchema, "relation references unknown object '" + id + "'");
  }

  void validate() const {
    std::set<std::string> ids;
    for (const auto& o : objects) {
      if (o.noun.empty()) throw Error(ErrorKind::kSchema, "object '" + o.id + "' has no noun");
      if (!ids.insert(o.id).second) {
        throw Error(ErrorKind::kSchema, "duplicate object id '" + o.id + "'");
      }
    }
    for (const auto& r : relations) {
      object(r.subject_id);
      object(r.object_id);
    }
  }
};

struct SegmentSet {
  std::string caption;
  Granularity granularity = Granularity::kCoarse;
  std::vector<std::string> segments;
  Provenance provenance = Provenance::kManual;
  // Raw LLM output, kept for audit; empty for other provenances.
  std::string raw_text;
};

namespace text {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

/// Lowercase, punctuation replaced by spaces, split on whitespace.
inline std::vector<std::string> normalized_words(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

inline std::string article_for(std::string_view word) {
  if (word.empty()) return "a";
  const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(word[0])));
  return std::string_view("aeiou").find(c) != std::string_view::npos ? "an" : "a";
}

inline std::string pluralize(std::string_view noun) {
  std::string n(noun);
  auto ends_with = [&](std::string_view suf) {
    return n.size() >= suf.size() && n.compare(n.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends_with("s") || ends_with("x") || ends_with("ch") || ends_with("sh")) return n + "es";
  if (n.size() >= 2 && n.back() == 'y' &&
      std::string_view("aeiou").find(n[n.size() - 2]) == std::string_view::npos) {
    return n.substr(0, n.size() - 1) + "ies";
  }
  return n + "s";
}

}  // namespace text

/// Trims, drops empties, removes duplicates keeping the first occurrence.
inline std::vector<std::string> dedup_segments(const std::vector<std::string>& in) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& raw : in) {
    std::string s = text::trim(raw);
    if (s.empty()) continue;
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

namespace detail {

inline std::string object_phrase(const SceneObject& o) {
  std::vector<std::string> words = o.attributes;
  words.push_back(o.noun);
  return text::join(words, " ");
}

inline std::string with_article(const SceneObject& o) {
  const std::string phrase = object_phrase(o);
  return text::article_for(phrase) + " " + phrase;
}

inline std::string group_phrase(const GroupCount& g) {
  return g.count_word + " " + text::pluralize(g.noun);
}

// Per-object attribute segments at mid granularity: each single attribute,
// then the aggregate when there are several.
inline std::vector<std::string> mid_object_segments(const SceneObject& o) {
  if (o.attributes.size() <= 1) return {object_phrase(o)};
  std::vector<std::string> out;
  for (const auto& a : o.attributes) out.push_back(a + " " + o.noun);
  out.push_back(object_phrase(o));
  return out;
}

}  // namespace detail

/// Caption surface form of a scene graph: "a black cat and a white dog",
/// "a cube left of a sphere", "three spheres and two cubes".
inline std::string realize_caption(const SceneGraph& graph) {
  graph.validate();
  if (graph.empty()) throw Error(ErrorKind::kEmptyGraph, "scene graph has no objects");
  std::vector<std::string> clauses;
  std::set<std::string> mentioned;
  for (const auto& r : graph.relations) {
    const auto& s = graph.object(r.subject_id);
    const auto& o = graph.object(r.object_id);
    clauses.push_back(detail::with_article(s) + " " + r.predicate + " " +
                      detail::with_article(o));
    mentioned.insert(r.subject_id);
    mentioned.insert(r.object_id);
  }
  for (const auto& o : graph.objects) {
    if (!mentioned.count(o.id)) clauses.push_back(detail::with_article(o));
  }
  for (const auto& g : graph.group_counts) clauses.push_back(detail::group_phrase(g));
  return text::join(clauses, " and ");
}

/// Deterministic segments from a gold scene graph. Coarse: one segment per
/// object with all its attributes; mid: adds single-attribute segments;
/// fine: adds bare objects. The full caption closes every set.
inline SegmentSet segments_from_scene_graph(const SceneGraph& graph, Granularity g) {
  graph.validate();
  if (graph.empty()) throw Error(ErrorKind::kEmptyGraph, "scene graph has no objects");

  std::vector<std::string> segs;
  if (g == Granularity::kFine) {
    for (const auto& o : graph.objects) segs.push_back(o.noun);
    for (const auto& gc : graph.group_counts) segs.push_back(text::pluralize(gc.noun));
  }
  for (const auto& o : graph.objects) {
    if (g == Granularity::kCoarse) {
      segs.push_back(detail::object_phrase(o));
    } else {
      for (auto& s : detail::mid_object_segments(o)) segs.push_back(std::move(s));
    }
  }
  for (const auto& gc : graph.group_counts) segs.push_back(detail::group_phrase(gc));

  const std::string caption = realize_caption(graph);
  segs.push_back(caption);

  SegmentSet out;
  out.caption = caption;
  out.granularity = g;
  out.segments = dedup_segments(segs);
  out.provenance = Provenance::kSceneGraph;
  return out;
}

struct ValidationReport {
  bool count_mismatch = false;
  std::vector<std::string> positive_missing;
  std::vector<std::string> negative_missing;
  std::vector<std::string> positive_hallucinated;
  std::vector<std::string> negative_hallucinated;

  bool clean() const {
    return !count_mismatch && positive_missing.empty() && negative_missing.empty() &&
           positive_hallucinated.empty() && negative_hallucinated.empty();
  }
};

namespace detail {

inline bool is_article(const std::string& w) { return w == "a" || w == "an" || w == "the"; }

// (missing caption words, segment words not in caption)
inline std::pair<std::vector<std::string>, std::vector<std::string>> coverage(
    const SegmentSet& set) {
  const auto caption_words = text::normalized_words(set.caption);
  std::set<std::string> caption_set(caption_words.begin(), caption_words.end());
  std::set<std::string> segment_set;
  for (const auto& s : set.segments) {
    for (auto& w : text::normalized_words(s)) segment_set.insert(std::move(w));
  }
  std::vector<std::string> missing, extra;
  for (const auto& w : caption_set) {
    if (!is_article(w) && !segment_set.count(w)) missing.push_back(w);
  }
  for (const auto& w : segment_set) {
    if (!caption_set.count(w)) extra.push_back(w);
  }
  return {missing, extra};
}

}  // namespace detail

/// Report-only checks on a positive/negative segment pair: count mismatch,
/// caption words no segment covers, segment words absent from the caption.
inline ValidationReport validate_segment_pair(const SegmentSet& pos, const SegmentSet& neg) {
  ValidationReport r;
  r.count_mismatch = pos.segments.size() != neg.segments.size();
  std::tie(r.positive_missing, r.positive_hallucinated) = detail::coverage(pos);
  std::tie(r.negative_missing, r.negative_hallucinated) = detail::coverage(neg);
  return r;
}

}  // namespace ita
