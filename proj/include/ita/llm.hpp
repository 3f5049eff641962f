#pragma once

// LLM-backed caption segmentation with an offline replay store.
//
// HTTP request body:
//   {"template_id", "caption", "temperature": 0.0, "top_k": 1, "prompt"}
// Response: JSON {"raw_text": ...} (or {"text": ...}), otherwise the body is
// taken as the raw completion.
//
// Replay store: JSONL of {"key", "raw_text", "parsed_segments"} with
// key = template_id ":" sha256(caption).

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ita/error.hpp"
#include "ita/hash.hpp"
#include "ita/templates_generated.hpp"
#include "ita/textseg.hpp"

namespace ita {

inline std::string_view segmentation_template(Granularity g) {
  switch (g) {
    case Granularity::kFine: return generated::kFineTemplate;
    case Granularity::kMid: return generated::kMidTemplate;
    case Granularity::kCoarse: return generated::kCoarseTemplate;
  }
  return generated::kCoarseTemplate;
}

/// Template followed by the quoted caption, as in the template's examples.
inline std::string build_prompt(Granularity g, std::string_view caption) {
  std::string p(segmentation_template(g));
  p += '"';
  p += caption;
  p += '"';
  return p;
}

struct LlmRequest {
  Granularity template_id = Granularity::kCoarse;
  std::string caption;
  double temperature = 0.0;
  int top_k = 1;

  nlohmann::json to_json() const {
    return {{"template_id", to_string(template_id)},
            {"caption", caption},
            {"temperature", temperature},
            {"top_k", top_k},
            {"prompt", build_prompt(template_id, caption)}};
  }
};

struct LlmResponse {
  std::string raw_text;
  std::vector<std::string> parsed_segments;
};

inline std::string replay_key(Granularity g, std::string_view caption) {
  return to_string(g) + ":" + sha256_hex(caption);
}

namespace detail {

inline void skip_space(std::string_view s, std::size_t& i) {
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
}

// Reads a quoted string starting at s[i] (the opening quote).
inline std::string read_quoted(std::string_view s, std::size_t& i, const std::string& raw) {
  const char quote = s[i++];
  std::string out;
  while (i < s.size()) {
    const char c = s[i++];
    if (c == quote) return out;
    if (c == '\\' && i < s.size()) {
      const char e = s[i++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: out += e; break;
      }
      continue;
    }
    out += c;
  }
  throw ParseError("unterminated string in segment list", raw);
}

inline std::vector<std::string> parse_bracketed(std::string_view s, std::size_t open, const std::string& raw) {
  std::vector<std::string> out;
  std::size_t i = open + 1;
  for (;;) {
    skip_space(s, i);
    if (i >= s.size()) throw ParseError("unterminated '[' in segment list", raw);
    if (s[i] == ']') return out;
    if (s[i] == ',') {
      ++i;
      continue;
    }
    if (s[i] != '"' && s[i] != '\'') {
      throw ParseError("expected a quoted segment at offset " + std::to_string(i), raw);
    }
    out.push_back(read_quoted(s, i, raw));
  }
}

inline std::string strip_list_marker(std::string line) {
  line = text::trim(line);
  if (!line.empty() && (line[0] == '-' || line[0] == '*')) return text::trim(line.substr(1));
  std::size_t d = 0;
  while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
  if (d > 0 && d < line.size() && (line[d] == '.' || line[d] == ')')) return text::trim(line.substr(d + 1));
  return line;
}

}  // namespace detail

/// Accepts a bracketed list of quoted strings (trailing commas allowed),
/// optionally preceded by a label such as "text_segments":, or one segment
/// per line with optional bullet/number markers.
inline std::vector<std::string> parse_segment_list(const std::string& raw) {
  const std::string_view s(raw);
  if (const auto open = s.find('['); open != std::string_view::npos) {
    return detail::parse_bracketed(s, open, raw);
  }
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find('\n', start);
    if (end == std::string_view::npos) end = s.size();
    std::string line = detail::strip_list_marker(std::string(s.substr(start, end - start)));
    start = end + 1;
    if (line.empty() || line.back() == ':') continue;
    if (line.back() == ',') line = text::trim(line.substr(0, line.size() - 1));
    if (line.size() >= 2 && (line.front() == '"' || line.front() == '\'')) {
      std::size_t i = 0;
      line = detail::read_quoted(line, i, raw);
    }
    if (!line.empty()) out.push_back(std::move(line));
  }
  return out;
}

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual LlmResponse complete(const LlmRequest& request) = 0;
};

/// Thread-safe replay store; reads are concurrent, appends serialized.
class ReplayStore {
 public:
  ReplayStore() = default;

  /// Loads `path` if it exists; new records are appended to it.
  explicit ReplayStore(std::filesystem::path path) : path_(std::move(path)) { load(path_); }

  /// Read-only merge of another JSONL file (e.g. a shipped seed file).
  void load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return;
    std::string line;
    std::size_t lineno = 0;
    std::unique_lock lock(mu_);
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        records_[j.at("key").get<std::string>()] = {
            j.at("raw_text").get<std::string>(), j.at("parsed_segments").get<std::vector<std::string>>()};
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::kSchema, path.string() + " line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  std::optional<LlmResponse> find(const std::string& key) const {
    std::shared_lock lock(mu_);
    if (auto it = records_.find(key); it != records_.end()) return it->second;
    return std::nullopt;
  }

  void record(const std::string& key, const LlmResponse& r) {
    std::unique_lock lock(mu_);
    records_[key] = r;
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error(ErrorKind::kIo, "cannot append to " + path_.string());
    out << nlohmann::json{{"key", key}, {"raw_text", r.raw_text}, {"parsed_segments", r.parsed_segments}}.dump()
        << '\n';
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return records_.size();
  }

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, LlmResponse> records_;
};

struct HttpLlmOptions {
  std::string base_url;  // http://host:port
  std::string path = "/v1/segment";
  int timeout_seconds = 120;
  std::ptrdiff_t max_in_flight = 4;
};

class HttpLlmClient : public LlmClient {
 public:
  explicit HttpLlmClient(HttpLlmOptions opts)
      : opts_(std::move(opts)), slots_(std::clamp<std::ptrdiff_t>(opts_.max_in_flight, 0, kMaxSlots)) {
    if (opts_.base_url.empty()) throw Error(ErrorKind::kInvalidConfig, "LLM client needs a URL");
    if (opts_.max_in_flight < 1 || opts_.max_in_flight > kMaxSlots) {
      throw Error(ErrorKind::kInvalidConfig, "LLM max_in_flight out of range");
    }
  }

  LlmResponse complete(const LlmRequest& request) override {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<kMaxSlots>& s;
      ~Release() { s.release(); }
    } release{slots_};

    httplib::Client c(opts_.base_url);
    c.set_connection_timeout(opts_.timeout_seconds, 0);
    c.set_read_timeout(opts_.timeout_seconds, 0);
    auto res = c.Post(opts_.path, request.to_json().dump(), "application/json");
    if (!res) throw TransportError("LLM request: " + httplib::to_string(res.error()), {});
    if (res->status >= 500) throw TransportError("LLM returned HTTP " + std::to_string(res->status), {});
    if (res->status != 200) {
      throw Error(ErrorKind::kProtocol, "LLM returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    LlmResponse out;
    out.raw_text = res->body;
    const auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_object()) {
      if (j.contains("raw_text") && j["raw_text"].is_string()) {
        out.raw_text = j["raw_text"].get<std::string>();
      } else if (j.contains("text") && j["text"].is_string()) {
        out.raw_text = j["text"].get<std::string>();
      }
    }
    out.parsed_segments = parse_segment_list(out.raw_text);
    return out;
  }

 private:
  static constexpr std::ptrdiff_t kMaxSlots = 64;
  HttpLlmOptions opts_;
  std::counting_semaphore<kMaxSlots> slots_;
};

/// Serves recorded responses; on a miss asks `upstream` (if any) and records
/// the answer.
class ReplayingLlmClient : public LlmClient {
 public:
  ReplayingLlmClient(std::shared_ptr<ReplayStore> store, std::shared_ptr<LlmClient> upstream = nullptr)
      : store_(std::move(store)), upstream_(std::move(upstream)) {}

  LlmResponse complete(const LlmRequest& request) override {
    const auto key = replay_key(request.template_id, request.caption);
    if (auto hit = store_->find(key)) return *hit;
    if (!upstream_) {
      throw TransportError("no replay entry for " + key + " and no LLM endpoint configured", {});
    }
    auto r = upstream_->complete(request);
    store_->record(key, r);
    return r;
  }

 private:
  std::shared_ptr<ReplayStore> store_;
  std::shared_ptr<LlmClient> upstream_;
};

/// Undecomposable captions (empty list) fall back to the caption itself.
inline SegmentSet segments_from_llm(const std::string& caption, Granularity g, LlmClient& client) {
  if (text::trim(caption).empty()) throw Error(ErrorKind::kEmptyInput, "empty caption");
  LlmRequest req;
  req.template_id = g;
  req.caption = caption;
  const auto resp = client.complete(req);
  SegmentSet out;
  out.caption = caption;
  out.granularity = g;
  out.raw_text = resp.raw_text;
  out.segments = dedup_segments(resp.parsed_segments);
  out.provenance = Provenance::kLlm;
  if (out.segments.empty()) {
    out.segments = {caption};
    out.provenance = Provenance::kFallbackFullCaption;
  }
  return out;
}

}  // namespace ita
