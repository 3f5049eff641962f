#pragma once

// End-to-end evaluation of a manifest under one configuration: baseline
// (no crops, no segments), segments only, crops only, or full ITA.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ita/datasets.hpp"
#include "ita/embedder.hpp"
#include "ita/embedding.hpp"
#include "ita/geometry.hpp"
#include "ita/llm.hpp"
#include "ita/matching.hpp"
#include "ita/metrics.hpp"
#include "ita/remote_backend.hpp"
#include "ita/synthetic_backend.hpp"
#include "ita/textseg.hpp"

namespace ita {

/// CLI exit code for an error class.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig:
      return 2;
    case ErrorKind::kTransport:
    case ErrorKind::kProtocol:
    case ErrorKind::kDimensionMismatch:
    case ErrorKind::kUndefinedSimilarity:
      return 4;
    default:
      return 3;
  }
}

/// "synthetic-bound" | "synthetic-bag" | "http:<url>"
inline std::unique_ptr<EmbeddingBackend> make_backend(const std::string& spec,
                                                      const SyntheticParams& params = {}) {
  if (spec == "synthetic-bound") return std::make_unique<SyntheticBackend>(BackendKind::kSyntheticBound, params);
  if (spec == "synthetic-bag") return std::make_unique<SyntheticBackend>(BackendKind::kSyntheticBag, params);
  if (spec.rfind("http:", 0) == 0) {
    RemoteOptions o;
    o.base_url = spec.substr(5);
    if (o.base_url.rfind("//", 0) == 0) o.base_url = "http:" + o.base_url;
    return std::make_unique<RemoteBackend>(o);
  }
  throw Error(ErrorKind::kInvalidConfig, "unknown backend '" + spec + "'");
}

/// "none" | "scene-graph:<g>" | "llm:<g>" | "file:<g>:<path>"
struct SegmentSource {
  enum class Kind { kNone, kSceneGraph, kLlm, kFile };
  Kind kind = Kind::kNone;
  Granularity granularity = Granularity::kCoarse;
  std::filesystem::path file;

  static SegmentSource parse(const std::string& spec) {
    SegmentSource s;
    if (spec == "none") return s;
    const auto colon = spec.find(':');
    const std::string head = spec.substr(0, colon);
    std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (head == "scene-graph") {
      s.kind = Kind::kSceneGraph;
    } else if (head == "llm") {
      s.kind = Kind::kLlm;
    } else if (head == "file") {
      s.kind = Kind::kFile;
      const auto c2 = rest.find(':');
      if (c2 == std::string::npos) throw Error(ErrorKind::kInvalidConfig, "file segments need file:<g>:<path>");
      s.file = rest.substr(c2 + 1);
      rest = rest.substr(0, c2);
    } else {
      throw Error(ErrorKind::kInvalidConfig, "unknown segment source '" + spec + "'");
    }
    if (rest.empty()) rest = "coarse";
    s.granularity = granularity_from_string(rest);
    return s;
  }

  std::string label() const {
    switch (kind) {
      case Kind::kNone: return "none";
      case Kind::kSceneGraph: return "scene_graph:" + to_string(granularity);
      case Kind::kLlm: return "llm:" + to_string(granularity);
      case Kind::kFile: return "file:" + to_string(granularity);
    }
    return "none";
  }
};

struct RunConfig {
  std::filesystem::path manifest;
  std::string backend = "synthetic-bound";
  std::string crops = "overlap";  // none | grid | overlap
  std::string segments = "scene-graph:coarse";
  std::filesystem::path output;
  std::size_t parallelism = 1;
  std::filesystem::path cache_dir;
  std::size_t memory_cache_entries = 8192;
  std::string llm_url;
  std::filesystem::path llm_replay;
  std::filesystem::path llm_seed;  // read-only extra replay records
  int histogram_bins = 20;
  double histogram_scale = 1.0;
  double histogram_bias = 0.0;
  SyntheticParams synthetic;
  EmbedderOptions embed;

  void validate() const {
    if (crops != "none" && crops != "grid" && crops != "overlap") {
      throw Error(ErrorKind::kInvalidConfig, "crop mode must be none, grid or overlap");
    }
    SegmentSource::parse(segments);
    if (parallelism == 0) throw Error(ErrorKind::kInvalidConfig, "parallelism must be at least 1");
    if (histogram_bins < 1) throw Error(ErrorKind::kInvalidConfig, "histogram needs at least one bin");
    if (!(histogram_scale > 0.0)) throw Error(ErrorKind::kInvalidConfig, "histogram scale must be positive");
  }

  bool baseline_only() const { return crops == "none" && segments == "none"; }
};

/// Cells in SimilarityTable order: (C0,I0), (C1,I0), (C0,I1), (C1,I1).
inline constexpr std::array<std::pair<int, int>, 4> kCells = {{{0, 0}, {1, 0}, {0, 1}, {1, 1}}};

struct InstanceResult {
  std::string id;
  SimilarityTable table;
  InstanceScores scores;
  std::array<MatchReport, 4> reports;
  ValidationReport validation;
  std::array<SegmentSet, 2> segments;
};

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> positive_image;
  std::vector<std::size_t> negative_image;
};

struct EvalResult {
  std::string dataset;
  std::string fingerprint;
  MetricsReport report;
  std::vector<InstanceResult> instances;
  Histogram histogram;
};

class Evaluator {
 public:
  /// `backend` overrides the spec in `config.backend` (tests inject fakes).
  explicit Evaluator(RunConfig config, std::shared_ptr<EmbeddingBackend> backend = nullptr,
                     std::shared_ptr<LlmClient> llm = nullptr)
      : config_(std::move(config)), backend_(std::move(backend)), llm_(std::move(llm)) {
    config_.validate();
    if (!backend_) backend_ = make_backend(config_.backend, config_.synthetic);
    cache_ = std::make_unique<EmbeddingCache>(config_.cache_dir, config_.memory_cache_entries);
    embedder_ = std::make_unique<Embedder>(*backend_, cache_.get(), config_.embed);
    source_ = SegmentSource::parse(config_.segments);
    if (source_.kind == SegmentSource::Kind::kFile) sidecar_ = load_segment_sidecar(source_.file);
    if (source_.kind == SegmentSource::Kind::kLlm && !llm_) {
      auto store = std::make_shared<ReplayStore>(config_.llm_replay);
      if (!config_.llm_seed.empty()) store->load(config_.llm_seed);
      std::shared_ptr<LlmClient> upstream;
      if (!config_.llm_url.empty()) upstream = std::make_shared<HttpLlmClient>(HttpLlmOptions{config_.llm_url});
      llm_ = std::make_shared<ReplayingLlmClient>(store, upstream);
    }
    if (config_.crops != "none") {
      CropConfig cc;
      cc.mode = crop_mode_from_string(config_.crops);
      lattice_ = generate_lattice(cc).crops;
    } else {
      lattice_ = {CropBox{0, 0, kWorkingSide, kWorkingSide}};
    }
  }

  std::string fingerprint() const {
    std::string seg = source_.label();
    if (source_.kind == SegmentSource::Kind::kFile) {
      seg += ":" + sha256_hex(std::string_view(file_bytes(source_.file))).substr(0, 16);
    }
    return backend_->descriptor().backend_id + "|crops=" + config_.crops + "|segments=" + seg;
  }

  EmbeddingCache& cache() { return *cache_; }

  InstanceResult evaluate(const BidirInstance& inst, const std::filesystem::path& base_dir) {
    InstanceResult r;
    r.id = inst.id;
    const std::array<const ImageRef*, 2> refs = {&inst.image, &inst.negative_image};
    std::array<std::vector<EmbeddingVector>, 2> crop_vecs, full_vecs;
    for (int i = 0; i < 2; ++i) {
      const PixelBuffer img = preprocess_source(refs[i]->load(base_dir));
      std::vector<PixelBuffer> crops;
      crops.reserve(lattice_.size());
      for (const auto& b : lattice_) crops.push_back(extract_crop(img, b));
      crop_vecs[i] = embedder_->embed_images(crops);
      full_vecs[i] = embedder_->embed_images(std::span<const PixelBuffer>(&img, 1));
    }
    const std::array<std::string, 2> captions = {inst.caption, inst.negative_caption};
    std::array<std::vector<EmbeddingVector>, 2> seg_vecs, cap_vecs;
    for (int c = 0; c < 2; ++c) {
      r.segments[c] = segments_for(inst, c);
      seg_vecs[c] = embedder_->embed_texts(r.segments[c].segments);
      cap_vecs[c] = embedder_->embed_texts(std::span<const std::string>(&captions[c], 1));
    }
    r.validation = validate_segment_pair(r.segments[0], r.segments[1]);
    std::array<double, 4> s{};
    for (std::size_t k = 0; k < kCells.size(); ++k) {
      const auto [c, i] = kCells[k];
      auto m = similarity_matrix(crop_vecs[i], seg_vecs[c], lattice_, r.segments[c].segments);
      r.reports[k] = best_matches(m);
      r.reports[k].baseline_score = cosine(full_vecs[i][0], cap_vecs[c][0]);
      s[k] = r.reports[k].ita_score;
    }
    r.table = {s[0], s[1], s[2], s[3]};
    r.scores = instance_scores(r.table);
    return r;
  }

  /// Evaluates every instance with a fixed worker pool. On failure, instances
  /// that completed before the first failing one are kept in `partial`.
  EvalResult run(const Manifest& manifest, std::vector<InstanceResult>* partial = nullptr) {
    if (manifest.instances.empty()) throw Error(ErrorKind::kEmptyInput, "manifest has no instances");
    const std::size_t n = manifest.instances.size();
    std::vector<std::optional<InstanceResult>> results(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex err_mu;
    std::exception_ptr error;
    std::size_t error_index = n;

    auto worker = [&] {
      for (std::size_t i = next++; i < n && !stop; i = next++) {
        try {
          results[i] = evaluate(manifest.instances[i], manifest.base_dir);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (i < error_index) {
            error_index = i;
            error = std::current_exception();
          }
          stop = true;
        }
      }
    };
    const std::size_t workers = std::min(config_.parallelism, n);
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (error) {
      if (partial) {
        partial->clear();
        for (std::size_t i = 0; i < error_index && results[i]; ++i) partial->push_back(std::move(*results[i]));
      }
      std::rethrow_exception(error);
    }

    EvalResult out;
    out.dataset = manifest.name;
    out.fingerprint = fingerprint();
    std::vector<InstanceScores> scores;
    for (auto& r : results) {
      scores.push_back(r->scores);
      out.instances.push_back(std::move(*r));
    }
    out.report = aggregate(scores, out.fingerprint);
    out.histogram = histogram(out.instances);
    return out;
  }

  Histogram histogram(const std::vector<InstanceResult>& instances) const {
    Histogram h;
    const int bins = config_.histogram_bins;
    const double lo = config_.histogram_bias - config_.histogram_scale;
    const double hi = config_.histogram_bias + config_.histogram_scale;
    for (int b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * b / bins);
    h.positive_image.assign(bins, 0);
    h.negative_image.assign(bins, 0);
    for (const auto& r : instances) {
      for (std::size_t k = 0; k < kCells.size(); ++k) {
        auto& counts = kCells[k].second == 0 ? h.positive_image : h.negative_image;
        for (const auto& m : r.reports[k].matches) {
          const double v = config_.histogram_scale * m.similarity + config_.histogram_bias;
          int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
          counts[std::clamp(b, 0, bins - 1)]++;
        }
      }
    }
    return h;
  }

  const RunConfig& config() const { return config_; }

 private:
  static std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  SegmentSet segments_for(const BidirInstance& inst, int c) {
    const std::string& caption = c == 0 ? inst.caption : inst.negative_caption;
    switch (source_.kind) {
      case SegmentSource::Kind::kNone: {
        SegmentSet s;
        s.caption = caption;
        s.granularity = source_.granularity;
        s.segments = {caption};
        s.provenance = Provenance::kFallbackFullCaption;
        return s;
      }
      case SegmentSource::Kind::kSceneGraph: {
        const auto& g = c == 0 ? inst.positive_graph : inst.negative_graph;
        if (!g) throw Error(ErrorKind::kSchema, "instance " + inst.id + " has no scene graphs");
        return segments_from_scene_graph(*g, source_.granularity);
      }
      case SegmentSource::Kind::kLlm:
        return segments_from_llm(caption, source_.granularity, *llm_);
      case SegmentSource::Kind::kFile: {
        auto it = sidecar_.entries.find({inst.id, source_.granularity});
        if (it == sidecar_.entries.end()) {
          throw Error(ErrorKind::kSchema, "no " + to_string(source_.granularity) + " segments for " + inst.id);
        }
        SegmentSet s;
        s.caption = caption;
        s.granularity = source_.granularity;
        s.segments = dedup_segments(c == 0 ? it->second.first : it->second.second);
        s.provenance = Provenance::kManual;
        if (s.segments.empty()) {
          s.segments = {caption};
          s.provenance = Provenance::kFallbackFullCaption;
        }
        return s;
      }
    }
    throw Error(ErrorKind::kInvalidConfig, "bad segment source");
  }

  RunConfig config_;
  std::shared_ptr<EmbeddingBackend> backend_;
  std::shared_ptr<LlmClient> llm_;
  std::unique_ptr<EmbeddingCache> cache_;
  std::unique_ptr<Embedder> embedder_;
  SegmentSource source_;
  SegmentSidecar sidecar_;
  std::vector<CropBox> lattice_;
};

// --- outputs ---

inline nlohmann::json instance_json(const InstanceResult& r) {
  nlohmann::json cells = nlohmann::json::array();
  static constexpr const char* kPolarity[2] = {"positive", "negative"};
  for (std::size_t k = 0; k < kCells.size(); ++k) {
    auto j = match_dump(r.reports[k]);
    j["caption"] = kPolarity[kCells[k].first];
    j["image"] = kPolarity[kCells[k].second];
    cells.push_back(std::move(j));
  }
  return {{"id", r.id},
          {"table", {{"s00", r.table.s00}, {"s10", r.table.s10}, {"s01", r.table.s01}, {"s11", r.table.s11}}},
          {"scores",
           {{"i2t", r.scores.i2t},
            {"t2i", r.scores.t2i},
            {"group", r.scores.group},
            {"i_pos2t", r.scores.i_pos2t},
            {"i_neg2t", r.scores.i_neg2t},
            {"t_pos2i", r.scores.t_pos2i},
            {"t_neg2i", r.scores.t_neg2i}}},
          {"segment_provenance", {to_string(r.segments[0].provenance), to_string(r.segments[1].provenance)}},
          {"cells", std::move(cells)}};
}

inline void write_matches(const std::filesystem::path& path, const std::vector<InstanceResult>& rs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& r : rs) out << instance_json(r).dump() << '\n';
}

inline nlohmann::json report_json(const EvalResult& e, const RunConfig& cfg) {
  auto j = to_json(e.report);
  j["dataset"] = e.dataset;
  j["config"] = {{"backend", cfg.backend}, {"crops", cfg.crops}, {"segments", cfg.segments}};
  std::size_t mismatch = 0, missing = 0, hallucinated = 0;
  for (const auto& r : e.instances) {
    mismatch += r.validation.count_mismatch ? 1 : 0;
    missing += (!r.validation.positive_missing.empty() || !r.validation.negative_missing.empty()) ? 1 : 0;
    hallucinated +=
        (!r.validation.positive_hallucinated.empty() || !r.validation.negative_hallucinated.empty()) ? 1 : 0;
  }
  j["segment_validation"] = {
      {"count_mismatch", mismatch}, {"missing_tokens", missing}, {"hallucinated_tokens", hallucinated}};
  return j;
}

/// report.json, report.csv, matches.jsonl, histogram.csv
inline void write_outputs(const std::filesystem::path& dir, const EvalResult& e, const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string());
  {
    std::ofstream out(dir / "report.json", std::ios::trunc);
    out << report_json(e, cfg).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "report.csv", std::ios::trunc);
    out << kReportCsvHeader << '\n';
    write_report_csv_row(out, e.dataset, e.report);
  }
  write_matches(dir / "matches.jsonl", e.instances);
  {
    std::ofstream out(dir / "histogram.csv", std::ios::trunc);
    out << "bin_lo,bin_hi,positive_image,negative_image\n";
    char buf[96];
    for (std::size_t b = 0; b + 1 < e.histogram.edges.size(); ++b) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%zu,%zu\n", e.histogram.edges[b], e.histogram.edges[b + 1],
                    e.histogram.positive_image[b], e.histogram.negative_image[b]);
      out << buf;
    }
  }
}

}  // namespace ita
