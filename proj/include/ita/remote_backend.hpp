#pragma once

// Client for the embedding service:
//   GET  /v1/info        -> {model_id, dim, input_side, preprocessing, version}
//   POST /v1/embed/text  {texts: [...]}           -> {vectors, dim, normalized}
//   POST /v1/embed/image {images: [base64 PNG]}   -> {vectors, dim, normalized}
// The harness sends 224x224 crops; the service does its own final resize.

#include <chrono>
#include <numeric>
#include <semaphore>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ita/embedding.hpp"
#include "ita/error.hpp"
#include "ita/image.hpp"
#include "ita/image_io.hpp"

namespace ita {

struct RemoteOptions {
  std::string base_url;  // http://host:port
  int timeout_seconds = 60;
  int retries = 2;
  std::chrono::milliseconds retry_backoff{200};
  std::size_t max_in_flight = 4;
};

inline constexpr std::size_t kServiceBatchLimit = 256;

class RemoteBackend : public EmbeddingBackend {
 public:
  explicit RemoteBackend(RemoteOptions opts) : opts_(std::move(opts)), slots_(kMaxSlots) {
    if (opts_.base_url.empty()) throw Error(ErrorKind::kInvalidConfig, "remote backend needs a URL");
    if (opts_.max_in_flight == 0 || opts_.max_in_flight > kMaxSlots) {
      throw Error(ErrorKind::kInvalidConfig, "max_in_flight must be in 1.." + std::to_string(kMaxSlots));
    }
    // Park the slots above the configured limit.
    for (std::size_t i = opts_.max_in_flight; i < kMaxSlots; ++i) slots_.acquire();
    load_info();
  }

  const BackendDescriptor& descriptor() const override { return desc_; }
  const nlohmann::json& info() const { return info_; }
  std::size_t max_batch() const override { return kServiceBatchLimit; }

  std::vector<EmbeddingVector> embed_text_batch(std::span<const std::string> texts) override {
    for (const auto& t : texts) {
      if (t.empty()) throw Error(ErrorKind::kEmptyInput, "empty segment");
    }
    return post_batch("/v1/embed/text", nlohmann::json{{"texts", texts}}, texts.size());
  }

  std::vector<EmbeddingVector> embed_image_batch(std::span<const PixelBuffer> images) override {
    nlohmann::json payload = nlohmann::json::array();
    for (const auto& img : images) payload.push_back(base64_encode(encode_png(img)));
    return post_batch("/v1/embed/image", nlohmann::json{{"images", std::move(payload)}}, images.size());
  }

 private:
  static constexpr std::ptrdiff_t kMaxSlots = 64;

  httplib::Client client() const {
    httplib::Client c(opts_.base_url);
    c.set_connection_timeout(opts_.timeout_seconds, 0);
    c.set_read_timeout(opts_.timeout_seconds, 0);
    c.set_write_timeout(opts_.timeout_seconds, 0);
    return c;
  }

  static std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
  }

  void load_info() {
    auto c = client();
    auto res = c.Get("/v1/info");
    if (!res) throw TransportError("GET /v1/info: " + httplib::to_string(res.error()), {});
    if (res->status != 200) {
      throw TransportError("GET /v1/info returned HTTP " + std::to_string(res->status), {});
    }
    try {
      info_ = nlohmann::json::parse(res->body);
      const int dim = info_.at("dim").get<int>();
      if (dim <= 0) throw Error(ErrorKind::kProtocol, "service reports non-positive dim");
      desc_.kind = BackendKind::kRemoteHttp;
      desc_.dim = static_cast<std::size_t>(dim);
      desc_.input_side = kWorkingSide;
      desc_.version = info_.at("version").get<std::string>() + ";crop-resize=bicubic-" +
                      std::to_string(kWorkingSide) + ";service-side=" +
                      std::to_string(info_.at("input_side").get<int>());
      desc_.backend_id = "remote_http:" + info_.at("model_id").get<std::string>() + "@" + desc_.version;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kProtocol, std::string("malformed /v1/info: ") + e.what());
    }
  }

  std::vector<EmbeddingVector> post_batch(const std::string& path, const nlohmann::json& body, std::size_t n) {
    if (n == 0) return {};
    if (n > kServiceBatchLimit) {
      throw Error(ErrorKind::kInvalidConfig, "batch of " + std::to_string(n) + " exceeds service limit");
    }
    slots_.acquire();
    struct Release {
      std::counting_semaphore<kMaxSlots>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= opts_.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(opts_.retry_backoff * attempt);
      auto c = client();
      auto res = c.Post(path, payload, "application/json");
      if (!res) {
        last_error = path + ": " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = path + " returned HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw Error(ErrorKind::kProtocol, path + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
      }
      return parse_vectors(res->body, n);
    }
    throw TransportError(last_error, all_indices(n));
  }

  std::vector<EmbeddingVector> parse_vectors(const std::string& body, std::size_t n) const {
    try {
      const auto j = nlohmann::json::parse(body);
      const auto& rows = j.at("vectors");
      if (!rows.is_array() || rows.size() != n) {
        throw Error(ErrorKind::kProtocol, "expected " + std::to_string(n) + " vectors");
      }
      if (j.at("dim").get<std::size_t>() != desc_.dim) {
        throw Error(ErrorKind::kProtocol, "response dim differs from /v1/info");
      }
      const bool normalized = j.value("normalized", false);
      std::vector<EmbeddingVector> out;
      out.reserve(n);
      for (const auto& row : rows) {
        EmbeddingVector v;
        v.values = row.get<std::vector<float>>();
        if (v.dim() != desc_.dim) throw Error(ErrorKind::kProtocol, "vector length differs from dim");
        v.normalized = normalized;
        if (!normalized || std::abs(v.norm() - 1.0) > 1e-5) v = v.unit();
        out.push_back(std::move(v));
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kProtocol, std::string("malformed embed response: ") + e.what());
    }
  }

  RemoteOptions opts_;
  std::counting_semaphore<kMaxSlots> slots_;
  nlohmann::json info_;
  BackendDescriptor desc_;
};

}  // namespace ita
