#pragma once

// Cached, batched front end over an EmbeddingBackend.
//
// Cache layout on disk: <dir>/<digest>.vec binary vector files plus an
// append-only <dir>/index.jsonl of {digest, backend_id, payload_hash, dim}.
// digest = sha256(backend_id "\n" payload_hash).

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ita/embedding.hpp"
#include "ita/error.hpp"
#include "ita/hash.hpp"
#include "ita/image.hpp"
#include "ita/textseg.hpp"

namespace ita {

struct CacheKey {
  std::string backend_id;
  std::string payload_hash;

  std::string digest() const { return sha256_hex(backend_id + "\n" + payload_hash); }
};

namespace detail {

inline constexpr char kVecMagic[4] = {'I', 'T', 'A', 'V'};

inline void write_vector_file(const std::filesystem::path& path, const EmbeddingVector& v) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp);
    const auto dim = static_cast<std::uint32_t>(v.dim());
    const char norm = v.normalized ? 1 : 0;
    out.write(kVecMagic, 4);
    out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
    out.write(&norm, 1);
    out.write(reinterpret_cast<const char*>(v.values.data()),
              static_cast<std::streamsize>(v.values.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::optional<EmbeddingVector> read_vector_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[4];
  std::uint32_t dim = 0;
  char norm = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  in.read(&norm, 1);
  if (!in || std::memcmp(magic, kVecMagic, 4) != 0) {
    throw Error(ErrorKind::kIo, "corrupt cache file " + path.string());
  }
  EmbeddingVector v;
  v.values.resize(dim);
  v.normalized = norm != 0;
  in.read(reinterpret_cast<char*>(v.values.data()), static_cast<std::streamsize>(dim * sizeof(float)));
  if (!in) throw Error(ErrorKind::kIo, "truncated cache file " + path.string());
  return v;
}

}  // namespace detail

/// Content-addressed vector cache: concurrent readers, serialized writers.
/// The in-memory layer stops growing at `memory_capacity` entries; the disk
/// layer (when a directory is given) keeps everything.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path dir = {}, std::size_t memory_capacity = 1 << 16)
      : dir_(std::move(dir)), capacity_(memory_capacity) {
    if (!dir_.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(dir_, ec);
      if (ec) throw Error(ErrorKind::kIo, "cannot create cache dir " + dir_.string());
    }
  }

  std::optional<EmbeddingVector> get(const CacheKey& key) {
    const std::string d = key.digest();
    {
      std::shared_lock lock(mu_);
      if (auto it = mem_.find(d); it != mem_.end()) {
        ++hits_;
        return it->second;
      }
    }
    if (!dir_.empty()) {
      if (auto v = detail::read_vector_file(dir_ / (d + ".vec"))) {
        ++hits_;
        std::unique_lock lock(mu_);
        if (mem_.size() < capacity_) mem_.emplace(d, *v);
        return v;
      }
    }
    ++misses_;
    return std::nullopt;
  }

  void put(const CacheKey& key, const EmbeddingVector& v) {
    const std::string d = key.digest();
    std::unique_lock lock(mu_);
    if (mem_.size() < capacity_) mem_.insert_or_assign(d, v);
    if (dir_.empty()) return;
    const auto path = dir_ / (d + ".vec");
    if (std::filesystem::exists(path)) return;
    detail::write_vector_file(path, v);
    std::ofstream index(dir_ / "index.jsonl", std::ios::app);
    index << nlohmann::json{{"digest", d},
                            {"backend_id", key.backend_id},
                            {"payload_hash", key.payload_hash},
                            {"dim", v.dim()}}
                 .dump()
          << '\n';
  }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::size_t capacity_;
  std::shared_mutex mu_;
  std::unordered_map<std::string, EmbeddingVector> mem_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

struct EmbedderOptions {
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 4;
};

/// Resizes crops to the backend's input side, consults the cache, and sends
/// the remaining unique payloads in bounded concurrent batches.
class Embedder {
 public:
  Embedder(EmbeddingBackend& backend, EmbeddingCache* cache = nullptr, EmbedderOptions opts = {})
      : backend_(backend), cache_(cache), opts_(opts) {
    if (opts_.batch_size == 0 || opts_.max_in_flight == 0) {
      throw Error(ErrorKind::kInvalidConfig, "batch size and in-flight limit must be positive");
    }
  }

  const BackendDescriptor& descriptor() const { return backend_.descriptor(); }

  PixelBuffer prepare(const PixelBuffer& crop) const {
    const int side = backend_.descriptor().input_side;
    return side > 0 ? resize_bicubic(crop, side, side) : crop;
  }

  std::vector<EmbeddingVector> embed_images(std::span<const PixelBuffer> crops) {
    if (crops.empty()) throw Error(ErrorKind::kEmptyInput, "no crops to embed");
    std::vector<PixelBuffer> prepared;
    std::vector<std::string> hashes;
    prepared.reserve(crops.size());
    for (const auto& c : crops) {
      prepared.push_back(prepare(c));
      hashes.push_back("image:" + prepared.back().content_hash());
    }
    return run<PixelBuffer>(prepared, hashes, [this](std::span<const PixelBuffer> batch) {
      return backend_.embed_image_batch(batch);
    });
  }

  std::vector<EmbeddingVector> embed_texts(std::span<const std::string> segments) {
    if (segments.empty()) throw Error(ErrorKind::kEmptyInput, "no segments to embed");
    std::vector<std::string> hashes;
    for (const auto& s : segments) {
      if (text::trim(s).empty()) throw Error(ErrorKind::kEmptyInput, "empty segment");
      hashes.push_back("text:" + sha256_hex(s));
    }
    return run<std::string>({segments.begin(), segments.end()}, hashes,
                            [this](std::span<const std::string> batch) {
                              return backend_.embed_text_batch(batch);
                            });
  }

 private:
  template <typename T, typename Fn>
  std::vector<EmbeddingVector> run(const std::vector<T>& items, const std::vector<std::string>& hashes,
                                   Fn&& dispatch) {
    const auto& desc = backend_.descriptor();
    std::vector<std::optional<EmbeddingVector>> out(items.size());

    // Unique uncached payloads, each remembering every position it fills.
    std::vector<std::size_t> pending;
    std::unordered_map<std::string, std::vector<std::size_t>> positions;
    for (std::size_t i = 0; i < items.size(); ++i) {
      auto [it, fresh] = positions.try_emplace(hashes[i]);
      it->second.push_back(i);
      if (!fresh) continue;
      if (cache_) {
        if (auto v = cache_->get({desc.backend_id, hashes[i]})) {
          out[i] = std::move(*v);
          continue;
        }
      }
      pending.push_back(i);
    }

    const std::size_t batch = std::min(opts_.batch_size, std::max<std::size_t>(1, backend_.max_batch()));
    const std::size_t n_batches = (pending.size() + batch - 1) / batch;
    std::atomic<std::size_t> next{0};
    std::mutex failed_mu;
    std::vector<std::size_t> failed;
    std::string failure_message;

    auto worker = [&] {
      for (std::size_t b = next++; b < n_batches; b = next++) {
        const std::size_t lo = b * batch, hi = std::min(pending.size(), lo + batch);
        std::vector<T> payload;
        for (std::size_t k = lo; k < hi; ++k) payload.push_back(items[pending[k]]);
        try {
          auto vecs = dispatch(std::span<const T>(payload));
          if (vecs.size() != payload.size()) {
            throw Error(ErrorKind::kProtocol, "backend returned " + std::to_string(vecs.size()) +
                                                  " vectors for " + std::to_string(payload.size()) + " inputs");
          }
          for (std::size_t k = lo; k < hi; ++k) {
            auto& v = vecs[k - lo];
            if (v.dim() != desc.dim) {
              throw Error(ErrorKind::kProtocol, "backend returned dim " + std::to_string(v.dim()) +
                                                    ", descriptor says " + std::to_string(desc.dim));
            }
            if (cache_) cache_->put({desc.backend_id, hashes[pending[k]]}, v);
            out[pending[k]] = std::move(v);
          }
        } catch (const TransportError& e) {
          std::lock_guard lock(failed_mu);
          failure_message = e.what();
          for (std::size_t k = lo; k < hi; ++k) failed.push_back(pending[k]);
        }
      }
    };

    const std::size_t n_workers = std::min(opts_.max_in_flight, n_batches);
    if (n_workers <= 1) {
      worker();
    } else {
      std::vector<std::future<void>> futures;
      for (std::size_t w = 0; w < n_workers; ++w) futures.push_back(std::async(std::launch::async, worker));
      std::exception_ptr first;
      for (auto& f : futures) {
        try {
          f.get();
        } catch (...) {
          if (!first) first = std::current_exception();
        }
      }
      if (first) std::rethrow_exception(first);
    }

    if (!failed.empty()) {
      // Report every input position whose payload was lost.
      std::vector<std::size_t> all;
      for (std::size_t i : failed) {
        const auto& pos = positions.at(hashes[i]);
        all.insert(all.end(), pos.begin(), pos.end());
      }
      std::sort(all.begin(), all.end());
      throw TransportError(failure_message, std::move(all));
    }

    std::vector<EmbeddingVector> result;
    result.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!out[i]) out[i] = out[positions.at(hashes[i]).front()];
      result.push_back(*out[i]);
    }
    return result;
  }

  EmbeddingBackend& backend_;
  EmbeddingCache* cache_;
  EmbedderOptions opts_;
};

}  // namespace ita
