#include <atomic>

#include <gtest/gtest.h>

#include "ita/embedder.hpp"
#include "ita/image_io.hpp"
#include "ita/remote_backend.hpp"
#include "test_support.hpp"

namespace {

constexpr int kDim = 6;

// Deterministic fake of the embedding service wire protocol.
class FakeEmbedService : public ::testing::Test {
 protected:
  void SetUp() override {
    auto& s = server.server;
    s.Get("/v1/info", [this](const httplib::Request&, httplib::Response& res) {
      if (loading) {
        res.status = 503;
        return;
      }
      res.set_content(nlohmann::json{{"model_id", "fake-clip"},
                                     {"dim", kDim},
                                     {"input_side", 256},
                                     {"preprocessing", "none"},
                                     {"version", "0.1"}}
                          .dump(),
                      "application/json");
    });
    s.Post("/v1/embed/text", [this](const httplib::Request& req, httplib::Response& res) {
      ++text_calls;
      const auto texts = nlohmann::json::parse(req.body).at("texts").get<std::vector<std::string>>();
      if (fail_texts > 0) {
        --fail_texts;
        res.status = 500;
        return;
      }
      if (texts.empty()) {
        res.status = 400;
        return;
      }
      if (texts.size() > 256) {
        res.status = 413;
        return;
      }
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& t : texts) rows.push_back(vector_for(t, wrong_length));
      res.set_content(nlohmann::json{{"vectors", rows}, {"dim", wrong_dim ? kDim + 1 : kDim}, {"normalized", false}}.dump(),
                      "application/json");
    });
    s.Post("/v1/embed/image", [this](const httplib::Request& req, httplib::Response& res) {
      ++image_calls;
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& b64 : body.at("images")) {
        const auto img = ita::decode_png(ita::base64_decode(b64.get<std::string>()));
        last_image_side = img.width;
        rows.push_back(vector_for(img.content_hash(), false));
      }
      res.set_content(nlohmann::json{{"vectors", rows}, {"dim", kDim}, {"normalized", false}}.dump(), "application/json");
    });
    server.start();
  }

  static std::vector<float> vector_for(const std::string& s, bool wrong_length) {
    const auto h = ita::sha256_hex(s);
    std::vector<float> v;
    for (int i = 0; i < (wrong_length ? kDim - 1 : kDim); ++i) v.push_back(static_cast<float>(h[i]) - 50.0f);
    return v;
  }

  ita::RemoteOptions options() const {
    ita::RemoteOptions o;
    o.base_url = server.url();
    o.retry_backoff = std::chrono::milliseconds(1);
    return o;
  }

  ita::testing::FakeServer server;
  std::atomic<bool> loading{false};
  std::atomic<int> fail_texts{0};
  std::atomic<bool> wrong_dim{false};
  std::atomic<bool> wrong_length{false};
  std::atomic<int> text_calls{0};
  std::atomic<int> image_calls{0};
  std::atomic<int> last_image_side{0};
};

TEST_F(FakeEmbedService, Descriptor) {
  ita::RemoteBackend be(options());
  const auto& d = be.descriptor();
  EXPECT_EQ(d.dim, static_cast<std::size_t>(kDim));
  EXPECT_EQ(d.input_side, 224);
  EXPECT_EQ(d.kind, ita::BackendKind::kRemoteHttp);
  EXPECT_EQ(d.backend_id, "remote_http:fake-clip@0.1;crop-resize=bicubic-224;service-side=256");
}

TEST_F(FakeEmbedService, TextVectorsAlignedAndNormalized) {
  ita::RemoteBackend be(options());
  const std::vector<std::string> texts{"a", "b", "a"};
  const auto v = be.embed_text_batch(texts);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0], v[2]);
  EXPECT_NE(v[0], v[1]);
  for (const auto& x : v) EXPECT_NEAR(x.norm(), 1.0, 1e-6);
  ita::EmbeddingVector expected{vector_for("b", false), false};
  EXPECT_NEAR(ita::cosine(v[1], expected), 1.0, 1e-9);
}

TEST_F(FakeEmbedService, ImagesArriveAt224) {
  ita::RemoteBackend be(options());
  ita::Embedder emb(be);
  const std::vector<ita::PixelBuffer> crops{ita::PixelBuffer(32, 32, 5), ita::PixelBuffer(112, 56, 9)};
  const auto v = emb.embed_images(crops);
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(last_image_side.load(), 224);
}

TEST_F(FakeEmbedService, LargeRequestsSplitIntoServiceBatches) {
  ita::RemoteBackend be(options());
  ita::Embedder emb(be, nullptr, {300, 4});
  std::vector<std::string> texts;
  for (int i = 0; i < 513; ++i) texts.push_back("t" + std::to_string(i));
  EXPECT_EQ(emb.embed_texts(texts).size(), 513u);
  EXPECT_EQ(text_calls.load(), 3);
}

TEST_F(FakeEmbedService, RetriesThenSucceeds) {
  ita::RemoteBackend be(options());
  fail_texts = 2;
  const std::vector<std::string> texts{"x"};
  EXPECT_EQ(be.embed_text_batch(texts).size(), 1u);
  EXPECT_EQ(text_calls.load(), 3);
}

TEST_F(FakeEmbedService, PersistentServerErrorListsFailedIndices) {
  ita::RemoteBackend be(options());
  ita::Embedder emb(be, nullptr, {2, 1});
  fail_texts = 3;  // exactly the first batch's three attempts
  const std::vector<std::string> texts{"p", "q", "r", "p"};
  try {
    emb.embed_texts(texts);
    ADD_FAILURE();
  } catch (const ita::TransportError& e) {
    EXPECT_EQ(e.failed_indices(), (std::vector<std::size_t>{0, 1, 3}));
  }
}

TEST_F(FakeEmbedService, DimensionMismatchIsProtocolError) {
  ita::RemoteBackend be(options());
  const std::vector<std::string> texts{"x"};
  wrong_dim = true;
  try {
    be.embed_text_batch(texts);
    ADD_FAILURE();
  } catch (const ita::Error& e) {
    EXPECT_EQ(e.kind(), ita::ErrorKind::kProtocol);
  }
  wrong_dim = false;
  wrong_length = true;
  try {
    be.embed_text_batch(texts);
    ADD_FAILURE();
  } catch (const ita::Error& e) {
    EXPECT_EQ(e.kind(), ita::ErrorKind::kProtocol);
  }
}

TEST_F(FakeEmbedService, ClientErrorsAreNotRetried) {
  ita::RemoteBackend be(options());
  std::vector<std::string> texts(257, "x");
  EXPECT_THROW(be.embed_text_batch(texts), ita::Error);
  EXPECT_EQ(text_calls.load(), 0);
}

TEST_F(FakeEmbedService, LoadingServiceIsRetriable) {
  loading = true;
  try {
    ita::RemoteBackend be(options());
    ADD_FAILURE();
  } catch (const ita::Error& e) {
    EXPECT_TRUE(e.retriable());
  }
}

TEST(RemoteBackend, UnreachableAndBadConfig) {
  ita::RemoteOptions o;
  o.base_url = "http://127.0.0.1:" + std::to_string(ita::testing::unused_port());
  o.timeout_seconds = 2;
  EXPECT_THROW(ita::RemoteBackend{o}, ita::TransportError);
  o.max_in_flight = 0;
  EXPECT_THROW(ita::RemoteBackend{o}, ita::Error);
  EXPECT_THROW(ita::RemoteBackend{ita::RemoteOptions{}}, ita::Error);
}

}  // namespace
