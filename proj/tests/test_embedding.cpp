#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "ita/embedder.hpp"
#include "ita/embedding.hpp"
#include "ita/geometry.hpp"
#include "ita/synthctrl.hpp"
#include "ita/synthetic_backend.hpp"
#include "test_support.hpp"

namespace {

using ita::EmbeddingVector;
using ita::world::Material;
using ita::world::Noun;
using ita::world::SizeClass;

EmbeddingVector vec(std::vector<float> v) { return {std::move(v), false}; }

std::set<std::size_t> nonzero(const EmbeddingVector& v) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < v.values.size(); ++i)
    if (v.values[i] != 0.0f) out.insert(i);
  return out;
}

ita::synth::PlacedObject object(Noun noun, int color, SizeClass size, int cx, int cy,
                                Material material = Material::kNone, bool size_captioned = false) {
  ita::synth::PlacedObject o;
  o.code.noun = noun;
  o.code.color = color;
  o.code.size = size;
  o.code.material = material;
  o.code.size_captioned = size_captioned;
  o.cx = cx;
  o.cy = cy;
  return o;
}

constexpr int kRed = 2, kBlue = 3;

TEST(Cosine, Basics) {
  const auto v = vec({1, 2, 3});
  EXPECT_DOUBLE_EQ(ita::cosine(v, v), 1.0);
  EXPECT_DOUBLE_EQ(ita::cosine(v, vec({-1, -2, -3})), -1.0);
  EXPECT_DOUBLE_EQ(ita::cosine(vec({1, 0}), vec({0, 1})), 0.0);
  try {
    ita::cosine(vec({0, 0}), vec({1, 0}));
    ADD_FAILURE();
  } catch (const ita::Error& e) {
    EXPECT_EQ(e.kind(), ita::ErrorKind::kUndefinedSimilarity);
  }
  try {
    ita::cosine(vec({1}), vec({1, 0}));
    ADD_FAILURE();
  } catch (const ita::Error& e) {
    EXPECT_EQ(e.kind(), ita::ErrorKind::kDimensionMismatch);
  }
}

TEST(Cosine, SymmetricAndBoundedProperty) {
  auto rng = ita::testing::rng_for("cosine");
  std::normal_distribution<float> d(0.0f, 1.0f);
  for (int iter = 0; iter < 10000; ++iter) {
    const std::size_t n = 1 + rng() % 16;
    EmbeddingVector a, b;
    for (std::size_t i = 0; i < n; ++i) {
      a.values.push_back(d(rng));
      b.values.push_back(rng() % 4 == 0 ? a.values.back() * 3.0f : d(rng));
    }
    const double ab = ita::cosine(a, b), ba = ita::cosine(b, a);
    ASSERT_EQ(ab, ba);
    ASSERT_LE(std::abs(ab), 1.0 + 1e-9);
    const auto u = a.unit();
    ASSERT_NEAR(u.norm(), 1.0, 1e-6);
  }
}

TEST(SyntheticBackend, TextDimensions) {
  ita::SyntheticBackend bag(ita::BackendKind::kSyntheticBag);
  ita::SyntheticBackend bound(ita::BackendKind::kSyntheticBound);
  const std::string red_cube = "red cube";
  const auto bv = bag.embed_text_batch(std::span(&red_cube, 1));
  EXPECT_EQ(nonzero(bv[0]), (std::set<std::size_t>{ita::SyntheticBackend::bag_dim("red"),
                                                    ita::SyntheticBackend::bag_dim("cube")}));
  const auto dv = bound.embed_text_batch(std::span(&red_cube, 1));
  ita::ItemKey key;
  key.color = kRed;
  key.noun = static_cast<int>(Noun::kCube);
  EXPECT_EQ(nonzero(dv[0]), (std::set<std::size_t>{ita::SyntheticBackend::bound_dim(key, 1)}));
  EXPECT_EQ(bound.descriptor().dim, ita::SyntheticBackend::kBoundDim);
  EXPECT_EQ(bag.descriptor().dim, ita::SyntheticBackend::kBagDim);
  EXPECT_NE(bag.descriptor().backend_id, bound.descriptor().backend_id);
  const std::string empty;
  EXPECT_THROW(bag.embed_text_batch(std::span(&empty, 1)), ita::Error);
}

TEST(SyntheticBackend, TextInventoryParsing) {
  const auto inv = ita::text_inventory("three spheres and a small red metal cube");
  ita::ItemKey sphere;
  sphere.noun = static_cast<int>(Noun::kSphere);
  ita::ItemKey cube{kRed, 1, static_cast<int>(Material::kMetal), static_cast<int>(Noun::kCube)};
  EXPECT_EQ(inv.size(), 2u);
  EXPECT_EQ(inv.at(sphere), 3);
  EXPECT_EQ(inv.at(cube), 1);
  EXPECT_TRUE(ita::text_inventory("nothing here").empty());
}

TEST(SyntheticBackend, CropWithOneRedCubeMatchesSegment) {
  ita::synth::SceneSpec scene;
  scene.objects = {object(Noun::kCube, kRed, SizeClass::kSmall, 40, 40),
                   object(Noun::kSphere, kBlue, SizeClass::kSmall, 160, 160)};
  const auto img = ita::synth::rasterize(scene);
  ita::SyntheticBackend bound(ita::BackendKind::kSyntheticBound);
  const auto crop = ita::extract_crop(img, {0, 0, 112, 112});
  const auto iv = bound.embed_image_batch(std::span(&crop, 1));
  const std::string seg = "red cube", wrong = "blue cube";
  EXPECT_DOUBLE_EQ(ita::cosine(iv[0], bound.embed_text_batch(std::span(&seg, 1))[0]), 1.0);
  EXPECT_DOUBLE_EQ(ita::cosine(iv[0], bound.embed_text_batch(std::span(&wrong, 1))[0]), 0.0);
}

TEST(SyntheticBackend, BagCannotTellSwappedColors) {
  ita::synth::SceneSpec scene;
  scene.objects = {object(Noun::kCube, kRed, SizeClass::kSmall, 40, 40),
                   object(Noun::kSphere, kBlue, SizeClass::kSmall, 160, 160)};
  const auto pos = ita::synth::rasterize(scene);
  const auto neg = ita::synth::rasterize(ita::synth::apply_swap(ita::synth::Variant::kColor, scene));
  ita::SyntheticBackend bag(ita::BackendKind::kSyntheticBag);
  ita::SyntheticBackend bound(ita::BackendKind::kSyntheticBound);
  const std::vector<ita::PixelBuffer> both{pos, neg};
  const auto a = bag.embed_image_batch(both);
  EXPECT_EQ(a[0], a[1]);
  const auto b = bound.embed_image_batch(both);
  EXPECT_NE(b[0], b[1]);
}

TEST(SyntheticBackend, VisibilityThreshold) {
  ita::synth::SceneSpec scene;
  scene.objects = {object(Noun::kCube, kRed, SizeClass::kSmall, 50, 50)};  // pixels 32..67
  const auto img = ita::synth::rasterize(scene);
  ita::SyntheticParams p;
  // 24 of 36 columns visible: present.
  EXPECT_EQ(ita::image_inventory(ita::extract_crop(img, {0, 0, 56, 112}), p).size(), 1u);
  // 18 of 36 columns: exactly half, not above the threshold.
  EXPECT_TRUE(ita::image_inventory(ita::extract_crop(img, {0, 0, 50, 112}), p).empty());
}

TEST(SyntheticBackend, ApparentSize) {
  ita::synth::SceneSpec scene;
  scene.objects = {object(Noun::kCube, kRed, SizeClass::kSmall, 50, 50, Material::kNone, true)};
  const auto img = ita::synth::rasterize(scene);
  ita::SyntheticParams p;
  // The cube is 36 px wide: small in the full frame, large in a 48 px crop.
  auto size_of = [&](const ita::CropBox& b) { return ita::image_inventory(ita::extract_crop(img, b), p).begin()->first.size; };
  EXPECT_EQ(size_of({0, 0, 224, 224}), 1);
  EXPECT_EQ(size_of({28, 28, 48, 48}), 2);
}

TEST(SyntheticBackend, QuantityCounts) {
  ita::synth::SceneSpec scene;
  for (int i = 0; i < 3; ++i) scene.objects.push_back(object(Noun::kSphere, 0, SizeClass::kSmall, 30 + 50 * i, 30));
  const auto img = ita::synth::rasterize(scene);
  const auto inv = ita::image_inventory(img, {});
  ASSERT_EQ(inv.size(), 1u);
  EXPECT_EQ(inv.begin()->second, 3);
  ita::SyntheticBackend bound(ita::BackendKind::kSyntheticBound);
  const std::string three = "three spheres", two = "two spheres";
  const auto iv = bound.embed_image_batch(std::span(&img, 1));
  EXPECT_DOUBLE_EQ(ita::cosine(iv[0], bound.embed_text_batch(std::span(&three, 1))[0]), 1.0);
  EXPECT_LT(ita::cosine(iv[0], bound.embed_text_batch(std::span(&two, 1))[0]), 1.0);
  // A crop holding two of them matches "two spheres".
  const auto crop = ita::extract_crop(img, {0, 0, 112, 112});
  const auto cv = bound.embed_image_batch(std::span(&crop, 1));
  EXPECT_DOUBLE_EQ(ita::cosine(cv[0], bound.embed_text_batch(std::span(&two, 1))[0]), 1.0);
}

TEST(SyntheticBackend, EmptyInputsAreNonZero) {
  ita::SyntheticBackend bag(ita::BackendKind::kSyntheticBag);
  const ita::PixelBuffer blank = ita::synth::rasterize({});
  const auto v = bag.embed_image_batch(std::span(&blank, 1));
  EXPECT_NEAR(v[0].norm(), 1.0, 1e-6);
}

// Records every dispatch; optionally fails batches holding a marker text.
class FakeBackend : public ita::EmbeddingBackend {
 public:
  explicit FakeBackend(std::size_t dim = 4, int input_side = 0) {
    desc_.backend_id = "fake@1";
    desc_.kind = ita::BackendKind::kRemoteHttp;
    desc_.dim = dim;
    desc_.input_side = input_side;
  }
  const ita::BackendDescriptor& descriptor() const override { return desc_; }

  std::vector<EmbeddingVector> embed_image_batch(std::span<const ita::PixelBuffer> images) override {
    ++calls;
    items += images.size();
    std::vector<EmbeddingVector> out;
    for (const auto& img : images) {
      last_image_width = img.width;
      out.push_back(make(img.content_hash()));
    }
    return out;
  }

  std::vector<EmbeddingVector> embed_text_batch(std::span<const std::string> texts) override {
    ++calls;
    items += texts.size();
    std::vector<EmbeddingVector> out;
    for (const auto& t : texts) {
      if (t == "fail") throw ita::TransportError("connection refused", {});
      out.push_back(make(t));
    }
    if (short_reply) out.pop_back();
    return out;
  }

  std::size_t max_batch() const override { return 16; }

  EmbeddingVector make(const std::string& s) const {
    EmbeddingVector v;
    const auto h = ita::sha256_hex(s);
    for (std::size_t i = 0; i < out_dim; ++i) v.values.push_back(static_cast<float>(h[i % h.size()]) - 60.0f);
    return v;
  }

  ita::BackendDescriptor desc_;
  std::atomic<int> calls{0};
  std::atomic<std::size_t> items{0};
  std::atomic<int> last_image_width{0};
  std::size_t out_dim = 4;
  bool short_reply = false;
};

TEST(Embedder, DedupAndOrder) {
  FakeBackend be;
  ita::EmbeddingCache cache;
  ita::Embedder emb(be, &cache);
  const std::vector<std::string> texts{"a", "b", "a", "c", "b"};
  const auto v = emb.embed_texts(texts);
  ASSERT_EQ(v.size(), 5u);
  EXPECT_EQ(be.items.load(), 3u);
  EXPECT_EQ(v[0], v[2]);
  EXPECT_EQ(v[1], v[4]);
  EXPECT_EQ(v[3], be.make("c"));
  // Second call served from cache.
  const auto again = emb.embed_texts(texts);
  EXPECT_EQ(again, v);
  EXPECT_EQ(be.items.load(), 3u);
  EXPECT_GE(cache.hits(), 3u);
}

TEST(Embedder, BatchesOf270KeepOrder) {
  FakeBackend be;
  ita::Embedder emb(be, nullptr, {64, 4});
  std::vector<std::string> texts;
  for (int i = 0; i < 270; ++i) texts.push_back("t" + std::to_string(i));
  const auto v = emb.embed_texts(texts);
  ASSERT_EQ(v.size(), 270u);
  for (int i = 0; i < 270; ++i) ASSERT_EQ(v[i], be.make(texts[i]));
  // max_batch 16 caps the configured 64.
  EXPECT_EQ(be.calls.load(), 17);
}

TEST(Embedder, ImagesResizedToInputSide) {
  FakeBackend be(4, 32);
  ita::Embedder emb(be);
  const std::vector<ita::PixelBuffer> crops{ita::PixelBuffer(56, 112, 9), ita::PixelBuffer(224, 224, 9)};
  const auto v = emb.embed_images(crops);
  EXPECT_EQ(be.last_image_width.load(), 32);
  // Both resize to the same flat 32x32 image.
  EXPECT_EQ(v[0], v[1]);
  EXPECT_EQ(be.items.load(), 1u);
}

TEST(Embedder, TransportErrorListsFailedPositions) {
  FakeBackend be;
  ita::Embedder emb(be, nullptr, {2, 1});
  // Batches of two unique payloads: {ok0, fail}, {ok1, ok2}.
  const std::vector<std::string> texts{"ok0", "fail", "ok1", "fail", "ok2"};
  try {
    emb.embed_texts(texts);
    ADD_FAILURE() << "expected transport error";
  } catch (const ita::TransportError& e) {
    EXPECT_EQ(e.failed_indices(), (std::vector<std::size_t>{0, 1, 3}));
    EXPECT_TRUE(e.retriable());
  }
}

TEST(Embedder, ProtocolErrors) {
  FakeBackend be(4);
  be.out_dim = 5;
  ita::Embedder emb(be);
  const std::vector<std::string> texts{"x"};
  try {
    emb.embed_texts(texts);
    ADD_FAILURE();
  } catch (const ita::Error& e) {
    EXPECT_EQ(e.kind(), ita::ErrorKind::kProtocol);
  }
  FakeBackend shorty;
  shorty.short_reply = true;
  ita::Embedder emb2(shorty);
  try {
    emb2.embed_texts(texts);
    ADD_FAILURE();
  } catch (const ita::Error& e) {
    EXPECT_EQ(e.kind(), ita::ErrorKind::kProtocol);
  }
}

TEST(Embedder, EmptyInputs) {
  FakeBackend be;
  ita::Embedder emb(be);
  EXPECT_THROW(emb.embed_texts(std::vector<std::string>{}), ita::Error);
  EXPECT_THROW(emb.embed_texts(std::vector<std::string>{"ok", " "}), ita::Error);
  EXPECT_THROW(emb.embed_images(std::vector<ita::PixelBuffer>{}), ita::Error);
  EXPECT_THROW(ita::Embedder(be, nullptr, {0, 1}), ita::Error);
}

TEST(EmbeddingCache, DiskRoundTripIsBitIdentical) {
  ita::testing::TempDir dir("cache");
  FakeBackend be;
  std::vector<std::string> texts{"alpha", "beta"};
  std::vector<EmbeddingVector> fresh;
  {
    ita::EmbeddingCache cache(dir.path());
    ita::Embedder emb(be, &cache);
    fresh = emb.embed_texts(texts);
  }
  ASSERT_TRUE(std::filesystem::exists(dir / "index.jsonl"));
  ita::EmbeddingCache reopened(dir.path());
  ita::Embedder emb(be, &reopened);
  const int before = be.calls.load();
  const auto cached = emb.embed_texts(texts);
  EXPECT_EQ(be.calls.load(), before);
  ASSERT_EQ(cached.size(), fresh.size());
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    ASSERT_EQ(std::memcmp(cached[i].values.data(), fresh[i].values.data(), fresh[i].dim() * sizeof(float)), 0);
  }
  // Keys are scoped by backend id.
  EXPECT_FALSE(reopened.get({"other@1", "text:" + ita::sha256_hex("alpha")}).has_value());
}

TEST(EmbeddingCache, CorruptFileIsAnIoError) {
  ita::testing::TempDir dir("cache_corrupt");
  const ita::CacheKey key{"b", "p"};
  {
    std::ofstream(dir / (key.digest() + ".vec")) << "garbage";
  }
  ita::EmbeddingCache cache(dir.path());
  EXPECT_THROW(cache.get(key), ita::Error);
}

}  // namespace
