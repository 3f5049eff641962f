#include <algorithm>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ita/datasets.hpp"
#include "ita/image_io.hpp"
#include "test_support.hpp"

namespace {

std::string line(const std::string& id, const std::string& skip = "") {
  nlohmann::json j{{"id", id},
                   {"image", id + "_a.png"},
                   {"caption", "a black cat and a white dog"},
                   {"negative_image", id + "_b.png"},
                   {"negative_caption", "a white cat and a black dog"}};
  if (!skip.empty()) j.erase(skip);
  return j.dump();
}

ita::Manifest parse(const std::string& text) {
  std::istringstream in(text);
  return ita::parse_manifest(in, "/data", "test");
}

ita::ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ita::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error";
  return ita::ErrorKind::kIo;
}

TEST(Manifest, ThreeLines) {
  const auto m = parse(line("a") + "\n" + line("b") + "\n\n" + line("c") + "\n");
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.instances[1].id, "b");
  EXPECT_EQ(m.instances[2].negative_image.ref, "c_b.png");
  EXPECT_EQ(m.name, "test");
  EXPECT_EQ(m.base_dir, "/data");
}

TEST(Manifest, MissingKeyNamesIdAndKey) {
  try {
    parse(line("a") + "\n" + line("b", "negative_caption") + "\n");
    ADD_FAILURE();
  } catch (const ita::Error& e) {
    EXPECT_EQ(e.kind(), ita::ErrorKind::kSchema);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("instance b"), std::string::npos) << msg;
    EXPECT_NE(msg.find("negative_caption"), std::string::npos) << msg;
  }
}

TEST(Manifest, SchemaErrors) {
  EXPECT_EQ(kind_of([] { parse(line("a") + "\n" + line("a")); }), ita::ErrorKind::kSchema);
  EXPECT_EQ(kind_of([] { parse("{not json\n"); }), ita::ErrorKind::kSchema);
  EXPECT_EQ(kind_of([] { parse("[1,2]\n"); }), ita::ErrorKind::kSchema);
  EXPECT_EQ(kind_of([] { parse(line("a") + "\n{\"manifest\":{\"name\":\"late\"}}\n"); }), ita::ErrorKind::kSchema);
  EXPECT_EQ(kind_of([] { ita::load_manifest("/nonexistent/x.jsonl"); }), ita::ErrorKind::kIo);
}

TEST(Manifest, HeaderSetsNameAndNotes) {
  const auto m = parse("{\"manifest\":{\"name\":\"bivlc-dev\",\"notes\":\"converted\"}}\n" + line("a"));
  EXPECT_EQ(m.name, "bivlc-dev");
  EXPECT_EQ(m.notes, "converted");
}

ita::SceneGraph small_graph(std::mt19937_64& rng) {
  ita::SceneGraph g;
  const int n = 1 + static_cast<int>(rng() % 3);
  for (int i = 0; i < n; ++i) {
    ita::SceneObject o{"o" + std::to_string(i), rng() & 1 ? "cube" : "sphere", {}};
    if (rng() & 1) o.attributes.push_back("red");
    if (rng() & 1) o.attributes.push_back("metal");
    g.objects.push_back(o);
  }
  if (n > 1) g.relations.push_back({"o0", "left of", "o1"});
  if (rng() & 1) g.group_counts.push_back({"three", "cylinder"});
  return g;
}

TEST(Manifest, RoundTripProperty) {
  auto rng = ita::testing::rng_for("manifest-roundtrip");
  ita::testing::TempDir dir("manifest");
  for (int iter = 0; iter < 50; ++iter) {
    ita::Manifest m;
    m.name = "suite" + std::to_string(iter);
    m.notes = iter % 2 ? "notes with \"quotes\"\tand tabs" : "";
    for (std::size_t i = 0; i < 1 + rng() % 6; ++i) {
      ita::BidirInstance inst;
      inst.id = "id-" + std::to_string(i);
      inst.image = {"img/" + std::to_string(i) + ".png"};
      inst.negative_image = {"base64:AAAA"};
      inst.caption = "caption ünïcode " + std::to_string(rng());
      inst.negative_caption = "neg " + std::to_string(rng());
      if (rng() & 1) {
        inst.positive_graph = small_graph(rng);
        inst.negative_graph = small_graph(rng);
      }
      m.instances.push_back(inst);
    }
    const auto path = dir / (m.name + ".jsonl");
    ita::save_manifest(path, m);
    const auto back = ita::load_manifest(path);
    ASSERT_EQ(back.name, m.name);
    ASSERT_EQ(back.notes, m.notes);
    ASSERT_EQ(back.instances, m.instances);
    ASSERT_EQ(back.base_dir, dir.path());
  }
}

TEST(ImageRef, LazyDecode) {
  ita::testing::TempDir dir("imageref");
  {
    std::ofstream(dir / "bad.png") << "not an image";
  }
  ita::PixelBuffer img(5, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) img.set(x, y, x * 40, y * 80, 7);
  ita::save_png(dir / "good.png", img);

  // Loading the manifest never touches images.
  std::ofstream(dir / "m.jsonl") << nlohmann::json{{"id", "x"}, {"image", "good.png"}, {"caption", "c"},
                                                   {"negative_image", "bad.png"}, {"negative_caption", "d"}}
                                        .dump()
                                 << '\n';
  const auto m = ita::load_manifest(dir / "m.jsonl");
  EXPECT_EQ(m.instances[0].image.load(m.base_dir), img);
  EXPECT_EQ(kind_of([&] { m.instances[0].negative_image.load(m.base_dir); }), ita::ErrorKind::kDecode);

  const ita::ImageRef embedded{"base64:" + ita::base64_encode(ita::encode_png(img))};
  EXPECT_TRUE(embedded.embedded());
  EXPECT_EQ(embedded.load("/irrelevant"), img);
  EXPECT_EQ(kind_of([] { ita::ImageRef{"base64:@@@@"}.load("."); }), ita::ErrorKind::kDecode);
  EXPECT_EQ(kind_of([] { ita::ImageRef{"base64:AAAA"}.load("."); }), ita::ErrorKind::kDecode);
}

TEST(ImageIo, Base64RoundTrip) {
  auto rng = ita::testing::rng_for("base64");
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<std::uint8_t> bytes(rng() % 40);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    ASSERT_EQ(ita::base64_decode(ita::base64_encode(bytes)), bytes);
  }
  EXPECT_EQ(ita::base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o', 'b'}), "Zm9vYg==");
  EXPECT_THROW(ita::base64_decode("abc"), ita::Error);
}

TEST(ImageIo, PngPreservesLowBits) {
  ita::PixelBuffer img(16, 16);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i * 37);
  EXPECT_EQ(ita::decode_png(ita::encode_png(img)), img);
  EXPECT_EQ(kind_of([] { ita::decode_image(std::vector<std::uint8_t>{1, 2, 3, 4}); }), ita::ErrorKind::kDecode);
}

TEST(SwapPair, Examples) {
  EXPECT_TRUE(ita::is_swap_pair("a black cat and a white dog", "a white cat and a black dog"));
  EXPECT_FALSE(ita::is_swap_pair("a black cat", "a black dog"));
  EXPECT_FALSE(ita::is_swap_pair("A black cat.", "a black cat"));
  EXPECT_TRUE(ita::is_swap_pair("The Cat, on a mat!", "a mat on the cat"));
  EXPECT_FALSE(ita::is_swap_pair("", ""));
}

TEST(SwapPair, SymmetryProperty) {
  const std::vector<std::string> words = {"a", "red", "blue", "cube", "and", "sphere", "The", "cat,"};
  auto rng = ita::testing::rng_for("swap-symmetry");
  for (int iter = 0; iter < 10000; ++iter) {
    auto sentence = [&] {
      std::string s;
      for (std::size_t k = 0; k < 1 + rng() % 5; ++k) s += words[rng() % words.size()] + " ";
      return s;
    };
    const std::string a = sentence();
    std::string b = sentence();
    if (rng() % 3 == 0) {
      auto w = ita::text::normalized_words(a);
      std::shuffle(w.begin(), w.end(), rng);
      b = ita::text::join(w, " ");
    }
    ASSERT_EQ(ita::is_swap_pair(a, b), ita::is_swap_pair(b, a));
  }
}

TEST(SegmentSidecar, Loads) {
  ita::testing::TempDir dir("sidecar");
  std::ofstream(dir / "s.jsonl") << R"({"id":"x","granularity":"coarse","positive_segments":["red cube"],"negative_segments":["blue cube"]})"
                                 << "\n";
  const auto s = ita::load_segment_sidecar(dir / "s.jsonl");
  const auto& e = s.entries.at({"x", ita::Granularity::kCoarse});
  EXPECT_EQ(e.first, std::vector<std::string>{"red cube"});
  EXPECT_EQ(e.second, std::vector<std::string>{"blue cube"});
  std::ofstream(dir / "bad.jsonl") << R"({"id":"x","granularity":"coarse"})" << "\n";
  EXPECT_EQ(kind_of([&] { ita::load_segment_sidecar(dir / "bad.jsonl"); }), ita::ErrorKind::kSchema);
}

}  // namespace
