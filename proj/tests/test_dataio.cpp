#include <gtest/gtest.h>

#include <fstream>

#include "synthmix/dataio.hpp"
#include "test_env.hpp"

using namespace synthmix;
namespace fs = std::filesystem;

namespace {

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(ToyDataset, GenerationIsByteDeterministic) {
  testenv::TempDir a("da"), b("db");
  const auto spec = testenv::small_spec();
  const auto ma = generate_toy_dataset(spec, a.path());
  generate_toy_dataset(spec, b.path());
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  for (const auto& r : ma.samples) {
    ASSERT_EQ(slurp(a / r.image_path), slurp(b / r.image_path)) << r.id;
    ASSERT_EQ(slurp(a / r.label_path), slurp(b / r.label_path)) << r.id;
  }
  auto other = spec;
  other.seed = 1;
  testenv::TempDir c("dc");
  const auto mc = generate_toy_dataset(other, c.path());
  EXPECT_NE(slurp(a / ma.samples[0].image_path), slurp(c / mc.samples[0].image_path));
}

TEST(ToyDataset, LayoutCountsAndRanges) {
  testenv::TempDir d("layout");
  const auto spec = testenv::small_spec(32, 5, 3);
  generate_toy_dataset(spec, d.path());
  const auto m = load_manifest(d.path());
  EXPECT_EQ(m.samples.size(), 2u * (5 + 3));
  for (Domain dom : {Domain::Source, Domain::Target}) {
    EXPECT_EQ(m.select(dom, Split::Train).size(), 5u);
    EXPECT_EQ(m.select(dom, Split::Test).size(), 3u);
  }
  bool seen_classes[3] = {false, false, false};
  for (const auto& r : m.samples) {
    const Sample s = load_sample(m, r.id);
    ASSERT_EQ(s.image.shape(), (Shape{1, 1, 32, 32}));
    for (float v : s.image.vec()) {
      ASSERT_GE(v, -1.0f);
      ASSERT_LE(v, 1.0f);
    }
    if (s.seg_label)
      for (auto v : s.seg_label->vec()) seen_classes[v] = true;
  }
  EXPECT_TRUE(seen_classes[0] && seen_classes[1] && seen_classes[2]);
}

TEST(ToyDataset, TargetTrainingSamplesCarryNoLabels) {
  testenv::TempDir d("unsup");
  generate_toy_dataset(testenv::small_spec(), d.path());
  const auto m = load_manifest(d.path());
  for (const auto& s : load_split(m, Domain::Target, Split::Train)) {
    EXPECT_FALSE(s.seg_label.has_value());
    EXPECT_FALSE(s.supervised);
    EXPECT_THROW((void)s.supervision(), ProtocolError);
  }
  for (const auto& s : load_split(m, Domain::Source, Split::Train)) {
    EXPECT_TRUE(s.supervised);
    EXPECT_NO_THROW((void)s.supervision());
  }
  // Test labels are readable for evaluation but never flagged for training.
  for (const auto& s : load_split(m, Domain::Target, Split::Test)) {
    EXPECT_TRUE(s.seg_label.has_value());
    EXPECT_FALSE(s.supervised);
  }
}

TEST(ToyDataset, TestSplitSharesAnatomyAcrossDomains) {
  testenv::TempDir d("paired");
  generate_toy_dataset(testenv::small_spec(), d.path());
  const auto m = load_manifest(d.path());
  const auto src = load_split(m, Domain::Source, Split::Test);
  const auto tgt = load_split(m, Domain::Target, Split::Test);
  ASSERT_EQ(src.size(), tgt.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    EXPECT_EQ(*src[i].seg_label, *tgt[i].seg_label);
    EXPECT_NE(src[i].image, tgt[i].image);
  }
}

TEST(ToyDataset, TwoClassVariant) {
  testenv::TempDir d("c2");
  auto spec = testenv::small_spec();
  spec.num_classes = 2;
  generate_toy_dataset(spec, d.path());
  const auto m = load_manifest(d.path());
  for (const auto& s : load_split(m, Domain::Source, Split::Train))
    for (auto v : s.seg_label->vec()) ASSERT_LT(v, 2);
}

TEST(ToyDataset, CorruptedBlobIsDetected) {
  testenv::TempDir d("crc");
  generate_toy_dataset(testenv::small_spec(), d.path());
  const auto m = load_manifest(d.path());
  const auto& r = m.samples.front();
  {
    std::fstream f(d / r.image_path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(17);
    f.put('\x7f');
  }
  EXPECT_THROW(load_sample(m, r.id), CorruptionError);
  {
    std::fstream f(d / r.label_path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(3);
    f.put('\x01');
  }
  fs::resize_file(d / m.samples[1].image_path, 10);
  EXPECT_THROW(load_sample(m, m.samples[1].id), DataError);
}

TEST(ToyDataset, MissingOrMalformedManifestIsDataError) {
  testenv::TempDir d("nomani");
  EXPECT_THROW(load_manifest(d.path()), DataError);
  std::ofstream(d / "manifest.json") << "{not json";
  EXPECT_THROW(load_manifest(d.path()), DataError);
  std::ofstream(d / "manifest.json") << R"({"version": 99, "spec": {}, "samples": []})";
  EXPECT_THROW(load_manifest(d.path()), DataError);
  testenv::TempDir e("manifest");
  const auto m = generate_toy_dataset(testenv::small_spec(), e.path());
  EXPECT_THROW((void)m.find("nope"), DataError);
  fs::remove(e / m.samples[0].image_path);
  EXPECT_THROW(load_sample(m, m.samples[0].id), DataError);
}

TEST(ToyDatasetSpec, StrictJsonParsing) {
  const auto spec = testenv::small_spec();
  const auto back = toy_spec_from_json(to_json(spec));
  EXPECT_EQ(to_json(back), to_json(spec));
  EXPECT_THROW(toy_spec_from_json({{"n_train", 3}, {"bogus", 1}}), ConfigError);
  EXPECT_THROW(toy_spec_from_json({{"source", {{"gama", 1.0}}}}), ConfigError);
  EXPECT_THROW(toy_spec_from_json({{"n_train", "many"}}), ConfigError);
  EXPECT_THROW(toy_spec_from_json({{"num_classes", 5}}), ConfigError);
  EXPECT_THROW(toy_spec_from_json({{"image_side", 8}}), ConfigError);
  EXPECT_EQ(toy_spec_from_json(nlohmann::json::object()).image_side, 128);
}
